use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::engine::{check_constraint, AgentId, ControlOp, ControlState, Layer, RegulatedEvent};
use crate::lang::ast::OpTemplate;
use crate::lang::{hash_law, parse_law, Diagnostic, DiagnosticCode, EventKind, LawAst, LawHash, LawSource};

#[derive(Debug, Clone)]
pub struct LawNode {
    pub name: String,
    pub ast: LawAst,
    pub parent: Option<String>,
    pub children: Vec<String>,
    pub hash: LawHash,
    /// Hashes of all superiors, root first.
    pub lineage: Vec<LawHash>,
}

impl LawNode {
    /// Lineage followed by the node's own hash; what a controller operating
    /// under this law attaches to the messages it forwards.
    pub fn chain(&self) -> HashChain {
        let mut hashes = self.lineage.clone();
        hashes.push(self.hash);
        HashChain(hashes)
    }
}

/// Root-first list of law hashes ending with the sender's own law.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HashChain(pub Vec<LawHash>);

impl HashChain {
    pub fn root(&self) -> Option<&LawHash> {
        self.0.first()
    }

    pub fn leaf(&self) -> Option<&LawHash> {
        self.0.last()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// An immutable conformance hierarchy of laws.
#[derive(Debug, Clone)]
pub struct LawTree {
    root: String,
    nodes: BTreeMap<String, LawNode>,
    /// Static conformance findings that do not prevent construction; the
    /// offending operations are filtered at resolution time.
    pub warnings: Vec<Diagnostic>,
}

impl LawTree {
    pub fn root(&self) -> &LawNode {
        &self.nodes[&self.root]
    }

    pub fn node(&self, name: &str) -> Option<&LawNode> {
        self.nodes.get(name)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &LawNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Laws from the root down to `leaf`, inclusive.
    pub fn path(&self, leaf: &str) -> Option<Vec<&LawNode>> {
        let mut path = vec![self.nodes.get(leaf)?];
        while let Some(parent) = &path.last().unwrap().parent {
            path.push(&self.nodes[parent]);
        }
        path.reverse();
        Some(path)
    }

    /// `sub ≺ sup`: `sub` is a proper, transitive subordinate of `sup`.
    pub fn is_subordinate(&self, sub: &str, sup: &str) -> bool {
        match self.path(sub) {
            Some(p) => p[..p.len() - 1].iter().any(|n| n.name == sup),
            None => false,
        }
    }

    pub fn by_chain(&self, chain: &HashChain) -> Option<&LawNode> {
        let leaf = chain.leaf()?;
        self.nodes.values().find(|n| &n.hash == leaf && n.chain() == *chain)
    }
}

/// Builds a conformance hierarchy from law sources.
///
/// Checks: every law parses and validates, names are unique, there is
/// exactly one root, every parent exists, there are no cycles, and every
/// subordinate only handles event kinds its parent delegates.
pub fn build_ensemble(sources: &[LawSource]) -> Result<LawTree, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut asts = BTreeMap::new();
    let mut parents: BTreeMap<String, Option<String>> = BTreeMap::new();

    for src in sources {
        if parents.contains_key(&src.name) {
            diags.push(Diagnostic::new(DiagnosticCode::DuplicateLaw, format!("law `{}` defined twice", src.name)));
            continue;
        }
        parents.insert(src.name.clone(), src.parent.clone());
        match parse_law(src) {
            Ok(ast) => {
                asts.insert(src.name.clone(), ast);
            }
            Err(d) => diags.extend(d),
        }
    }

    for (name, parent) in &parents {
        if let Some(p) = parent {
            if !parents.contains_key(p) {
                diags.push(Diagnostic::new(DiagnosticCode::OrphanLaw, format!("parent law `{p}` does not exist")).for_law(name));
            }
        }
    }

    let roots: Vec<_> = parents.iter().filter(|(_, p)| p.is_none()).map(|(n, _)| n.clone()).collect();
    if roots.len() != 1 && !parents.is_empty() {
        diags.push(Diagnostic::new(
            DiagnosticCode::Manifest,
            format!("ensemble must have exactly one root law, found {}: {roots:?}", roots.len()),
        ));
    }
    if parents.is_empty() {
        diags.push(Diagnostic::new(DiagnosticCode::Manifest, "ensemble is empty"));
    }

    for name in parents.keys() {
        let mut seen = BTreeSet::new();
        let mut cur = name.clone();
        while let Some(Some(p)) = parents.get(&cur) {
            if !seen.insert(cur.clone()) || p == name {
                diags.push(Diagnostic::new(DiagnosticCode::Cycle, "law is its own superior").for_law(name));
                break;
            }
            cur = p.clone();
        }
    }

    if !diags.is_empty() {
        return Err(diags);
    }

    for (name, ast) in &asts {
        let Some(Some(parent)) = parents.get(name) else { continue };
        let delegated = &asts[parent].delegations;
        for (ri, rule) in ast.rules.iter().enumerate() {
            if !delegated.contains(&rule.event) {
                diags.push(
                    Diagnostic::in_rule(
                        DiagnosticCode::NonDelegatedEvent,
                        ri,
                        format!("handles {} events, which `{parent}` does not delegate", rule.event),
                    )
                    .for_law(name),
                );
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let root = roots.into_iter().next().expect("one root checked above");
    let mut nodes: BTreeMap<String, LawNode> = asts
        .into_iter()
        .map(|(name, ast)| {
            let hash = hash_law(&ast);
            let parent = parents[&name].clone();
            (name.clone(), LawNode { name, ast, parent, children: Vec::new(), hash, lineage: Vec::new() })
        })
        .collect();

    // children and lineage, visiting parents before children
    let mut order = vec![root.clone()];
    let mut i = 0;
    while i < order.len() {
        let cur = order[i].clone();
        let kids: Vec<String> = nodes.values().filter(|n| n.parent.as_deref() == Some(cur.as_str())).map(|n| n.name.clone()).collect();
        let chain = nodes[&cur].chain();
        for k in &kids {
            nodes.get_mut(k).unwrap().lineage = chain.0.clone();
        }
        nodes.get_mut(&cur).unwrap().children = kids.clone();
        order.extend(kids);
        i += 1;
    }

    let mut tree = LawTree { root, nodes, warnings: Vec::new() };
    tree.warnings = static_constraint_warnings(&tree);
    Ok(tree)
}

/// Flags argument-free operations (forward, delegate, prefixSender,
/// stripSender) that an ancestor constraint rejects regardless of event or
/// state.
fn static_constraint_warnings(tree: &LawTree) -> Vec<Diagnostic> {
    let probe_id = AgentId::new("", "", Layer::B);
    let mut out = Vec::new();
    for node in tree.nodes() {
        let path = tree.path(&node.name).unwrap();
        let ancestors = &path[..path.len() - 1];
        for (ri, rule) in node.ast.rules.iter().enumerate() {
            let probe = RegulatedEvent::adopted(&probe_id, &node.name, 0.0);
            let probe = RegulatedEvent { kind: rule.event, cert: None, ..probe };
            for t in &rule.ops {
                let op = match t {
                    OpTemplate::Forward => ControlOp::Forward,
                    OpTemplate::PrefixSender => ControlOp::PrefixSender,
                    OpTemplate::StripSender => ControlOp::StripSender,
                    _ => continue,
                };
                for anc in ancestors {
                    for (ci, c) in anc.ast.constraints.iter().enumerate() {
                        if refers_only_to_name(c) && check_constraint(c, &op, &probe, &ControlState::new()) == Ok(false) {
                            out.push(
                                Diagnostic::in_rule(
                                    DiagnosticCode::ConstraintConflict,
                                    ri,
                                    format!("`{}` violates constraint {} of `{}` and will be filtered", op.name(), ci + 1, anc.name),
                                )
                                .for_law(&node.name),
                            );
                        }
                    }
                }
            }
        }
    }
    out
}

/// True when the constraint only inspects `op.name` and literals.
fn refers_only_to_name(e: &crate::lang::ast::Expr) -> bool {
    use crate::lang::ast::Expr;
    match e {
        Expr::Lit(_) => true,
        Expr::Field(base, f) => matches!(**base, Expr::OpRef) && f == "name",
        Expr::Unary(_, i) => refers_only_to_name(i),
        Expr::Binary(_, l, r) => refers_only_to_name(l) && refers_only_to_name(r),
        Expr::List(items) => items.iter().all(refers_only_to_name),
        _ => false,
    }
}

/// Event kinds a law hands down (used by tooling output).
pub fn delegated_kinds(node: &LawNode) -> Vec<EventKind> {
    node.ast.delegations.iter().copied().collect()
}
