//! Superior-first resolution of an event through the hierarchy.

use serde::{Deserialize, Serialize};

use super::tree::{LawNode, LawTree};
use crate::engine::{check_constraint, evaluate, ControlOp, EvalError, Overlay, RegulatedEvent, Ruling, StateView};
use crate::lang::canon::expr_text;

/// An operation removed because it violated a superior's constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredOp {
    pub op: ControlOp,
    /// Law whose constraint rejected the operation.
    pub law: String,
    pub constraint: String,
    /// Set when the constraint could not be evaluated (treated as a
    /// violation).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineDiagnostic {
    pub law: String,
    pub rule: Option<usize>,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub ruling: Ruling,
    pub filtered: Vec<FilteredOp>,
    pub diagnostics: Vec<EngineDiagnostic>,
}

/// Resolves `event` for an agent operating under `leaf`.
///
/// The root law rules first. Where a law's ruling contains `delegate` (and
/// the law delegates this event kind), the next law down the path is
/// evaluated against the state as updated by the operations before the
/// delegation point, and its ruling is spliced in place of `delegate`.
/// Every resulting operation must then satisfy every constraint of every
/// proper superior of `leaf`; violating operations are removed and reported.
///
/// Returns an empty resolution when `leaf` is not in the tree.
pub fn resolve(tree: &LawTree, leaf: &str, event: &RegulatedEvent, state: &dyn StateView) -> Resolution {
    let Some(path) = tree.path(leaf) else { return Resolution::default() };
    let mut res = Resolution::default();
    let mut overlay = Overlay::new(state);
    let ops = splice(&path, 0, event, &mut overlay, &mut res.diagnostics);

    let superiors = &path[..path.len() - 1];
    let mut visible = Overlay::new(state);
    let mut kept = Vec::with_capacity(ops.len());
    'ops: for op in ops {
        for sup in superiors {
            for c in &sup.ast.constraints {
                let verdict = check_constraint(c, &op, event, &visible);
                if verdict != Ok(true) {
                    res.filtered.push(FilteredOp {
                        op,
                        law: sup.name.clone(),
                        constraint: expr_text(c),
                        error: verdict.err().map(|e: EvalError| e.to_string()),
                    });
                    continue 'ops;
                }
            }
        }
        if let ControlOp::StateUpdate { name, value } = &op {
            visible.updates.insert(name.clone(), value.clone());
        }
        kept.push(op);
    }
    res.ruling = Ruling { ops: kept };
    res
}

fn splice(
    path: &[&LawNode],
    depth: usize,
    event: &RegulatedEvent,
    state: &mut Overlay<'_>,
    diags: &mut Vec<EngineDiagnostic>,
) -> Vec<ControlOp> {
    let node = path[depth];
    let eval = evaluate(&node.ast, event, state);
    if let Some(e) = eval.error {
        diags.push(EngineDiagnostic { law: node.name.clone(), rule: eval.matched, error: e.to_string() });
        return Vec::new();
    }
    let can_delegate = depth + 1 < path.len() && node.ast.delegations.contains(&event.kind);
    let mut out = Vec::with_capacity(eval.ruling.len());
    for op in eval.ruling.ops {
        match op {
            ControlOp::Delegate => {
                if can_delegate {
                    out.extend(splice(path, depth + 1, event, state, diags));
                }
            }
            ControlOp::StateUpdate { ref name, ref value } => {
                state.updates.insert(name.clone(), value.clone());
                out.push(op);
            }
            other => out.push(other),
        }
    }
    out
}
