//! Static checks: repertoire membership, event-field references, builtin
//! calls, operation placement, and structural locality.

use std::collections::BTreeSet;

use super::ast::*;
use super::diag::{Diagnostic, DiagnosticCode};

/// Builtin functions and their arities.
pub const BUILTINS: [(&str, usize); 21] = [
    ("len", 1),
    ("append", 2),
    ("appendUnique", 2),
    ("remove", 2),
    ("contains", 2),
    ("head", 1),
    ("tail", 1),
    ("at", 2),
    ("get", 1),
    ("lookup", 3),
    ("if", 3),
    ("startsWith", 2),
    ("countAfter", 2),
    ("keepAfter", 2),
    ("sum", 1),
    ("min", 2),
    ("max", 2),
    ("abs", 1),
    ("str", 1),
    ("kindOf", 1),
    ("default", 2),
];

pub fn builtin_arity(name: &str) -> Option<usize> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, a)| *a)
}

/// Validates `ast` against `repertoire`; an empty result means the law is
/// well formed.
pub fn validate_law<S: AsRef<str>>(ast: &LawAst, repertoire: &[S]) -> Vec<Diagnostic> {
    let repertoire: BTreeSet<&str> = repertoire.iter().map(|s| s.as_ref()).collect();
    let mut diags = Vec::new();

    for (ci, c) in ast.constraints.iter().enumerate() {
        let mut sink = Vec::new();
        check_expr(c, &BTreeSet::new(), &mut sink);
        diags.extend(sink.into_iter().map(|m: (DiagnosticCode, String)| Diagnostic::new(m.0, format!("constraint {}: {}", ci + 1, m.1))));
    }

    for (ri, rule) in ast.rules.iter().enumerate() {
        let bindings: BTreeSet<&str> = rule.pattern.bindings().into_iter().collect();
        let mut sink = Vec::new();
        if let Some(c) = &rule.condition {
            check_expr(c, &bindings, &mut sink);
        }
        for op in &rule.ops {
            let name = op.name();
            if let OpTemplate::Other { name, args } = op {
                sink.push((DiagnosticCode::UnknownOperation, format!("unknown control operation `{name}`")));
                for a in args {
                    check_expr(a, &bindings, &mut sink);
                }
                continue;
            }
            if !repertoire.contains(name) {
                sink.push((DiagnosticCode::NotInRepertoire, format!("operation `{name}` is not in the repertoire")));
            }
            match (op, rule.event) {
                (OpTemplate::Forward, EventKind::Arrived) => {
                    sink.push((DiagnosticCode::MisplacedOperation, "`forward` is not legal on arrived events".to_string()))
                }
                (OpTemplate::Deliver(_), EventKind::Sent | EventKind::Adopted) => {
                    sink.push((DiagnosticCode::MisplacedOperation, format!("`deliver` is not legal on {} events", rule.event)))
                }
                (OpTemplate::Delegate, ev) if !ast.delegations.contains(&ev) => {
                    sink.push((DiagnosticCode::MisplacedOperation, format!("`delegate` on {ev} events, which this law does not DELEGATE")))
                }
                _ => {}
            }
            for_each_op_expr(op, |e| check_expr(e, &bindings, &mut sink));
        }
        diags.extend(sink.into_iter().map(|(code, msg)| Diagnostic::in_rule(code, ri, msg)));
    }
    diags
}

pub(crate) fn for_each_op_expr(op: &OpTemplate, mut f: impl FnMut(&Expr)) {
    match op {
        OpTemplate::Forward | OpTemplate::Delegate | OpTemplate::PrefixSender | OpTemplate::StripSender | OpTemplate::Deliver(None) => {}
        OpTemplate::Deliver(Some(m)) | OpTemplate::Repeal { obligation: m } => m.args.iter().for_each(f),
        OpTemplate::Update { target, value } => {
            if let Some(k) = &target.key {
                f(k);
            }
            f(value);
        }
        OpTemplate::Impose { obligation, delay } => {
            obligation.args.iter().for_each(&mut f);
            f(delay);
        }
        OpTemplate::Emit { target, message } => {
            f(target);
            message.args.iter().for_each(f);
        }
        OpTemplate::Audit { kind: a, detail: b } | OpTemplate::QueryMi { form: a, capability: b } => {
            f(a);
            f(b);
        }
        OpTemplate::Other { args, .. } => args.iter().for_each(f),
    }
}

fn check_expr(e: &Expr, bindings: &BTreeSet<&str>, sink: &mut Vec<(DiagnosticCode, String)>) {
    match e {
        Expr::Lit(_) | Expr::Var(_) | Expr::OpRef => {}
        Expr::Keyed(_, k) => check_expr(k, bindings, sink),
        Expr::Event(f) => {
            if !EVENT_FIELDS.contains(&f.as_str()) {
                sink.push((DiagnosticCode::UnknownEventField, format!("reference to undeclared event field `${f}`")));
            }
        }
        Expr::Field(base, field) => {
            if let Expr::Var(name) = &**base {
                if !bindings.contains(name.as_str()) {
                    sink.push((
                        DiagnosticCode::Locality,
                        format!("`{name}.{field}` reads the state of another agent; laws may only read their own control state"),
                    ));
                    return;
                }
            }
            check_expr(base, bindings, sink);
        }
        Expr::Unary(_, inner) => check_expr(inner, bindings, sink),
        Expr::Binary(_, l, r) => {
            check_expr(l, bindings, sink);
            check_expr(r, bindings, sink);
        }
        Expr::Call(name, args) => {
            match builtin_arity(name) {
                None => sink.push((DiagnosticCode::UnknownFunction, format!("unknown function `{name}`"))),
                Some(n) if n != args.len() => {
                    sink.push((DiagnosticCode::Arity, format!("`{name}` takes {n} argument(s), got {}", args.len())))
                }
                Some(_) => {}
            }
            for a in args {
                check_expr(a, bindings, sink);
            }
        }
        Expr::List(items) => items.iter().for_each(|i| check_expr(i, bindings, sink)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parser::parse_syntax;

    fn diags(src: &str, rep: &[&str]) -> Vec<Diagnostic> {
        validate_law(&parse_syntax(src).unwrap(), rep)
    }

    #[test]
    fn basic_ops_only_is_clean() {
        let d = diags("UPON sent(_) DO [x <- 1, forward] UPON arrived(_) DO [deliver]", &["forward", "deliver", "stateUpdate"]);
        assert!(d.is_empty(), "{d:?}");
    }

    #[test]
    fn op_outside_repertoire() {
        let d = diags("UPON sent(_) DO [emit($sender, x(1)), forward]", &["forward"]);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagnosticCode::NotInRepertoire);
    }

    #[test]
    fn teleport_is_unknown() {
        let d = diags("UPON sent(_) DO [teleport]", &FULL_REPERTOIRE);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagnosticCode::UnknownOperation);
        assert_eq!(d[0].rule, Some(0));
    }

    #[test]
    fn locality_violation() {
        let d = diags("UPON sent(_) IF buyer7.budget > 0 DO [forward]", &FULL_REPERTOIRE);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagnosticCode::Locality);
    }

    #[test]
    fn fields_on_bindings_and_event_roots_are_local() {
        let d = diags("UPON arrived(m(t)) IF t.branch == $sender.branch DO [deliver]", &FULL_REPERTOIRE);
        assert!(d.is_empty(), "{d:?}");
    }

    #[test]
    fn misplaced_and_unknown_field() {
        let d = diags("UPON arrived(_) IF $bogus DO [forward] UPON sent(_) DO [deliver, delegate]", &FULL_REPERTOIRE);
        let codes: Vec<_> = d.iter().map(|d| d.code).collect();
        assert_eq!(
            codes,
            [
                DiagnosticCode::UnknownEventField,
                DiagnosticCode::MisplacedOperation,
                DiagnosticCode::MisplacedOperation,
                DiagnosticCode::MisplacedOperation
            ]
        );
    }

    #[test]
    fn builtin_arity_checked() {
        let d = diags("UPON sent(_) IF len(a, b) > frob(1) DO []", &FULL_REPERTOIRE);
        let codes: Vec<_> = d.iter().map(|d| d.code).collect();
        assert_eq!(codes, [DiagnosticCode::Arity, DiagnosticCode::UnknownFunction]);
    }
}
