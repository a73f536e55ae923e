//! The law language: parsing, static validation, and canonical hashing.
//!
//! A law is an ordered list of rules
//!
//! ```text
//! UPON sent(PO(...)) DO [POcount <- POcount + 1, forward];
//! UPON arrived(examine("POcount")) IF $sender.layer == "M" DO [emit($sender, value("POcount", POcount))];
//! ```
//!
//! plus optional directives (`DELEGATE`, `CONSTRAIN`, `AUTHORITY`,
//! `ACCEPT FROM`) used by conformance hierarchies. Bare identifiers name the
//! agent's own control state (or pattern bindings); `$name` names fields of
//! the event being ruled on. The first rule whose pattern and condition
//! match an event decides the ruling; later rules are not consulted.

pub mod ast;
pub mod canon;
pub mod diag;
mod lexer;
pub mod parser;
pub mod validate;

use serde::{Deserialize, Serialize};

pub use ast::{EventKind, LawAst, FULL_REPERTOIRE};
pub use canon::{canonical_text, hash_law, LawHash};
pub use diag::{render, Diagnostic, DiagnosticCode};
pub use parser::parse_syntax;
pub use validate::validate_law;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LawSource {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    pub text: String,
}

impl LawSource {
    pub fn new(name: impl Into<String>, parent: Option<&str>, text: impl Into<String>) -> Self {
        LawSource { name: name.into(), parent: parent.map(str::to_string), text: text.into() }
    }
}

/// Parses and checks a law against the full operation repertoire.
///
/// Syntax errors stop at the first problem; semantic problems (unknown
/// operations, undeclared event fields, locality) are all reported.
pub fn parse_law(src: &LawSource) -> Result<LawAst, Vec<Diagnostic>> {
    let ast = parser::parse_syntax(&src.text).map_err(|d| vec![d.for_law(&src.name)])?;
    let diags = validate_law(&ast, &FULL_REPERTOIRE);
    if diags.is_empty() {
        Ok(ast)
    } else {
        Err(diags.into_iter().map(|d| d.for_law(&src.name)).collect())
    }
}

/// Pretty-prints a law in canonical form.
pub fn pretty(ast: &LawAst) -> String {
    canonical_text(ast)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUYER_COUNTER: &str = r#"
        UPON sent(PO(...)) DO [POcount <- POcount + 1, forward];
        UPON arrived(examine("POcount")) IF $sender.layer == "M" DO [emit($sender, value("POcount", POcount))];
    "#;

    #[test]
    fn buyer_counter_parses_to_two_rules() {
        let ast = parse_law(&LawSource::new("B", None, BUYER_COUNTER)).unwrap();
        assert_eq!(ast.rules.len(), 2);
        assert_eq!(ast.rules[0].event, EventKind::Sent);
        assert_eq!(ast.rules[1].event, EventKind::Arrived);
    }

    #[test]
    fn empty_law() {
        assert!(parse_law(&LawSource::new("E", None, "")).unwrap().rules.is_empty());
    }

    #[test]
    fn reading_another_agents_state_is_rejected() {
        let err = parse_law(&LawSource::new("X", None, "UPON sent(_) IF buyer1.POcount > 3 DO [forward]")).unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err[0].code, DiagnosticCode::Locality);
        assert_eq!(err[0].law.as_deref(), Some("X"));
    }

    #[test]
    fn unknown_operation_is_a_parse_error() {
        let err = parse_law(&LawSource::new("X", None, "UPON sent(_) DO [teleport]")).unwrap_err();
        assert_eq!(err[0].code, DiagnosticCode::UnknownOperation);
    }

    #[test]
    fn undeclared_event_field_is_a_parse_error() {
        let err = parse_law(&LawSource::new("X", None, "UPON sent(_) IF $weather == 1 DO [forward]")).unwrap_err();
        assert_eq!(err[0].code, DiagnosticCode::UnknownEventField);
    }
}
