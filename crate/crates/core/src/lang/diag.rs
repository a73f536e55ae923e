use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum DiagnosticCode {
    Syntax,
    UnknownOperation,
    UnknownEventField,
    UnknownFunction,
    Arity,
    Locality,
    NotInRepertoire,
    MisplacedOperation,
    ReservedName,
    OrphanLaw,
    Cycle,
    DuplicateLaw,
    NonDelegatedEvent,
    ConstraintConflict,
    Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pos: Option<Pos>,
    /// Zero-based index of the offending rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law: Option<String>,
}

impl Diagnostic {
    pub fn new(code: DiagnosticCode, message: impl Into<String>) -> Self {
        Diagnostic { code, message: message.into(), pos: None, rule: None, law: None }
    }

    pub fn at(code: DiagnosticCode, pos: Pos, message: impl Into<String>) -> Self {
        Diagnostic { pos: Some(pos), ..Diagnostic::new(code, message) }
    }

    pub fn in_rule(code: DiagnosticCode, rule: usize, message: impl Into<String>) -> Self {
        Diagnostic { rule: Some(rule), ..Diagnostic::new(code, message) }
    }

    pub fn for_law(mut self, law: &str) -> Self {
        self.law = Some(law.to_string());
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(law) = &self.law {
            write!(f, "{law}: ")?;
        }
        if let Some(pos) = self.pos {
            write!(f, "{}:{}: ", pos.line, pos.col)?;
        }
        if let Some(rule) = self.rule {
            write!(f, "rule {}: ", rule + 1)?;
        }
        write!(f, "{}", self.message)
    }
}

/// Renders a diagnostic list one per line.
pub fn render(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}
