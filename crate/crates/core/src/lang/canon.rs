//! Canonical printing of laws and the law hash.
//!
//! The canonical form drops comments, normalizes whitespace and numeric
//! literals, and uses minimal parentheses. Rule order is preserved. The law
//! hash is SHA-256 over the canonical text.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::ast::*;
use crate::value::{format_number, write_quoted, Value};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LawHash(pub [u8; 32]);

impl LawHash {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(LawHash(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for LawHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LawHash({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for LawHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for LawHash {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for LawHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        LawHash::from_hex(&s).ok_or_else(|| serde::de::Error::custom("law hash must be 64 hex digits"))
    }
}

pub fn hash_law(ast: &LawAst) -> LawHash {
    let digest = Sha256::digest(canonical_text(ast).as_bytes());
    LawHash(digest.into())
}

/// Canonical text of a law; reparses to a structurally equal AST.
pub fn canonical_text(ast: &LawAst) -> String {
    let mut out = String::new();
    if !ast.delegations.is_empty() {
        let kinds: Vec<_> = ast.delegations.iter().map(|k| k.as_str()).collect();
        out.push_str("DELEGATE ");
        out.push_str(&kinds.join(", "));
        out.push_str(";\n");
    }
    for c in &ast.constraints {
        out.push_str("CONSTRAIN ");
        write_expr(c, &mut out);
        out.push_str(";\n");
    }
    if let Some(a) = &ast.authority {
        out.push_str("AUTHORITY ");
        write_quoted(a, &mut out);
        out.push_str(";\n");
    }
    if !ast.accept_from.is_empty() {
        out.push_str("ACCEPT FROM ");
        out.push_str(&ast.accept_from.join(", "));
        out.push_str(";\n");
    }
    for rule in &ast.rules {
        write_rule(rule, &mut out);
        out.push('\n');
    }
    out
}

pub fn rule_text(rule: &Rule) -> String {
    let mut out = String::new();
    write_rule(rule, &mut out);
    out
}

fn write_rule(rule: &Rule, out: &mut String) {
    out.push_str("UPON ");
    out.push_str(rule.event.as_str());
    out.push('(');
    match &rule.pattern {
        Pattern::Any => out.push('_'),
        Pattern::Message { kind, args } => {
            out.push_str(kind);
            match args {
                None => out.push_str("(...)"),
                Some(args) => {
                    out.push('(');
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            out.push_str(", ");
                        }
                        match a {
                            ArgPattern::Bind(n) => out.push_str(n),
                            ArgPattern::Literal(v) => out.push_str(&v.canonical()),
                            ArgPattern::Wildcard => out.push('_'),
                            ArgPattern::Rest => out.push_str("..."),
                        }
                    }
                    out.push(')');
                }
            }
        }
    }
    out.push(')');
    if let Some(c) = &rule.condition {
        out.push_str(" IF ");
        write_expr(c, out);
    }
    out.push_str(" DO [");
    for (i, op) in rule.ops.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_op(op, out);
    }
    out.push_str("];");
}

fn write_message(m: &MessageTemplate, out: &mut String) {
    out.push_str(&m.kind);
    out.push('(');
    write_list(&m.args, out);
    out.push(')');
}

fn write_list(items: &[Expr], out: &mut String) {
    for (i, e) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(e, out);
    }
}

fn write_op(op: &OpTemplate, out: &mut String) {
    match op {
        OpTemplate::Forward | OpTemplate::Delegate | OpTemplate::PrefixSender | OpTemplate::StripSender => out.push_str(op.name()),
        OpTemplate::Deliver(None) => out.push_str("deliver"),
        OpTemplate::Deliver(Some(m)) => {
            out.push_str("deliver(");
            write_message(m, out);
            out.push(')');
        }
        OpTemplate::Update { target, value } => {
            out.push_str(&target.name);
            if let Some(k) = &target.key {
                out.push('[');
                write_expr(k, out);
                out.push(']');
            }
            out.push_str(" <- ");
            write_expr(value, out);
        }
        OpTemplate::Impose { obligation, delay } => {
            out.push_str("imposeObligation(");
            write_message(obligation, out);
            out.push_str(", ");
            write_expr(delay, out);
            out.push(')');
        }
        OpTemplate::Repeal { obligation } => {
            out.push_str("repealObligation(");
            write_message(obligation, out);
            out.push(')');
        }
        OpTemplate::Emit { target, message } => {
            out.push_str("emit(");
            write_expr(target, out);
            out.push_str(", ");
            write_message(message, out);
            out.push(')');
        }
        OpTemplate::Audit { kind, detail } => {
            out.push_str("audit(");
            write_expr(kind, out);
            out.push_str(", ");
            write_expr(detail, out);
            out.push(')');
        }
        OpTemplate::QueryMi { form, capability } => {
            out.push_str("queryMI(");
            write_expr(form, out);
            out.push_str(", ");
            write_expr(capability, out);
            out.push(')');
        }
        OpTemplate::Other { name, args } => {
            out.push_str(name);
            if !args.is_empty() {
                out.push('(');
                write_list(args, out);
                out.push(')');
            }
        }
    }
}

pub fn expr_text(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, &mut out);
    out
}

fn write_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Lit(v) => write_literal(v, out),
        Expr::Var(n) => out.push_str(n),
        Expr::Keyed(n, k) => {
            out.push_str(n);
            out.push('[');
            write_expr(k, out);
            out.push(']');
        }
        Expr::Event(f) => {
            out.push('$');
            out.push_str(f);
        }
        Expr::OpRef => out.push_str("op"),
        Expr::Field(base, f) => {
            let wrap = matches!(**base, Expr::Binary(..) | Expr::Unary(..)) || matches!(&**base, Expr::Lit(Value::Num(n)) if *n < 0.0);
            write_wrapped(base, wrap, out);
            out.push('.');
            out.push_str(f);
        }
        Expr::Unary(UnOp::Not, inner) => {
            out.push_str("not ");
            let wrap = matches!(&**inner, Expr::Binary(op, ..) if op.precedence() <= 3);
            write_wrapped(inner, wrap, out);
        }
        Expr::Unary(UnOp::Neg, inner) => {
            out.push('-');
            let wrap =
                matches!(**inner, Expr::Binary(..) | Expr::Unary(UnOp::Not, _)) || matches!(&**inner, Expr::Lit(Value::Num(n)) if *n < 0.0);
            write_wrapped(inner, wrap, out);
        }
        Expr::Binary(op, l, r) => {
            let p = op.precedence();
            let wrap_l = match &**l {
                Expr::Binary(lop, ..) => lop.precedence() < p,
                // `not` on the left of a tighter operator would capture it
                Expr::Unary(UnOp::Not, _) => p > 3,
                _ => false,
            };
            let wrap_r = match &**r {
                Expr::Binary(rop, ..) => rop.precedence() <= p,
                Expr::Unary(UnOp::Not, _) => p > 3,
                _ => false,
            };
            write_wrapped(l, wrap_l, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_wrapped(r, wrap_r, out);
        }
        Expr::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            write_list(args, out);
            out.push(')');
        }
        Expr::List(items) => {
            out.push('[');
            write_list(items, out);
            out.push(']');
        }
    }
}

fn write_wrapped(e: &Expr, wrap: bool, out: &mut String) {
    if wrap {
        out.push('(');
        write_expr(e, out);
        out.push(')');
    } else {
        write_expr(e, out);
    }
}

fn write_literal(v: &Value, out: &mut String) {
    match v {
        Value::Num(n) => out.push_str(&format_number(*n)),
        other => out.push_str(&other.canonical()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parser::parse_syntax;

    #[test]
    fn canonical_form_is_formatting_insensitive() {
        let a = parse_syntax("UPON sent(PO(...))   IF  x>=1.0 DO [POcount<-POcount+1,forward]").unwrap();
        let b = parse_syntax("# counter\nUPON sent(PO)\n  IF x >= 1   // threshold\n  DO [ POcount <- POcount + 1 , forward ] ;").unwrap();
        assert_eq!(canonical_text(&a), canonical_text(&b));
        assert_eq!(hash_law(&a), hash_law(&b));
    }

    #[test]
    fn minimal_parentheses() {
        let law = parse_syntax("UPON sent(_) IF (a + b) * c > d - (e - f) and not (x or y) DO []").unwrap();
        assert_eq!(rule_text(&law.rules[0]), "UPON sent(_) IF (a + b) * c > d - (e - f) and not (x or y) DO [];");
    }

    #[test]
    fn hash_hex_roundtrip() {
        let h = hash_law(&LawAst::default());
        assert_eq!(LawHash::from_hex(&h.to_hex()), Some(h));
        // SHA-256 of the empty string
        assert_eq!(h.to_hex(), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
