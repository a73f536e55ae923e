//! Recursive-descent parser for law text.
//!
//! ```text
//! law      := item*
//! item     := DELEGATE kind ("," kind)* ";"
//!           | CONSTRAIN expr ";"
//!           | AUTHORITY string ";"
//!           | ACCEPT FROM ident ("," ident)* ";"
//!           | rule
//! rule     := UPON kind "(" pattern ")" [IF expr] DO "[" [op ("," op)*] "]" [";"]
//! pattern  := "_" | ident ["(" [arg ("," arg)*] ")"]
//! arg      := "_" | "..." | ident | literal
//! op       := forward | delegate | prefixSender | stripSender
//!           | deliver ["(" msg ")"]
//!           | ident ["[" expr "]"] "<-" expr
//!           | imposeObligation "(" msg "," expr ")" | repealObligation "(" msg ")"
//!           | emit "(" expr "," msg ")" | audit "(" expr "," expr ")"
//!           | queryMI "(" expr "," expr ")"
//! msg      := ident ["(" [expr ("," expr)*] ")"]
//! ```

use super::ast::*;
use super::diag::{Diagnostic, DiagnosticCode, Pos};
use super::lexer::{tokenize, Tok, Token};
use crate::value::Value;

const KEYWORDS: [&str; 9] = ["UPON", "IF", "DO", "DELEGATE", "CONSTRAIN", "AUTHORITY", "ACCEPT", "FROM", "in"];

/// Parses law text into an AST. Only syntax is checked here; see
/// [`super::validate_law`] for the semantic checks.
pub fn parse_syntax(text: &str) -> Result<LawAst, Diagnostic> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, at: 0, in_constraint: false };
    p.law()
}

/// Parses a standalone expression (used for constraint checks in tests and
/// tooling).
pub fn parse_expr(text: &str, in_constraint: bool) -> Result<Expr, Diagnostic> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, at: 0, in_constraint };
    let e = p.expr(0)?;
    p.expect_tok(Tok::Eof, "end of expression")?;
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    in_constraint: bool,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn peek_at(&self, off: usize) -> &Tok {
        let idx = (self.at + off).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].pos
    }

    fn advance(&mut self) -> Tok {
        let t = self.tokens[self.at].tok.clone();
        if self.at < self.tokens.len() - 1 {
            self.at += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> Diagnostic {
        Diagnostic::at(DiagnosticCode::Syntax, self.pos(), format!("expected {expected}, found {}", self.peek().describe()))
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("`{kw}`")))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_tok(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.error(what))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.error(what)),
        }
    }

    fn law(&mut self) -> PResult<LawAst> {
        let mut law = LawAst::default();
        loop {
            match self.peek() {
                Tok::Eof => return Ok(law),
                Tok::Ident(kw) => match kw.as_str() {
                    "UPON" => law.rules.push(self.rule()?),
                    "DELEGATE" => {
                        self.advance();
                        loop {
                            let pos = self.pos();
                            let name = self.ident("event kind")?;
                            let kind = EventKind::parse(&name)
                                .ok_or_else(|| Diagnostic::at(DiagnosticCode::Syntax, pos, format!("unknown event kind `{name}`")))?;
                            law.delegations.insert(kind);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                        self.expect_tok(Tok::Semi, "`;`")?;
                    }
                    "CONSTRAIN" => {
                        self.advance();
                        self.in_constraint = true;
                        let e = self.expr(0);
                        self.in_constraint = false;
                        law.constraints.push(e?);
                        self.expect_tok(Tok::Semi, "`;`")?;
                    }
                    "AUTHORITY" => {
                        self.advance();
                        match self.advance() {
                            Tok::Str(s) => law.authority = Some(s),
                            _ => {
                                self.at -= 1;
                                return Err(self.error("authority key string"));
                            }
                        }
                        self.expect_tok(Tok::Semi, "`;`")?;
                    }
                    "ACCEPT" => {
                        self.advance();
                        self.expect_kw("FROM")?;
                        loop {
                            law.accept_from.push(self.ident("law name")?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                        self.expect_tok(Tok::Semi, "`;`")?;
                    }
                    _ => return Err(self.error("`UPON`, `DELEGATE`, `CONSTRAIN`, `AUTHORITY` or `ACCEPT`")),
                },
                _ => return Err(self.error("`UPON`, `DELEGATE`, `CONSTRAIN`, `AUTHORITY` or `ACCEPT`")),
            }
        }
    }

    fn rule(&mut self) -> PResult<Rule> {
        self.expect_kw("UPON")?;
        let pos = self.pos();
        let name = self.ident("event kind (adopted, sent, arrived, obligationDue)")?;
        let event =
            EventKind::parse(&name).ok_or_else(|| Diagnostic::at(DiagnosticCode::Syntax, pos, format!("unknown event kind `{name}`")))?;
        self.expect_tok(Tok::LParen, "`(`")?;
        let pattern = self.pattern()?;
        self.expect_tok(Tok::RParen, "`)`")?;
        let condition = if self.eat_kw("IF") { Some(self.expr(0)?) } else { None };
        self.expect_kw("DO")?;
        self.expect_tok(Tok::LBracket, "`[`")?;
        let mut ops = Vec::new();
        if !self.eat(&Tok::RBracket) {
            loop {
                ops.push(self.op()?);
                if self.eat(&Tok::Comma) {
                    continue;
                }
                self.expect_tok(Tok::RBracket, "`,` or `]`")?;
                break;
            }
        }
        self.eat(&Tok::Semi);
        Ok(Rule { event, pattern, condition, ops })
    }

    fn pattern(&mut self) -> PResult<Pattern> {
        if self.is_kw("_") {
            self.advance();
            return Ok(Pattern::Any);
        }
        let kind = self.ident("message pattern or `_`")?;
        if !self.eat(&Tok::LParen) {
            return Ok(Pattern::Message { kind, args: None });
        }
        if self.eat(&Tok::Ellipsis) {
            self.expect_tok(Tok::RParen, "`)`")?;
            return Ok(Pattern::Message { kind, args: None });
        }
        let mut args = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                let arg = self.arg_pattern()?;
                let is_rest = arg == ArgPattern::Rest;
                args.push(arg);
                if is_rest {
                    self.expect_tok(Tok::RParen, "`)` after `...`")?;
                    break;
                }
                if self.eat(&Tok::Comma) {
                    continue;
                }
                self.expect_tok(Tok::RParen, "`,` or `)`")?;
                break;
            }
        }
        Ok(Pattern::Message { kind, args: Some(args) })
    }

    fn arg_pattern(&mut self) -> PResult<ArgPattern> {
        match self.peek().clone() {
            Tok::Ellipsis => {
                self.advance();
                Ok(ArgPattern::Rest)
            }
            Tok::Str(s) => {
                self.advance();
                Ok(ArgPattern::Literal(Value::Str(s)))
            }
            Tok::Num(n) => {
                self.advance();
                Ok(ArgPattern::Literal(Value::Num(n)))
            }
            Tok::Minus if matches!(self.peek_at(1), Tok::Num(_)) => {
                self.advance();
                let Tok::Num(n) = self.advance() else { unreachable!() };
                Ok(ArgPattern::Literal(Value::Num(-n)))
            }
            Tok::Ident(s) => match s.as_str() {
                "_" => {
                    self.advance();
                    Ok(ArgPattern::Wildcard)
                }
                "true" | "false" => {
                    self.advance();
                    Ok(ArgPattern::Literal(Value::Bool(s == "true")))
                }
                "null" => {
                    self.advance();
                    Ok(ArgPattern::Literal(Value::Null))
                }
                _ => Ok(ArgPattern::Bind(self.ident("argument pattern")?)),
            },
            _ => Err(self.error("argument pattern")),
        }
    }

    fn message(&mut self) -> PResult<MessageTemplate> {
        let kind = self.ident("message kind")?;
        let mut args = Vec::new();
        if self.eat(&Tok::LParen) && !self.eat(&Tok::RParen) {
            loop {
                args.push(self.expr(0)?);
                if self.eat(&Tok::Comma) {
                    continue;
                }
                self.expect_tok(Tok::RParen, "`,` or `)`")?;
                break;
            }
        }
        Ok(MessageTemplate { kind, args })
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_tok(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.expr(0)?);
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect_tok(Tok::RParen, "`,` or `)`")?;
            return Ok(args);
        }
    }

    fn two_args(&mut self) -> PResult<(Expr, Expr)> {
        self.expect_tok(Tok::LParen, "`(`")?;
        let a = self.expr(0)?;
        self.expect_tok(Tok::Comma, "`,`")?;
        let b = self.expr(0)?;
        self.expect_tok(Tok::RParen, "`)`")?;
        Ok((a, b))
    }

    fn op(&mut self) -> PResult<OpTemplate> {
        let name = self.ident("control operation")?;
        // state update: `name <- expr` or `name[key] <- expr`
        if matches!(self.peek(), Tok::Assign | Tok::LBracket) {
            let key = if self.eat(&Tok::LBracket) {
                let k = self.expr(0)?;
                self.expect_tok(Tok::RBracket, "`]`")?;
                Some(k)
            } else {
                None
            };
            self.expect_tok(Tok::Assign, "`<-`")?;
            let value = self.expr(0)?;
            return Ok(OpTemplate::Update { target: StateRef { name, key }, value });
        }
        Ok(match name.as_str() {
            "forward" => OpTemplate::Forward,
            "delegate" => OpTemplate::Delegate,
            "prefixSender" => OpTemplate::PrefixSender,
            "stripSender" => OpTemplate::StripSender,
            "deliver" => {
                if self.eat(&Tok::LParen) {
                    let m = self.message()?;
                    self.expect_tok(Tok::RParen, "`)`")?;
                    OpTemplate::Deliver(Some(m))
                } else {
                    OpTemplate::Deliver(None)
                }
            }
            "imposeObligation" => {
                self.expect_tok(Tok::LParen, "`(`")?;
                let obligation = self.message()?;
                self.expect_tok(Tok::Comma, "`,`")?;
                let delay = self.expr(0)?;
                self.expect_tok(Tok::RParen, "`)`")?;
                OpTemplate::Impose { obligation, delay }
            }
            "repealObligation" => {
                self.expect_tok(Tok::LParen, "`(`")?;
                let obligation = self.message()?;
                self.expect_tok(Tok::RParen, "`)`")?;
                OpTemplate::Repeal { obligation }
            }
            "emit" => {
                self.expect_tok(Tok::LParen, "`(`")?;
                let target = self.expr(0)?;
                self.expect_tok(Tok::Comma, "`,`")?;
                let message = self.message()?;
                self.expect_tok(Tok::RParen, "`)`")?;
                OpTemplate::Emit { target, message }
            }
            "audit" => {
                let (kind, detail) = self.two_args()?;
                OpTemplate::Audit { kind, detail }
            }
            "queryMI" => {
                let (form, capability) = self.two_args()?;
                OpTemplate::QueryMi { form, capability }
            }
            _ => {
                let args = if *self.peek() == Tok::LParen { self.call_args()? } else { Vec::new() };
                OpTemplate::Other { name, args }
            }
        })
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::Ident(s) if s == "or" => BinOp::Or,
            Tok::Ident(s) if s == "and" => BinOp::And,
            Tok::Ident(s) if s == "in" => BinOp::In,
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            Tok::Percent => BinOp::Rem,
            _ => return None,
        })
    }

    /// Precedence climbing; all binary operators are left-associative.
    fn expr(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec <= min_prec {
                break;
            }
            self.advance();
            let rhs = self.expr(prec)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_kw("not") {
            // `not` binds looser than comparison: `not a == b` is `not (a == b)`
            let inner = self.expr(3)?;
            return Ok(Expr::Unary(UnOp::Not, Box::new(inner)));
        }
        if self.eat(&Tok::Minus) {
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnOp::Neg, Box::new(inner)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.eat(&Tok::Dot) {
            let field = self.ident("field name")?;
            e = Expr::Field(Box::new(e), field);
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.advance();
                Ok(Expr::Lit(Value::Num(n)))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::Lit(Value::Str(s)))
            }
            Tok::EventField(f) => {
                self.advance();
                Ok(Expr::Event(f))
            }
            Tok::LParen => {
                self.advance();
                let first = self.expr(0)?;
                if self.eat(&Tok::RParen) {
                    return Ok(first);
                }
                let mut items = vec![first];
                while self.eat(&Tok::Comma) {
                    items.push(self.expr(0)?);
                }
                self.expect_tok(Tok::RParen, "`,` or `)`")?;
                Ok(Expr::List(items))
            }
            Tok::LBracket => {
                self.advance();
                let mut items = Vec::new();
                if !self.eat(&Tok::RBracket) {
                    loop {
                        items.push(self.expr(0)?);
                        if self.eat(&Tok::Comma) {
                            continue;
                        }
                        self.expect_tok(Tok::RBracket, "`,` or `]`")?;
                        break;
                    }
                }
                Ok(Expr::List(items))
            }
            Tok::Ident(s) => match s.as_str() {
                "true" | "false" => {
                    self.advance();
                    Ok(Expr::Lit(Value::Bool(s == "true")))
                }
                "null" => {
                    self.advance();
                    Ok(Expr::Lit(Value::Null))
                }
                "op" if self.in_constraint => {
                    self.advance();
                    Ok(Expr::OpRef)
                }
                _ => {
                    let name = self.ident("expression")?;
                    match self.peek() {
                        Tok::LParen => Ok(Expr::Call(name, self.call_args()?)),
                        Tok::LBracket => {
                            self.advance();
                            let key = self.expr(0)?;
                            self.expect_tok(Tok::RBracket, "`]`")?;
                            Ok(Expr::Keyed(name, Box::new(key)))
                        }
                        _ => Ok(Expr::Var(name)),
                    }
                }
            },
            _ => Err(self.error("expression")),
        }
    }
}
