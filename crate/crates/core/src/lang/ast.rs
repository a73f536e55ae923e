//! Syntax tree of a law.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::value::Value;

/// Kinds of regulated events a rule can be triggered by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EventKind {
    Adopted,
    Sent,
    Arrived,
    ObligationDue,
}

impl EventKind {
    pub const ALL: [EventKind; 4] = [EventKind::Adopted, EventKind::Sent, EventKind::Arrived, EventKind::ObligationDue];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Adopted => "adopted",
            EventKind::Sent => "sent",
            EventKind::Arrived => "arrived",
            EventKind::ObligationDue => "obligationDue",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        EventKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LawAst {
    pub rules: Vec<Rule>,
    /// Event kinds this law passes down to subordinate laws.
    pub delegations: BTreeSet<EventKind>,
    /// Predicates over a single candidate operation that every operation in
    /// a subordinate's resolved ruling must satisfy.
    pub constraints: Vec<Expr>,
    /// Hex-encoded public key of the certificate authority for adoption.
    pub authority: Option<String>,
    /// Names of superior laws a remote sender's lineage must include.
    pub accept_from: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub event: EventKind,
    pub pattern: Pattern,
    pub condition: Option<Expr>,
    pub ops: Vec<OpTemplate>,
}

/// Message pattern of a rule head.
#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    /// `_` matches any message, or no message at all.
    Any,
    /// `kind`, `kind(...)`, or `kind(arg, ...)`.
    Message { kind: String, args: Option<Vec<ArgPattern>> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArgPattern {
    Bind(String),
    Literal(Value),
    Wildcard,
    /// `...` as the last element: any number of remaining arguments.
    Rest,
}

impl Pattern {
    pub fn bindings(&self) -> Vec<&str> {
        match self {
            Pattern::Message { args: Some(args), .. } => args
                .iter()
                .filter_map(|a| match a {
                    ArgPattern::Bind(n) => Some(n.as_str()),
                    _ => None,
                })
                .collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "or",
            BinOp::And => "and",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::In => "in",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::In => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    /// Bare identifier: a pattern binding, or a control-state variable.
    Var(String),
    /// Keyed control-state variable, `pending[sku]`.
    Keyed(String, Box<Expr>),
    /// Event field root, `$sender`.
    Event(String),
    /// The candidate operation inside a constraint, `op`.
    OpRef,
    Field(Box<Expr>, String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    List(Vec<Expr>),
}

/// A message built by an operation: `reply("POcount", POcount)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageTemplate {
    pub kind: String,
    pub args: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateRef {
    pub name: String,
    pub key: Option<Expr>,
}

/// An operation as written in a rule, before evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum OpTemplate {
    Forward,
    Deliver(Option<MessageTemplate>),
    Update {
        target: StateRef,
        value: Expr,
    },
    Impose {
        obligation: MessageTemplate,
        delay: Expr,
    },
    Repeal {
        obligation: MessageTemplate,
    },
    Emit {
        target: Expr,
        message: MessageTemplate,
    },
    Delegate,
    PrefixSender,
    StripSender,
    Audit {
        kind: Expr,
        detail: Expr,
    },
    QueryMi {
        form: Expr,
        capability: Expr,
    },
    /// Any operation name outside the known set; rejected by validation.
    Other {
        name: String,
        args: Vec<Expr>,
    },
}

impl OpTemplate {
    /// Repertoire name of the operation.
    pub fn name(&self) -> &str {
        match self {
            OpTemplate::Forward => "forward",
            OpTemplate::Deliver(_) => "deliver",
            OpTemplate::Update { .. } => "stateUpdate",
            OpTemplate::Impose { .. } => "imposeObligation",
            OpTemplate::Repeal { .. } => "repealObligation",
            OpTemplate::Emit { .. } => "emit",
            OpTemplate::Delegate => "delegate",
            OpTemplate::PrefixSender => "prefixSender",
            OpTemplate::StripSender => "stripSender",
            OpTemplate::Audit { .. } => "audit",
            OpTemplate::QueryMi { .. } => "queryMI",
            OpTemplate::Other { name, .. } => name,
        }
    }
}

/// Every operation name the engine knows how to carry out.
pub const FULL_REPERTOIRE: [&str; 11] = [
    "forward",
    "deliver",
    "stateUpdate",
    "imposeObligation",
    "repealObligation",
    "emit",
    "delegate",
    "prefixSender",
    "stripSender",
    "audit",
    "queryMI",
];

/// Event field roots available as `$name`.
pub const EVENT_FIELDS: [&str; 11] = ["event", "kind", "args", "sender", "peer", "self", "now", "class", "cert", "law", "origin"];

/// Control-state names reserved for the runtime and the capability fragments.
pub const RESERVED_STATE: [&str; 6] = ["self", "blocked", "subs", "obligations", "role", "tokens"];
