use serde::{Deserialize, Serialize};

use super::types::{AgentId, Payload};
use crate::capabilities::audit::AuditKind;
use crate::value::Value;

/// A concrete control operation, with every argument already evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase")]
pub enum ControlOp {
    Forward,
    Deliver {
        #[serde(skip_serializing_if = "Option::is_none", default)]
        payload: Option<Payload>,
    },
    StateUpdate {
        name: String,
        value: Value,
    },
    ImposeObligation {
        obligation: Payload,
        delay: f64,
    },
    RepealObligation {
        obligation: Payload,
    },
    Emit {
        target: AgentId,
        payload: Payload,
    },
    /// Hands the event to the next law down the hierarchy; never survives
    /// resolution.
    Delegate,
    PrefixSender,
    StripSender,
    Audit {
        kind: AuditKind,
        detail: Value,
    },
    #[serde(rename = "queryMI")]
    QueryMi {
        requester: AgentId,
        form: String,
        capability: String,
    },
}

impl ControlOp {
    pub fn name(&self) -> &'static str {
        match self {
            ControlOp::Forward => "forward",
            ControlOp::Deliver { .. } => "deliver",
            ControlOp::StateUpdate { .. } => "stateUpdate",
            ControlOp::ImposeObligation { .. } => "imposeObligation",
            ControlOp::RepealObligation { .. } => "repealObligation",
            ControlOp::Emit { .. } => "emit",
            ControlOp::Delegate => "delegate",
            ControlOp::PrefixSender => "prefixSender",
            ControlOp::StripSender => "stripSender",
            ControlOp::Audit { .. } => "audit",
            ControlOp::QueryMi { .. } => "queryMI",
        }
    }
}

/// The law's decision for one event. An empty ruling drops the event.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ruling {
    pub ops: Vec<ControlOp>,
}

impl Ruling {
    pub fn empty() -> Self {
        Ruling::default()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.ops.iter().any(|o| o.name() == name)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }
}

impl From<Vec<ControlOp>> for Ruling {
    fn from(ops: Vec<ControlOp>) -> Self {
        Ruling { ops }
    }
}
