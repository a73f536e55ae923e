//! Records of everything a controller does, in the order it does it.

use serde::{Deserialize, Serialize};

use super::envelope::Envelope;
use crate::capabilities::audit::AuditRecord;
use crate::engine::{AgentId, MessageClass, Payload, Ruling};
use crate::hierarchy::{EngineDiagnostic, FilteredOp};
use crate::lang::EventKind;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ObligationAction {
    Impose,
    Repeal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rec", rename_all = "camelCase")]
pub enum Record {
    Adopt {
        t: f64,
        agent: AgentId,
        law: String,
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    /// A regulated event and its resolved ruling.
    Event {
        t: f64,
        agent: AgentId,
        law: String,
        event: EventKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        message: Option<Payload>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        peer: Option<AgentId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sender: Option<AgentId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        class: Option<MessageClass>,
        ruling: Ruling,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        filtered: Vec<FilteredOp>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        diagnostics: Vec<EngineDiagnostic>,
    },
    /// An envelope dispatched by a controller.
    Envelope {
        t: f64,
        envelope: Envelope,
    },
    /// A payload handed to an agent's actor.
    Deliver {
        t: f64,
        agent: AgentId,
        payload: Payload,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sender: Option<AgentId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        class: Option<MessageClass>,
    },
    /// An envelope refused before its arrival was regulated.
    Reject {
        t: f64,
        agent: AgentId,
        source: AgentId,
        seq: u64,
        reason: String,
    },
    Obligation {
        t: f64,
        agent: AgentId,
        action: ObligationAction,
        obligation: Payload,
        due: f64,
    },
    Mi {
        t: f64,
        agent: AgentId,
        form: String,
        capability: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reply: Option<Value>,
        available: bool,
    },
    Audit {
        record: AuditRecord,
    },
    /// Free-form annotation from whatever drives the system.
    Note {
        t: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        actor: Option<AgentId>,
        note: String,
        #[serde(default)]
        data: serde_json::Value,
    },
}

impl Record {
    pub fn t(&self) -> f64 {
        match self {
            Record::Adopt { t, .. }
            | Record::Event { t, .. }
            | Record::Envelope { t, .. }
            | Record::Deliver { t, .. }
            | Record::Reject { t, .. }
            | Record::Obligation { t, .. }
            | Record::Mi { t, .. }
            | Record::Note { t, .. } => *t,
            Record::Audit { record } => record.t,
        }
    }
}
