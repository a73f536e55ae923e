//! Carrying out a ruling at the agent's controller.

use serde::Serialize;

use super::ruling::{ControlOp, Ruling};
use super::types::{AgentId, ControlState, Payload, RegulatedEvent};
use crate::capabilities::audit::AuditKind;
use crate::value::Value;

/// Externally visible results of applying a ruling; state updates have
/// already been written to the agent's control state.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "effect", rename_all = "camelCase")]
pub enum Effect {
    /// Send the event's message on to `to`, prefixed with the sender triple
    /// when `stamped`.
    Forward {
        to: AgentId,
        payload: Payload,
        stamped: bool,
    },
    /// Hand a payload to the agent's own actor.
    Deliver {
        payload: Payload,
        sender: Option<AgentId>,
    },
    /// Controller-generated m-message to `to`.
    Emit {
        to: AgentId,
        payload: Payload,
    },
    Impose {
        obligation: Payload,
        due: f64,
    },
    Repeal {
        obligation: Payload,
    },
    Audit {
        kind: AuditKind,
        detail: Value,
    },
    QueryMi {
        requester: AgentId,
        form: String,
        capability: String,
    },
    /// An operation that could not be carried out in this context.
    Skipped {
        op: String,
        reason: String,
    },
}

/// Applies `ruling` for `event` to `state`. Operations run in order; each
/// state update is visible to the operations after it.
pub fn apply_ruling(ruling: &Ruling, event: &RegulatedEvent, state: &mut ControlState) -> Vec<Effect> {
    let mut effects = Vec::new();
    let mut stamped = false;
    for op in &ruling.ops {
        match op {
            ControlOp::StateUpdate { name, value } => state.set(name.clone(), value.clone()),
            ControlOp::PrefixSender => stamped = true,
            ControlOp::StripSender => stamped = false,
            ControlOp::Forward => match (&event.message, &event.peer) {
                (Some(payload), Some(to)) if event.kind == crate::lang::EventKind::Sent => {
                    effects.push(Effect::Forward { to: to.clone(), payload: payload.clone(), stamped })
                }
                _ => effects.push(Effect::Skipped { op: "forward".into(), reason: format!("no outgoing message on {} event", event.kind) }),
            },
            ControlOp::Deliver { payload: Some(p) } => effects.push(Effect::Deliver { payload: p.clone(), sender: None }),
            ControlOp::Deliver { payload: None } => match &event.message {
                Some(p) if event.kind == crate::lang::EventKind::Arrived => {
                    effects.push(Effect::Deliver { payload: p.clone(), sender: event.sender.clone() })
                }
                _ => effects.push(Effect::Skipped { op: "deliver".into(), reason: format!("no incoming message on {} event", event.kind) }),
            },
            ControlOp::Emit { target, payload } => effects.push(Effect::Emit { to: target.clone(), payload: payload.clone() }),
            ControlOp::ImposeObligation { obligation, delay } => {
                effects.push(Effect::Impose { obligation: obligation.clone(), due: event.now + delay })
            }
            ControlOp::RepealObligation { obligation } => effects.push(Effect::Repeal { obligation: obligation.clone() }),
            ControlOp::Audit { kind, detail } => effects.push(Effect::Audit { kind: *kind, detail: detail.clone() }),
            ControlOp::QueryMi { requester, form, capability } => {
                effects.push(Effect::QueryMi { requester: requester.clone(), form: form.clone(), capability: capability.clone() })
            }
            ControlOp::Delegate => {}
        }
    }
    effects
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::types::{Layer, MessageClass, Origin};

    fn a() -> AgentId {
        AgentId::new("a", "s", Layer::B)
    }

    #[test]
    fn sequential_updates() {
        let ruling: Ruling = vec![
            ControlOp::StateUpdate { name: "x".into(), value: 1.0.into() },
            ControlOp::StateUpdate { name: "x".into(), value: 2.0.into() },
        ]
        .into();
        let mut state = ControlState::new();
        let fx = apply_ruling(&ruling, &RegulatedEvent::adopted(&a(), "G", 0.0), &mut state);
        assert!(fx.is_empty());
        assert_eq!(state.num("x"), 2.0);
    }

    #[test]
    fn empty_ruling_has_no_effect() {
        let mut state = ControlState::new();
        state.set("k", 1.0.into());
        let before = state.clone();
        let ev = RegulatedEvent::sent(&a(), "G", &a(), Payload::bare("x"), 0.0);
        assert!(apply_ruling(&Ruling::empty(), &ev, &mut state).is_empty());
        assert_eq!(state, before);
    }

    #[test]
    fn obligation_due_time() {
        let ruling: Ruling = vec![ControlOp::ImposeObligation { obligation: Payload::bare("tick"), delay: 5.0 }].into();
        let ev = RegulatedEvent::obligation_due(&a(), "G", Payload::bare("start"), 10.0);
        let fx = apply_ruling(&ruling, &ev, &mut ControlState::new());
        assert_eq!(fx, vec![Effect::Impose { obligation: Payload::bare("tick"), due: 15.0 }]);
    }

    #[test]
    fn stamping_follows_prefix_and_strip() {
        let ev = RegulatedEvent::sent(&a(), "G", &a(), Payload::bare("x"), 0.0);
        let ruling: Ruling = vec![ControlOp::PrefixSender, ControlOp::StripSender, ControlOp::Forward].into();
        let fx = apply_ruling(&ruling, &ev, &mut ControlState::new());
        assert!(matches!(fx[0], Effect::Forward { stamped: false, .. }));
        let ruling: Ruling = vec![ControlOp::PrefixSender, ControlOp::Forward].into();
        let fx = apply_ruling(&ruling, &ev, &mut ControlState::new());
        assert!(matches!(fx[0], Effect::Forward { stamped: true, .. }));
    }

    #[test]
    fn forward_on_arrival_is_skipped() {
        let ev = RegulatedEvent::arrived(&a(), "G", &a(), None, Payload::bare("x"), MessageClass::B, Origin::Actor, 0.0);
        let fx = apply_ruling(&vec![ControlOp::Forward, ControlOp::Deliver { payload: None }].into(), &ev, &mut ControlState::new());
        assert!(matches!(fx[0], Effect::Skipped { .. }));
        assert_eq!(fx[1], Effect::Deliver { payload: Payload::bare("x"), sender: None });
    }
}
