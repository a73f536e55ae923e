use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;
use thiserror::Error;

use super::cert::{verify_certificate, Certificate};
use super::envelope::{verify_chain, Envelope};
use super::journal::{ObligationAction, Record};
use super::scheduler::Scheduler;
use crate::capabilities::audit::{AuditKind, AuditRecord};
use crate::capabilities::ManagementInterface;
use crate::engine::{apply_ruling, AgentId, ControlOp, ControlState, Effect, MessageClass, Origin, Payload, RegulatedEvent};
use crate::hierarchy::{resolve, HashChain, LawTree, Resolution};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdoptError {
    #[error("law `{0}` is not part of the ensemble")]
    UnknownLaw(String),
    #[error("pool is at capacity")]
    PoolFull,
    #[error("{0} is already adopted")]
    AlreadyAdopted(AgentId),
    #[error("no certificate authority configured")]
    NoAuthority,
    #[error("certificate signature does not verify")]
    BadSignature,
    #[error("adoption refused by law")]
    RefusedByLaw,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error(transparent)]
    Adopt(#[from] AdoptError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolConfig {
    pub name: String,
    pub capacity: usize,
    /// CA public key used when the root law names none.
    pub authority: Option<String>,
}

impl PoolConfig {
    pub fn new(name: &str) -> Self {
        PoolConfig { name: name.to_string(), capacity: usize::MAX, authority: None }
    }

    pub fn with_authority(mut self, public_hex: &str) -> Self {
        self.authority = Some(public_hex.to_string());
        self
    }
}

/// One agent's private controller: its law, control state and bookkeeping.
pub struct Controller {
    pub id: AgentId,
    pub leaf: String,
    pub state: ControlState,
    chain: HashChain,
    mi: Option<Box<dyn ManagementInterface>>,
    seq_out: BTreeMap<AgentId, u64>,
    seq_in: BTreeMap<AgentId, u64>,
}

impl Controller {
    fn next_seq(&mut self, to: &AgentId) -> u64 {
        let s = self.seq_out.entry(to.clone()).or_insert(0);
        *s += 1;
        *s
    }
}

/// A process hosting many private controllers under one law ensemble.
///
/// Every call processes one event to completion. Whatever the controllers
/// produce (envelopes to route, deliveries to actors, audit records) is
/// appended to an outbox that the owner drains with [`Pool::take_output`].
pub struct Pool {
    cfg: PoolConfig,
    tree: Arc<LawTree>,
    agents: BTreeMap<AgentId, Controller>,
    scheduler: Scheduler,
    out: Vec<Record>,
    clock: f64,
}

impl Pool {
    pub fn new(cfg: PoolConfig, tree: Arc<LawTree>) -> Self {
        Pool { cfg, tree, agents: BTreeMap::new(), scheduler: Scheduler::new(), out: Vec::new(), clock: f64::NEG_INFINITY }
    }

    pub fn name(&self) -> &str {
        &self.cfg.name
    }

    pub fn tree(&self) -> &Arc<LawTree> {
        &self.tree
    }

    pub fn hosts(&self, id: &AgentId) -> bool {
        self.agents.contains_key(id)
    }

    pub fn agents(&self) -> impl Iterator<Item = &Controller> {
        self.agents.values()
    }

    pub fn state(&self, id: &AgentId) -> Option<&ControlState> {
        self.agents.get(id).map(|c| &c.state)
    }

    pub fn leaf_of(&self, id: &AgentId) -> Option<&str> {
        self.agents.get(id).map(|c| c.leaf.as_str())
    }

    pub fn take_output(&mut self) -> Vec<Record> {
        std::mem::take(&mut self.out)
    }

    pub fn next_due(&self) -> Option<f64> {
        self.scheduler.next_due()
    }

    fn advance(&mut self, now: f64) -> f64 {
        self.clock = self.clock.max(now);
        self.clock
    }

    fn authority(&self) -> Option<String> {
        self.tree.root().ast.authority.clone().or_else(|| self.cfg.authority.clone())
    }

    /// Creates a controller for the certified agent under law `leaf`.
    ///
    /// The certificate must verify under the ensemble's CA, and the resolved
    /// `adopted` ruling must record the identity triple; otherwise nothing is
    /// created.
    pub fn adopt(&mut self, cert: &Certificate, leaf: &str, now: f64) -> Result<AgentId, AdoptError> {
        let now = self.advance(now);
        let result = self.try_adopt(cert, leaf, now);
        self.out.push(Record::Adopt {
            t: now,
            agent: cert.triple.clone(),
            law: leaf.to_string(),
            ok: result.is_ok(),
            reason: result.as_ref().err().map(|e| e.to_string()),
        });
        result
    }

    fn try_adopt(&mut self, cert: &Certificate, leaf: &str, now: f64) -> Result<AgentId, AdoptError> {
        let node = self.tree.node(leaf).ok_or_else(|| AdoptError::UnknownLaw(leaf.to_string()))?;
        if self.agents.len() >= self.cfg.capacity {
            return Err(AdoptError::PoolFull);
        }
        if self.agents.contains_key(&cert.triple) {
            return Err(AdoptError::AlreadyAdopted(cert.triple.clone()));
        }
        let key = self.authority().ok_or(AdoptError::NoAuthority)?;
        if !verify_certificate(cert, &key) {
            return Err(AdoptError::BadSignature);
        }
        let id = cert.triple.clone();
        let event = RegulatedEvent::adopted(&id, leaf, now);
        let res = resolve(&self.tree, leaf, &event, &ControlState::new());
        let records_self = res.ruling.ops.iter().any(|op| matches!(op, ControlOp::StateUpdate { name, .. } if name == "self"));
        if !records_self {
            self.journal_event(&event, &res);
            return Err(AdoptError::RefusedByLaw);
        }
        let chain = node.chain();
        self.agents.insert(
            id.clone(),
            Controller {
                id: id.clone(),
                leaf: leaf.to_string(),
                state: ControlState::new(),
                chain,
                mi: None,
                seq_out: BTreeMap::new(),
                seq_in: BTreeMap::new(),
            },
        );
        self.carry_out(&id, &event, res);
        Ok(id)
    }

    /// Gives the agent's controller access to the component's management
    /// interface.
    pub fn register_mi(&mut self, id: &AgentId, mi: Box<dyn ManagementInterface>) -> Result<(), RuntimeError> {
        let c = self.agents.get_mut(id).ok_or_else(|| RuntimeError::UnknownAgent(id.clone()))?;
        c.mi = Some(mi);
        Ok(())
    }

    /// The actor of `from` sends `payload` to `to`. Returns whether the
    /// sender's law forwarded it.
    pub fn send(&mut self, from: &AgentId, to: &AgentId, payload: Payload, now: f64) -> Result<bool, RuntimeError> {
        let now = self.advance(now);
        let leaf = self.leaf_of(from).ok_or_else(|| RuntimeError::UnknownAgent(from.clone()))?.to_string();
        let event = RegulatedEvent::sent(from, &leaf, to, payload, now);
        let res = self.resolve_for(from, &leaf, &event);
        let forwarded = res.ruling.contains("forward");
        self.carry_out(from, &event, res);
        Ok(forwarded)
    }

    /// An envelope arrives for one of this pool's agents.
    pub fn receive(&mut self, env: Envelope, now: f64) {
        let now = self.advance(now);
        let Some(ctl) = self.agents.get(&env.receiver) else {
            self.dead_letter(&env, now, "unknownReceiver");
            return;
        };
        let last = ctl.seq_in.get(&env.source).copied().unwrap_or(0);
        if env.seq <= last {
            self.reject(&env, now, "sequence".into());
            return;
        }
        let leaf = ctl.leaf.clone();
        if let Err(r) = verify_chain(&self.tree, &leaf, &env.hash_chain) {
            self.reject(&env, now, format!("hashChain:{}", r.as_str()));
            return;
        }
        self.agents.get_mut(&env.receiver).expect("checked above").seq_in.insert(env.source.clone(), env.seq);
        let event = RegulatedEvent::arrived(
            &env.receiver,
            &leaf,
            &env.source,
            env.sender_triple.clone(),
            env.payload.clone(),
            env.class,
            env.origin,
            now,
        );
        let res = self.resolve_for(&env.receiver, &leaf, &event);
        self.carry_out(&env.receiver, &event, res);
    }

    /// Fires the earliest obligation due at or before `now`, if any.
    pub fn fire_next(&mut self, now: f64) -> bool {
        let Some(ob) = self.scheduler.pop_due(now) else { return false };
        let now = self.advance(now);
        if let Some(leaf) = self.leaf_of(&ob.agent).map(str::to_string) {
            let event = RegulatedEvent::obligation_due(&ob.agent, &leaf, ob.obligation, now);
            let res = self.resolve_for(&ob.agent, &leaf, &event);
            self.carry_out(&ob.agent, &event, res);
        }
        true
    }

    /// Fires every obligation due at or before `now`, in order.
    pub fn tick(&mut self, now: f64) -> usize {
        let mut n = 0;
        while self.fire_next(now) {
            n += 1;
        }
        n
    }

    fn resolve_for(&self, id: &AgentId, leaf: &str, event: &RegulatedEvent) -> Resolution {
        resolve(&self.tree, leaf, event, &self.agents[id].state)
    }

    fn journal_event(&mut self, event: &RegulatedEvent, res: &Resolution) {
        self.out.push(Record::Event {
            t: event.now,
            agent: event.subject.clone(),
            law: event.law.clone(),
            event: event.kind,
            message: event.message.clone(),
            peer: event.peer.clone(),
            sender: event.sender.clone(),
            class: event.class,
            ruling: res.ruling.clone(),
            filtered: res.filtered.clone(),
            diagnostics: res.diagnostics.clone(),
        });
    }

    fn audit(&mut self, t: f64, actor: Option<AgentId>, kind: AuditKind, detail: serde_json::Value) {
        self.out.push(Record::Audit { record: AuditRecord { t, actor, kind, detail } });
    }

    fn reject(&mut self, env: &Envelope, now: f64, reason: String) {
        self.out.push(Record::Reject {
            t: now,
            agent: env.receiver.clone(),
            source: env.source.clone(),
            seq: env.seq,
            reason: reason.clone(),
        });
        self.audit(
            now,
            Some(env.receiver.clone()),
            AuditKind::Rejection,
            json!({"reason": reason, "source": env.source, "message": env.payload, "seq": env.seq}),
        );
    }

    /// Records an envelope whose receiver is not hosted anywhere.
    pub fn dead_letter(&mut self, env: &Envelope, now: f64, reason: &str) {
        self.audit(
            now,
            Some(env.source.clone()),
            AuditKind::DeadLetter,
            json!({"reason": reason, "receiver": env.receiver, "message": env.payload}),
        );
    }

    fn carry_out(&mut self, id: &AgentId, event: &RegulatedEvent, res: Resolution) {
        let now = event.now;
        self.journal_event(event, &res);
        for f in &res.filtered {
            self.audit(
                now,
                Some(id.clone()),
                AuditKind::FilterEvent,
                json!({"law": event.law, "event": event.kind, "message": event.message, "op": f.op, "by": f.law, "constraint": f.constraint}),
            );
        }
        let ctl = self.agents.get_mut(id).expect("carry_out for a hosted agent");
        let effects = apply_ruling(&res.ruling, event, &mut ctl.state);
        for effect in effects {
            match effect {
                Effect::Forward { to, payload, stamped } => {
                    let env = self.envelope(id, to, payload, stamped, event.class.unwrap_or(MessageClass::B), Origin::Actor, now);
                    self.out.push(Record::Envelope { t: now, envelope: env });
                }
                Effect::Emit { to, payload } => {
                    let env = self.envelope(id, to, payload, true, MessageClass::M, Origin::Controller, now);
                    self.out.push(Record::Envelope { t: now, envelope: env });
                }
                Effect::Deliver { payload, sender } => {
                    self.out.push(Record::Deliver { t: now, agent: id.clone(), payload, sender, class: event.class })
                }
                Effect::Impose { obligation, due } => {
                    self.scheduler.impose(id.clone(), obligation.clone(), due);
                    self.out.push(Record::Obligation { t: now, agent: id.clone(), action: ObligationAction::Impose, obligation, due });
                }
                Effect::Repeal { obligation } => {
                    if self.scheduler.repeal(id, &obligation) > 0 {
                        self.out.push(Record::Obligation {
                            t: now,
                            agent: id.clone(),
                            action: ObligationAction::Repeal,
                            obligation,
                            due: now,
                        });
                    }
                }
                Effect::Audit { kind, detail } => {
                    let detail = json!({
                        "law": event.law,
                        "event": event.kind,
                        "message": event.message,
                        "peer": event.peer,
                        "sender": event.sender,
                        "note": detail,
                    });
                    self.audit(now, Some(id.clone()), kind, detail);
                }
                Effect::QueryMi { requester, form, capability } => self.query_mi(id, requester, form, capability, now),
                Effect::Skipped { .. } => {}
            }
        }
    }

    fn query_mi(&mut self, id: &AgentId, requester: AgentId, form: String, capability: String, now: f64) {
        let ctl = self.agents.get_mut(id).expect("hosted");
        let (reply, available) = match ctl.mi.as_mut() {
            Some(mi) if form == "invoke" => (mi.invoke(&capability), true),
            Some(mi) => (mi.examine(&capability), true),
            None => (None, false),
        };
        self.out.push(Record::Mi {
            t: now,
            agent: id.clone(),
            form: form.clone(),
            capability: capability.clone(),
            reply: reply.clone(),
            available,
        });
        let payload = if !available {
            self.audit(
                now,
                Some(id.clone()),
                AuditKind::Rejection,
                json!({"note": ["noMI", capability], "requester": requester, "form": form}),
            );
            Payload::new("noMI", vec![Value::str(&capability)])
        } else if form == "invoke" {
            Payload::new("done", vec![Value::str(&capability), reply.unwrap_or(Value::Null)])
        } else {
            Payload::new("value", vec![Value::str(&capability), reply.unwrap_or(Value::Null)])
        };
        let env = self.envelope(id, requester, payload, true, MessageClass::M, Origin::Controller, now);
        self.out.push(Record::Envelope { t: now, envelope: env });
    }

    #[allow(clippy::too_many_arguments)]
    fn envelope(
        &mut self,
        from: &AgentId,
        to: AgentId,
        payload: Payload,
        stamped: bool,
        class: MessageClass,
        origin: Origin,
        now: f64,
    ) -> Envelope {
        let ctl = self.agents.get_mut(from).expect("hosted");
        let seq = ctl.next_seq(&to);
        Envelope {
            sender_triple: stamped.then(|| from.clone()),
            source: from.clone(),
            receiver: to,
            payload,
            class,
            origin,
            hash_chain: ctl.chain.clone(),
            seq,
            sent_at: now,
        }
    }
}
