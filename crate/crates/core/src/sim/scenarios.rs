//! Small, fully scripted Acme episodes driven directly against the mediated
//! system, with no simulated actors. Each returns counts computed from the
//! records it produced so callers can check them against expectations.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{ManagerConfig, MisbehaviorScript, ScenarioConfig};
use super::laws;
use super::trace::{Trace, TraceHeader};
use super::verify::{verify_trace, Verdict};
use super::world::{manager_id, AcmeWorld, BranchAgents};
use crate::capabilities::audit::AuditKind;
use crate::engine::{AgentId, ControlOp, Layer, Payload};
use crate::hierarchy::build_ensemble;
use crate::lang::{render, EventKind, LawSource};
use crate::runtime::{Pool, PoolConfig, Record};
use crate::value::Value;

/// A world plus a clock that advances by one unit per message.
pub struct Harness {
    pub world: AcmeWorld,
    pub t: f64,
    pub records: Vec<Record>,
}

impl Harness {
    pub fn new(world: AcmeWorld) -> Self {
        let mut h = Harness { world, t: 0.0, records: Vec::new() };
        h.records = h.world.system.take_records();
        h
    }

    pub fn demo() -> anyhow::Result<Self> {
        Ok(Self::new(AcmeWorld::build(&ScenarioConfig::demo())?))
    }

    /// Sends one message and returns whether the sender's law forwarded it,
    /// along with the records it produced.
    pub fn send(&mut self, from: &AgentId, to: &AgentId, payload: Payload) -> anyhow::Result<(bool, Vec<Record>)> {
        self.t += 1.0;
        let fwd = self.world.system.send(from, to, payload, self.t)?;
        let recs = self.world.system.take_records();
        self.records.extend(recs.iter().cloned());
        Ok((fwd, recs))
    }

    pub fn store7(&self) -> BranchAgents {
        self.world.branches[0].clone()
    }
}

fn msg(kind: &str, args: Vec<Value>) -> Payload {
    Payload::new(kind, args)
}

fn s(x: &str) -> Value {
    Value::str(x)
}

/// Payloads delivered to `agent` among `recs`.
pub fn deliveries<'a>(recs: &'a [Record], agent: &AgentId) -> Vec<&'a Payload> {
    recs.iter()
        .filter_map(|r| match r {
            Record::Deliver { agent: a, payload, .. } if a == agent => Some(payload),
            _ => None,
        })
        .collect()
}

fn audits_of(recs: &[Record], kind: AuditKind) -> usize {
    recs.iter().filter(|r| matches!(r, Record::Audit { record } if record.kind == kind)).count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PoCountOutcome {
    pub n: usize,
    /// PO envelopes the buyer's controller actually dispatched.
    pub forwarded: usize,
    /// What the buyer's law answered to `examine("POcount")`.
    pub reported: Option<f64>,
    /// The trace oracle's judgement of the whole episode.
    pub verdict: Verdict,
}

/// `n` requested and affordable purchase orders, then one examination.
pub fn po_count(n: usize) -> anyhow::Result<PoCountOutcome> {
    let mut h = Harness::demo()?;
    let b = h.store7();
    let vendor = h.world.vendors[0].clone();
    let mgr = h.world.managers[0].clone();
    h.send(&b.buo, &b.buyer, msg("budget", vec![Value::Num(1e6)]))?;
    for i in 0..n {
        h.send(&b.inm, &b.buyer, msg("purchaseRequest", vec![s("milk"), Value::Num(1.0)]))?;
        h.send(&b.buyer, &vendor, msg("PO", vec![s("milk"), Value::Num(1.0), Value::Num(1.0 + i as f64)]))?;
    }
    let (_, recs) = h.send(&mgr, &b.buyer, msg("examine", vec![s("POcount")]))?;
    let forwarded = h
        .records
        .iter()
        .filter(|r| matches!(r, Record::Envelope { envelope, .. } if envelope.source == b.buyer && envelope.payload.kind == "PO"))
        .count();
    let reported = deliveries(&recs, &mgr).into_iter().find(|p| p.kind == "value").and_then(|p| p.arg(1)).and_then(Value::as_num);
    let trace = Trace {
        header: TraceHeader { seed: 0, horizon: h.t, config: ScenarioConfig::demo(), script: MisbehaviorScript::default() },
        records: h.records.clone(),
    };
    let verdict = verify_trace(&trace, &MisbehaviorScript::default());
    Ok(PoCountOutcome { n, forwarded, reported, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RemoveOutcome {
    pub acquired: bool,
    pub removed: bool,
    /// Base-class messages attempted in both directions while removed.
    pub attempted: usize,
    pub delivered: usize,
    /// Reply to `examine("inflow")` while removed.
    pub inflow_reply: Option<Payload>,
    /// Whether traffic flows again after `restore`.
    pub restored_delivery: bool,
}

/// Removes the store's inventory manager, exchanges `per_direction`
/// base-class messages each way with its buyer, examines it, then restores it.
pub fn remove_semantics(per_direction: usize) -> anyhow::Result<RemoveOutcome> {
    let mut h = Harness::demo()?;
    let b = h.store7();
    let mgr = h.world.managers[0].clone();
    let (_, r) = h.send(&mgr, &b.inm, msg("acquire", vec![s("remove")]))?;
    let mut acquired = deliveries(&r, &mgr).iter().any(|p| p.kind == "granted");
    let (_, r) = h.send(&mgr, &b.inm, msg("acquire", vec![s("restore")]))?;
    acquired &= deliveries(&r, &mgr).iter().any(|p| p.kind == "granted");
    let (_, r) = h.send(&mgr, &b.inm, msg("invoke", vec![s("remove")]))?;
    let removed = deliveries(&r, &mgr).iter().any(|p| p.kind == "done");
    let mut delivered = 0;
    for i in 0..per_direction {
        let (_, r) = h.send(&b.inm, &b.buyer, msg("purchaseRequest", vec![s("milk"), Value::Num(1.0)]))?;
        delivered += deliveries(&r, &b.buyer).len();
        let (_, r) = h.send(&b.buyer, &b.inm, msg("ack", vec![Value::Num(i as f64)]))?;
        delivered += deliveries(&r, &b.inm).len();
    }
    let (_, r) = h.send(&mgr, &b.inm, msg("examine", vec![s("inflow")]))?;
    let inflow_reply = deliveries(&r, &mgr).into_iter().next().cloned();
    h.send(&mgr, &b.inm, msg("invoke", vec![s("restore")]))?;
    let (_, r) = h.send(&b.inm, &b.buyer, msg("purchaseRequest", vec![s("milk"), Value::Num(1.0)]))?;
    let restored_delivery = !deliveries(&r, &b.buyer).is_empty();
    Ok(RemoveOutcome { acquired, removed, attempted: 2 * per_direction, delivered, inflow_reply, restored_delivery })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GateCount {
    pub sent: usize,
    pub rejected: usize,
    pub delivered: usize,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HashGateOutcome {
    /// Sender runs an altered buyer law under the genuine root.
    pub tampered_leaf: GateCount,
    /// Sender runs under an altered root law.
    pub foreign_root: GateCount,
    /// The genuine buyer, for comparison.
    pub honest: GateCount,
}

fn gate_count(recs: &[Record], source: &AgentId, receiver: &AgentId, sent: usize) -> GateCount {
    let mut c = GateCount { sent, ..GateCount::default() };
    for r in recs {
        match r {
            Record::Reject { agent, source: src, reason, .. } if src == source && agent == receiver => {
                c.rejected += 1;
                if !c.reasons.contains(reason) {
                    c.reasons.push(reason.clone());
                }
            }
            Record::Deliver { agent, sender: Some(snd), .. } if agent == receiver && snd == source => c.delivered += 1,
            _ => {}
        }
    }
    c
}

/// `n` base-class messages to the store's inventory manager from each of
/// three senders whose pools hold differently altered ensembles.
pub fn hash_gate(n: usize) -> anyhow::Result<HashGateOutcome> {
    let cfg = ScenarioConfig::demo();
    let mut h = Harness::demo()?;
    let params = cfg.law_params(&h.world.ca.public_hex());
    let build = |sources: Vec<LawSource>| -> anyhow::Result<_> {
        Ok(Arc::new(build_ensemble(&sources).map_err(|d| anyhow::anyhow!("{}", render(&d)))?))
    };
    let mut tampered = laws::ensemble(&params);
    tampered[3] = LawSource::new("buyer", Some("B"), format!("UPON sent(bypass(...)) DO [forward];\n{}", laws::law_buyer(&params)));
    let mut foreign = laws::ensemble(&params);
    foreign[0] = LawSource::new("G", None, format!("{}UPON sent(bypass(...)) DO [prefixSender, forward];\n", laws::law_g(&params)));
    let sys = &mut h.world.system;
    let tp = sys.add_pool(Pool::new(PoolConfig::new("tampered"), build(tampered)?));
    let fp = sys.add_pool(Pool::new(PoolConfig::new("foreign"), build(foreign)?));
    let t_id = AgentId::new("buyerT", "store7", Layer::B);
    let f_id = AgentId::new("buyerF", "store7", Layer::B);
    h.world.adopt(tp, &t_id, "buyer")?;
    h.world.adopt(fp, &f_id, "buyer")?;
    let b = h.store7();
    for i in 0..n {
        for from in [&t_id, &f_id, &b.buyer] {
            h.send(from, &b.inm, msg("ack", vec![Value::Num(i as f64)]))?;
        }
    }
    Ok(HashGateOutcome {
        tampered_leaf: gate_count(&h.records, &t_id, &b.inm, n),
        foreign_root: gate_count(&h.records, &f_id, &b.inm, n),
        honest: gate_count(&h.records, &b.buyer, &b.inm, n),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FilteringOutcome {
    pub strip_attempts: usize,
    /// `stripSender` operations removed by a superior law.
    pub strip_filtered: usize,
    /// Envelopes from the rogue agent that left without a sender triple.
    pub unstamped_envelopes: usize,
    pub purview_attempts: usize,
    /// `forward` and `emit` operations toward the outsider that were removed.
    pub purview_filtered: usize,
    pub outsider_deliveries: usize,
    /// Examinations by the agent's own manager that were still answered.
    pub examines_answered: usize,
    /// Every removed operation produced exactly one `filterEvent` audit.
    pub filtered_ops: usize,
    pub filter_audits: usize,
}

/// A buyer running a leaf law that tries to strip its sender triple and to
/// reach a manager of another branch, `n` times each.
pub fn conformance_filtering(n: usize) -> anyhow::Result<FilteringOutcome> {
    let cfg = ScenarioConfig::demo();
    let ca = crate::runtime::CertAuthority::deterministic(&cfg.ca_label);
    let params = cfg.law_params(&ca.public_hex());
    let outsider = manager_id("mgr9", "store9");
    let sources = laws::ensemble_with_leaf(&params, "rogueBuyer", laws::law_malicious_buyer(&params, &outsider));
    let mut h = Harness::new(AcmeWorld::build_with(&cfg, ca, &sources)?);
    let rogue = AgentId::new("buyerX", "store7", Layer::B);
    h.world.adopt(0, &rogue, "rogueBuyer")?;
    h.records.extend(h.world.system.take_records());
    let vendor = h.world.vendors[0].clone();
    let mgr = h.world.managers[0].clone();
    let mut examines_answered = 0;
    for i in 0..n {
        h.send(&rogue, &vendor, msg("ack", vec![Value::Num(i as f64)]))?;
        h.send(&rogue, &outsider, msg("hello", vec![Value::Num(i as f64)]))?;
        let (_, r) = h.send(&mgr, &rogue, msg("examine", vec![s("budget")]))?;
        examines_answered += deliveries(&r, &mgr).iter().filter(|p| p.kind == "value").count();
    }
    let mut out = FilteringOutcome {
        strip_attempts: n,
        strip_filtered: 0,
        unstamped_envelopes: 0,
        purview_attempts: 2 * n,
        purview_filtered: 0,
        outsider_deliveries: deliveries(&h.records, &outsider).len(),
        examines_answered,
        filtered_ops: 0,
        filter_audits: audits_of(&h.records, AuditKind::FilterEvent),
    };
    for r in &h.records {
        match r {
            Record::Event { agent, filtered, peer, .. } if *agent == rogue => {
                out.filtered_ops += filtered.len();
                for f in filtered {
                    match &f.op {
                        ControlOp::StripSender => out.strip_filtered += 1,
                        ControlOp::Forward if peer.as_ref() == Some(&outsider) => out.purview_filtered += 1,
                        ControlOp::Emit { target, .. } if *target == outsider => out.purview_filtered += 1,
                        _ => {}
                    }
                }
            }
            Record::Event { filtered, .. } => out.filtered_ops += filtered.len(),
            Record::Envelope { envelope, .. } if envelope.source == rogue && envelope.sender_triple.is_none() => {
                out.unstamped_envelopes += 1
            }
            _ => {}
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CoordinationOutcome {
    pub seed: u64,
    /// The second operator's acquire while the first holds the token.
    pub second_acquire_refused: bool,
    /// Guarded invocations by the second operator, none of which holds a token.
    pub attempts_without_token: usize,
    pub denied: usize,
    /// Invocations by the token-less operator that reached the component.
    pub reached_component: usize,
    /// `done` replies received by the holder and by the other operator.
    pub holder_done: usize,
    pub other_done: usize,
    /// Messages sent by manager agents and `managerMsg` audits recorded.
    pub manager_messages: usize,
    pub manager_audits: usize,
    /// Each manager message produced exactly one audit naming that message.
    pub exactly_once: bool,
    /// Component's `blocked` flag agrees with the holder's last operation.
    pub state_consistent: bool,
}

/// Two operators of one branch race over the inventory manager's `remove`
/// and `restore` under an interleaving drawn from `seed`.
pub fn coordination(seed: u64) -> anyhow::Result<CoordinationOutcome> {
    let mut cfg = ScenarioConfig::demo();
    cfg.managers.push(ManagerConfig {
        name: "ops7".into(),
        branch: "store7".into(),
        role: "operator".into(),
        examine_every: None,
        subscribe: Vec::new(),
    });
    let mut h = Harness::new(AcmeWorld::build(&cfg)?);
    let b = h.store7();
    let a = manager_id("mgr7", "store7");
    let other = manager_id("ops7", "store7");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    h.send(&a, &b.inm, msg("acquire", vec![s("remove")]))?;
    h.send(&a, &b.inm, msg("acquire", vec![s("restore")]))?;
    let (_, r) = h.send(&other, &b.inm, msg("acquire", vec![s("remove")]))?;
    let second_acquire_refused = deliveries(&r, &other).iter().any(|p| p.kind == "refused");

    let mut a_ops: Vec<&str> = (0..rng.gen_range(2..6)).map(|_| if rng.gen_bool(0.5) { "remove" } else { "restore" }).collect();
    let mut b_ops: Vec<&str> = (0..rng.gen_range(2..6)).map(|_| if rng.gen_bool(0.5) { "remove" } else { "restore" }).collect();
    a_ops.reverse();
    b_ops.reverse();
    let mut attempts = 0;
    let mut denied = 0;
    let mut last_a: Option<&str> = None;
    while !a_ops.is_empty() || !b_ops.is_empty() {
        let pick_a = !a_ops.is_empty() && (b_ops.is_empty() || rng.gen_bool(0.5));
        if pick_a {
            let op = a_ops.pop().expect("non-empty");
            h.send(&a, &b.inm, msg("invoke", vec![s(op)]))?;
            last_a = Some(op);
        } else {
            let op = b_ops.pop().expect("non-empty");
            attempts += 1;
            let (fwd, r) = h.send(&other, &b.inm, msg("invoke", vec![s(op)]))?;
            let audited = r.iter().any(|r| {
                matches!(r, Record::Audit { record } if record.kind == AuditKind::ManagerMsg
                    && record.actor.as_ref() == Some(&other)
                    && record.detail.get("note") == Some(&serde_json::json!(["denied", "token"])))
            });
            if !fwd && audited {
                denied += 1;
            }
        }
    }
    let blocked = h.world.system.state(&b.inm).map(|st| st.num("blocked")).unwrap_or(0.0);
    let state_consistent = match last_a {
        Some("remove") => blocked == 1.0,
        _ => blocked == 0.0,
    };
    h.send(&a, &b.inm, msg("release", vec![s("remove")]))?;
    h.send(&a, &b.inm, msg("release", vec![s("restore")]))?;

    let reached_component = h
        .records
        .iter()
        .filter(|r| {
            matches!(r, Record::Event { agent, event: EventKind::Arrived, sender: Some(snd), message: Some(m), .. }
                if *agent == b.inm && *snd == other && m.kind == "invoke")
        })
        .count();
    let done_for = |who: &AgentId| deliveries(&h.records, who).iter().filter(|p| p.kind == "done").count();

    let mut manager_messages = 0;
    let mut exactly_once = true;
    for m in [&a, &other] {
        let sent: Vec<&Payload> = h
            .records
            .iter()
            .filter_map(|r| match r {
                Record::Event { agent, event: EventKind::Sent, message: Some(p), .. } if agent == m => Some(p),
                _ => None,
            })
            .collect();
        let audited: Vec<serde_json::Value> = h
            .records
            .iter()
            .filter_map(|r| match r {
                Record::Audit { record } if record.kind == AuditKind::ManagerMsg && record.actor.as_ref() == Some(m) => {
                    record.detail.get("message").cloned()
                }
                _ => None,
            })
            .collect();
        let sent_json: Vec<serde_json::Value> = sent.iter().map(|p| serde_json::to_value(p).expect("payloads serialize")).collect();
        exactly_once &= sent_json == audited;
        manager_messages += sent.len();
    }
    Ok(CoordinationOutcome {
        seed,
        second_acquire_refused,
        attempts_without_token: attempts,
        denied,
        reached_component,
        holder_done: done_for(&a),
        other_done: done_for(&other),
        manager_messages,
        manager_audits: audits_of(&h.records, AuditKind::ManagerMsg),
        exactly_once,
        state_consistent,
    })
}
