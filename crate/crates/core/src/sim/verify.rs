//! An oracle that recomputes the buyers' and inventory managers' management
//! properties from the raw message flow in a trace, without looking at any
//! controller state, and checks the trace against it.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::config::MisbehaviorScript;
use super::trace::Trace;
use crate::capabilities::audit::AuditKind;
use crate::capabilities::fragments::MANAGER_FORMS;
use crate::engine::{AgentId, Layer, Origin, Payload};
use crate::lang::EventKind;
use crate::runtime::Record;
use crate::value::Value;

const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Verdict {
    pub ok: bool,
    pub records: usize,
    pub examines_checked: usize,
    pub pos_forwarded: usize,
    pub injections: usize,
    /// Injections the oracle considers legitimate at the moment they happened.
    pub benign_injections: usize,
    pub injections_blocked: usize,
    pub injections_flagged: usize,
    pub violations_flagged: usize,
    pub false_positives: usize,
    pub prefix_violations: usize,
    pub bijection_violations: usize,
    pub purview_violations: usize,
    pub unmediated_deliveries: usize,
    /// Final oracle values per buyer.
    pub buyers: BTreeMap<String, BuyerSummary>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BuyerSummary {
    pub budget_in: f64,
    pub spent: f64,
    pub po_count: usize,
    pub completed: usize,
    pub av_delay: Option<f64>,
}

#[derive(Default)]
struct BuyerOracle {
    budget_in: f64,
    spent: f64,
    po_count: usize,
    pending: BTreeMap<String, VecDeque<f64>>,
    delays: Vec<f64>,
}

impl BuyerOracle {
    fn budget(&self) -> f64 {
        self.budget_in - self.spent
    }

    fn av_delay(&self) -> Option<f64> {
        if self.delays.is_empty() {
            return None;
        }
        let mut sum = 0.0;
        for d in &self.delays {
            sum += d;
        }
        Some(sum / self.delays.len() as f64)
    }

    fn complete(&mut self, sku: &str, now: f64) -> bool {
        match self.pending.get_mut(sku).and_then(VecDeque::pop_front) {
            Some(at) => {
                self.delays.push(now - at);
                true
            }
            None => false,
        }
    }
}

struct Pending {
    index: usize,
    agent: AgentId,
    payload: Payload,
    expected_violation: bool,
    decided: bool,
    blocked: bool,
    flagged: bool,
}

fn sku_of(p: &Payload) -> String {
    p.arg(0).map(|v| v.as_str().map_or_else(|| v.canonical(), str::to_string)).unwrap_or_default()
}

fn num_arg(p: &Payload, i: usize) -> f64 {
    p.arg(i).and_then(Value::as_num).unwrap_or(f64::NAN)
}

fn is_buyer(id: &AgentId) -> bool {
    id.layer == Layer::B && id.name.starts_with("buyer")
}

fn matches(expected: Option<f64>, got: &Value) -> bool {
    match (expected, got) {
        (None, Value::Null) => true,
        (Some(e), Value::Num(g)) => (e - g).abs() <= TOLERANCE,
        _ => false,
    }
}

/// Checks `trace` against the independent oracle. `script` is the script the
/// run was driven by; injections are matched to the notes in the trace.
pub fn verify_trace(trace: &Trace, script: &MisbehaviorScript) -> Verdict {
    let window = trace.header.config.laws.inflow_window;
    let mut v = Verdict { records: trace.records.len(), ..Verdict::default() };
    let mut buyers: BTreeMap<AgentId, BuyerOracle> = BTreeMap::new();
    let mut inflow: BTreeMap<AgentId, Vec<f64>> = BTreeMap::new();
    let mut injections: Vec<Pending> = Vec::new();
    let mut last_ruling_delivers: BTreeMap<AgentId, bool> = BTreeMap::new();

    for (i, rec) in trace.records.iter().enumerate() {
        match rec {
            Record::Note { actor: Some(agent), note, data, .. } if note == "inject" => {
                let Some(payload) = data.get("payload").and_then(|p| serde_json::from_value::<Payload>(p.clone()).ok()) else {
                    v.failures.push(format!("record {i}: injection note without payload"));
                    continue;
                };
                let o = buyers.entry(agent.clone()).or_default();
                let amt = num_arg(&payload, 2);
                let requested = o.pending.get(&sku_of(&payload)).is_some_and(|q| !q.is_empty());
                let affordable = amt <= o.budget();
                let expected_violation = !affordable || !requested;
                injections.push(Pending {
                    index: i,
                    agent: agent.clone(),
                    payload,
                    expected_violation,
                    decided: false,
                    blocked: false,
                    flagged: false,
                });
            }
            Record::Event { agent, event: EventKind::Sent, message: Some(m), ruling, .. } => {
                if let Some(p) = injections.iter_mut().find(|p| !p.decided && p.agent == *agent && p.payload == *m) {
                    p.decided = true;
                    p.blocked = !ruling.contains("forward");
                } else if is_buyer(agent) && m.kind == "PO" && !ruling.contains("forward") {
                    v.false_positives += 1;
                    v.failures.push(format!("record {i}: PO from {} blocked without an injection", agent.branch));
                }
            }
            Record::Event { agent, event: EventKind::Arrived, ruling, .. } => {
                last_ruling_delivers.insert(agent.clone(), ruling.contains("deliver"));
            }
            Record::Audit { record } if record.kind == AuditKind::Violation => {
                v.violations_flagged += 1;
                let msg = record.detail.get("message").and_then(|m| serde_json::from_value::<Payload>(m.clone()).ok());
                let actor = record.actor.clone();
                let hit = injections
                    .iter_mut()
                    .find(|p| p.decided && !p.flagged && Some(&p.agent) == actor.as_ref() && Some(&p.payload) == msg.as_ref());
                match hit {
                    Some(p) => p.flagged = true,
                    None => {
                        v.false_positives += 1;
                        v.failures.push(format!("record {i}: violation flagged without an injection"));
                    }
                }
            }
            Record::Deliver { t, agent, payload, sender, class } => {
                if !last_ruling_delivers.remove(agent).unwrap_or(false) {
                    v.unmediated_deliveries += 1;
                    v.failures.push(format!("record {i}: delivery to {:?} without a delivering ruling", agent.name));
                }
                if MANAGER_FORMS.contains(&payload.kind.as_str()) {
                    let ok = sender.as_ref().is_some_and(|s| s.layer == Layer::M && s.branch == agent.branch);
                    if !ok {
                        v.purview_violations += 1;
                        v.failures.push(format!("record {i}: {} delivered to {:?} from outside its purview", payload.kind, agent.name));
                    }
                }
                if class.map(|c| c.as_str()) == Some("b") {
                    inflow.entry(agent.clone()).or_default().push(*t);
                }
                if is_buyer(agent) {
                    let o = buyers.entry(agent.clone()).or_default();
                    match payload.kind.as_str() {
                        "budget" => o.budget_in += num_arg(payload, 0),
                        "purchaseRequest" => o.pending.entry(sku_of(payload)).or_default().push_back(*t),
                        _ => {}
                    }
                }
            }
            Record::Envelope { t, envelope: env } if env.origin == Origin::Actor && is_buyer(&env.source) => {
                let o = buyers.entry(env.source.clone()).or_default();
                match env.payload.kind.as_str() {
                    "PO" => {
                        v.pos_forwarded += 1;
                        o.po_count += 1;
                        o.spent += num_arg(&env.payload, 2);
                        if !o.complete(&sku_of(&env.payload), *t) {
                            v.bijection_violations += 1;
                            v.failures.push(format!("record {i}: PO for {} matches no pending request", sku_of(&env.payload)));
                        }
                        if o.spent > o.budget_in {
                            v.prefix_violations += 1;
                            v.failures.push(format!("record {i}: {} spent {} of {} received", env.source.branch, o.spent, o.budget_in));
                        }
                    }
                    "reject" => {
                        o.complete(&sku_of(&env.payload), *t);
                    }
                    _ => {}
                }
            }
            Record::Envelope { envelope: env, .. } if env.origin == Origin::Controller && env.payload.kind == "value" => {
                let Some(prop) = env.payload.arg(0).and_then(Value::as_str) else { continue };
                let got = env.payload.arg(1).cloned().unwrap_or_default();
                let expected = if is_buyer(&env.source) {
                    let o = buyers.entry(env.source.clone()).or_default();
                    match prop {
                        "budget" => Some(Some(o.budget())),
                        "POcount" => Some(Some(o.po_count as f64)),
                        "avDelay" => Some(o.av_delay()),
                        "inflow" => None,
                        _ => continue,
                    }
                } else {
                    None
                };
                let expected = match (expected, prop) {
                    (Some(e), _) => e,
                    (None, "inflow") => {
                        let since = env.sent_at - window;
                        Some(inflow.get(&env.source).map_or(0, |ts| ts.iter().filter(|x| **x > since).count()) as f64)
                    }
                    _ => continue,
                };
                v.examines_checked += 1;
                if !matches(expected, &got) {
                    v.failures.push(format!(
                        "record {i}: {prop} of {}/{} is {} but the oracle says {:?}",
                        env.source.name,
                        env.source.branch,
                        got.canonical(),
                        expected
                    ));
                }
            }
            _ => {}
        }
    }

    v.injections = injections.len();
    if v.injections != script.injections.len() {
        v.failures.push(format!("{} injections scripted but {} found in the trace", script.injections.len(), v.injections));
    }
    for p in &injections {
        if !p.expected_violation {
            v.benign_injections += 1;
            continue;
        }
        if p.blocked {
            v.injections_blocked += 1;
        } else {
            v.failures.push(format!("record {}: injected {} was not blocked", p.index, p.payload));
        }
        if p.flagged {
            v.injections_flagged += 1;
        } else {
            v.failures.push(format!("record {}: injected {} was not flagged", p.index, p.payload));
        }
    }
    v.buyers = buyers
        .iter()
        .map(|(id, o)| {
            let s = BuyerSummary {
                budget_in: o.budget_in,
                spent: o.spent,
                po_count: o.po_count,
                completed: o.delays.len(),
                av_delay: o.av_delay(),
            };
            (id.branch.clone(), s)
        })
        .collect();
    v.ok = v.failures.is_empty();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::{Injection, Misbehavior, ScenarioConfig};
    use crate::sim::run::run_scenario;

    #[test]
    fn clean_run_verifies() {
        let script = MisbehaviorScript::default();
        let t = run_scenario(&ScenarioConfig::demo(), 3, 300.0, &script).unwrap();
        let v = verify_trace(&t, &script);
        assert!(v.ok, "{:#?}", v.failures);
        assert!(v.examines_checked > 50);
        assert_eq!(v.violations_flagged, 0);
        assert!(v.pos_forwarded > 5);
    }

    #[test]
    fn injections_are_blocked_and_flagged() {
        let script = MisbehaviorScript {
            injections: vec![
                Injection { time: 40.0, buyer: "store7".into(), kind: Misbehavior::Overspend { amount: 1e7 } },
                Injection { time: 41.0, buyer: "store9".into(), kind: Misbehavior::UnrequestedPO { sku: "caviar".into() } },
            ],
        };
        let t = run_scenario(&ScenarioConfig::demo(), 3, 100.0, &script).unwrap();
        let v = verify_trace(&t, &script);
        assert!(v.ok, "{:#?}", v.failures);
        assert_eq!((v.injections_blocked, v.injections_flagged, v.violations_flagged), (2, 2, 2));
    }

    #[test]
    fn tampered_reply_is_caught() {
        let script = MisbehaviorScript::default();
        let mut t = run_scenario(&ScenarioConfig::demo(), 3, 60.0, &script).unwrap();
        let idx = t
            .records
            .iter()
            .position(|r| matches!(r, Record::Envelope { envelope, .. } if envelope.payload.kind == "value" && envelope.payload.args[0] == Value::str("budget")))
            .unwrap();
        if let Record::Envelope { envelope, .. } = &mut t.records[idx] {
            envelope.payload.args[1] = Value::Num(123456.0);
        }
        let v = verify_trace(&t, &script);
        assert!(!v.ok);
        assert!(v.failures[0].starts_with(&format!("record {idx}:")));
    }
}
