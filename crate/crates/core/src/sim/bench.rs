//! Per-event mediation latency under the Acme laws.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{MisbehaviorScript, ScenarioConfig};
use super::run::Simulation;
use super::world::{manager_id, AcmeWorld};
use crate::engine::{apply_ruling, AgentId, ControlState, MessageClass, Origin, Payload, RegulatedEvent};
use crate::hierarchy::resolve;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LatencyReport {
    pub events: usize,
    pub median_ns: u64,
    pub p90_ns: u64,
    pub p99_ns: u64,
    pub mean_ns: u64,
    pub max_ns: u64,
}

fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

/// Times `resolve` plus `apply_ruling` for `events` regulated events drawn
/// from a fixed mix of Acme traffic, on control states warmed up by a short
/// simulated run.
pub fn mediation_latency(events: usize) -> anyhow::Result<LatencyReport> {
    let cfg = ScenarioConfig::demo();
    let world = AcmeWorld::build(&cfg)?;
    let tree = world.tree.clone();
    let b = world.branches[0].clone();
    let vendor = world.vendors[0].clone();
    let mgr = manager_id(&cfg.managers[0].name, &cfg.managers[0].branch);
    let mut sim = Simulation::new(world, cfg, 1, MisbehaviorScript::default());
    sim.advance(200.0);
    let snapshot = |id: &AgentId| sim.world().system.state(id).cloned().unwrap_or_default();
    let mut buyer_state = snapshot(&b.buyer);
    let mut inm_state = snapshot(&b.inm);
    let mut mgr_state = snapshot(&mgr);
    buyer_state.set("budget", Value::Num(1e12));

    let s = |x: &str| Value::str(x);
    let n = Value::Num;
    let mut samples = Vec::with_capacity(events);
    let mut now = 200.0;
    for i in 0..events {
        now += 0.01;
        let (subject, law, event, state): (&AgentId, &str, RegulatedEvent, &mut ControlState) = match i % 8 {
            0 => {
                let p = Payload::new("purchaseRequest", vec![s("milk"), n(1.0)]);
                let e = RegulatedEvent::arrived(&b.buyer, "buyer", &b.inm, Some(b.inm.clone()), p, MessageClass::B, Origin::Actor, now);
                (&b.buyer, "buyer", e, &mut buyer_state)
            }
            1 => {
                let p = Payload::new("budget", vec![n(2.0)]);
                let e = RegulatedEvent::arrived(&b.buyer, "buyer", &b.buo, Some(b.buo.clone()), p, MessageClass::B, Origin::Actor, now);
                (&b.buyer, "buyer", e, &mut buyer_state)
            }
            2 => {
                let p = Payload::new("PO", vec![s("milk"), n(1.0), n(2.0)]);
                (&b.buyer, "buyer", RegulatedEvent::sent(&b.buyer, "buyer", &vendor, p, now), &mut buyer_state)
            }
            3 => {
                let p = Payload::new("examine", vec![s("budget")]);
                let e = RegulatedEvent::arrived(&b.buyer, "buyer", &mgr, Some(mgr.clone()), p, MessageClass::M, Origin::Actor, now);
                (&b.buyer, "buyer", e, &mut buyer_state)
            }
            4 => {
                let p = Payload::new("shipment", vec![s("milk"), n(1.0)]);
                let e = RegulatedEvent::arrived(&b.inm, "B", &vendor, Some(vendor.clone()), p, MessageClass::B, Origin::Actor, now);
                (&b.inm, "B", e, &mut inm_state)
            }
            5 => {
                let p = Payload::new("examine", vec![s("inflow")]);
                let e = RegulatedEvent::arrived(&b.inm, "B", &mgr, Some(mgr.clone()), p, MessageClass::M, Origin::Actor, now);
                (&b.inm, "B", e, &mut inm_state)
            }
            6 => {
                let p = Payload::new("examine", vec![s("POcount")]);
                (&mgr, "M", RegulatedEvent::sent(&mgr, "M", &b.buyer, p, now), &mut mgr_state)
            }
            _ => {
                let p = Payload::new("examine", vec![s("POcount")]);
                let e = RegulatedEvent::arrived(&b.buyer, "buyer", &mgr, Some(mgr.clone()), p, MessageClass::M, Origin::Actor, now);
                (&b.buyer, "buyer", e, &mut buyer_state)
            }
        };
        let _ = subject;
        let start = Instant::now();
        let res = resolve(&tree, law, &event, state);
        let effects = apply_ruling(&res.ruling, &event, state);
        let elapsed = start.elapsed();
        std::hint::black_box(effects);
        samples.push(elapsed.as_nanos() as u64);
    }
    let mean = if samples.is_empty() { 0 } else { samples.iter().sum::<u64>() / samples.len() as u64 };
    samples.sort_unstable();
    Ok(LatencyReport {
        events,
        median_ns: percentile(&samples, 0.5),
        p90_ns: percentile(&samples, 0.9),
        p99_ns: percentile(&samples, 0.99),
        mean_ns: mean,
        max_ns: samples.last().copied().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    #[test]
    fn small_run_reports_sane_percentiles() {
        let r = super::mediation_latency(800).unwrap();
        assert_eq!(r.events, 800);
        assert!(r.median_ns > 0 && r.median_ns <= r.p90_ns && r.p90_ns <= r.p99_ns && r.p99_ns <= r.max_ns);
    }
}
