//! Acceptance suite. Prints one `PASS` or `FAIL` line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use gbm_core::engine::evaluate;
use gbm_core::runtime::Record;
use gbm_core::sim::bench::mediation_latency;
use gbm_core::sim::scenarios::{conformance_filtering, coordination, hash_gate, po_count, remove_semantics};
use gbm_core::sim::{run_scenario, verify_trace, Injection, Misbehavior, MisbehaviorScript, ScenarioConfig, Trace};
use gbm_core::Value;
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn evaluation_purity() -> Outcome {
    const CASES: u32 = 1000;
    let started = Instant::now();
    let mut runner = TestRunner::new(Config { cases: CASES, failure_persistence: None, ..Config::default() });
    let strategy = (common::law(), common::event(), common::state());
    runner
        .run(&strategy, |(law, event, state)| {
            let before = state.clone();
            let first = evaluate(&law, &event, &state);
            let copy = state.clone();
            let second = evaluate(&law, &event, &copy);
            proptest::prop_assert_eq!(&first, &second);
            proptest::prop_assert_eq!(&state, &before);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let took = started.elapsed();
    check(took < Duration::from_secs(30), format!("{CASES} (law, event, state) triples in {:.2} s", took.as_secs_f64()))
}

fn po_count_reproduction() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for n in [0, 1, 3, 17] {
        let o = po_count(n).map_err(|e| e.to_string())?;
        let exact = o.reported == Some(n as f64) && o.forwarded == n && o.verdict.ok;
        ok &= exact;
        parts.push(format!("n={n} examine={:?} trace={} oracle={}", o.reported, o.forwarded, o.verdict.ok));
    }
    check(ok, parts.join(", "))
}

fn remove() -> Outcome {
    let o = remove_semantics(50).map_err(|e| e.to_string())?;
    let answered = matches!(&o.inflow_reply, Some(p) if p.kind == "value" && p.arg(0) == Some(&Value::str("inflow")));
    check(
        o.acquired && o.removed && o.attempted == 100 && o.delivered == 0 && answered && o.restored_delivery,
        format!(
            "{} of {} b-messages delivered while removed, examine reply {:?}, traffic after restore {}",
            o.delivered, o.attempted, o.inflow_reply, o.restored_delivery
        ),
    )
}

fn run(seed: u64, script: &MisbehaviorScript) -> Result<Trace, String> {
    run_scenario(&ScenarioConfig::demo(), seed, 400.0, script).map_err(|e| e.to_string())
}

fn budget() -> Outcome {
    let script = MisbehaviorScript {
        injections: [(30.0, "store7", 5e5), (95.0, "store9", 2e6), (170.0, "store7", 7e5), (260.0, "store9", 1e7)]
            .into_iter()
            .map(|(time, b, amount)| Injection { time, buyer: b.into(), kind: Misbehavior::Overspend { amount } })
            .collect(),
    };
    let v = verify_trace(&run(42, &script)?, &script);
    let clean = verify_trace(&run(42, &MisbehaviorScript::default())?, &MisbehaviorScript::default());
    let expected = v.injections - v.benign_injections;
    check(
        v.ok && expected == 4
            && v.injections_blocked == expected
            && v.injections_flagged == expected
            && v.prefix_violations == 0
            && clean.ok
            && clean.violations_flagged == 0
            && clean.prefix_violations == 0,
        format!(
            "{}/{} overspends blocked, {} flagged, prefix violations {}, clean run flagged {}",
            v.injections_blocked,
            expected,
            v.injections_flagged,
            v.prefix_violations + clean.prefix_violations,
            clean.violations_flagged
        ),
    )
}

fn unrequested() -> Outcome {
    let script = MisbehaviorScript {
        injections: [(25.0, "store7", "caviar"), (120.0, "store9", "truffles"), (300.0, "store7", "saffron")]
            .into_iter()
            .map(|(time, b, sku)| Injection { time, buyer: b.into(), kind: Misbehavior::UnrequestedPO { sku: sku.into() } })
            .collect(),
    };
    let v = verify_trace(&run(7, &script)?, &script);
    let clean = verify_trace(&run(7, &MisbehaviorScript::default())?, &MisbehaviorScript::default());
    check(
        v.ok && v.injections == 3
            && v.injections_blocked == 3
            && v.injections_flagged == 3
            && clean.ok
            && clean.bijection_violations == 0
            && clean.pos_forwarded > 0,
        format!(
            "{}/{} unrequested POs blocked and {} flagged, clean run {} POs with {} unmatched",
            v.injections_blocked, v.injections, v.injections_flagged, clean.pos_forwarded, clean.bijection_violations
        ),
    )
}

fn av_delay() -> Outcome {
    let mut replies = 0;
    for seed in 1..=10 {
        let trace = run(seed, &MisbehaviorScript::default())?;
        let v = verify_trace(&trace, &MisbehaviorScript::default());
        if !v.ok {
            return Err(format!("seed {seed}: {:?}", v.failures.first()));
        }
        let numeric = trace
            .records
            .iter()
            .filter(|r| {
                matches!(r, Record::Envelope { envelope, .. }
                    if envelope.payload.kind == "value"
                        && envelope.payload.arg(0) == Some(&Value::str("avDelay"))
                        && matches!(envelope.payload.arg(1), Some(Value::Num(_))))
            })
            .count();
        if numeric == 0 {
            return Err(format!("seed {seed}: no numeric avDelay answered"));
        }
        replies += numeric;
    }
    Ok(format!("{replies} avDelay answers over 10 seeds equal the oracle mean within 1e-9"))
}

fn gate() -> Outcome {
    let o = hash_gate(100).map_err(|e| e.to_string())?;
    let all = |g: &gbm_core::sim::scenarios::GateCount| g.sent > 0 && g.rejected == g.sent && g.delivered == 0;
    check(
        all(&o.tampered_leaf) && all(&o.foreign_root) && o.honest.sent > 0 && o.honest.rejected == 0,
        format!(
            "tampered leaf {}/{} rejected, foreign root {}/{} rejected, shared ensemble {}/{} rejected",
            o.tampered_leaf.rejected, o.tampered_leaf.sent, o.foreign_root.rejected, o.foreign_root.sent, o.honest.rejected, o.honest.sent
        ),
    )
}

fn filtering() -> Outcome {
    let o = conformance_filtering(50).map_err(|e| e.to_string())?;
    check(
        o.strip_attempts > 0
            && o.strip_filtered == o.strip_attempts
            && o.unstamped_envelopes == 0
            && o.purview_attempts > 0
            && o.purview_filtered == o.purview_attempts
            && o.outsider_deliveries == 0
            && o.filter_audits == o.filtered_ops,
        format!(
            "sender stripping {}/{} filtered, out-of-purview {}/{} filtered, {} filter events audited for {} filtered ops",
            o.strip_filtered, o.strip_attempts, o.purview_filtered, o.purview_attempts, o.filter_audits, o.filtered_ops
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bin = Path::new(env!("CARGO_BIN_EXE_gbm"));
    let mut files = Vec::new();
    for name in ["first.jsonl", "second.jsonl"] {
        let status = Command::new(bin)
            .args(["acme", "run", "--seed", "42", "--trace", name])
            .current_dir(dir.path())
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        files.push(std::fs::read(dir.path().join(name)).map_err(|e| e.to_string())?);
    }
    check(
        files[0] == files[1] && !files[0].is_empty(),
        format!("two traces of {} bytes, identical: {}", files[0].len(), files[0] == files[1]),
    )
}

fn performance() -> Outcome {
    let r = mediation_latency(100_000).map_err(|e| e.to_string())?;
    let soft = if r.median_ns <= 1_000_000 { "within" } else { "above" };
    Ok(format!(
        "median {:.1} us, p99 {:.1} us over {} events ({soft} the 1 ms soft bound)",
        r.median_ns as f64 / 1e3,
        r.p99_ns as f64 / 1e3,
        r.events
    ))
}

fn reflexive_coordination() -> Outcome {
    let (mut attempts, mut denied, mut audited, mut messages) = (0, 0, 0, 0);
    for seed in 0..50 {
        let o = coordination(seed).map_err(|e| e.to_string())?;
        if !(o.second_acquire_refused && o.exactly_once && o.state_consistent && o.reached_component == 0) {
            return Err(format!("seed {seed}: {o:?}"));
        }
        attempts += o.attempts_without_token;
        denied += o.denied;
        audited += o.manager_audits;
        messages += o.manager_messages;
    }
    check(
        attempts > 0 && denied == attempts && audited == messages,
        format!("{denied}/{attempts} tokenless attempts denied over 50 interleavings, {audited} audits for {messages} manager messages"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("evaluation determinism and purity", evaluation_purity),
        ("POcount reproduction", po_count_reproduction),
        ("remove semantics", remove),
        ("budget enforcement", budget),
        ("unrequested purchase detection", unrequested),
        ("avDelay oracle", av_delay),
        ("hash gate", gate),
        ("conformance filtering", filtering),
        ("trace determinism", determinism),
        ("mediation latency", performance),
        ("reflexive coordination", reflexive_coordination),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
