//! Generators shared by the property suites.
#![allow(dead_code)]

use gbm_core::engine::{keyed_name, AgentId, ControlState, Layer, MessageClass, Origin, Payload, RegulatedEvent};
use gbm_core::lang::{parse_law, LawAst, LawSource};
use gbm_core::Value;
use proptest::prelude::*;

const PATTERNS: [&str; 8] =
    ["_", "PO(sku, qty, amt)", "PO(...)", "budget(amt)", "examine(p)", "examine(\"budget\")", "tick(n)", "purchaseRequest(sku, qty)"];

const CONDITIONS: [&str; 12] = [
    "budget > 100",
    "default(budget, 0) >= 50",
    "$sender.layer == \"M\"",
    "$sender != null and $sender.branch == $self.branch",
    "len(pending[\"milk\"]) < 1",
    "default(count, 0) >= 3",
    "$kind in [\"PO\", \"budget\"]",
    "not (last == null)",
    "$now - default(last, 0) > 10",
    "$class == \"b\"",
    "startsWith($peer.name, \"buyer\")",
    "countAfter(default(log, []), $now - 60) > 2",
];

const OPS: [&str; 14] = [
    "forward",
    "deliver",
    "count <- default(count, 0) + 1",
    "budget <- default(budget, 0) - 7",
    "emit($sender, value(\"count\", count))",
    "emit($peer, note($kind))",
    "audit(\"violation\", [$kind, 3])",
    "imposeObligation(tick(1), 5)",
    "repealObligation(tick(1))",
    "pending[\"milk\"] <- append(pending[\"milk\"], $now)",
    "last <- $now",
    "log <- append(keepAfter(default(log, []), $now - 60), $now)",
    "prefixSender",
    "stripSender",
];

fn rule_text() -> impl Strategy<Value = String> {
    (
        prop::sample::select(vec!["sent", "arrived", "adopted", "obligationDue"]),
        prop::sample::select(PATTERNS.to_vec()),
        prop::option::of(prop::sample::select(CONDITIONS.to_vec())),
        prop::collection::vec(prop::sample::select(OPS.to_vec()), 0..4),
    )
        .prop_map(|(ev, pat, cond, ops)| {
            let cond = cond.map(|c| format!(" IF {c}")).unwrap_or_default();
            format!("UPON {ev}({pat}){cond} DO [{}];", ops.join(", "))
        })
}

/// A single rule that passes validation on its own.
pub fn valid_rule() -> impl Strategy<Value = String> {
    rule_text().prop_filter("rule must validate", |r| parse_law(&LawSource::new("r", None, r.as_str())).is_ok())
}

/// Text of a valid law with one to six rules.
pub fn law_text() -> impl Strategy<Value = String> {
    prop::collection::vec(valid_rule(), 1..7).prop_map(|rules| rules.join("\n"))
}

pub fn law() -> impl Strategy<Value = LawAst> {
    law_text().prop_map(|t| parse_law(&LawSource::new("gen", None, t)).expect("rules validated individually"))
}

pub fn agent() -> impl Strategy<Value = AgentId> {
    (
        prop::sample::select(vec!["buyer", "InM", "BuO", "vendor1", "mgr7", "mgr9"]),
        prop::sample::select(vec!["store7", "store9"]),
        prop::sample::select(vec![Layer::B, Layer::M]),
    )
        .prop_map(|(n, b, l)| AgentId::new(n, b, l))
}

pub fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        (-1000.0f64..1000.0).prop_map(Value::Num),
        (0u32..5).prop_map(|n| Value::Num(f64::from(n))),
        prop::sample::select(vec!["milk", "bread", "budget", "M", ""]).prop_map(Value::str),
    ];
    leaf.prop_recursive(2, 8, 4, |inner| prop::collection::vec(inner, 0..4).prop_map(Value::List))
}

pub fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        (prop::sample::select(vec!["milk", "bread"]), 0.0f64..100.0, 0.0f64..1000.0)
            .prop_map(|(s, q, a)| Payload::new("PO", vec![Value::str(s), Value::Num(q), Value::Num(a)])),
        (0.0f64..1000.0).prop_map(|a| Payload::new("budget", vec![Value::Num(a)])),
        prop::sample::select(vec!["budget", "POcount", "inflow"]).prop_map(|p| Payload::new("examine", vec![Value::str(p)])),
        (prop::sample::select(vec!["milk", "soap"]), 0.0f64..50.0)
            .prop_map(|(s, q)| Payload::new("purchaseRequest", vec![Value::str(s), Value::Num(q)])),
        (0u32..3).prop_map(|n| Payload::new("tick", vec![Value::Num(f64::from(n))])),
        prop::collection::vec(value(), 0..3).prop_map(|args| Payload::new("x", args)),
    ]
}

pub fn event() -> impl Strategy<Value = RegulatedEvent> {
    (0u8..4, agent(), agent(), prop::option::of(agent()), payload(), any::<bool>(), any::<bool>(), 0.0f64..1000.0).prop_map(
        |(k, subject, peer, sender, payload, b_class, ctl, now)| {
            let class = if b_class { MessageClass::B } else { MessageClass::M };
            let origin = if ctl { Origin::Controller } else { Origin::Actor };
            match k {
                0 => RegulatedEvent::adopted(&subject, "gen", now),
                1 => RegulatedEvent::sent(&subject, "gen", &peer, payload, now),
                2 => RegulatedEvent::arrived(&subject, "gen", &peer, sender, payload, class, origin, now),
                _ => RegulatedEvent::obligation_due(&subject, "gen", payload, now),
            }
        },
    )
}

pub fn state() -> impl Strategy<Value = ControlState> {
    let key = prop::sample::select(vec!["budget", "count", "last", "log", "x"]);
    (prop::collection::vec((key, value()), 0..6), prop::option::of(prop::collection::vec(0.0f64..500.0, 0..4)), prop::option::of(agent()))
        .prop_map(|(kv, pending, me)| {
            let mut st = ControlState::new();
            for (k, v) in kv {
                st.set(k, v);
            }
            if let Some(p) = pending {
                st.set(keyed_name("pending", &Value::str("milk")), Value::List(p.into_iter().map(Value::Num).collect()));
            }
            if let Some(me) = me {
                st.set("self", me.to_value());
            }
            st
        })
}
