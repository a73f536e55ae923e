mod common;

use std::cell::RefCell;
use std::sync::OnceLock;

use gbm_core::engine::{apply_ruling, evaluate, AgentId, ControlOp, ControlState, Effect, Layer, Payload, StateView};
use gbm_core::hierarchy::{build_ensemble, resolve, LawTree};
use gbm_core::lang::{canonical_text, hash_law, parse_law, parse_syntax, LawSource};
use gbm_core::runtime::{CertAuthority, Record};
use gbm_core::sim::scenarios::Harness;
use gbm_core::sim::{laws, ScenarioConfig};
use gbm_core::transport::{decode, encode, Frame, FrameBody};
use gbm_core::Value;
use proptest::prelude::*;

/// A state view that logs every key it is asked for.
struct Spy<'a> {
    inner: &'a ControlState,
    reads: RefCell<Vec<String>>,
}

impl StateView for Spy<'_> {
    fn get(&self, key: &str) -> Option<&Value> {
        self.reads.borrow_mut().push(key.to_string());
        self.inner.get(key)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn evaluation_is_deterministic_and_pure(law in common::law(), event in common::event(), state in common::state()) {
        let before = state.clone();
        let a = Spy { inner: &state, reads: RefCell::new(Vec::new()) };
        let b = Spy { inner: &state, reads: RefCell::new(Vec::new()) };
        let first = evaluate(&law, &event, &a);
        let second = evaluate(&law, &event, &b);
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(a.reads.into_inner(), b.reads.into_inner());
        prop_assert_eq!(&state, &before);
        let copy = state.clone();
        prop_assert_eq!(evaluate(&law, &event, &copy), first);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn parsing_arbitrary_text_never_panics(text in "\\PC{0,200}") {
        let _ = parse_syntax(&text);
    }

    #[test]
    fn parsing_token_soup_never_panics(words in prop::collection::vec(prop::sample::select(vec![
        "UPON", "IF", "DO", "[", "]", "(", ")", ",", ";", "<-", "sent", "arrived", "_", "...", "$sender", ".", "layer",
        "==", "\"M\"", "forward", "emit", "x", "1", "-", "not", "and", "[]", "CONSTRAIN", "op", "DELEGATE", "#",
    ]), 0..40)) {
        let _ = parse_syntax(&words.join(" "));
    }

    #[test]
    fn pretty_printing_round_trips(text in common::law_text()) {
        let ast = parse_law(&LawSource::new("gen", None, text)).unwrap();
        let printed = canonical_text(&ast);
        let back = parse_law(&LawSource::new("gen", None, printed.clone())).unwrap();
        prop_assert_eq!(canonical_text(&back), printed);
        prop_assert_eq!(hash_law(&back), hash_law(&ast));
        prop_assert_eq!(back, ast);
    }

    #[test]
    fn frames_round_trip(from in common::agent(), to in common::agent(), payload in common::payload(),
                         msg in "\\PC{0,40}", fwd in prop::option::of(any::<bool>())) {
        for f in [
            Frame::new(FrameBody::Send { from: from.clone(), to: to.clone(), payload: payload.clone() }),
            Frame::new(FrameBody::Event { agent: to.clone(), payload: payload.clone(), sender: Some(from.clone()), class: None }),
            Frame::ack(Some(from.clone()), fwd),
            Frame::error(msg.clone()),
        ] {
            let bytes = encode(&f).unwrap();
            let (back, used) = decode(&bytes).unwrap().unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(back, f);
        }
    }
}

fn acme_tree_with(leaf: &str) -> Option<LawTree> {
    let cfg = ScenarioConfig::demo();
    let ca = CertAuthority::deterministic(&cfg.ca_label);
    build_ensemble(&laws::ensemble_with_leaf(&cfg.law_params(&ca.public_hex()), "gen", leaf.to_string())).ok()
}

fn same_branch_or_base(target: &AgentId, me: &AgentId) -> bool {
    target.layer != Layer::M || target.branch == me.branch
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Whatever a leaf law under `B` rules, the resolved ruling obeys the
    /// constraints of `G` and `B`.
    #[test]
    fn ancestors_constraints_hold_for_any_leaf(text in common::law_text(), event in common::event(), mut state in common::state()) {
        let Some(tree) = acme_tree_with(&text) else { return Ok(()) };
        let mut event = event;
        event.law = "gen".into();
        event.subject.layer = Layer::B;
        state.set("self", event.subject.to_value());
        let res = resolve(&tree, "gen", &event, &state);
        let me = event.subject.clone();
        for op in &res.ruling.ops {
            prop_assert!(!matches!(op, ControlOp::StripSender), "stripSender survived: {:?}", res.ruling);
            if let ControlOp::Emit { target, .. } = op {
                prop_assert!(same_branch_or_base(target, &me), "emit out of purview: {:?}", op);
            }
            if matches!(op, ControlOp::Forward) {
                if let Some(peer) = &event.peer {
                    prop_assert!(same_branch_or_base(peer, &me), "forward out of purview to {:?}", peer);
                }
            }
        }
        let mut applied = state.clone();
        for effect in apply_ruling(&res.ruling, &event, &mut applied) {
            if let Effect::Forward { stamped, .. } = effect {
                prop_assert!(stamped, "unstamped forward from {:?}", res.ruling);
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Action {
    Budget(f64),
    Request,
    Order(f64),
}

fn action() -> impl Strategy<Value = Action> {
    prop_oneof![(0.0f64..300.0).prop_map(Action::Budget), Just(Action::Request), (0.0f64..400.0).prop_map(Action::Order),]
}

static CFG: OnceLock<ScenarioConfig> = OnceLock::new();

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Forwarded purchase orders never add up to more than the budget
    /// received, at any point.
    #[test]
    fn budget_safety(actions in prop::collection::vec(action(), 1..40)) {
        let cfg = CFG.get_or_init(ScenarioConfig::demo);
        let mut h = Harness::new(gbm_core::sim::AcmeWorld::build(cfg).unwrap());
        let b = h.store7();
        let vendor = h.world.vendors[0].clone();
        for a in actions {
            match a {
                Action::Budget(x) => { h.send(&b.buo, &b.buyer, Payload::new("budget", vec![Value::Num(x)])).unwrap(); }
                Action::Request => {
                    h.send(&b.inm, &b.buyer, Payload::new("purchaseRequest", vec![Value::str("milk"), Value::Num(1.0)])).unwrap();
                }
                Action::Order(x) => {
                    h.send(&b.buyer, &vendor, Payload::new("PO", vec![Value::str("milk"), Value::Num(1.0), Value::Num(x)])).unwrap();
                }
            }
        }
        let (mut received, mut spent) = (0.0, 0.0);
        for (i, r) in h.records.iter().enumerate() {
            if let Record::Envelope { envelope, .. } = r {
                let amount = |k: usize| envelope.payload.arg(k).and_then(Value::as_num).unwrap_or(0.0);
                if envelope.source == b.buo && envelope.payload.kind == "budget" {
                    received += amount(0);
                }
                if envelope.source == b.buyer && envelope.payload.kind == "PO" {
                    spent += amount(2);
                    prop_assert!(spent <= received + 1e-9, "record {}: spent {} of {}", i, spent, received);
                }
            }
        }
    }
}
