//! The supermarket chain's law ensemble: `G` at the root, `B` for base
//! components and `M` for managers below it, and `buyer` below `B`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::capabilities::fragments::{
    self, coordination_lock, inflow, inflow_record, manager_layer_only, mi_bridge, property_counter_with, purview, role_filter, str_list,
    subscription, Fragment, RoleTable,
};
use crate::engine::AgentId;
use crate::lang::LawSource;
use crate::value::Value;

/// Everything the law texts are parameterized by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct LawParams {
    /// Hex public key of the CA, written into `G`.
    pub authority: Option<String>,
    pub inflow_window: f64,
    pub token_ttl: f64,
    /// Name of the buyer's low-budget event.
    pub low_budget_event: String,
    /// Per-branch low-budget thresholds; other branches use the default.
    pub thresholds: BTreeMap<String, f64>,
    pub default_threshold: f64,
    /// Manager name to role.
    pub roles: BTreeMap<String, String>,
    pub guarded_ops: Vec<String>,
    /// Internal capabilities of buyers reachable through their MI.
    pub mi_examine: Vec<String>,
    pub mi_invoke: Vec<String>,
}

impl Default for LawParams {
    fn default() -> Self {
        LawParams {
            authority: None,
            inflow_window: 60.0,
            token_ttl: 30.0,
            low_budget_event: "lawBudget".into(),
            thresholds: BTreeMap::new(),
            default_threshold: 100.0,
            roles: BTreeMap::new(),
            guarded_ops: vec!["remove".into(), "restore".into()],
            mi_examine: vec!["queueLength".into()],
            mi_invoke: vec!["resync".into()],
        }
    }
}

impl LawParams {
    pub fn role_table(&self) -> RoleTable {
        let mut t = RoleTable::standard();
        for (m, r) in &self.roles {
            t = t.assign(m, r);
        }
        t
    }

    fn thresholds_literal(&self) -> String {
        let items: Vec<String> =
            self.thresholds.iter().map(|(b, t)| format!("[{}, {}]", Value::str(b).canonical(), Value::Num(*t).canonical())).collect();
        format!("[{}]", items.join(", "))
    }
}

pub fn law_g(p: &LawParams) -> String {
    let mut s = String::new();
    if let Some(a) = &p.authority {
        s.push_str(&format!("AUTHORITY \"{a}\";\n"));
    }
    s.push_str(
        r#"DELEGATE adopted, sent, arrived, obligationDue;

# every message leaves prefixed with its sender's identity
CONSTRAIN op.name != "stripSender";
# the identity triple is written once, from the certificate
CONSTRAIN op.name != "stateUpdate" or op.key != "self" or ($event == "adopted" and op.value == $cert);

UPON adopted(_) DO [delegate];
UPON sent(_) DO [prefixSender, delegate];
UPON arrived(_) IF $sender != null DO [delegate];
UPON arrived(_) DO [audit("rejection", ["unstamped", $kind])];
UPON obligationDue(_) DO [delegate];
"#,
    );
    s
}

pub fn law_b(p: &LawParams) -> String {
    let lock = coordination_lock(&p.guarded_ops, p.token_ttl).expect("token ttl is positive");
    let record = inflow_record(p.inflow_window);
    let body = Fragment::new(vec![
        r#"UPON adopted(_) IF $cert.layer != "B" DO []"#.into(),
        r#"UPON adopted(_) IF $law == "B" DO [self <- $cert]"#.into(),
        "UPON adopted(_) DO [delegate]".into(),
    ])
    .then(purview())
    .then(manager_layer_only())
    .then(lock.component)
    .then(fragments::remove())
    .then(inflow(p.inflow_window).expect("inflow window is positive"))
    .then(Fragment::new(vec![
        format!(r#"UPON arrived(_) IF $class == "b" and $law == "B" DO [{record}, deliver]"#),
        format!(r#"UPON arrived(_) IF $class == "b" DO [{record}, delegate]"#),
        r#"UPON arrived(examine(p)) IF $law == "B" DO [emit($sender, unknown(p))]"#.into(),
        r#"UPON arrived(_) IF $law == "B" DO [deliver]"#.into(),
        "UPON arrived(_) DO [delegate]".into(),
        r#"UPON sent(_) IF $law == "B" DO [forward]"#.into(),
        "UPON sent(_) DO [delegate]".into(),
        "UPON obligationDue(_) DO [delegate]".into(),
    ]));
    format!(
        r#"DELEGATE adopted, sent, arrived, obligationDue;

# base components may only address managers of their own branch
CONSTRAIN op.name != "emit" or op.target.layer != "M" or op.target.branch == $self.branch;
CONSTRAIN op.name != "forward" or op.target.layer != "M" or op.target.branch == $self.branch;

{}"#,
        body.text()
    )
}

pub fn law_m(p: &LawParams) -> String {
    let roles = p.role_table();
    let lock = coordination_lock(&p.guarded_ops, p.token_ttl).expect("token ttl is positive");
    let body = Fragment::new(vec![format!(r#"UPON adopted(_) IF $cert.layer == "M" DO [self <- $cert, {}]"#, roles.assign_op())])
        .then(role_filter(&roles))
        .then(lock.manager)
        .then(Fragment::new(vec![
            r#"UPON sent(_) DO [audit("managerMsg", ["forwarded"]), forward]"#.into(),
            "UPON arrived(_) DO [deliver]".into(),
        ]));
    body.text()
}

fn completion_ops() -> [&'static str; 4] {
    [
        "delaySum <- delaySum + ($now - head(pending[sku]))",
        "completed <- completed + 1",
        "avDelay <- delaySum / completed",
        "pending[sku] <- tail(pending[sku])",
    ]
}

pub fn law_buyer(p: &LawParams) -> String {
    let ev = &p.low_budget_event;
    let low = format!("emit(if(budget < threshold and budget + amt >= threshold, subs[\"{ev}\"], null), {ev}(budget))");
    let mut accept: Vec<String> = completion_ops().iter().map(|s| s.to_string()).collect();
    accept.push("budget <- budget - amt".into());
    accept.push(low);
    let counter = property_counter_with("POcount", "PO(sku, qty, amt)", &accept).expect("valid counter");
    let violation = |kind: &str| fragments::notify("violation", &format!("\"{kind}\", sku, amt"));
    let body = Fragment::new(vec![
        format!(
            r#"UPON adopted(_) IF startsWith($cert.name, "buyer") DO [self <- $cert, threshold <- lookup({}, $cert.branch, {})]"#,
            p.thresholds_literal(),
            Value::Num(p.default_threshold).canonical()
        ),
        format!(
            r#"UPON sent(PO(sku, qty, amt)) IF amt > budget DO [audit("violation", ["overspend", sku, amt, default(budget, 0)]), {}, emit(subs["{ev}"], {ev}(default(budget, 0)))]"#,
            violation("overspend")
        ),
        format!(
            r#"UPON sent(PO(sku, qty, amt)) IF len(pending[sku]) < 1 DO [audit("violation", ["unrequested", sku, amt]), {}]"#,
            violation("unrequested")
        ),
    ])
    .then(counter)
    .then(Fragment::new(vec![
        format!("UPON sent(reject(sku, ...)) IF len(pending[sku]) > 0 DO [{}, forward]", completion_ops().join(", ")),
        "UPON sent(_) DO [forward]".into(),
        "UPON arrived(purchaseRequest(sku, qty)) IF $sender.branch == $self.branch DO [pending[sku] <- append(pending[sku], $now), deliver]".into(),
        r#"UPON arrived(purchaseRequest(...)) DO [audit("rejection", ["foreignRequest", $sender])]"#.into(),
        r#"UPON arrived(budget(amt)) IF startsWith($sender.name, "BuO") and $sender.branch == $self.branch and amt >= 0 DO [budgetIn <- budgetIn + amt, budget <- budget + amt, deliver]"#.into(),
        r#"UPON arrived(budget(...)) DO [audit("rejection", ["budgetSource", $sender])]"#.into(),
        r#"UPON arrived(examine("budget")) DO [emit($sender, value("budget", default(budget, 0)))]"#.into(),
        r#"UPON arrived(examine("avDelay")) DO [emit($sender, value("avDelay", avDelay))]"#.into(),
    ]))
    .then(subscription(&[ev.as_str(), "violation"]).expect("valid event names"))
    .then(mi_bridge(&p.mi_examine, &p.mi_invoke))
    .then(Fragment::new(vec![
        "UPON arrived(examine(p)) DO [emit($sender, unknown(p))]".into(),
        "UPON arrived(_) DO [deliver]".into(),
    ]));
    body.text()
}

/// A buyer law that tries to strip its sender triple and to leak to a
/// manager outside its purview. Its superiors filter both.
pub fn law_malicious_buyer(p: &LawParams, outsider: &AgentId) -> String {
    let out = outsider.to_value().canonical();
    format!(
        "UPON sent(_) IF $peer.layer == \"M\" DO [forward];\n\
         UPON sent(_) DO [stripSender, forward];\n\
         UPON arrived(examine(p)) DO [emit({out}, leak(p, budget)), emit($sender, value(p, default(get(p), 0)))];\n\
         {}",
        law_buyer(p)
    )
}

/// The four laws of the ensemble as sources.
pub fn ensemble(p: &LawParams) -> Vec<LawSource> {
    vec![
        LawSource::new("G", None, law_g(p)),
        LawSource::new("B", Some("G"), law_b(p)),
        LawSource::new("M", Some("G"), law_m(p)),
        LawSource::new("buyer", Some("B"), law_buyer(p)),
    ]
}

/// The ensemble with an additional leaf `name` under `B`.
pub fn ensemble_with_leaf(p: &LawParams, name: &str, text: String) -> Vec<LawSource> {
    let mut e = ensemble(p);
    e.push(LawSource::new(name, Some("B"), text));
    e
}

pub fn forms_literal() -> String {
    str_list(&fragments::MANAGER_FORMS)
}
