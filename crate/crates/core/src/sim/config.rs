use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::laws::LawParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Product {
    pub sku: String,
    /// Units consumed per time unit.
    pub consumption_rate: f64,
    pub reorder_point: f64,
    pub unit_price: f64,
    #[serde(default = "default_stock")]
    pub initial_stock: f64,
    #[serde(default = "default_order_qty")]
    pub order_qty: f64,
}

fn default_stock() -> f64 {
    100.0
}

fn default_order_qty() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BranchConfig {
    pub id: String,
    pub products: Vec<Product>,
    pub initial_budget: f64,
    pub budget_drip_interval: f64,
    pub budget_drip_amount: f64,
    pub low_budget_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ManagerConfig {
    pub name: String,
    pub branch: String,
    #[serde(default = "default_role")]
    pub role: String,
    /// Interval between rounds of examine requests; none disables polling.
    #[serde(default)]
    pub examine_every: Option<f64>,
    /// Buyer events the manager subscribes to at start.
    #[serde(default)]
    pub subscribe: Vec<String>,
}

fn default_role() -> String {
    "operator".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioConfig {
    pub branches: Vec<BranchConfig>,
    #[serde(default)]
    pub managers: Vec<ManagerConfig>,
    #[serde(default = "default_vendors")]
    pub vendors: usize,
    #[serde(default = "default_latency")]
    pub vendor_latency: Latency,
    /// Consumption step of the inventory model.
    #[serde(default = "one")]
    pub tick: f64,
    /// Interval at which buyers work through their queue of requests.
    #[serde(default = "default_buyer_interval")]
    pub buyer_interval: f64,
    /// How long a buyer holds a request it cannot afford before rejecting it.
    #[serde(default = "default_max_wait")]
    pub max_wait: f64,
    /// How long the inventory manager waits before re-requesting a rejected sku.
    #[serde(default = "default_retry")]
    pub retry_after: f64,
    #[serde(default = "default_pools")]
    pub pools: usize,
    /// Label from which the certificate authority's key is derived.
    #[serde(default = "default_ca")]
    pub ca_label: String,
    #[serde(default)]
    pub laws: LawParams,
}

fn default_vendors() -> usize {
    2
}
fn default_latency() -> Latency {
    Latency { min: 1.0, max: 5.0 }
}
fn one() -> f64 {
    1.0
}
fn default_buyer_interval() -> f64 {
    3.0
}
fn default_max_wait() -> f64 {
    20.0
}
fn default_retry() -> f64 {
    10.0
}
fn default_pools() -> usize {
    2
}
fn default_ca() -> String {
    "acme-ca".into()
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {0}: {1}")]
    Io(String, std::io::Error),
    #[error("parsing {0}: {1}")]
    Json(String, serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ScenarioConfig {
    /// Two branches, two managers per branch and two vendors.
    pub fn demo() -> Self {
        let branch = |id: &str, budget: f64| BranchConfig {
            id: id.into(),
            products: vec![
                Product {
                    sku: "milk".into(),
                    consumption_rate: 2.0,
                    reorder_point: 40.0,
                    unit_price: 2.0,
                    initial_stock: 100.0,
                    order_qty: 60.0,
                },
                Product {
                    sku: "bread".into(),
                    consumption_rate: 1.5,
                    reorder_point: 30.0,
                    unit_price: 3.0,
                    initial_stock: 80.0,
                    order_qty: 40.0,
                },
                Product {
                    sku: "soap".into(),
                    consumption_rate: 0.5,
                    reorder_point: 10.0,
                    unit_price: 4.0,
                    initial_stock: 30.0,
                    order_qty: 20.0,
                },
            ],
            initial_budget: budget,
            budget_drip_interval: 25.0,
            budget_drip_amount: 60.0,
            low_budget_threshold: 100.0,
        };
        let mgr = |name: &str, branch: &str, role: &str, every: Option<f64>| ManagerConfig {
            name: name.into(),
            branch: branch.into(),
            role: role.into(),
            examine_every: every,
            subscribe: vec!["lawBudget".into(), "violation".into()],
        };
        ScenarioConfig {
            branches: vec![branch("store7", 600.0), branch("store9", 400.0)],
            managers: vec![
                mgr("mgr7", "store7", "operator", Some(7.0)),
                mgr("obs7", "store7", "observer", Some(11.0)),
                mgr("mgr9", "store9", "operator", Some(13.0)),
            ],
            vendors: default_vendors(),
            vendor_latency: default_latency(),
            tick: one(),
            buyer_interval: default_buyer_interval(),
            max_wait: default_max_wait(),
            retry_after: default_retry(),
            pools: default_pools(),
            ca_label: default_ca(),
            laws: LawParams::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        let cfg: ScenarioConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Json(path.display().to_string(), e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.branches.is_empty() {
            return bad("at least one branch is required".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.branches {
            if !seen.insert(&b.id) || b.id == "vendors" {
                return bad(format!("duplicate or reserved branch id {:?}", b.id));
            }
            if b.initial_budget < 0.0 || b.budget_drip_amount < 0.0 || b.low_budget_threshold < 0.0 {
                return bad(format!("branch {}: budgets must be non-negative", b.id));
            }
            if b.budget_drip_interval <= 0.0 && b.budget_drip_amount > 0.0 {
                return bad(format!("branch {}: drip interval must be positive", b.id));
            }
            for p in &b.products {
                if p.consumption_rate < 0.0 || p.unit_price < 0.0 || p.reorder_point < 0.0 || p.order_qty <= 0.0 {
                    return bad(format!("branch {}: product {} has a negative rate, price or point", b.id, p.sku));
                }
            }
        }
        for m in &self.managers {
            if !seen.contains(&m.branch) {
                return bad(format!("manager {} belongs to unknown branch {}", m.name, m.branch));
            }
            if m.examine_every.is_some_and(|e| e <= 0.0) {
                return bad(format!("manager {}: examine interval must be positive", m.name));
            }
        }
        if self.vendors == 0 || self.pools == 0 {
            return bad("vendors and pools must be at least 1".into());
        }
        if !(self.vendor_latency.min >= 0.0 && self.vendor_latency.max >= self.vendor_latency.min) {
            return bad("vendor latency must satisfy 0 <= min <= max".into());
        }
        if self.tick <= 0.0 || self.buyer_interval <= 0.0 || self.max_wait < 0.0 || self.retry_after <= 0.0 {
            return bad("tick, buyerInterval and retryAfter must be positive".into());
        }
        Ok(())
    }

    /// Law parameters with the per-branch thresholds and manager roles folded in.
    pub fn law_params(&self, authority: &str) -> LawParams {
        let mut p = self.laws.clone();
        p.authority = Some(authority.to_string());
        p.thresholds = self.branches.iter().map(|b| (b.id.clone(), b.low_budget_threshold)).collect::<BTreeMap<_, _>>();
        for m in &self.managers {
            p.roles.insert(m.name.clone(), m.role.clone());
        }
        p
    }

    pub fn branch(&self, id: &str) -> Option<&BranchConfig> {
        self.branches.iter().find(|b| b.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Misbehavior {
    /// The buyer sends a PO for `amount` regardless of its budget.
    Overspend { amount: f64 },
    /// The buyer orders a product nobody requested.
    UnrequestedPO { sku: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub time: f64,
    /// Branch of the misbehaving buyer.
    pub buyer: String,
    #[serde(flatten)]
    pub kind: Misbehavior,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MisbehaviorScript {
    #[serde(default)]
    pub injections: Vec<Injection>,
}

impl MisbehaviorScript {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Json(path.display().to_string(), e))
    }

    pub fn validate(&self, cfg: &ScenarioConfig, horizon: f64) -> Result<(), ConfigError> {
        for i in &self.injections {
            if !(0.0..=horizon).contains(&i.time) {
                return Err(ConfigError::Invalid(format!("injection at {} lies outside [0, {horizon}]", i.time)));
            }
            if cfg.branch(&i.buyer).is_none() {
                return Err(ConfigError::Invalid(format!("injection names unknown branch {}", i.buyer)));
            }
        }
        Ok(())
    }
}
