use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::sim::ScenarioConfig;

/// A gateway bearer token and the manager agent it authenticates as.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenConfig {
    pub token: String,
    pub manager: String,
    pub branch: String,
    /// Role the manager is registered with in the generated `M` law.
    #[serde(default = "operator")]
    pub role: String,
}

fn operator() -> String {
    "operator".into()
}

/// Run the Acme actors inside the service on a scaled wall clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulationMode {
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Simulation time units per wall-clock second.
    #[serde(default = "one")]
    pub time_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CosConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Address of the manager gateway; none disables it.
    #[serde(default)]
    pub gateway: Option<String>,
    #[serde(default = "default_pools")]
    pub pools: usize,
    /// Ensemble manifest. Without one the Acme ensemble is generated.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    /// Leaf law adopted by gateway managers.
    #[serde(default = "default_manager_law")]
    pub manager_law: String,
    #[serde(default)]
    pub ca_secret: Option<String>,
    #[serde(default = "default_ca")]
    pub ca_label: String,
    #[serde(default)]
    pub tokens: Vec<TokenConfig>,
    #[serde(default)]
    pub audit_file: Option<PathBuf>,
    /// Overrides the inflow window of the generated ensemble.
    #[serde(default)]
    pub inflow_window: Option<f64>,
    #[serde(default)]
    pub simulation: Option<SimulationMode>,
    #[serde(default = "default_heartbeat")]
    pub heartbeat_ms: u64,
    /// Reserved; must be false.
    #[serde(default)]
    pub tls: bool,
}

fn default_listen() -> String {
    "127.0.0.1:7400".into()
}
fn default_pools() -> usize {
    2
}
fn default_manager_law() -> String {
    "M".into()
}
fn default_ca() -> String {
    "acme-ca".into()
}
fn default_heartbeat() -> u64 {
    1000
}

impl Default for CosConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl CosConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        let mut cfg: CosConfig = serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("parsing {}: {e}", path.display()))?;
        if let Some(m) = &cfg.manifest {
            if m.is_relative() {
                cfg.manifest = Some(path.parent().unwrap_or(Path::new(".")).join(m));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(!self.tls, "TLS is reserved and not supported");
        anyhow::ensure!(self.pools > 0, "pools must be at least 1");
        if let Some(s) = &self.simulation {
            anyhow::ensure!(s.time_scale > 0.0, "simulation timeScale must be positive");
            anyhow::ensure!(self.manifest.is_none(), "simulation mode runs the generated Acme ensemble");
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.tokens {
            anyhow::ensure!(!t.token.is_empty(), "empty gateway token");
            anyhow::ensure!(seen.insert(&t.token), "duplicate gateway token");
        }
        Ok(())
    }

    /// The scenario whose laws (and, in simulation mode, actors) the
    /// service runs, with the gateway managers' roles folded in.
    pub fn scenario(&self) -> ScenarioConfig {
        let mut s = self.simulation.as_ref().and_then(|m| m.scenario.clone()).unwrap_or_else(ScenarioConfig::demo);
        s.pools = self.pools;
        if let Some(w) = self.inflow_window {
            s.laws.inflow_window = w;
        }
        for t in &self.tokens {
            s.laws.roles.insert(t.manager.clone(), t.role.clone());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_tls_flag() {
        let c = CosConfig::default();
        assert_eq!(c.listen, "127.0.0.1:7400");
        c.validate().unwrap();
        let tls: CosConfig = serde_json::from_str(r#"{"tls": true}"#).unwrap();
        assert!(tls.validate().is_err());
    }

    #[test]
    fn token_roles_reach_the_laws() {
        let c: CosConfig =
            serde_json::from_str(r#"{"tokens":[{"token":"t1","manager":"ops1","branch":"store7","role":"observer"}],"inflowWindow":5}"#)
                .unwrap();
        let s = c.scenario();
        assert_eq!(s.laws.roles["ops1"], "observer");
        assert_eq!(s.laws.inflow_window, 5.0);
    }
}
