use std::sync::Arc;

use super::config::ScenarioConfig;
use super::laws;
use crate::engine::{AgentId, Layer};
use crate::hierarchy::{build_ensemble, LawTree};
use crate::lang::{render, LawSource};
use crate::runtime::{CertAuthority, Pool, PoolConfig, System};

/// The three base components of one branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchAgents {
    pub branch: String,
    pub inm: AgentId,
    pub buyer: AgentId,
    pub buo: AgentId,
}

pub fn inm_id(branch: &str) -> AgentId {
    AgentId::new("InM", branch, Layer::B)
}

pub fn buyer_id(branch: &str) -> AgentId {
    AgentId::new("buyer", branch, Layer::B)
}

pub fn buo_id(branch: &str) -> AgentId {
    AgentId::new("BuO", branch, Layer::B)
}

pub fn vendor_id(i: usize) -> AgentId {
    AgentId::new(format!("vendor{}", i + 1), "vendors", Layer::B)
}

pub fn manager_id(name: &str, branch: &str) -> AgentId {
    AgentId::new(name, branch, Layer::M)
}

/// A fully adopted Acme deployment.
pub struct AcmeWorld {
    pub system: System,
    pub tree: Arc<LawTree>,
    pub ca: CertAuthority,
    pub branches: Vec<BranchAgents>,
    pub vendors: Vec<AgentId>,
    pub managers: Vec<AgentId>,
}

impl AcmeWorld {
    pub fn build(cfg: &ScenarioConfig) -> anyhow::Result<Self> {
        let ca = CertAuthority::deterministic(&cfg.ca_label);
        let sources = laws::ensemble(&cfg.law_params(&ca.public_hex()));
        Self::build_with(cfg, ca, &sources)
    }

    /// Builds the deployment on an arbitrary ensemble; it must contain the
    /// leaves `B`, `M` and `buyer`.
    pub fn build_with(cfg: &ScenarioConfig, ca: CertAuthority, sources: &[LawSource]) -> anyhow::Result<Self> {
        let tree = Arc::new(build_ensemble(sources).map_err(|d| anyhow::anyhow!("{}", render(&d)))?);
        let mut system = System::new();
        for i in 0..cfg.pools {
            system.add_pool(Pool::new(PoolConfig::new(&format!("pool{i}")), tree.clone()));
        }
        let mut world = AcmeWorld { system, tree, ca, branches: Vec::new(), vendors: Vec::new(), managers: Vec::new() };
        for i in 0..cfg.vendors {
            let id = vendor_id(i);
            world.adopt(0, &id, "B")?;
            world.vendors.push(id);
        }
        for (i, b) in cfg.branches.iter().enumerate() {
            let pool = i % cfg.pools;
            let agents = BranchAgents { branch: b.id.clone(), inm: inm_id(&b.id), buyer: buyer_id(&b.id), buo: buo_id(&b.id) };
            world.adopt(pool, &agents.inm, "B")?;
            world.adopt(pool, &agents.buyer, "buyer")?;
            world.adopt(pool, &agents.buo, "B")?;
            world.branches.push(agents);
        }
        for m in &cfg.managers {
            let pool = cfg.branches.iter().position(|b| b.id == m.branch).unwrap_or(0) % cfg.pools;
            let id = manager_id(&m.name, &m.branch);
            world.adopt(pool, &id, "M")?;
            world.managers.push(id);
        }
        Ok(world)
    }

    /// Issues a certificate for `id` and adopts `leaf` on `pool` at time zero.
    pub fn adopt(&mut self, pool: usize, id: &AgentId, leaf: &str) -> anyhow::Result<()> {
        let cert = self.ca.issue(id);
        self.system.adopt(pool, &cert, leaf, 0.0).map_err(|e| anyhow::anyhow!("adopting {leaf} for {id:?}: {e}"))?;
        Ok(())
    }

    pub fn branch(&self, id: &str) -> Option<&BranchAgents> {
        self.branches.iter().find(|b| b.branch == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Payload;
    use crate::runtime::Record;
    use crate::value::Value;

    fn delivered(recs: &[Record], to: &AgentId) -> Vec<Payload> {
        recs.iter()
            .filter_map(|r| match r {
                Record::Deliver { agent, payload, .. } if agent == to => Some(payload.clone()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn demo_world_adopts_everyone() {
        let mut w = AcmeWorld::build(&ScenarioConfig::demo()).unwrap();
        let recs = w.system.take_records();
        let adopts: Vec<_> = recs.iter().filter(|r| matches!(r, Record::Adopt { ok: true, .. })).collect();
        assert_eq!(adopts.len(), 2 + 2 * 3 + 3);
        let buyer = &w.branches[0].buyer;
        assert_eq!(w.system.state(buyer).unwrap().identity().as_ref(), Some(buyer));
    }

    #[test]
    fn budget_then_po_then_examine() {
        let mut w = AcmeWorld::build(&ScenarioConfig::demo()).unwrap();
        let b = w.branches[0].clone();
        let mgr = w.managers[0].clone();
        let n = |x: f64| Value::Num(x);
        w.system.send(&b.buo, &b.buyer, Payload::new("budget", vec![n(1000.0)]), 1.0).unwrap();
        w.system.send(&b.inm, &b.buyer, Payload::new("purchaseRequest", vec![Value::str("milk"), n(10.0)]), 10.0).unwrap();
        let po = Payload::new("PO", vec![Value::str("milk"), n(10.0), n(400.0)]);
        assert!(w.system.send(&b.buyer, &w.vendors[0].clone(), po, 14.0).unwrap());
        for p in ["budget", "POcount", "avDelay", "nonsense"] {
            w.system.send(&mgr, &b.buyer, Payload::new("examine", vec![Value::str(p)]), 15.0).unwrap();
        }
        let recs = w.system.take_records();
        let got: Vec<String> = delivered(&recs, &mgr).iter().map(|p| p.to_string()).collect();
        assert_eq!(got, [r#"value("budget", 600)"#, r#"value("POcount", 1)"#, r#"value("avDelay", 4)"#, r#"unknown("nonsense")"#]);
    }
}
