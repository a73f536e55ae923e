use std::collections::{BTreeMap, VecDeque};

use super::cert::Certificate;
use super::envelope::Envelope;
use super::journal::Record;
use super::pool::{AdoptError, Pool, RuntimeError};
use crate::capabilities::ManagementInterface;
use crate::engine::{AgentId, ControlState, Payload};

/// Several controller pools joined by ordered, loss-free links, run on the
/// caller's thread.
///
/// Every operation runs to quiescence: envelopes produced along the way are
/// routed in FIFO order until none remain in transit. The resulting records
/// accumulate until [`System::take_records`].
#[derive(Default)]
pub struct System {
    pools: Vec<Pool>,
    placement: BTreeMap<AgentId, usize>,
    transit: VecDeque<Envelope>,
    records: Vec<Record>,
}

impl System {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_pool(&mut self, pool: Pool) -> usize {
        self.pools.push(pool);
        self.pools.len() - 1
    }

    pub fn pool(&self, idx: usize) -> &Pool {
        &self.pools[idx]
    }

    pub fn pools(&self) -> &[Pool] {
        &self.pools
    }

    pub fn pool_of(&self, id: &AgentId) -> Option<usize> {
        self.placement.get(id).copied()
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentId> {
        self.placement.keys()
    }

    pub fn state(&self, id: &AgentId) -> Option<&ControlState> {
        self.pools[self.pool_of(id)?].state(id)
    }

    pub fn adopt(&mut self, pool: usize, cert: &Certificate, leaf: &str, now: f64) -> Result<AgentId, AdoptError> {
        if let Some(existing) = self.placement.get(&cert.triple) {
            if *existing != pool {
                return Err(AdoptError::AlreadyAdopted(cert.triple.clone()));
            }
        }
        let result = self.pools[pool].adopt(cert, leaf, now);
        if let Ok(id) = &result {
            self.placement.insert(id.clone(), pool);
        }
        self.pump(now);
        result
    }

    pub fn register_mi(&mut self, id: &AgentId, mi: Box<dyn ManagementInterface>) -> Result<(), RuntimeError> {
        let pool = self.pool_of(id).ok_or_else(|| RuntimeError::UnknownAgent(id.clone()))?;
        self.pools[pool].register_mi(id, mi)
    }

    /// The actor of `from` sends `payload` to `to`; returns whether the
    /// sender's law forwarded it.
    pub fn send(&mut self, from: &AgentId, to: &AgentId, payload: Payload, now: f64) -> Result<bool, RuntimeError> {
        let pool = self.pool_of(from).ok_or_else(|| RuntimeError::UnknownAgent(from.clone()))?;
        let forwarded = self.pools[pool].send(from, to, payload, now)?;
        self.pump(now);
        Ok(forwarded)
    }

    /// Hands an envelope produced elsewhere to the system, as if it arrived
    /// over a link.
    pub fn inject(&mut self, env: Envelope, now: f64) {
        self.transit.push_back(env);
        self.pump(now);
    }

    pub fn next_due(&self) -> Option<f64> {
        self.pools.iter().filter_map(Pool::next_due).min_by(f64::total_cmp)
    }

    /// Fires every obligation due at or before `now`, earliest first.
    pub fn tick(&mut self, now: f64) -> usize {
        let mut fired = 0;
        loop {
            let next = self
                .pools
                .iter()
                .enumerate()
                .filter_map(|(i, p)| p.next_due().map(|d| (d, i)))
                .filter(|(d, _)| *d <= now)
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let Some((_, i)) = next else { break };
            self.pools[i].fire_next(now);
            fired += 1;
            self.pump(now);
        }
        fired
    }

    pub fn take_records(&mut self) -> Vec<Record> {
        std::mem::take(&mut self.records)
    }

    pub fn note(&mut self, t: f64, actor: Option<AgentId>, note: &str, data: serde_json::Value) {
        self.records.push(Record::Note { t, actor, note: note.to_string(), data });
    }

    fn drain_pools(&mut self) {
        for pool in &mut self.pools {
            for rec in pool.take_output() {
                if let Record::Envelope { envelope, .. } = &rec {
                    self.transit.push_back(envelope.clone());
                }
                self.records.push(rec);
            }
        }
    }

    fn pump(&mut self, now: f64) {
        loop {
            self.drain_pools();
            let Some(env) = self.transit.pop_front() else { break };
            match self.placement.get(&env.receiver) {
                Some(&i) => self.pools[i].receive(env, now),
                None => {
                    let i = self.placement.get(&env.source).copied().unwrap_or(0);
                    if let Some(p) = self.pools.get_mut(i) {
                        p.dead_letter(&env, now, "unknownReceiver");
                    }
                }
            }
        }
    }
}
