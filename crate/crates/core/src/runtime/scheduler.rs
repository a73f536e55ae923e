use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::engine::{AgentId, Payload};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Due(f64);

impl Eq for Due {}

impl PartialOrd for Due {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Due {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Obligation {
    pub agent: AgentId,
    pub obligation: Payload,
    pub due: f64,
}

/// Pending obligations ordered by due time, then by imposition order.
#[derive(Debug, Default, Clone)]
pub struct Scheduler {
    queue: BTreeMap<(Due, u64), (AgentId, Payload)>,
    next_seq: u64,
}

impl Scheduler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn impose(&mut self, agent: AgentId, obligation: Payload, due: f64) {
        self.queue.insert((Due(due), self.next_seq), (agent, obligation));
        self.next_seq += 1;
    }

    /// Cancels every pending copy of `obligation` for `agent`, returning how
    /// many were cancelled.
    pub fn repeal(&mut self, agent: &AgentId, obligation: &Payload) -> usize {
        let before = self.queue.len();
        self.queue.retain(|_, (a, o)| !(a == agent && o == obligation));
        before - self.queue.len()
    }

    pub fn next_due(&self) -> Option<f64> {
        self.queue.keys().next().map(|(d, _)| d.0)
    }

    /// Removes and returns the earliest obligation due at or before `now`.
    pub fn pop_due(&mut self, now: f64) -> Option<Obligation> {
        let (&(due, seq), _) = self.queue.iter().next()?;
        if due.0 > now {
            return None;
        }
        let (agent, obligation) = self.queue.remove(&(due, seq)).expect("key just seen");
        Some(Obligation { agent, obligation, due: due.0 })
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Layer;

    fn a() -> AgentId {
        AgentId::new("a", "s", Layer::B)
    }

    fn drain(s: &mut Scheduler, now: f64) -> Vec<String> {
        std::iter::from_fn(|| s.pop_due(now)).map(|o| o.obligation.kind).collect()
    }

    #[test]
    fn fires_once_when_due() {
        let mut s = Scheduler::new();
        s.impose(a(), Payload::bare("tick"), 5.0);
        assert!(drain(&mut s, 4.999).is_empty());
        assert_eq!(drain(&mut s, 5.0), ["tick"]);
        assert!(drain(&mut s, 100.0).is_empty());
    }

    #[test]
    fn repealed_never_fires() {
        let mut s = Scheduler::new();
        s.impose(a(), Payload::bare("tick"), 5.0);
        assert_eq!(s.repeal(&a(), &Payload::bare("tick")), 1);
        assert!(drain(&mut s, 10.0).is_empty());
    }

    #[test]
    fn ties_fire_in_imposition_order() {
        let mut s = Scheduler::new();
        for k in ["c", "a", "b"] {
            s.impose(a(), Payload::bare(k), 7.0);
        }
        s.impose(a(), Payload::bare("early"), 6.0);
        assert_eq!(drain(&mut s, 7.0), ["early", "c", "a", "b"]);
    }
}
