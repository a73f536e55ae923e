use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::config::{Misbehavior, MisbehaviorScript, ScenarioConfig};
use super::trace::{Trace, TraceHeader};
use super::world::AcmeWorld;
use crate::engine::{AgentId, Payload};
use crate::runtime::{Record, System};
use crate::value::Value;

#[derive(Debug, Clone)]
enum Action {
    Consume(usize),
    BuyerWork(usize),
    Drip(usize),
    ManagerStart(usize),
    ManagerPoll(usize),
    Inject(usize),
    Ship { vendor: usize, to: AgentId, sku: Value, qty: Value },
}

struct Scheduled {
    t: f64,
    seq: u64,
    action: Action,
}

impl PartialEq for Scheduled {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, o: &Self) -> Ordering {
        o.t.total_cmp(&self.t).then(o.seq.cmp(&self.seq))
    }
}

struct Inventory {
    stock: BTreeMap<String, f64>,
    outstanding: BTreeMap<String, bool>,
    retry_at: BTreeMap<String, f64>,
}

struct Request {
    sku: String,
    qty: f64,
    at: f64,
}

struct BuyerActor {
    balance: f64,
    queue: VecDeque<Request>,
    next_vendor: usize,
}

#[derive(Clone, Copy)]
enum Role {
    Inm(usize),
    Buyer(usize),
    Vendor(usize),
    Other,
}

/// The Acme actors driving an [`AcmeWorld`], advanced step by step.
///
/// Actors react to deliveries immediately; everything else they do is
/// scheduled on the simulation clock.
pub struct Simulation {
    cfg: Arc<ScenarioConfig>,
    script: Arc<MisbehaviorScript>,
    seed: u64,
    world: AcmeWorld,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    inventory: Vec<Inventory>,
    buyers: Vec<BuyerActor>,
    roles: BTreeMap<AgentId, Role>,
    records: Vec<Record>,
}

fn num(x: f64) -> Value {
    Value::Num(x)
}

impl Simulation {
    fn schedule(&mut self, t: f64, action: Action) {
        self.seq += 1;
        self.queue.push(Scheduled { t, seq: self.seq, action });
    }

    fn send(&mut self, from: &AgentId, to: &AgentId, payload: Payload, t: f64) -> bool {
        self.world.system.send(from, to, payload, t).unwrap_or(false)
    }

    /// Moves the system's records into the trace, letting actors react to
    /// each delivery, until nothing new happens.
    pub fn settle(&mut self, t: f64) {
        loop {
            let recs = self.world.system.take_records();
            if recs.is_empty() {
                break;
            }
            for r in recs {
                let delivery = match &r {
                    Record::Deliver { agent, payload, sender, .. } => Some((agent.clone(), payload.clone(), sender.clone())),
                    _ => None,
                };
                self.records.push(r);
                if let Some((agent, payload, sender)) = delivery {
                    self.react(&agent, &payload, sender.as_ref(), t);
                }
            }
        }
    }

    fn react(&mut self, agent: &AgentId, p: &Payload, sender: Option<&AgentId>, t: f64) {
        match self.roles.get(agent).copied().unwrap_or(Role::Other) {
            Role::Inm(i) => {
                let sku = p.arg(0).and_then(Value::as_str).unwrap_or_default().to_string();
                let inv = &mut self.inventory[i];
                match p.kind.as_str() {
                    "shipment" => {
                        let qty = p.arg(1).and_then(Value::as_num).unwrap_or(0.0);
                        *inv.stock.entry(sku.clone()).or_default() += qty;
                        inv.outstanding.insert(sku, false);
                    }
                    "reject" => {
                        inv.outstanding.insert(sku.clone(), false);
                        inv.retry_at.insert(sku, t + self.cfg.retry_after);
                    }
                    _ => {}
                }
            }
            Role::Buyer(i) => match p.kind.as_str() {
                "budget" => self.buyers[i].balance += p.arg(0).and_then(Value::as_num).unwrap_or(0.0),
                "purchaseRequest" => {
                    let sku = p.arg(0).and_then(Value::as_str).unwrap_or_default().to_string();
                    let qty = p.arg(1).and_then(Value::as_num).unwrap_or(0.0);
                    self.buyers[i].queue.push_back(Request { sku, qty, at: t });
                }
                _ => {}
            },
            Role::Vendor(v) => {
                if p.kind == "PO" {
                    if let Some(buyer) = sender {
                        let lat = self.cfg.vendor_latency;
                        let delay = if lat.max > lat.min { self.rng.gen_range(lat.min..=lat.max) } else { lat.min };
                        let action = Action::Ship {
                            vendor: v,
                            to: buyer.clone(),
                            sku: p.arg(0).cloned().unwrap_or_default(),
                            qty: p.arg(1).cloned().unwrap_or_default(),
                        };
                        self.schedule(t + delay, action);
                    }
                }
            }
            Role::Other => {}
        }
    }

    fn price(&self, branch: usize, sku: &str) -> f64 {
        self.cfg.branches[branch].products.iter().find(|p| p.sku == sku).map_or(1.0, |p| p.unit_price)
    }

    fn perform(&mut self, t: f64, action: Action) {
        let cfg = self.cfg.clone();
        let script = self.script.clone();
        match action {
            Action::Consume(i) => {
                let b = &cfg.branches[i];
                let agents = self.world.branches[i].clone();
                for p in &b.products {
                    let inv = &mut self.inventory[i];
                    let stock = inv.stock.entry(p.sku.clone()).or_insert(p.initial_stock);
                    if p.consumption_rate <= 0.0 {
                        continue;
                    }
                    *stock = (*stock - p.consumption_rate * cfg.tick).max(0.0);
                    let low = *stock < p.reorder_point;
                    let busy = inv.outstanding.get(&p.sku).copied().unwrap_or(false);
                    let waiting = inv.retry_at.get(&p.sku).is_some_and(|r| t < *r);
                    if low && !busy && !waiting {
                        inv.outstanding.insert(p.sku.clone(), true);
                        let req = Payload::new("purchaseRequest", vec![Value::str(&p.sku), num(p.order_qty)]);
                        self.send(&agents.inm, &agents.buyer, req, t);
                    }
                }
                self.schedule(t + cfg.tick, Action::Consume(i));
            }
            Action::BuyerWork(i) => {
                let agents = self.world.branches[i].clone();
                let pending: Vec<Request> = self.buyers[i].queue.drain(..).collect();
                for r in pending {
                    let amount = r.qty * self.price(i, &r.sku);
                    if amount <= self.buyers[i].balance {
                        let v = self.buyers[i].next_vendor % self.world.vendors.len();
                        self.buyers[i].next_vendor += 1;
                        let vendor = self.world.vendors[v].clone();
                        let po = Payload::new("PO", vec![Value::str(&r.sku), num(r.qty), num(amount)]);
                        if self.send(&agents.buyer, &vendor, po, t) {
                            self.buyers[i].balance -= amount;
                        }
                    } else if t - r.at >= cfg.max_wait {
                        let rej = Payload::new("reject", vec![Value::str(&r.sku), Value::str("budget")]);
                        self.send(&agents.buyer, &agents.inm, rej, t);
                    } else {
                        self.buyers[i].queue.push_back(r);
                    }
                }
                self.schedule(t + cfg.buyer_interval, Action::BuyerWork(i));
            }
            Action::Drip(i) => {
                let b = &cfg.branches[i];
                let amount = if t == 0.0 { b.initial_budget } else { b.budget_drip_amount };
                let agents = self.world.branches[i].clone();
                if amount > 0.0 {
                    self.send(&agents.buo, &agents.buyer, Payload::new("budget", vec![num(amount)]), t);
                }
                if b.budget_drip_interval > 0.0 && b.budget_drip_amount > 0.0 {
                    self.schedule(t + b.budget_drip_interval, Action::Drip(i));
                }
            }
            Action::ManagerStart(m) => {
                let mc = &cfg.managers[m];
                let me = self.world.managers[m].clone();
                if let Some(b) = self.world.branch(&mc.branch).cloned() {
                    for e in &mc.subscribe {
                        self.send(&me, &b.buyer, Payload::new("subscribe", vec![Value::str(e)]), t);
                    }
                }
            }
            Action::ManagerPoll(m) => {
                let mc = &cfg.managers[m];
                let me = self.world.managers[m].clone();
                if let Some(b) = self.world.branch(&mc.branch).cloned() {
                    for p in ["budget", "POcount", "avDelay"] {
                        self.send(&me, &b.buyer, Payload::new("examine", vec![Value::str(p)]), t);
                    }
                    self.send(&me, &b.inm, Payload::new("examine", vec![Value::str("inflow")]), t);
                }
                if let Some(every) = mc.examine_every {
                    self.schedule(t + every, Action::ManagerPoll(m));
                }
            }
            Action::Inject(k) => {
                let inj = &script.injections[k];
                let Some(i) = cfg.branches.iter().position(|b| b.id == inj.buyer) else { return };
                let buyer = self.world.branches[i].buyer.clone();
                let payload = match &inj.kind {
                    Misbehavior::Overspend { amount } => {
                        let sku = cfg.branches[i].products.first().map_or("misc".to_string(), |p| p.sku.clone());
                        Payload::new("PO", vec![Value::str(sku), num(1.0), num(*amount)])
                    }
                    Misbehavior::UnrequestedPO { sku } => Payload::new("PO", vec![Value::str(sku), num(1.0), num(self.price(i, sku))]),
                };
                let data = json!({ "index": k, "injection": inj, "payload": payload });
                self.world.system.note(t, Some(buyer.clone()), "inject", data);
                let vendor = self.world.vendors[0].clone();
                self.send(&buyer, &vendor, payload, t);
            }
            Action::Ship { vendor, to, sku, qty } => {
                let me = self.world.vendors[vendor].clone();
                let inm = super::world::inm_id(&to.branch);
                self.send(&me, &to, Payload::new("ack", vec![sku.clone(), qty.clone()]), t);
                self.send(&me, &inm, Payload::new("shipment", vec![sku, qty]), t);
            }
        }
    }
}

/// Runs the Acme scenario on a virtual clock up to and including `horizon`.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64, horizon: f64, script: &MisbehaviorScript) -> anyhow::Result<Trace> {
    cfg.validate()?;
    script.validate(cfg, horizon)?;
    let world = AcmeWorld::build(cfg)?;
    run_in(world, cfg, seed, horizon, script)
}

/// Runs the scenario in a world built by the caller.
pub fn run_in(world: AcmeWorld, cfg: &ScenarioConfig, seed: u64, horizon: f64, script: &MisbehaviorScript) -> anyhow::Result<Trace> {
    let mut sim = Simulation::new(world, cfg.clone(), seed, script.clone());
    sim.advance(horizon);
    let header = TraceHeader { seed, horizon, config: cfg.clone(), script: script.clone() };
    Ok(Trace { header, records: sim.take_records() })
}

impl Simulation {
    pub fn new(world: AcmeWorld, cfg: ScenarioConfig, seed: u64, script: MisbehaviorScript) -> Self {
        let mut roles = BTreeMap::new();
        for (i, b) in world.branches.iter().enumerate() {
            roles.insert(b.inm.clone(), Role::Inm(i));
            roles.insert(b.buyer.clone(), Role::Buyer(i));
        }
        for (i, v) in world.vendors.iter().enumerate() {
            roles.insert(v.clone(), Role::Vendor(i));
        }
        let inventory = cfg
            .branches
            .iter()
            .map(|b| Inventory {
                stock: b.products.iter().map(|p| (p.sku.clone(), p.initial_stock)).collect(),
                outstanding: BTreeMap::new(),
                retry_at: BTreeMap::new(),
            })
            .collect();
        let buyers = cfg.branches.iter().map(|_| BuyerActor { balance: 0.0, queue: VecDeque::new(), next_vendor: 0 }).collect();
        let mut sim = Simulation {
            cfg: Arc::new(cfg),
            script: Arc::new(script),
            seed,
            world,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: BinaryHeap::new(),
            seq: 0,
            inventory,
            buyers,
            roles,
            records: Vec::new(),
        };
        sim.settle(0.0);
        let cfg = sim.cfg.clone();
        for i in 0..cfg.branches.len() {
            sim.schedule(0.0, Action::Drip(i));
        }
        for (m, mc) in cfg.managers.iter().enumerate() {
            sim.schedule(0.0, Action::ManagerStart(m));
            if let Some(every) = mc.examine_every {
                sim.schedule(every, Action::ManagerPoll(m));
            }
        }
        for i in 0..cfg.branches.len() {
            sim.schedule(cfg.tick, Action::Consume(i));
            sim.schedule(cfg.buyer_interval, Action::BuyerWork(i));
        }
        for (k, inj) in sim.script.clone().injections.iter().enumerate() {
            sim.schedule(inj.time, Action::Inject(k));
        }
        sim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn world(&self) -> &AcmeWorld {
        &self.world
    }

    /// Direct access to the mediated system, for agents driven from outside
    /// the simulation. Call [`Simulation::settle`] afterwards so the actors
    /// see what was delivered to them.
    pub fn system_mut(&mut self) -> &mut System {
        &mut self.world.system
    }

    /// Time of the next scheduled action or due obligation.
    pub fn next_time(&self) -> Option<f64> {
        let a = self.queue.peek().map(|s| s.t);
        let d = self.world.system.next_due();
        match (a, d) {
            (Some(a), Some(d)) => Some(a.min(d)),
            (a, d) => a.or(d),
        }
    }

    /// Processes every action and obligation due at or before `until`, in
    /// time order; obligations go first on ties.
    pub fn advance(&mut self, until: f64) {
        loop {
            let next_action = self.queue.peek().map(|s| s.t);
            let next_due = self.world.system.next_due();
            let obligation_first = match (next_due, next_action) {
                (Some(d), Some(a)) => d <= a,
                (Some(_), None) => true,
                _ => false,
            };
            if obligation_first {
                let t = next_due.unwrap_or_default();
                if t > until {
                    break;
                }
                self.world.system.tick(t);
                self.settle(t);
                continue;
            }
            match self.queue.peek() {
                Some(next) if next.t <= until => {}
                _ => break,
            }
            let next = self.queue.pop().expect("peeked");
            self.perform(next.t, next.action);
            self.settle(next.t);
        }
    }

    /// Records processed so far, oldest first.
    pub fn take_records(&mut self) -> Vec<Record> {
        std::mem::take(&mut self.records)
    }
}
