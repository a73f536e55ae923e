use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use tokio::sync::{broadcast, mpsc};

use super::config::CosConfig;
use super::frame::{Frame, FrameBody};
use crate::capabilities::audit::{AuditRecord, AuditSink, JsonlAuditWriter};
use crate::engine::{AgentId, Layer, Payload};
use crate::hierarchy::{build_ensemble, load_sources, LawTree};
use crate::lang::render;
use crate::runtime::{CertAuthority, Certificate, Envelope, Pool, PoolConfig, Record, System};
use crate::sim::{laws, AcmeWorld, MisbehaviorScript, Simulation};
use crate::value::Value;

const RECENT_AUDIT: usize = 10_000;

/// Something that happened inside the service that observers may care about.
#[derive(Debug, Clone, PartialEq)]
pub enum HubEvent {
    Delivery { t: f64, agent: AgentId, payload: Payload, sender: Option<AgentId> },
    Audit(AuditRecord),
}

enum Engine {
    Plain(System),
    Sim(Box<Simulation>),
}

impl Engine {
    fn system(&mut self) -> &mut System {
        match self {
            Engine::Plain(s) => s,
            Engine::Sim(s) => s.system_mut(),
        }
    }

    fn system_ref(&self) -> &System {
        match self {
            Engine::Plain(s) => s,
            Engine::Sim(s) => &s.world().system,
        }
    }

    /// Advances to `now` and collects every record produced since the last call.
    fn collect(&mut self, now: f64) -> Vec<Record> {
        match self {
            Engine::Plain(s) => {
                s.tick(now);
                s.take_records()
            }
            Engine::Sim(s) => {
                s.settle(now);
                s.advance(now);
                s.take_records()
            }
        }
    }
}

struct Inner {
    engine: Engine,
    routes: BTreeMap<AgentId, mpsc::UnboundedSender<Frame>>,
    next_pool: usize,
    audit: Option<JsonlAuditWriter>,
    recent: VecDeque<AuditRecord>,
    clock: f64,
}

/// The state shared by the controller service and the gateway: one mediated
/// system behind a lock, driven by the wall clock.
pub struct Hub {
    inner: Mutex<Inner>,
    started: Instant,
    time_scale: f64,
    events: broadcast::Sender<HubEvent>,
    tree: Arc<LawTree>,
    ca: CertAuthority,
    pools: usize,
}

/// Records produced while carrying out one request.
#[derive(Debug, Clone, Default)]
pub struct Step {
    pub forwarded: bool,
    pub records: Vec<Record>,
}

impl Hub {
    pub fn from_config(cfg: &CosConfig) -> anyhow::Result<Arc<Hub>> {
        cfg.validate()?;
        let ca = match &cfg.ca_secret {
            Some(hex) => CertAuthority::from_secret_hex(&cfg.ca_label, hex).ok_or_else(|| anyhow::anyhow!("invalid CA secret"))?,
            None => CertAuthority::deterministic(&cfg.ca_label),
        };
        let scenario = cfg.scenario();
        let (engine, tree, time_scale) = if let Some(mode) = &cfg.simulation {
            let sources = laws::ensemble(&scenario.law_params(&ca.public_hex()));
            let world = AcmeWorld::build_with(&scenario, ca.clone(), &sources)?;
            let tree = world.tree.clone();
            let sim = Simulation::new(world, scenario.clone(), mode.seed, MisbehaviorScript::default());
            (Engine::Sim(Box::new(sim)), tree, mode.time_scale)
        } else {
            let sources = match &cfg.manifest {
                Some(m) => load_sources(m)?,
                None => laws::ensemble(&scenario.law_params(&ca.public_hex())),
            };
            let tree = Arc::new(build_ensemble(&sources).map_err(|d| anyhow::anyhow!("{}", render(&d)))?);
            let mut system = System::new();
            for i in 0..cfg.pools {
                system.add_pool(Pool::new(PoolConfig::new(&format!("pool{i}")).with_authority(&ca.public_hex()), tree.clone()));
            }
            (Engine::Plain(system), tree, 1.0)
        };
        let audit = match &cfg.audit_file {
            Some(p) => Some(JsonlAuditWriter::open(p)?),
            None => None,
        };
        let (events, _) = broadcast::channel(4096);
        let hub = Arc::new(Hub {
            inner: Mutex::new(Inner { engine, routes: BTreeMap::new(), next_pool: 0, audit, recent: VecDeque::new(), clock: 0.0 }),
            started: Instant::now(),
            time_scale,
            events,
            tree,
            ca,
            pools: cfg.pools,
        });
        for t in &cfg.tokens {
            let id = AgentId::new(&t.manager, &t.branch, Layer::M);
            if hub.leaf_of(&id).is_none() {
                hub.adopt(&hub.ca.issue(&id), &cfg.manager_law, None, None)?;
            }
        }
        hub.pump();
        Ok(hub)
    }

    pub fn tree(&self) -> &Arc<LawTree> {
        &self.tree
    }

    pub fn authority(&self) -> &CertAuthority {
        &self.ca
    }

    pub fn subscribe(&self) -> broadcast::Receiver<HubEvent> {
        self.events.subscribe()
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn now(&self, inner: &mut Inner) -> f64 {
        let t = self.started.elapsed().as_secs_f64() * self.time_scale;
        inner.clock = inner.clock.max(t);
        inner.clock
    }

    /// Service time now, in the system's time units.
    pub fn clock(&self) -> f64 {
        let mut g = self.lock();
        self.now(&mut g)
    }

    /// Fires due obligations and, in simulation mode, advances the actors.
    pub fn pump(&self) -> Vec<Record> {
        let mut g = self.lock();
        let now = self.now(&mut g);
        let recs = g.engine.collect(now);
        self.dispatch(&mut g, &recs);
        recs
    }

    pub fn agents(&self) -> Vec<(AgentId, String)> {
        let g = self.lock();
        let sys = g.engine.system_ref();
        sys.agents()
            .filter_map(|a| {
                let pool = sys.pool_of(a)?;
                Some((a.clone(), sys.pool(pool).leaf_of(a)?.to_string()))
            })
            .collect()
    }

    pub fn leaf_of(&self, id: &AgentId) -> Option<String> {
        let g = self.lock();
        let sys = g.engine.system_ref();
        sys.pool(sys.pool_of(id)?).leaf_of(id).map(str::to_string)
    }

    pub fn state_value(&self, id: &AgentId, key: &str) -> Option<Value> {
        let g = self.lock();
        g.engine.system_ref().state(id).and_then(|s| s.iter().find(|(k, _)| k.as_str() == key).map(|(_, v)| v.clone()))
    }

    pub fn adopt(
        &self,
        cert: &Certificate,
        law: &str,
        pool: Option<usize>,
        route: Option<mpsc::UnboundedSender<Frame>>,
    ) -> anyhow::Result<AgentId> {
        let mut g = self.lock();
        let now = self.now(&mut g);
        let pool = match pool {
            Some(p) if p < self.pools => p,
            Some(p) => anyhow::bail!("no pool {p}"),
            None => {
                g.next_pool += 1;
                (g.next_pool - 1) % self.pools
            }
        };
        let result = g.engine.system().adopt(pool, cert, law, now);
        let recs = g.engine.collect(now);
        self.dispatch(&mut g, &recs);
        let id = result.map_err(|e| anyhow::anyhow!("{e}"))?;
        if let Some(r) = route {
            g.routes.insert(id.clone(), r);
        }
        Ok(id)
    }

    pub fn send(&self, from: &AgentId, to: &AgentId, payload: Payload) -> anyhow::Result<Step> {
        let mut g = self.lock();
        let now = self.now(&mut g);
        let pre = g.engine.collect(now);
        self.dispatch(&mut g, &pre);
        let forwarded = g.engine.system().send(from, to, payload, now).map_err(|e| anyhow::anyhow!("{e}"))?;
        let records = g.engine.collect(now);
        self.dispatch(&mut g, &records);
        Ok(Step { forwarded, records })
    }

    pub fn inject(&self, env: Envelope) -> Step {
        let mut g = self.lock();
        let now = self.now(&mut g);
        g.engine.system().inject(env, now);
        let records = g.engine.collect(now);
        self.dispatch(&mut g, &records);
        Step { forwarded: true, records }
    }

    pub fn forget_routes(&self, ids: &[AgentId]) {
        let mut g = self.lock();
        for id in ids {
            g.routes.remove(id);
        }
    }

    /// The most recent audit records, oldest first.
    pub fn recent_audit(&self, limit: usize) -> Vec<AuditRecord> {
        let g = self.lock();
        let skip = g.recent.len().saturating_sub(limit);
        g.recent.iter().skip(skip).cloned().collect()
    }

    fn dispatch(&self, g: &mut Inner, records: &[Record]) {
        for r in records {
            match r {
                Record::Deliver { t, agent, payload, sender, class } => {
                    if let Some(route) = g.routes.get(agent) {
                        let body = if payload.kind == "value" {
                            FrameBody::ExamineReply {
                                agent: agent.clone(),
                                from: sender.clone(),
                                property: payload.arg(0).and_then(Value::as_str).unwrap_or_default().to_string(),
                                value: payload.arg(1).cloned().unwrap_or_default(),
                            }
                        } else {
                            FrameBody::Event { agent: agent.clone(), payload: payload.clone(), sender: sender.clone(), class: *class }
                        };
                        let _ = route.send(Frame::new(body));
                    }
                    let _ = self.events.send(HubEvent::Delivery {
                        t: *t,
                        agent: agent.clone(),
                        payload: payload.clone(),
                        sender: sender.clone(),
                    });
                }
                Record::Audit { record } => {
                    if let Some(w) = g.audit.as_mut() {
                        if let Err(e) = w.append(record) {
                            eprintln!("audit trail write failed: {e}");
                        }
                    }
                    if g.recent.len() == RECENT_AUDIT {
                        g.recent.pop_front();
                    }
                    g.recent.push_back(record.clone());
                    let _ = self.events.send(HubEvent::Audit(record.clone()));
                }
                _ => {}
            }
        }
    }
}
