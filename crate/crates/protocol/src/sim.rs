//! Event-driven network of regular nodes and base stations.

use std::collections::{BTreeMap, VecDeque};

use basehop_core::{EnergyVector, RechargeTrace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::{quantize_battery, EnergyBreakdown, EnergyParams};
use crate::error::{ProtocolError, Result};
use crate::handover::{process_advert, AdvertOutcome, HandoverTable};
use crate::log::EventLog;
use crate::message::{ActiveKey, Advert, Beacon, Message, MessageKind, Payload};
use crate::queue::{as_seconds, seconds, EventQueue, Micros, SECOND};
use crate::scenario::{Action, NodeKind, ProtocolPolicy, Scenario};
use crate::topology::{build_topology, Position, Topology};

/// Missed beacon periods before a route expires and a passive BS takes over.
pub const BEACON_TIMEOUT_PERIODS: u64 = 3;
/// Period of the passive-BS takeover check.
pub const WATCHDOG_PERIOD: Micros = 5 * SECOND;
/// How long the active BS waits for a `BS_UP_ACK` before the next candidate.
pub const RETRY_WINDOW: Micros = 10 * SECOND;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Regular,
    PassiveBs,
    ActiveBs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub key: ActiveKey,
    pub seq: u64,
    pub hop: u32,
    pub parent: Option<usize>,
    pub refreshed: Micros,
}

#[derive(Debug, Clone)]
struct PendingHandover {
    attempt: u64,
    remaining: VecDeque<usize>,
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: u32,
    pub position: Position,
    pub role: Role,
    pub alive: bool,
    pub booted: bool,
    pub route: Option<Route>,
    pub battery: f64,
    /// Time of the last accepted beacon (or boot / role change).
    pub last_beacon_seen: Micros,
    pub energy: EnergyBreakdown,
    prev_route: Option<Route>,
    life: u64,
    epoch: u64,
    term: u32,
    known_term: u32,
    beacon_seq: u64,
    pending_activation: Option<u32>,
    pending: Option<PendingHandover>,
    down_sent: Vec<ActiveKey>,
    table: HandoverTable,
    active_since: Option<Micros>,
    slot_active: Micros,
}

impl NodeState {
    pub fn is_bs(&self) -> bool {
        self.role != Role::Regular
    }

    pub fn hop_distance(&self) -> Option<u32> {
        self.route.as_ref().map(|r| r.hop)
    }

    pub fn parent(&self) -> Option<usize> {
        self.route.as_ref().and_then(|r| r.parent)
    }

    pub fn known_active(&self) -> Option<usize> {
        self.route.as_ref().map(|r| r.key.active)
    }

    pub fn table(&self) -> &HandoverTable {
        &self.table
    }

    pub fn term(&self) -> u32 {
        self.term
    }

    fn own_key(&self, index: usize) -> ActiveKey {
        ActiveKey { term: self.term, active: index }
    }
}

#[derive(Debug, Clone)]
enum Event {
    Boot { node: usize, life: u64 },
    Deliver { to: usize, msg: Message },
    BeaconTick { node: usize, epoch: u64 },
    Watchdog { node: usize, life: u64 },
    AdvertTick(usize),
    DataTick,
    GprsTick,
    SlotBoundary(u64),
    HandoverTimeout { node: usize, attempt: u64 },
    Activate { node: usize, life: u64, term: u32 },
    Script(usize),
}

/// Counts per message kind, indexed by `MessageKind::index`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessageCounts {
    pub originated: [f64; 6],
    pub transmitted: [f64; 6],
    pub received: [f64; 6],
    pub dropped: [f64; 6],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stats {
    pub messages: MessageCounts,
    pub adverts_stored: u64,
    pub adverts_stale: u64,
    pub adverts_dropped: u64,
    pub handovers: u64,
    pub handover_retries: u64,
    pub handover_failures: u64,
    pub routing_cycles: u64,
    pub data_undeliverable: f64,
}

/// Per-slot view of the base stations, in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: u64,
    pub battery: Vec<f64>,
    pub consumed: Vec<f64>,
    pub recharged: Vec<f64>,
    pub active_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ComponentStatus {
    Converged {
        active: usize,
    },
    /// No base station in the component.
    Orphan,
    NoActive,
    MultipleActive(Vec<usize>),
    Unrouted {
        active: usize,
        unrouted: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentReport {
    pub members: Vec<usize>,
    pub status: ComponentStatus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvergenceReport {
    pub components: Vec<ComponentReport>,
}

impl ConvergenceReport {
    pub fn is_converged(&self) -> bool {
        self.components.iter().all(|c| matches!(c.status, ComponentStatus::Converged { .. } | ComponentStatus::Orphan))
    }

    pub fn actives(&self) -> Vec<usize> {
        self.components
            .iter()
            .filter_map(|c| match c.status {
                ComponentStatus::Converged { active } => Some(active),
                _ => None,
            })
            .collect()
    }

    pub fn orphans(&self) -> usize {
        self.components.iter().filter(|c| c.status == ComponentStatus::Orphan).count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RouteCheck {
    pub cycles: usize,
    pub unsound: usize,
}

pub struct Simulator {
    params: EnergyParams,
    policy: ProtocolPolicy,
    capacity: f64,
    drop_prob: f64,
    hop_delay: (Micros, Micros),
    period: Micros,
    advert_period: Micros,
    gprs_interval: Micros,
    slot: Micros,
    duration: Micros,
    script: Vec<crate::scenario::Directive>,
    topo: Topology,
    nodes: Vec<NodeState>,
    bs: Vec<usize>,
    bs_slot: Vec<Option<usize>>,
    recharge: Option<RechargeTrace>,
    queue: EventQueue<Event>,
    rng: ChaCha8Rng,
    log: EventLog,
    stats: Stats,
    last_data_tick: Micros,
    next_attempt: u64,
    last_beacon_origin: Micros,
    slot_start_energy: Vec<f64>,
    slot_recharge: Vec<f64>,
    slots: Vec<SlotRecord>,
}

impl Simulator {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let mut specs = scenario.nodes.clone();
        specs.sort_by_key(|n| n.id);
        let positions: Vec<Position> = specs.iter().map(|n| Position::new(n.x, n.y)).collect();
        let topo = build_topology(&positions, scenario.range_m)?;
        let period = seconds(scenario.traffic.beacon_period_s);
        let advert_period = seconds(scenario.traffic.advert_period_s);
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let mut queue = EventQueue::new();

        let mut nodes = Vec::with_capacity(specs.len());
        let mut bs = Vec::new();
        let mut bs_slot = vec![None; specs.len()];
        for (i, spec) in specs.iter().enumerate() {
            let role = match spec.kind {
                NodeKind::Bs => {
                    bs_slot[i] = Some(bs.len());
                    bs.push(i);
                    Role::PassiveBs
                }
                NodeKind::Regular => Role::Regular,
            };
            nodes.push(NodeState {
                id: spec.id,
                position: positions[i],
                role,
                alive: true,
                booted: false,
                route: None,
                battery: spec.battery_j.unwrap_or(scenario.initial_battery_j),
                last_beacon_seen: 0,
                energy: EnergyBreakdown::default(),
                prev_route: None,
                life: 0,
                epoch: 0,
                term: 0,
                known_term: 0,
                beacon_seq: 0,
                pending_activation: None,
                pending: None,
                down_sent: Vec::new(),
                table: HandoverTable::new(),
                active_since: None,
                slot_active: 0,
            });
            queue.push(seconds(spec.boot_s), Event::Boot { node: i, life: 0 });
        }
        // Advert phases stay clear of slot boundaries so that handovers and
        // adverts never interleave.
        for &b in &bs {
            let phase = rng.random_range(advert_period / 4..=3 * advert_period / 4);
            queue.push(phase, Event::AdvertTick(b));
        }
        queue.push(period / 2, Event::DataTick);
        queue.push(seconds(scenario.traffic.gprs_interval_s) / 2, Event::GprsTick);
        queue.push(seconds(scenario.slot_s), Event::SlotBoundary(1));
        for (k, d) in scenario.script.iter().enumerate() {
            queue.push(seconds(d.at_s), Event::Script(k));
        }

        let recharge = match &scenario.recharge_w {
            Some(w) => Some(RechargeTrace::from_samples(vec![w.clone()])?),
            None => None,
        };
        let [lo, hi] = scenario.hop_delay_ms;
        let slot_start_energy = bs.iter().map(|_| 0.0).collect();
        let slot_recharge = bs.iter().map(|_| 0.0).collect();
        Ok(Self {
            params: EnergyParams { radio: scenario.radio, traffic: scenario.traffic },
            policy: scenario.policy,
            capacity: scenario.capacity(),
            drop_prob: scenario.drop_prob,
            hop_delay: (seconds(lo / 1e3), seconds(hi / 1e3)),
            period,
            advert_period,
            gprs_interval: seconds(scenario.traffic.gprs_interval_s),
            slot: seconds(scenario.slot_s),
            duration: seconds(scenario.duration_s),
            script: scenario.script.clone(),
            topo,
            nodes,
            bs,
            bs_slot,
            recharge,
            queue,
            rng,
            log: EventLog::new(true),
            stats: Stats::default(),
            last_data_tick: 0,
            next_attempt: 0,
            last_beacon_origin: 0,
            slot_start_energy,
            slot_recharge,
            slots: Vec::new(),
        })
    }

    /// Recharge power per slot (W), one column per BS in id order. A constant
    /// trace (one row) applies to every slot; beyond the end of a longer
    /// trace the recharge is zero.
    pub fn with_recharge(mut self, trace: RechargeTrace) -> Result<Self> {
        if trace.bs_count() != self.bs.len() {
            return Err(ProtocolError::Scenario(format!(
                "recharge trace has {} columns for {} base stations",
                trace.bs_count(),
                self.bs.len()
            )));
        }
        self.recharge = Some(trace);
        Ok(self)
    }

    pub fn with_logging(mut self, enabled: bool) -> Self {
        self.log = EventLog::new(enabled);
        self
    }

    // ---- accessors ----

    pub fn now(&self) -> Micros {
        self.queue.now()
    }

    pub fn now_s(&self) -> f64 {
        as_seconds(self.queue.now())
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, id: u32) -> Result<&NodeState> {
        Ok(&self.nodes[self.index_of(id)?])
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn params(&self) -> &EnergyParams {
        &self.params
    }

    pub fn beacon_period(&self) -> Micros {
        self.period
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn slots(&self) -> &[SlotRecord] {
        &self.slots
    }

    /// BS node indices in id order.
    pub fn bs_indices(&self) -> &[usize] {
        &self.bs
    }

    pub fn index_of(&self, id: u32) -> Result<usize> {
        self.nodes.binary_search_by_key(&id, |n| n.id).map_err(|_| ProtocolError::UnknownNode(id))
    }

    pub fn id_of(&self, index: usize) -> u32 {
        self.nodes[index].id
    }

    /// Ids of nodes currently holding the active role.
    pub fn active_ids(&self) -> Vec<u32> {
        self.nodes.iter().filter(|n| n.alive && n.role == Role::ActiveBs).map(|n| n.id).collect()
    }

    fn present(&self) -> Vec<bool> {
        self.nodes.iter().map(|n| n.alive && n.booted).collect()
    }

    // ---- driving ----

    /// Process the next event; false when the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some((_, event)) = self.queue.pop() else { return false };
        self.handle(event);
        true
    }

    pub fn run_until(&mut self, t: Micros) {
        while self.queue.peek_time().is_some_and(|next| next <= t) {
            self.step();
        }
        self.queue.advance_to(t);
    }

    pub fn run_until_s(&mut self, t: f64) {
        self.run_until(seconds(t));
    }

    /// Run to the scenario duration.
    pub fn run(&mut self) {
        self.run_until(self.duration);
    }

    /// Run to `deadline`, sampling convergence every `check`. Returns the start
    /// of the final converged stretch, if the run ends converged.
    pub fn run_until_converged(&mut self, deadline: Micros, check: Micros) -> Option<Micros> {
        let mut since = self.convergence().is_converged().then_some(self.now());
        let check = check.max(1);
        while self.now() < deadline {
            let t = (self.now() + check).min(deadline);
            self.run_until(t);
            if self.convergence().is_converged() {
                since.get_or_insert(t);
            } else {
                since = None;
            }
        }
        since
    }

    /// Let the latest beacon flood finish so that hop counts are settled.
    pub fn settle(&mut self) {
        let quiet = self.last_beacon_origin + (self.nodes.len() as u64 + 2) * self.hop_delay.1;
        if quiet > self.now() {
            self.run_until(quiet);
        }
    }

    // ---- external operations ----

    pub fn inject_failure(&mut self, id: u32) -> Result<()> {
        let i = self.index_of(id)?;
        self.fail(i);
        Ok(())
    }

    pub fn revive(&mut self, id: u32) -> Result<()> {
        let i = self.index_of(id)?;
        self.revive_node(i);
        Ok(())
    }

    pub fn inject_split(&mut self, groups: &[Vec<u32>]) -> Result<()> {
        let groups = groups
            .iter()
            .map(|g| g.iter().map(|&id| self.index_of(id)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        self.topo.partition(&groups);
        self.log.push(self.now(), 0, "split", || format!("{} groups", groups.len()));
        Ok(())
    }

    pub fn heal(&mut self) {
        self.topo.heal();
        self.log.push(self.now(), 0, "heal", String::new);
    }

    pub fn set_battery(&mut self, id: u32, joules: f64) -> Result<()> {
        let i = self.index_of(id)?;
        self.nodes[i].battery = joules;
        Ok(())
    }

    /// Ask every active BS to hand over to `next_bs` first, falling back to
    /// the policy ranking. A no-op when `next_bs` already holds the role.
    pub fn execute_handover(&mut self, next_bs: u32) -> Result<()> {
        let target = self.index_of(next_bs)?;
        if self.bs_slot[target].is_none() {
            return Err(ProtocolError::Scenario(format!("node {next_bs} is not a base station")));
        }
        let actives: Vec<usize> =
            (0..self.nodes.len()).filter(|&i| self.nodes[i].alive && self.nodes[i].role == Role::ActiveBs).collect();
        for a in actives {
            if a == target {
                self.log.push(self.now(), self.nodes[a].id, "stay", || "already active".into());
                continue;
            }
            if self.nodes[a].table.get(target).is_none() {
                self.log.push(self.now(), self.nodes[a].id, "handover_unknown", || format!("target={next_bs}"));
                continue;
            }
            let mut order: VecDeque<usize> = VecDeque::from([target]);
            order.extend(self.ranking(a).into_iter().filter(|&c| c != target));
            self.start_handover(a, order);
        }
        Ok(())
    }

    // ---- observation ----

    /// Component-wise view over booted, alive nodes.
    pub fn convergence(&self) -> ConvergenceReport {
        let present = self.present();
        let now = self.now();
        let stale = self.stale_after();
        let components = self
            .topo
            .components(&present)
            .into_iter()
            .map(|members| {
                let status = if !members.iter().any(|&m| self.nodes[m].is_bs()) {
                    ComponentStatus::Orphan
                } else {
                    let actives: Vec<usize> =
                        members.iter().copied().filter(|&m| self.nodes[m].role == Role::ActiveBs).collect();
                    match actives.as_slice() {
                        [] => ComponentStatus::NoActive,
                        [a] => {
                            let key = self.nodes[*a].own_key(*a);
                            let unrouted = members
                                .iter()
                                .filter(|&&m| match &self.nodes[m].route {
                                    Some(r) => r.key != key || now.saturating_sub(r.refreshed) > stale,
                                    None => true,
                                })
                                .count();
                            if unrouted == 0 {
                                ComponentStatus::Converged { active: *a }
                            } else {
                                ComponentStatus::Unrouted { active: *a, unrouted }
                            }
                        }
                        _ => ComponentStatus::MultipleActive(actives),
                    }
                };
                ComponentReport { members, status }
            })
            .collect();
        ConvergenceReport { components }
    }

    /// Parent-pointer cycles and hop inconsistencies among present nodes. A
    /// parent already carrying a newer beacon is exempt from the hop check.
    pub fn check_routes(&self) -> RouteCheck {
        let mut check = RouteCheck::default();
        let n = self.nodes.len();
        for i in 0..n {
            let node = &self.nodes[i];
            if !(node.alive && node.booted) {
                continue;
            }
            let Some(r) = &node.route else { continue };
            let mut w = r.parent;
            let mut steps = 0;
            while let Some(p) = w {
                if p == i {
                    check.cycles += 1;
                    break;
                }
                steps += 1;
                if steps > n {
                    break;
                }
                w = self.nodes[p].parent();
            }
            if let Some(p) = r.parent {
                let pn = &self.nodes[p];
                let sound = pn.alive
                    && self.topo.is_linked(i, p)
                    && pn.route.as_ref().is_some_and(|pr| {
                        pr.key == r.key && (pr.seq > r.seq || (pr.seq == r.seq && pr.hop + 1 == r.hop))
                    });
                if !sound {
                    check.unsound += 1;
                }
            } else if r.hop != 0 || node.role != Role::ActiveBs {
                check.unsound += 1;
            }
        }
        check
    }

    /// Consumption of each BS during `slot` (1-based), net of nothing.
    pub fn account_energy(&self, slot: u64) -> Option<EnergyVector> {
        self.slots.iter().find(|s| s.slot == slot).map(|s| EnergyVector(s.consumed.clone()))
    }

    // ---- internals ----

    fn stale_after(&self) -> Micros {
        self.period * 3 / 2
    }

    fn hop_delay(&mut self) -> Micros {
        let (lo, hi) = self.hop_delay;
        if hi > lo {
            self.rng.random_range(lo..=hi)
        } else {
            lo
        }
    }

    fn dropped_in_air(&mut self) -> bool {
        self.drop_prob > 0.0 && self.rng.random::<f64>() < self.drop_prob
    }

    fn drain(&mut self, i: usize, joules: f64) {
        self.nodes[i].battery -= joules;
    }

    fn charge_tx(&mut self, i: usize, bytes: u32) {
        let j = self.params.radio.tx_joules(bytes);
        self.nodes[i].energy.tx += j;
        self.drain(i, j);
    }

    fn charge_rx(&mut self, i: usize, bytes: u32) {
        let j = self.params.radio.rx_joules(bytes);
        self.nodes[i].energy.rx += j;
        self.drain(i, j);
    }

    fn broadcast(&mut self, from: usize, kind: MessageKind, payload: Payload, size_bytes: u32) {
        self.stats.messages.transmitted[kind.index()] += 1.0;
        self.charge_tx(from, size_bytes);
        let neighbors = self.topo.neighbors(from).to_vec();
        for to in neighbors {
            if self.dropped_in_air() {
                self.stats.messages.dropped[kind.index()] += 1.0;
                continue;
            }
            let delay = self.hop_delay();
            let msg = Message { kind, src: from, dst: None, payload: payload.clone(), size_bytes };
            self.queue.push_in(delay, Event::Deliver { to, msg });
        }
    }

    fn unicast(&mut self, from: usize, to: usize, kind: MessageKind, payload: Payload, size_bytes: u32) {
        self.stats.messages.transmitted[kind.index()] += 1.0;
        self.charge_tx(from, size_bytes);
        if !self.topo.is_linked(from, to) || self.dropped_in_air() {
            self.stats.messages.dropped[kind.index()] += 1.0;
            if kind == MessageKind::BsAdvert {
                self.stats.adverts_dropped += 1;
            }
            return;
        }
        let delay = self.hop_delay();
        let msg = Message { kind, src: from, dst: Some(to), payload, size_bytes };
        self.queue.push_in(delay, Event::Deliver { to, msg });
    }

    fn handle(&mut self, event: Event) {
        match event {
            Event::Boot { node, life } => self.on_boot(node, life),
            Event::Deliver { to, msg } => self.on_deliver(to, msg),
            Event::BeaconTick { node, epoch } => {
                let n = &self.nodes[node];
                if n.alive && n.role == Role::ActiveBs && n.epoch == epoch {
                    self.send_beacon(node);
                    self.queue.push_in(self.period, Event::BeaconTick { node, epoch });
                }
            }
            Event::Watchdog { node, life } => self.on_watchdog(node, life),
            Event::AdvertTick(node) => self.on_advert_tick(node),
            Event::DataTick => self.on_data_tick(),
            Event::GprsTick => {
                let j = self.params.radio.gprs_joules();
                for i in 0..self.nodes.len() {
                    if self.nodes[i].alive && self.nodes[i].role == Role::ActiveBs {
                        self.nodes[i].energy.gprs += j;
                        self.drain(i, j);
                    }
                }
                self.queue.push_in(self.gprs_interval, Event::GprsTick);
            }
            Event::SlotBoundary(k) => self.on_slot_boundary(k),
            Event::HandoverTimeout { node, attempt } => {
                let n = &self.nodes[node];
                if n.alive && n.role == Role::ActiveBs && n.pending.as_ref().is_some_and(|p| p.attempt == attempt) {
                    self.stats.handover_retries += 1;
                    self.log.push(self.now(), n.id, "retry", || format!("attempt={attempt}"));
                    self.try_next_candidate(node);
                }
            }
            Event::Activate { node, life, term } => {
                let n = &self.nodes[node];
                if n.alive && n.life == life && n.pending_activation == Some(term) && n.role == Role::PassiveBs {
                    self.activate(node, term, "handover");
                }
            }
            Event::Script(k) => self.apply_directive(k),
        }
    }

    fn on_boot(&mut self, i: usize, life: u64) {
        let now = self.now();
        let n = &mut self.nodes[i];
        if !n.alive || n.booted || n.life != life {
            return;
        }
        n.booted = true;
        n.last_beacon_seen = now;
        let (id, is_bs) = (n.id, n.is_bs());
        self.log.push(now, id, "boot", String::new);
        if is_bs {
            self.queue.push_in(WATCHDOG_PERIOD, Event::Watchdog { node: i, life });
        }
    }

    fn on_watchdog(&mut self, i: usize, life: u64) {
        let now = self.now();
        let timeout = BEACON_TIMEOUT_PERIODS * self.period;
        let n = &self.nodes[i];
        if !n.alive || n.life != life {
            return;
        }
        if n.booted
            && n.role == Role::PassiveBs
            && n.pending_activation.is_none()
            && now.saturating_sub(n.last_beacon_seen) >= timeout
        {
            let term = n.known_term;
            self.activate(i, term, "timeout");
        }
        self.queue.push_in(WATCHDOG_PERIOD, Event::Watchdog { node: i, life });
    }

    fn activate(&mut self, i: usize, term: u32, reason: &'static str) {
        let now = self.now();
        let n = &mut self.nodes[i];
        n.role = Role::ActiveBs;
        n.term = term;
        n.known_term = n.known_term.max(term);
        n.epoch += 1;
        n.beacon_seq = 0;
        n.pending_activation = None;
        n.pending = None;
        n.table.clear();
        if n.route.as_ref().is_some_and(|r| r.key.active != i) {
            n.prev_route = n.route.take();
        }
        n.route = Some(Route { key: ActiveKey { term, active: i }, seq: 0, hop: 0, parent: None, refreshed: now });
        n.active_since = Some(now);
        let (id, epoch) = (n.id, n.epoch);
        self.log.push(now, id, "activate", || format!("{reason} term={term}"));
        self.send_beacon(i);
        self.queue.push_in(self.period, Event::BeaconTick { node: i, epoch });
    }

    fn step_down(&mut self, i: usize, reason: &'static str) {
        let now = self.now();
        let n = &mut self.nodes[i];
        if n.role != Role::ActiveBs {
            return;
        }
        if let Some(since) = n.active_since.take() {
            n.slot_active += now - since;
        }
        n.role = Role::PassiveBs;
        n.epoch += 1;
        n.pending = None;
        n.table.clear();
        n.route = None;
        n.last_beacon_seen = now;
        let id = n.id;
        self.log.push(now, id, "step_down", || reason.to_string());
    }

    fn send_beacon(&mut self, i: usize) {
        let now = self.now();
        let n = &mut self.nodes[i];
        n.beacon_seq += 1;
        let key = n.own_key(i);
        let seq = n.beacon_seq;
        if let Some(r) = n.route.as_mut() {
            r.seq = seq;
            r.refreshed = now;
        }
        self.last_beacon_origin = now;
        self.stats.messages.originated[MessageKind::Beacon.index()] += 1.0;
        let beacon = Beacon { key, seq, hop: 0, timestamp: now };
        let size = self.params.radio.beacon_bytes;
        self.broadcast(i, MessageKind::Beacon, Payload::Beacon(beacon), size);
    }

    fn on_deliver(&mut self, to: usize, msg: Message) {
        let kind = msg.kind;
        if !(self.nodes[to].alive && self.nodes[to].booted) {
            self.stats.messages.dropped[kind.index()] += 1.0;
            if kind == MessageKind::BsAdvert {
                self.stats.adverts_dropped += 1;
            }
            return;
        }
        self.charge_rx(to, msg.size_bytes);
        self.stats.messages.received[kind.index()] += 1.0;
        let from = msg.src;
        match msg.payload {
            Payload::Beacon(b) => self.on_beacon(to, from, b),
            Payload::Advert(a) => self.on_advert(to, a),
            Payload::BsUp { origin, target, term, attempt, route, pos } => {
                self.on_bs_up(to, origin, target, term, attempt, route, pos)
            }
            Payload::BsUpAck { origin, dest, attempt, route, pos } => {
                self.on_ack(to, origin, dest, attempt, route, pos)
            }
            Payload::BsDown { target } => self.on_bs_down(to, target),
        }
    }

    fn on_beacon(&mut self, me: usize, from: usize, b: Beacon) {
        let now = self.now();
        let stale = self.stale_after();
        if b.key.active == me {
            return;
        }
        self.nodes[me].known_term = self.nodes[me].known_term.max(b.key.term);
        if self.nodes[me].role == Role::ActiveBs {
            let own = self.nodes[me].own_key(me);
            if !b.key.beats(&own) {
                return;
            }
            let winner = self.nodes[b.key.active].id;
            self.step_down(me, "merge");
            self.log.push(now, self.nodes[me].id, "yield", || format!("active={winner} term={}", b.key.term));
        }
        let n = &self.nodes[me];
        let accept = match &n.route {
            None => !n.prev_route.as_ref().is_some_and(|p| p.key == b.key && b.seq <= p.seq),
            Some(r) if r.key == b.key => b.seq > r.seq || (b.seq == r.seq && b.hop + 1 < r.hop),
            Some(r) if b.key.beats(&r.key) => true,
            Some(r) => now.saturating_sub(r.refreshed) > stale,
        };
        if !accept {
            return;
        }

        let old = self.nodes[me].route.take();
        if let Some(r) = &old {
            if r.key != b.key {
                let fresh = now.saturating_sub(r.refreshed) <= stale;
                let merging = r.key.term == b.key.term && b.key.beats(&r.key) && fresh;
                if merging && !self.nodes[me].down_sent.contains(&r.key) {
                    if let Some(p) = r.parent {
                        self.nodes[me].down_sent.push(r.key);
                        self.stats.messages.originated[MessageKind::BsDown.index()] += 1.0;
                        let target_id = self.nodes[r.key.active].id;
                        self.log.push(now, self.nodes[me].id, "bs_down_sent", || format!("target={target_id}"));
                        let size = self.params.radio.control_bytes;
                        self.unicast(me, p, MessageKind::BsDown, Payload::BsDown { target: r.key }, size);
                    }
                }
            }
        }
        let switched = old.as_ref().is_none_or(|r| r.key != b.key);
        if switched {
            let active_id = self.nodes[b.key.active].id;
            self.log.push(now, self.nodes[me].id, "join", || format!("active={active_id} term={}", b.key.term));
            if old.is_some() {
                self.nodes[me].prev_route = old;
            }
        }
        let hop = b.hop + 1;
        let n = &mut self.nodes[me];
        n.route = Some(Route { key: b.key, seq: b.seq, hop, parent: Some(from), refreshed: now });
        n.last_beacon_seen = now;
        self.detect_cycle(me);
        let size = self.params.radio.beacon_bytes;
        self.broadcast(me, MessageKind::Beacon, Payload::Beacon(Beacon { hop, ..b }), size);
    }

    fn detect_cycle(&mut self, me: usize) {
        let mut w = self.nodes[me].parent();
        let mut steps = 0;
        while let Some(p) = w {
            if p == me {
                self.stats.routing_cycles += 1;
                self.log.push(self.now(), self.nodes[me].id, "cycle", String::new);
                return;
            }
            steps += 1;
            if steps > self.nodes.len() {
                return;
            }
            w = self.nodes[p].parent();
        }
    }

    fn on_bs_down(&mut self, me: usize, target: ActiveKey) {
        let now = self.now();
        if me == target.active {
            if self.nodes[me].role == Role::ActiveBs && self.nodes[me].own_key(me) == target {
                self.step_down(me, "bs_down");
            }
            return;
        }
        let n = &self.nodes[me];
        let next = [&n.route, &n.prev_route].into_iter().flatten().find(|r| r.key == target).and_then(|r| r.parent);
        match next {
            Some(p) => {
                let size = self.params.radio.control_bytes;
                self.unicast(me, p, MessageKind::BsDown, Payload::BsDown { target }, size);
            }
            None => {
                self.stats.messages.dropped[MessageKind::BsDown.index()] += 1.0;
                self.log.push(now, self.nodes[me].id, "bs_down_dropped", String::new);
            }
        }
    }

    fn on_advert_tick(&mut self, i: usize) {
        self.queue.push_in(self.advert_period, Event::AdvertTick(i));
        if self.policy == ProtocolPolicy::Fixed {
            return;
        }
        let now = self.now();
        let stale = self.stale_after();
        let n = &self.nodes[i];
        if !(n.alive && n.booted && n.role == Role::PassiveBs) {
            return;
        }
        let Some(parent) = n.route.as_ref().filter(|r| now.saturating_sub(r.refreshed) <= stale).and_then(|r| r.parent)
        else {
            return;
        };
        let battery = quantize_battery(n.battery, self.capacity);
        self.stats.messages.originated[MessageKind::BsAdvert.index()] += 1.0;
        let advert = Advert { origin: i, battery, timestamp: now, path: vec![i] };
        let size = self.params.radio.route_bytes(1);
        self.unicast(i, parent, MessageKind::BsAdvert, Payload::Advert(advert), size);
    }

    fn on_advert(&mut self, me: usize, mut a: Advert) {
        let now = self.now();
        let stale = self.stale_after();
        if self.nodes[me].role == Role::ActiveBs {
            match process_advert(&mut self.nodes[me].table, &a) {
                AdvertOutcome::Stored => self.stats.adverts_stored += 1,
                AdvertOutcome::Stale => self.stats.adverts_stale += 1,
                AdvertOutcome::Malformed => self.stats.adverts_dropped += 1,
            }
            return;
        }
        let parent =
            self.nodes[me].route.as_ref().filter(|r| now.saturating_sub(r.refreshed) <= stale).and_then(|r| r.parent);
        match parent {
            Some(p) if !a.path.contains(&me) => {
                a.path.push(me);
                let size = self.params.radio.route_bytes(a.path.len());
                self.unicast(me, p, MessageKind::BsAdvert, Payload::Advert(a), size);
            }
            _ => {
                self.stats.adverts_dropped += 1;
                self.stats.messages.dropped[MessageKind::BsAdvert.index()] += 1.0;
            }
        }
    }

    /// Candidate successors of active BS `a` in policy order, stopping before
    /// `a` itself: everything after it would be a worse choice than staying.
    fn ranking(&self, a: usize) -> Vec<usize> {
        let since = self.now().saturating_sub(BEACON_TIMEOUT_PERIODS * self.advert_period);
        let node = &self.nodes[a];
        let mut entries: Vec<(usize, f64)> =
            node.table.fresh(since).filter(|(b, _)| *b != a).map(|(b, e)| (b, e.battery)).collect();
        match self.policy {
            ProtocolPolicy::Fixed => Vec::new(),
            ProtocolPolicy::Hef => {
                entries.push((a, quantize_battery(node.battery, self.capacity)));
                entries.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
                entries.iter().map(|e| e.0).take_while(|&b| b != a).collect()
            }
            ProtocolPolicy::Rr => {
                let n = self.nodes.len();
                let mut order: Vec<usize> = entries.iter().map(|e| e.0).collect();
                order.sort_by_key(|&b| (b + n - a) % n);
                order
            }
        }
    }

    fn on_slot_boundary(&mut self, k: u64) {
        let now = self.now();
        self.flush_energy_ticks();
        let mut record = SlotRecord {
            slot: k,
            battery: Vec::with_capacity(self.bs.len()),
            consumed: Vec::with_capacity(self.bs.len()),
            recharged: self.slot_recharge.clone(),
            active_s: Vec::with_capacity(self.bs.len()),
        };
        for (slot_idx, &b) in self.bs.iter().enumerate() {
            let n = &mut self.nodes[b];
            if let Some(since) = n.active_since.as_mut() {
                n.slot_active += now - *since;
                *since = now;
            }
            record.battery.push(n.battery);
            let total = n.energy.total();
            record.consumed.push(total - self.slot_start_energy[slot_idx]);
            self.slot_start_energy[slot_idx] = total;
            record.active_s.push(as_seconds(n.slot_active));
            n.slot_active = 0;
        }
        self.slot_recharge.iter_mut().for_each(|r| *r = 0.0);
        self.slots.push(record);

        let actives: Vec<usize> =
            self.bs.iter().copied().filter(|&b| self.nodes[b].alive && self.nodes[b].role == Role::ActiveBs).collect();
        for a in actives {
            let order = self.ranking(a);
            if order.is_empty() {
                self.log.push(now, self.nodes[a].id, "stay", || format!("slot={k}"));
            } else {
                self.start_handover(a, order.into());
            }
        }
        self.queue.push(now + self.slot, Event::SlotBoundary(k + 1));
    }

    fn start_handover(&mut self, a: usize, order: VecDeque<usize>) {
        self.nodes[a].pending = Some(PendingHandover { attempt: 0, remaining: order });
        self.try_next_candidate(a);
    }

    fn try_next_candidate(&mut self, a: usize) {
        let now = self.now();
        let Some(pending) = self.nodes[a].pending.as_mut() else { return };
        let Some(c) = pending.remaining.pop_front() else {
            self.nodes[a].pending = None;
            self.stats.handover_failures += 1;
            self.log.push(now, self.nodes[a].id, "handover_failed", || "retaining role".into());
            return;
        };
        let attempt = self.next_attempt;
        self.next_attempt += 1;
        pending.attempt = attempt;
        let Some(entry) = self.nodes[a].table.get(c) else {
            self.queue.push(now, Event::HandoverTimeout { node: a, attempt });
            return;
        };
        let route = entry.route.clone();
        let term = self.nodes[a].term + 1;
        let target_id = self.nodes[c].id;
        self.log.push(now, self.nodes[a].id, "bs_up", || format!("target={target_id} hops={}", route.len()));
        self.stats.messages.originated[MessageKind::BsUp.index()] += 1.0;
        let size = self.params.radio.route_bytes(route.len());
        let first = route[0];
        let payload = Payload::BsUp { origin: a, target: c, term, attempt, route, pos: 0 };
        self.unicast(a, first, MessageKind::BsUp, payload, size);
        self.queue.push_in(RETRY_WINDOW, Event::HandoverTimeout { node: a, attempt });
    }

    #[allow(clippy::too_many_arguments)]
    fn on_bs_up(
        &mut self,
        me: usize,
        origin: usize,
        target: usize,
        term: u32,
        attempt: u64,
        route: Vec<usize>,
        pos: usize,
    ) {
        let now = self.now();
        if route.get(pos) != Some(&me) {
            self.stats.messages.dropped[MessageKind::BsUp.index()] += 1.0;
            return;
        }
        let size = self.params.radio.route_bytes(route.len());
        if me != target {
            let next = route[pos + 1];
            let payload = Payload::BsUp { origin, target, term, attempt, route, pos: pos + 1 };
            self.unicast(me, next, MessageKind::BsUp, payload, size);
            return;
        }
        let n = &self.nodes[me];
        if n.role != Role::PassiveBs || n.pending_activation.is_some() {
            self.log.push(now, n.id, "bs_up_ignored", String::new);
            return;
        }
        let mut back: Vec<usize> = route[..pos].iter().rev().copied().collect();
        back.push(origin);
        // Beaconing starts only after the acknowledgement has certainly
        // arrived, so at most one node announces itself at any time.
        let guard = (back.len() as u64 + 2) * self.hop_delay.1 + 1_000;
        let n = &mut self.nodes[me];
        n.pending_activation = Some(term);
        n.known_term = n.known_term.max(term);
        let (id, life) = (n.id, n.life);
        let origin_id = self.nodes[origin].id;
        self.log.push(now, id, "bs_up_recv", || format!("from={origin_id} term={term}"));
        self.stats.messages.originated[MessageKind::BsUpAck.index()] += 1.0;
        let first = back[0];
        let size = self.params.radio.route_bytes(back.len());
        let payload = Payload::BsUpAck { origin: me, dest: origin, attempt, route: back, pos: 0 };
        self.unicast(me, first, MessageKind::BsUpAck, payload, size);
        self.queue.push_in(guard, Event::Activate { node: me, life, term });
    }

    fn on_ack(&mut self, me: usize, origin: usize, dest: usize, attempt: u64, route: Vec<usize>, pos: usize) {
        let now = self.now();
        if route.get(pos) != Some(&me) {
            self.stats.messages.dropped[MessageKind::BsUpAck.index()] += 1.0;
            return;
        }
        if me != dest {
            let size = self.params.radio.route_bytes(route.len());
            let next = route[pos + 1];
            let payload = Payload::BsUpAck { origin, dest, attempt, route, pos: pos + 1 };
            self.unicast(me, next, MessageKind::BsUpAck, payload, size);
            return;
        }
        let n = &self.nodes[me];
        let expected = n.role == Role::ActiveBs && n.pending.as_ref().is_some_and(|p| p.attempt == attempt);
        let origin_id = self.nodes[origin].id;
        if expected {
            self.stats.handovers += 1;
            self.log.push(now, self.nodes[me].id, "handover_complete", || format!("successor={origin_id}"));
            self.step_down(me, "handover");
        } else {
            self.log.push(now, self.nodes[me].id, "late_ack", || format!("from={origin_id}"));
        }
    }

    fn recharge_watts(&self, slot_idx: usize, t: Micros) -> f64 {
        let Some(trace) = &self.recharge else { return 0.0 };
        let samples = trace.samples();
        if samples.len() == 1 {
            return samples[0][slot_idx];
        }
        let slot = (t / self.slot) as usize;
        samples.get(slot).map_or(0.0, |row| row[slot_idx])
    }

    /// Sleep, recharge and fluid data since the last tick.
    fn flush_energy_ticks(&mut self) {
        let now = self.now();
        let start = self.last_data_tick;
        if now <= start {
            return;
        }
        self.last_data_tick = now;
        let dt = as_seconds(now - start);
        let sleep_j = self.params.radio.sleep_watts() * dt;
        for i in 0..self.nodes.len() {
            if !(self.nodes[i].alive && self.nodes[i].booted) {
                continue;
            }
            self.nodes[i].energy.sleep += sleep_j;
            self.drain(i, sleep_j);
            if let Some(k) = self.bs_slot[i] {
                let gain = self.recharge_watts(k, start) * dt;
                self.nodes[i].battery += gain;
                self.slot_recharge[k] += gain;
            }
        }

        let packets = self.params.traffic.data_rate_pps * dt;
        if packets <= 0.0 {
            return;
        }
        let bytes = self.params.radio.data_bytes;
        let (tx_j, rx_j) = (self.params.radio.tx_joules(bytes) * packets, self.params.radio.rx_joules(bytes) * packets);
        let data = MessageKind::Data.index();
        let n = self.nodes.len();
        for u in 0..n {
            if !(self.nodes[u].alive && self.nodes[u].booted) {
                continue;
            }
            self.stats.messages.originated[data] += packets;
            let mut w = u;
            let mut hops = 0;
            loop {
                if self.nodes[w].role == Role::ActiveBs {
                    break;
                }
                let next = self.nodes[w]
                    .parent()
                    .filter(|&p| self.nodes[p].alive && self.nodes[p].booted && self.topo.is_linked(w, p));
                let Some(p) = next.filter(|_| hops <= n) else {
                    self.stats.data_undeliverable += packets;
                    break;
                };
                self.nodes[w].energy.tx += tx_j;
                self.drain(w, tx_j);
                self.nodes[p].energy.rx += rx_j;
                self.drain(p, rx_j);
                self.stats.messages.transmitted[data] += packets;
                self.stats.messages.received[data] += packets;
                w = p;
                hops += 1;
            }
        }
    }

    fn on_data_tick(&mut self) {
        self.flush_energy_ticks();
        self.queue.push_in(self.period, Event::DataTick);
    }

    fn fail(&mut self, i: usize) {
        let now = self.now();
        self.flush_energy_ticks();
        let n = &mut self.nodes[i];
        if !n.alive {
            return;
        }
        if let Some(since) = n.active_since.take() {
            n.slot_active += now - since;
        }
        n.alive = false;
        n.life += 1;
        n.epoch += 1;
        if n.role == Role::ActiveBs {
            n.role = Role::PassiveBs;
        }
        n.route = None;
        n.pending = None;
        n.pending_activation = None;
        n.table.clear();
        let id = n.id;
        self.log.push(now, id, "fail", String::new);
    }

    fn revive_node(&mut self, i: usize) {
        let now = self.now();
        self.flush_energy_ticks();
        let n = &mut self.nodes[i];
        if n.alive {
            return;
        }
        n.alive = true;
        n.booted = false;
        n.prev_route = None;
        n.down_sent.clear();
        let (id, life) = (n.id, n.life);
        self.log.push(now, id, "revive", String::new);
        self.queue.push(now, Event::Boot { node: i, life });
    }

    fn apply_directive(&mut self, k: usize) {
        let action = self.script[k].action.clone();
        // Ids were validated with the scenario.
        let outcome = match action {
            Action::Fail { node } => self.inject_failure(node),
            Action::Revive { node } => self.revive(node),
            Action::Split { groups } => {
                self.flush_energy_ticks();
                self.inject_split(&groups)
            }
            Action::Heal => {
                self.heal();
                Ok(())
            }
            Action::Handover { target } => self.execute_handover(target),
            Action::SetBattery { node, joules } => self.set_battery(node, joules),
        };
        if let Err(e) = outcome {
            self.log.push(self.now(), 0, "directive_error", || e.to_string());
        }
    }
}

/// Fraction of active time per BS (id order) over the recorded slots
/// `from..to` (1-based, half-open).
pub fn active_fractions(slots: &[SlotRecord], from: u64, to: u64) -> Vec<f64> {
    let picked: Vec<&SlotRecord> = slots.iter().filter(|s| s.slot >= from && s.slot < to).collect();
    let Some(first) = picked.first() else { return Vec::new() };
    let mut totals = vec![0.0; first.active_s.len()];
    for s in &picked {
        for (t, a) in totals.iter_mut().zip(&s.active_s) {
            *t += a;
        }
    }
    let sum: f64 = totals.iter().sum();
    if sum > 0.0 {
        totals.iter_mut().for_each(|t| *t /= sum);
    }
    totals
}

/// Packets per hour by kind over a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadReport {
    pub hours: f64,
    pub originated_per_hour: BTreeMap<MessageKind, f64>,
    pub transmitted_per_hour: BTreeMap<MessageKind, f64>,
}

impl OverheadReport {
    /// Originated control messages per hour, beacons excluded.
    pub fn control_originated(&self) -> f64 {
        self.originated_per_hour
            .iter()
            .filter(|(k, _)| k.is_control() && **k != MessageKind::Beacon)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn data_originated(&self) -> f64 {
        self.originated_per_hour[&MessageKind::Data]
    }

    pub fn control_transmitted(&self) -> f64 {
        self.transmitted_per_hour
            .iter()
            .filter(|(k, _)| k.is_control() && **k != MessageKind::Beacon)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn data_transmitted(&self) -> f64 {
        self.transmitted_per_hour[&MessageKind::Data]
    }
}

/// Counts between two snapshots of the simulator statistics.
pub fn measure_overhead(before: &Stats, after: &Stats, hours: f64) -> OverheadReport {
    let per_hour = |a: &[f64; 6], b: &[f64; 6]| {
        MessageKind::ALL.iter().map(|k| (*k, (b[k.index()] - a[k.index()]) / hours)).collect::<BTreeMap<_, _>>()
    };
    OverheadReport {
        hours,
        originated_per_hour: per_hour(&before.messages.originated, &after.messages.originated),
        transmitted_per_hour: per_hour(&before.messages.transmitted, &after.messages.transmitted),
    }
}
