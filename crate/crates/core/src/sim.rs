//! Event-driven run of one scenario: builds the network from a config, drives
//! the TDMA schedule and the protocol state machines through the kernel, and
//! observes ground truth from outside the event loop.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::clock::{apply_offset_correction, timestamp_event, ClockError, ClockState, TimestampNoise};
use crate::config::{ms_to_ns, s_to_ns, us_to_ns, ConfigError, DriftMode, ProtocolKind, ScenarioConfig};
use crate::energy::{EnergyLedger, NanoJoules};
use crate::kernel::{seeded_rng, Event, Kernel, KernelError, SimRng, TrueTime};
use crate::protocol::{
    ListenerState, MasterState, MessageKind, SlaveAction, SlaveState, SyncEstimate,
    SyncMessage,
};
use crate::topology::{
    assign_tdma_slots, build_hierarchy, LinkModel, Medium, MediumError, SlotKind, Tier, Topology,
    TopologyError,
};
use crate::NodeId;

const STREAM_SETUP: u64 = 0;
const STREAM_TIMESTAMPS: u64 = 1;
const STREAM_MEDIUM: u64 = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Medium(#[from] MediumError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("runs are not comparable: {0}")]
    Mismatch(String),
}

/// Hierarchy level of an exchange, named by its master.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    /// Concentrator to routers.
    Upper,
    /// Routers to leaves.
    Lower,
}

impl Level {
    pub const ALL: [Level; 2] = [Level::Upper, Level::Lower];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Upper => "c-r",
            Level::Lower => "r-n",
        }
    }

    pub fn parse(s: &str) -> Option<Level> {
        Level::ALL.into_iter().find(|l| l.as_str() == s)
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeClass {
    Concentrator,
    RouterSlave,
    RouterListener,
    LeafSlave,
    LeafListener,
}

impl NodeClass {
    pub const ALL: [NodeClass; 5] = [
        NodeClass::Concentrator,
        NodeClass::RouterSlave,
        NodeClass::RouterListener,
        NodeClass::LeafSlave,
        NodeClass::LeafListener,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Concentrator => "concentrator",
            NodeClass::RouterSlave => "router-1588",
            NodeClass::RouterListener => "router-pbs",
            NodeClass::LeafSlave => "leaf-1588",
            NodeClass::LeafListener => "leaf-pbs",
        }
    }

    pub fn parse(s: &str) -> Option<NodeClass> {
        NodeClass::ALL.into_iter().find(|c| c.as_str() == s)
    }

    pub fn is_router(self) -> bool {
        matches!(self, NodeClass::RouterSlave | NodeClass::RouterListener)
    }

    pub fn is_listener(self) -> bool {
        matches!(self, NodeClass::RouterListener | NodeClass::LeafListener)
    }
}

impl fmt::Display for NodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground-truth error of one node against its parent at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorSample {
    pub t: TrueTime,
    pub node: NodeId,
    pub reference: NodeId,
    /// `local_time(node, t) - local_time(reference, t)`.
    pub error_ns: i64,
}

/// Transmissions per (level, cycle, kind). Cycles are counted from the first
/// frame in which the level is active.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageCounter {
    counts: BTreeMap<(Level, u64, MessageKind), u64>,
}

impl MessageCounter {
    pub fn add(&mut self, level: Level, cycle: u64, kind: MessageKind) {
        *self.counts.entry((level, cycle, kind)).or_insert(0) += 1;
    }

    pub fn get(&self, level: Level, cycle: u64, kind: MessageKind) -> u64 {
        self.counts.get(&(level, cycle, kind)).copied().unwrap_or(0)
    }

    /// Every (level, cycle, kind, count) in key order.
    pub fn rows(&self) -> impl Iterator<Item = (Level, u64, MessageKind, u64)> + '_ {
        self.counts.iter().map(|(&(l, c, k), &n)| (l, c, k, n))
    }

    /// Per-cycle sums over `kinds`, for every cycle with any traffic at `level`.
    pub fn per_cycle(&self, level: Level, kinds: &[MessageKind]) -> Vec<(u64, u64)> {
        let mut out: BTreeMap<u64, u64> = BTreeMap::new();
        for (&(l, c, k), &n) in &self.counts {
            if l == level {
                let e = out.entry(c).or_insert(0);
                if kinds.contains(&k) {
                    *e += n;
                }
            }
        }
        out.into_iter().collect()
    }

    /// The per-cycle total shared by every complete cycle, i.e. all observed
    /// cycles except the first and the last. `None` if there are no complete
    /// cycles or they disagree.
    pub fn steady_per_cycle(&self, level: Level, kinds: &[MessageKind]) -> Option<u64> {
        let cycles = self.per_cycle(level, kinds);
        if cycles.len() < 3 {
            return None;
        }
        let inner = &cycles[1..cycles.len() - 1];
        let first = inner[0].1;
        inner.iter().all(|&(_, n)| n == first).then_some(first)
    }

    pub fn total(&self, level: Level, kinds: &[MessageKind]) -> u64 {
        self.per_cycle(level, kinds).iter().map(|&(_, n)| n).sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "level,cycle,kind,count")?;
        for (l, c, k, n) in self.rows() {
            writeln!(w, "{},{},{},{}", l.as_str(), c, k.as_str(), n)?;
        }
        Ok(())
    }
}

/// One applied clock correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrectionRecord {
    pub at: TrueTime,
    pub node: NodeId,
    pub master: NodeId,
    pub estimate: SyncEstimate,
    /// Node minus master, just before the correction.
    pub offset_before: i64,
    /// Node minus master, just after the correction.
    pub error_after: i64,
    /// Node minus master when the DelayRequest left the slave (two-way) or
    /// reached the listener (PBS).
    pub offset_at_request: Option<i64>,
}

/// Per-node radio counters at a cycle boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleSnapshot {
    pub t: TrueTime,
    /// Indexed by node id: (tx_count, rx_count, consumed).
    pub nodes: Vec<(u64, u64, NanoJoules)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub events_dispatched: u64,
    pub exchanges_completed: u64,
    pub exchanges_aborted: u64,
    pub slave_discards: u64,
    pub listener_discards: u64,
    pub deferred_requests: u64,
    pub lost_deliveries: u64,
    pub negative_delays: u64,
    pub ignored_charges: u64,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub topology: Topology,
    pub links: LinkModel,
    /// Indexed by node id.
    pub classes: Vec<NodeClass>,
    pub samples: Vec<ErrorSample>,
    pub counter: MessageCounter,
    pub corrections: Vec<CorrectionRecord>,
    pub snapshots: Vec<CycleSnapshot>,
    pub ledger: EnergyLedger,
    pub final_clocks: Vec<ClockState>,
    pub level_start: [TrueTime; 2],
    pub end: TrueTime,
    pub diagnostics: Diagnostics,
}

impl RunOutput {
    pub fn class_of(&self, id: NodeId) -> NodeClass {
        self.classes[id.0 as usize]
    }

    pub fn nodes_of(&self, class: NodeClass) -> Vec<NodeId> {
        (0..self.classes.len() as u32)
            .map(NodeId)
            .filter(|&n| self.class_of(n) == class)
            .collect()
    }

    pub fn level_start(&self, level: Level) -> TrueTime {
        self.level_start[level.index()]
    }
}

#[derive(Debug, Clone)]
enum Action {
    Slot { kind: SlotKind, frame: u64 },
    SendSync { slave: NodeId, follow_up_at: TrueTime },
    SendFollowUp(SyncMessage),
    SendDelayRequest { exchange_id: u64 },
    SendDelayResponse { slave: NodeId },
    Deliver(SyncMessage),
}

#[derive(Debug, Clone)]
enum Follower {
    None,
    Slave(SlaveState),
    Listener(ListenerState),
}

#[derive(Debug, Clone)]
struct NodeRt {
    parent: Option<NodeId>,
    clock: ClockState,
    follower: Follower,
    master: Option<MasterState>,
    /// Children this node runs active exchanges with.
    partners: Vec<NodeId>,
    level: Level,
    pending_request: Option<(u64, TrueTime)>,
    request_offset: Option<(u64, i64)>,
}

struct World {
    nodes: Vec<NodeRt>,
    medium: Medium,
    ledger: EnergyLedger,
    noise: TimestampNoise,
    noise_rng: SimRng,
    medium_rng: SimRng,
    /// Listeners attached to each (master, slave) pair.
    listeners: HashMap<(NodeId, NodeId), Vec<NodeId>>,
    spacing_ns: u64,
    guard_ns: u64,
    processing_ns: u64,
    cycle_ns: u64,
    first_frame: [u64; 2],
    level_start: [TrueTime; 2],
    end: TrueTime,
    counter: MessageCounter,
    corrections: Vec<CorrectionRecord>,
    diag: Diagnostics,
    error: Option<SimError>,
}

impl World {
    fn node(&self, id: NodeId) -> &NodeRt {
        &self.nodes[id.0 as usize]
    }

    fn node_mut(&mut self, id: NodeId) -> &mut NodeRt {
        &mut self.nodes[id.0 as usize]
    }

    fn offset(&self, a: NodeId, b: NodeId, t: TrueTime) -> i64 {
        self.node(a).clock.local_time(t) - self.node(b).clock.local_time(t)
    }

    fn stamp(&mut self, id: NodeId, t: TrueTime) -> crate::clock::LocalTime {
        let clock = self.nodes[id.0 as usize].clock;
        timestamp_event(&clock, t, &self.noise, &mut self.noise_rng)
    }

    fn handle(&mut self, k: &mut Kernel<Action>, ev: Event<Action>) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = self.dispatch(k, ev) {
            self.error = Some(e);
        }
    }

    fn schedule_if_before_end(
        &self,
        k: &mut Kernel<Action>,
        at: TrueTime,
        target: NodeId,
        action: Action,
    ) -> Result<(), SimError> {
        if at <= self.end {
            k.schedule(at, target, action)?;
        }
        Ok(())
    }

    fn dispatch(&mut self, k: &mut Kernel<Action>, ev: Event<Action>) -> Result<(), SimError> {
        let n = ev.target;
        let t = ev.fire_at;
        match ev.payload {
            Action::Slot { kind, frame } => self.slot(k, n, kind, frame),
            Action::SendSync { slave, follow_up_at } => {
                let t1 = self.stamp(n, t);
                let master = self.node_mut(n).master.as_mut().expect("master");
                let [sync, follow_up] = master.start_exchange(slave, t1);
                self.transmit(k, n, sync, t)?;
                k.schedule(follow_up_at, n, Action::SendFollowUp(follow_up))?;
                Ok(())
            }
            Action::SendFollowUp(msg) => self.transmit(k, n, msg, t),
            Action::SendDelayRequest { exchange_id } => {
                let t3 = self.stamp(n, t);
                let msg = match &mut self.node_mut(n).follower {
                    Follower::Slave(s) => s.delay_request_sent(exchange_id, t3),
                    _ => None,
                };
                let Some(msg) = msg else { return Ok(()) };
                let truth = self.offset(n, msg.master(), t);
                self.node_mut(n).request_offset = Some((exchange_id, truth));
                self.transmit(k, n, msg, t)
            }
            Action::SendDelayResponse { slave } => {
                let msg = self
                    .node_mut(n)
                    .master
                    .as_mut()
                    .and_then(|m| m.take_delay_response(slave));
                match msg {
                    Some(msg) => self.transmit(k, n, msg, t),
                    None => Ok(()),
                }
            }
            Action::Deliver(msg) => {
                self.deliver(n, msg, t);
                Ok(())
            }
        }
    }

    fn slot(&mut self, k: &mut Kernel<Action>, n: NodeId, kind: SlotKind, frame: u64) -> Result<(), SimError> {
        let schedule = self.medium.schedule();
        let (start, end) = schedule.slot_window(n, kind, frame).expect("slot exists");
        let next = schedule.slot_window(n, kind, frame + 1).expect("slot exists").0;
        let node = self.node(n);
        match kind {
            SlotKind::Master => {
                let mut at = start;
                if frame >= self.first_frame[node.level.index()] {
                    for &slave in &node.partners {
                        let follow_up_at = at + self.spacing_ns;
                        k.schedule(at, n, Action::SendSync { slave, follow_up_at })?;
                        at = follow_up_at + self.spacing_ns;
                    }
                }
            }
            SlotKind::Upstream => {
                if let Some((exchange_id, ready)) = node.pending_request {
                    let when = start.max(ready);
                    if when.0 + self.guard_ns < end.0 {
                        k.schedule(when, n, Action::SendDelayRequest { exchange_id })?;
                        self.node_mut(n).pending_request = None;
                    } else {
                        self.diag.deferred_requests += 1;
                    }
                }
            }
            SlotKind::Response => {
                let due = node.master.as_ref().map(|m| m.responses_due()).unwrap_or_default();
                for (i, slave) in due.into_iter().enumerate() {
                    let at = start + i as u64 * self.spacing_ns;
                    k.schedule(at, n, Action::SendDelayResponse { slave })?;
                }
            }
        }
        self.schedule_if_before_end(k, next, n, Action::Slot { kind, frame: frame + 1 })
    }

    fn transmit(
        &mut self,
        k: &mut Kernel<Action>,
        sender: NodeId,
        msg: SyncMessage,
        t: TrueTime,
    ) -> Result<(), SimError> {
        let (master, slave) = (msg.master(), msg.slave());
        let attached = self.listeners.get(&(master, slave));
        let out = self.medium.broadcast(
            sender,
            &msg,
            t,
            |r| r == master || r == slave || attached.is_some_and(|l| l.contains(&r)),
            &mut self.ledger,
            &mut self.medium_rng,
        )?;
        if out.sent {
            let level = self.nodes[master.0 as usize].level;
            let since = t - self.level_start[level.index()];
            self.counter.add(level, since / self.cycle_ns, msg.kind());
        }
        self.diag.lost_deliveries += out.lost as u64;
        for d in out.deliveries {
            k.schedule(d.arrival, d.receiver, Action::Deliver(msg))?;
        }
        Ok(())
    }

    fn deliver(&mut self, r: NodeId, msg: SyncMessage, t: TrueTime) {
        let stamp = self.stamp(r, t);
        if msg.kind() == MessageKind::DelayRequest && msg.master() == r {
            if let Some(m) = self.node_mut(r).master.as_mut() {
                m.on_delay_request(&msg, stamp);
            }
            return;
        }
        let idx = r.0 as usize;
        let (action, listener_est) = match &mut self.nodes[idx].follower {
            Follower::Slave(s) if msg.slave() == r => (s.on_message(&msg, stamp), None),
            Follower::Listener(l) if l.watches(&msg) => (SlaveAction::None, l.on_message(&msg, stamp)),
            _ => return,
        };
        if matches!(self.nodes[idx].follower, Follower::Listener(_))
            && msg.kind() == MessageKind::DelayRequest
        {
            let truth = self.offset(r, msg.master(), t);
            self.nodes[idx].request_offset = Some((msg.exchange_id(), truth));
        }
        let estimate = match action {
            SlaveAction::SendDelayRequest { exchange_id } => {
                self.nodes[idx].pending_request = Some((exchange_id, t + self.processing_ns));
                None
            }
            SlaveAction::Estimate(e) => Some(e),
            SlaveAction::None => listener_est,
        };
        if let Some(e) = estimate {
            self.correct(r, msg.master(), e, t);
        }
    }

    fn correct(&mut self, node: NodeId, master: NodeId, estimate: SyncEstimate, t: TrueTime) {
        let offset_before = self.offset(node, master, t);
        let rt = self.node_mut(node);
        rt.clock = apply_offset_correction(&rt.clock, estimate.delta_hat, t);
        let offset_at_request = rt
            .request_offset
            .filter(|&(id, _)| id == estimate.exchange_id)
            .map(|(_, o)| o);
        let error_after = self.offset(node, master, t);
        if estimate.negative_delay() {
            self.diag.negative_delays += 1;
        }
        self.corrections.push(CorrectionRecord {
            at: t,
            node,
            master,
            estimate,
            offset_before,
            error_after,
            offset_at_request,
        });
    }
}

fn build_topology(cfg: &ScenarioConfig) -> Result<Topology, SimError> {
    Ok(match cfg.topology.explicit_nodes() {
        Some(nodes) => Topology::from_nodes(nodes, cfg.topology.radio_radius_m)?,
        None => build_hierarchy(&cfg.topology.hierarchy())?,
    })
}

/// Splits each master's children into active slaves and listeners.
fn assign_roles(cfg: &ScenarioConfig, topo: &Topology) -> BTreeMap<NodeId, (Vec<NodeId>, Vec<NodeId>)> {
    let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for n in topo.nodes() {
        if let Some(p) = n.parent {
            children.entry(p).or_default().push(n.id);
        }
    }
    children
        .into_iter()
        .map(|(m, kids)| {
            let kind = if topo.node(m).map(|s| s.tier) == Some(Tier::Concentrator) {
                cfg.protocol.upper
            } else {
                cfg.protocol.lower
            };
            let roles = match kind {
                ProtocolKind::Pure1588 => (kids, Vec::new()),
                ProtocolKind::Hybrid => {
                    let slave = kids
                        .iter()
                        .copied()
                        .find(|k| cfg.protocol.slaves.contains(&k.0))
                        .unwrap_or(kids[0]);
                    let rest = kids.into_iter().filter(|&k| k != slave).collect();
                    (vec![slave], rest)
                }
            };
            (m, roles)
        })
        .collect()
}

fn draw_clocks(cfg: &ScenarioConfig, topo: &Topology, rng: &mut SimRng) -> Result<Vec<ClockState>, SimError> {
    let c = &cfg.clock;
    let n = topo.len();
    let mut offsets = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);
    for i in 0..n {
        let max = c.initial_offset_max_ns;
        let drawn = rng.gen_range(-max..=max);
        offsets.push(c.offsets_ns.get(i).copied().unwrap_or(drawn));
        let ppm = match c.drift_mode {
            DriftMode::Uniform => rng.gen_range(-1.0..=1.0) * c.drift_ppm,
            DriftMode::PerEdge | DriftMode::Opposed => {
                if rng.gen::<bool>() {
                    c.drift_ppm
                } else {
                    -c.drift_ppm
                }
            }
            DriftMode::Fixed => c.drifts_ppm[i],
        };
        steps.push(ppm * 1e-6);
    }
    let depth_one_ancestor = |i: usize| -> Option<(usize, usize)> {
        // (ancestor just below the root, depth of i)
        let mut cur = NodeId(i as u32);
        let mut depth = 0;
        while let Some(p) = topo.node(cur).and_then(|s| s.parent) {
            depth += 1;
            if topo.node(p).and_then(|s| s.parent).is_none() {
                return Some((cur.0 as usize, depth));
            }
            cur = p;
        }
        None
    };
    let drift_of = |i: usize| -> f64 {
        match c.drift_mode {
            DriftMode::Uniform | DriftMode::Fixed => steps[i],
            DriftMode::PerEdge => {
                // one step per edge up to the root
                let mut rho = 0.0;
                let mut cur = NodeId(i as u32);
                while let Some(p) = topo.node(cur).and_then(|s| s.parent) {
                    rho += steps[cur.0 as usize];
                    cur = p;
                }
                rho
            }
            DriftMode::Opposed => match depth_one_ancestor(i) {
                Some((top, depth)) if depth % 2 == 1 => steps[top],
                Some((top, _)) => -steps[top],
                None => 0.0,
            },
        }
    };
    (0..n)
        .map(|i| ClockState::new(offsets[i], drift_of(i)).map_err(SimError::from))
        .collect()
}

fn frames_until(start_ns: u64, origin: TrueTime, frame_ns: u64) -> u64 {
    start_ns.saturating_sub(origin.0).div_ceil(frame_ns)
}

/// Runs one scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    let topo = build_topology(cfg)?;
    let mut setup_rng = seeded_rng(cfg.seed, STREAM_SETUP);
    let clocks = draw_clocks(cfg, &topo, &mut setup_rng)?;
    let roles = assign_roles(cfg, &topo);

    let mut links = LinkModel {
        signal_speed_m_per_s: cfg.links.signal_speed_m_per_s,
        jitter_upper_ns: cfg.links.jitter_upper_ns,
        jitter_lower_ns: cfg.links.jitter_lower_ns,
        loss_probability: cfg.links.loss_probability,
        ..LinkModel::default()
    };
    for d in &cfg.links.delays {
        links.overrides.insert((NodeId(d.from), NodeId(d.to)), d.ns);
    }
    let mut listeners: HashMap<(NodeId, NodeId), Vec<NodeId>> = HashMap::new();
    for (&m, (slaves, rest)) in &roles {
        if let (Some(&s), false) = (slaves.first(), rest.is_empty()) {
            for &x in rest {
                let extra = setup_rng.gen_range(cfg.links.pbs_excess_min_ns..=cfg.links.pbs_excess_max_ns);
                if extra > 0 {
                    links.excess.insert((s, x), extra);
                }
            }
            listeners.insert((m, s), rest.clone());
        }
    }

    let origin = TrueTime(s_to_ns(cfg.protocol.upper_start_s));
    let frame_ns = cfg.frame_period_ns();
    let cycle_ns = cfg.cycle_period_ns();
    let schedule = assign_tdma_slots(
        &topo,
        us_to_ns(cfg.tdma.slot_us),
        frame_ns,
        origin,
        cfg.topology.spatial_reuse,
    );
    let first_frame = [0, frames_until(s_to_ns(cfg.protocol.lower_start_s), origin, frame_ns)];
    let level_start = [schedule.frame_start(0), schedule.frame_start(first_frame[1])];
    let end = TrueTime(s_to_ns(cfg.run.end_s));
    let timeout = cycle_ns as i64;

    let mut nodes: Vec<NodeRt> = topo
        .nodes()
        .iter()
        .map(|s| NodeRt {
            parent: s.parent,
            clock: clocks[s.id.0 as usize],
            follower: Follower::None,
            master: None,
            partners: Vec::new(),
            level: if s.tier == Tier::Concentrator {
                Level::Upper
            } else {
                Level::Lower
            },
            pending_request: None,
            request_offset: None,
        })
        .collect();
    let mut classes: Vec<NodeClass> = topo
        .nodes()
        .iter()
        .map(|s| match s.tier {
            Tier::Concentrator => NodeClass::Concentrator,
            Tier::Router => NodeClass::RouterSlave,
            Tier::Leaf => NodeClass::LeafSlave,
        })
        .collect();
    for (&m, (slaves, rest)) in &roles {
        nodes[m.0 as usize].master = Some(MasterState::new(m));
        nodes[m.0 as usize].partners = slaves.clone();
        for &s in slaves {
            nodes[s.0 as usize].follower = Follower::Slave(SlaveState::new(s, m, timeout));
        }
        for &x in rest {
            nodes[x.0 as usize].follower =
                Follower::Listener(ListenerState::new(x, m, slaves[0], timeout));
            classes[x.0 as usize] = match classes[x.0 as usize] {
                NodeClass::RouterSlave => NodeClass::RouterListener,
                _ => NodeClass::LeafListener,
            };
        }
    }

    let ids: Vec<NodeId> = topo.nodes().iter().map(|n| n.id).collect();
    let ledger = EnergyLedger::new(cfg.energy.cost_model(), cfg.energy.budget_j, ids.iter().copied());
    let mut world = World {
        nodes,
        medium: Medium::new(topo.clone(), links.clone(), schedule.clone()),
        ledger,
        noise: TimestampNoise {
            jitter_stddev_ns: cfg.clock.timestamp_noise_ns,
            clip_sigmas: cfg.clock.noise_clip_sigmas,
        },
        noise_rng: seeded_rng(cfg.seed, STREAM_TIMESTAMPS),
        medium_rng: seeded_rng(cfg.seed, STREAM_MEDIUM),
        listeners,
        spacing_ns: us_to_ns(cfg.tdma.tx_spacing_us),
        guard_ns: us_to_ns(cfg.tdma.guard_us),
        processing_ns: us_to_ns(cfg.protocol.slave_processing_us),
        cycle_ns,
        first_frame,
        level_start,
        end,
        counter: MessageCounter::default(),
        corrections: Vec::new(),
        diag: Diagnostics::default(),
        error: None,
    };

    let mut kernel: Kernel<Action> = Kernel::new();
    for &(id, kind) in schedule.slots.keys() {
        let frame = match kind {
            SlotKind::Upstream => 0,
            _ => first_frame[world.node(id).level.index()],
        };
        let (start, _) = schedule.slot_window(id, kind, frame).expect("slot exists");
        if start <= end {
            kernel.schedule(start, id, Action::Slot { kind, frame })?;
        }
    }

    let tick_ns = ms_to_ns(cfg.run.sample_interval_ms);
    let mut next_tick = cfg.run.sampling.then_some(TrueTime::ZERO);
    let mut next_boundary = Some(origin).filter(|&b| b <= end);
    let mut last_idle = TrueTime::ZERO;
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    loop {
        let t = [next_tick, next_boundary, Some(end)]
            .into_iter()
            .flatten()
            .min()
            .expect("end is always present");
        kernel.run_until(t, |k, ev| world.handle(k, ev))?;
        if let Some(e) = world.error.take() {
            return Err(e);
        }
        if next_boundary == Some(t) {
            world.ledger.charge_idle(cfg.energy.idle_mw, t - last_idle);
            last_idle = t;
            snapshots.push(CycleSnapshot {
                t,
                nodes: world
                    .ledger
                    .nodes()
                    .map(|(_, e)| (e.tx_count, e.rx_count, e.consumed()))
                    .collect(),
            });
            next_boundary = Some(t + cycle_ns).filter(|&b| b <= end);
        }
        if next_tick == Some(t) {
            for (i, rt) in world.nodes.iter().enumerate() {
                if let Some(p) = rt.parent {
                    samples.push(ErrorSample {
                        t,
                        node: NodeId(i as u32),
                        reference: p,
                        error_ns: world.offset(NodeId(i as u32), p, t),
                    });
                }
            }
            next_tick = Some(t + tick_ns).filter(|&b| b <= end);
        }
        if t == end {
            break;
        }
    }
    world.ledger.charge_idle(cfg.energy.idle_mw, end - last_idle);

    let mut diag = world.diag;
    diag.events_dispatched = kernel.dispatched();
    diag.ignored_charges = world.ledger.ignored_charges();
    for rt in &world.nodes {
        if let Some(m) = &rt.master {
            diag.exchanges_completed += m.completed();
            diag.exchanges_aborted += m.aborted();
        }
        match &rt.follower {
            Follower::Slave(s) => diag.slave_discards += s.lost(),
            Follower::Listener(l) => diag.listener_discards += l.lost(),
            Follower::None => {}
        }
    }
    Ok(RunOutput {
        config: cfg.clone(),
        topology: topo,
        links,
        classes,
        samples,
        counter: world.counter,
        corrections: world.corrections,
        snapshots,
        ledger: world.ledger,
        final_clocks: world.nodes.iter().map(|n| n.clock).collect(),
        level_start,
        end,
        diagnostics: diag,
    })
}

/// Whether a run's per-level message counts, read per cycle or in total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageCounts {
    PerCycle(Vec<(u64, u64)>),
    Total(u64),
}

/// Counts the configured kinds of sync messages at `level`.
pub fn count_messages(out: &RunOutput, level: Level, per_cycle: bool) -> MessageCounts {
    let kinds = out.config.counted_kinds(level == Level::Upper);
    if per_cycle {
        MessageCounts::PerCycle(out.counter.per_cycle(level, &kinds))
    } else {
        MessageCounts::Total(out.counter.total(level, &kinds))
    }
}
