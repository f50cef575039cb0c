//! Scenario configuration: a TOML file with one section per subsystem.
//!
//! Every field has a default, so an empty file is the default hybrid scenario.
//! Unknown keys are rejected so that typos surface as errors naming the key.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::RadioCostModel;
use crate::protocol::MessageKind;
use crate::topology::{HierarchyConfig, NodeSpec, Tier, DEFAULT_SIGNAL_SPEED};
use crate::NodeId;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    /// Every child runs the two-way exchange with its parent.
    Pure1588,
    /// One child per group runs the two-way exchange; the rest overhear it.
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftMode {
    /// Each node's drift is drawn uniformly from `[-drift_ppm, +drift_ppm]`.
    Uniform,
    /// The concentrator runs at nominal rate; every other node differs from its
    /// parent by exactly `drift_ppm`, with a random sign.
    PerEdge,
    /// The concentrator runs at nominal rate, its children at `+drift_ppm` or
    /// `-drift_ppm` (random sign), and every deeper node at the negation of
    /// its parent's drift.
    Opposed,
    /// Drifts are taken from `drifts_ppm`, indexed by node id.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMode {
    PerMessage,
    PowerDuration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplicitNode {
    pub tier: Tier,
    pub parent: Option<u32>,
    pub x: f64,
    pub y: f64,
}

impl Default for ExplicitNode {
    fn default() -> Self {
        ExplicitNode {
            tier: Tier::Leaf,
            parent: None,
            x: 0.0,
            y: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub routers: u32,
    pub leaves_per_router: u32,
    pub router_spacing_m: f64,
    pub leaf_ring_m: f64,
    pub radio_radius_m: f64,
    pub spatial_reuse: bool,
    /// When non-empty, replaces the generated hierarchy. Ids follow list order.
    pub nodes: Vec<ExplicitNode>,
}

impl Default for TopologySection {
    fn default() -> Self {
        let h = HierarchyConfig::default();
        TopologySection {
            routers: h.routers,
            leaves_per_router: h.leaves_per_router,
            router_spacing_m: h.router_spacing_m,
            leaf_ring_m: h.leaf_ring_m,
            radio_radius_m: h.radio_radius_m,
            spatial_reuse: false,
            nodes: Vec::new(),
        }
    }
}

impl TopologySection {
    pub fn hierarchy(&self) -> HierarchyConfig {
        HierarchyConfig {
            routers: self.routers,
            leaves_per_router: self.leaves_per_router,
            router_spacing_m: self.router_spacing_m,
            leaf_ring_m: self.leaf_ring_m,
            radio_radius_m: self.radio_radius_m,
        }
    }

    pub fn explicit_nodes(&self) -> Option<Vec<NodeSpec>> {
        if self.nodes.is_empty() {
            return None;
        }
        Some(
            self.nodes
                .iter()
                .enumerate()
                .map(|(i, n)| NodeSpec {
                    id: NodeId(i as u32),
                    tier: n.tier,
                    parent: n.parent.map(NodeId),
                    pos: (n.x, n.y),
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayOverride {
    pub from: u32,
    pub to: u32,
    pub ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinksSection {
    pub signal_speed_m_per_s: f64,
    /// Delivery jitter stddev on concentrator links.
    pub jitter_upper_ns: f64,
    /// Delivery jitter stddev on router and leaf links.
    pub jitter_lower_ns: f64,
    pub loss_probability: f64,
    /// Extra delay on the slave-to-listener link, drawn per listener uniformly
    /// from `[pbs_excess_min_ns, pbs_excess_max_ns]`.
    pub pbs_excess_min_ns: u64,
    pub pbs_excess_max_ns: u64,
    pub delays: Vec<DelayOverride>,
}

impl Default for LinksSection {
    fn default() -> Self {
        LinksSection {
            signal_speed_m_per_s: DEFAULT_SIGNAL_SPEED,
            jitter_upper_ns: 5.0,
            jitter_lower_ns: 5.0,
            loss_probability: 0.0,
            pbs_excess_min_ns: 2_000,
            pbs_excess_max_ns: 40_000,
            delays: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockSection {
    pub drift_mode: DriftMode,
    pub drift_ppm: f64,
    pub drifts_ppm: Vec<f64>,
    /// Initial offsets are uniform in `[-initial_offset_max_ns, +initial_offset_max_ns]`.
    pub initial_offset_max_ns: i64,
    /// When non-empty, initial offsets by node id.
    pub offsets_ns: Vec<i64>,
    pub timestamp_noise_ns: f64,
    pub noise_clip_sigmas: f64,
}

impl Default for ClockSection {
    fn default() -> Self {
        ClockSection {
            drift_mode: DriftMode::Opposed,
            drift_ppm: 1.5,
            drifts_ppm: Vec::new(),
            initial_offset_max_ns: 1_000_000,
            offsets_ns: Vec::new(),
            timestamp_noise_ns: 10.0,
            noise_clip_sigmas: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    /// Concentrator to routers.
    pub upper: ProtocolKind,
    /// Routers to leaves.
    pub lower: ProtocolKind,
    pub cycle_period_ms: f64,
    pub rounds_per_cycle: u32,
    pub upper_start_s: f64,
    pub lower_start_s: f64,
    /// Delay between FollowUp arrival and the earliest DelayRequest.
    pub slave_processing_us: f64,
    /// Explicit slave per group for hybrid levels. Defaults to the lowest id.
    pub slaves: Vec<u32>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            upper: ProtocolKind::Pure1588,
            lower: ProtocolKind::Hybrid,
            cycle_period_ms: 100.0,
            rounds_per_cycle: 1,
            upper_start_s: 0.3,
            lower_start_s: 7.0,
            slave_processing_us: 100.0,
            slaves: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdmaSection {
    pub slot_us: f64,
    /// Spacing between consecutive transmissions inside one slot.
    pub tx_spacing_us: f64,
    /// Quiet time at the end of every slot.
    pub guard_us: f64,
}

impl Default for TdmaSection {
    fn default() -> Self {
        TdmaSection {
            slot_us: 500.0,
            tx_spacing_us: 10.0,
            guard_us: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySection {
    pub mode: CostMode,
    /// Millijoules per message, or milliwatts in power-duration mode.
    pub tx: f64,
    pub rx: f64,
    pub message_duration_us: f64,
    pub budget_j: f64,
    pub idle_mw: f64,
}

impl Default for EnergySection {
    fn default() -> Self {
        EnergySection {
            mode: CostMode::PerMessage,
            tx: 7.0,
            rx: 4.5,
            message_duration_us: 1000.0,
            budget_j: 2700.0,
            idle_mw: 0.0,
        }
    }
}

impl EnergySection {
    pub fn cost_model(&self) -> RadioCostModel {
        match self.mode {
            CostMode::PerMessage => RadioCostModel::PerMessage {
                tx_mj: self.tx,
                rx_mj: self.rx,
            },
            CostMode::PowerDuration => RadioCostModel::PowerTimesDuration {
                tx_mw: self.tx,
                rx_mw: self.rx,
                message_duration_us: self.message_duration_us,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub end_s: f64,
    pub sampling: bool,
    pub sample_interval_ms: f64,
    /// Convergence bound for routers.
    pub router_bound_ns: i64,
    /// Convergence bound for leaves.
    pub leaf_bound_ns: i64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            end_s: 60.0,
            sampling: true,
            sample_interval_ms: 50.0,
            router_bound_ns: 1_000,
            leaf_bound_ns: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountingSection {
    /// Message kinds counted at the concentrator-router level.
    pub upper_kinds: Vec<String>,
    /// Message kinds counted at the router-leaf level.
    pub lower_kinds: Vec<String>,
}

impl Default for CountingSection {
    fn default() -> Self {
        let all: Vec<String> = MessageKind::ALL.iter().map(|k| k.as_str().to_string()).collect();
        CountingSection {
            upper_kinds: all.clone(),
            lower_kinds: all,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub topology: TopologySection,
    pub links: LinksSection,
    pub clock: ClockSection,
    pub protocol: ProtocolSection,
    pub tdma: TdmaSection,
    pub energy: EnergySection,
    pub run: RunSection,
    pub counting: CountingSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            topology: TopologySection::default(),
            links: LinksSection::default(),
            clock: ClockSection::default(),
            protocol: ProtocolSection::default(),
            tdma: TdmaSection::default(),
            energy: EnergySection::default(),
            run: RunSection::default(),
            counting: CountingSection::default(),
        }
    }
}

pub(crate) fn us_to_ns(us: f64) -> u64 {
    (us * 1e3).round() as u64
}

pub(crate) fn ms_to_ns(ms: f64) -> u64 {
    (ms * 1e6).round() as u64
}

pub(crate) fn s_to_ns(s: f64) -> u64 {
    (s * 1e9).round() as u64
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn counted_kinds(&self, upper: bool) -> Vec<MessageKind> {
        let names = if upper {
            &self.counting.upper_kinds
        } else {
            &self.counting.lower_kinds
        };
        names.iter().filter_map(|n| MessageKind::parse(n)).collect()
    }

    pub fn cycle_period_ns(&self) -> u64 {
        ms_to_ns(self.protocol.cycle_period_ms)
    }

    pub fn frame_period_ns(&self) -> u64 {
        self.cycle_period_ns() / self.protocol.rounds_per_cycle.max(1) as u64
    }

    pub fn node_count(&self) -> usize {
        if self.topology.nodes.is_empty() {
            1 + self.topology.routers as usize * (1 + self.topology.leaves_per_router as usize)
        } else {
            self.topology.nodes.len()
        }
    }

    fn child_counts(&self) -> Vec<usize> {
        if self.topology.nodes.is_empty() {
            let mut c = vec![self.topology.routers as usize];
            c.extend((0..self.topology.routers).map(|_| self.topology.leaves_per_router as usize));
            c
        } else {
            let mut counts = vec![0usize; self.topology.nodes.len()];
            for n in &self.topology.nodes {
                if let Some(c) = n.parent.and_then(|p| counts.get_mut(p as usize)) {
                    *c += 1;
                }
            }
            counts
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.topology;
        if t.nodes.is_empty() {
            if t.routers == 0 {
                return Err(invalid("topology.routers", "must be at least 1"));
            }
            if t.leaves_per_router == 0 {
                return Err(invalid("topology.leaves_per_router", "must be at least 1"));
            }
        }
        if !(t.radio_radius_m > 0.0) {
            return Err(invalid("topology.radio_radius_m", "must be positive"));
        }
        let l = &self.links;
        if !(l.signal_speed_m_per_s > 0.0) {
            return Err(invalid("links.signal_speed_m_per_s", "must be positive"));
        }
        if !(l.jitter_upper_ns >= 0.0) {
            return Err(invalid("links.jitter_upper_ns", "must be >= 0"));
        }
        if !(l.jitter_lower_ns >= 0.0) {
            return Err(invalid("links.jitter_lower_ns", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&l.loss_probability) {
            return Err(invalid("links.loss_probability", "must be in [0, 1]"));
        }
        if l.pbs_excess_min_ns > l.pbs_excess_max_ns {
            return Err(invalid(
                "links.pbs_excess_min_ns",
                "must not exceed links.pbs_excess_max_ns",
            ));
        }
        let n = self.node_count();
        if let Some(d) = l.delays.iter().find(|d| d.from as usize >= n || d.to as usize >= n) {
            return Err(invalid(
                "links.delays",
                format!("link {} -> {} names an unknown node", d.from, d.to),
            ));
        }
        let c = &self.clock;
        if !(c.drift_ppm >= 0.0 && c.drift_ppm <= 1000.0) {
            return Err(invalid("clock.drift_ppm", "must be in [0, 1000]"));
        }
        if c.drift_mode == DriftMode::Fixed && c.drifts_ppm.len() != n {
            return Err(invalid(
                "clock.drifts_ppm",
                format!("fixed mode needs {n} entries, got {}", c.drifts_ppm.len()),
            ));
        }
        if c.drifts_ppm.iter().any(|d| !(d.abs() <= 1000.0)) {
            return Err(invalid("clock.drifts_ppm", "entries must be within +-1000 ppm"));
        }
        if !c.offsets_ns.is_empty() && c.offsets_ns.len() != n {
            return Err(invalid(
                "clock.offsets_ns",
                format!("needs {n} entries, got {}", c.offsets_ns.len()),
            ));
        }
        if c.initial_offset_max_ns < 0 {
            return Err(invalid("clock.initial_offset_max_ns", "must be >= 0"));
        }
        if !(c.timestamp_noise_ns >= 0.0) {
            return Err(invalid("clock.timestamp_noise_ns", "must be >= 0"));
        }
        if !(c.noise_clip_sigmas > 0.0) {
            return Err(invalid("clock.noise_clip_sigmas", "must be positive"));
        }
        let p = &self.protocol;
        if !(p.cycle_period_ms > 0.0) {
            return Err(invalid("protocol.cycle_period_ms", "must be positive"));
        }
        if p.rounds_per_cycle == 0 {
            return Err(invalid("protocol.rounds_per_cycle", "must be at least 1"));
        }
        if !self.cycle_period_ns().is_multiple_of(p.rounds_per_cycle as u64) {
            return Err(invalid(
                "protocol.rounds_per_cycle",
                "must divide the cycle period in whole nanoseconds",
            ));
        }
        if !(p.upper_start_s >= 0.0) {
            return Err(invalid("protocol.upper_start_s", "must be >= 0"));
        }
        if !(p.lower_start_s >= p.upper_start_s) {
            return Err(invalid(
                "protocol.lower_start_s",
                "must not precede protocol.upper_start_s",
            ));
        }
        if !(p.slave_processing_us >= 0.0) {
            return Err(invalid("protocol.slave_processing_us", "must be >= 0"));
        }
        if let Some(&s) = p.slaves.iter().find(|&&s| s as usize >= n) {
            return Err(invalid("protocol.slaves", format!("unknown node {s}")));
        }
        let d = &self.tdma;
        if !(d.slot_us > 0.0) {
            return Err(invalid("tdma.slot_us", "must be positive"));
        }
        if !(d.tx_spacing_us > 0.0) {
            return Err(invalid("tdma.tx_spacing_us", "must be positive"));
        }
        if !(d.guard_us >= 0.0) {
            return Err(invalid("tdma.guard_us", "must be >= 0"));
        }
        let children = self.child_counts();
        let masters = children.iter().filter(|&&c| c > 0).count();
        let slots = if t.spatial_reuse { 6 } else { n - 1 + 2 * masters };
        if slots as u64 * us_to_ns(d.slot_us) > self.frame_period_ns() {
            return Err(invalid(
                "tdma.slot_us",
                format!(
                    "{slots} slots of {} us do not fit in a {} ns round",
                    d.slot_us,
                    self.frame_period_ns()
                ),
            ));
        }
        // busiest slot: Sync and FollowUp for every child
        let fanout = children.iter().copied().max().unwrap_or(0) as u64;
        if 2 * fanout * us_to_ns(d.tx_spacing_us) + us_to_ns(d.guard_us) > us_to_ns(d.slot_us) {
            return Err(invalid(
                "tdma.tx_spacing_us",
                format!(
                    "{} transmissions plus guard do not fit in a {} us slot",
                    2 * fanout,
                    d.slot_us
                ),
            ));
        }
        let e = &self.energy;
        if !e.cost_model().is_valid() {
            return Err(invalid("energy.tx", "costs must be finite and >= 0"));
        }
        if !(e.budget_j >= 0.0) {
            return Err(invalid("energy.budget_j", "must be >= 0"));
        }
        if !(e.idle_mw >= 0.0) {
            return Err(invalid("energy.idle_mw", "must be >= 0"));
        }
        let r = &self.run;
        if !(r.end_s > 0.0 && r.end_s <= 1.0e6) {
            return Err(invalid("run.end_s", "must be in (0, 1e6] seconds"));
        }
        if !(r.sample_interval_ms > 0.0) {
            return Err(invalid("run.sample_interval_ms", "must be positive"));
        }
        if r.router_bound_ns < 0 || r.leaf_bound_ns < 0 {
            return Err(invalid("run.router_bound_ns", "bounds must be >= 0"));
        }
        for (field, kinds) in [
            ("counting.upper_kinds", &self.counting.upper_kinds),
            ("counting.lower_kinds", &self.counting.lower_kinds),
        ] {
            if let Some(bad) = kinds.iter().find(|k| MessageKind::parse(k).is_none()) {
                return Err(invalid(field, format!("unknown message kind `{bad}`")));
            }
        }
        Ok(())
    }
}
