//! Hierarchical network layout, broadcast radio medium and TDMA slots.
//!
//! The default layout has one concentrator at the origin, routers spaced
//! along a line (a wing), and each router's leaves on a small ring around it.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::energy::EnergyLedger;
use crate::kernel::{SimRng, TrueTime};
use crate::protocol::SyncMessage;
use crate::NodeId;

/// Two thirds of the speed of light, in metres per second.
pub const DEFAULT_SIGNAL_SPEED: f64 = 2.0 / 3.0 * 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Concentrator,
    Router,
    Leaf,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Concentrator => "concentrator",
            Tier::Router => "router",
            Tier::Leaf => "leaf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub tier: Tier,
    pub parent: Option<NodeId>,
    /// Metres.
    pub pos: (f64, f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("router count must be at least 1")]
    NoRouters,
    #[error("leaves per router must be at least 1")]
    NoLeaves,
    #[error("radio radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("{0} is not in radio range of {1}")]
    OutOfRange(NodeId, NodeId),
    #[error("malformed topology: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyConfig {
    pub routers: u32,
    pub leaves_per_router: u32,
    /// Distance between consecutive routers along the line, metres.
    pub router_spacing_m: f64,
    /// Radius of the ring on which a router's leaves sit, metres.
    pub leaf_ring_m: f64,
    pub radio_radius_m: f64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            routers: 8,
            leaves_per_router: 8,
            router_spacing_m: 20.0,
            leaf_ring_m: 5.0,
            radio_radius_m: 250.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<NodeSpec>,
    groups: BTreeMap<NodeId, Vec<NodeId>>,
    radio_radius_m: f64,
}

/// Ids are assigned concentrator first, then routers, then each router's
/// leaves in router order.
pub fn build_hierarchy(cfg: &HierarchyConfig) -> Result<Topology, TopologyError> {
    if cfg.routers == 0 {
        return Err(TopologyError::NoRouters);
    }
    if cfg.leaves_per_router == 0 {
        return Err(TopologyError::NoLeaves);
    }
    let mut nodes = vec![NodeSpec {
        id: NodeId(0),
        tier: Tier::Concentrator,
        parent: None,
        pos: (0.0, 0.0),
    }];
    // routers alternate sides of the concentrator along the x axis
    for r in 0..cfg.routers {
        let rank = (r / 2 + 1) as f64;
        let side = if r % 2 == 0 { 1.0 } else { -1.0 };
        nodes.push(NodeSpec {
            id: NodeId(1 + r),
            tier: Tier::Router,
            parent: Some(NodeId(0)),
            pos: (side * rank * cfg.router_spacing_m, 0.0),
        });
    }
    let mut next = 1 + cfg.routers;
    for r in 0..cfg.routers {
        let router = nodes[1 + r as usize];
        for k in 0..cfg.leaves_per_router {
            let angle = std::f64::consts::TAU * k as f64 / cfg.leaves_per_router as f64;
            nodes.push(NodeSpec {
                id: NodeId(next),
                tier: Tier::Leaf,
                parent: Some(router.id),
                pos: (
                    router.pos.0 + cfg.leaf_ring_m * angle.cos(),
                    router.pos.1 + cfg.leaf_ring_m * angle.sin(),
                ),
            });
            next += 1;
        }
    }
    Topology::from_nodes(nodes, cfg.radio_radius_m)
}

impl Topology {
    /// Builds a topology from explicit node specs. Ids must be `0..n` in order.
    pub fn from_nodes(nodes: Vec<NodeSpec>, radio_radius_m: f64) -> Result<Self, TopologyError> {
        if !(radio_radius_m > 0.0) {
            return Err(TopologyError::BadRadius(radio_radius_m));
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.id.0 as usize != i {
                return Err(TopologyError::Malformed(format!(
                    "node at index {i} has id {}",
                    n.id
                )));
            }
        }
        let tier_of = |id: NodeId| nodes.get(id.0 as usize).map(|n| n.tier);
        let concentrators = nodes.iter().filter(|n| n.tier == Tier::Concentrator).count();
        if concentrators != 1 {
            return Err(TopologyError::Malformed(format!(
                "expected exactly one concentrator, found {concentrators}"
            )));
        }
        let mut groups: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for n in &nodes {
            let expected = match n.tier {
                Tier::Concentrator => None,
                Tier::Router => Some(Tier::Concentrator),
                Tier::Leaf => Some(Tier::Router),
            };
            let actual = n.parent.and_then(tier_of);
            if actual != expected {
                return Err(TopologyError::Malformed(format!(
                    "{} {} has parent tier {:?}",
                    n.tier.as_str(),
                    n.id,
                    actual
                )));
            }
            match n.tier {
                Tier::Router => {
                    groups.entry(n.id).or_default();
                }
                Tier::Leaf => groups.entry(n.parent.unwrap()).or_default().push(n.id),
                Tier::Concentrator => {}
            }
        }
        if groups.is_empty() {
            return Err(TopologyError::NoRouters);
        }
        if groups.values().any(Vec::is_empty) {
            return Err(TopologyError::NoLeaves);
        }
        Ok(Topology {
            nodes,
            groups,
            radio_radius_m,
        })
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.get(id.0 as usize)
    }

    pub fn concentrator(&self) -> NodeId {
        NodeId(0)
    }

    pub fn routers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.groups.keys().copied()
    }

    pub fn leaves_of(&self, router: NodeId) -> &[NodeId] {
        self.groups.get(&router).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn groups(&self) -> &BTreeMap<NodeId, Vec<NodeId>> {
        &self.groups
    }

    pub fn radio_radius_m(&self) -> f64 {
        self.radio_radius_m
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        let (pa, pb) = (self.nodes[a.0 as usize].pos, self.nodes[b.0 as usize].pos);
        (pa.0 - pb.0).hypot(pa.1 - pb.1)
    }

    pub fn in_range(&self, a: NodeId, b: NodeId) -> bool {
        self.distance(a, b) <= self.radio_radius_m
    }
}

/// Per-link propagation and impairments.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    pub signal_speed_m_per_s: f64,
    /// Directed (from, to) delays that replace the geometric value.
    pub overrides: BTreeMap<(NodeId, NodeId), u64>,
    /// Extra delay added on top of the base delay of a directed link.
    pub excess: BTreeMap<(NodeId, NodeId), u64>,
    /// Delivery jitter when either end is the concentrator.
    pub jitter_upper_ns: f64,
    /// Delivery jitter on router and leaf links.
    pub jitter_lower_ns: f64,
    pub loss_probability: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            signal_speed_m_per_s: DEFAULT_SIGNAL_SPEED,
            overrides: BTreeMap::new(),
            excess: BTreeMap::new(),
            jitter_upper_ns: 0.0,
            jitter_lower_ns: 0.0,
            loss_probability: 0.0,
        }
    }
}

impl LinkModel {
    /// Deterministic delay of the directed link, nanoseconds.
    pub fn base_delay(&self, topo: &Topology, from: NodeId, to: NodeId) -> u64 {
        let base = match self.overrides.get(&(from, to)) {
            Some(&d) => d,
            None => (topo.distance(from, to) / self.signal_speed_m_per_s * 1e9).round() as u64,
        };
        base + self.excess.get(&(from, to)).copied().unwrap_or(0)
    }

    fn jitter_for(&self, topo: &Topology, from: NodeId, to: NodeId) -> f64 {
        let upper = topo.node(from).map(|n| n.tier) == Some(Tier::Concentrator)
            || topo.node(to).map(|n| n.tier) == Some(Tier::Concentrator);
        if upper {
            self.jitter_upper_ns
        } else {
            self.jitter_lower_ns
        }
    }
}

/// What a node does in one of its slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotKind {
    /// Sync and FollowUp to the node's children.
    Master,
    /// DelayRequest to the node's parent.
    Upstream,
    /// DelayResponses to the node's children.
    Response,
}

impl SlotKind {
    pub const ALL: [SlotKind; 3] = [SlotKind::Master, SlotKind::Upstream, SlotKind::Response];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TdmaSchedule {
    pub slot_duration_ns: u64,
    /// Spacing between consecutive frame starts. At least `frame_len * slot`.
    pub frame_period_ns: u64,
    pub origin: TrueTime,
    pub slots: BTreeMap<(NodeId, SlotKind), u32>,
    pub frame_len: u32,
}

impl TdmaSchedule {
    pub fn slot_of(&self, node: NodeId, kind: SlotKind) -> Option<u32> {
        self.slots.get(&(node, kind)).copied()
    }

    pub fn frame_duration_ns(&self) -> u64 {
        self.frame_len as u64 * self.slot_duration_ns
    }

    pub fn frame_start(&self, frame: u64) -> TrueTime {
        self.origin + frame * self.frame_period_ns
    }

    /// Start and end of `node`'s `kind` slot in `frame`.
    pub fn slot_window(&self, node: NodeId, kind: SlotKind, frame: u64) -> Option<(TrueTime, TrueTime)> {
        let slot = self.slot_of(node, kind)?;
        let start = self.frame_start(frame) + slot as u64 * self.slot_duration_ns;
        Some((start, start + self.slot_duration_ns))
    }

    pub fn owns_slot(&self, node: NodeId, t: TrueTime) -> bool {
        if t < self.origin || self.frame_period_ns == 0 {
            return false;
        }
        let into = (t - self.origin) % self.frame_period_ns;
        SlotKind::ALL
            .into_iter()
            .filter_map(|k| self.slot_of(node, k))
            .any(|s| {
                let start = s as u64 * self.slot_duration_ns;
                into >= start && into < start + self.slot_duration_ns
            })
    }
}

/// Lays out one frame in six phases: concentrator Sync, router requests,
/// concentrator responses, router Sync, leaf requests, router responses. Each
/// level's exchanges thus finish inside the frame, and routers are corrected
/// before they serve as reference for their leaves. Leaf request slots go
/// round-robin over the routers (first leaf of every router, then the second,
/// and so on).
///
/// With `spatial_reuse`, each phase still occupies its own range of slots, but
/// within a phase slots are greedily colored on the interference graph (two
/// nodes interfere when in range of each other or of a common node).
pub fn assign_tdma_slots(
    topo: &Topology,
    slot_duration_ns: u64,
    frame_period_ns: u64,
    origin: TrueTime,
    spatial_reuse: bool,
) -> TdmaSchedule {
    let c = topo.concentrator();
    let routers: Vec<NodeId> = topo.routers().collect();
    let masters: Vec<NodeId> = routers
        .iter()
        .copied()
        .filter(|r| !topo.leaves_of(*r).is_empty())
        .collect();
    let widest = masters.iter().map(|&r| topo.leaves_of(r).len()).max().unwrap_or(0);
    let leaves: Vec<NodeId> = (0..widest)
        .flat_map(|i| masters.iter().filter_map(move |&r| topo.leaves_of(r).get(i).copied()))
        .collect();
    let top: Vec<NodeId> = if routers.is_empty() { vec![] } else { vec![c] };
    let phases = [
        (top.clone(), SlotKind::Master),
        (routers, SlotKind::Upstream),
        (top, SlotKind::Response),
        (masters.clone(), SlotKind::Master),
        (leaves, SlotKind::Upstream),
        (masters, SlotKind::Response),
    ];
    let interferes = |a: NodeId, b: NodeId| {
        topo.in_range(a, b)
            || topo
                .nodes()
                .iter()
                .any(|n| topo.in_range(a, n.id) && topo.in_range(b, n.id))
    };
    let mut slots = BTreeMap::new();
    let mut floor = 0u32;
    for (members, kind) in phases {
        let mut phase: Vec<(NodeId, u32)> = Vec::new();
        for (i, n) in members.into_iter().enumerate() {
            let slot = if spatial_reuse {
                let mut s = floor;
                while phase.iter().any(|&(o, os)| os == s && interferes(n, o)) {
                    s += 1;
                }
                s
            } else {
                floor + i as u32
            };
            phase.push((n, slot));
        }
        if let Some(top) = phase.iter().map(|&(_, s)| s).max() {
            floor = top + 1;
        }
        slots.extend(phase.into_iter().map(|(n, s)| ((n, kind), s)));
    }
    TdmaSchedule {
        slot_duration_ns,
        frame_period_ns,
        origin,
        slots,
        frame_len: floor,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MediumError {
    #[error("{sender} transmitted at {at} outside its TDMA slot")]
    OutsideSlot { sender: NodeId, at: TrueTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub receiver: NodeId,
    pub arrival: TrueTime,
}

/// Outcome of one broadcast.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Broadcast {
    pub sent: bool,
    pub deliveries: Vec<Delivery>,
    pub lost: u32,
}

/// Shared radio channel. Every in-range node that is listening for a message
/// gets a delivery; listening is decided by the caller (TDMA receivers only
/// wake for the exchanges they take part in).
#[derive(Debug, Clone)]
pub struct Medium {
    topo: Topology,
    links: LinkModel,
    schedule: TdmaSchedule,
    last_arrival: HashMap<(NodeId, NodeId), TrueTime>,
    transmissions: u64,
}

impl Medium {
    pub fn new(topo: Topology, links: LinkModel, schedule: TdmaSchedule) -> Self {
        Medium {
            topo,
            links,
            schedule,
            last_arrival: HashMap::new(),
            transmissions: 0,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn links(&self) -> &LinkModel {
        &self.links
    }

    pub fn schedule(&self) -> &TdmaSchedule {
        &self.schedule
    }

    pub fn transmissions(&self) -> u64 {
        self.transmissions
    }

    /// Sends `msg` from `sender` at `t`. Consumes one jitter draw and one loss
    /// draw per in-range listening receiver, in ascending id order.
    pub fn broadcast<F>(
        &mut self,
        sender: NodeId,
        _msg: &SyncMessage,
        t: TrueTime,
        mut listens: F,
        ledger: &mut EnergyLedger,
        rng: &mut SimRng,
    ) -> Result<Broadcast, MediumError>
    where
        F: FnMut(NodeId) -> bool,
    {
        if !self.schedule.owns_slot(sender, t) {
            return Err(MediumError::OutsideSlot { sender, at: t });
        }
        let mut out = Broadcast::default();
        if !ledger.charge_tx(sender) {
            return Ok(out);
        }
        out.sent = true;
        self.transmissions += 1;
        for spec in self.topo.nodes() {
            let rx = spec.id;
            if rx == sender || !self.topo.in_range(sender, rx) || !listens(rx) || !ledger.is_alive(rx) {
                continue;
            }
            let z: f64 = rng.sample(StandardNormal);
            let lost = rng.gen::<f64>() < self.links.loss_probability;
            if lost {
                out.lost += 1;
                continue;
            }
            let base = self.links.base_delay(&self.topo, sender, rx) as i64;
            let sigma = self.links.jitter_for(&self.topo, sender, rx);
            let jitter = (z.clamp(-4.0, 4.0) * sigma).round_ties_even() as i64;
            let mut arrival = t + (base + jitter).max(0) as u64;
            let last = self.last_arrival.entry((sender, rx)).or_insert(TrueTime::ZERO);
            if arrival < *last {
                arrival = *last;
            }
            *last = arrival;
            if ledger.charge_rx(rx) {
                out.deliveries.push(Delivery {
                    receiver: rx,
                    arrival,
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::RadioCostModel;
    use crate::kernel::seeded_rng;

    fn tiny(routers: u32, leaves: u32) -> Topology {
        build_hierarchy(&HierarchyConfig {
            routers,
            leaves_per_router: leaves,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn default_shape() {
        let t = build_hierarchy(&HierarchyConfig::default()).unwrap();
        assert_eq!(t.len(), 73);
        assert_eq!(t.routers().count(), 8);
        assert!(t.groups().values().all(|g| g.len() == 8));
        for n in t.nodes() {
            match n.tier {
                Tier::Leaf => assert_eq!(t.node(n.parent.unwrap()).unwrap().tier, Tier::Router),
                Tier::Router => assert_eq!(n.parent, Some(NodeId(0))),
                Tier::Concentrator => assert!(n.parent.is_none()),
            }
        }
    }

    #[test]
    fn minimal_hierarchy() {
        let t = tiny(1, 1);
        assert_eq!(t.len(), 3);
        assert_eq!(t.groups().len(), 1);
    }

    #[test]
    fn zero_counts_rejected() {
        let mut c = HierarchyConfig::default();
        c.routers = 0;
        assert_eq!(build_hierarchy(&c), Err(TopologyError::NoRouters));
        c.routers = 2;
        c.leaves_per_router = 0;
        assert_eq!(build_hierarchy(&c), Err(TopologyError::NoLeaves));
    }

    #[test]
    fn leaves_reach_router_and_group_slave() {
        let t = build_hierarchy(&HierarchyConfig::default()).unwrap();
        for (&r, leaves) in t.groups() {
            let slave = leaves[0];
            for &l in leaves {
                assert!(t.in_range(l, r));
                assert!(t.in_range(l, slave));
            }
            assert!(t.in_range(r, t.concentrator()));
        }
    }

    #[test]
    fn range_predicate() {
        let nodes = vec![
            NodeSpec { id: NodeId(0), tier: Tier::Concentrator, parent: None, pos: (0.0, 0.0) },
            NodeSpec { id: NodeId(1), tier: Tier::Router, parent: Some(NodeId(0)), pos: (0.0, 0.0) },
            NodeSpec { id: NodeId(2), tier: Tier::Leaf, parent: Some(NodeId(1)), pos: (11.0, 0.0) },
        ];
        let t = Topology::from_nodes(nodes, 10.0).unwrap();
        assert!(t.in_range(NodeId(0), NodeId(1)));
        assert!(!t.in_range(NodeId(0), NodeId(2)));
        assert!(!t.in_range(NodeId(2), NodeId(0)));
    }

    #[test]
    fn default_schedule_is_conservative() {
        let t = build_hierarchy(&HierarchyConfig::default()).unwrap();
        let s = assign_tdma_slots(&t, 1_000_000, 100_000_000, TrueTime::ZERO, false);
        // 8 routers and 64 leaves send requests; 9 masters have two more slots
        assert_eq!(s.frame_len, 90);
        let mut used: Vec<u32> = s.slots.values().copied().collect();
        used.sort();
        used.dedup();
        assert_eq!(used.len(), 90);
        for n in t.nodes() {
            let Some(p) = n.parent else { continue };
            let up = s.slot_of(n.id, SlotKind::Upstream).unwrap();
            assert!(s.slot_of(p, SlotKind::Master).unwrap() < up);
            assert!(up < s.slot_of(p, SlotKind::Response).unwrap());
            if let Some(m) = s.slot_of(n.id, SlotKind::Master) {
                // a router is corrected before it serves its leaves
                assert!(s.slot_of(p, SlotKind::Response).unwrap() < m);
            }
        }
        assert_eq!(s.slot_of(NodeId(0), SlotKind::Upstream), None);
        assert_eq!(
            s,
            assign_tdma_slots(&t, 1_000_000, 100_000_000, TrueTime::ZERO, false)
        );
    }

    #[test]
    fn leaf_requests_round_robin_over_routers() {
        let t = build_hierarchy(&HierarchyConfig::default()).unwrap();
        let s = assign_tdma_slots(&t, 1_000_000, 100_000_000, TrueTime::ZERO, false);
        let first: Vec<u32> = t
            .routers()
            .map(|r| s.slot_of(t.leaves_of(r)[0], SlotKind::Upstream).unwrap())
            .collect();
        assert_eq!(first, (18..26).collect::<Vec<u32>>());
    }

    #[test]
    fn spatial_reuse_shares_slots_only_between_distant_nodes() {
        let t = build_hierarchy(&HierarchyConfig {
            routers: 4,
            leaves_per_router: 3,
            router_spacing_m: 100.0,
            leaf_ring_m: 5.0,
            radio_radius_m: 120.0,
        })
        .unwrap();
        let s = assign_tdma_slots(&t, 1_000_000, 100_000_000, TrueTime::ZERO, true);
        let plain = assign_tdma_slots(&t, 1_000_000, 100_000_000, TrueTime::ZERO, false);
        assert!(s.frame_len < plain.frame_len);
        let owned: Vec<((NodeId, SlotKind), u32)> = s.slots.iter().map(|(&k, &v)| (k, v)).collect();
        let mut shared = 0;
        for &((a, _), sa) in &owned {
            for &((b, _), sb) in &owned {
                if a < b && sa == sb {
                    shared += 1;
                    assert!(!t.in_range(a, b));
                    assert!(!t.nodes().iter().any(|c| t.in_range(a, c.id) && t.in_range(b, c.id)));
                }
            }
        }
        assert!(shared > 0);
    }

    #[test]
    fn owns_slot_windows() {
        let t = tiny(1, 1);
        let s = assign_tdma_slots(&t, 1_000, 10_000, TrueTime(500), false);
        // C master 0, R upstream 1, C response 2, R master 3, leaf 4, R response 5
        assert_eq!(s.frame_len, 6);
        assert!(s.owns_slot(NodeId(0), TrueTime(500)));
        assert!(!s.owns_slot(NodeId(0), TrueTime(1500)));
        assert!(s.owns_slot(NodeId(0), TrueTime(2500)));
        assert!(s.owns_slot(NodeId(1), TrueTime(1500)));
        assert!(s.owns_slot(NodeId(1), TrueTime(3500)));
        assert!(s.owns_slot(NodeId(1), TrueTime(5500)));
        assert!(s.owns_slot(NodeId(2), TrueTime(10_500 + 4_999)));
        assert!(!s.owns_slot(NodeId(2), TrueTime(10_500 + 5_000)));
        assert!(!s.owns_slot(NodeId(0), TrueTime(10)));
        assert_eq!(
            s.slot_window(NodeId(1), SlotKind::Upstream, 1),
            Some((TrueTime(11_500), TrueTime(12_500)))
        );
        assert_eq!(
            s.slot_window(NodeId(1), SlotKind::Response, 0),
            Some((TrueTime(5_500), TrueTime(6_500)))
        );
        assert_eq!(s.slot_window(NodeId(2), SlotKind::Response, 0), None);
    }

    fn medium(t: Topology, links: LinkModel) -> (Medium, EnergyLedger) {
        let ids: Vec<NodeId> = t.nodes().iter().map(|n| n.id).collect();
        let s = assign_tdma_slots(&t, 1_000_000, 100_000_000, TrueTime::ZERO, false);
        let ledger = EnergyLedger::new(RadioCostModel::standard(), 2700.0, ids);
        (Medium::new(t, links, s), ledger)
    }

    #[test]
    fn fan_out_accounting() {
        let (mut m, mut ledger) = medium(tiny(1, 2), LinkModel::default());
        let msg = SyncMessage::sync(NodeId(1), NodeId(2), 0);
        let mut rng = seeded_rng(0, 0);
        let b = m
            .broadcast(NodeId(0), &msg, TrueTime(10), |_| true, &mut ledger, &mut rng)
            .unwrap();
        assert_eq!(b.deliveries.len(), 3);
        assert_eq!(ledger.node(NodeId(0)).unwrap().tx_count, 1);
        let rx: u64 = (1..4).map(|i| ledger.node(NodeId(i)).unwrap().rx_count).sum();
        assert_eq!(rx, 3);
    }

    #[test]
    fn total_loss_still_charges_sender() {
        let links = LinkModel {
            loss_probability: 1.0,
            ..Default::default()
        };
        let (mut m, mut ledger) = medium(tiny(1, 2), links);
        let msg = SyncMessage::sync(NodeId(1), NodeId(2), 0);
        let mut rng = seeded_rng(0, 0);
        let b = m
            .broadcast(NodeId(0), &msg, TrueTime(10), |_| true, &mut ledger, &mut rng)
            .unwrap();
        assert!(b.deliveries.is_empty());
        assert_eq!(b.lost, 3);
        assert_eq!(ledger.node(NodeId(0)).unwrap().tx_count, 1);
        assert_eq!(ledger.total_rx_count(), 0);
    }

    #[test]
    fn equal_distances_arrive_together() {
        // leaves on a ring: all equidistant from the router
        let (mut m, mut ledger) = medium(tiny(1, 6), LinkModel::default());
        let msg = SyncMessage::sync(NodeId(1), NodeId(2), 0);
        let mut rng = seeded_rng(0, 0);
        let t0 = TrueTime(1_000_000);
        let b = m
            .broadcast(NodeId(1), &msg, t0, |id| id.0 >= 2, &mut ledger, &mut rng)
            .unwrap();
        let expected = (5.0 / DEFAULT_SIGNAL_SPEED * 1e9).round() as u64;
        assert_eq!(b.deliveries.len(), 6);
        assert!(b.deliveries.iter().all(|d| d.arrival == t0 + expected));
    }

    #[test]
    fn transmitting_outside_slot_is_error() {
        let (mut m, mut ledger) = medium(tiny(1, 1), LinkModel::default());
        let msg = SyncMessage::sync(NodeId(1), NodeId(2), 0);
        let mut rng = seeded_rng(0, 0);
        assert!(m
            .broadcast(NodeId(2), &msg, TrueTime(10), |_| true, &mut ledger, &mut rng)
            .is_err());
        assert_eq!(ledger.total_tx_count(), 0);
    }

    #[test]
    fn per_link_fifo_under_heavy_jitter() {
        let links = LinkModel {
            jitter_upper_ns: 5_000.0,
            jitter_lower_ns: 5_000.0,
            ..Default::default()
        };
        let (mut m, mut ledger) = medium(tiny(1, 1), links);
        let msg = SyncMessage::sync(NodeId(0), NodeId(1), 0);
        let mut rng = seeded_rng(11, 0);
        let mut last = TrueTime::ZERO;
        for k in 0..500u64 {
            let t = TrueTime(k * 10);
            let b = m
                .broadcast(NodeId(0), &msg, t, |id| id == NodeId(1), &mut ledger, &mut rng)
                .unwrap();
            let a = b.deliveries[0].arrival;
            assert!(a >= last && a >= t);
            last = a;
        }
    }
}
