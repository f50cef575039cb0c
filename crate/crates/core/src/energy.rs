//! Per-node radio energy accounting against a finite battery.
//!
//! Energy is kept in integer nanojoules so that per-message linearity and
//! conservation hold exactly.

use std::collections::BTreeMap;
use std::io::{self, Write};

use crate::NodeId;

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NanoJoules(pub u64);

impl NanoJoules {
    pub fn from_joules(j: f64) -> Self {
        NanoJoules((j * 1e9).round() as u64)
    }

    pub fn from_millijoules(mj: f64) -> Self {
        NanoJoules((mj * 1e6).round() as u64)
    }

    pub fn as_joules(self) -> f64 {
        self.0 as f64 * 1e-9
    }
}

/// How one transmission or reception is priced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadioCostModel {
    /// Fixed cost per message, in millijoules.
    PerMessage { tx_mj: f64, rx_mj: f64 },
    /// Radio power times on-air duration.
    PowerTimesDuration {
        tx_mw: f64,
        rx_mw: f64,
        message_duration_us: f64,
    },
}

impl RadioCostModel {
    /// 7 per transmission and 4.5 per reception, read as millijoules per
    /// message.
    pub fn standard() -> Self {
        RadioCostModel::PerMessage {
            tx_mj: 7.0,
            rx_mj: 4.5,
        }
    }

    pub fn tx_charge(&self) -> NanoJoules {
        match *self {
            RadioCostModel::PerMessage { tx_mj, .. } => NanoJoules::from_millijoules(tx_mj),
            // mW * us = nJ
            RadioCostModel::PowerTimesDuration {
                tx_mw,
                message_duration_us,
                ..
            } => NanoJoules((tx_mw * message_duration_us).round() as u64),
        }
    }

    pub fn rx_charge(&self) -> NanoJoules {
        match *self {
            RadioCostModel::PerMessage { rx_mj, .. } => NanoJoules::from_millijoules(rx_mj),
            RadioCostModel::PowerTimesDuration {
                rx_mw,
                message_duration_us,
                ..
            } => NanoJoules((rx_mw * message_duration_us).round() as u64),
        }
    }

    pub fn is_valid(&self) -> bool {
        let vals: &[f64] = match self {
            RadioCostModel::PerMessage { tx_mj, rx_mj } => &[*tx_mj, *rx_mj],
            RadioCostModel::PowerTimesDuration {
                tx_mw,
                rx_mw,
                message_duration_us,
            } => &[*tx_mw, *rx_mw, *message_duration_us],
        };
        vals.iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeEnergy {
    pub initial_budget: NanoJoules,
    pub tx_count: u64,
    pub rx_count: u64,
    pub consumed_tx: NanoJoules,
    pub consumed_rx: NanoJoules,
    pub consumed_idle: NanoJoules,
    pub dead: bool,
}

impl NodeEnergy {
    pub fn consumed(&self) -> NanoJoules {
        NanoJoules(self.consumed_tx.0 + self.consumed_rx.0 + self.consumed_idle.0)
    }

    pub fn remaining(&self) -> NanoJoules {
        NanoJoules(self.initial_budget.0 - self.consumed().0)
    }

    fn try_spend(&mut self, amount: NanoJoules) -> bool {
        if self.dead {
            return false;
        }
        if self.consumed().0 + amount.0 > self.initial_budget.0 {
            self.dead = true;
            return false;
        }
        true
    }
}

#[derive(Debug, Clone)]
pub struct EnergyLedger {
    model: RadioCostModel,
    tx_cost: NanoJoules,
    rx_cost: NanoJoules,
    nodes: BTreeMap<NodeId, NodeEnergy>,
    ignored: u64,
}

impl EnergyLedger {
    pub fn new(
        model: RadioCostModel,
        budget_joules: f64,
        nodes: impl IntoIterator<Item = NodeId>,
    ) -> Self {
        let budget = NanoJoules::from_joules(budget_joules);
        let nodes = nodes
            .into_iter()
            .map(|id| {
                (
                    id,
                    NodeEnergy {
                        initial_budget: budget,
                        tx_count: 0,
                        rx_count: 0,
                        consumed_tx: NanoJoules(0),
                        consumed_rx: NanoJoules(0),
                        consumed_idle: NanoJoules(0),
                        dead: false,
                    },
                )
            })
            .collect();
        EnergyLedger {
            model,
            tx_cost: model.tx_charge(),
            rx_cost: model.rx_charge(),
            nodes,
            ignored: 0,
        }
    }

    pub fn model(&self) -> &RadioCostModel {
        &self.model
    }

    pub fn tx_cost(&self) -> NanoJoules {
        self.tx_cost
    }

    pub fn rx_cost(&self) -> NanoJoules {
        self.rx_cost
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeEnergy> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &NodeEnergy)> {
        self.nodes.iter().map(|(k, v)| (*k, v))
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.nodes.get(&id).is_some_and(|n| !n.dead)
    }

    /// Charges attempted against dead or unknown nodes.
    pub fn ignored_charges(&self) -> u64 {
        self.ignored
    }

    /// Returns false (and charges nothing) if the node is dead or the charge
    /// would exhaust its budget.
    pub fn charge_tx(&mut self, id: NodeId) -> bool {
        self.charge(id, true)
    }

    pub fn charge_rx(&mut self, id: NodeId) -> bool {
        self.charge(id, false)
    }

    fn charge(&mut self, id: NodeId, tx: bool) -> bool {
        let cost = if tx { self.tx_cost } else { self.rx_cost };
        let Some(n) = self.nodes.get_mut(&id) else {
            self.ignored += 1;
            return false;
        };
        if !n.try_spend(cost) {
            self.ignored += 1;
            return false;
        }
        if tx {
            n.tx_count += 1;
            n.consumed_tx.0 += cost.0;
        } else {
            n.rx_count += 1;
            n.consumed_rx.0 += cost.0;
        }
        true
    }

    /// Charges idle listening power over `duration_ns` to every live node.
    pub fn charge_idle(&mut self, idle_mw: f64, duration_ns: u64) {
        if idle_mw <= 0.0 {
            return;
        }
        // mW * ns = pJ
        let amount = NanoJoules((idle_mw * duration_ns as f64 / 1000.0).round() as u64);
        for n in self.nodes.values_mut() {
            if n.try_spend(amount) {
                n.consumed_idle.0 += amount.0;
            }
        }
    }

    /// Total consumed by `a` minus total consumed by `b`, in joules.
    pub fn consumed_delta(&self, a: NodeId, b: NodeId) -> f64 {
        let get = |id| self.nodes.get(&id).map_or(0, |n: &NodeEnergy| n.consumed().0) as i128;
        (get(a) - get(b)) as f64 * 1e-9
    }

    pub fn total_tx_count(&self) -> u64 {
        self.nodes.values().map(|n| n.tx_count).sum()
    }

    pub fn total_rx_count(&self) -> u64 {
        self.nodes.values().map(|n| n.rx_count).sum()
    }

    pub fn total_consumed(&self) -> NanoJoules {
        NanoJoules(self.nodes.values().map(|n| n.consumed().0).sum())
    }

    /// `node_id,role,tx_count,rx_count,consumed_tx_j,consumed_rx_j,remaining_j`
    pub fn write_csv<W: Write>(
        &self,
        mut w: W,
        role_of: impl Fn(NodeId) -> String,
    ) -> io::Result<()> {
        writeln!(
            w,
            "node_id,role,tx_count,rx_count,consumed_tx_j,consumed_rx_j,remaining_j"
        )?;
        for (id, n) in &self.nodes {
            writeln!(
                w,
                "{},{},{},{},{:.9},{:.9},{:.9}",
                id.0,
                role_of(*id),
                n.tx_count,
                n.rx_count,
                n.consumed_tx.as_joules(),
                n.consumed_rx.as_joules(),
                n.remaining().as_joules()
            )?;
        }
        Ok(())
    }
}
