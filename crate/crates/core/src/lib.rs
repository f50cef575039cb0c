//! Discrete-event simulation of hierarchical clock synchronization in a
//! wireless sensor network, combining two-way timestamp exchanges with
//! receiver-only overhearing.

use std::fmt;

pub mod clock;
pub mod config;
pub mod energy;
pub mod kernel;
pub mod protocol;
pub mod report;
pub mod sim;
pub mod topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
