//! Which neighbouring room each surrogate relays from.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::TopologyKind;
use crate::ids::RoomId;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    /// Ring order; position `i` relays from position `i - 1`.
    pub order: Vec<RoomId>,
    /// room -> room whose observer reports this room's surrogate voices.
    pub relay_source: BTreeMap<RoomId, RoomId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("topology needs at least one room")]
    NoRooms,
    #[error("unsupported topology kind {0:?}")]
    UnsupportedKind(String),
}

impl Topology {
    /// Directed ring over `order` exactly as given.
    pub fn ring(order: Vec<RoomId>) -> Topology {
        let n = order.len();
        let relay_source = (0..n)
            .map(|i| (order[i], order[(i + n - 1) % n]))
            .collect();
        Topology { order, relay_source }
    }

    /// Surrogates are off when there is nobody else to listen to.
    pub fn surrogates_enabled(&self) -> bool {
        self.order.len() >= 2
    }

    pub fn source_of(&self, room: RoomId) -> Option<RoomId> {
        self.relay_source.get(&room).copied()
    }

    /// Rooms whose surrogate relays `room`'s reports.
    pub fn listeners_of(&self, room: RoomId) -> impl Iterator<Item = RoomId> + '_ {
        self.relay_source
            .iter()
            .filter(move |(dst, src)| **src == room && **dst != room)
            .map(|(dst, _)| *dst)
    }

    /// Position of `room` in ring order.
    pub fn position(&self, room: RoomId) -> Option<usize> {
        self.order.iter().position(|r| *r == room)
    }

    /// Room `distance` hops downstream of `room`.
    pub fn downstream(&self, room: RoomId, distance: usize) -> Option<RoomId> {
        let pos = self.position(room)?;
        Some(self.order[(pos + distance) % self.order.len()])
    }
}

pub fn build_topology(rooms: &[RoomId], kind: TopologyKind, seed: u64) -> Result<Topology, TopologyError> {
    if rooms.is_empty() {
        return Err(TopologyError::NoRooms);
    }
    match kind {
        TopologyKind::DirectedRing => {
            let mut order = rooms.to_vec();
            order.shuffle(&mut rng::stream(seed, Stream::Topology, 0, 0));
            Ok(Topology::ring(order))
        }
    }
}

/// Parse a topology kind name, for callers that receive it as text.
pub fn parse_kind(name: &str) -> Result<TopologyKind, TopologyError> {
    match name {
        "directed_ring" => Ok(TopologyKind::DirectedRing),
        other => Err(TopologyError::UnsupportedKind(other.to_string())),
    }
}
