//! How fast one proposal travels around the ring with nobody else talking.

use serde::Serialize;
use thiserror::Error;

use crate::config::SessionConfig;
use crate::ids::{ParticipantId, RoomId};
use crate::partition::partition_population;
use crate::sim::run::{run_scenario, SimError};
use crate::sim::scenario::{Expectations, Scenario, ScriptEntry};
use crate::topology::build_topology;

pub const PROBE_ITEM: &str = "probe item";
const ROOM_SIZE: usize = 5;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("propagation probe needs at least 2 rooms, got {0}")]
    TooFewRooms(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HopRow {
    pub distance: usize,
    pub room: RoomId,
    pub first_arrival_ms: Option<u64>,
    pub bound_ms: u64,
}

impl HopRow {
    pub fn within_bound(&self) -> bool {
        self.first_arrival_ms.is_some_and(|t| t <= self.bound_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProbeReport {
    pub rooms: usize,
    pub seed: u64,
    pub hop_bound_ms: u64,
    pub rows: Vec<HopRow>,
}

impl ProbeReport {
    pub fn all_within_bound(&self) -> bool {
        self.rows.iter().all(HopRow::within_bound)
    }

    /// Arrival times never decrease with ring distance.
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| match (w[0].first_arrival_ms, w[1].first_arrival_ms) {
            (Some(a), Some(b)) => a <= b,
            (_, None) => true,
            (None, Some(_)) => false,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("distance,room,first_arrival_ms,bound_ms,within_bound\n");
        for r in &self.rows {
            let t = r.first_arrival_ms.map_or_else(String::new, |t| t.to_string());
            out.push_str(&format!("{},{},{t},{},{}\n", r.distance, r.room.0, r.bound_ms, r.within_bound()));
        }
        out
    }
}

/// The probe as a scenario: `n_rooms` rooms of five, one PROPOSE at t = 0
/// from the room at ring position 0, everyone else silent.
pub fn probe_scenario(n_rooms: usize, seed: u64) -> Result<Scenario, ProbeError> {
    if n_rooms < 2 {
        return Err(ProbeError::TooFewRooms(n_rooms));
    }
    let base = SessionConfig::default();
    let hop_s = base.observer_interval_s.1 + base.surrogate_delay_s;
    let config = SessionConfig {
        question: "probe".into(),
        duration_s: base.duration_s.max(hop_s * n_rooms as u32),
        rng_seed: seed,
        ..base
    };
    let roster: Vec<ParticipantId> = (0..n_rooms * ROOM_SIZE).map(|i| ParticipantId::new(format!("p{i:04}"))).collect();
    let plan = partition_population(&roster, &config).expect("probe roster is valid");
    let topology = build_topology(&plan.rooms, config.topology_kind, seed).expect("probe rooms are valid");
    let origin = topology.order[0];
    let speaker = plan.members(origin).into_iter().next().expect("rooms are non-empty");
    Ok(Scenario {
        name: format!("probe-{n_rooms}"),
        config,
        roster,
        script: vec![ScriptEntry { at_ms: 0, participant: Some(speaker), agent_room: None, body: format!("PROPOSE({PROBE_ITEM}, 3)") }],
        expectations: Expectations::default(),
    })
}

pub fn propagation_probe(n_rooms: usize, seed: u64) -> Result<ProbeReport, ProbeError> {
    let scenario = probe_scenario(n_rooms, seed)?;
    let hop_bound_ms = u64::from(scenario.config.observer_interval_s.1 + scenario.config.surrogate_delay_s) * 1000;
    let out = run_scenario(&scenario, seed)?;
    let topology = out.final_state.topology.clone().expect("started");
    let arrivals = out.trace.first_seen.get(PROBE_ITEM).cloned().unwrap_or_default();
    let rows = topology
        .order
        .iter()
        .enumerate()
        .map(|(k, room)| HopRow { distance: k, room: *room, first_arrival_ms: arrivals.get(room).copied(), bound_ms: k as u64 * hop_bound_ms })
        .collect();
    Ok(ProbeReport { rooms: n_rooms, seed, hop_bound_ms, rows })
}
