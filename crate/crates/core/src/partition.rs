//! Splitting a population into small deliberation rooms.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{SessionConfig, Structure};
use crate::ids::{ParticipantId, RoomId};
use crate::rng::{self, Stream};

/// Smallest room the partitioner will produce once the population allows it.
pub const MIN_ROOM_SIZE: usize = 4;
/// Largest population served by a single room.
pub const SINGLE_ROOM_MAX: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomPlan {
    pub rooms: Vec<RoomId>,
    pub assignment: BTreeMap<ParticipantId, RoomId>,
}

impl RoomPlan {
    pub fn room_of(&self, participant: &ParticipantId) -> Option<RoomId> {
        self.assignment.get(participant).copied()
    }

    pub fn members(&self, room: RoomId) -> BTreeSet<ParticipantId> {
        self.assignment
            .iter()
            .filter(|(_, r)| **r == room)
            .map(|(p, _)| p.clone())
            .collect()
    }

    pub fn room_sizes(&self) -> Vec<usize> {
        let mut sizes: BTreeMap<RoomId, usize> = self.rooms.iter().map(|r| (*r, 0)).collect();
        for room in self.assignment.values() {
            *sizes.entry(*room).or_default() += 1;
        }
        sizes.into_values().collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("cannot partition an empty population")]
    Empty,
    #[error("participant {0} listed more than once")]
    Duplicate(ParticipantId),
}

/// Number of rooms for `population` people aiming at `target` per room.
///
/// Start from `ceil(p / target)` rooms and drop rooms until the smallest
/// (even) slice has at least four members.
pub fn room_count(population: usize, target: usize) -> usize {
    if population <= SINGLE_ROOM_MAX {
        return 1;
    }
    let target = target.max(1);
    let mut n = population.div_ceil(target);
    while n > 1 && population / n < MIN_ROOM_SIZE {
        n -= 1;
    }
    n
}

/// Shuffle the population with the session seed and deal it into evenly sized rooms.
pub fn partition_population(
    participants: &[ParticipantId],
    config: &SessionConfig,
) -> Result<RoomPlan, PartitionError> {
    if participants.is_empty() {
        return Err(PartitionError::Empty);
    }
    let mut seen = BTreeSet::new();
    for p in participants {
        if !seen.insert(p) {
            return Err(PartitionError::Duplicate(p.clone()));
        }
    }

    let n = match config.structure {
        Structure::SingleRoom => 1,
        Structure::ConversationalSwarm => room_count(participants.len(), config.target_room_size as usize),
    };

    let mut order = participants.to_vec();
    order.shuffle(&mut rng::stream(config.rng_seed, Stream::Partition, 0, 0));

    let base = order.len() / n;
    let extra = order.len() % n;
    let mut assignment = BTreeMap::new();
    let mut cursor = 0;
    for room in 0..n {
        let size = base + usize::from(room < extra);
        for p in &order[cursor..cursor + size] {
            assignment.insert(p.clone(), RoomId(room as u32));
        }
        cursor += size;
    }

    Ok(RoomPlan {
        rooms: (0..n as u32).map(RoomId).collect(),
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn people(n: usize) -> Vec<ParticipantId> {
        (0..n).map(|i| ParticipantId(format!("u{i}"))).collect()
    }

    fn cfg(target: u32, seed: u64) -> SessionConfig {
        SessionConfig { target_room_size: target, rng_seed: seed, ..Default::default() }
    }

    fn sorted_sizes(plan: &RoomPlan) -> Vec<usize> {
        let mut s = plan.room_sizes();
        s.sort_unstable_by(|a, b| b.cmp(a));
        s
    }

    #[test]
    fn three_hundred_into_sixty_fives() {
        let plan = partition_population(&people(300), &cfg(5, 1)).unwrap();
        assert_eq!(plan.rooms.len(), 60);
        assert!(plan.room_sizes().iter().all(|&s| s == 5));
    }

    #[test]
    fn small_population_is_one_room() {
        let plan = partition_population(&people(5), &cfg(5, 1)).unwrap();
        assert_eq!(plan.rooms, vec![RoomId(0)]);
        assert_eq!(plan.room_sizes(), vec![5]);
    }

    #[test]
    fn forty_eight_and_eleven() {
        let plan = partition_population(&people(48), &cfg(5, 3)).unwrap();
        assert_eq!(sorted_sizes(&plan), vec![5, 5, 5, 5, 5, 5, 5, 5, 4, 4]);
        let plan = partition_population(&people(11), &cfg(5, 3)).unwrap();
        assert_eq!(sorted_sizes(&plan), vec![6, 5]);
    }

    #[test]
    fn single_room_structure_ignores_size() {
        let config = SessionConfig { structure: Structure::SingleRoom, ..Default::default() };
        let plan = partition_population(&people(48), &config).unwrap();
        assert_eq!(plan.room_sizes(), vec![48]);
    }

    #[test]
    fn rejects_empty_and_duplicates() {
        assert_eq!(partition_population(&[], &cfg(5, 0)), Err(PartitionError::Empty));
        let dup = vec![ParticipantId::new("a"), ParticipantId::new("a")];
        assert!(matches!(partition_population(&dup, &cfg(5, 0)), Err(PartitionError::Duplicate(_))));
    }

    /// Brute force: for each candidate room count, even slicing gives sizes
    /// floor(p/n) and ceil(p/n). The chosen count must be the largest n no
    /// greater than ceil(p/target) whose slices stay within [4, 7].
    #[test]
    fn room_count_matches_enumeration() {
        for target in 4..=7usize {
            for p in 8..=400usize {
                let feasible: Vec<usize> = (1..=p)
                    .filter(|&n| p / n >= 4 && p.div_ceil(n) <= 7)
                    .collect();
                let cap = p.div_ceil(target);
                let expected = feasible.iter().copied().filter(|&n| n <= cap).max().unwrap();
                assert_eq!(room_count(p, target), expected, "p={p} target={target}");
            }
        }
    }

    proptest! {
        #[test]
        fn sizes_within_bounds(p in 8usize..2000, target in 4u32..=7, seed in any::<u64>()) {
            let plan = partition_population(&people(p), &cfg(target, seed)).unwrap();
            let sizes = plan.room_sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), p);
            prop_assert!(sizes.iter().all(|&s| (4..=7).contains(&s)));
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }

        #[test]
        fn tiny_populations_single_room(p in 1usize..=7, target in 4u32..=7) {
            let plan = partition_population(&people(p), &cfg(target, 0)).unwrap();
            prop_assert_eq!(plan.rooms.len(), 1);
        }

        #[test]
        fn deterministic_for_seed(p in 1usize..300, seed in any::<u64>()) {
            let a = partition_population(&people(p), &cfg(5, seed)).unwrap();
            let b = partition_population(&people(p), &cfg(5, seed)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
