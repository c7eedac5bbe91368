use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ids::RoomId;
use crate::rng::{self, Stream};

/// Per-room agent timers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSchedule {
    pub rooms: BTreeMap<RoomId, RoomTimers>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomTimers {
    pub next_observer_at_ms: Option<u64>,
    pub next_surrogate_at_ms: Option<u64>,
    /// Newest relay-source cycle this room's surrogate has voiced.
    pub last_consumed_cycle: Option<u32>,
}

/// Observer interval for `room`'s `cycle`, uniform over the closed range.
/// Derived from the session seed alone so replay can recompute it.
pub fn observer_interval_ms(seed: u64, room: RoomId, cycle: u32, range_ms: (u64, u64)) -> u64 {
    let (lo, hi) = range_ms;
    rng::stream(seed, Stream::ObserverInterval, u64::from(room.0), u64::from(cycle)).gen_range(lo..=hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_stay_in_range_and_repeat() {
        let mut seen_lo = false;
        let mut seen_hi = false;
        for cycle in 0..2000 {
            let v = observer_interval_ms(9, RoomId(1), cycle, (45_000, 65_000));
            assert!((45_000..=65_000).contains(&v));
            assert_eq!(v, observer_interval_ms(9, RoomId(1), cycle, (45_000, 65_000)));
            seen_lo |= v < 46_000;
            seen_hi |= v > 64_000;
        }
        assert!(seen_lo && seen_hi);
        assert_eq!(observer_interval_ms(1, RoomId(0), 0, (5000, 5000)), 5000);
    }
}
