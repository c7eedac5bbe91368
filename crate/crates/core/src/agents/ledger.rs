use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{ItemId, RoomId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomConviction {
    pub sum: i64,
    pub entries: u32,
}

/// Running signed conviction per (item, room) and per item.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvictionLedger {
    per_room: BTreeMap<ItemId, BTreeMap<RoomId, RoomConviction>>,
    global: BTreeMap<ItemId, i64>,
}

impl ConvictionLedger {
    pub fn record(&mut self, item: ItemId, room: RoomId, conviction: i8) {
        let cell = self.per_room.entry(item).or_default().entry(room).or_default();
        cell.sum += i64::from(conviction);
        cell.entries += 1;
        *self.global.entry(item).or_default() += i64::from(conviction);
    }

    pub fn room_sum(&self, item: ItemId, room: RoomId) -> i64 {
        self.per_room.get(&item).and_then(|m| m.get(&room)).map_or(0, |c| c.sum)
    }

    pub fn global_sum(&self, item: ItemId) -> i64 {
        self.global.get(&item).copied().unwrap_or(0)
    }

    pub fn rooms(&self, item: ItemId) -> impl Iterator<Item = (RoomId, RoomConviction)> + '_ {
        self.per_room.get(&item).into_iter().flat_map(|m| m.iter().map(|(r, c)| (*r, *c)))
    }

    /// Global sums equal the sum over rooms for every item.
    pub fn is_consistent(&self) -> bool {
        self.per_room.iter().all(|(item, rooms)| {
            rooms.values().map(|c| c.sum).sum::<i64>() == self.global_sum(*item)
        }) && self.global.keys().all(|k| self.per_room.contains_key(k))
    }
}
