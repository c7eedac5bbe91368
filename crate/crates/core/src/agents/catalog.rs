//! Session-global suggestion database.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agents::ledger::ConvictionLedger;
use crate::ids::{ItemId, RoomId};
use crate::lm::markers::normalize_item;
use crate::lm::{ItemRef, ObserverReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub item_id: ItemId,
    pub canonical_label: String,
    pub aliases: BTreeSet<String>,
    pub first_proposed_at_ms: u64,
    pub first_room: RoomId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionCatalog {
    items: Vec<CatalogItem>,
    #[serde(skip)]
    by_alias: BTreeMap<String, ItemId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "change", rename_all = "snake_case")]
pub enum CatalogDelta {
    Minted { item_id: ItemId, label: String, at_ms: u64, room: RoomId },
    Merged { item_id: ItemId, text: String },
    FirstSeenMoved { item_id: ItemId, at_ms: u64, room: RoomId },
    Conviction { item_id: ItemId, room: RoomId, delta: i8 },
}

impl SuggestionCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[CatalogItem] {
        &self.items
    }

    pub fn get(&self, id: ItemId) -> Option<&CatalogItem> {
        self.items.get(id.0 as usize)
    }

    pub fn lookup(&self, text: &str) -> Option<ItemId> {
        self.by_alias.get(&normalize_item(text)).copied()
    }

    /// Map an item reference to an existing id without minting.
    pub fn resolve(&self, item: &ItemRef) -> Option<ItemId> {
        match item {
            ItemRef::Existing { id, .. } if self.get(*id).is_some() => Some(*id),
            other => self.lookup(other.label()),
        }
    }

    /// Reference for `text`: the existing item if an alias matches, else new text.
    pub fn reference(&self, text: &str) -> ItemRef {
        let norm = normalize_item(text);
        match self.by_alias.get(&norm) {
            Some(id) => ItemRef::Existing { id: *id, label: self.items[id.0 as usize].canonical_label.clone() },
            None => ItemRef::New(norm),
        }
    }

    /// Find or mint the item `item` names, recording evidence seen at
    /// `at_ms` in `room`. Deltas describing any change are appended.
    pub fn observe(&mut self, item: &ItemRef, at_ms: u64, room: RoomId, deltas: &mut Vec<CatalogDelta>) -> ItemId {
        if let Some(id) = self.resolve(item) {
            if matches!(item, ItemRef::New(_)) {
                deltas.push(CatalogDelta::Merged { item_id: id, text: item.label().to_string() });
            }
            let entry = &mut self.items[id.0 as usize];
            if (at_ms, room) < (entry.first_proposed_at_ms, entry.first_room) {
                entry.first_proposed_at_ms = at_ms;
                entry.first_room = room;
                deltas.push(CatalogDelta::FirstSeenMoved { item_id: id, at_ms, room });
            }
            return id;
        }
        let label = item.label().trim().to_string();
        let id = ItemId(self.items.len() as u32);
        let alias = normalize_item(&label);
        self.by_alias.insert(alias.clone(), id);
        self.items.push(CatalogItem {
            item_id: id,
            canonical_label: label.clone(),
            aliases: BTreeSet::from([alias]),
            first_proposed_at_ms: at_ms,
            first_room: room,
        });
        deltas.push(CatalogDelta::Minted { item_id: id, label, at_ms, room });
        id
    }

    /// Rebuild the alias index, e.g. after deserializing.
    pub fn reindex(&mut self) {
        self.by_alias = self
            .items
            .iter()
            .flat_map(|it| it.aliases.iter().map(move |a| (a.clone(), it.item_id)))
            .collect();
    }

    /// One line per item for prompts: `label [id]`.
    pub fn prompt_listing(&self) -> String {
        if self.items.is_empty() {
            return "(none yet)".to_string();
        }
        self.items
            .iter()
            .map(|it| format!("- {}", it.canonical_label))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Fold one observer report into the catalog and conviction ledger.
pub fn update_catalog(
    report: &ObserverReport,
    catalog: &mut SuggestionCatalog,
    ledger: &mut ConvictionLedger,
) -> Vec<CatalogDelta> {
    let mut deltas = Vec::new();
    for entry in &report.entries {
        let earliest = entry.evidence.iter().map(|e| e.at_ms).min().unwrap_or(0);
        let id = catalog.observe(&entry.item, earliest, report.room, &mut deltas);
        ledger.record(id, report.room, entry.conviction);
        deltas.push(CatalogDelta::Conviction { item_id: id, room: report.room, delta: entry.conviction });
    }
    deltas
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::MessageId;
    use crate::lm::{Evidence, StanceEntry, StanceKind};

    fn entry(item: ItemRef, kind: StanceKind, conviction: i8, at: &[u64]) -> StanceEntry {
        StanceEntry {
            item,
            kind,
            conviction,
            evidence: at.iter().enumerate().map(|(i, &t)| Evidence { message_id: MessageId(i as u64), at_ms: t }).collect(),
        }
    }

    fn report(room: u32, entries: Vec<StanceEntry>) -> ObserverReport {
        ObserverReport { room: RoomId(room), cycle_index: 0, entries, summary_text: String::new(), degraded: false }
    }

    #[test]
    fn new_item_minted_with_conviction() {
        let mut cat = SuggestionCatalog::new();
        let mut led = ConvictionLedger::default();
        let r = report(0, vec![entry(ItemRef::New("nursing".into()), StanceKind::Proposed, 2, &[1000])]);
        let deltas = update_catalog(&r, &mut cat, &mut led);
        assert_eq!(cat.len(), 1);
        assert_eq!(cat.items()[0].canonical_label, "nursing");
        assert_eq!(led.room_sum(ItemId(0), RoomId(0)), 2);
        assert!(matches!(deltas[0], CatalogDelta::Minted { .. }));
    }

    #[test]
    fn alias_merge_is_case_and_space_insensitive() {
        let mut cat = SuggestionCatalog::new();
        let mut led = ConvictionLedger::default();
        update_catalog(&report(0, vec![entry(ItemRef::New("nursing".into()), StanceKind::Proposed, 1, &[0])]), &mut cat, &mut led);
        let deltas = update_catalog(
            &report(1, vec![entry(ItemRef::New("Nursing ".into()), StanceKind::Proposed, 1, &[5])]),
            &mut cat,
            &mut led,
        );
        assert_eq!(cat.len(), 1);
        assert!(matches!(deltas[0], CatalogDelta::Merged { item_id: ItemId(0), .. }));
        assert_eq!(led.global_sum(ItemId(0)), 2);
    }

    #[test]
    fn first_proposal_is_global_minimum() {
        // The later-evidenced report lands first; the earlier one must still win.
        let mut cat = SuggestionCatalog::new();
        let mut led = ConvictionLedger::default();
        update_catalog(&report(1, vec![entry(ItemRef::New("trucking".into()), StanceKind::Proposed, 1, &[40_000])]), &mut cat, &mut led);
        update_catalog(&report(0, vec![entry(ItemRef::New("trucking".into()), StanceKind::Proposed, 1, &[10_000, 12_000])]), &mut cat, &mut led);
        let evidence = [40_000u64, 10_000, 12_000];
        let it = &cat.items()[0];
        assert_eq!(cat.len(), 1);
        assert_eq!(it.first_proposed_at_ms, *evidence.iter().min().unwrap());
        assert_eq!(it.first_room, RoomId(0));
    }

    #[test]
    fn opposition_lowers_ledger() {
        let mut cat = SuggestionCatalog::new();
        let mut led = ConvictionLedger::default();
        update_catalog(&report(0, vec![entry(ItemRef::New("a".into()), StanceKind::Proposed, 1, &[0])]), &mut cat, &mut led);
        let before = led.global_sum(ItemId(0));
        let existing = cat.reference("a");
        update_catalog(&report(0, vec![entry(existing, StanceKind::Opposed, -3, &[9])]), &mut cat, &mut led);
        assert_eq!(led.global_sum(ItemId(0)), before - 3);
    }

    #[test]
    fn serde_round_trip_reindexes() {
        let mut cat = SuggestionCatalog::new();
        cat.observe(&ItemRef::New("x".into()), 3, RoomId(0), &mut Vec::new());
        let mut back: SuggestionCatalog = serde_json::from_str(&serde_json::to_string(&cat).unwrap()).unwrap();
        back.reindex();
        assert_eq!(back, cat);
        assert_eq!(back.lookup(" X"), Some(ItemId(0)));
    }
}
