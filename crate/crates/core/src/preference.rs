//! Preference labeling: when to label, how labels supersede each other, and
//! how the group's answer is chosen.
//!
//! Every participant holds at most one strength per item (the most recent
//! label). An item's net preference is the sum of those strengths divided by
//! the size of the whole session roster, so silence counts as zero. The item
//! with the highest net wins.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::catalog::SuggestionCatalog;
use crate::ids::{ItemId, ParticipantId};
use crate::lm::Strength;

/// Labeling-pass trigger bookkeeping for one room. Counts human messages only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerState {
    pub messages_since_last_pass: u32,
    pub oldest_unlabeled_msg_at_ms: Option<u64>,
}

impl TriggerState {
    pub fn record_message(&mut self, at_ms: u64) {
        self.messages_since_last_pass += 1;
        self.oldest_unlabeled_msg_at_ms.get_or_insert(at_ms);
    }

    pub fn reset(&mut self) {
        *self = TriggerState::default();
    }

    /// When the time rule will fire, if any message is waiting.
    pub fn deadline_ms(&self, time_trigger_ms: u64) -> Option<u64> {
        self.oldest_unlabeled_msg_at_ms.map(|t| t + time_trigger_ms)
    }
}

/// Fire after `msg_trigger` unlabeled messages, or once the oldest unlabeled
/// message is `time_trigger_ms` old.
pub fn should_trigger(state: &TriggerState, now_ms: u64, msg_trigger: u32, time_trigger_ms: u64) -> bool {
    state.messages_since_last_pass >= msg_trigger
        || state.oldest_unlabeled_msg_at_ms.is_some_and(|t| now_ms.saturating_sub(t) >= time_trigger_ms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredPreference {
    pub strength: Strength,
    pub at_ms: u64,
}

/// A label resolved to a catalog item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemLabel {
    pub participant: ParticipantId,
    pub item: ItemId,
    pub strength: Strength,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedLabel {
    pub label: ItemLabel,
    pub reason: &'static str,
}

/// Latest-wins map (participant, item) -> strength. Absence means 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PreferenceStore {
    latest: BTreeMap<(ParticipantId, ItemId), StoredPreference>,
}

impl PreferenceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, participant: &ParticipantId, item: ItemId) -> Option<StoredPreference> {
        self.latest.get(&(participant.clone(), item)).copied()
    }

    pub fn len(&self) -> usize {
        self.latest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latest.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParticipantId, ItemId, StoredPreference)> {
        self.latest.iter().map(|((p, i), s)| (p, *i, *s))
    }

    /// Apply one pass of labels. A label replaces the stored entry unless the
    /// stored one is strictly newer. Labels for anyone outside the human
    /// roster are rejected.
    pub fn apply_labels(&mut self, labels: &[ItemLabel], roster: &BTreeSet<ParticipantId>) -> Vec<RejectedLabel> {
        let mut rejected = Vec::new();
        for label in labels {
            if !roster.contains(&label.participant) {
                tracing::warn!(participant = %label.participant, "rejecting label for non-human or unknown author");
                rejected.push(RejectedLabel { label: label.clone(), reason: "author is not a human participant" });
                continue;
            }
            let key = (label.participant.clone(), label.item);
            let incoming = StoredPreference { strength: label.strength, at_ms: label.at_ms };
            match self.latest.get(&key) {
                Some(existing) if existing.at_ms > label.at_ms => {}
                _ => {
                    self.latest.insert(key, incoming);
                }
            }
        }
        rejected
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreferenceError {
    #[error("session roster is empty")]
    EmptyRoster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetRow {
    pub item_id: ItemId,
    pub label: String,
    /// Sum of stored strengths.
    pub total: i64,
    pub net: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetPreferenceTable {
    pub roster_size: usize,
    pub rows: Vec<NetRow>,
}

impl NetPreferenceTable {
    pub fn net(&self, item: ItemId) -> Option<f64> {
        self.rows.iter().find(|r| r.item_id == item).map(|r| r.net)
    }
}

pub fn net_preferences(
    store: &PreferenceStore,
    roster_size: usize,
    catalog: &SuggestionCatalog,
) -> Result<NetPreferenceTable, PreferenceError> {
    if roster_size == 0 {
        return Err(PreferenceError::EmptyRoster);
    }
    let mut totals: BTreeMap<ItemId, i64> = BTreeMap::new();
    for (_, item, pref) in store.iter() {
        *totals.entry(item).or_default() += i64::from(pref.strength.get());
    }
    let rows = catalog
        .items()
        .iter()
        .map(|it| {
            let total = totals.get(&it.item_id).copied().unwrap_or(0);
            NetRow { item_id: it.item_id, label: it.canonical_label.clone(), total, net: total as f64 / roster_size as f64 }
        })
        .collect();
    Ok(NetPreferenceTable { roster_size, rows })
}

/// How the winner was separated from the other maximal items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    Unique,
    EarliestProposal,
    CanonicalLabel,
}

/// A net preference held at four decimals, serialized as fixed-point text.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Net4(f64);

impl Net4 {
    pub fn new(v: f64) -> Net4 {
        Net4(format!("{v:.4}").parse().expect("formatted float parses"))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<Net4> for String {
    fn from(n: Net4) -> String {
        format!("{:.4}", n.0)
    }
}

impl TryFrom<String> for Net4 {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse::<f64>().map(Net4::new).map_err(|e| format!("bad net {s:?}: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Winner {
    pub item_id: ItemId,
    pub label: String,
    pub net: Net4,
    pub tie_break: TieBreak,
    /// Items that shared the maximal net before the tie-break.
    pub tied_with: Vec<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub item_id: ItemId,
    pub label: String,
    pub net: Net4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    /// `None` when the catalog was empty.
    pub winner: Option<Winner>,
    pub roster_size: usize,
    pub table: Vec<ResultRow>,
    pub finalized_at_ms: u64,
}

impl SessionResult {
    pub fn winner_label(&self) -> Option<&str> {
        self.winner.as_ref().map(|w| w.label.as_str())
    }
}

/// Highest net wins; ties go to the earlier-proposed item, then the
/// lexicographically smaller label.
pub fn select_winner(table: &NetPreferenceTable, catalog: &SuggestionCatalog, finalized_at_ms: u64) -> SessionResult {
    let rows: Vec<ResultRow> = table
        .rows
        .iter()
        .map(|r| ResultRow { item_id: r.item_id, label: r.label.clone(), net: Net4::new(r.net) })
        .collect();
    let winner = table.rows.iter().map(|r| r.total).max().map(|best| {
        // Shared denominator: comparing integer totals is exact.
        let top: Vec<&crate::agents::CatalogItem> = table
            .rows
            .iter()
            .filter(|r| r.total == best)
            .filter_map(|r| catalog.get(r.item_id))
            .collect();
        let earliest = top.iter().map(|it| it.first_proposed_at_ms).min().expect("non-empty");
        let senior: Vec<_> = top.iter().filter(|it| it.first_proposed_at_ms == earliest).collect();
        let chosen = senior.iter().min_by(|a, b| a.canonical_label.cmp(&b.canonical_label)).expect("non-empty");
        let tie_break = if top.len() == 1 {
            TieBreak::Unique
        } else if senior.len() == 1 {
            TieBreak::EarliestProposal
        } else {
            TieBreak::CanonicalLabel
        };
        let net = table.net(chosen.item_id).expect("winner is in table");
        Winner {
            item_id: chosen.item_id,
            label: chosen.canonical_label.clone(),
            net: Net4::new(net),
            tie_break,
            tied_with: top.iter().map(|it| it.item_id).filter(|id| *id != chosen.item_id).collect(),
        }
    });
    SessionResult { winner, roster_size: table.roster_size, table: rows, finalized_at_ms }
}
