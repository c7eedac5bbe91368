//! Language-model backend boundary.
//!
//! Agents need three capabilities from a model: distilling a block of room
//! dialog into stances, labeling each participant's preferences, and phrasing
//! a neighbour's distillate as a chat message. [`LanguageModel`] is the raw
//! backend; the free functions in this module wrap it with the contract every
//! backend must satisfy (short-circuits, validation, degradation on failure).

pub mod http;
pub mod markers;
pub mod mock;
pub mod prompts;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::catalog::SuggestionCatalog;
use crate::config::SurrogateMode;
use crate::ids::{ItemId, MessageId, ParticipantId, RoomId};
use crate::message::{Author, Message};

pub use http::HttpBackend;
pub use mock::MockBackend;

pub const MAX_STRENGTH: i8 = 3;

/// Preference strength in `[-3, +3]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i8")]
pub struct Strength(i8);

impl Strength {
    pub fn new(v: i64) -> Option<Strength> {
        (-3..=3).contains(&v).then_some(Strength(v as i8))
    }

    pub fn get(self) -> i8 {
        self.0
    }
}

impl TryFrom<i64> for Strength {
    type Error = String;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Strength::new(v).ok_or_else(|| format!("strength {v} outside [-3, 3]"))
    }
}

impl From<Strength> for i8 {
    fn from(s: Strength) -> i8 {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StanceKind {
    Proposed,
    Supported,
    Opposed,
}

impl StanceKind {
    pub fn sign_ok(self, conviction: i8) -> bool {
        match self {
            StanceKind::Proposed | StanceKind::Supported => conviction > 0,
            StanceKind::Opposed => conviction < 0,
        }
    }
}

/// Either a catalog item or text for an item the catalog has not seen yet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemRef {
    Existing { id: ItemId, label: String },
    New(String),
}

impl ItemRef {
    pub fn label(&self) -> &str {
        match self {
            ItemRef::Existing { label, .. } => label,
            ItemRef::New(text) => text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Evidence {
    pub message_id: MessageId,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogBlock {
    pub room: RoomId,
    pub cycle_index: u32,
    pub messages: Vec<Message>,
}

impl DialogBlock {
    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn evidence(&self, id: MessageId) -> Option<Evidence> {
        self.messages.iter().find(|m| m.message_id == id).map(|m| Evidence { message_id: id, at_ms: m.timestamp_ms })
    }

    /// Transcript rendering used by prompts.
    pub fn transcript(&self) -> String {
        self.messages
            .iter()
            .map(|m| {
                let who = match &m.author {
                    Author::Participant(p) => p.to_string(),
                    Author::ObserverAgent(_) => "observer-agent".to_string(),
                    Author::SurrogateAgent(_) => "surrogate-agent".to_string(),
                };
                format!("[{}] {}: {}", m.message_id.0, who, m.body)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceEntry {
    pub item: ItemRef,
    pub kind: StanceKind,
    /// Non-zero, in `[-3, 3]`, sign agreeing with `kind`.
    pub conviction: i8,
    pub evidence: Vec<Evidence>,
}

impl StanceEntry {
    pub fn is_valid(&self) -> bool {
        self.conviction != 0 && self.conviction.abs() <= MAX_STRENGTH && self.kind.sign_ok(self.conviction)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObserverReport {
    pub room: RoomId,
    pub cycle_index: u32,
    pub entries: Vec<StanceEntry>,
    pub summary_text: String,
    /// Set when the backend failed and this report stands in empty.
    #[serde(default)]
    pub degraded: bool,
}

impl ObserverReport {
    pub fn empty(room: RoomId, cycle_index: u32) -> Self {
        ObserverReport { room, cycle_index, entries: Vec::new(), summary_text: String::new(), degraded: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceLabel {
    pub participant: ParticipantId,
    pub item: ItemRef,
    pub strength: Strength,
    /// Time of the latest utterance the label is drawn from.
    pub at_ms: u64,
    /// Every message by this participant that bears on the item.
    #[serde(default)]
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LmError {
    #[error("backend timed out")]
    Timeout,
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("backend returned status {0}")]
    Status(u16),
    #[error("malformed backend output: {0}")]
    Malformed(String),
}

/// A model backend. Implementations must be callable from many threads at once.
pub trait LanguageModel: Send + Sync {
    fn distill(&self, block: &DialogBlock, catalog: &SuggestionCatalog, question: &str) -> Result<ObserverReport, LmError>;

    fn label(
        &self,
        block: &DialogBlock,
        catalog: &SuggestionCatalog,
        roster: &BTreeSet<ParticipantId>,
        question: &str,
    ) -> Result<Vec<PreferenceLabel>, LmError>;

    fn phrase(&self, report: &ObserverReport, mode: SurrogateMode, source_room_name: &str) -> Result<String, LmError>;
}

/// Distill a block into a report. Empty blocks never reach the backend;
/// backend failures yield an empty report marked degraded.
pub fn distill_dialog(
    lm: &dyn LanguageModel,
    block: &DialogBlock,
    catalog: &SuggestionCatalog,
    question: &str,
) -> ObserverReport {
    if block.is_empty() {
        return ObserverReport::empty(block.room, block.cycle_index);
    }
    match lm.distill(block, catalog, question) {
        Ok(report) => sanitize_report(report, block, catalog),
        Err(err) => {
            tracing::warn!(room = %block.room, cycle = block.cycle_index, %err, "observer distillation degraded");
            ObserverReport { degraded: true, ..ObserverReport::empty(block.room, block.cycle_index) }
        }
    }
}

/// Enforce report invariants regardless of which backend produced it:
/// valid convictions only, evidence inside the block, one entry per
/// (item, kind) with convictions summed and clamped.
pub(crate) fn sanitize_report(report: ObserverReport, block: &DialogBlock, catalog: &SuggestionCatalog) -> ObserverReport {
    let mut merged: Vec<StanceEntry> = Vec::new();
    let mut index: BTreeMap<(String, StanceKind), usize> = BTreeMap::new();
    for entry in report.entries {
        if !entry.is_valid() {
            tracing::warn!(room = %block.room, item = entry.item.label(), conviction = entry.conviction, "dropping invalid stance entry");
            continue;
        }
        let item = match catalog.resolve(&entry.item) {
            Some(id) => ItemRef::Existing { id, label: catalog.get(id).map(|i| i.canonical_label.clone()).unwrap_or_default() },
            None => ItemRef::New(markers::normalize_item(entry.item.label())),
        };
        let evidence: Vec<Evidence> = entry.evidence.iter().filter_map(|e| block.evidence(e.message_id)).collect();
        let key = (markers::normalize_item(item.label()), entry.kind);
        match index.get(&key) {
            Some(&i) => {
                let slot = &mut merged[i];
                slot.conviction = (slot.conviction + entry.conviction).clamp(-MAX_STRENGTH, MAX_STRENGTH);
                for e in evidence {
                    if !slot.evidence.contains(&e) {
                        slot.evidence.push(e);
                    }
                }
            }
            None => {
                index.insert(key, merged.len());
                merged.push(StanceEntry { item, kind: entry.kind, conviction: entry.conviction, evidence });
            }
        }
    }
    ObserverReport { room: block.room, cycle_index: block.cycle_index, entries: merged, summary_text: report.summary_text, degraded: report.degraded }
}

/// Label the preferences of `roster` members expressed in `block`.
/// Labels for non-members, agents, or without backing messages are dropped.
pub fn label_preferences(
    lm: &dyn LanguageModel,
    block: &DialogBlock,
    catalog: &SuggestionCatalog,
    roster: &BTreeSet<ParticipantId>,
    question: &str,
) -> Vec<PreferenceLabel> {
    let has_human = block.messages.iter().any(|m| m.author.participant().is_some_and(|p| roster.contains(p)));
    if !has_human {
        return Vec::new();
    }
    let labels = match lm.label(block, catalog, roster, question) {
        Ok(labels) => labels,
        Err(err) => {
            tracing::warn!(room = %block.room, %err, "preference labeling degraded");
            return Vec::new();
        }
    };
    let mut seen = BTreeSet::new();
    let mut out: Vec<PreferenceLabel> = Vec::new();
    for label in labels.into_iter().rev() {
        let authored: Vec<&Message> = block
            .messages
            .iter()
            .filter(|m| m.author.participant() == Some(&label.participant))
            .collect();
        if !roster.contains(&label.participant) || authored.is_empty() {
            tracing::warn!(participant = %label.participant, "dropping label for non-member or silent author");
            continue;
        }
        if !seen.insert((label.participant.clone(), markers::normalize_item(label.item.label()))) {
            continue;
        }
        let mut label = label;
        label.evidence = label
            .evidence
            .iter()
            .filter_map(|e| authored.iter().find(|m| m.message_id == e.message_id))
            .map(|m| Evidence { message_id: m.message_id, at_ms: m.timestamp_ms })
            .collect();
        if label.evidence.is_empty() {
            let last = authored.last().expect("non-empty");
            label.evidence.push(Evidence { message_id: last.message_id, at_ms: last.timestamp_ms });
        }
        label.at_ms = label.evidence.iter().map(|e| e.at_ms).max().expect("non-empty");
        out.push(label);
    }
    out.reverse();
    out
}

/// Phrase a relay. Empty reports produce nothing; backend failure falls
/// back to the deterministic template.
pub fn phrase_surrogate(
    lm: &dyn LanguageModel,
    report: &ObserverReport,
    mode: SurrogateMode,
    source_room_name: &str,
) -> Option<String> {
    if report.entries.is_empty() {
        return None;
    }
    match lm.phrase(report, mode, source_room_name) {
        Ok(text) if !text.trim().is_empty() => Some(text),
        Ok(_) => Some(mock::template_phrase(report, mode, source_room_name)),
        Err(err) => {
            tracing::warn!(%err, "surrogate phrasing fell back to template");
            Some(mock::template_phrase(report, mode, source_room_name))
        }
    }
}
