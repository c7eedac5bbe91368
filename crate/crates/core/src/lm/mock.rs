//! Deterministic backend driven by the marker grammar.
//!
//! The mock is a pure function of its inputs, so sessions run against it
//! produce byte-identical event logs.

use std::collections::{BTreeMap, BTreeSet};

use crate::agents::catalog::SuggestionCatalog;
use crate::config::SurrogateMode;
use crate::ids::ParticipantId;
use crate::lm::markers::{parse_markers, Verb};
use crate::lm::{
    DialogBlock, Evidence, LanguageModel, LmError, ObserverReport, PreferenceLabel, StanceEntry, StanceKind, Strength,
    MAX_STRENGTH,
};

#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl MockBackend {
    pub fn new() -> Self {
        MockBackend
    }
}

fn stance_of(verb: Verb) -> StanceKind {
    match verb {
        Verb::Propose => StanceKind::Proposed,
        Verb::Support | Verb::Relay => StanceKind::Supported,
        Verb::Oppose => StanceKind::Opposed,
    }
}

impl LanguageModel for MockBackend {
    fn distill(&self, block: &DialogBlock, catalog: &SuggestionCatalog, _question: &str) -> Result<ObserverReport, LmError> {
        let mut entries: Vec<StanceEntry> = Vec::new();
        let mut index: BTreeMap<(String, StanceKind), usize> = BTreeMap::new();
        for msg in &block.messages {
            for marker in parse_markers(&msg.body) {
                let kind = stance_of(marker.verb);
                // A relayed mention counts as mild support.
                let signed = marker.signed_strength().unwrap_or(1);
                let ev = Evidence { message_id: msg.message_id, at_ms: msg.timestamp_ms };
                match index.get(&(marker.item.clone(), kind)) {
                    Some(&i) => {
                        let e = &mut entries[i];
                        e.conviction = (e.conviction + signed).clamp(-MAX_STRENGTH, MAX_STRENGTH);
                        if !e.evidence.contains(&ev) {
                            e.evidence.push(ev);
                        }
                    }
                    None => {
                        index.insert((marker.item.clone(), kind), entries.len());
                        entries.push(StanceEntry { item: catalog.reference(&marker.item), kind, conviction: signed, evidence: vec![ev] });
                    }
                }
            }
        }
        let summary_text = summarize(&entries);
        Ok(ObserverReport { room: block.room, cycle_index: block.cycle_index, entries, summary_text, degraded: false })
    }

    fn label(
        &self,
        block: &DialogBlock,
        catalog: &SuggestionCatalog,
        roster: &BTreeSet<ParticipantId>,
        _question: &str,
    ) -> Result<Vec<PreferenceLabel>, LmError> {
        let mut out: Vec<PreferenceLabel> = Vec::new();
        let mut index: BTreeMap<(ParticipantId, String), usize> = BTreeMap::new();
        for msg in &block.messages {
            let Some(who) = msg.author.participant() else { continue };
            if !roster.contains(who) {
                continue;
            }
            for marker in parse_markers(&msg.body) {
                let Some(signed) = marker.signed_strength() else { continue };
                let strength = Strength::new(i64::from(signed)).expect("marker strengths are in range");
                let ev = Evidence { message_id: msg.message_id, at_ms: msg.timestamp_ms };
                match index.get(&(who.clone(), marker.item.clone())) {
                    Some(&i) => {
                        let label = &mut out[i];
                        label.strength = strength;
                        label.at_ms = msg.timestamp_ms;
                        if !label.evidence.contains(&ev) {
                            label.evidence.push(ev);
                        }
                    }
                    None => {
                        index.insert((who.clone(), marker.item.clone()), out.len());
                        out.push(PreferenceLabel {
                            participant: who.clone(),
                            item: catalog.reference(&marker.item),
                            strength,
                            at_ms: msg.timestamp_ms,
                            evidence: vec![ev],
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    fn phrase(&self, report: &ObserverReport, mode: SurrogateMode, source_room_name: &str) -> Result<String, LmError> {
        Ok(template_phrase(report, mode, source_room_name))
    }
}

fn summarize(entries: &[StanceEntry]) -> String {
    if entries.is_empty() {
        return "no suggestions discussed".to_string();
    }
    entries
        .iter()
        .map(|e| {
            let kind = match e.kind {
                StanceKind::Proposed => "proposed",
                StanceKind::Supported => "supported",
                StanceKind::Opposed => "opposed",
            };
            format!("{kind} {} ({:+})", e.item.label(), e.conviction)
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn join_clauses(clauses: &[String]) -> String {
    match clauses {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// Canonical surrogate utterance. Each relayed item appears as `RELAY(item)`
/// so downstream observers can detect it.
pub fn template_phrase(report: &ObserverReport, mode: SurrogateMode, source_room_name: &str) -> String {
    let clauses: Vec<String> = report
        .entries
        .iter()
        .map(|e| {
            let item = e.item.label();
            match (mode, e.kind) {
                (SurrogateMode::Overt, StanceKind::Opposed) => format!("are skeptical of RELAY({item})"),
                (SurrogateMode::Overt, _) => format!("favor RELAY({item})"),
                (SurrogateMode::Natural, StanceKind::Opposed) => format!("I'm skeptical of RELAY({item})"),
                (SurrogateMode::Natural, _) => format!("I favor RELAY({item})"),
            }
        })
        .collect();
    let body = join_clauses(&clauses);
    match mode {
        SurrogateMode::Overt => format!("I've been observing {source_room_name}, and they {body}."),
        SurrogateMode::Natural => format!("From my perspective, {body}."),
    }
}
