//! Per-participant contribution rates from a session event log.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::analytics::stats::{self, StatsError};
use crate::ids::ParticipantId;
use crate::message::Author;
use crate::session::event::{Event, EventPayload};

#[derive(Debug, Error, PartialEq)]
pub enum ContributionError {
    #[error("transcript has no participants")]
    EmptyRoster,
    #[error("window must be positive")]
    EmptyWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipantRates {
    pub messages: u64,
    pub characters: u64,
    pub messages_per_minute: f64,
    pub characters_per_minute: f64,
}

/// Distribution summary of one rate across participants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample variance; `None` with fewer than two participants.
    pub variance: Option<f64>,
    pub p10: f64,
    pub p90: f64,
    /// `None` when the 10th percentile is zero.
    pub contribution_ratio: Option<f64>,
}

impl RateSummary {
    pub fn of(values: &[f64]) -> Result<RateSummary, StatsError> {
        Ok(RateSummary {
            n: values.len(),
            mean: stats::mean(values)?,
            variance: stats::sample_variance(values).ok(),
            p10: stats::percentile(values, 0.1)?,
            p90: stats::percentile(values, 0.9)?,
            contribution_ratio: stats::contribution_ratio(values).ok(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContributionStats {
    pub window_s: f64,
    pub per_participant: BTreeMap<ParticipantId, ParticipantRates>,
    pub messages_per_minute: RateSummary,
    pub characters_per_minute: RateSummary,
}

impl ContributionStats {
    pub fn messages_per_minute(&self) -> Vec<f64> {
        self.per_participant.values().map(|r| r.messages_per_minute).collect()
    }

    pub fn characters_per_minute(&self) -> Vec<f64> {
        self.per_participant.values().map(|r| r.characters_per_minute).collect()
    }
}

/// Rates over human messages sent within `window_s` of deliberation start.
/// Silent roster members count as zero. Characters are Unicode scalars.
pub fn contribution_stats(transcript: &[Event], window_s: f64) -> Result<ContributionStats, ContributionError> {
    if window_s <= 0.0 || !window_s.is_finite() {
        return Err(ContributionError::EmptyWindow);
    }
    let mut roster = BTreeSet::new();
    let mut start = None;
    for e in transcript {
        match &e.payload {
            EventPayload::ParticipantJoined { participant } => {
                roster.insert(participant.clone());
            }
            EventPayload::DeliberationStarted { .. } => start = Some(e.at_ms),
            _ => {}
        }
    }
    if roster.is_empty() {
        return Err(ContributionError::EmptyRoster);
    }
    let start = start.unwrap_or(0);
    let end = start as f64 + window_s * 1000.0;

    let mut counts: BTreeMap<ParticipantId, (u64, u64)> = roster.iter().map(|p| (p.clone(), (0, 0))).collect();
    for m in transcript.iter().filter_map(|e| e.payload.chat_message()) {
        let Author::Participant(p) = &m.author else { continue };
        if m.timestamp_ms < start || m.timestamp_ms as f64 > end {
            continue;
        }
        if let Some(c) = counts.get_mut(p) {
            c.0 += 1;
            c.1 += m.body.chars().count() as u64;
        }
    }
    let minutes = window_s / 60.0;
    let per_participant: BTreeMap<ParticipantId, ParticipantRates> = counts
        .into_iter()
        .map(|(p, (messages, characters))| {
            let rates = ParticipantRates {
                messages,
                characters,
                messages_per_minute: messages as f64 / minutes,
                characters_per_minute: characters as f64 / minutes,
            };
            (p, rates)
        })
        .collect();
    let mpm: Vec<f64> = per_participant.values().map(|r| r.messages_per_minute).collect();
    let cpm: Vec<f64> = per_participant.values().map(|r| r.characters_per_minute).collect();
    Ok(ContributionStats {
        window_s,
        messages_per_minute: RateSummary::of(&mpm).expect("roster non-empty"),
        characters_per_minute: RateSummary::of(&cpm).expect("roster non-empty"),
        per_participant,
    })
}
