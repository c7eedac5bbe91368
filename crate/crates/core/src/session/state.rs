//! Session state as a pure fold over the event log.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::catalog::{update_catalog, SuggestionCatalog};
use crate::agents::ledger::ConvictionLedger;
use crate::agents::schedule::{observer_interval_ms, AgentSchedule, RoomTimers};
use crate::config::SessionConfig;
use crate::ids::{MessageId, ParticipantId, RoomId};
use crate::lm::ObserverReport;
use crate::message::Message;
use crate::partition::RoomPlan;
use crate::preference::{ItemLabel, PreferenceStore, SessionResult, TriggerState};
use crate::session::event::{Event, EventPayload};
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Lobby,
    Deliberating,
    Finalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PublishedReport {
    pub report: ObserverReport,
    pub published_at_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoomState {
    pub members: BTreeSet<ParticipantId>,
    pub messages: Vec<Message>,
    /// Completed observer cycles; also the next cycle index.
    pub observer_cycles: u32,
    pub observed_through: Option<MessageId>,
    pub reports: Vec<PublishedReport>,
    pub label_passes: u32,
    pub labeled_through: Option<MessageId>,
}

impl RoomState {
    pub fn messages_after(&self, boundary: Option<MessageId>) -> &[Message] {
        let start = match boundary {
            Some(id) => self.messages.partition_point(|m| m.message_id <= id),
            None => 0,
        };
        &self.messages[start..]
    }

    /// Trigger counters for human messages after `boundary`.
    pub fn trigger_state(&self, boundary: Option<MessageId>) -> TriggerState {
        let mut st = TriggerState::default();
        for m in self.messages_after(boundary).iter().filter(|m| m.author.is_human()) {
            st.record_message(m.timestamp_ms);
        }
        st
    }

    /// Newest non-empty report with a cycle above `consumed`.
    pub fn newest_unconsumed(&self, consumed: Option<u32>) -> Option<&PublishedReport> {
        self.reports
            .iter()
            .rev()
            .find(|r| !r.report.entries.is_empty() && consumed.is_none_or(|c| r.report.cycle_index > c))
    }

    /// Oldest non-empty report with a cycle above `consumed`.
    fn oldest_unconsumed(&self, consumed: Option<u32>) -> Option<&PublishedReport> {
        self.reports
            .iter()
            .find(|r| !r.report.entries.is_empty() && consumed.is_none_or(|c| r.report.cycle_index > c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub config: SessionConfig,
    pub phase: Phase,
    pub roster: BTreeSet<ParticipantId>,
    pub plan: Option<RoomPlan>,
    pub topology: Option<Topology>,
    pub started_at_ms: Option<u64>,
    pub rooms: BTreeMap<RoomId, RoomState>,
    pub catalog: SuggestionCatalog,
    pub ledger: ConvictionLedger,
    pub preferences: PreferenceStore,
    pub schedule: AgentSchedule,
    pub next_message_id: u64,
    pub result: Option<SessionResult>,
    pub last_at_ms: u64,
    pub next_seq: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("event log is empty")]
    Empty,
    #[error("first event must be session_created, found {0}")]
    MissingCreate(&'static str),
    #[error("sequence gap: expected {expected}, found {found}")]
    SequenceGap { expected: u64, found: u64 },
    #[error("event {seq} ({kind}) is not valid in phase {phase:?}")]
    OutOfPhase { seq: u64, kind: &'static str, phase: Phase },
    #[error("event {seq} goes back in time")]
    TimeReversal { seq: u64 },
}

impl SessionState {
    pub fn new(config: SessionConfig) -> Self {
        SessionState {
            config,
            phase: Phase::Lobby,
            roster: BTreeSet::new(),
            plan: None,
            topology: None,
            started_at_ms: None,
            rooms: BTreeMap::new(),
            catalog: SuggestionCatalog::new(),
            ledger: ConvictionLedger::default(),
            preferences: PreferenceStore::new(),
            schedule: AgentSchedule::default(),
            next_message_id: 0,
            result: None,
            last_at_ms: 0,
            next_seq: 0,
        }
    }

    /// Rebuild state from a complete log.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<SessionState, ReplayError> {
        let mut iter = events.into_iter();
        let first = iter.next().ok_or(ReplayError::Empty)?;
        let mut state = match &first.payload {
            EventPayload::SessionCreated { config } if first.seq == 0 => {
                let mut s = SessionState::new(config.clone());
                s.last_at_ms = first.at_ms;
                s.next_seq = 1;
                s
            }
            EventPayload::SessionCreated { .. } => return Err(ReplayError::SequenceGap { expected: 0, found: first.seq }),
            other => return Err(ReplayError::MissingCreate(other.kind())),
        };
        for event in iter {
            state.apply(event)?;
        }
        Ok(state)
    }

    /// Observer and surrogate agents run only when there is more than one room.
    pub fn agents_enabled(&self) -> bool {
        self.topology.as_ref().is_some_and(Topology::surrogates_enabled)
    }

    pub fn end_at_ms(&self) -> Option<u64> {
        self.started_at_ms.map(|s| s + self.config.duration_ms())
    }

    pub fn room_of(&self, participant: &ParticipantId) -> Option<RoomId> {
        self.plan.as_ref().and_then(|p| p.room_of(participant))
    }

    pub fn timers(&self, room: RoomId) -> RoomTimers {
        self.schedule.rooms.get(&room).cloned().unwrap_or_default()
    }

    fn check(&self, event: &Event, allowed: &[Phase]) -> Result<(), ReplayError> {
        if event.seq != self.next_seq {
            return Err(ReplayError::SequenceGap { expected: self.next_seq, found: event.seq });
        }
        if event.at_ms < self.last_at_ms {
            return Err(ReplayError::TimeReversal { seq: event.seq });
        }
        if !allowed.contains(&self.phase) {
            return Err(ReplayError::OutOfPhase { seq: event.seq, kind: event.payload.kind(), phase: self.phase });
        }
        Ok(())
    }

    /// Fold one event into the state. This is the only place state changes.
    pub fn apply(&mut self, event: &Event) -> Result<(), ReplayError> {
        let at = event.at_ms;
        match &event.payload {
            EventPayload::SessionCreated { .. } => {
                return Err(ReplayError::OutOfPhase { seq: event.seq, kind: "session_created", phase: self.phase });
            }
            EventPayload::ParticipantJoined { participant } => {
                self.check(event, &[Phase::Lobby])?;
                self.roster.insert(participant.clone());
            }
            EventPayload::DeliberationStarted { plan, topology } => {
                self.check(event, &[Phase::Lobby])?;
                self.phase = Phase::Deliberating;
                self.started_at_ms = Some(at);
                for room in &plan.rooms {
                    self.rooms.insert(*room, RoomState { members: plan.members(*room), ..Default::default() });
                }
                self.plan = Some(plan.clone());
                self.topology = Some(topology.clone());
                if self.agents_enabled() {
                    let range = self.config.observer_interval_ms();
                    for room in &plan.rooms {
                        let first = at + observer_interval_ms(self.config.rng_seed, *room, 0, range);
                        self.schedule.rooms.insert(*room, RoomTimers { next_observer_at_ms: Some(first), ..Default::default() });
                    }
                }
            }
            EventPayload::Message { message } => {
                self.check(event, &[Phase::Deliberating])?;
                self.push_message(message);
            }
            EventPayload::ObserverReport { report, fired_at_ms, through } => {
                self.check(event, &[Phase::Deliberating])?;
                update_catalog(report, &mut self.catalog, &mut self.ledger);
                let room = self.rooms.entry(report.room).or_default();
                room.observer_cycles = report.cycle_index + 1;
                if through.is_some() {
                    room.observed_through = *through;
                }
                room.reports.push(PublishedReport { report: report.clone(), published_at_ms: at });

                let range = self.config.observer_interval_ms();
                let next = fired_at_ms + observer_interval_ms(self.config.rng_seed, report.room, report.cycle_index + 1, range);
                self.schedule.rooms.entry(report.room).or_default().next_observer_at_ms = Some(next.max(at + 1));

                if !report.entries.is_empty() {
                    let delay = self.config.surrogate_delay_ms();
                    let listeners: Vec<RoomId> =
                        self.topology.as_ref().map(|t| t.listeners_of(report.room).collect()).unwrap_or_default();
                    for listener in listeners {
                        let timers = self.schedule.rooms.entry(listener).or_default();
                        timers.next_surrogate_at_ms.get_or_insert(at + delay);
                    }
                }
            }
            EventPayload::LabelsApplied { room, pass, through, labels, .. } => {
                self.check(event, &[Phase::Deliberating])?;
                let state = self.rooms.entry(*room).or_default();
                state.label_passes = state.label_passes.max(pass + 1);
                if *through > state.labeled_through {
                    state.labeled_through = *through;
                }
                let members = state.members.clone();
                let mut resolved = Vec::new();
                for label in labels.iter().filter(|l| members.contains(&l.participant)) {
                    let earliest = label.evidence.iter().map(|e| e.at_ms).min().unwrap_or(label.at_ms);
                    let item = self.catalog.observe(&label.item, earliest, *room, &mut Vec::new());
                    resolved.push(ItemLabel { participant: label.participant.clone(), item, strength: label.strength, at_ms: label.at_ms });
                }
                self.preferences.apply_labels(&resolved, &members);
            }
            EventPayload::SurrogatePosted { message, source_room, source_cycle } => {
                self.check(event, &[Phase::Deliberating])?;
                self.push_message(message);
                let delay = self.config.surrogate_delay_ms();
                let next = self
                    .rooms
                    .get(source_room)
                    .and_then(|src| src.oldest_unconsumed(Some(*source_cycle)))
                    .map(|r| r.published_at_ms + delay);
                let timers = self.schedule.rooms.entry(message.room).or_default();
                timers.last_consumed_cycle = Some(timers.last_consumed_cycle.map_or(*source_cycle, |c| c.max(*source_cycle)));
                timers.next_surrogate_at_ms = next;
            }
            EventPayload::Finalized { result } => {
                self.check(event, &[Phase::Deliberating])?;
                self.phase = Phase::Finalized;
                self.result = Some(result.clone());
            }
        }
        self.last_at_ms = at;
        self.next_seq = event.seq + 1;
        Ok(())
    }

    fn push_message(&mut self, message: &Message) {
        self.rooms.entry(message.room).or_default().messages.push(message.clone());
        self.next_message_id = self.next_message_id.max(message.message_id.0 + 1);
    }
}
