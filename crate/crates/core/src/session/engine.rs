//! The live session: validates commands, fires agent and labeling timers,
//! hands model work out as [`Job`]s and folds results back in as events.
//!
//! The engine performs no I/O and never reads a clock. Callers pass `now`
//! and decide how jobs run: the simulator runs them inline, the server runs
//! them on worker threads and feeds completions back in any order.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::agents::catalog::SuggestionCatalog;
use crate::agents::relay::{select_relay_entries, RELAY_TOP_K};
use crate::config::{ConfigError, SessionConfig, SurrogateMode};
use crate::ids::{MessageId, ParticipantId, RoomId};
use crate::lm::{self, DialogBlock, LanguageModel, ObserverReport, PreferenceLabel};
use crate::message::{Author, Message};
use crate::partition::{partition_population, PartitionError, RoomPlan};
use crate::preference::{net_preferences, select_winner, should_trigger, SessionResult};
use crate::session::event::{Event, EventPayload};
use crate::session::state::{Phase, ReplayError, SessionState};
use crate::topology::{build_topology, TopologyError};

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error(transparent)]
    InvalidConfig(#[from] ConfigError),
    #[error("operation not allowed in phase {0:?}")]
    WrongPhase(Phase),
    #[error("session is closing")]
    Closing,
    #[error("unknown participant {0}")]
    UnknownParticipant(ParticipantId),
    #[error("late join rejected for {0}")]
    LateJoin(ParticipantId),
    #[error("message body is empty")]
    EmptyBody,
    #[error("roster is empty")]
    EmptyRoster,
    #[error("unknown room {0}")]
    UnknownRoom(RoomId),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

/// Model work requested by the engine. Correlated by room plus cycle/pass.
#[derive(Debug, Clone)]
pub struct Job {
    pub room: RoomId,
    pub kind: JobKind,
}

#[derive(Debug, Clone)]
pub enum JobKind {
    Distill { cycle: u32, block: DialogBlock, catalog: SuggestionCatalog, question: String },
    Label { pass: u32, block: DialogBlock, catalog: SuggestionCatalog, roster: BTreeSet<ParticipantId>, question: String },
    Phrase { source_room: RoomId, source_cycle: u32, report: ObserverReport, mode: SurrogateMode, source_name: String },
}

#[derive(Debug, Clone)]
pub enum JobOutput {
    Distill { room: RoomId, cycle: u32, report: ObserverReport },
    Label { room: RoomId, pass: u32, labels: Vec<PreferenceLabel> },
    Phrase { room: RoomId, source_room: RoomId, source_cycle: u32, text: Option<String> },
}

impl Job {
    /// Run against a backend. Never fails: backend errors degrade as the
    /// `lm` wrappers define.
    pub fn run(&self, model: &dyn LanguageModel) -> JobOutput {
        match &self.kind {
            JobKind::Distill { cycle, block, catalog, question } => JobOutput::Distill {
                room: self.room,
                cycle: *cycle,
                report: lm::distill_dialog(model, block, catalog, question),
            },
            JobKind::Label { pass, block, catalog, roster, question } => JobOutput::Label {
                room: self.room,
                pass: *pass,
                labels: lm::label_preferences(model, block, catalog, roster, question),
            },
            JobKind::Phrase { source_room, source_cycle, report, mode, source_name } => JobOutput::Phrase {
                room: self.room,
                source_room: *source_room,
                source_cycle: *source_cycle,
                text: lm::phrase_surrogate(model, report, *mode, source_name),
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct PendingCycle {
    cycle: u32,
    fired_at_ms: u64,
    through: Option<MessageId>,
}

#[derive(Debug, Clone, Default)]
struct InFlight {
    observers: BTreeMap<RoomId, PendingCycle>,
    labels: BTreeMap<(RoomId, u32), PendingCycle>,
    surrogates: BTreeMap<RoomId, (RoomId, u32)>,
    next_label_pass: BTreeMap<RoomId, u32>,
}

impl InFlight {
    fn label_boundary(&self, room: RoomId) -> Option<MessageId> {
        self.labels.iter().filter(|((r, _), _)| *r == room).filter_map(|(_, p)| p.through).max()
    }
}

pub struct Session {
    state: SessionState,
    events: Vec<Event>,
    inflight: InFlight,
    closing: bool,
    drained: usize,
}

impl Session {
    pub fn create(config: SessionConfig, now_ms: u64) -> Result<Session, SessionError> {
        config.validate()?;
        let event = Event { seq: 0, at_ms: now_ms, payload: EventPayload::SessionCreated { config: config.clone() } };
        let mut state = SessionState::new(config);
        state.last_at_ms = now_ms;
        state.next_seq = 1;
        Ok(Session { state, events: vec![event], inflight: InFlight::default(), closing: false, drained: 0 })
    }

    /// Resume from a persisted log. In-flight work from before the restart is lost.
    pub fn from_events(events: Vec<Event>) -> Result<Session, SessionError> {
        let state = SessionState::replay(&events)?;
        let drained = events.len();
        Ok(Session { state, events, inflight: InFlight::default(), closing: false, drained })
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn config(&self) -> &SessionConfig {
        &self.state.config
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn result(&self) -> Option<&SessionResult> {
        self.state.result.as_ref()
    }

    pub fn is_closing(&self) -> bool {
        self.closing
    }

    /// Events appended since the previous call.
    pub fn drain_new_events(&mut self) -> Vec<Event> {
        let out = self.events[self.drained..].to_vec();
        self.drained = self.events.len();
        out
    }

    fn now(&self, now_ms: u64) -> u64 {
        now_ms.max(self.state.last_at_ms)
    }

    fn emit(&mut self, at_ms: u64, payload: EventPayload) {
        let event = Event { seq: self.state.next_seq, at_ms, payload };
        self.state.apply(&event).expect("engine emits only valid events");
        self.events.push(event);
    }

    pub fn join(&mut self, participant: ParticipantId, now_ms: u64) -> Result<(), SessionError> {
        match self.state.phase {
            Phase::Lobby => {}
            _ if self.state.roster.contains(&participant) => return Ok(()),
            _ => return Err(SessionError::LateJoin(participant)),
        }
        if !self.state.roster.contains(&participant) {
            let now = self.now(now_ms);
            self.emit(now, EventPayload::ParticipantJoined { participant });
        }
        Ok(())
    }

    /// Partition the joined roster, build the ring and arm the agents.
    pub fn start(&mut self, now_ms: u64) -> Result<&RoomPlan, SessionError> {
        if self.state.phase != Phase::Lobby {
            return Err(SessionError::WrongPhase(self.state.phase));
        }
        if self.state.roster.is_empty() {
            return Err(SessionError::EmptyRoster);
        }
        let roster: Vec<ParticipantId> = self.state.roster.iter().cloned().collect();
        let plan = partition_population(&roster, &self.state.config)?;
        let topology = build_topology(&plan.rooms, self.state.config.topology_kind, self.state.config.rng_seed)?;
        let now = self.now(now_ms);
        self.emit(now, EventPayload::DeliberationStarted { plan, topology });
        Ok(self.state.plan.as_ref().expect("plan set on start"))
    }

    fn ensure_open(&self) -> Result<(), SessionError> {
        if self.state.phase != Phase::Deliberating {
            return Err(SessionError::WrongPhase(self.state.phase));
        }
        if self.closing {
            return Err(SessionError::Closing);
        }
        Ok(())
    }

    /// Post a human message into the author's room. May start a labeling pass.
    pub fn post_message(&mut self, participant: &ParticipantId, body: &str, now_ms: u64) -> Result<(Message, Vec<Job>), SessionError> {
        self.ensure_open()?;
        let room = self.state.room_of(participant).ok_or_else(|| SessionError::UnknownParticipant(participant.clone()))?;
        if body.trim().is_empty() {
            return Err(SessionError::EmptyBody);
        }
        let now = self.now(now_ms);
        let message = Message {
            message_id: MessageId(self.state.next_message_id),
            room,
            author: Author::Participant(participant.clone()),
            body: body.to_string(),
            timestamp_ms: now,
        };
        self.emit(now, EventPayload::Message { message: message.clone() });
        let jobs = self.maybe_label(room, now, false).into_iter().collect();
        Ok((message, jobs))
    }

    /// Inject an agent-authored message, as a scripted stand-in for agent traffic.
    pub fn inject_agent_message(&mut self, author: Author, body: &str, now_ms: u64) -> Result<Message, SessionError> {
        self.ensure_open()?;
        let room = match &author {
            Author::ObserverAgent(r) | Author::SurrogateAgent(r) => *r,
            Author::Participant(p) => return Err(SessionError::UnknownParticipant(p.clone())),
        };
        if !self.state.rooms.contains_key(&room) {
            return Err(SessionError::UnknownRoom(room));
        }
        if body.trim().is_empty() {
            return Err(SessionError::EmptyBody);
        }
        let now = self.now(now_ms);
        let message = Message { message_id: MessageId(self.state.next_message_id), room, author, body: body.to_string(), timestamp_ms: now };
        self.emit(now, EventPayload::Message { message: message.clone() });
        Ok(message)
    }

    fn maybe_label(&mut self, room: RoomId, now: u64, force: bool) -> Option<Job> {
        let rs = self.state.rooms.get(&room)?;
        let boundary = rs.labeled_through.max(self.inflight.label_boundary(room));
        let trigger = rs.trigger_state(boundary);
        let cfg = &self.state.config;
        let due = if force {
            trigger.messages_since_last_pass > 0
        } else {
            should_trigger(&trigger, now, cfg.preference_msg_trigger, cfg.preference_time_trigger_ms())
        };
        if !due {
            return None;
        }
        let messages = rs.messages_after(boundary).to_vec();
        let through = messages.last().map(|m| m.message_id);
        let pass = *self.inflight.next_label_pass.get(&room).unwrap_or(&0).max(&rs.label_passes);
        self.inflight.next_label_pass.insert(room, pass + 1);
        self.inflight.labels.insert((room, pass), PendingCycle { cycle: pass, fired_at_ms: now, through });
        Some(Job {
            room,
            kind: JobKind::Label {
                pass,
                block: DialogBlock { room, cycle_index: pass, messages },
                catalog: self.state.catalog.clone(),
                roster: rs.members.clone(),
                question: cfg.question.clone(),
            },
        })
    }

    fn maybe_observe(&mut self, room: RoomId, now: u64) -> Option<Job> {
        if self.inflight.observers.contains_key(&room) {
            return None;
        }
        let due = self.state.timers(room).next_observer_at_ms.is_some_and(|t| t <= now);
        if !due {
            return None;
        }
        let rs = self.state.rooms.get(&room)?;
        let cycle = rs.observer_cycles;
        let messages = rs.messages_after(rs.observed_through).to_vec();
        if messages.is_empty() {
            let report = ObserverReport::empty(room, cycle);
            self.emit(now, EventPayload::ObserverReport { report, fired_at_ms: now, through: None });
            return None;
        }
        let through = messages.last().map(|m| m.message_id);
        self.inflight.observers.insert(room, PendingCycle { cycle, fired_at_ms: now, through });
        Some(Job {
            room,
            kind: JobKind::Distill {
                cycle,
                block: DialogBlock { room, cycle_index: cycle, messages },
                catalog: self.state.catalog.clone(),
                question: self.state.config.question.clone(),
            },
        })
    }

    /// The report this room's surrogate would voice now, if its timer is due.
    fn surrogate_candidate(&self, room: RoomId) -> Option<(RoomId, &ObserverReport)> {
        let timers = self.state.timers(room);
        timers.next_surrogate_at_ms?;
        let source = self.state.topology.as_ref()?.source_of(room)?;
        let published = self.state.rooms.get(&source)?.newest_unconsumed(timers.last_consumed_cycle)?;
        Some((source, &published.report))
    }

    fn maybe_relay(&mut self, room: RoomId, now: u64) -> Option<Job> {
        if self.inflight.surrogates.contains_key(&room) {
            return None;
        }
        let due = self.state.timers(room).next_surrogate_at_ms.is_some_and(|t| t <= now);
        if !due {
            return None;
        }
        let (source, report) = self.surrogate_candidate(room)?;
        let entries = select_relay_entries(&report.entries, &self.state.catalog, RELAY_TOP_K);
        let relay = ObserverReport { entries, ..report.clone() };
        let cycle = report.cycle_index;
        self.inflight.surrogates.insert(room, (source, cycle));
        Some(Job {
            room,
            kind: JobKind::Phrase {
                source_room: source,
                source_cycle: cycle,
                report: relay,
                mode: self.state.config.surrogate_mode,
                source_name: source.display_name(),
            },
        })
    }

    /// Fire every timer due at `now`: time-rule labeling passes, observer
    /// cycles, surrogate relays, then the session deadline.
    pub fn advance(&mut self, now_ms: u64) -> Vec<Job> {
        if self.state.phase != Phase::Deliberating || self.closing {
            return Vec::new();
        }
        let now = self.now(now_ms);
        let rooms: Vec<RoomId> = self.state.rooms.keys().copied().collect();
        let agents = self.state.agents_enabled();
        let mut jobs = Vec::new();
        for room in rooms {
            jobs.extend(self.maybe_label(room, now, false));
            if agents {
                jobs.extend(self.maybe_observe(room, now));
                jobs.extend(self.maybe_relay(room, now));
            }
        }
        if self.state.end_at_ms().is_some_and(|end| now >= end) {
            jobs.extend(self.begin_finalize(now));
        }
        jobs
    }

    /// Earliest time at which [`Session::advance`] has work to do.
    pub fn next_deadline(&self) -> Option<u64> {
        if self.state.phase != Phase::Deliberating || self.closing {
            return None;
        }
        let cfg = &self.state.config;
        let agents = self.state.agents_enabled();
        let mut best = self.state.end_at_ms();
        let mut consider = |t: Option<u64>| {
            if let Some(t) = t {
                best = Some(best.map_or(t, |b| b.min(t)));
            }
        };
        for (room, rs) in &self.state.rooms {
            let boundary = rs.labeled_through.max(self.inflight.label_boundary(*room));
            consider(rs.trigger_state(boundary).deadline_ms(cfg.preference_time_trigger_ms()));
            if agents {
                if !self.inflight.observers.contains_key(room) {
                    consider(self.state.timers(*room).next_observer_at_ms);
                }
                if !self.inflight.surrogates.contains_key(room) && self.surrogate_candidate(*room).is_some() {
                    consider(self.state.timers(*room).next_surrogate_at_ms);
                }
            }
        }
        best.map(|t| t.max(self.state.last_at_ms))
    }

    /// Fold a finished job back in. Stale or out-of-phase results are dropped.
    pub fn complete(&mut self, output: JobOutput, now_ms: u64) -> Vec<Job> {
        let now = self.now(now_ms);
        match output {
            JobOutput::Distill { room, cycle, report } => {
                let Some(pending) = self.inflight.observers.get(&room).copied().filter(|p| p.cycle == cycle) else {
                    tracing::debug!(%room, cycle, "discarding stale observer result");
                    return Vec::new();
                };
                self.inflight.observers.remove(&room);
                if self.state.phase != Phase::Deliberating {
                    return Vec::new();
                }
                let report = ObserverReport { room, cycle_index: cycle, ..report };
                self.emit(now, EventPayload::ObserverReport { report, fired_at_ms: pending.fired_at_ms, through: pending.through });
                Vec::new()
            }
            JobOutput::Label { room, pass, labels } => {
                let Some(pending) = self.inflight.labels.remove(&(room, pass)) else {
                    tracing::debug!(%room, pass, "discarding unknown labeling result");
                    return Vec::new();
                };
                if self.state.phase != Phase::Deliberating {
                    return Vec::new();
                }
                self.emit(now, EventPayload::LabelsApplied { room, pass, fired_at_ms: pending.fired_at_ms, through: pending.through, labels });
                if self.closing && self.inflight.labels.is_empty() {
                    self.finalize_now(now);
                }
                Vec::new()
            }
            JobOutput::Phrase { room, source_room, source_cycle, text } => {
                if self.inflight.surrogates.get(&room) != Some(&(source_room, source_cycle)) {
                    return Vec::new();
                }
                self.inflight.surrogates.remove(&room);
                if self.state.phase != Phase::Deliberating {
                    return Vec::new();
                }
                let Some(text) = text else { return Vec::new() };
                let message = Message {
                    message_id: MessageId(self.state.next_message_id),
                    room,
                    author: Author::SurrogateAgent(room),
                    body: text,
                    timestamp_ms: now,
                };
                self.emit(now, EventPayload::SurrogatePosted { message, source_room, source_cycle });
                Vec::new()
            }
        }
    }

    /// Stop accepting messages, run a last labeling pass over anything
    /// unlabeled, and finalize once those passes land. Idempotent.
    pub fn begin_finalize(&mut self, now_ms: u64) -> Vec<Job> {
        if self.state.phase != Phase::Deliberating || self.closing {
            return Vec::new();
        }
        self.closing = true;
        let now = self.now(now_ms);
        let rooms: Vec<RoomId> = self.state.rooms.keys().copied().collect();
        let jobs: Vec<Job> = rooms.into_iter().filter_map(|r| self.maybe_label(r, now, true)).collect();
        if self.inflight.labels.is_empty() {
            self.finalize_now(now);
        }
        jobs
    }

    fn finalize_now(&mut self, now: u64) {
        let table = net_preferences(&self.state.preferences, self.state.roster.len(), &self.state.catalog)
            .expect("a started session has a roster");
        let result = select_winner(&table, &self.state.catalog, now);
        self.emit(now, EventPayload::Finalized { result });
    }

    /// Run `jobs` to completion against `model`, including any follow-ups.
    pub fn run_inline(&mut self, jobs: Vec<Job>, model: &dyn LanguageModel, now_ms: u64) {
        let mut queue: std::collections::VecDeque<Job> = jobs.into();
        while let Some(job) = queue.pop_front() {
            let out = job.run(model);
            queue.extend(self.complete(out, now_ms));
        }
    }

    /// Finalize synchronously against `model`. Returns the stored result on repeat calls.
    pub fn finalize_with(&mut self, model: &dyn LanguageModel, now_ms: u64) -> Result<SessionResult, SessionError> {
        if let Some(r) = &self.state.result {
            return Ok(r.clone());
        }
        if self.state.phase != Phase::Deliberating {
            return Err(SessionError::WrongPhase(self.state.phase));
        }
        let jobs = self.begin_finalize(now_ms);
        self.run_inline(jobs, model, now_ms);
        self.state.result.clone().ok_or(SessionError::WrongPhase(self.state.phase))
    }
}
