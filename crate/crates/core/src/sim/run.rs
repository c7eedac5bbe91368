//! Drive a scenario through the session engine on virtual time with the mock backend.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::config::ClockMode;
use crate::ids::RoomId;
use crate::lm::markers::parse_markers;
use crate::lm::{LanguageModel, MockBackend};
use crate::message::Author;
use crate::preference::SessionResult;
use crate::session::event::Event;
use crate::session::{Phase, Session, SessionError, SessionState};
use crate::sim::scenario::{Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Invalid(#[from] ScenarioError),
    #[error("script entry {index}: {source}")]
    Script { index: usize, source: SessionError },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("virtual time stalled at {0} ms")]
    Stalled(u64),
}

/// First time each item was mentioned in each room, by anyone.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PropagationTrace {
    pub first_seen: BTreeMap<String, BTreeMap<RoomId, u64>>,
}

impl PropagationTrace {
    pub fn from_events(events: &[Event]) -> PropagationTrace {
        let mut first_seen: BTreeMap<String, BTreeMap<RoomId, u64>> = BTreeMap::new();
        for m in events.iter().filter_map(|e| e.payload.chat_message()) {
            for marker in parse_markers(&m.body) {
                first_seen.entry(marker.item).or_default().entry(m.room).or_insert(m.timestamp_ms);
            }
        }
        PropagationTrace { first_seen }
    }

    pub fn rooms_reached(&self, item: &str) -> usize {
        self.first_seen.get(item).map_or(0, BTreeMap::len)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("item,room,first_seen_ms\n");
        for (item, rooms) in &self.first_seen {
            for (room, t) in rooms {
                out.push_str(&format!("{item},{},{t}\n", room.0));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub event_log: Vec<Event>,
    pub result: SessionResult,
    pub trace: PropagationTrace,
    pub final_state: SessionState,
}

impl SimOutput {
    pub fn event_log_jsonl(&self) -> String {
        crate::session::log::events_to_string(&self.event_log)
    }

    pub fn result_json(&self) -> String {
        serde_json::to_string_pretty(&self.result).expect("results serialize")
    }
}

/// Run `scenario` with `seed` replacing the configured RNG seed.
pub fn run_scenario(scenario: &Scenario, seed: u64) -> Result<SimOutput, SimError> {
    run_scenario_with(scenario, seed, &MockBackend)
}

pub fn run_scenario_with(scenario: &Scenario, seed: u64, model: &dyn LanguageModel) -> Result<SimOutput, SimError> {
    scenario.validate()?;
    let mut config = scenario.config.clone();
    config.rng_seed = seed;
    config.clock_mode = ClockMode::Virtual;
    if config.session_id.as_str().is_empty() || config.session_id.as_str() == "session" {
        config.session_id = crate::ids::SessionId::new(scenario.name.clone());
    }

    let mut session = Session::create(config, 0)?;
    for p in &scenario.roster {
        session.join(p.clone(), 0)?;
    }
    session.start(0)?;

    let mut script: Vec<(usize, &crate::sim::scenario::ScriptEntry)> = scenario.script.iter().enumerate().collect();
    script.sort_by_key(|(_, e)| e.at_ms);
    let mut next = 0;
    let mut last_t = None;
    let mut last_len = 0;

    while session.phase() != Phase::Finalized {
        let script_t = script.get(next).map(|(_, e)| e.at_ms);
        let Some(t) = [script_t, session.next_deadline()].into_iter().flatten().min() else {
            break;
        };
        if last_t == Some(t) && session.events().len() == last_len {
            return Err(SimError::Stalled(t));
        }
        last_t = Some(t);
        while let Some((index, entry)) = script.get(next).filter(|(_, e)| e.at_ms == t) {
            let index = *index;
            match (&entry.participant, entry.agent_room) {
                (Some(p), _) => {
                    let (_, jobs) = session.post_message(p, &entry.body, t).map_err(|source| SimError::Script { index, source })?;
                    session.run_inline(jobs, model, t);
                }
                (None, Some(room)) => {
                    session
                        .inject_agent_message(Author::SurrogateAgent(room), &entry.body, t)
                        .map_err(|source| SimError::Script { index, source })?;
                }
                (None, None) => unreachable!("validated"),
            }
            next += 1;
        }
        let jobs = session.advance(t);
        session.run_inline(jobs, model, t);
        last_len = session.events().len();
    }
    if session.phase() != Phase::Finalized {
        let end = session.state().end_at_ms().unwrap_or(0);
        session.finalize_with(model, end)?;
    }
    let result = session.result().cloned().expect("finalized");
    let event_log = session.events().to_vec();
    Ok(SimOutput { trace: PropagationTrace::from_events(&event_log), final_state: session.state().clone(), event_log, result })
}

/// Expectation failures for a finished run; empty when all hold.
pub fn check_expectations(scenario: &Scenario, out: &SimOutput) -> Vec<String> {
    let exp = &scenario.expectations;
    let mut failures = Vec::new();
    if let Some(w) = &exp.winner {
        if out.result.winner_label() != Some(w.as_str()) {
            failures.push(format!("expected winner {w:?}, got {:?}", out.result.winner_label()));
        }
    }
    if exp.no_winner && out.result.winner.is_some() {
        failures.push(format!("expected no winner, got {:?}", out.result.winner_label()));
    }
    if exp.all_nets_zero {
        for row in out.result.table.iter().filter(|r| r.net.get() != 0.0) {
            failures.push(format!("expected zero net for {}, got {}", row.label, row.net.get()));
        }
    }
    for (item, min) in &exp.min_rooms_reached {
        let got = out.trace.rooms_reached(item);
        if got < *min {
            failures.push(format!("{item} reached {got} rooms, expected at least {min}"));
        }
    }
    failures
}
