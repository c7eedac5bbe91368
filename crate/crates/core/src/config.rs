//! Session configuration and its validation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::SessionId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateMode {
    /// Surrogate attributes the relayed content to its source room.
    #[default]
    Overt,
    /// Surrogate speaks as if the content were its own first-person view.
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    #[default]
    DirectedRing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    #[default]
    Wall,
    Virtual,
}

/// How the population is arranged for a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// Small parallel rooms linked by observer/surrogate agents.
    #[default]
    ConversationalSwarm,
    /// Everyone in one room, no agents (the control condition).
    SingleRoom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub session_id: SessionId,
    pub question: String,
    pub duration_s: u32,
    /// Closed range `[min, max]` the observer interval is drawn from.
    pub observer_interval_s: (u32, u32),
    pub preference_msg_trigger: u32,
    pub preference_time_trigger_s: u32,
    /// Delay between a relay source publishing a report and the surrogate speaking.
    pub surrogate_delay_s: u32,
    pub surrogate_mode: SurrogateMode,
    pub topology_kind: TopologyKind,
    pub structure: Structure,
    pub target_room_size: u32,
    pub rng_seed: u64,
    pub clock_mode: ClockMode,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            session_id: SessionId("session".to_string()),
            question: String::new(),
            duration_s: 360,
            observer_interval_s: (45, 65),
            preference_msg_trigger: 5,
            preference_time_trigger_s: 15,
            surrogate_delay_s: 5,
            surrogate_mode: SurrogateMode::Overt,
            topology_kind: TopologyKind::DirectedRing,
            structure: Structure::ConversationalSwarm,
            target_room_size: 5,
            rng_seed: 0,
            clock_mode: ClockMode::Wall,
        }
    }
}

/// One rejected field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldIssue {
    pub field: &'static str,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigError {
    pub issues: Vec<FieldIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid session config:")?;
        for issue in &self.issues {
            write!(f, " {}: {};", issue.field, issue.reason)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut bad = |field: &'static str, reason: String| issues.push(FieldIssue { field, reason });

        if self.session_id.0.is_empty() {
            bad("session_id", "must not be empty".into());
        }
        if self.duration_s == 0 {
            bad("duration_s", "must be > 0".into());
        }
        let (lo, hi) = self.observer_interval_s;
        if lo < 1 {
            bad("observer_interval_s", "lower bound must be >= 1".into());
        }
        if lo > hi {
            bad("observer_interval_s", format!("lower bound {lo} exceeds upper bound {hi}"));
        }
        if self.preference_msg_trigger < 1 {
            bad("preference_msg_trigger", "must be >= 1".into());
        }
        if self.preference_time_trigger_s < 1 {
            bad("preference_time_trigger_s", "must be >= 1".into());
        }
        if !(4..=7).contains(&self.target_room_size) {
            bad("target_room_size", format!("{} not in [4, 7]", self.target_room_size));
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues })
        }
    }

    pub fn duration_ms(&self) -> u64 {
        u64::from(self.duration_s) * 1000
    }

    pub fn observer_interval_ms(&self) -> (u64, u64) {
        let (lo, hi) = self.observer_interval_s;
        (u64::from(lo) * 1000, u64::from(hi) * 1000)
    }

    pub fn preference_time_trigger_ms(&self) -> u64 {
        u64::from(self.preference_time_trigger_s) * 1000
    }

    pub fn surrogate_delay_ms(&self) -> u64 {
        u64::from(self.surrogate_delay_s) * 1000
    }
}
