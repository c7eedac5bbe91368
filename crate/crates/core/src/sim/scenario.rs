//! Declarative scripted sessions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SessionConfig;
use crate::ids::{ParticipantId, RoomId};
use crate::partition::partition_population;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Overrides applied on top of the default session config.
    #[serde(default)]
    pub config: SessionConfig,
    pub roster: Vec<ParticipantId>,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
    #[serde(default)]
    pub expectations: Expectations,
}

/// One scripted message. Exactly one of `participant` and `agent_room` is set;
/// `agent_room` posts as that room's surrogate agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub at_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant: Option<ParticipantId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_room: Option<RoomId>,
    pub body: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winner: Option<String>,
    /// The session must end without a winner.
    #[serde(default)]
    pub no_winner: bool,
    /// Every net preference must be zero.
    #[serde(default)]
    pub all_nets_zero: bool,
    /// Minimum number of rooms each item must reach.
    #[serde(default)]
    pub min_rooms_reached: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ScenarioError {
    pub scenario: String,
    pub issues: Vec<String>,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scenario {:?} is invalid: {}", self.scenario, self.issues.join("; "))
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Scenario, LoadError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: p.clone(), source })?;
        Scenario::from_json(&text).map_err(|source| LoadError::Json { path: p, source })
    }

    /// Check every rule and report all violations at once.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut issues = Vec::new();
        if let Err(e) = self.config.validate() {
            issues.extend(e.issues.iter().map(|i| format!("config.{}: {}", i.field, i.reason)));
        }
        if self.roster.is_empty() {
            issues.push("roster is empty".to_string());
        }
        let mut seen = BTreeSet::new();
        for p in &self.roster {
            if p.as_str().is_empty() {
                issues.push("roster contains an empty id".to_string());
            } else if !seen.insert(p) {
                issues.push(format!("roster lists {p} twice"));
            }
        }
        let rooms = partition_population(&self.roster, &self.config).map(|plan| plan.rooms.len()).unwrap_or(0);
        let duration = self.config.duration_ms();
        for (i, e) in self.script.iter().enumerate() {
            let at = format!("script[{i}]");
            if e.at_ms > duration {
                issues.push(format!("{at}: at_ms {} is past the session end {duration}", e.at_ms));
            }
            if e.body.trim().is_empty() {
                issues.push(format!("{at}: body is empty"));
            }
            match (&e.participant, e.agent_room) {
                (Some(_), Some(_)) => issues.push(format!("{at}: sets both participant and agent_room")),
                (None, None) => issues.push(format!("{at}: sets neither participant nor agent_room")),
                (Some(p), None) if !seen.contains(p) => issues.push(format!("{at}: participant {p} is not in the roster")),
                (None, Some(r)) if r.0 as usize >= rooms => issues.push(format!("{at}: agent_room {r} does not exist ({rooms} rooms)")),
                _ => {}
            }
        }
        if self.expectations.no_winner && self.expectations.winner.is_some() {
            issues.push("expectations set both winner and no_winner".to_string());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError { scenario: self.name.clone(), issues })
        }
    }
}
