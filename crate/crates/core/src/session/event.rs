use serde::{Deserialize, Serialize};

use crate::config::SessionConfig;
use crate::ids::{MessageId, ParticipantId, RoomId};
use crate::lm::{ObserverReport, PreferenceLabel};
use crate::message::Message;
use crate::partition::RoomPlan;
use crate::preference::SessionResult;
use crate::topology::Topology;

/// One line of the session log:
/// `{"seq":N,"at_ms":T,"kind":"...","payload":{...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at_ms: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventPayload {
    SessionCreated {
        config: SessionConfig,
    },
    ParticipantJoined {
        participant: ParticipantId,
    },
    DeliberationStarted {
        plan: RoomPlan,
        topology: Topology,
    },
    Message {
        message: Message,
    },
    ObserverReport {
        report: ObserverReport,
        fired_at_ms: u64,
        /// Last room message the report's block covered.
        through: Option<MessageId>,
    },
    LabelsApplied {
        room: RoomId,
        pass: u32,
        fired_at_ms: u64,
        through: Option<MessageId>,
        labels: Vec<PreferenceLabel>,
    },
    SurrogatePosted {
        message: Message,
        source_room: RoomId,
        source_cycle: u32,
    },
    Finalized {
        result: SessionResult,
    },
}

impl EventPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EventPayload::SessionCreated { .. } => "session_created",
            EventPayload::ParticipantJoined { .. } => "participant_joined",
            EventPayload::DeliberationStarted { .. } => "deliberation_started",
            EventPayload::Message { .. } => "message",
            EventPayload::ObserverReport { .. } => "observer_report",
            EventPayload::LabelsApplied { .. } => "labels_applied",
            EventPayload::SurrogatePosted { .. } => "surrogate_posted",
            EventPayload::Finalized { .. } => "finalized",
        }
    }

    /// The chat message this event delivers to a room, if any.
    pub fn chat_message(&self) -> Option<&Message> {
        match self {
            EventPayload::Message { message } | EventPayload::SurrogatePosted { message, .. } => Some(message),
            _ => None,
        }
    }
}

impl Event {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }
}
