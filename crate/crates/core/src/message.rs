use serde::{Deserialize, Serialize};

use crate::ids::{MessageId, ParticipantId, RoomId};

/// Who wrote a message. Serialized as `{"kind": ..., "id": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Author {
    Participant(ParticipantId),
    ObserverAgent(RoomId),
    SurrogateAgent(RoomId),
}

impl Author {
    pub fn is_human(&self) -> bool {
        matches!(self, Author::Participant(_))
    }

    pub fn participant(&self) -> Option<&ParticipantId> {
        match self {
            Author::Participant(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub message_id: MessageId,
    pub room: RoomId,
    pub author: Author,
    pub body: String,
    /// Milliseconds since the session clock's origin.
    pub timestamp_ms: u64,
}
