//! WebSocket frames. Text frames carrying one JSON object each, tagged by `type`.

use serde::{Deserialize, Serialize};

use hyperchat_core::ids::{MessageId, ParticipantId, RoomId};
use hyperchat_core::message::{Author, Message};
use hyperchat_core::preference::SessionResult;
use hyperchat_core::session::Phase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientFrame {
    Join {
        session: String,
        participant: ParticipantId,
        token: String,
        /// Resume after this message id instead of replaying the whole room.
        #[serde(default)]
        last_seen: Option<MessageId>,
    },
    Message {
        body: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    /// Sent on join, and again when deliberation starts and rooms are known.
    Joined {
        session: String,
        room: Option<RoomId>,
        room_name: Option<String>,
        roster: Vec<ParticipantId>,
        phase: Phase,
    },
    Message {
        message_id: MessageId,
        room: RoomId,
        author: Author,
        body: String,
        at_ms: u64,
    },
    SessionEnd {
        result: SessionResult,
    },
    Error {
        code: String,
        message: String,
    },
}

impl ServerFrame {
    pub fn message(m: &Message) -> ServerFrame {
        ServerFrame::Message { message_id: m.message_id, room: m.room, author: m.author.clone(), body: m.body.clone(), at_ms: m.timestamp_ms }
    }

    pub fn error(code: &str, message: impl Into<String>) -> ServerFrame {
        ServerFrame::Error { code: code.to_string(), message: message.into() }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("frames serialize")
    }
}
