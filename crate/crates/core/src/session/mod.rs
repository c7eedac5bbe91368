pub mod clock;
pub mod engine;
pub mod event;
pub mod log;
pub mod state;

pub use clock::{Clock, VirtualClock, WallClock};
pub use engine::{Job, JobKind, JobOutput, Session, SessionError};
pub use event::{Event, EventPayload};
pub use state::{Phase, ReplayError, RoomState, SessionState};
