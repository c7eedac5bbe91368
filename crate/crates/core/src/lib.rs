//! Conversational swarm deliberation: room partitioning, observer and
//! surrogate agents, preference labeling, session replay, simulation and
//! post-hoc analytics.

pub mod agents;
pub mod analytics;
pub mod config;
pub mod ids;
pub mod lm;
pub mod message;
pub mod partition;
pub mod preference;
mod rng;
pub mod session;
pub mod sim;
pub mod topology;
