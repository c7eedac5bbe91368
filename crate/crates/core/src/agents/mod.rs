//! Observer/surrogate agent machinery: the suggestion catalog, conviction
//! ledger, cycle scheduling and relay selection. The cycles themselves run
//! inside the session engine, which owns the clock and the event log.

pub mod catalog;
pub mod ledger;
pub mod relay;
pub mod schedule;

pub use catalog::{update_catalog, CatalogDelta, CatalogItem, SuggestionCatalog};
pub use ledger::{ConvictionLedger, RoomConviction};
pub use relay::{select_relay_entries, RELAY_TOP_K};
pub use schedule::{observer_interval_ms, AgentSchedule};
