//! Offline reference: recompute a scenario's outcome straight from its script,
//! bypassing rooms, agents, timers and the event log.
//!
//! Each human marker sets that participant's strength for the item; the last
//! one in time order wins. Nets divide by the whole roster. Seniority for
//! tie-breaks is the earliest marker mention of the item in any script entry.

use std::collections::{BTreeMap, BTreeSet};

use crate::ids::ParticipantId;
use crate::lm::markers::parse_markers;
use crate::sim::scenario::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub totals: BTreeMap<String, i64>,
    pub nets: BTreeMap<String, f64>,
    pub first_mention: BTreeMap<String, u64>,
    pub roster_size: usize,
}

impl OracleOutcome {
    /// Winner among `universe` (item labels); every item with a nonzero total
    /// must be in it for the answer to be meaningful.
    pub fn winner_among(&self, universe: &BTreeSet<String>) -> Option<String> {
        universe
            .iter()
            .map(|item| (self.totals.get(item).copied().unwrap_or(0), self.first_mention.get(item).copied().unwrap_or(u64::MAX), item))
            .min_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(b.2)))
            .map(|(_, _, item)| item.clone())
    }

    pub fn net(&self, item: &str) -> f64 {
        self.nets.get(item).copied().unwrap_or(0.0)
    }
}

pub fn oracle_outcome(scenario: &Scenario) -> OracleOutcome {
    let mut entries: Vec<_> = scenario.script.iter().collect();
    entries.sort_by_key(|e| e.at_ms);
    let mut latest: BTreeMap<(ParticipantId, String), i64> = BTreeMap::new();
    let mut first_mention: BTreeMap<String, u64> = BTreeMap::new();
    for e in entries {
        for m in parse_markers(&e.body) {
            first_mention.entry(m.item.clone()).or_insert(e.at_ms);
            if let (Some(p), Some(s)) = (&e.participant, m.signed_strength()) {
                latest.insert((p.clone(), m.item.clone()), i64::from(s));
            }
        }
    }
    let mut totals: BTreeMap<String, i64> = BTreeMap::new();
    for ((_, item), s) in latest {
        *totals.entry(item).or_default() += s;
    }
    let roster_size = scenario.roster.len();
    let nets = totals.iter().map(|(k, v)| (k.clone(), *v as f64 / roster_size as f64)).collect();
    OracleOutcome { totals, nets, first_mention, roster_size }
}
