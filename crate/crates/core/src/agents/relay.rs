use crate::agents::catalog::SuggestionCatalog;
use crate::lm::StanceEntry;

/// Items voiced per surrogate utterance.
pub const RELAY_TOP_K: usize = 3;

/// Strongest `k` entries by |conviction|; ties go to the earlier-proposed
/// item, then to the label.
pub fn select_relay_entries(entries: &[StanceEntry], catalog: &SuggestionCatalog, k: usize) -> Vec<StanceEntry> {
    let first_seen = |e: &StanceEntry| {
        catalog.resolve(&e.item).and_then(|id| catalog.get(id)).map_or(u64::MAX, |it| it.first_proposed_at_ms)
    };
    let mut ranked: Vec<&StanceEntry> = entries.iter().collect();
    ranked.sort_by(|a, b| {
        b.conviction
            .abs()
            .cmp(&a.conviction.abs())
            .then_with(|| first_seen(a).cmp(&first_seen(b)))
            .then_with(|| a.item.label().cmp(b.item.label()))
    });
    ranked.into_iter().take(k).cloned().collect()
}
