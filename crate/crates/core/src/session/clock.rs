use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

/// Milliseconds since some fixed origin.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

/// Monotonic wall clock anchored at construction to the Unix epoch.
#[derive(Debug, Clone)]
pub struct WallClock {
    origin: Instant,
    epoch_ms: u64,
}

impl WallClock {
    pub fn new() -> Self {
        let epoch_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
        WallClock { origin: Instant::now(), epoch_ms }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now_ms(&self) -> u64 {
        self.epoch_ms + self.origin.elapsed().as_millis() as u64
    }
}

/// Manually advanced clock shared between a driver and the engine's caller.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock(Arc<AtomicU64>);

impl VirtualClock {
    pub fn new(start_ms: u64) -> Self {
        VirtualClock(Arc::new(AtomicU64::new(start_ms)))
    }

    /// Move forward to `t`. Never moves backwards.
    pub fn advance_to(&self, t: u64) {
        self.0.fetch_max(t, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_is_monotone() {
        let c = VirtualClock::new(10);
        let shared = c.clone();
        c.advance_to(50);
        c.advance_to(20);
        assert_eq!(shared.now_ms(), 50);
    }

    #[test]
    fn wall_clock_does_not_go_back() {
        let c = WallClock::new();
        let a = c.now_ms();
        assert!(c.now_ms() >= a);
    }
}
