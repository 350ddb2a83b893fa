//! Crash injection for recovery tests.
//!
//! Every durability boundary in the volume calls [`FaultInjector::check`]. An
//! armed injector trips on the n-th boundary it sees; from then on every
//! check fails, which models a killed process: nothing after the crash point
//! reaches disk.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use parking_lot::Mutex;

#[derive(Debug, Default)]
pub struct FaultInjector {
    /// 1-based boundary index to crash at; 0 = disarmed.
    target: AtomicU64,
    hits: AtomicU64,
    crashed: AtomicBool,
    crash_point: Mutex<Option<&'static str>>,
}

impl FaultInjector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Crash on the `nth` boundary reached from now on (1-based).
    pub fn arm(&self, nth: u64) {
        self.hits.store(0, Ordering::SeqCst);
        self.target.store(nth, Ordering::SeqCst);
    }

    pub fn disarm(&self) {
        self.target.store(0, Ordering::SeqCst);
    }

    /// Boundaries passed since the last `arm` (or creation).
    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn crashed(&self) -> bool {
        self.crashed.load(Ordering::SeqCst)
    }

    pub fn crash_point(&self) -> Option<&'static str> {
        *self.crash_point.lock()
    }

    /// Returns `true` when the process should die at `point`.
    pub(crate) fn trip(&self, point: &'static str) -> bool {
        if self.crashed() {
            return true;
        }
        let n = self.hits.fetch_add(1, Ordering::SeqCst) + 1;
        let target = self.target.load(Ordering::SeqCst);
        if target != 0 && n == target {
            self.crashed.store(true, Ordering::SeqCst);
            *self.crash_point.lock() = Some(point);
            return true;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trips_once_then_stays_dead() {
        let f = FaultInjector::new();
        f.arm(2);
        assert!(!f.trip("a"));
        assert!(f.trip("b"));
        assert!(f.trip("c"));
        assert_eq!(f.crash_point(), Some("b"));
    }

    #[test]
    fn disarmed_counts_hits() {
        let f = FaultInjector::new();
        for _ in 0..5 {
            assert!(!f.trip("x"));
        }
        assert_eq!(f.hits(), 5);
    }
}
