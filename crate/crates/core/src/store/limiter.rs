//! Per-actor write quotas over fixed time windows.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;

/// Identity of a writer, e.g. a node or a user session.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActorId(pub String);

impl ActorId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WritePolicy {
    pub max_writes_per_actor_per_window: u32,
    pub window: Duration,
}

pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary fixed origin.
    fn now(&self) -> Duration;
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Clock advanced explicitly; used by simulations and tests.
#[derive(Debug, Default)]
pub struct ManualClock {
    nanos: AtomicU64,
}

impl ManualClock {
    pub fn advance(&self, by: Duration) {
        self.nanos.fetch_add(by.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }
}

/// Fixed-window counter: the first `max_writes_per_actor_per_window` attempts
/// of an actor inside a window succeed, every later one in that window is
/// rejected.
pub struct RateLimiter {
    policy: WritePolicy,
    clock: Arc<dyn Clock>,
    windows: Mutex<HashMap<ActorId, (u64, u32)>>,
}

impl RateLimiter {
    pub fn new(policy: WritePolicy, clock: Arc<dyn Clock>) -> Self {
        assert!(!policy.window.is_zero(), "rate limit window must be non-zero");
        Self { policy, clock, windows: Mutex::new(HashMap::new()) }
    }

    pub fn policy(&self) -> WritePolicy {
        self.policy
    }

    pub fn try_acquire(&self, actor: &ActorId) -> bool {
        let window = (self.clock.now().as_nanos() / self.policy.window.as_nanos()) as u64;
        let mut windows = self.windows.lock();
        let slot = windows.entry(actor.clone()).or_insert((window, 0));
        if slot.0 != window {
            *slot = (window, 0);
        }
        if slot.1 < self.policy.max_writes_per_actor_per_window {
            slot.1 += 1;
            true
        } else {
            false
        }
    }
}

impl fmt::Debug for RateLimiter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RateLimiter").field("policy", &self.policy).finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limiter(q: u32) -> (RateLimiter, Arc<ManualClock>) {
        let clock = Arc::new(ManualClock::default());
        let policy = WritePolicy { max_writes_per_actor_per_window: q, window: Duration::from_secs(1) };
        (RateLimiter::new(policy, clock.clone()), clock)
    }

    #[test]
    fn quota_boundary_and_rollover() {
        let (l, clock) = limiter(3);
        let a = ActorId::new("a");
        assert!((0..3).all(|_| l.try_acquire(&a)));
        assert!(!l.try_acquire(&a));
        assert!(l.try_acquire(&ActorId::new("b")));
        clock.advance(Duration::from_millis(1000));
        assert!(l.try_acquire(&a));
    }

    #[test]
    fn exactly_quota_succeed_under_contention() {
        let (l, _clock) = limiter(50);
        let l = Arc::new(l);
        let a = ActorId::new("shared");
        let ok: usize = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| {
                    let l = l.clone();
                    let a = a.clone();
                    s.spawn(move || (0..40).filter(|_| l.try_acquire(&a)).count())
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).sum()
        });
        assert_eq!(ok, 50);
    }
}
