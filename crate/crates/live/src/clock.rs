use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use chrono::{DateTime, Utc};

/// Wall-clock source. Tests swap in [`MockClock`] so spacing can be
/// checked without waiting.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Time that only moves when slept on or advanced.
#[derive(Debug)]
pub struct MockClock(Mutex<DateTime<Utc>>);

impl MockClock {
    pub fn at(t: DateTime<Utc>) -> Self {
        Self(Mutex::new(t))
    }

    pub fn advance(&self, d: Duration) {
        let mut t = self.0.lock().unwrap();
        *t += chrono::Duration::from_std(d).expect("duration in range");
    }
}

impl Clock for MockClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

/// Last send time per target. Check and record happen under one lock, so
/// two callers racing for the same target cannot both get through.
#[derive(Debug, Default)]
pub struct RateLimiter {
    last: Mutex<HashMap<String, DateTime<Utc>>>,
}

impl RateLimiter {
    pub fn new() -> Self {
        Self::default()
    }

    /// The limiter every delivery in this process shares.
    pub fn global() -> &'static RateLimiter {
        static GLOBAL: OnceLock<RateLimiter> = OnceLock::new();
        GLOBAL.get_or_init(RateLimiter::new)
    }

    /// Time left before `key` may be used again; zero when it may be used
    /// now.
    pub fn remaining(&self, key: &str, now: DateTime<Utc>, interval: Duration) -> Duration {
        let last = self.last.lock().unwrap();
        wait_left(last.get(key).copied(), now, interval)
    }

    /// Claim a slot for `key` at `now`, or report how long to wait.
    pub fn acquire(&self, key: &str, now: DateTime<Utc>, interval: Duration) -> Result<(), Duration> {
        let mut last = self.last.lock().unwrap();
        let left = wait_left(last.get(key).copied(), now, interval);
        if left > Duration::ZERO {
            return Err(left);
        }
        last.insert(key.to_owned(), now);
        Ok(())
    }
}

fn wait_left(last: Option<DateTime<Utc>>, now: DateTime<Utc>, interval: Duration) -> Duration {
    let Some(last) = last else { return Duration::ZERO };
    let elapsed = (now - last).to_std().unwrap_or(Duration::ZERO);
    interval.saturating_sub(elapsed)
}
