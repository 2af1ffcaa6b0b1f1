use std::sync::Mutex;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Exponential backoff with full jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub base_delay_ms: u64,
    pub factor: f64,
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base_delay_ms: 1000,
            factor: 2.0,
            max_attempts: 5,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    pub fn no_retry() -> Self {
        Self {
            max_attempts: 1,
            ..Self::default()
        }
    }

    /// Upper bound on the wait before retry number `retry` (0-based).
    pub fn scheduled_delay(&self, retry: u32) -> Duration {
        let ms = self.base_delay_ms as f64 * self.factor.powi(retry as i32);
        Duration::from_secs_f64((ms / 1000.0).min(3600.0))
    }

    /// Waits between consecutive attempts; length `max_attempts - 1`.
    ///
    /// Each wait is drawn uniformly from `[previous wait, scheduled delay]`, so
    /// waits never exceed the schedule and never decrease within one call.
    pub fn delays(&self, rng: &mut impl Rng) -> Vec<Duration> {
        let mut prev = Duration::ZERO;
        (0..self.max_attempts.saturating_sub(1))
            .map(|k| {
                let cap = self.scheduled_delay(k);
                let d = if self.jitter && cap > prev {
                    let lo = prev.as_secs_f64();
                    Duration::from_secs_f64(rng.random_range(lo..=cap.as_secs_f64()))
                } else if self.jitter {
                    prev
                } else {
                    cap
                };
                prev = d.max(prev);
                prev
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_attempts == 0 {
            return Err("retry.max_attempts must be >= 1".into());
        }
        if self.factor.is_nan() || self.factor < 1.0 {
            return Err("retry.factor must be >= 1".into());
        }
        Ok(())
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Records requested waits without sleeping.
#[derive(Debug, Default)]
pub struct RecordingSleeper {
    waits: Mutex<Vec<Duration>>,
}

impl RecordingSleeper {
    pub fn waits(&self) -> Vec<Duration> {
        self.waits.lock().unwrap().clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.waits.lock().unwrap().push(d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_doubles_from_one_second() {
        let p = RetryPolicy::default();
        let caps: Vec<_> = (0..4).map(|k| p.scheduled_delay(k).as_millis()).collect();
        assert_eq!(caps, vec![1000, 2000, 4000, 8000]);
        let no_jitter = RetryPolicy { jitter: false, ..p };
        let d = no_jitter.delays(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(d.len(), 4);
        assert_eq!(d[3], Duration::from_secs(8));
    }

    proptest! {
        #[test]
        fn jittered_delays_bounded_and_nondecreasing(seed in any::<u64>(), attempts in 1u32..10) {
            let p = RetryPolicy { max_attempts: attempts, ..RetryPolicy::default() };
            let d = p.delays(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(d.len() as u32, attempts - 1);
            for (k, w) in d.iter().enumerate() {
                prop_assert!(*w <= p.scheduled_delay(k as u32));
                if k > 0 {
                    prop_assert!(d[k - 1] <= *w);
                }
            }
        }
    }
}
