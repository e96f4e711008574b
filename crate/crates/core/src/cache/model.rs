//! Stationary hit models for the two timer disciplines.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Timer discipline of a TTL cache.
///
/// * `NonReset`: the timer is armed on a miss only; hits leave it running.
///   With a common timer this cache reproduces FIFO hit statistics.
/// * `Reset`: the timer is re-armed on every request. With a common timer
///   this cache reproduces LRU hit statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CacheKind {
    NonReset,
    Reset,
}

impl CacheKind {
    /// Stationary hit probability of a file requested at `rate` and cached
    /// with timer `timer`:
    /// `1 - 1/(1 + rate*timer)` (non-reset) or `1 - exp(-rate*timer)` (reset).
    pub fn hit_prob<F: Real>(self, rate: F, timer: F) -> F {
        let x = rate * timer;
        match self {
            CacheKind::NonReset => F::one() - (F::one() + x).recip(),
            CacheKind::Reset => F::one() - (-x).exp(),
        }
    }

    /// Timer achieving hit probability `h` for a file requested at `rate`;
    /// inverts [`Self::hit_prob`]. `h = 1` maps to an infinite timer.
    pub fn timer_for<F: Real>(self, rate: F, h: F) -> Result<F> {
        if !(h >= F::zero() && h <= F::one()) {
            return Err(Error::domain("timer_for", format!("hit probability {h} outside [0,1]")));
        }
        let one = F::one();
        Ok(match self {
            CacheKind::NonReset => ((one - h).recip() - one) / rate,
            CacheKind::Reset => -(one - h).ln() / rate,
        })
    }

    /// Sensitivity of the hit probability to the timer, expressed as a
    /// function of the hit probability itself: `g(h) = f'(f^-1(h))`, i.e.
    /// `rate*(1-h)^2` (non-reset) or `rate*(1-h)` (reset).
    pub fn sensitivity<F: Real>(self, rate: F, h: F) -> F {
        let one = F::one();
        match self {
            CacheKind::NonReset => rate * (one - h) * (one - h),
            CacheKind::Reset => rate * (one - h),
        }
    }
}

impl std::fmt::Display for CacheKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CacheKind::NonReset => write!(f, "non_reset"),
            CacheKind::Reset => write!(f, "reset"),
        }
    }
}
