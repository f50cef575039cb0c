//! Per-node local clocks with constant drift.
//!
//! A clock reads `C(t) = theta + (1 + rho) * t`, rounded to the nearest
//! nanosecond with ties to even. Offsets between nodes are always expressed as
//! "A minus B": the reading of A minus the reading of B at the same true instant.

use std::fmt;
use std::ops::Sub;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::kernel::TrueTime;

/// Largest accepted |rho|. Crystal oscillators are in the ppm range.
pub const MAX_DRIFT: f64 = 1e-3;

/// A reading of one node's clock, in nanoseconds.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocalTime(pub i64);

impl Sub for LocalTime {
    type Output = i64;

    fn sub(self, rhs: LocalTime) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for LocalTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ClockError {
    #[error("drift rate {0} outside [-1e-3, 1e-3]")]
    DriftOutOfRange(f64),
    #[error("local time overflows i64 nanoseconds at true time {0}")]
    Overflow(TrueTime),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockState {
    /// Offset in nanoseconds.
    pub theta: i64,
    /// Fractional frequency error, e.g. `1.5e-6`.
    pub rho: f64,
    pub last_correction_at: TrueTime,
}

impl ClockState {
    pub fn new(theta: i64, rho: f64) -> Result<Self, ClockError> {
        if !rho.is_finite() || rho.abs() > MAX_DRIFT {
            return Err(ClockError::DriftOutOfRange(rho));
        }
        Ok(ClockState {
            theta,
            rho,
            last_correction_at: TrueTime::ZERO,
        })
    }

    pub fn ideal() -> Self {
        ClockState {
            theta: 0,
            rho: 0.0,
            last_correction_at: TrueTime::ZERO,
        }
    }

    pub fn try_local_time(&self, t: TrueTime) -> Result<LocalTime, ClockError> {
        // (1 + rho) * t == t + rho * t, and t is an integer, so only the drift
        // term needs rounding.
        let drift = drift_term(self.rho, t.0);
        let t_i = i64::try_from(t.0).map_err(|_| ClockError::Overflow(t))?;
        t_i.checked_add(drift)
            .and_then(|v| v.checked_add(self.theta))
            .map(LocalTime)
            .ok_or(ClockError::Overflow(t))
    }

    /// Panics on i64 overflow, which only a misconfigured scenario can reach
    /// (about 292 years of simulated time).
    pub fn local_time(&self, t: TrueTime) -> LocalTime {
        self.try_local_time(t).expect("clock reading overflow")
    }
}

/// `rho * t` rounded half to even, computed exactly from the bits of `rho`
/// (a float product would round before the tie test).
fn drift_term(rho: f64, t: u64) -> i64 {
    let bits = rho.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if biased == 0 && frac == 0 {
        return 0;
    }
    let (mant, exp) = if biased == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), biased - 1075)
    };
    let product = mant as u128 * t as u128;
    // |rho| <= MAX_DRIFT keeps exp well below zero.
    debug_assert!(exp < 0);
    let shift = (-exp) as u32;
    let magnitude = if shift >= 128 {
        0
    } else {
        let q = product >> shift;
        let rem = product & ((1u128 << shift) - 1);
        let half = 1u128 << (shift - 1);
        if rem > half || (rem == half && q & 1 == 1) {
            q + 1
        } else {
            q
        }
    };
    let magnitude = magnitude as i64;
    if bits >> 63 == 1 {
        -magnitude
    } else {
        magnitude
    }
}

pub fn local_time(clock: &ClockState, t: TrueTime) -> LocalTime {
    clock.local_time(t)
}

/// Zero-mean Gaussian timestamping noise, clipped at `clip_sigmas`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimestampNoise {
    pub jitter_stddev_ns: f64,
    pub clip_sigmas: f64,
}

impl TimestampNoise {
    pub const NONE: TimestampNoise = TimestampNoise {
        jitter_stddev_ns: 0.0,
        clip_sigmas: 4.0,
    };

    pub fn gaussian(stddev_ns: f64) -> Self {
        TimestampNoise {
            jitter_stddev_ns: stddev_ns,
            clip_sigmas: 4.0,
        }
    }

    /// Always consumes exactly one normal draw, even when the stddev is zero,
    /// so the random stream stays aligned across noise settings.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let z: f64 = rng.sample(StandardNormal);
        let z = z.clamp(-self.clip_sigmas, self.clip_sigmas);
        (z * self.jitter_stddev_ns).round_ties_even() as i64
    }
}

impl Default for TimestampNoise {
    fn default() -> Self {
        TimestampNoise::gaussian(40.0)
    }
}

/// Physical-layer timestamp of an event at true time `t`.
pub fn timestamp_event<R: Rng + ?Sized>(
    clock: &ClockState,
    t: TrueTime,
    noise: &TimestampNoise,
    rng: &mut R,
) -> LocalTime {
    let reading = clock.local_time(t);
    LocalTime(reading.0 + noise.sample(rng))
}

/// Subtracts the estimated offset (follower minus master). Drift is untouched.
pub fn apply_offset_correction(clock: &ClockState, delta_hat: i64, at: TrueTime) -> ClockState {
    ClockState {
        theta: clock.theta - delta_hat,
        rho: clock.rho,
        last_correction_at: at,
    }
}
