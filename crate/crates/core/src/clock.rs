//! Free-running oscillators, wrapping hardware counters and modular tick
//! arithmetic.
//!
//! Time is carried as an integer count of attoseconds ([`SimTime`]) and
//! clock frequencies as an integer count of micro-hertz, so advancing a
//! counter is exact integer arithmetic: the sub-tick phase left over after
//! each advance is kept as a residue in units of 10⁻²⁴ tick and carried into
//! the next advance. Splitting an interval into pieces therefore never
//! changes the number of ticks counted over it.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use thiserror::Error;

pub const MIN_COUNTER_WIDTH: u32 = 8;
pub const MAX_COUNTER_WIDTH: u32 = 64;

/// Attoseconds per second.
pub const ATTOS_PER_SEC: i128 = 1_000_000_000_000_000_000;
/// Micro-hertz per hertz.
const MICRO_PER_UNIT: i128 = 1_000_000;
/// Residue units per tick (µHz × as = 10⁻²⁴ tick).
const RESIDUE_PER_TICK: u128 = 1_000_000_000_000_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClockError {
    #[error("counter width {0} bits is outside [8, 64]")]
    InvalidWidth(u32),
    #[error("counter value {value} does not fit in {width} bits")]
    ValueOutOfRange { value: u64, width: u32 },
    #[error("effective clock frequency must be positive (nominal {nominal_hz} Hz, offset {offset_ppm} ppm)")]
    NonPositiveFrequency { nominal_hz: f64, offset_ppm: f64 },
    #[error("cannot advance a counter by a negative interval ({0} s)")]
    NegativeInterval(f64),
    #[error("time value {0} is not finite")]
    NonFiniteTime(f64),
}

/// A point or span on the simulation's true time axis, in attoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(i128);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_attos(attos: i128) -> Self {
        SimTime(attos)
    }

    pub const fn attos(self) -> i128 {
        self.0
    }

    /// Converts seconds to the nearest attosecond.
    pub fn from_secs_f64(secs: f64) -> Result<Self, ClockError> {
        if !secs.is_finite() {
            return Err(ClockError::NonFiniteTime(secs));
        }
        // Split into whole and fractional seconds so large values keep
        // their sub-second precision.
        let whole = secs.trunc();
        let frac = secs - whole;
        let attos = (whole as i128) * ATTOS_PER_SEC + (frac * ATTOS_PER_SEC as f64).round() as i128;
        Ok(SimTime(attos))
    }

    /// Exact `num / den` seconds, rounded to the nearest attosecond.
    pub fn from_ratio(num: i128, den: i128) -> Self {
        assert!(den > 0, "denominator must be positive");
        let scaled = num * ATTOS_PER_SEC;
        SimTime(div_round(scaled, den))
    }

    pub fn as_secs_f64(self) -> f64 {
        let whole = self.0.div_euclid(ATTOS_PER_SEC);
        let frac = self.0.rem_euclid(ATTOS_PER_SEC);
        whole as f64 + frac as f64 / ATTOS_PER_SEC as f64
    }
}

fn div_round(num: i128, den: i128) -> i128 {
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    if 2 * r >= den {
        q + 1
    } else {
        q
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.as_secs_f64())
    }
}

/// A free-running oscillator driving a fixed-width counter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockModel {
    pub nominal_hz: f64,
    pub offset_ppm: f64,
    pub counter_width_bits: u32,
}

impl ClockModel {
    pub fn new(nominal_hz: f64, offset_ppm: f64, counter_width_bits: u32) -> Result<Self, ClockError> {
        check_width(counter_width_bits)?;
        let clock = ClockModel {
            nominal_hz,
            offset_ppm,
            counter_width_bits,
        };
        if !(nominal_hz.is_finite() && offset_ppm.is_finite()) || clock.effective_micro_hz() <= 0 {
            return Err(ClockError::NonPositiveFrequency { nominal_hz, offset_ppm });
        }
        Ok(clock)
    }

    /// Effective frequency in integer micro-hertz:
    /// `nominal × (1 + ppm·10⁻⁶)` rounded to 1 µHz.
    pub fn effective_micro_hz(&self) -> i128 {
        (self.nominal_hz * MICRO_PER_UNIT as f64 + self.nominal_hz * self.offset_ppm).round() as i128
    }

    pub fn effective_hz(&self) -> f64 {
        self.effective_micro_hz() as f64 / MICRO_PER_UNIT as f64
    }

    /// A zeroed counter of this clock's width.
    pub fn counter(&self) -> TickCounter {
        TickCounter::new(self.counter_width_bits)
    }

    /// A counter of this clock's width starting at `initial`.
    pub fn counter_at(&self, initial: u64) -> Result<TickCounter, ClockError> {
        TickCounter::with_value(initial, self.counter_width_bits)
    }

    /// Current counter value; a pure read.
    pub fn snapshot_timestamp(&self, counter: &TickCounter) -> u64 {
        counter.value()
    }

    /// Earliest instant at or after `t` at which this clock ticks, given
    /// that it ticked at time zero.
    pub fn next_tick_at_or_after(&self, t: SimTime) -> SimTime {
        // tick n happens at n / f; n = ceil(f·t)
        let f = self.effective_micro_hz();
        let scaled = t.attos() * f; // units of 10⁻²⁴ tick
        let per_tick = RESIDUE_PER_TICK as i128;
        let n = scaled.div_euclid(per_tick) + i128::from(scaled.rem_euclid(per_tick) != 0);
        // time of tick n = n·10²⁴ / f attoseconds, rounded up so the counter
        // reads n at that instant
        let num = n * per_tick;
        let q = num.div_euclid(f);
        let r = num.rem_euclid(f);
        SimTime::from_attos(q + i128::from(r != 0))
    }
}

fn check_width(width: u32) -> Result<(), ClockError> {
    if (MIN_COUNTER_WIDTH..=MAX_COUNTER_WIDTH).contains(&width) {
        Ok(())
    } else {
        Err(ClockError::InvalidWidth(width))
    }
}

fn width_mask(width: u32) -> u64 {
    if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// A wrapping hardware counter with exact sub-tick phase carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickCounter {
    value: u64,
    width_bits: u32,
    residue: u128,
    elapsed: u128,
}

impl TickCounter {
    /// # Panics
    /// If `width_bits` is outside [8, 64].
    pub fn new(width_bits: u32) -> Self {
        check_width(width_bits).expect("invalid counter width");
        TickCounter {
            value: 0,
            width_bits,
            residue: 0,
            elapsed: 0,
        }
    }

    pub fn with_value(value: u64, width_bits: u32) -> Result<Self, ClockError> {
        check_width(width_bits)?;
        if value & !width_mask(width_bits) != 0 {
            return Err(ClockError::ValueOutOfRange {
                value,
                width: width_bits,
            });
        }
        Ok(TickCounter {
            value,
            width_bits,
            residue: 0,
            elapsed: 0,
        })
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn width_bits(&self) -> u32 {
        self.width_bits
    }

    /// Sub-tick phase carried to the next advance, in [0, 1).
    pub fn fractional_residue(&self) -> f64 {
        self.residue as f64 / RESIDUE_PER_TICK as f64
    }

    /// Total ticks counted since construction, without wrapping.
    pub fn elapsed_ticks(&self) -> u128 {
        self.elapsed
    }

    /// Advances by `dt` seconds (rounded to the nearest attosecond).
    pub fn advance(&mut self, clock: &ClockModel, dt: f64) -> Result<(), ClockError> {
        if dt < 0.0 {
            return Err(ClockError::NegativeInterval(dt));
        }
        let span = SimTime::from_secs_f64(dt)?;
        self.advance_by(clock, span)
    }

    /// Advances by an exact span of true time.
    pub fn advance_by(&mut self, clock: &ClockModel, span: SimTime) -> Result<(), ClockError> {
        if span.attos() < 0 {
            return Err(ClockError::NegativeInterval(span.as_secs_f64()));
        }
        let f = clock.effective_micro_hz() as u128;
        let total = f * span.attos() as u128 + self.residue;
        let ticks = total / RESIDUE_PER_TICK;
        self.residue = total % RESIDUE_PER_TICK;
        self.elapsed += ticks;
        let mask = width_mask(self.width_bits);
        self.value = (self.value as u128).wrapping_add(ticks & mask as u128) as u64 & mask;
        Ok(())
    }
}

/// One received packet: its source timestamp and its receiver arrival
/// counter value, both as raw wrapping counter readings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PacketObservation {
    /// Departure index of the packet at the source.
    pub seq: u64,
    pub ts_ticks: u64,
    pub arrival_ticks: u64,
}

/// `(curr − prev) mod 2^width`.
pub fn tick_delta(prev: u64, curr: u64, width_bits: u32) -> Result<u64, ClockError> {
    check_width(width_bits)?;
    let mask = width_mask(width_bits);
    for v in [prev, curr] {
        if v & !mask != 0 {
            return Err(ClockError::ValueOutOfRange {
                value: v,
                width: width_bits,
            });
        }
    }
    Ok(curr.wrapping_sub(prev) & mask)
}

/// Signed delta under the half-range rule: deltas of 2^(width−1) or more
/// are read as negative (an earlier counter value).
pub fn tick_delta_signed(prev: u64, curr: u64, width_bits: u32) -> Result<i64, ClockError> {
    let d = tick_delta(prev, curr, width_bits)?;
    if width_bits == 64 {
        return Ok(d as i64);
    }
    let half = 1u64 << (width_bits - 1);
    Ok(if d >= half {
        (d as i128 - (1i128 << width_bits)) as i64
    } else {
        d as i64
    })
}
