use std::fmt;
use std::ops::{Add, Sub};

/// Timeline instant or duration, stored as an integer number of attoseconds.
///
/// Integer storage keeps timeline comparisons exact; attosecond resolution is
/// fine enough that a rounded pulse duration still reproduces its target
/// rotation to better than 1e-9. The range covers about ±2.5 hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Time(i64);

const PER_NS: i64 = 1_000_000_000;
const PER_US: f64 = 1e12;

impl Time {
    pub const ZERO: Time = Time(0);

    pub fn from_attos(a: i64) -> Self {
        Time(a)
    }

    pub fn attos(self) -> i64 {
        self.0
    }

    pub fn from_us(us: f64) -> Self {
        Time((us * PER_US).round() as i64)
    }

    pub fn from_ns(ns: i64) -> Self {
        Time(ns * PER_NS)
    }

    pub fn as_us(self) -> f64 {
        self.0 as f64 / PER_US
    }

    pub fn as_s(self) -> f64 {
        self.0 as f64 * 1e-18
    }

    /// Exact decimal nanoseconds, e.g. `138.888888889`.
    pub fn ns_string(self) -> String {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        let per = PER_NS as u64;
        format!("{sign}{}.{:09}", a / per, a % per)
    }
}

impl Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl Sub for Time {
    type Output = Time;
    fn sub(self, rhs: Time) -> Time {
        Time(self.0 - rhs.0)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.ns_string())
    }
}
