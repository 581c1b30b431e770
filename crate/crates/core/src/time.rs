use std::fmt;
use std::ops::{Add, AddAssign, Sub};

/// A point in time or a span, in integer microseconds since the start of an
/// experiment.
///
/// All byte accounting is keyed on integer time so that window membership is
/// exact and trace files round-trip without drift.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Micros(pub u64);

impl Micros {
    pub const ZERO: Micros = Micros(0);
    pub const PER_SEC: u64 = 1_000_000;

    pub const fn from_millis(ms: u64) -> Self {
        Micros(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        Micros(s * Self::PER_SEC)
    }

    /// Rounds to the nearest microsecond; negative and NaN inputs map to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            Micros(0)
        } else {
            Micros((s * Self::PER_SEC as f64).round() as u64)
        }
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / Self::PER_SEC as f64
    }

    pub fn saturating_sub(self, rhs: Micros) -> Micros {
        Micros(self.0.saturating_sub(rhs.0))
    }

    /// Parses a decimal seconds string such as `12.000300` without going
    /// through floating point.
    pub fn parse_secs(s: &str) -> Option<Self> {
        let s = s.trim();
        let (int, frac) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return None;
        }
        let whole: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let mut micros = 0u64;
        for (i, b) in frac.bytes().enumerate() {
            if i >= 6 {
                // sub-microsecond digits are truncated
                break;
            }
            micros += u64::from(b - b'0') * 10u64.pow(5 - i as u32);
        }
        whole.checked_mul(Self::PER_SEC)?.checked_add(micros).map(Micros)
    }
}

impl Add for Micros {
    type Output = Micros;
    fn add(self, rhs: Micros) -> Micros {
        Micros(self.0 + rhs.0)
    }
}

impl AddAssign for Micros {
    fn add_assign(&mut self, rhs: Micros) {
        self.0 += rhs.0;
    }
}

impl Sub for Micros {
    type Output = Micros;
    fn sub(self, rhs: Micros) -> Micros {
        Micros(self.0 - rhs.0)
    }
}

/// Seconds with exactly six decimals.
impl fmt::Display for Micros {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / Self::PER_SEC, self.0 % Self::PER_SEC)
    }
}
