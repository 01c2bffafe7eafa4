use serde::{Deserialize, Serialize};

/// Open interval on the extended real line. Endpoints may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const ALL: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v > self.lo && v < self.hi
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo < self.hi)
    }

    pub fn intersect(&self, o: Interval) -> Interval {
        Interval::new(self.lo.max(o.lo), self.hi.min(o.hi))
    }

    /// `self` with both endpoints pulled in by `margin` (no-op on infinite ends).
    pub fn shrunk(&self, margin: f64) -> Interval {
        let lo = if self.lo.is_finite() { self.lo + margin } else { self.lo };
        let hi = if self.hi.is_finite() { self.hi - margin } else { self.hi };
        Interval::new(lo, hi)
    }

    /// Is `[lo, hi]` of `o` contained in the open `self`?
    pub fn contains_interval(&self, o: Interval) -> bool {
        o.lo > self.lo && o.hi < self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Midpoint for finite intervals; clamps one infinite side to the other
    /// finite endpoint offset by 1.
    pub fn representative(&self) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => 0.5 * (self.lo + self.hi),
            (true, false) => self.lo + 1.0,
            (false, true) => self.hi - 1.0,
            (false, false) => 0.0,
        }
    }
}
