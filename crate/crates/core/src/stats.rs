//! Coincidence tallies and correlation estimators.

use std::fmt;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::bell::{chsh_value, ChshResult};
use crate::qstate::{Outcome, Sign};
use crate::Result;

/// Which of the two settings each station used: `false` is the unprimed
/// setting (`a` or `b`), `true` the primed one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SettingPair {
    pub a_primed: bool,
    pub b_primed: bool,
}

impl SettingPair {
    /// CHSH order: `(a,b), (a,b'), (a',b), (a',b')`.
    pub const ALL: [SettingPair; 4] = [
        SettingPair::new(false, false),
        SettingPair::new(false, true),
        SettingPair::new(true, false),
        SettingPair::new(true, true),
    ];

    pub const fn new(a_primed: bool, b_primed: bool) -> Self {
        Self { a_primed, b_primed }
    }

    pub fn index(self) -> usize {
        2 * self.a_primed as usize + self.b_primed as usize
    }

    pub fn label(self) -> &'static str {
        match (self.a_primed, self.b_primed) {
            (false, false) => "ab",
            (false, true) => "ab'",
            (true, false) => "a'b",
            (true, true) => "a'b'",
        }
    }
}

impl fmt::Display for SettingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Coincidence counts `N(±,±)` for one setting pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub pp: u64,
    pub pm: u64,
    pub mp: u64,
    pub mm: u64,
}

impl PairCounts {
    pub fn record(&mut self, a: Sign, b: Sign) {
        match (a, b) {
            (Sign::Plus, Sign::Plus) => self.pp += 1,
            (Sign::Plus, Sign::Minus) => self.pm += 1,
            (Sign::Minus, Sign::Plus) => self.mp += 1,
            (Sign::Minus, Sign::Minus) => self.mm += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.pp + self.pm + self.mp + self.mm
    }

    pub fn estimate(&self) -> Option<CorrelationEstimate> {
        CorrelationEstimate::from_counts(self)
    }
}

impl AddAssign for PairCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.pp += rhs.pp;
        self.pm += rhs.pm;
        self.mp += rhs.mp;
        self.mm += rhs.mm;
    }
}

/// Per-station `+1 / −1 / none` counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinglesCounts {
    pub plus: u64,
    pub minus: u64,
    pub none: u64,
}

impl SinglesCounts {
    pub fn record(&mut self, o: Outcome) {
        match o {
            Outcome::Plus => self.plus += 1,
            Outcome::Minus => self.minus += 1,
            Outcome::NoDetection => self.none += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.plus + self.minus + self.none
    }

    /// Fraction of trials reporting `+1`.
    pub fn plus_rate(&self) -> f64 {
        self.plus as f64 / self.total().max(1) as f64
    }

    pub fn detected(&self) -> u64 {
        self.plus + self.minus
    }
}

impl AddAssign for SinglesCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.plus += rhs.plus;
        self.minus += rhs.minus;
        self.none += rhs.none;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub e: f64,
    pub stderr: f64,
    pub n: u64,
}

impl CorrelationEstimate {
    /// `e = (N++ + N−− − N+− − N−+)/n`, `stderr = sqrt((1 − e²)/n)`.
    pub fn from_counts(c: &PairCounts) -> Option<Self> {
        let n = c.total();
        if n == 0 {
            return None;
        }
        let agree = (c.pp + c.mm) as f64;
        let disagree = (c.pm + c.mp) as f64;
        let e = (agree - disagree) / n as f64;
        let stderr = ((1.0 - e * e).max(0.0) / n as f64).sqrt();
        Some(Self { e, stderr, n })
    }
}

/// A CHSH value estimated from four correlation estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshEstimate {
    pub result: ChshResult,
    /// Standard errors of the four estimates added in quadrature.
    pub stderr: f64,
}

impl ChshEstimate {
    pub fn from_estimates(est: &[CorrelationEstimate; 4]) -> Result<Self> {
        let result = chsh_value(est[0].e, est[1].e, est[2].e, est[3].e)?;
        let stderr = est.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt();
        Ok(Self { result, stderr })
    }

    /// `(|S| − 2)/σ`; infinite when σ vanishes and `|S| ≠ 2`.
    pub fn z_score(&self) -> f64 {
        let excess = self.result.abs_s - 2.0;
        if self.stderr > 0.0 {
            excess / self.stderr
        } else if excess == 0.0 {
            0.0
        } else {
            excess.signum() * f64::INFINITY
        }
    }
}

/// Running mean and variance of per-trial values in `{−1, 0, +1}`, used for
/// correlations over all emitted pairs (undetected outcomes count as 0).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductTally {
    pub n: u64,
    pub sum: i64,
    pub sum_sq: u64,
}

impl ProductTally {
    pub fn record(&mut self, value: i8) {
        self.n += 1;
        self.sum += value as i64;
        self.sum_sq += (value as i64 * value as i64) as u64;
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn estimate(&self) -> Option<CorrelationEstimate> {
        if self.n == 0 {
            return None;
        }
        let n = self.n as f64;
        let mean = self.sum as f64 / n;
        let var = (self.sum_sq as f64 / n - mean * mean).max(0.0);
        Some(CorrelationEstimate {
            e: mean,
            stderr: (var / n).sqrt(),
            n: self.n,
        })
    }
}
