//! CHSH functional, its per-trial identity, and analyzer-setting search.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::qstate::{AnalyzerSetting, TwoQubitState};
use crate::stats::SettingPair;
use crate::{Error, Result};

/// The bound obeyed by every local model.
pub const LOCAL_BOUND: f64 = 2.0;

/// The two settings per station.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingQuad {
    pub a: AnalyzerSetting,
    pub a_prime: AnalyzerSetting,
    pub b: AnalyzerSetting,
    pub b_prime: AnalyzerSetting,
}

impl SettingQuad {
    pub fn new(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Self {
        Self {
            a: a.into(),
            a_prime: a_prime.into(),
            b: b.into(),
            b_prime: b_prime.into(),
        }
    }

    /// `a = 0, a' = π/2, b = π/4, b' = −π/4`: maximal violation for the
    /// singlet and the saturating quad for the sign model.
    pub fn standard() -> Self {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
        Self::new(0.0, FRAC_PI_2, FRAC_PI_4, -FRAC_PI_4)
    }

    pub fn setting_a(&self, primed: bool) -> AnalyzerSetting {
        if primed {
            self.a_prime
        } else {
            self.a
        }
    }

    pub fn setting_b(&self, primed: bool) -> AnalyzerSetting {
        if primed {
            self.b_prime
        } else {
            self.b
        }
    }

    pub fn settings(&self, pair: SettingPair) -> (AnalyzerSetting, AnalyzerSetting) {
        (self.setting_a(pair.a_primed), self.setting_b(pair.b_primed))
    }

    pub fn angles(&self) -> [f64; 4] {
        [
            self.a.angle(),
            self.a_prime.angle(),
            self.b.angle(),
            self.b_prime.angle(),
        ]
    }

    fn from_angles(x: [f64; 4]) -> Self {
        Self::new(x[0], x[1], x[2], x[3])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub s: f64,
    pub abs_s: f64,
    pub violates_local: bool,
}

impl ChshResult {
    fn from_s(s: f64) -> Self {
        let abs_s = s.abs();
        Self {
            s,
            abs_s,
            violates_local: abs_s > LOCAL_BOUND,
        }
    }
}

/// `S = E(a,b) + E(a,b') + E(a',b) − E(a',b')`.
pub fn chsh_value(e_ab: f64, e_ab_p: f64, e_a_pb: f64, e_a_pb_p: f64) -> Result<ChshResult> {
    for (name, e) in [
        ("E(a,b)", e_ab),
        ("E(a,b')", e_ab_p),
        ("E(a',b)", e_a_pb),
        ("E(a',b')", e_a_pb_p),
    ] {
        if !(-1.0..=1.0).contains(&e) {
            return Err(Error::Domain(format!("{name} = {e} lies outside [-1, 1]")));
        }
    }
    Ok(ChshResult::from_s(e_ab + e_ab_p + e_a_pb - e_a_pb_p))
}

/// `α(β + β') + α'(β − β')` for one trial with all four results assigned.
/// Always `±2`.
pub fn per_trial_value(alpha: i32, beta: i32, alpha_p: i32, beta_p: i32) -> Result<i32> {
    for v in [alpha, beta, alpha_p, beta_p] {
        if v != 1 && v != -1 {
            return Err(Error::Domain(format!("per-trial results must be ±1, got {v}")));
        }
    }
    Ok(alpha * (beta + beta_p) + alpha_p * (beta - beta_p))
}

pub fn quantum_chsh(state: &TwoQubitState, quad: &SettingQuad) -> ChshResult {
    let e = |pair| {
        let (a, b) = quad.settings(pair);
        state.correlation(a, b)
    };
    let [p0, p1, p2, p3] = SettingPair::ALL;
    chsh_value(e(p0), e(p1), e(p2), e(p3)).expect("correlations are clamped to [-1, 1]")
}

/// Smallest coordinate-descent step before the refinement stops.
const REFINE_STEP: f64 = 1e-6;

/// Maximizes `|S|` over setting quads: exhaustive search on a
/// `resolution`-point angle grid, then coordinate descent from the best grid
/// point with the step halved whenever a full sweep finds no improvement.
///
/// Ties go to the lexicographically smallest `(a, a', b, b')`.
pub fn optimize_settings(
    state: &TwoQubitState,
    resolution: usize,
) -> Result<(SettingQuad, ChshResult)> {
    if resolution < 8 {
        return Err(Error::InvalidInput(format!(
            "resolution must be at least 8, got {resolution}"
        )));
    }
    let grid: Vec<f64> = (0..resolution)
        .map(|k| TAU * k as f64 / resolution as f64)
        .collect();
    let corr: Vec<Vec<f64>> = grid
        .iter()
        .map(|&a| grid.iter().map(|&b| state.correlation(a.into(), b.into())).collect())
        .collect();

    let (best_abs, best_idx) = (0..resolution)
        .into_par_iter()
        .map(|i| best_grid_quad_with_first(&corr, i))
        .reduce(|| (f64::NEG_INFINITY, [usize::MAX; 4]), better_candidate);

    let mut x = best_idx.map(|k| grid[k]);
    let mut best = best_abs;
    let eval = |x: &[f64; 4]| quantum_chsh(state, &SettingQuad::from_angles(*x)).abs_s;

    let mut step = TAU / resolution as f64;
    while step >= REFINE_STEP {
        let mut improved = false;
        for coord in 0..4 {
            for delta in [step, -step] {
                let mut trial = x;
                trial[coord] = AnalyzerSetting::new(trial[coord] + delta).angle();
                let v = eval(&trial);
                if v > best {
                    best = v;
                    x = trial;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }

    let quad = SettingQuad::from_angles(x);
    Ok((quad, quantum_chsh(state, &quad)))
}

fn best_grid_quad_with_first(corr: &[Vec<f64>], i: usize) -> (f64, [usize; 4]) {
    let n = corr.len();
    let mut best = (f64::NEG_INFINITY, [usize::MAX; 4]);
    for i2 in 0..n {
        for j in 0..n {
            let (e_ij, e_i2j) = (corr[i][j], corr[i2][j]);
            for j2 in 0..n {
                let s = (e_ij + corr[i][j2] + e_i2j - corr[i2][j2]).abs();
                if s > best.0 {
                    best = (s, [i, i2, j, j2]);
                }
            }
        }
    }
    best
}

fn better_candidate(x: (f64, [usize; 4]), y: (f64, [usize; 4])) -> (f64, [usize; 4]) {
    match x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal) {
        Ordering::Greater => x,
        Ordering::Less => y,
        Ordering::Equal => {
            if x.1 <= y.1 {
                x
            } else {
                y
            }
        }
    }
}
