//! Local-hidden-variable strategies.
//!
//! The pair carries a shared angle λ, uniform on the circle. Station A
//! answers `sign(cos(setting − λ))` and station B the opposite sign, which
//! gives the sawtooth correlation `E(θ) = −1 + 2θ/π`. In the detection
//! loophole variant a station stays silent when `|cos(setting − λ)| < τ`:
//! its detector is sensitive to the hidden variable. The model is local by
//! construction, yet once only coincidences are kept the surviving pairs
//! can exceed the CHSH bound.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{ChshResult, SettingQuad};
use crate::qstate::{AnalyzerSetting, Outcome, Sign};
use crate::rng::{Purpose, StreamFactory};
use crate::stats::{ChshEstimate, CorrelationEstimate, PairCounts, ProductTally, SettingPair};
use crate::{Error, Result};

/// Post-selected CHSH needs at least this many coincidences per pair.
pub const MIN_COINCIDENCES: u64 = 100;

/// Smallest Monte Carlo run accepted by [`postselected_chsh`].
pub const MIN_TRIALS: u64 = 10_000;

/// Default threshold grid swept by [`calibrate_loophole`].
pub const DEFAULT_TAU_GRID: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HiddenVariable(f64);

impl HiddenVariable {
    pub fn new(lambda: f64) -> Self {
        Self(AnalyzerSetting::new(lambda).angle())
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Station {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LhvModel {
    DeterministicSign,
    DetectionLoophole { tau: f64 },
}

impl LhvModel {
    pub fn detection_loophole(tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidInput(format!("tau must lie in [0, 1], got {tau}")));
        }
        Ok(Self::DetectionLoophole { tau })
    }

    pub fn tau(&self) -> f64 {
        match *self {
            LhvModel::DeterministicSign => 0.0,
            LhvModel::DetectionLoophole { tau } => tau,
        }
    }
}

/// λ uniform on `[0, 2π)`.
pub fn draw_lambda<R: Rng + ?Sized>(rng: &mut R) -> HiddenVariable {
    HiddenVariable::new(rng.random::<f64>() * TAU)
}

/// A station's answer. Depends on the local setting and λ only.
pub fn local_outcome(
    model: &LhvModel,
    station: Station,
    setting: AnalyzerSetting,
    lambda: HiddenVariable,
) -> Outcome {
    let c = (setting.angle() - lambda.value()).cos();
    if let LhvModel::DetectionLoophole { tau } = *model {
        if c.abs() < tau {
            return Outcome::NoDetection;
        }
    }
    let sign = if c >= 0.0 { Sign::Plus } else { Sign::Minus };
    match station {
        Station::A => sign.into(),
        Station::B => sign.flip().into(),
    }
}

/// One simulated LHV trial: the chosen setting pair, λ and both answers.
/// Shared with the engine so both draw identical trials for a seed.
pub(crate) fn lhv_trial(
    model: &LhvModel,
    quad: &SettingQuad,
    streams: &StreamFactory,
    index: u64,
) -> (SettingPair, HiddenVariable, Outcome, Outcome) {
    let pair = choose_settings(streams, index);
    let lambda = draw_lambda(&mut streams.stream(index, Purpose::Source));
    let (a, b) = quad.settings(pair);
    (
        pair,
        lambda,
        local_outcome(model, Station::A, a, lambda),
        local_outcome(model, Station::B, b, lambda),
    )
}

/// Independent uniform choice between the two settings at each station.
pub(crate) fn choose_settings(streams: &StreamFactory, index: u64) -> SettingPair {
    let mut rng = streams.stream(index, Purpose::Settings);
    let a_primed = rng.random::<bool>();
    let b_primed = rng.random::<bool>();
    SettingPair::new(a_primed, b_primed)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct LhvTally {
    coincidences: [PairCounts; 4],
    /// Products over all emitted pairs, undetected answers counted as 0.
    full: [ProductTally; 4],
    trials: u64,
}

impl LhvTally {
    fn merge(mut self, other: Self) -> Self {
        for k in 0..4 {
            self.coincidences[k] += other.coincidences[k];
            self.full[k].n += other.full[k].n;
            self.full[k].sum += other.full[k].sum;
            self.full[k].sum_sq += other.full[k].sum_sq;
        }
        self.trials += other.trials;
        self
    }
}

fn tally(model: &LhvModel, quad: &SettingQuad, trials: u64, seed: u64) -> LhvTally {
    let streams = StreamFactory::new(seed);
    const BLOCK: u64 = 8192;
    let blocks = trials.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let mut t = LhvTally::default();
            for index in blk * BLOCK..((blk + 1) * BLOCK).min(trials) {
                let (pair, _, oa, ob) = lhv_trial(model, quad, &streams, index);
                let k = pair.index();
                t.trials += 1;
                match (oa.sign(), ob.sign()) {
                    (Some(sa), Some(sb)) => {
                        t.coincidences[k].record(sa, sb);
                        t.full[k].record(sa.value() * sb.value());
                    }
                    _ => t.full[k].record(0),
                }
            }
            t
        })
        .reduce(LhvTally::default, LhvTally::merge)
}

/// CHSH on the post-selected coincidences of an LHV run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostselectedChsh {
    pub chsh: ChshResult,
    pub stderr: f64,
    pub estimates: [CorrelationEstimate; 4],
    /// Coincidences over emitted pairs.
    pub detected_fraction: f64,
}

/// Simulates `trials` pairs with a per-trial random setting choice, keeps
/// only trials where both stations fired, and estimates CHSH on those.
pub fn postselected_chsh(
    model: &LhvModel,
    quad: &SettingQuad,
    trials: u64,
    seed: u64,
) -> Result<PostselectedChsh> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    let t = tally(model, quad, trials, seed);
    let mut estimates = [CorrelationEstimate { e: 0.0, stderr: 0.0, n: 0 }; 4];
    for pair in SettingPair::ALL {
        let counts = &t.coincidences[pair.index()];
        if counts.total() < MIN_COINCIDENCES {
            return Err(Error::InsufficientStatistics {
                pair,
                coincidences: counts.total(),
                required: MIN_COINCIDENCES,
                results: None,
            });
        }
        estimates[pair.index()] = counts.estimate().expect("nonzero count");
    }
    let est = ChshEstimate::from_estimates(&estimates)?;
    let coincidences: u64 = t.coincidences.iter().map(PairCounts::total).sum();
    Ok(PostselectedChsh {
        chsh: est.result,
        stderr: est.stderr,
        estimates,
        detected_fraction: coincidences as f64 / t.trials as f64,
    })
}

/// CHSH over every emitted pair, with an undetected answer entering the
/// product as 0. No post-selection, so a local model cannot exceed 2.
pub fn full_sample_chsh(
    model: &LhvModel,
    quad: &SettingQuad,
    trials: u64,
    seed: u64,
) -> Result<(ChshResult, f64)> {
    let t = tally(model, quad, trials, seed);
    let mut est = [CorrelationEstimate { e: 0.0, stderr: 0.0, n: 0 }; 4];
    for pair in SettingPair::ALL {
        est[pair.index()] = t.full[pair.index()].estimate().ok_or(Error::InsufficientStatistics {
            pair,
            coincidences: 0,
            required: 1,
            results: None,
        })?;
    }
    let chsh = ChshEstimate::from_estimates(&est)?;
    Ok((chsh.result, chsh.stderr))
}

/// Result of [`calibrate_loophole`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopholeCalibration {
    pub tau: f64,
    pub quad: SettingQuad,
    /// Signed post-selected CHSH at the chosen configuration.
    pub s: f64,
    pub detected_fraction: f64,
    /// `|s| > 2` was reached.
    pub violation: bool,
}

/// Seed for the calibration sample; calibration is deterministic.
const CALIBRATION_SEED: u64 = 0x5EED_CA1B;

/// Rounding allowance when flagging an in-sample `|S|` above 2.
const VIOLATION_EPS: f64 = 1e-12;

/// Sweeps detection thresholds and setting quads for the largest
/// post-selected `|S|`.
///
/// For every τ one sample of `trials` hidden variables is drawn and each
/// station's answer is evaluated at every grid angle, which yields the
/// post-selected correlation and coincidence count of every angle pair.
/// All `quad_resolution⁴` quads are then scored from that table; quads with
/// a pair below [`MIN_COINCIDENCES`] are skipped. Ties keep the first τ in
/// grid order and the lexicographically smallest quad.
pub fn calibrate_loophole(
    tau_grid: &[f64],
    quad_resolution: usize,
    trials: u64,
) -> Result<LoopholeCalibration> {
    if tau_grid.is_empty() {
        return Err(Error::InvalidInput("tau grid is empty".into()));
    }
    if quad_resolution < 2 {
        return Err(Error::InvalidInput("quad resolution must be ≥ 2".into()));
    }
    let models = tau_grid
        .iter()
        .map(|&t| LhvModel::detection_loophole(t))
        .collect::<Result<Vec<_>>>()?;

    let streams = StreamFactory::new(CALIBRATION_SEED);
    let lambdas: Vec<HiddenVariable> = (0..trials)
        .into_par_iter()
        .map(|i| draw_lambda(&mut streams.stream(i, Purpose::Source)))
        .collect();
    let angles: Vec<AnalyzerSetting> = (0..quad_resolution)
        .map(|k| AnalyzerSetting::new(TAU * k as f64 / quad_resolution as f64))
        .collect();

    let mut best: Option<LoopholeCalibration> = None;
    for (model, &tau) in models.iter().zip(tau_grid) {
        let table = AnglePairTable::build(model, &angles, &lambdas);
        if let Some((abs_s, s, idx, fraction)) = table.best_quad() {
            let better = best.as_ref().is_none_or(|b| abs_s > b.s.abs());
            if better {
                best = Some(LoopholeCalibration {
                    tau,
                    quad: SettingQuad {
                        a: angles[idx[0]],
                        a_prime: angles[idx[1]],
                        b: angles[idx[2]],
                        b_prime: angles[idx[3]],
                    },
                    s,
                    detected_fraction: fraction,
                    violation: abs_s > 2.0 + VIOLATION_EPS,
                });
            }
        }
    }
    best.ok_or_else(|| Error::InsufficientStatistics {
        pair: SettingPair::ALL[0],
        coincidences: 0,
        required: MIN_COINCIDENCES,
        results: None,
    })
}

/// Coincidence sums over a shared λ sample for every pair of grid angles.
struct AnglePairTable {
    n: usize,
    /// Σ A·B over coincidences, indexed `[i * n + j]` for A at angle i and
    /// B at angle j.
    sum: Vec<i64>,
    count: Vec<u64>,
    trials: u64,
}

impl AnglePairTable {
    fn build(model: &LhvModel, angles: &[AnalyzerSetting], lambdas: &[HiddenVariable]) -> Self {
        let n = angles.len();
        let zero = || (vec![0i64; n * n], vec![0u64; n * n]);
        let (sum, count) = lambdas
            .par_chunks(4096)
            .map(|chunk| {
                let (mut sum, mut count) = zero();
                let mut a = vec![0i8; n];
                let mut b = vec![0i8; n];
                for &lambda in chunk {
                    for (k, &angle) in angles.iter().enumerate() {
                        a[k] = outcome_value(local_outcome(model, Station::A, angle, lambda));
                        b[k] = outcome_value(local_outcome(model, Station::B, angle, lambda));
                    }
                    for i in 0..n {
                        if a[i] == 0 {
                            continue;
                        }
                        let row = i * n;
                        for j in 0..n {
                            if b[j] != 0 {
                                sum[row + j] += (a[i] * b[j]) as i64;
                                count[row + j] += 1;
                            }
                        }
                    }
                }
                (sum, count)
            })
            .reduce(zero, |(mut s1, mut c1), (s2, c2)| {
                for k in 0..s1.len() {
                    s1[k] += s2[k];
                    c1[k] += c2[k];
                }
                (s1, c1)
            });
        Self {
            n,
            sum,
            count,
            trials: lambdas.len() as u64,
        }
    }

    fn corr(&self, i: usize, j: usize) -> Option<f64> {
        let c = self.count[i * self.n + j];
        (c >= MIN_COINCIDENCES).then(|| self.sum[i * self.n + j] as f64 / c as f64)
    }

    /// `(|S|, S, quad indices, detected fraction)` of the best quad.
    fn best_quad(&self) -> Option<(f64, f64, [usize; 4], f64)> {
        let n = self.n;
        let best = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut best: Option<(f64, f64, [usize; 4])> = None;
                for i2 in 0..n {
                    for j in 0..n {
                        let (Some(e_ab), Some(e_a2b)) = (self.corr(i, j), self.corr(i2, j)) else {
                            continue;
                        };
                        for j2 in 0..n {
                            let (Some(e_ab2), Some(e_a2b2)) = (self.corr(i, j2), self.corr(i2, j2)) else {
                                continue;
                            };
                            let s = e_ab + e_ab2 + e_a2b - e_a2b2;
                            if best.is_none_or(|b| s.abs() > b.0) {
                                best = Some((s.abs(), s, [i, i2, j, j2]));
                            }
                        }
                    }
                }
                best
            })
            .reduce(
                || None,
                |x, y| match (x, y) {
                    (None, y) => y,
                    (x, None) => x,
                    (Some(x), Some(y)) => {
                        if y.0 > x.0 || (y.0 == x.0 && y.2 < x.2) {
                            Some(y)
                        } else {
                            Some(x)
                        }
                    }
                },
            )?;
        let [i, i2, j, j2] = best.2;
        let coincidences = [(i, j), (i, j2), (i2, j), (i2, j2)]
            .iter()
            .map(|&(p, q)| self.count[p * n + q])
            .sum::<u64>();
        // settings are chosen uniformly, so the detected fraction is the mean
        // over the four pairs
        let fraction = coincidences as f64 / (4 * self.trials) as f64;
        Some((best.0, best.1, best.2, fraction))
    }
}

fn outcome_value(o: Outcome) -> i8 {
    o.sign().map_or(0, Sign::value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn lambda_reproducible_and_in_range() {
        let streams = StreamFactory::new(42);
        let x = draw_lambda(&mut streams.stream(0, Purpose::Source));
        let y = draw_lambda(&mut streams.stream(0, Purpose::Source));
        assert_eq!(x, y);
        assert!((0.0..TAU).contains(&x.value()));
    }

    #[test]
    fn lambda_is_uniform() {
        let streams = StreamFactory::new(42);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|i| draw_lambda(&mut streams.stream(i, Purpose::Source)).value())
            .collect();
        let mean_cos = xs.iter().map(|x| x.cos()).sum::<f64>() / n as f64;
        assert!(mean_cos.abs() < 0.01);
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let cdf = x / TAU;
                (cdf - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS distance {ks}");
    }

    #[test]
    fn local_outcome_examples() {
        let sign = LhvModel::DeterministicSign;
        assert_eq!(local_outcome(&sign, Station::A, 0.0.into(), HiddenVariable::new(0.0)), Outcome::Plus);
        assert_eq!(local_outcome(&sign, Station::B, 0.0.into(), HiddenVariable::new(0.0)), Outcome::Minus);
        let lh = LhvModel::detection_loophole(0.9).unwrap();
        assert_eq!(
            local_outcome(&lh, Station::A, 0.0.into(), HiddenVariable::new(FRAC_PI_2)),
            Outcome::NoDetection
        );
        assert!(LhvModel::detection_loophole(1.5).is_err());
    }

    /// Oracle: midpoint-rule integration of the sign model over λ.
    fn sign_model_correlation(theta: f64, points: usize) -> f64 {
        let m = LhvModel::DeterministicSign;
        (0..points)
            .map(|k| {
                let lambda = HiddenVariable::new(TAU * (k as f64 + 0.5) / points as f64);
                let a = local_outcome(&m, Station::A, 0.0.into(), lambda);
                let b = local_outcome(&m, Station::B, theta.into(), lambda);
                a.product(b).unwrap() as f64
            })
            .sum::<f64>()
            / points as f64
    }

    #[test]
    fn sign_model_sawtooth() {
        for k in 0..=12 {
            let theta = PI * k as f64 / 12.0;
            let e = sign_model_correlation(theta, 240_000);
            assert!((e - (-1.0 + 2.0 * theta / PI)).abs() < 1e-4, "θ={theta} E={e}");
        }
    }

    #[test]
    fn sign_model_respects_bound_at_optimal_quad() {
        let r = postselected_chsh(&LhvModel::DeterministicSign, &SettingQuad::standard(), 1_000_000, 7).unwrap();
        assert_eq!(r.detected_fraction, 1.0);
        assert!(r.chsh.abs_s <= 2.0 + 3.0 * r.stderr);
        // the sawtooth saturates the bound at this quad
        assert!((r.chsh.abs_s - 2.0).abs() < 4.0 * r.stderr + 1e-9);
    }

    #[test]
    fn zero_threshold_is_the_sign_model() {
        let quad = SettingQuad::new(0.3, 1.1, 2.0, 4.5);
        let x = postselected_chsh(&LhvModel::DeterministicSign, &quad, 20_000, 3).unwrap();
        let y = postselected_chsh(&LhvModel::detection_loophole(0.0).unwrap(), &quad, 20_000, 3).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn loophole_violates_after_postselection() {
        let m = LhvModel::detection_loophole(0.8).unwrap();
        let r = postselected_chsh(&m, &SettingQuad::standard(), 1_000_000, 11).unwrap();
        assert!(r.chsh.abs_s > 2.0, "{:?}", r.chsh);
        assert!(r.detected_fraction < 0.5);
        let (full, stderr) = full_sample_chsh(&m, &SettingQuad::standard(), 1_000_000, 11).unwrap();
        assert!(full.abs_s <= 2.0 + 4.0 * stderr);
    }

    #[test]
    fn postselection_needs_statistics() {
        // τ = 1 leaves only measure-zero detections
        let m = LhvModel::detection_loophole(1.0).unwrap();
        let err = postselected_chsh(&m, &SettingQuad::standard(), 10_000, 1).unwrap_err();
        assert!(matches!(err, Error::InsufficientStatistics { .. }));
        assert!(postselected_chsh(&m, &SettingQuad::standard(), 100, 1).is_err());
    }

    #[test]
    fn detected_fraction_non_increasing_in_tau() {
        let quad = SettingQuad::standard();
        let mut last = f64::INFINITY;
        for tau in [0.0, 0.2, 0.4, 0.6, 0.7, 0.8] {
            let m = LhvModel::detection_loophole(tau).unwrap();
            let r = postselected_chsh(&m, &quad, 50_000, 5).unwrap();
            assert!(r.detected_fraction <= last);
            last = r.detected_fraction;
        }
    }

    #[test]
    fn locality_by_construction() {
        let m = LhvModel::detection_loophole(0.6).unwrap();
        // A's answer only sees its own setting and λ; the function has no
        // access to the remote setting, so check stability across the
        // remote setting in a joint trial instead
        let streams = StreamFactory::new(9);
        for index in 0..2000 {
            let (pair, lambda, oa, _) = lhv_trial(&m, &SettingQuad::standard(), &streams, index);
            let other_quad = SettingQuad { b: 1.234.into(), b_prime: 5.0.into(), ..SettingQuad::standard() };
            let (pair2, lambda2, oa2, _) = lhv_trial(&m, &other_quad, &streams, index);
            assert_eq!((pair, lambda, oa), (pair2, lambda2, oa2));
        }
    }

    #[test]
    fn calibration_finds_violation() {
        let c = calibrate_loophole(&DEFAULT_TAU_GRID, 8, 100_000).unwrap();
        assert!(c.violation);
        assert!(c.s.abs() > 2.0);
        assert!(c.tau > 0.0);
        assert!(c.detected_fraction < 0.5);
    }

    #[test]
    fn calibration_without_threshold_stays_local() {
        let c = calibrate_loophole(&[0.0], 8, 50_000).unwrap();
        assert!(!c.violation);
        // every λ contributes exactly ±2 on the shared sample
        assert!(c.s.abs() <= 2.0 + 1e-12);
    }

    #[test]
    fn calibration_monotone_in_resolution() {
        let coarse = calibrate_loophole(&[0.6], 8, 40_000).unwrap();
        let fine = calibrate_loophole(&[0.6], 32, 40_000).unwrap();
        assert!(fine.s.abs() >= coarse.s.abs());
    }
}
