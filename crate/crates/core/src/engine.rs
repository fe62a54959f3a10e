//! Seeded Monte Carlo trial runner.
//!
//! A trial picks one setting at each station, asks the model for a verdict
//! and a pair of outcomes, thins each detection by the station efficiency
//! and keeps the pair if both stations clicked. All randomness for trial
//! `i` comes from the counter-based streams at index `i`, and the tallies
//! are integer counts merged by addition, so results are bitwise identical
//! for any number of workers and any trial can be replayed alone.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::SettingQuad;
use crate::lhv::{lhv_trial, choose_settings, HiddenVariable, LhvModel, Station};
use crate::models::{
    generate_multi_psi, generate_outcomes, moving_station, trial_verdict, CollapseModel,
    MultiPsiOutcome, StationGeometry, TrialVerdict, VerdictReason,
};
use crate::qstate::{AnalyzerSetting, Outcome, TwoQubitState};
use crate::rng::{Purpose, StreamFactory};
use crate::stats::{
    ChshEstimate, CorrelationEstimate, PairCounts, ProductTally, SettingPair, SinglesCounts,
};
use crate::{Error, Result};

/// Fewest coincidences per setting pair for an estimate.
pub const MIN_PAIR_COINCIDENCES: u64 = 2;

const BLOCK: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Collapse(CollapseModel),
    Lhv(LhvModel),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub state: TwoQubitState,
    pub model: ModelSpec,
    pub quad: SettingQuad,
    pub geometry: [StationGeometry; 2],
    /// Per-station detection efficiency in `(0, 1]`.
    pub efficiency: [f64; 2],
    pub trials: u64,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be ≥ 1".into()));
        }
        for (eff, name) in self.efficiency.iter().zip(["A", "B"]) {
            if !(*eff > 0.0 && *eff <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "efficiency of station {name} must lie in (0, 1], got {eff}"
                )));
            }
        }
        if !self.state.is_normalized() {
            return Err(Error::InvalidState("state is not normalized".into()));
        }
        if let ModelSpec::Collapse(CollapseModel::PerFrameStateVector) = self.model {
            moving_station(&self.geometry[0], &self.geometry[1])?;
        }
        Ok(())
    }
}

/// One regenerated trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: u64,
    pub pair: SettingPair,
    pub setting_a: AnalyzerSetting,
    pub setting_b: AnalyzerSetting,
    /// Outcomes after efficiency thinning.
    pub outcome_a: Outcome,
    pub outcome_b: Outcome,
    pub verdict: TrialVerdict,
    pub lambda: Option<HiddenVariable>,
    /// Per-state-vector readings when the trial ran under one state vector
    /// per frame with devices in relative motion. Not thinned.
    pub multi_psi: Option<MultiPsiOutcome>,
}

impl TrialRecord {
    pub fn is_coincidence(&self) -> bool {
        self.outcome_a.is_detected() && self.outcome_b.is_detected()
    }
}

/// Counters for the one-state-vector-per-frame readings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiPsiCounts {
    pub trials: u64,
    pub double_detection: u64,
    pub no_detection: u64,
    pub moving_detector: u64,
    pub static_chain_detector: u64,
    /// Moving reading times remote reading.
    pub moving_remote: ProductTally,
    /// Static-chain reading times remote reading.
    pub static_remote: ProductTally,
}

impl MultiPsiCounts {
    fn record(&mut self, m: &MultiPsiOutcome) {
        self.trials += 1;
        self.double_detection += m.double_detection as u64;
        self.no_detection += m.no_detection as u64;
        self.moving_detector += m.moving_detector_fired() as u64;
        self.static_chain_detector += m.static_chain_fired() as u64;
        let prod = |x: Outcome, y: Outcome| x.product(y).unwrap_or(0);
        self.moving_remote.record(prod(m.moving, m.remote));
        self.static_remote.record(prod(m.moving_static_chain, m.remote));
    }

    fn merge(&mut self, o: &Self) {
        self.trials += o.trials;
        self.double_detection += o.double_detection;
        self.no_detection += o.no_detection;
        self.moving_detector += o.moving_detector;
        self.static_chain_detector += o.static_chain_detector;
        self.moving_remote.merge(&o.moving_remote);
        self.static_remote.merge(&o.static_remote);
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Tally {
    trials: u64,
    pair_trials: [u64; 4],
    coincidences: [PairCounts; 4],
    singles: [[SinglesCounts; 2]; 4],
    verdicts: BTreeMap<VerdictReason, u64>,
    multi_psi: MultiPsiCounts,
}

impl Tally {
    fn record(&mut self, r: &TrialRecord) {
        let k = r.pair.index();
        self.trials += 1;
        self.pair_trials[k] += 1;
        self.singles[k][0].record(r.outcome_a);
        self.singles[k][1].record(r.outcome_b);
        if let (Some(a), Some(b)) = (r.outcome_a.sign(), r.outcome_b.sign()) {
            self.coincidences[k].record(a, b);
        }
        *self.verdicts.entry(r.verdict.reason).or_default() += 1;
        if let Some(m) = &r.multi_psi {
            self.multi_psi.record(m);
        }
    }

    fn merge(mut self, o: Self) -> Self {
        self.trials += o.trials;
        for k in 0..4 {
            self.pair_trials[k] += o.pair_trials[k];
            self.coincidences[k] += o.coincidences[k];
            self.singles[k][0] += o.singles[k][0];
            self.singles[k][1] += o.singles[k][1];
        }
        for (reason, n) in o.verdicts {
            *self.verdicts.entry(reason).or_default() += n;
        }
        self.multi_psi.merge(&o.multi_psi);
        self
    }
}

/// Aggregated run output. Every float is derived from integer counts, so
/// equal counts give bitwise-equal results.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultSet {
    pub trials: u64,
    /// Trials per setting pair, CHSH order.
    pub pair_trials: [u64; 4],
    pub coincidences: [PairCounts; 4],
    /// Singles per setting pair and station.
    pub singles_by_pair: [[SinglesCounts; 2]; 4],
    /// Singles per station over all trials.
    pub singles: [SinglesCounts; 2],
    pub estimates: [Option<CorrelationEstimate>; 4],
    pub chsh: Option<ChshEstimate>,
    /// Coincidences over trials.
    pub detected_pair_fraction: f64,
    pub verdicts: BTreeMap<VerdictReason, u64>,
    pub moving_station: Option<Station>,
    pub multi_psi: Option<MultiPsiCounts>,
}

impl ResultSet {
    fn from_tally(t: Tally, moving: Option<Station>) -> Self {
        let estimates = t.coincidences.map(|c| {
            (c.total() >= MIN_PAIR_COINCIDENCES)
                .then(|| c.estimate())
                .flatten()
        });
        let chsh = match estimates {
            [Some(a), Some(b), Some(c), Some(d)] => ChshEstimate::from_estimates(&[a, b, c, d]).ok(),
            _ => None,
        };
        let mut singles = [SinglesCounts::default(); 2];
        for per_pair in &t.singles {
            singles[0] += per_pair[0];
            singles[1] += per_pair[1];
        }
        let coincident: u64 = t.coincidences.iter().map(PairCounts::total).sum();
        Self {
            trials: t.trials,
            pair_trials: t.pair_trials,
            coincidences: t.coincidences,
            singles_by_pair: t.singles,
            singles,
            estimates,
            chsh,
            detected_pair_fraction: coincident as f64 / t.trials.max(1) as f64,
            verdicts: t.verdicts,
            moving_station: moving,
            multi_psi: (t.multi_psi.trials > 0).then_some(t.multi_psi),
        }
    }

    pub fn coincidences_total(&self) -> u64 {
        self.coincidences.iter().map(PairCounts::total).sum()
    }
}

/// Per-scenario constants shared by every trial.
struct Plan<'a> {
    scenario: &'a Scenario,
    streams: StreamFactory,
    verdict: TrialVerdict,
    moving: Option<Station>,
}

impl<'a> Plan<'a> {
    fn new(scenario: &'a Scenario) -> Result<Self> {
        scenario.validate()?;
        let [ga, gb] = &scenario.geometry;
        let (verdict, moving) = match &scenario.model {
            // the geometry is the same for every trial, so is the verdict
            ModelSpec::Collapse(m) => {
                let moving = match m {
                    CollapseModel::PerFrameStateVector => moving_station(ga, gb)?,
                    _ => None,
                };
                (trial_verdict(m, ga, gb), moving)
            }
            ModelSpec::Lhv(_) => (
                TrialVerdict {
                    correlated: false,
                    reason: VerdictReason::LocalHiddenVariable,
                },
                None,
            ),
        };
        Ok(Self {
            scenario,
            streams: StreamFactory::new(scenario.seed),
            verdict,
            moving,
        })
    }

    fn trial(&self, index: u64) -> TrialRecord {
        let s = self.scenario;
        let mut lambda = None;
        let mut multi_psi = None;
        let (pair, oa, ob) = match &s.model {
            ModelSpec::Lhv(m) => {
                let (pair, l, oa, ob) = lhv_trial(m, &s.quad, &self.streams, index);
                lambda = Some(l);
                (pair, oa, ob)
            }
            ModelSpec::Collapse(m) => {
                let pair = choose_settings(&self.streams, index);
                let (a, b) = s.quad.settings(pair);
                let mut rng = self.streams.stream(index, Purpose::Source);
                match (m, self.moving, self.verdict.correlated) {
                    (CollapseModel::PerFrameStateVector, Some(station), false) => {
                        let mp = generate_multi_psi(station, &s.state, a, b, &mut rng);
                        multi_psi = Some(mp);
                        match station {
                            Station::A => (pair, mp.moving, mp.remote),
                            Station::B => (pair, mp.remote, mp.moving),
                        }
                    }
                    _ => {
                        let (oa, ob) =
                            generate_outcomes(m, &self.verdict, self.moving, &s.state, a, b, &mut rng);
                        (pair, oa, ob)
                    }
                }
            }
        };
        let mut det = self.streams.stream(index, Purpose::Detectors);
        let ua: f64 = det.random();
        let ub: f64 = det.random();
        let thin = |o: Outcome, u: f64, eff: f64| if u < eff { o } else { Outcome::NoDetection };
        let (setting_a, setting_b) = s.quad.settings(pair);
        TrialRecord {
            index,
            pair,
            setting_a,
            setting_b,
            outcome_a: thin(oa, ua, s.efficiency[0]),
            outcome_b: thin(ob, ub, s.efficiency[1]),
            verdict: self.verdict,
            lambda,
            multi_psi,
        }
    }

    fn tally_block(&self, block: u64) -> Tally {
        let mut t = Tally::default();
        let end = ((block + 1) * BLOCK).min(self.scenario.trials);
        for index in block * BLOCK..end {
            t.record(&self.trial(index));
        }
        t
    }
}

/// Runs on the global rayon pool.
pub fn run(scenario: &Scenario) -> Result<ResultSet> {
    let plan = Plan::new(scenario)?;
    finish(accumulate(&plan), plan.moving)
}

/// Runs on a dedicated pool of `workers` threads.
pub fn run_with(scenario: &Scenario, workers: usize) -> Result<ResultSet> {
    let plan = Plan::new(scenario)?;
    let tally = pool(workers)?.install(|| accumulate(&plan));
    finish(tally, plan.moving)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::InvalidInput("worker count must be ≥ 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))
}

fn accumulate(plan: &Plan<'_>) -> Tally {
    let blocks = plan.scenario.trials.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| plan.tally_block(b))
        .reduce(Tally::default, Tally::merge)
}

fn finish(tally: Tally, moving: Option<Station>) -> Result<ResultSet> {
    let results = ResultSet::from_tally(tally, moving);
    for pair in SettingPair::ALL {
        let n = results.coincidences[pair.index()].total();
        if n < MIN_PAIR_COINCIDENCES {
            return Err(Error::InsufficientStatistics {
                pair,
                coincidences: n,
                required: MIN_PAIR_COINCIDENCES,
                results: Some(Box::new(results)),
            });
        }
    }
    Ok(results)
}

/// Regenerates the named trials without running the others.
pub fn replay(scenario: &Scenario, indices: &[u64]) -> Result<Vec<TrialRecord>> {
    let plan = Plan::new(scenario)?;
    check_indices(scenario, indices)?;
    Ok(indices.par_iter().map(|&i| plan.trial(i)).collect())
}

pub fn replay_with(scenario: &Scenario, indices: &[u64], workers: usize) -> Result<Vec<TrialRecord>> {
    let plan = Plan::new(scenario)?;
    check_indices(scenario, indices)?;
    Ok(pool(workers)?.install(|| indices.par_iter().map(|&i| plan.trial(i)).collect()))
}

fn check_indices(scenario: &Scenario, indices: &[u64]) -> Result<()> {
    match indices.iter().find(|&&i| i >= scenario.trials) {
        Some(&index) => Err(Error::IndexOutOfRange {
            index,
            trials: scenario.trials,
        }),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairReport {
    pub pair: String,
    pub trials: u64,
    pub coincidences: u64,
    pub e: Option<f64>,
    pub stderr: Option<f64>,
    pub undersampled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerdictShare {
    pub reason: String,
    pub trials: u64,
    pub fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StationSingles {
    pub plus_rate: f64,
    pub minus_rate: f64,
    pub none_rate: f64,
}

impl StationSingles {
    fn from_counts(c: &SinglesCounts) -> Self {
        let n = c.total().max(1) as f64;
        Self {
            plus_rate: c.plus as f64 / n,
            minus_rate: c.minus as f64 / n,
            none_rate: c.none as f64 / n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MultiPsiReport {
    pub moving_station: Station,
    pub trials: u64,
    pub double_detection_rate: f64,
    pub no_detection_rate: f64,
    pub moving_detector_rate: f64,
    pub static_chain_detector_rate: f64,
    pub moving_remote_correlation: f64,
    pub moving_remote_stderr: f64,
    pub static_remote_correlation: f64,
    pub static_remote_stderr: f64,
}

/// Human- and machine-readable summary of a [`ResultSet`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub trials: u64,
    pub s: Option<f64>,
    pub abs_s: Option<f64>,
    pub stderr: Option<f64>,
    pub z_score: Option<f64>,
    pub violates_local: bool,
    pub pairs: Vec<PairReport>,
    pub undersampled: Vec<String>,
    pub verdicts: Vec<VerdictShare>,
    pub singles_a: StationSingles,
    pub singles_b: StationSingles,
    pub detected_pair_fraction: f64,
    pub multi_psi: Option<MultiPsiReport>,
}

pub fn summarize(results: &ResultSet) -> Report {
    let pairs: Vec<PairReport> = SettingPair::ALL
        .iter()
        .map(|p| {
            let k = p.index();
            let est = results.estimates[k];
            let n = results.coincidences[k].total();
            PairReport {
                pair: p.label().to_string(),
                trials: results.pair_trials[k],
                coincidences: n,
                e: est.map(|e| e.e),
                stderr: est.map(|e| e.stderr),
                undersampled: n < MIN_PAIR_COINCIDENCES,
            }
        })
        .collect();
    let undersampled = pairs
        .iter()
        .filter(|p| p.undersampled)
        .map(|p| p.pair.clone())
        .collect();
    let total = results.trials.max(1) as f64;
    let verdicts = results
        .verdicts
        .iter()
        .map(|(r, &n)| VerdictShare {
            reason: r.label().to_string(),
            trials: n,
            fraction: n as f64 / total,
        })
        .collect();
    let multi_psi = match (results.moving_station, &results.multi_psi) {
        (Some(station), Some(m)) => {
            let n = m.trials.max(1) as f64;
            let mr = m.moving_remote.estimate();
            let sr = m.static_remote.estimate();
            Some(MultiPsiReport {
                moving_station: station,
                trials: m.trials,
                double_detection_rate: m.double_detection as f64 / n,
                no_detection_rate: m.no_detection as f64 / n,
                moving_detector_rate: m.moving_detector as f64 / n,
                static_chain_detector_rate: m.static_chain_detector as f64 / n,
                moving_remote_correlation: mr.map_or(0.0, |e| e.e),
                moving_remote_stderr: mr.map_or(0.0, |e| e.stderr),
                static_remote_correlation: sr.map_or(0.0, |e| e.e),
                static_remote_stderr: sr.map_or(0.0, |e| e.stderr),
            })
        }
        _ => None,
    };
    Report {
        trials: results.trials,
        s: results.chsh.map(|c| c.result.s),
        abs_s: results.chsh.map(|c| c.result.abs_s),
        stderr: results.chsh.map(|c| c.stderr),
        z_score: results.chsh.map(|c| c.z_score()),
        violates_local: results.chsh.is_some_and(|c| c.result.violates_local),
        pairs,
        undersampled,
        verdicts,
        singles_a: StationSingles::from_counts(&results.singles[0]),
        singles_b: StationSingles::from_counts(&results.singles[1]),
        detected_pair_fraction: results.detected_pair_fraction,
        multi_psi,
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trials: {}", self.trials)?;
        match (self.s, self.stderr, self.z_score) {
            (Some(s), Some(se), Some(z)) => {
                writeln!(f, "S = {s:.4} ± {se:.4}  (|S| − 2 = {z:.1}σ)")?;
                let verdict = if self.violates_local {
                    "violates the local bound"
                } else {
                    "within the local bound"
                };
                writeln!(f, "{verdict}")?;
            }
            _ => writeln!(f, "S undetermined")?,
        }
        for p in &self.pairs {
            match (p.e, p.stderr) {
                (Some(e), Some(se)) => writeln!(
                    f,
                    "  E({}) = {e:+.4} ± {se:.4}  [{} coincidences]",
                    p.pair, p.coincidences
                )?,
                _ => writeln!(f, "  E({}) UNDERSAMPLED  [{} coincidences]", p.pair, p.coincidences)?,
            }
        }
        writeln!(f, "verdicts:")?;
        for v in &self.verdicts {
            writeln!(f, "  {:<24} {:>10}  {:6.2}%", v.reason, v.trials, 100.0 * v.fraction)?;
        }
        for (name, s) in [("A", &self.singles_a), ("B", &self.singles_b)] {
            writeln!(
                f,
                "singles {name}: +1 {:.4}  −1 {:.4}  none {:.4}",
                s.plus_rate, s.minus_rate, s.none_rate
            )?;
        }
        writeln!(f, "detected pair fraction: {:.4}", self.detected_pair_fraction)?;
        if let Some(m) = &self.multi_psi {
            writeln!(
                f,
                "moving station {:?}: double {:.4}  none {:.4}  moving/remote E {:+.4} ± {:.4}",
                m.moving_station,
                m.double_detection_rate,
                m.no_detection_rate,
                m.moving_remote_correlation,
                m.moving_remote_stderr
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spacetime::SpacetimeEvent;

    fn standard(trials: u64, seed: u64) -> Scenario {
        let g = |x| StationGeometry::at_rest(SpacetimeEvent::on_axis(0.0, x), 0.0).unwrap();
        Scenario {
            state: TwoQubitState::singlet(),
            model: ModelSpec::Collapse(CollapseModel::StandardQm),
            quad: SettingQuad::standard(),
            geometry: [g(0.0), g(10_600.0)],
            efficiency: [1.0, 1.0],
            trials,
            seed,
        }
    }

    #[test]
    fn replay_matches_itself() {
        let s = standard(100, 9);
        assert_eq!(replay(&s, &[0]).unwrap(), replay(&s, &[0]).unwrap());
        assert!(matches!(
            replay(&s, &[100]),
            Err(Error::IndexOutOfRange { index: 100, trials: 100 })
        ));
    }

    #[test]
    fn tiny_run_is_undersampled() {
        let s = standard(3, 1);
        match run(&s) {
            Err(Error::InsufficientStatistics { results: Some(r), .. }) => {
                let rep = summarize(&r);
                assert!(!rep.undersampled.is_empty());
                assert!(rep.s.is_none());
            }
            other => panic!("expected insufficient statistics, got {other:?}"),
        }
    }

    #[test]
    fn invalid_scenarios() {
        let mut s = standard(10, 1);
        s.efficiency = [0.0, 1.0];
        assert!(run(&s).is_err());
        let mut s = standard(0, 1);
        s.trials = 0;
        assert!(run(&s).is_err());
        assert!(run_with(&standard(10, 1), 0).is_err());
    }

    #[test]
    fn efficiency_thins_detections() {
        let mut s = standard(40_000, 5);
        s.efficiency = [0.5, 0.5];
        let r = run(&s).unwrap();
        assert!((r.detected_pair_fraction - 0.25).abs() < 0.01);
        let none = r.singles[0].none as f64 / r.trials as f64;
        assert!((none - 0.5).abs() < 0.01);
    }
}
