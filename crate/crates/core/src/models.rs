//! Collapse-frame hypotheses as per-trial correlation rules.
//!
//! Each hypothesis decides, from the device geometry alone, whether a trial
//! shows the quantum correlation. When it does not, both stations still
//! answer with their exact Born marginals, so singles rates and
//! no-signaling are untouched and only the nonlocal correlation disappears.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lhv::Station;
use crate::qstate::{AnalyzerSetting, Outcome, Sign, TwoQubitState};
use crate::spacetime::{before_before, min_required_speed, Frame, SpacetimeEvent};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CollapseModel {
    /// No collapse chronology: always correlated.
    StandardQm,
    /// Collapse propagates at `v_qi` (multiples of c) in one fixed frame.
    PreferredFrame { frame: Frame, v_qi: f64 },
    /// Chronology set by the rest frame of each absorbing or detecting
    /// device.
    TriggerDeviceFrame,
    /// Chronology set by the rest frame of each beam splitter or analyzer.
    ChoiceDeviceFrame,
    /// One state vector per frame: devices in relative motion see different
    /// state vectors.
    PerFrameStateVector,
}

impl CollapseModel {
    pub fn preferred_frame(frame: Frame, v_qi: f64) -> Result<Self> {
        if !(v_qi > 1.0) {
            return Err(Error::InvalidInput(format!(
                "v_QI must be superluminal (> 1 c), got {v_qi}"
            )));
        }
        Ok(Self::PreferredFrame { frame, v_qi })
    }

    pub fn name(&self) -> &'static str {
        match self {
            CollapseModel::StandardQm => "standard_qm",
            CollapseModel::PreferredFrame { .. } => "preferred_frame",
            CollapseModel::TriggerDeviceFrame => "trigger_device_frame",
            CollapseModel::ChoiceDeviceFrame => "choice_device_frame",
            CollapseModel::PerFrameStateVector => "per_frame_state_vector",
        }
    }
}

/// Where and when the particle meets each device at one station.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationGeometry {
    /// Analyzer or beam splitter.
    pub choice_event: SpacetimeEvent,
    /// Earliest irreversible interaction (absorber or detector).
    pub trigger_event: SpacetimeEvent,
    pub choice_frame: Frame,
    pub trigger_frame: Frame,
    /// Seconds.
    pub alignment_uncertainty: f64,
}

impl StationGeometry {
    pub fn new(
        choice_event: SpacetimeEvent,
        trigger_event: SpacetimeEvent,
        choice_frame: Frame,
        trigger_frame: Frame,
        alignment_uncertainty: f64,
    ) -> Result<Self> {
        if trigger_event.t < choice_event.t {
            return Err(Error::InvalidInput(
                "trigger event precedes the choice event in the lab frame".into(),
            ));
        }
        if !(alignment_uncertainty >= 0.0) || !alignment_uncertainty.is_finite() {
            return Err(Error::InvalidInput(format!(
                "alignment uncertainty must be finite and ≥ 0, got {alignment_uncertainty}"
            )));
        }
        Ok(Self {
            choice_event,
            trigger_event,
            choice_frame,
            trigger_frame,
            alignment_uncertainty,
        })
    }

    /// All devices at rest in the lab, both events at `event`.
    pub fn at_rest(event: SpacetimeEvent, alignment_uncertainty: f64) -> Result<Self> {
        Self::new(event, event, Frame::lab(), Frame::lab(), alignment_uncertainty)
    }

    fn frames(&self) -> [Frame; 2] {
        [self.choice_frame, self.trigger_frame]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictReason {
    Standard,
    InfluenceArrives,
    InfluenceTooSlow,
    BeforeBeforeTrigger,
    OrderedTrigger,
    BeforeBeforeChoice,
    OrderedChoice,
    CommonFrame,
    /// The moving station's devices see a different state vector.
    DistinctStateVectors,
    LocalHiddenVariable,
}

impl VerdictReason {
    pub fn label(self) -> &'static str {
        match self {
            VerdictReason::Standard => "STANDARD",
            VerdictReason::InfluenceArrives => "INFLUENCE_ARRIVES",
            VerdictReason::InfluenceTooSlow => "INFLUENCE_TOO_SLOW",
            VerdictReason::BeforeBeforeTrigger => "BEFORE_BEFORE_TRIGGER",
            VerdictReason::OrderedTrigger => "ORDERED_TRIGGER",
            VerdictReason::BeforeBeforeChoice => "BEFORE_BEFORE_CHOICE",
            VerdictReason::OrderedChoice => "ORDERED_CHOICE",
            VerdictReason::CommonFrame => "COMMON_FRAME",
            VerdictReason::DistinctStateVectors => "DISTINCT_STATE_VECTORS",
            VerdictReason::LocalHiddenVariable => "LOCAL_HIDDEN_VARIABLE",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialVerdict {
    pub correlated: bool,
    pub reason: VerdictReason,
}

impl TrialVerdict {
    fn new(correlated: bool, reason: VerdictReason) -> Self {
        Self { correlated, reason }
    }
}

pub fn trial_verdict(
    model: &CollapseModel,
    a: &StationGeometry,
    b: &StationGeometry,
) -> TrialVerdict {
    let uncertainty = a.alignment_uncertainty.max(b.alignment_uncertainty);
    match model {
        CollapseModel::StandardQm => TrialVerdict::new(true, VerdictReason::Standard),
        CollapseModel::PreferredFrame { frame, v_qi } => {
            let needed = min_required_speed(&a.trigger_event, &b.trigger_event, frame, uncertainty);
            if needed <= *v_qi {
                TrialVerdict::new(true, VerdictReason::InfluenceArrives)
            } else {
                TrialVerdict::new(false, VerdictReason::InfluenceTooSlow)
            }
        }
        CollapseModel::TriggerDeviceFrame => {
            let bb = before_before(
                &a.trigger_event,
                &b.trigger_event,
                &a.trigger_frame,
                &b.trigger_frame,
                uncertainty,
            )
            .expect("uncertainty validated by StationGeometry");
            if bb {
                TrialVerdict::new(false, VerdictReason::BeforeBeforeTrigger)
            } else {
                TrialVerdict::new(true, VerdictReason::OrderedTrigger)
            }
        }
        CollapseModel::ChoiceDeviceFrame => {
            let bb = before_before(
                &a.choice_event,
                &b.choice_event,
                &a.choice_frame,
                &b.choice_frame,
                uncertainty,
            )
            .expect("uncertainty validated by StationGeometry");
            if bb {
                TrialVerdict::new(false, VerdictReason::BeforeBeforeChoice)
            } else {
                TrialVerdict::new(true, VerdictReason::OrderedChoice)
            }
        }
        CollapseModel::PerFrameStateVector => {
            let first = a.choice_frame;
            let shared = a.frames().iter().chain(b.frames().iter()).all(|f| *f == first);
            if shared {
                TrialVerdict::new(true, VerdictReason::CommonFrame)
            } else {
                TrialVerdict::new(false, VerdictReason::DistinctStateVectors)
            }
        }
    }
}

/// The station carrying the device that is in motion relative to the
/// others, or `None` when every device shares one frame.
///
/// Errors when the devices span more than two frames or both stations
/// contain moving devices.
pub fn moving_station(a: &StationGeometry, b: &StationGeometry) -> Result<Option<Station>> {
    let uniform = |s: &StationGeometry| (s.choice_frame == s.trigger_frame).then_some(s.choice_frame);
    let in_frame = |s: &StationGeometry, f: Frame| s.frames().iter().all(|x| *x == f);
    match (uniform(a), uniform(b)) {
        (Some(fa), Some(fb)) if fa == fb => Ok(None),
        (Some(fa), _) if !in_frame(b, fa) && two_frames(a, b) => Ok(Some(Station::B)),
        (_, Some(fb)) if !in_frame(a, fb) && two_frames(a, b) => Ok(Some(Station::A)),
        _ => Err(Error::InvalidInput(
            "one-state-vector-per-frame supports a single moving station with two frames in total"
                .into(),
        )),
    }
}

fn two_frames(a: &StationGeometry, b: &StationGeometry) -> bool {
    let mut distinct: Vec<Frame> = Vec::new();
    for f in a.frames().into_iter().chain(b.frames()) {
        if !distinct.contains(&f) {
            distinct.push(f);
        }
    }
    distinct.len() == 2
}

/// Samples both stations' outcomes for a trial.
///
/// Correlated trials draw from the joint Born distribution. Uncorrelated
/// trials draw each station independently from its Born marginal; under
/// [`CollapseModel::PerFrameStateVector`] this is the moving detector's
/// reading against the distant station, see [`generate_multi_psi`].
pub fn generate_outcomes<R: Rng + ?Sized>(
    model: &CollapseModel,
    verdict: &TrialVerdict,
    moving: Option<Station>,
    state: &TwoQubitState,
    a: AnalyzerSetting,
    b: AnalyzerSetting,
    rng: &mut R,
) -> (Outcome, Outcome) {
    if verdict.correlated {
        let (sa, sb) = state.joint_probability(a, b).sample(rng.random());
        return (sa.into(), sb.into());
    }
    if let (CollapseModel::PerFrameStateVector, Some(station)) = (model, moving) {
        let m = generate_multi_psi(station, state, a, b, rng);
        return match station {
            Station::A => (m.moving, m.remote),
            Station::B => (m.remote, m.moving),
        };
    }
    let pa = state.marginal_a(a);
    let pb = state.marginal_b(b);
    let sa = bernoulli_sign(pa, rng.random());
    let sb = bernoulli_sign(pb, rng.random());
    (sa.into(), sb.into())
}

fn bernoulli_sign(p_plus: f64, u: f64) -> Sign {
    if u < p_plus {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

/// One trial under one state vector per frame.
///
/// At the moving station the analyzer's `+1` port feeds the moving
/// detector, which collapses only ψ₁; the `−1` port feeds a detector at
/// rest, which like the distant station sees ψ₂.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiPsiOutcome {
    /// ψ₁ reading at the moving station (`+1`: moving detector fired).
    pub moving: Outcome,
    /// ψ₂ reading at the moving station (`−1`: its static detector fired).
    pub moving_static_chain: Outcome,
    /// ψ₂ reading at the distant static station.
    pub remote: Outcome,
    /// Both detectors at the moving station registered the particle.
    pub double_detection: bool,
    /// Neither detector at the moving station registered it.
    pub no_detection: bool,
}

impl MultiPsiOutcome {
    pub fn moving_detector_fired(&self) -> bool {
        self.moving == Outcome::Plus
    }

    pub fn static_chain_fired(&self) -> bool {
        self.moving_static_chain == Outcome::Minus
    }
}

/// ψ₁ gives the moving detector a reading drawn from the moving station's
/// marginal alone. ψ₂ gives the static detectors a jointly distributed
/// Born pair, so each detector keeps its standard mean count rate while the
/// moving detector is uncorrelated with everything else.
pub fn generate_multi_psi<R: Rng + ?Sized>(
    moving_station: Station,
    state: &TwoQubitState,
    a: AnalyzerSetting,
    b: AnalyzerSetting,
    rng: &mut R,
) -> MultiPsiOutcome {
    let p_moving_plus = match moving_station {
        Station::A => state.marginal_a(a),
        Station::B => state.marginal_b(b),
    };
    let psi1 = bernoulli_sign(p_moving_plus, rng.random());
    let (sa, sb) = state.joint_probability(a, b).sample(rng.random());
    let (psi2_moving, psi2_remote) = match moving_station {
        Station::A => (sa, sb),
        Station::B => (sb, sa),
    };
    let moving_fired = psi1 == Sign::Plus;
    let static_fired = psi2_moving == Sign::Minus;
    MultiPsiOutcome {
        moving: psi1.into(),
        moving_static_chain: psi2_moving.into(),
        remote: psi2_remote.into(),
        double_detection: moving_fired && static_fired,
        no_detection: !moving_fired && !static_fired,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spacetime::{balanced_lab_offset, Vec3, C};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    const L: f64 = 10_600.0;

    fn simultaneous(jitter: f64) -> (StationGeometry, StationGeometry) {
        (
            StationGeometry::at_rest(SpacetimeEvent::on_axis(0.0, 0.0), jitter).unwrap(),
            StationGeometry::at_rest(SpacetimeEvent::on_axis(0.0, L), jitter).unwrap(),
        )
    }

    fn wheel(speed: f64, uncertainty: f64) -> (StationGeometry, StationGeometry) {
        let fb = Frame::along_x(speed).unwrap();
        let d = balanced_lab_offset(&Vec3::new(L, 0.0, 0.0), &Frame::lab(), &fb);
        let a = StationGeometry::at_rest(SpacetimeEvent::on_axis(0.0, 0.0), uncertainty).unwrap();
        let eb = SpacetimeEvent::on_axis(d, L);
        let b = StationGeometry::new(eb, eb, Frame::lab(), fb, uncertainty).unwrap();
        (a, b)
    }

    #[test]
    fn standard_always_correlated() {
        let (a, b) = wheel(100.0, 1e-3 / C);
        assert!(trial_verdict(&CollapseModel::StandardQm, &a, &b).correlated);
    }

    #[test]
    fn lab_preferred_frame_disappearance() {
        let (a, b) = simultaneous(5e-12);
        let slow = CollapseModel::preferred_frame(Frame::lab(), 1e4).unwrap();
        let v = trial_verdict(&slow, &a, &b);
        assert_eq!(v, TrialVerdict::new(false, VerdictReason::InfluenceTooSlow));
        let fast = CollapseModel::preferred_frame(Frame::lab(), 1e8).unwrap();
        assert!(trial_verdict(&fast, &a, &b).correlated);
        let inf = CollapseModel::preferred_frame(Frame::lab(), f64::INFINITY).unwrap();
        assert!(trial_verdict(&inf, &a, &b).correlated);
        assert!(CollapseModel::preferred_frame(Frame::lab(), 0.5).is_err());
    }

    #[test]
    fn trigger_frame_before_before_on_wheel() {
        let (a, b) = wheel(100.0, 1e-3 / C);
        let v = trial_verdict(&CollapseModel::TriggerDeviceFrame, &a, &b);
        assert_eq!(v, TrialVerdict::new(false, VerdictReason::BeforeBeforeTrigger));
        // the analyzers are static, so the choice-device model keeps order
        let v = trial_verdict(&CollapseModel::ChoiceDeviceFrame, &a, &b);
        assert!(v.correlated);
        let (a, b) = wheel(10.0, 1e-3 / C);
        assert!(trial_verdict(&CollapseModel::TriggerDeviceFrame, &a, &b).correlated);
    }

    #[test]
    fn moving_beam_splitters() {
        let fb = Frame::along_x(100.0).unwrap();
        let d = balanced_lab_offset(&Vec3::new(L, 0.0, 0.0), &Frame::lab(), &fb);
        let a = StationGeometry::at_rest(SpacetimeEvent::on_axis(0.0, 0.0), 1e-3 / C).unwrap();
        let eb = SpacetimeEvent::on_axis(d, L);
        let b = StationGeometry::new(eb, eb, fb, Frame::lab(), 1e-3 / C).unwrap();
        let v = trial_verdict(&CollapseModel::ChoiceDeviceFrame, &a, &b);
        assert_eq!(v.reason, VerdictReason::BeforeBeforeChoice);
        assert!(trial_verdict(&CollapseModel::TriggerDeviceFrame, &a, &b).correlated);
    }

    #[test]
    fn per_frame_state_vector_verdicts() {
        let (a, b) = simultaneous(0.0);
        assert!(trial_verdict(&CollapseModel::PerFrameStateVector, &a, &b).correlated);
        assert_eq!(moving_station(&a, &b).unwrap(), None);
        let (a, b) = wheel(100.0, 0.0);
        let v = trial_verdict(&CollapseModel::PerFrameStateVector, &a, &b);
        assert_eq!(v.reason, VerdictReason::DistinctStateVectors);
        assert_eq!(moving_station(&a, &b).unwrap(), Some(Station::B));
        assert_eq!(moving_station(&b, &a).unwrap(), Some(Station::A));
    }

    #[test]
    fn three_frames_rejected() {
        let (mut a, b) = wheel(100.0, 0.0);
        a.trigger_frame = Frame::along_x(-50.0).unwrap();
        assert!(moving_station(&a, &b).is_err());
    }

    #[test]
    fn geometry_requires_choice_before_trigger() {
        let e = SpacetimeEvent::on_axis(0.0, 0.0);
        assert!(StationGeometry::new(e.shifted(1e-9), e, Frame::lab(), Frame::lab(), 0.0).is_err());
        assert!(StationGeometry::new(e, e, Frame::lab(), Frame::lab(), -1.0).is_err());
    }

    #[test]
    fn verdict_is_pure() {
        let (a, b) = wheel(100.0, 3e-12);
        for m in [
            CollapseModel::TriggerDeviceFrame,
            CollapseModel::preferred_frame(Frame::along_x(3.7e5).unwrap(), 2e4).unwrap(),
        ] {
            assert_eq!(trial_verdict(&m, &a, &b), trial_verdict(&m, &a, &b));
        }
    }

    #[test]
    fn correlated_singlet_equal_settings_opposite() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = TrialVerdict::new(true, VerdictReason::Standard);
        let s = TwoQubitState::singlet();
        for _ in 0..10_000 {
            let (x, y) = generate_outcomes(&CollapseModel::StandardQm, &v, None, &s, 0.0.into(), 0.0.into(), &mut rng);
            assert_eq!(x.product(y).unwrap(), -1);
        }
    }

    #[test]
    fn uncorrelated_singlet_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = CollapseModel::TriggerDeviceFrame;
        let v = TrialVerdict::new(false, VerdictReason::BeforeBeforeTrigger);
        let s = TwoQubitState::singlet();
        let n = 1_000_000;
        let (mut prod, mut plus_a, mut plus_b) = (0i64, 0u64, 0u64);
        for _ in 0..n {
            let (x, y) = generate_outcomes(&model, &v, None, &s, 0.0.into(), FRAC_PI_4.into(), &mut rng);
            prod += x.product(y).unwrap() as i64;
            plus_a += (x == Outcome::Plus) as u64;
            plus_b += (y == Outcome::Plus) as u64;
        }
        assert!((prod as f64 / n as f64).abs() < 0.005);
        assert!((plus_a as f64 / n as f64 - 0.5).abs() < 0.002);
        assert!((plus_b as f64 / n as f64 - 0.5).abs() < 0.002);
    }

    #[test]
    fn multi_psi_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = TwoQubitState::singlet();
        let n = 1_000_000u64;
        let (mut prod, mut double, mut none, mut moving_fired, mut chain_fired) = (0i64, 0u64, 0u64, 0u64, 0u64);
        let (mut chain_remote, mut remote_plus) = (0i64, 0u64);
        for _ in 0..n {
            let m = generate_multi_psi(Station::B, &s, 0.0.into(), FRAC_PI_4.into(), &mut rng);
            prod += m.moving.product(m.remote).unwrap() as i64;
            chain_remote += m.moving_static_chain.product(m.remote).unwrap() as i64;
            double += m.double_detection as u64;
            none += m.no_detection as u64;
            moving_fired += m.moving_detector_fired() as u64;
            chain_fired += m.static_chain_fired() as u64;
            remote_plus += (m.remote == Outcome::Plus) as u64;
        }
        let nf = n as f64;
        let e = prod as f64 / nf;
        assert!(e.abs() < 3.0 / nf.sqrt(), "moving/remote correlation {e}");
        assert!((double as f64 / nf - 0.25).abs() < 0.002);
        assert!((none as f64 / nf - 0.25).abs() < 0.002);
        let sigma = (0.25 / nf).sqrt();
        assert!((moving_fired as f64 / nf - 0.5).abs() < 3.0 * sigma);
        assert!((chain_fired as f64 / nf - 0.5).abs() < 3.0 * sigma);
        assert!((remote_plus as f64 / nf - 0.5).abs() < 3.0 * sigma);
        // static detectors keep the quantum correlation: −cos(π/4)
        let e_static = chain_remote as f64 / nf;
        assert!((e_static + FRAC_PI_4.cos()).abs() < 0.005);
    }
}
