//! Two-qubit pure states and their measurement statistics.
//!
//! Amplitudes are stored in the ordered product basis
//! `(1,1), (1,2), (2,1), (2,2)`, where `1` and `2` label the two basis
//! states of each subsystem. A measurement at analyzer angle `θ` has the
//! eigenvectors
//!
//! ```text
//! |+θ⟩ =  cos(θ/2)|1⟩ + sin(θ/2)|2⟩
//! |−θ⟩ = −sin(θ/2)|1⟩ + cos(θ/2)|2⟩
//! ```
//!
//! (spin-1/2 convention), so the singlet has `E(a, b) = −cos(a − b)`.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Normalization tolerance for states handed in from outside.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Probabilities below this are treated as an impossible branch.
const ZERO_BRANCH: f64 = 1e-15;

/// One analysis direction, canonicalized into `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnalyzerSetting(f64);

impl AnalyzerSetting {
    pub fn new(angle: f64) -> Self {
        let mut a = angle.rem_euclid(TAU);
        // rem_euclid can round up to TAU for tiny negative inputs.
        if a >= TAU {
            a = 0.0;
        }
        Self(a)
    }

    pub fn angle(self) -> f64 {
        self.0
    }

    /// Eigenvector of the given outcome, real in the product basis.
    fn eigenvector(self, outcome: Sign) -> [f64; 2] {
        let (s, c) = (self.0 / 2.0).sin_cos();
        match outcome {
            Sign::Plus => [c, s],
            Sign::Minus => [-s, c],
        }
    }
}

impl From<f64> for AnalyzerSetting {
    fn from(angle: f64) -> Self {
        Self::new(angle)
    }
}

/// A registered `±1` result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn value(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn from_value(v: i32) -> Result<Self> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(Error::Domain(format!("expected ±1, got {other}"))),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    fn index(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }
}

/// What a station reports for one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
    NoDetection,
}

impl Outcome {
    pub fn sign(self) -> Option<Sign> {
        match self {
            Outcome::Plus => Some(Sign::Plus),
            Outcome::Minus => Some(Sign::Minus),
            Outcome::NoDetection => None,
        }
    }

    pub fn is_detected(self) -> bool {
        self != Outcome::NoDetection
    }

    /// Product of two detected outcomes; undetected outcomes never enter a
    /// correlation.
    pub fn product(self, other: Outcome) -> Result<i8> {
        match (self.sign(), other.sign()) {
            (Some(a), Some(b)) => Ok(a.value() * b.value()),
            _ => Err(Error::Domain(
                "NO_DETECTION cannot enter a correlation product".into(),
            )),
        }
    }
}

impl From<Sign> for Outcome {
    fn from(s: Sign) -> Self {
        match s {
            Sign::Plus => Outcome::Plus,
            Sign::Minus => Outcome::Minus,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Plus => "+1",
            Outcome::Minus => "-1",
            Outcome::NoDetection => "none",
        })
    }
}

/// Born-rule probabilities of the four joint `±1` outcomes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointDistribution {
    /// Ordered `(+,+), (+,−), (−,+), (−,−)`.
    pub p: [f64; 4],
}

impl JointDistribution {
    pub fn get(&self, a: Sign, b: Sign) -> f64 {
        self.p[2 * a.index() + b.index()]
    }

    pub fn marginal_a(&self, a: Sign) -> f64 {
        self.get(a, Sign::Plus) + self.get(a, Sign::Minus)
    }

    pub fn marginal_b(&self, b: Sign) -> f64 {
        self.get(Sign::Plus, b) + self.get(Sign::Minus, b)
    }

    pub fn correlation(&self) -> f64 {
        let e = self.p[0] - self.p[1] - self.p[2] + self.p[3];
        e.clamp(-1.0, 1.0)
    }

    /// Inverse-CDF draw in the fixed `(+,+), (+,−), (−,+), (−,−)` order.
    pub fn sample(&self, u: f64) -> (Sign, Sign) {
        const ORDER: [(Sign, Sign); 4] = [
            (Sign::Plus, Sign::Plus),
            (Sign::Plus, Sign::Minus),
            (Sign::Minus, Sign::Plus),
            (Sign::Minus, Sign::Minus),
        ];
        let mut acc = 0.0;
        for (k, &pair) in ORDER.iter().enumerate() {
            acc += self.p[k];
            if u < acc {
                return pair;
            }
        }
        // u landed in the rounding gap above the cumulative sum
        ORDER
            .iter()
            .rev()
            .zip(self.p.iter().rev())
            .find(|(_, &p)| p > 0.0)
            .map(|(&pair, _)| pair)
            .unwrap_or(ORDER[3])
    }
}

/// A pure single-qubit state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitState {
    pub amplitudes: [Complex64; 2],
}

impl QubitState {
    pub fn probability(&self, setting: AnalyzerSetting, outcome: Sign) -> f64 {
        let e = setting.eigenvector(outcome);
        (self.amplitudes[0] * e[0] + self.amplitudes[1] * e[1]).norm_sqr()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Outcome of measuring subsystem A: the branch probability and the state
/// left behind on B. `conditional` is `None` for an impossible branch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Collapse {
    pub probability: f64,
    pub conditional: Option<QubitState>,
}

/// Named constructors accepted by [`make_state`].
#[derive(Clone, Debug, PartialEq)]
pub enum StateSpec {
    Singlet,
    /// Unnormalized amplitudes in the product basis.
    Raw(Vec<Complex64>),
}

pub fn make_state(spec: &StateSpec) -> Result<TwoQubitState> {
    match spec {
        StateSpec::Singlet => Ok(TwoQubitState::singlet()),
        StateSpec::Raw(amps) => {
            let arr: [Complex64; 4] = amps.as_slice().try_into().map_err(|_| {
                Error::InvalidState(format!("expected 4 amplitudes, got {}", amps.len()))
            })?;
            TwoQubitState::from_amplitudes(arr)
        }
    }
}

/// Normalized pure state of two two-level systems.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitState {
    amplitudes: [Complex64; 4],
}

impl TwoQubitState {
    /// `(|12⟩ − |21⟩)/√2`
    pub fn singlet() -> Self {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        Self {
            amplitudes: [z, h, -h, z],
        }
    }

    /// Normalizes the given amplitudes. Rejects all-zero and non-finite input.
    pub fn from_amplitudes(amplitudes: [Complex64; 4]) -> Result<Self> {
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidState("non-finite amplitude".into()));
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidState("all amplitudes are zero".into()));
        }
        Ok(Self {
            amplitudes: amplitudes.map(|a| a / norm),
        })
    }

    pub fn from_real(amplitudes: [f64; 4]) -> Result<Self> {
        Self::from_amplitudes(amplitudes.map(|a| Complex64::new(a, 0.0)))
    }

    /// `α₁⊗β₁ + α₂⊗β₂`, normalized.
    pub fn from_product_terms(
        alpha1: [Complex64; 2],
        beta1: [Complex64; 2],
        alpha2: [Complex64; 2],
        beta2: [Complex64; 2],
    ) -> Result<Self> {
        let mut amps = [Complex64::new(0.0, 0.0); 4];
        for i in 0..2 {
            for j in 0..2 {
                amps[2 * i + j] = alpha1[i] * beta1[j] + alpha2[i] * beta2[j];
            }
        }
        Self::from_amplitudes(amps)
    }

    pub fn amplitudes(&self) -> &[Complex64; 4] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn amp(&self, i: usize, j: usize) -> Complex64 {
        self.amplitudes[2 * i + j]
    }

    pub fn joint_probability(&self, a: AnalyzerSetting, b: AnalyzerSetting) -> JointDistribution {
        let mut p = [0.0; 4];
        for sa in Sign::BOTH {
            let ea = a.eigenvector(sa);
            for sb in Sign::BOTH {
                let eb = b.eigenvector(sb);
                let mut overlap = Complex64::new(0.0, 0.0);
                for i in 0..2 {
                    for j in 0..2 {
                        overlap += self.amp(i, j) * (ea[i] * eb[j]);
                    }
                }
                p[2 * sa.index() + sb.index()] = overlap.norm_sqr();
            }
        }
        JointDistribution { p }
    }

    /// `E(a, b)`, the mean product of the two `±1` outcomes.
    pub fn correlation(&self, a: AnalyzerSetting, b: AnalyzerSetting) -> f64 {
        self.joint_probability(a, b).correlation()
    }

    /// Probability of `+1` at station A; independent of B's setting.
    pub fn marginal_a(&self, a: AnalyzerSetting) -> f64 {
        let e = a.eigenvector(Sign::Plus);
        (0..2)
            .map(|j| (self.amp(0, j) * e[0] + self.amp(1, j) * e[1]).norm_sqr())
            .sum()
    }

    /// Probability of `+1` at station B; independent of A's setting.
    pub fn marginal_b(&self, b: AnalyzerSetting) -> f64 {
        let e = b.eigenvector(Sign::Plus);
        (0..2)
            .map(|i| (self.amp(i, 0) * e[0] + self.amp(i, 1) * e[1]).norm_sqr())
            .sum()
    }

    /// Measures A along `a`, post-selects `outcome`, and returns the branch
    /// probability with the normalized state prepared on B.
    pub fn collapse_after_a(&self, a: AnalyzerSetting, outcome: Sign) -> Collapse {
        let e = a.eigenvector(outcome);
        let unnormalized = [
            self.amp(0, 0) * e[0] + self.amp(1, 0) * e[1],
            self.amp(0, 1) * e[0] + self.amp(1, 1) * e[1],
        ];
        let probability: f64 = unnormalized.iter().map(|c| c.norm_sqr()).sum();
        let conditional = (probability > ZERO_BRANCH).then(|| {
            let n = probability.sqrt();
            QubitState {
                amplitudes: unnormalized.map(|c| c / n),
            }
        });
        Collapse {
            probability,
            conditional,
        }
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOLERANCE
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix2, Matrix4, Vector4};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    /// Independent route: build the projector `P_a ⊗ P_b` as a 4×4 matrix
    /// from the spin operator `cosθ·Z + sinθ·X` and take `⟨ψ|P|ψ⟩`.
    fn projector_probability(psi: &TwoQubitState, a: f64, sa: i8, b: f64, sb: i8) -> f64 {
        let id = Matrix2::<f64>::identity();
        let spin = |t: f64| Matrix2::new(t.cos(), t.sin(), t.sin(), -t.cos());
        let proj = |t: f64, s: i8| (id + spin(t) * s as f64) * 0.5;
        let p: Matrix4<f64> = proj(a, sa).kronecker(&proj(b, sb));
        let amps = psi.amplitudes();
        let re = Vector4::from_iterator(amps.iter().map(|z| z.re));
        let im = Vector4::from_iterator(amps.iter().map(|z| z.im));
        (re.transpose() * p * re)[0] + (im.transpose() * p * im)[0]
    }

    #[test]
    fn singlet_amplitudes() {
        let s = make_state(&StateSpec::Singlet).unwrap();
        let a = s.amplitudes();
        assert_eq!(a[0], c(0.0));
        assert!((a[1].re - 0.70711).abs() < 1e-5);
        assert!((a[2].re + 0.70711).abs() < 1e-5);
        assert_eq!(a[3], c(0.0));
    }

    #[test]
    fn raw_state_is_normalized() {
        let s = make_state(&StateSpec::Raw(vec![c(1.0), c(0.0), c(0.0), c(1.0)])).unwrap();
        let a = s.amplitudes();
        assert!((a[0].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((a[3].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(s.is_normalized());
    }

    #[test]
    fn zero_state_rejected() {
        let err = make_state(&StateSpec::Raw(vec![c(0.0); 4])).unwrap_err();
        assert!(matches!(err, Error::InvalidState(_)));
        assert!(make_state(&StateSpec::Raw(vec![c(1.0); 3])).is_err());
        assert!(TwoQubitState::from_real([f64::NAN, 0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn product_terms_reproduce_singlet() {
        let up = [c(1.0), c(0.0)];
        let down = [c(0.0), c(1.0)];
        let s = TwoQubitState::from_product_terms(up, down, [c(0.0), c(-1.0)], up).unwrap();
        for (x, y) in s.amplitudes().iter().zip(TwoQubitState::singlet().amplitudes()) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn setting_canonicalization() {
        assert_eq!(AnalyzerSetting::new(-FRAC_PI_2).angle(), 3.0 * FRAC_PI_2);
        assert_eq!(AnalyzerSetting::new(TAU).angle(), 0.0);
        assert_eq!(AnalyzerSetting::new(-1e-18).angle(), 0.0);
        assert!((AnalyzerSetting::new(7.0 * PI).angle() - PI).abs() < 1e-14);
    }

    #[test]
    fn singlet_equal_settings_anticorrelated() {
        let d = TwoQubitState::singlet().joint_probability(0.0.into(), 0.0.into());
        let expect = [0.0, 0.5, 0.5, 0.0];
        for (p, e) in d.p.iter().zip(expect) {
            assert!((p - e).abs() < 1e-15);
        }
    }

    #[test]
    fn singlet_orthogonal_settings_uniform() {
        let d = TwoQubitState::singlet().joint_probability(0.0.into(), FRAC_PI_2.into());
        for p in d.p {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn singlet_quarter_turn_matches_projector_oracle() {
        let s = TwoQubitState::singlet();
        let d = s.joint_probability(0.0.into(), FRAC_PI_4.into());
        let expected_pp = (1.0 - 0.70711) / 4.0;
        assert!((d.get(Sign::Plus, Sign::Plus) - expected_pp).abs() < 1e-5);
        assert!((d.get(Sign::Minus, Sign::Minus) - expected_pp).abs() < 1e-5);
        for (sa, ia) in [(Sign::Plus, 1), (Sign::Minus, -1)] {
            for (sb, ib) in [(Sign::Plus, 1), (Sign::Minus, -1)] {
                let oracle = projector_probability(&s, 0.0, ia, FRAC_PI_4, ib);
                assert!((d.get(sa, sb) - oracle).abs() < 1e-14);
            }
        }
        assert!((d.correlation() + FRAC_PI_4.cos()).abs() < 1e-12);
    }

    #[test]
    fn correlation_examples() {
        let s = TwoQubitState::singlet();
        assert!((s.correlation(0.0.into(), 0.0.into()) + 1.0).abs() < 1e-15);
        assert!(s.correlation(0.0.into(), FRAC_PI_2.into()).abs() < 1e-15);
        assert!((s.correlation(0.0.into(), FRAC_PI_3.into()) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn collapse_examples() {
        let s = TwoQubitState::singlet();
        let col = s.collapse_after_a(0.0.into(), Sign::Plus);
        assert!((col.probability - 0.5).abs() < 1e-15);
        let b = col.conditional.unwrap();
        assert!((b.probability(0.0.into(), Sign::Minus) - 1.0).abs() < 1e-15);

        let product = TwoQubitState::from_real([1.0, 0.0, 0.0, 0.0]).unwrap();
        let col = product.collapse_after_a(0.0.into(), Sign::Minus);
        assert_eq!(col.probability, 0.0);
        assert!(col.conditional.is_none());

        let col = s.collapse_after_a(FRAC_PI_4.into(), Sign::Plus);
        assert!((col.probability - 0.5).abs() < 1e-15);
        let b = col.conditional.unwrap();
        assert!((b.probability(FRAC_PI_4.into(), Sign::Minus) - 1.0).abs() < 1e-14);
        // compose with the joint distribution: P(+,−)/P(+) = 1
        let d = s.joint_probability(FRAC_PI_4.into(), FRAC_PI_4.into());
        assert!((d.get(Sign::Plus, Sign::Minus) / col.probability - 1.0).abs() < 1e-14);
    }

    #[test]
    fn outcome_product_rejects_no_detection() {
        assert_eq!(Outcome::Plus.product(Outcome::Minus).unwrap(), -1);
        assert!(Outcome::NoDetection.product(Outcome::Plus).is_err());
        assert!(Sign::from_value(0).is_err());
    }

    #[test]
    fn sampling_covers_distribution() {
        let d = JointDistribution {
            p: [0.1, 0.2, 0.3, 0.4],
        };
        assert_eq!(d.sample(0.05), (Sign::Plus, Sign::Plus));
        assert_eq!(d.sample(0.25), (Sign::Plus, Sign::Minus));
        assert_eq!(d.sample(0.55), (Sign::Minus, Sign::Plus));
        assert_eq!(d.sample(0.99), (Sign::Minus, Sign::Minus));
        let d = JointDistribution {
            p: [0.0, 0.5, 0.5, 0.0],
        };
        assert_eq!(d.sample(1.0 - 1e-17), (Sign::Minus, Sign::Plus));
    }

    fn arb_state() -> impl Strategy<Value = TwoQubitState> {
        prop::array::uniform8(-1.0f64..1.0)
            .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
            .prop_map(|v| {
                TwoQubitState::from_amplitudes([
                    Complex64::new(v[0], v[1]),
                    Complex64::new(v[2], v[3]),
                    Complex64::new(v[4], v[5]),
                    Complex64::new(v[6], v[7]),
                ])
                .unwrap()
            })
    }

    proptest! {
        #[test]
        fn states_are_normalized(s in arb_state()) {
            prop_assert!(s.is_normalized());
        }

        #[test]
        fn joint_distribution_is_a_distribution(s in arb_state(), a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let d = s.joint_probability(a.into(), b.into());
            prop_assert!(d.p.iter().all(|&p| p >= 0.0));
            prop_assert!((d.p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn no_signaling(s in arb_state(), a in 0.0f64..TAU, b in 0.0f64..TAU, b2 in 0.0f64..TAU, a2 in 0.0f64..TAU) {
            let (a, b, a2, b2) = (a.into(), b.into(), a2.into(), b2.into());
            let d1 = s.joint_probability(a, b);
            let d2 = s.joint_probability(a, b2);
            prop_assert!((d1.marginal_a(Sign::Plus) - d2.marginal_a(Sign::Plus)).abs() < 1e-12);
            prop_assert!((d1.marginal_a(Sign::Plus) - s.marginal_a(a)).abs() < 1e-12);
            let d3 = s.joint_probability(a2, b);
            prop_assert!((d1.marginal_b(Sign::Plus) - d3.marginal_b(Sign::Plus)).abs() < 1e-12);
            prop_assert!((d1.marginal_b(Sign::Plus) - s.marginal_b(b)).abs() < 1e-12);
        }

        #[test]
        fn collapse_reconstructs_b_marginal(s in arb_state(), a in 0.0f64..TAU, b in 0.0f64..TAU) {
            let (a, b) = (a.into(), b.into());
            let mut plus = 0.0;
            for sa in Sign::BOTH {
                let col = s.collapse_after_a(a, sa);
                if let Some(cond) = col.conditional {
                    prop_assert!((cond.norm_sqr() - 1.0).abs() < 1e-9);
                    plus += col.probability * cond.probability(b, Sign::Plus);
                }
            }
            prop_assert!((plus - s.marginal_b(b)).abs() < 1e-9);
        }

        #[test]
        fn joint_matches_projector_oracle(s in arb_state(), a in 0.0f64..TAU, b in 0.0f64..TAU) {
            let d = s.joint_probability(a.into(), b.into());
            // the oracle works on the raw angle, exercising the 2π-periodicity
            let oracle = projector_probability(&s, a, -1, b, 1);
            prop_assert!((d.get(Sign::Minus, Sign::Plus) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn singlet_correlation_is_minus_cosine() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000);
        let s = TwoQubitState::singlet();
        for _ in 0..1000 {
            let a: f64 = rng.random_range(-10.0..10.0);
            let b: f64 = rng.random_range(-10.0..10.0);
            assert!((s.correlation(a.into(), b.into()) + (a - b).cos()).abs() < 1e-9);
        }
    }
}
