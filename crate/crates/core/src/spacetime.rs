//! Inertial frames, Lorentz boosts and event chronology, plus lower bounds
//! on the speed of quantum information (`v_QI`) set by a timing window.
//!
//! All coordinates are laboratory coordinates unless stated otherwise. A
//! [`Frame`] is identified by its velocity relative to the laboratory.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Speed of light, m/s (exact).
pub const C: f64 = 299_792_458.0;

/// Golden-section termination width, seconds.
const OFFSET_TOLERANCE: f64 = 1e-15;

pub type Vec3 = Vector3<f64>;

/// An inertial frame moving with `velocity` relative to the laboratory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    velocity: Vec3,
}

impl Frame {
    pub fn new(velocity: Vec3) -> Result<Self> {
        if !velocity.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("frame velocity must be finite".into()));
        }
        if velocity.norm() >= C {
            return Err(Error::InvalidInput(format!(
                "frame speed {} m/s is not below c",
                velocity.norm()
            )));
        }
        Ok(Self { velocity })
    }

    pub fn lab() -> Self {
        Self {
            velocity: Vec3::zeros(),
        }
    }

    /// Frame moving along +x at `speed` m/s.
    pub fn along_x(speed: f64) -> Result<Self> {
        Self::new(Vec3::new(speed, 0.0, 0.0))
    }

    pub fn velocity(&self) -> Vec3 {
        self.velocity
    }

    pub fn beta(&self) -> f64 {
        self.velocity.norm() / C
    }

    pub fn gamma(&self) -> f64 {
        1.0 / (1.0 - self.beta().powi(2)).sqrt()
    }

    /// `γ − 1` without cancellation for small speeds.
    fn gamma_minus_one(&self) -> f64 {
        let b2 = self.velocity.norm_squared() / (C * C);
        let s = (1.0 - b2).sqrt();
        b2 / (s * (1.0 + s))
    }

    /// The laboratory as seen from this frame.
    pub fn inverse(&self) -> Self {
        Self {
            velocity: -self.velocity,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeEvent {
    /// Seconds.
    pub t: f64,
    /// Meters.
    pub x: Vec3,
}

impl SpacetimeEvent {
    pub fn new(t: f64, x: Vec3) -> Result<Self> {
        if !t.is_finite() || !x.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("event coordinates must be finite".into()));
        }
        Ok(Self { t, x })
    }

    /// Event at `t` on the x axis at position `x`.
    pub fn on_axis(t: f64, x: f64) -> Self {
        Self {
            t,
            x: Vec3::new(x, 0.0, 0.0),
        }
    }

    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            t: self.t + dt,
            x: self.x,
        }
    }
}

/// `c²Δt² − |Δx|²`; positive for timelike separation.
pub fn interval(a: &SpacetimeEvent, b: &SpacetimeEvent) -> f64 {
    let dt = b.t - a.t;
    C * C * dt * dt - (b.x - a.x).norm_squared()
}

/// Coordinates of `event` in `frame`. Pure boost along the frame velocity;
/// transverse coordinates are unchanged.
pub fn boost(event: &SpacetimeEvent, frame: &Frame) -> SpacetimeEvent {
    let v = frame.velocity;
    let speed2 = v.norm_squared();
    if speed2 == 0.0 {
        return *event;
    }
    let gamma = frame.gamma();
    let along = v.dot(&event.x);
    let t = gamma * (event.t - along / (C * C));
    let x = event.x + v * (frame.gamma_minus_one() * along / speed2 - gamma * event.t);
    SpacetimeEvent { t, x }
}

/// Which event comes first in the evaluation frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Order {
    AFirst,
    BFirst,
    SimultaneousWithinTolerance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChronologyVerdict {
    pub order: Order,
    /// `t_B − t_A` in the evaluation frame, seconds.
    pub delta_t: f64,
}

/// `t_B − t_A` in `frame`.
pub fn time_difference(a: &SpacetimeEvent, b: &SpacetimeEvent, frame: &Frame) -> f64 {
    // Boost the separation rather than the events: Δt' is linear in (Δt, Δx)
    // and this avoids cancellation between two large boosted times.
    let sep = SpacetimeEvent {
        t: b.t - a.t,
        x: b.x - a.x,
    };
    boost(&sep, frame).t
}

pub fn chronology(
    a: &SpacetimeEvent,
    b: &SpacetimeEvent,
    frame: &Frame,
    tolerance: f64,
) -> Result<ChronologyVerdict> {
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be ≥ 0, got {tolerance}")));
    }
    let delta_t = time_difference(a, b, frame);
    let order = if delta_t.abs() <= tolerance {
        Order::SimultaneousWithinTolerance
    } else if delta_t > 0.0 {
        Order::AFirst
    } else {
        Order::BFirst
    };
    Ok(ChronologyVerdict { order, delta_t })
}

/// Margins of the before-before test: how much earlier A is than B in A's
/// device frame, and B than A in B's device frame. Both must exceed the
/// alignment uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeforeBeforeMargins {
    pub a_first_in_frame_a: f64,
    pub b_first_in_frame_b: f64,
}

impl BeforeBeforeMargins {
    pub fn holds(&self, uncertainty: f64) -> bool {
        self.a_first_in_frame_a > uncertainty && self.b_first_in_frame_b > uncertainty
    }
}

pub fn before_before_margins(
    a: &SpacetimeEvent,
    b: &SpacetimeEvent,
    frame_a: &Frame,
    frame_b: &Frame,
) -> BeforeBeforeMargins {
    BeforeBeforeMargins {
        a_first_in_frame_a: time_difference(a, b, frame_a),
        b_first_in_frame_b: -time_difference(a, b, frame_b),
    }
}

/// True iff each device acts first in its own rest frame by more than the
/// alignment uncertainty.
pub fn before_before(
    a: &SpacetimeEvent,
    b: &SpacetimeEvent,
    frame_a: &Frame,
    frame_b: &Frame,
    alignment_uncertainty: f64,
) -> Result<bool> {
    if !(alignment_uncertainty >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "alignment uncertainty must be ≥ 0, got {alignment_uncertainty}"
        )));
    }
    Ok(before_before_margins(a, b, frame_a, frame_b).holds(alignment_uncertainty))
}

/// Laboratory delay `t_B − t_A` that makes the two before-before margins
/// equal, for stations displaced by `displacement = x_B − x_A`.
///
/// The margins are affine in the delay `d`:
/// `m_A = γ_A(d − s_A)`, `m_B = γ_B(s_B − d)` with `s_X = v_X·displacement/c²`.
pub fn balanced_lab_offset(displacement: &Vec3, frame_a: &Frame, frame_b: &Frame) -> f64 {
    let (ga, gb) = (frame_a.gamma(), frame_b.gamma());
    let sa = frame_a.velocity.dot(displacement) / (C * C);
    let sb = frame_b.velocity.dot(displacement) / (C * C);
    (ga * sa + gb * sb) / (ga + gb)
}

/// Minimum relative speed (m/s) for which the simultaneity shift `v·L/c²`
/// reaches the timing jitter: `c²·jitter/length`.
pub fn required_relative_speed(length: f64, jitter: f64) -> Result<f64> {
    if !(length > 0.0) || !(jitter >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "need length > 0 and jitter ≥ 0, got length {length}, jitter {jitter}"
        )));
    }
    Ok(C * C * jitter / length)
}

/// Inputs of the `v_QI` bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInput {
    /// Station separation, meters.
    pub length: f64,
    /// Timing accuracy half-width, seconds.
    pub jitter: f64,
    /// Candidate frame speed over c.
    pub beta: f64,
    /// Angle between the candidate frame velocity and the A–B axis, radians.
    pub rho: f64,
}

impl BoundInput {
    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(Error::InvalidInput(format!("length must be > 0, got {}", self.length)));
        }
        if !(self.jitter > 0.0) || !self.jitter.is_finite() {
            return Err(Error::InvalidInput(format!("jitter must be > 0, got {}", self.jitter)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidInput(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if !self.rho.is_finite() {
            return Err(Error::InvalidInput("rho must be finite".into()));
        }
        Ok(())
    }

    /// `v/c` implied by a true laboratory offset `dt = t_B − t_A`.
    pub fn speed_ratio(&self, dt: f64) -> f64 {
        let gamma = 1.0 / (1.0 - self.beta * self.beta).sqrt();
        let (sin, cos) = self.rho.sin_cos();
        let along = gamma * (self.length * cos - self.beta * C * dt);
        let across = self.length * sin;
        let num = (along * along + across * across).sqrt();
        let den = C * gamma * (dt - self.beta * self.length * cos / C).abs();
        num / den
    }

    /// `β·L·cosρ/c`: the laboratory offset that is simultaneous in the
    /// candidate frame.
    pub fn simultaneity_offset(&self) -> f64 {
        self.beta * self.length * self.rho.cos() / C
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    /// Lower bound on `v_QI / c`; `+∞` when divergent.
    pub bound: f64,
    pub divergent: bool,
}

/// Guaranteed lower bound on `v_QI/c` in the candidate frame: the implied
/// speed minimized over the unknown offset `Δt ∈ [−jitter, +jitter]`.
///
/// A moving candidate frame (`β > 0`) whose simultaneity offset lies inside
/// the timing window is reported as divergent with an infinite bound. The
/// laboratory frame itself (`β = 0`) always yields `L/(c·jitter)`.
pub fn vqi_bound(input: &BoundInput) -> Result<Bound> {
    input.validate()?;
    if input.beta > 0.0 && input.simultaneity_offset().abs() <= input.jitter {
        return Ok(Bound {
            bound: f64::INFINITY,
            divergent: true,
        });
    }
    let j = input.jitter;
    let bound = if input.beta == 0.0 {
        // Minimum sits at the window edges: L/(c·|Δt|).
        input.length / (C * j)
    } else {
        minimize_on_interval(|dt| input.speed_ratio(dt), -j, j, OFFSET_TOLERANCE)
    };
    Ok(Bound {
        bound,
        divergent: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rho: f64,
    pub bound: f64,
    pub divergent: bool,
}

/// [`vqi_bound`] at `samples` values of ρ spread uniformly over `[0, π]`,
/// endpoints included.
pub fn vqi_bound_sweep(length: f64, jitter: f64, beta: f64, samples: usize) -> Result<Vec<SweepPoint>> {
    if samples < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples, got {samples}")));
    }
    BoundInput { length, jitter, beta, rho: 0.0 }.validate()?;
    (0..samples)
        .map(|k| {
            let rho = std::f64::consts::PI * k as f64 / (samples - 1) as f64;
            let b = vqi_bound(&BoundInput { length, jitter, beta, rho })?;
            Ok(SweepPoint {
                rho,
                bound: b.bound,
                divergent: b.divergent,
            })
        })
        .collect()
}

/// Range of ρ in `[0, π]` where the candidate frame can make the two
/// measurements simultaneous, or `None` when no such alignment exists.
pub fn divergent_window(length: f64, jitter: f64, beta: f64) -> Option<(f64, f64)> {
    if beta <= 0.0 {
        return None;
    }
    let max_cos = jitter * C / (beta * length);
    if max_cos >= 1.0 {
        return Some((0.0, std::f64::consts::PI));
    }
    let lo = max_cos.acos();
    Some((lo, std::f64::consts::PI - lo))
}

/// Smallest implied `v/c` for which an influence leaving the earlier of two
/// events reaches the later one, in `frame`, when B's laboratory time is
/// only known to within `±uncertainty`.
///
/// Coincident events need no influence and return 0; an offset window that
/// contains only exact simultaneity returns `+∞`.
pub fn min_required_speed(
    a: &SpacetimeEvent,
    b: &SpacetimeEvent,
    frame: &Frame,
    uncertainty: f64,
) -> f64 {
    let ratio = |d: f64| {
        let sep = boost(
            &SpacetimeEvent {
                t: b.t + d - a.t,
                x: b.x - a.x,
            },
            frame,
        );
        let dist = sep.x.norm();
        if dist == 0.0 {
            0.0
        } else {
            dist / (C * sep.t.abs())
        }
    };
    if uncertainty <= 0.0 {
        return ratio(0.0);
    }
    // Δt'(d) = Δt'(0) + γ·d vanishes at d0; split the window there so that
    // each side is unimodal.
    let gamma = frame.gamma();
    let d0 = -time_difference(a, b, frame) / gamma;
    let (lo, hi) = (-uncertainty, uncertainty);
    if d0 > lo && d0 < hi {
        let left = minimize_on_interval(ratio, lo, d0, OFFSET_TOLERANCE);
        let right = minimize_on_interval(ratio, d0, hi, OFFSET_TOLERANCE);
        left.min(right)
    } else {
        minimize_on_interval(ratio, lo, hi, OFFSET_TOLERANCE)
    }
}

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`,
/// with both endpoints checked explicitly.
pub(crate) fn minimize_on_interval<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut best = f(lo).min(f(hi));
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        // guards against tol below the float spacing of the bracket
        if x1 >= x2 {
            break;
        }
    }
    for v in [f1, f2] {
        if v < best {
            best = v;
        }
    }
    best
}
