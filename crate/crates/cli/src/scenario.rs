//! JSON scenario files.
//!
//! Station A sits at the origin and station B at `separation_m` on the x
//! axis. The particle reaches the choice and trigger devices of a station at
//! the same lab event; B's events are delayed by `lab_offset_s`, or by the
//! offset that balances the before-before margins of the named device
//! frames.

use bellsim_core::bell::SettingQuad;
use bellsim_core::engine::{ModelSpec, Scenario};
use bellsim_core::lhv::LhvModel;
use bellsim_core::models::{CollapseModel, StationGeometry};
use bellsim_core::qstate::{make_state, StateSpec};
use bellsim_core::spacetime::{balanced_lab_offset, Frame, SpacetimeEvent, Vec3, C};
use bellsim_core::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub state: StateFile,
    pub model: ModelFile,
    pub settings: SettingsFile,
    pub geometry: GeometryFile,
    /// Detection efficiency of stations A and B.
    pub efficiency: [f64; 2],
    pub trials: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateFile {
    Singlet,
    /// Amplitudes `[re, im]` in the basis `|++⟩, |+−⟩, |−+⟩, |−−⟩`.
    Raw { amplitudes: Vec<[f64; 2]> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelFile {
    StandardQm,
    PreferredFrame {
        frame_velocity_mps: [f64; 3],
        v_qi_c: f64,
    },
    TriggerDeviceFrame,
    ChoiceDeviceFrame,
    PerFrameStateVector,
    LhvDeterministicSign,
    LhvDetectionLoophole {
        tau: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsFile {
    pub a_rad: f64,
    pub a_prime_rad: f64,
    pub b_rad: f64,
    pub b_prime_rad: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceFrames {
    Trigger,
    Choice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    pub separation_m: f64,
    pub timing_jitter_s: f64,
    pub alignment_uncertainty_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lab_offset_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance_frames: Option<BalanceFrames>,
    pub station_a: StationFile,
    pub station_b: StationFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationFile {
    pub choice_device: DeviceFile,
    pub trigger_device: DeviceFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceFile {
    pub velocity_mps: [f64; 3],
}

impl DeviceFile {
    fn frame(&self) -> Result<Frame> {
        Frame::new(Vec3::from(self.velocity_mps))
    }
}

impl GeometryFile {
    /// Timing uncertainty in seconds: the larger of the jitter and the
    /// alignment uncertainty converted at c.
    pub fn uncertainty(&self) -> f64 {
        self.timing_jitter_s.max(self.alignment_uncertainty_m / C)
    }

    pub fn stations(&self) -> Result<[StationGeometry; 2]> {
        let positive = |x: f64, name: &str| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must be finite and ≥ 0, got {x}")))
            }
        };
        if !(self.separation_m > 0.0 && self.separation_m.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "separation_m must be positive, got {}",
                self.separation_m
            )));
        }
        positive(self.timing_jitter_s, "timing_jitter_s")?;
        positive(self.alignment_uncertainty_m, "alignment_uncertainty_m")?;
        let (ca, ta) = (self.station_a.choice_device.frame()?, self.station_a.trigger_device.frame()?);
        let (cb, tb) = (self.station_b.choice_device.frame()?, self.station_b.trigger_device.frame()?);
        let displacement = Vec3::new(self.separation_m, 0.0, 0.0);
        let offset = match (self.lab_offset_s, self.balance_frames) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidInput(
                    "give either lab_offset_s or balance_frames, not both".into(),
                ))
            }
            (Some(d), None) if d.is_finite() => d,
            (Some(d), None) => {
                return Err(Error::InvalidInput(format!("lab_offset_s must be finite, got {d}")))
            }
            (None, Some(BalanceFrames::Trigger)) => balanced_lab_offset(&displacement, &ta, &tb),
            (None, Some(BalanceFrames::Choice)) => balanced_lab_offset(&displacement, &ca, &cb),
            (None, None) => 0.0,
        };
        let u = self.uncertainty();
        let ea = SpacetimeEvent::on_axis(0.0, 0.0);
        let eb = SpacetimeEvent::on_axis(offset, self.separation_m);
        Ok([
            StationGeometry::new(ea, ea, ca, ta, u)?,
            StationGeometry::new(eb, eb, cb, tb, u)?,
        ])
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        let state = match &self.state {
            StateFile::Singlet => make_state(&StateSpec::Singlet)?,
            StateFile::Raw { amplitudes } => make_state(&StateSpec::Raw(
                amplitudes.iter().map(|[re, im]| Complex64::new(*re, *im)).collect(),
            ))?,
        };
        let model = match &self.model {
            ModelFile::StandardQm => ModelSpec::Collapse(CollapseModel::StandardQm),
            ModelFile::PreferredFrame {
                frame_velocity_mps,
                v_qi_c,
            } => ModelSpec::Collapse(CollapseModel::preferred_frame(
                Frame::new(Vec3::from(*frame_velocity_mps))?,
                *v_qi_c,
            )?),
            ModelFile::TriggerDeviceFrame => ModelSpec::Collapse(CollapseModel::TriggerDeviceFrame),
            ModelFile::ChoiceDeviceFrame => ModelSpec::Collapse(CollapseModel::ChoiceDeviceFrame),
            ModelFile::PerFrameStateVector => ModelSpec::Collapse(CollapseModel::PerFrameStateVector),
            ModelFile::LhvDeterministicSign => ModelSpec::Lhv(LhvModel::DeterministicSign),
            ModelFile::LhvDetectionLoophole { tau } => ModelSpec::Lhv(LhvModel::detection_loophole(*tau)?),
        };
        let s = &self.settings;
        let angles = [s.a_rad, s.a_prime_rad, s.b_rad, s.b_prime_rad];
        if angles.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("setting angles must be finite".into()));
        }
        let scenario = Scenario {
            state,
            model,
            quad: SettingQuad::new(s.a_rad, s.a_prime_rad, s.b_rad, s.b_prime_rad),
            geometry: self.geometry.stations()?,
            efficiency: self.efficiency,
            trials: self.trials,
            seed: self.seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
