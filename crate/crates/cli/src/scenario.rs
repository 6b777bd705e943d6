//! Scenario files: a TOML tree describing plant, gaits, guide, filter, user
//! and episode settings. Missing sections and keys take their defaults; the
//! fully populated result is what gets echoed back as the effective config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vguide::assist::LegPhase;
use vguide::sim::{default_joints, EarlyImpact, XiSchedule};
use vguide::trajectory::{Harmonic, SampledGait};
use vguide::{
    AssistanceFactor, ControllerConfig, EpisodeConfig, Experiment, FilterParams, JointPlant, JointSetup, NominalGait,
    ShapeParams, UserModel,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Plant shared by every joint unless a joint overrides it.
    #[serde(default)]
    pub plant: JointPlant,
    pub gait: GaitSection,
    pub guide: GuideSection,
    #[serde(default)]
    pub filter: FilterParams,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub user: UserModel,
    #[serde(default)]
    pub episode: EpisodeSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitSection {
    pub joints: Vec<JointSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSection {
    pub name: String,
    #[serde(default = "yes")]
    pub assistable: bool,
    pub profile: ProfileSection,
    /// Per-joint changes to the shared plant.
    #[serde(default, skip_serializing_if = "PlantOverride::is_empty")]
    pub plant: PlantOverride,
}

fn yes() -> bool {
    true
}

/// Nominal gait of one joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProfileSection {
    /// Periodic Fourier series whose fundamental period is the step duration.
    Fourier {
        offset: f64,
        harmonics: Vec<Harmonic>,
    },
    /// `phase_s,q_rad,dq_rad_s` table; relative paths are resolved against
    /// the scenario file.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantOverride {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inertia: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_dry: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_viscous: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gravity_amp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uext_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uext_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub friction_on_position: Option<bool>,
}

impl PlantOverride {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    pub fn apply(&self, base: JointPlant) -> JointPlant {
        JointPlant {
            inertia: self.inertia.unwrap_or(base.inertia),
            k_dry: self.k_dry.unwrap_or(base.k_dry),
            k_viscous: self.k_viscous.unwrap_or(base.k_viscous),
            gravity_amp: self.gravity_amp.unwrap_or(base.gravity_amp),
            u_max: self.u_max.unwrap_or(base.u_max),
            uext_min: self.uext_min.unwrap_or(base.uext_min),
            uext_max: self.uext_max.unwrap_or(base.uext_max),
            friction_on_position: self.friction_on_position.unwrap_or(base.friction_on_position),
        }
    }

    fn full(p: JointPlant) -> Self {
        Self {
            inertia: Some(p.inertia),
            k_dry: Some(p.k_dry),
            k_viscous: Some(p.k_viscous),
            gravity_amp: Some(p.gravity_amp),
            u_max: Some(p.u_max),
            uext_min: Some(p.uext_min),
            uext_max: Some(p.uext_max),
            friction_on_position: Some(p.friction_on_position),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuideSection {
    /// Assistance factor; the final value of any schedule.
    pub xi: f64,
    #[serde(default)]
    pub shape: ShapeSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapeSection {
    #[default]
    Constant,
    Tapered {
        start: f64,
        end: f64,
    },
    Sinusoidal {
        modulation: f64,
        cycles: u32,
        #[serde(default)]
        offset: f64,
    },
    /// `phase_s,qbound_rad` table, rescaled to the factor's mean width.
    CustomSampled { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScheduleSection {
    /// `guide.xi` throughout.
    #[default]
    Constant,
    /// Full assistance, a linear transition, then `guide.xi`; in nominal steps.
    Protocol { full_steps: u32, transition_steps: u32 },
    /// Piecewise-constant factors from the given start times (s); the last
    /// value must equal `guide.xi`.
    Segments { starts: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub ki: f64,
    pub integral_limit: f64,
    pub idealization_intensity: f64,
    pub feedforward_intensity: f64,
    pub alpha: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let c = ControllerConfig::default();
        Self {
            ki: c.ki,
            integral_limit: c.integral_limit,
            idealization_intensity: c.idealization_intensity,
            feedforward_intensity: c.feedforward_intensity,
            alpha: c.alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeSection {
    pub step_length: f64,
    pub step_duration: f64,
    pub n_steps: usize,
    pub seed: u64,
    pub control_dt: f64,
    pub initial_offset: f64,
    pub start_leg: LegPhase,
    pub alternate_legs: bool,
    pub early_impact: EarlyImpact,
}

impl Default for EpisodeSection {
    fn default() -> Self {
        let e = EpisodeConfig::default();
        Self {
            step_length: e.step_length,
            step_duration: e.step_duration,
            n_steps: e.n_steps,
            seed: e.seed,
            control_dt: e.control_dt,
            initial_offset: e.initial_offset,
            start_leg: e.start_leg,
            alternate_legs: e.alternate_legs,
            early_impact: e.early_impact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub xi: Vec<f64>,
    pub repetitions: usize,
    pub users: Vec<UserModel>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            xi: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            repetitions: 20,
            users: vec![UserModel::passive(), UserModel::active()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

fn config_error(key: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.into(),
        message: message.into(),
    }
}

fn factor(key: &str, v: f64) -> Result<AssistanceFactor, CliError> {
    AssistanceFactor::new(v).map_err(|_| config_error(key, format!("{v} is outside [0, 1]")))
}

/// Reads, resolves and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<ScenarioFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    ScenarioFile::from_toml(&text, base).map_err(|e| match e {
        CliError::Syntax { message, .. } => CliError::Syntax {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

impl ScenarioFile {
    /// Parses scenario text whose relative paths are relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut s: ScenarioFile = toml::from_str(text).map_err(|e| CliError::Syntax {
            path: PathBuf::from("<scenario>"),
            message: e.to_string(),
        })?;
        s.resolve(base)?;
        s.validate()?;
        Ok(s)
    }

    /// The effective configuration as TOML. Parsing it back yields `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario values are representable in TOML")
    }

    /// Makes file paths absolute and spells out every joint's plant.
    fn resolve(&mut self, base: &Path) -> Result<(), CliError> {
        let absolute = |key: String, p: &Path| -> Result<PathBuf, CliError> {
            let joined = base.join(p);
            joined
                .canonicalize()
                .map_err(|e| config_error(key, format!("{}: {e}", joined.display())))
        };
        for (i, j) in self.gait.joints.iter_mut().enumerate() {
            if let ProfileSection::Csv { path } = &mut j.profile {
                *path = absolute(format!("gait.joints[{i}].profile.path"), path)?;
            }
            j.plant = PlantOverride::full(j.plant.apply(self.plant));
        }
        if let ShapeSection::CustomSampled { path } = &mut self.guide.shape {
            *path = absolute("guide.shape.path".into(), path)?;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        factor("guide.xi", self.guide.xi)?;
        if self.gait.joints.is_empty() {
            return Err(config_error("gait.joints", "at least one joint is required"));
        }
        for (i, a) in self.gait.joints.iter().enumerate() {
            if self.gait.joints[..i].iter().any(|b| b.name == a.name) {
                return Err(config_error(
                    format!("gait.joints[{i}].name"),
                    format!("duplicate joint name `{}`", a.name),
                ));
            }
            if a.name.is_empty() || !a.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(config_error(
                    format!("gait.joints[{i}].name"),
                    "use letters, digits, `_` or `-`",
                ));
            }
        }
        match &self.guide.schedule {
            ScheduleSection::Segments { values, .. } => {
                for (i, &v) in values.iter().enumerate() {
                    factor(&format!("guide.schedule.values[{i}]"), v)?;
                }
                if values.last() != Some(&self.guide.xi) {
                    return Err(config_error("guide.schedule.values", "the last value must equal guide.xi"));
                }
            }
            ScheduleSection::Constant | ScheduleSection::Protocol { .. } => {}
        }
        if self.episode.seed > i64::MAX as u64 {
            return Err(config_error("episode.seed", "must fit in a signed 64-bit integer"));
        }
        for (i, &v) in self.sweep.xi.iter().enumerate() {
            factor(&format!("sweep.xi[{i}]"), v)?;
        }
        if self.sweep.xi.is_empty() {
            return Err(config_error("sweep.xi", "needs at least one factor"));
        }
        if self.sweep.repetitions == 0 {
            return Err(config_error("sweep.repetitions", "must be >= 1"));
        }
        if self.sweep.users.is_empty() {
            return Err(config_error("sweep.users", "needs at least one user model"));
        }
        let exp = self.experiment()?;
        exp.validate()?;
        for u in &self.sweep.users {
            u.validate()?;
        }
        Ok(())
    }

    pub fn xi_schedule(&self) -> Result<XiSchedule, CliError> {
        let xi = factor("guide.xi", self.guide.xi)?;
        Ok(match &self.guide.schedule {
            ScheduleSection::Constant => XiSchedule::constant(xi),
            ScheduleSection::Protocol {
                full_steps,
                transition_steps,
            } => XiSchedule::protocol_steps(self.episode.step_duration, *full_steps, *transition_steps, xi),
            ScheduleSection::Segments { starts, values } => XiSchedule::Segments {
                starts: starts.clone(),
                values: values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| factor(&format!("guide.schedule.values[{i}]"), v))
                    .collect::<Result<_, _>>()?,
            },
        })
    }

    pub fn shape(&self) -> Result<ShapeParams, CliError> {
        Ok(match &self.guide.shape {
            ShapeSection::Constant => ShapeParams::Constant,
            ShapeSection::Tapered { start, end } => ShapeParams::Tapered {
                start: *start,
                end: *end,
            },
            ShapeSection::Sinusoidal {
                modulation,
                cycles,
                offset,
            } => ShapeParams::Sinusoidal {
                modulation: *modulation,
                cycles: *cycles,
                offset: *offset,
            },
            ShapeSection::CustomSampled { path } => ShapeParams::custom_from_csv(path)?,
        })
    }

    /// The core experiment this scenario describes.
    pub fn experiment(&self) -> Result<Experiment, CliError> {
        let e = &self.episode;
        let shape = self.shape()?;
        let joints = self
            .gait
            .joints
            .iter()
            .map(|j| {
                let gait = match &j.profile {
                    ProfileSection::Fourier { offset, harmonics } => {
                        NominalGait::periodic(*offset, harmonics.clone(), e.step_duration)?
                    }
                    ProfileSection::Csv { path } => NominalGait::sampled(SampledGait::from_csv(path)?)?,
                };
                Ok(JointSetup {
                    name: j.name.clone(),
                    gait,
                    shape: shape.clone(),
                    plant: j.plant.apply(self.plant),
                    assistable: j.assistable,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let c = &self.controller;
        Ok(Experiment {
            episode: EpisodeConfig {
                step_length: e.step_length,
                step_duration: e.step_duration,
                n_steps: e.n_steps,
                xi_schedule: self.xi_schedule()?,
                early_impact: e.early_impact,
                seed: e.seed,
                control_dt: e.control_dt,
                initial_offset: e.initial_offset,
                start_leg: e.start_leg,
                alternate_legs: e.alternate_legs,
            },
            joints,
            controller: ControllerConfig {
                filter: self.filter,
                ki: c.ki,
                integral_limit: c.integral_limit,
                idealization_intensity: c.idealization_intensity,
                feedforward_intensity: c.feedforward_intensity,
                alpha: c.alpha,
            },
            user: self.user.clone(),
        })
    }
}

/// Gait section reproducing the built-in hip and knee.
pub fn default_gait_section(step_duration: f64) -> GaitSection {
    let joints = default_joints(step_duration).expect("built-in gaits are valid");
    GaitSection {
        joints: joints
            .into_iter()
            .map(|j| {
                let (offset, harmonics) = match j.gait.profile() {
                    vguide::trajectory::GaitProfile::Fourier(f) => (f.offset(), f.harmonics().to_vec()),
                    vguide::trajectory::GaitProfile::Sampled(_) => unreachable!("built-in gaits are analytic"),
                };
                JointSection {
                    name: j.name,
                    assistable: j.assistable,
                    profile: ProfileSection::Fourier { offset, harmonics },
                    plant: PlantOverride::full(j.plant),
                }
            })
            .collect(),
    }
}
