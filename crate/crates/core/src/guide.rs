//! Virtual guide tubes around the desired trajectory.

use std::f64::consts::TAU;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Scalar in `[0, 1]`: 1 is rigid tracking, 0 is the widest tube.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AssistanceFactor(f64);

impl AssistanceFactor {
    pub const FULL: Self = Self(1.0);
    pub const NONE: Self = Self(0.0);

    pub fn new(xi: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&xi) {
            Ok(Self(xi))
        } else {
            Err(Error::Range {
                what: "assistance factor",
                value: xi,
                constraint: "must lie in [0, 1]",
            })
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for AssistanceFactor {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AssistanceFactor> for f64 {
    fn from(xi: AssistanceFactor) -> f64 {
        xi.0
    }
}

impl fmt::Display for AssistanceFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Tube half-width for an assistance factor: `0.5 + 7 (1 - xi)` degrees.
pub fn qbound_from_xi(xi: AssistanceFactor) -> f64 {
    (0.5 + 7.0 * (1.0 - xi.get())).to_radians()
}

/// Tube description function `1 - ((q_des - q) / q_bound)^2`.
#[inline]
pub fn barrier(q_des: f64, q: f64, q_bound: f64) -> f64 {
    let r = (q_des - q) / q_bound;
    1.0 - r * r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeTag {
    Constant,
    Tapered,
    Sinusoidal,
    CustomSampled,
}

impl ShapeTag {
    pub const ALL: [ShapeTag; 4] = [
        ShapeTag::Constant,
        ShapeTag::Tapered,
        ShapeTag::Sinusoidal,
        ShapeTag::CustomSampled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeTag::Constant => "constant",
            ShapeTag::Tapered => "tapered",
            ShapeTag::Sinusoidal => "sinusoidal",
            ShapeTag::CustomSampled => "custom-sampled",
        }
    }
}

impl fmt::Display for ShapeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Relative width profile of a tube. Every shape is rescaled so its mean
/// width over the step equals [`qbound_from_xi`].
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeParams {
    Constant,
    /// Linear taper between relative widths at phase 0 and phase T.
    Tapered { start: f64, end: f64 },
    /// `1 + modulation * sin(2 pi cycles phase / T + offset)`; whole cycles
    /// keep the mean exact.
    Sinusoidal {
        modulation: f64,
        cycles: u32,
        offset: f64,
    },
    /// Piecewise-linear relative widths at given phases, spanning `[0, T]`.
    CustomSampled { phase: Vec<f64>, width: Vec<f64> },
}

impl ShapeParams {
    pub fn tag(&self) -> ShapeTag {
        match self {
            ShapeParams::Constant => ShapeTag::Constant,
            ShapeParams::Tapered { .. } => ShapeTag::Tapered,
            ShapeParams::Sinusoidal { .. } => ShapeTag::Sinusoidal,
            ShapeParams::CustomSampled { .. } => ShapeTag::CustomSampled,
        }
    }

    /// Reads a `phase_s,qbound_rad` table.
    pub fn custom_from_reader<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            phase_s: f64,
            qbound_rad: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["phase_s", "qbound_rad"] {
            return Err(Error::InvalidShape(format!(
                "shape table header must be `phase_s,qbound_rad`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut phase, mut width) = (Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let row: Row = row?;
            phase.push(row.phase_s);
            width.push(row.qbound_rad);
        }
        Ok(ShapeParams::CustomSampled { phase, width })
    }

    pub fn custom_from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::custom_from_reader(file).map_err(|e| Error::Table {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Profile {
    Constant(f64),
    Tapered { start: f64, end: f64 },
    Sinusoidal { mean: f64, amp: f64, freq: f64, offset: f64 },
    Sampled { phase: Vec<f64>, width: Vec<f64> },
}

/// Tube around the desired trajectory of one joint for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GuideSpec {
    profile: Profile,
    tag: ShapeTag,
    xi: AssistanceFactor,
    duration: f64,
}

impl GuideSpec {
    pub fn constant(xi: AssistanceFactor, duration: f64) -> Self {
        Self {
            profile: Profile::Constant(qbound_from_xi(xi)),
            tag: ShapeTag::Constant,
            xi,
            duration,
        }
    }

    pub fn xi(&self) -> AssistanceFactor {
        self.xi
    }

    pub fn tag(&self) -> ShapeTag {
        self.tag
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Half-width of the tube at `phase`, saturated to `[0, T]`.
    pub fn qbound(&self, phase: f64) -> f64 {
        let p = phase.clamp(0.0, self.duration);
        match &self.profile {
            Profile::Constant(w) => *w,
            Profile::Tapered { start, end } => start + (end - start) * (p / self.duration),
            Profile::Sinusoidal {
                mean,
                amp,
                freq,
                offset,
            } => mean + amp * (freq * p + offset).sin(),
            Profile::Sampled { phase, width } => interp_linear(phase, width, p),
        }
    }

    /// Half-width along a uniform grid of `n + 1` phases over the step.
    pub fn sample_profile(&self, n: usize) -> Vec<(f64, f64)> {
        (0..=n)
            .map(|i| {
                let p = self.duration * i as f64 / n as f64;
                (p, self.qbound(p))
            })
            .collect()
    }
}

fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = match xs.partition_point(|&p| p <= x) {
        0 => 0,
        n => (n - 1).min(xs.len() - 2),
    };
    let u = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + u * (ys[i + 1] - ys[i])
}

/// Builds a tube whose mean half-width over `[0, duration]` is `qbound_from_xi(xi)`.
pub fn make_shape(params: &ShapeParams, xi: AssistanceFactor, duration: f64) -> Result<GuideSpec> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::Range {
            what: "step duration",
            value: duration,
            constraint: "must be finite and > 0",
        });
    }
    let mean = qbound_from_xi(xi);
    let profile = match params {
        ShapeParams::Constant => Profile::Constant(mean),
        &ShapeParams::Tapered { start, end } => {
            ensure_finite("taper endpoints", &[start, end])?;
            if start <= 0.0 || end <= 0.0 {
                return Err(Error::InvalidShape(format!(
                    "taper endpoints must be positive, got {start} and {end}"
                )));
            }
            let scale = mean / (0.5 * (start + end));
            Profile::Tapered {
                start: start * scale,
                end: end * scale,
            }
        }
        &ShapeParams::Sinusoidal {
            modulation,
            cycles,
            offset,
        } => {
            ensure_finite("sinusoidal shape", &[modulation, offset])?;
            if !(0.0..1.0).contains(&modulation) {
                return Err(Error::InvalidShape(format!(
                    "modulation {modulation} must lie in [0, 1) to keep the width positive"
                )));
            }
            if cycles == 0 {
                return Err(Error::InvalidShape("sinusoidal shape needs >= 1 cycle".into()));
            }
            Profile::Sinusoidal {
                mean,
                amp: modulation * mean,
                freq: TAU * cycles as f64 / duration,
                offset,
            }
        }
        ShapeParams::CustomSampled { phase, width } => {
            if phase.len() < 2 || phase.len() != width.len() {
                return Err(Error::InvalidShape(
                    "custom shape needs >= 2 (phase, width) pairs".into(),
                ));
            }
            ensure_finite("custom shape", phase)?;
            ensure_finite("custom shape", width)?;
            if phase[0] != 0.0 || (phase[phase.len() - 1] - duration).abs() > 1e-9 {
                return Err(Error::InvalidShape(format!(
                    "custom shape must span [0, {duration}], spans [{}, {}]",
                    phase[0],
                    phase[phase.len() - 1]
                )));
            }
            if phase.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidShape(
                    "custom shape phase must be strictly increasing".into(),
                ));
            }
            if let Some(w) = width.iter().find(|&&w| w <= 0.0) {
                return Err(Error::InvalidShape(format!(
                    "custom shape width must be positive, found {w}"
                )));
            }
            // trapezoid mean is exact for a piecewise-linear profile
            let area: f64 = phase
                .windows(2)
                .zip(width.windows(2))
                .map(|(p, w)| 0.5 * (w[0] + w[1]) * (p[1] - p[0]))
                .sum();
            let span = phase[phase.len() - 1];
            let scale = mean / (area / span);
            Profile::Sampled {
                phase: phase.clone(),
                width: width.iter().map(|w| w * scale).collect(),
            }
        }
    };
    Ok(GuideSpec {
        profile,
        tag: params.tag(),
        xi,
        duration,
    })
}

/// Guide value at one state: 1 at the tube center, 0 on its boundary.
pub fn eval_h(spec: &GuideSpec, q_des: f64, q: f64, phase: f64) -> f64 {
    barrier(q_des, q, spec.qbound(phase))
}
