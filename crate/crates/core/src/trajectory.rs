//! Nominal gait playback and deadbeat re-splining.
//!
//! The desired trajectory of a joint during a step is the nominal gait plus a
//! cubic correction `s` that starts from the tracking error measured at impact
//! and vanishes, with zero slope, after the blend window `alpha * T`:
//!
//! ```text
//! q_des(t) = q_nom(t - t_i) + s(t - t_i)
//! s(0) = q(t_i) - q_nom(0),   s'(0) = dq(t_i) - dq_nom(0)
//! s(aT) = 0,                  s'(aT) = 0
//! ```
//!
//! Phases past the step duration saturate at `T`, so a step that overruns
//! without an impact holds the end pose of the gait.

use std::f64::consts::TAU;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.25;

/// One term `amplitude * sin(k * omega * t + phase)` of a [`FourierGait`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Analytic gait `offset + sum_k a_k sin(k omega t + phi_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierGait {
    offset: f64,
    omega: f64,
    harmonics: Vec<Harmonic>,
    /// `(sin, cos)` of each harmonic's phase.
    phase_rot: Vec<(f64, f64)>,
}

impl FourierGait {
    pub fn new(offset: f64, omega: f64, harmonics: Vec<Harmonic>) -> Self {
        let phase_rot = harmonics.iter().map(|h| h.phase.sin_cos()).collect();
        Self {
            offset,
            omega,
            harmonics,
            phase_rot,
        }
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn harmonics(&self) -> &[Harmonic] {
        &self.harmonics
    }

    /// Higher harmonics come from the angle-addition recurrence, so only one
    /// `sin_cos` is evaluated per call.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let mut q = self.offset;
        let mut dq = 0.0;
        let mut ddq = 0.0;
        let (s1, c1) = (self.omega * t).sin_cos();
        let (mut sn, mut cn) = (s1, c1);
        for (i, (h, &(sp, cp))) in self.harmonics.iter().zip(&self.phase_rot).enumerate() {
            if i > 0 {
                (sn, cn) = (sn * c1 + cn * s1, cn * c1 - sn * s1);
            }
            let w = (i + 1) as f64 * self.omega;
            let s = sn * cp + cn * sp;
            let c = cn * cp - sn * sp;
            q += h.amplitude * s;
            dq += h.amplitude * w * c;
            ddq -= h.amplitude * w * w * s;
        }
        (q, dq, ddq)
    }
}

/// Gait table interpolated with cubic Hermite segments through the sampled
/// angles and velocities, so the velocity is the exact derivative of the
/// interpolated angle.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGait {
    phase: Vec<f64>,
    q: Vec<f64>,
    dq: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct GaitRow {
    phase_s: f64,
    q_rad: f64,
    dq_rad_s: f64,
}

impl SampledGait {
    pub fn new(phase: Vec<f64>, q: Vec<f64>, dq: Vec<f64>) -> Result<Self> {
        if phase.len() < 2 || phase.len() != q.len() || phase.len() != dq.len() {
            return Err(Error::InvalidInput(format!(
                "gait table needs >= 2 rows of equal length, got {}/{}/{}",
                phase.len(),
                q.len(),
                dq.len()
            )));
        }
        ensure_finite("gait table", &phase)?;
        ensure_finite("gait table", &q)?;
        ensure_finite("gait table", &dq)?;
        if phase[0] != 0.0 {
            return Err(Error::InvalidInput(format!(
                "gait table must start at phase 0, starts at {}",
                phase[0]
            )));
        }
        if phase.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "gait table phase must be strictly increasing".into(),
            ));
        }
        Ok(Self { phase, q, dq })
    }

    /// Reads `phase_s,q_rad,dq_rad_s` rows.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["phase_s", "q_rad", "dq_rad_s"] {
            return Err(Error::InvalidInput(format!(
                "gait table header must be `phase_s,q_rad,dq_rad_s`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut phase, mut q, mut dq) = (Vec::new(), Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let row: GaitRow = row?;
            phase.push(row.phase_s);
            q.push(row.q_rad);
            dq.push(row.dq_rad_s);
        }
        Self::new(phase, q, dq)
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(file).map_err(|e| match e {
            Error::Io { .. } => e,
            other => Error::Table {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        })
    }

    pub fn duration(&self) -> f64 {
        *self.phase.last().expect("non-empty table")
    }

    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let t = t.clamp(0.0, self.duration());
        let i = match self.phase.partition_point(|&p| p <= t) {
            0 => 0,
            n => (n - 1).min(self.phase.len() - 2),
        };
        let h = self.phase[i + 1] - self.phase[i];
        let u = (t - self.phase[i]) / h;
        let (y0, y1) = (self.q[i], self.q[i + 1]);
        let (m0, m1) = (self.dq[i] * h, self.dq[i + 1] * h);
        let (u2, u3) = (u * u, u * u * u);

        let q = (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * m0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * m1;
        let dq = ((6.0 * u2 - 6.0 * u) * y0
            + (3.0 * u2 - 4.0 * u + 1.0) * m0
            + (-6.0 * u2 + 6.0 * u) * y1
            + (3.0 * u2 - 2.0 * u) * m1)
            / h;
        let ddq = ((12.0 * u - 6.0) * y0
            + (6.0 * u - 4.0) * m0
            + (-12.0 * u + 6.0) * y1
            + (6.0 * u - 2.0) * m1)
            / (h * h);
        (q, dq, ddq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GaitProfile {
    Fourier(FourierGait),
    Sampled(SampledGait),
}

/// Nominal single-joint trajectory over one step of duration `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalGait {
    profile: GaitProfile,
    duration: f64,
}

/// Angle, velocity and acceleration of the nominal gait at one phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitSample {
    pub q: f64,
    pub dq: f64,
    pub ddq: f64,
}

impl NominalGait {
    pub fn new(profile: GaitProfile, duration: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::Range {
                what: "step duration",
                value: duration,
                constraint: "must be finite and > 0",
            });
        }
        match &profile {
            GaitProfile::Fourier(f) => {
                ensure_finite("fourier gait offset/omega", &[f.offset, f.omega])?;
                for h in &f.harmonics {
                    ensure_finite("fourier gait harmonic", &[h.amplitude, h.phase])?;
                }
            }
            GaitProfile::Sampled(s) => {
                if (s.duration() - duration).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "gait table ends at {} s but the step duration is {} s",
                        s.duration(),
                        duration
                    )));
                }
            }
        }
        Ok(Self { profile, duration })
    }

    /// `offset + amplitude * sin(omega t)`.
    pub fn sinusoid(offset: f64, amplitude: f64, omega: f64, duration: f64) -> Result<Self> {
        Self::new(
            GaitProfile::Fourier(FourierGait::new(
                offset,
                omega,
                vec![Harmonic {
                    amplitude,
                    phase: 0.0,
                }],
            )),
            duration,
        )
    }

    /// Fourier gait whose fundamental period equals the step duration.
    pub fn periodic(offset: f64, harmonics: Vec<Harmonic>, duration: f64) -> Result<Self> {
        Self::new(
            GaitProfile::Fourier(FourierGait::new(offset, TAU / duration, harmonics)),
            duration,
        )
    }

    pub fn constant(q: f64, duration: f64) -> Result<Self> {
        Self::new(
            GaitProfile::Fourier(FourierGait::new(q, 0.0, Vec::new())),
            duration,
        )
    }

    pub fn sampled(table: SampledGait) -> Result<Self> {
        let duration = table.duration();
        Self::new(GaitProfile::Sampled(table), duration)
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn profile(&self) -> &GaitProfile {
        &self.profile
    }

    /// Samples the gait, saturating the phase to `[0, T]`.
    pub fn sample(&self, phase: f64) -> GaitSample {
        let t = phase.clamp(0.0, self.duration);
        let (q, dq, ddq) = match &self.profile {
            GaitProfile::Fourier(f) => f.eval(t),
            GaitProfile::Sampled(s) => s.eval(t),
        };
        GaitSample { q, dq, ddq }
    }

    pub fn q(&self, phase: f64) -> f64 {
        self.sample(phase).q
    }

    pub fn dq(&self, phase: f64) -> f64 {
        self.sample(phase).dq
    }
}

/// Nominal acceleration at `phase`; errors outside `[0, T]`.
pub fn eval_nominal_accel(gait: &NominalGait, phase: f64) -> Result<f64> {
    if !(0.0..=gait.duration()).contains(&phase) {
        return Err(Error::Range {
            what: "phase",
            value: phase,
            constraint: "must lie in [0, T]",
        });
    }
    Ok(gait.sample(phase).ddq)
}

/// Cubic correction blending the post-impact state back onto the nominal gait.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadbeatSpline {
    /// `s(tau) = c0 + c1 tau + c2 tau^2 + c3 tau^3` for `tau < window`.
    pub coeffs: [f64; 4],
    pub window: f64,
    pub alpha: f64,
    pub t_i: f64,
}

impl DeadbeatSpline {
    /// Spline that leaves the nominal gait untouched.
    pub fn identity(gait: &NominalGait, t_i: f64) -> Self {
        Self {
            coeffs: [0.0; 4],
            window: DEFAULT_ALPHA * gait.duration(),
            alpha: DEFAULT_ALPHA,
            t_i,
        }
    }

    fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// `(s, s', s'')` at time `tau` after impact.
    pub fn eval(&self, tau: f64) -> (f64, f64, f64) {
        if tau >= self.window || self.is_zero() {
            return (0.0, 0.0, 0.0);
        }
        let [c0, c1, c2, c3] = self.coeffs;
        let s = c0 + tau * (c1 + tau * (c2 + tau * c3));
        let ds = c1 + tau * (2.0 * c2 + tau * 3.0 * c3);
        let dds = 2.0 * c2 + 6.0 * c3 * tau;
        (s, ds, dds)
    }
}

/// Builds the unique cubic through the four impact boundary conditions.
pub fn make_deadbeat_spline(
    q_at_impact: f64,
    dq_at_impact: f64,
    gait: &NominalGait,
    alpha: f64,
    t_i: f64,
) -> Result<DeadbeatSpline> {
    ensure_finite("impact state", &[q_at_impact, dq_at_impact, t_i])?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Range {
            what: "alpha",
            value: alpha,
            constraint: "must lie in (0, 1]",
        });
    }
    let start = gait.sample(0.0);
    let e0 = q_at_impact - start.q;
    let v0 = dq_at_impact - start.dq;
    let w = alpha * gait.duration();

    // Hermite basis with zero end value and slope, expanded in monomials.
    let coeffs = [
        e0,
        v0,
        -(3.0 * e0 + 2.0 * v0 * w) / (w * w),
        (2.0 * e0 + v0 * w) / (w * w * w),
    ];
    Ok(DeadbeatSpline {
        coeffs,
        window: w,
        alpha,
        t_i,
    })
}

/// Desired angle and velocity of one joint after its latest impact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Desired {
    pub q: f64,
    pub dq: f64,
}

/// Gait plus the active deadbeat correction: everything needed to play back
/// the desired trajectory of a step.
#[derive(Debug, Clone, Copy)]
pub struct StepTrajectory<'a> {
    pub gait: &'a NominalGait,
    pub spline: DeadbeatSpline,
}

/// Desired trajectory sample, with the nominal acceleration used by feedforward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredSample {
    pub q: f64,
    pub dq: f64,
    pub ddq_nom: f64,
}

impl<'a> StepTrajectory<'a> {
    pub fn new(gait: &'a NominalGait, spline: DeadbeatSpline) -> Self {
        Self { gait, spline }
    }

    pub fn duration(&self) -> f64 {
        self.gait.duration()
    }

    /// Desired sample at step phase (time since impact), saturated at `T`.
    pub fn at_phase(&self, phase: f64) -> DesiredSample {
        let phase = phase.clamp(0.0, self.gait.duration());
        let nom = self.gait.sample(phase);
        if phase >= self.spline.window || self.spline.is_zero() {
            return DesiredSample {
                q: nom.q,
                dq: nom.dq,
                ddq_nom: nom.ddq,
            };
        }
        let (s, ds, _) = self.spline.eval(phase);
        DesiredSample {
            q: nom.q + s,
            dq: nom.dq + ds,
            ddq_nom: nom.ddq,
        }
    }
}

/// `q_des(t)` and its derivative for absolute time `t >= t_i`.
pub fn eval_desired(gait: &NominalGait, spline: &DeadbeatSpline, t: f64) -> Result<Desired> {
    ensure_finite("time", &[t])?;
    if t < spline.t_i {
        return Err(Error::Range {
            what: "time",
            value: t,
            constraint: "must not precede the latest impact",
        });
    }
    let s = StepTrajectory::new(gait, *spline).at_phase(t - spline.t_i);
    Ok(Desired { q: s.q, dq: s.dq })
}
