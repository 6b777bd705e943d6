//! Synthetic stand-ins for the person inside the exoskeleton.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::filter::FilterParams;
use crate::plant::{JointPlant, JointState};

/// Band-limited torque noise: a first-order low-pass of white noise, clipped
/// to `[-amplitude, amplitude]`. The stationary standard deviation is half the
/// amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub amplitude: f64,
    pub bandwidth_hz: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            amplitude: 12.0,
            bandwidth_hz: 2.0,
        }
    }
}

impl NoiseSpec {
    pub const OFF: NoiseSpec = NoiseSpec {
        amplitude: 0.0,
        bandwidth_hz: 2.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum UserModel {
    /// Does nothing on purpose; optional limb damping plus involuntary noise.
    Passive {
        #[serde(default)]
        damping: f64,
        #[serde(default)]
        noise: NoiseSpec,
    },
    /// Tries to follow the desired trajectory with a PD law weaker than the
    /// backup policy.
    Active {
        #[serde(default = "default_gain_fraction")]
        gain_fraction: f64,
        #[serde(default)]
        noise: NoiseSpec,
    },
    /// Piecewise-constant torque: `torques[i]` holds from `times[i]` until the
    /// next entry. Before `times[0]` the torque is zero.
    Scripted { times: Vec<f64>, torques: Vec<f64> },
}

fn default_gain_fraction() -> f64 {
    0.25
}

impl Default for UserModel {
    fn default() -> Self {
        UserModel::Passive {
            damping: 0.0,
            noise: NoiseSpec::default(),
        }
    }
}

impl UserModel {
    pub fn passive() -> Self {
        Self::default()
    }

    pub fn active() -> Self {
        UserModel::Active {
            gain_fraction: default_gain_fraction(),
            noise: NoiseSpec::default(),
        }
    }

    /// A user that exerts no torque at all.
    pub fn silent() -> Self {
        UserModel::Passive {
            damping: 0.0,
            noise: NoiseSpec::OFF,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            UserModel::Passive { .. } => "passive",
            UserModel::Active { .. } => "active",
            UserModel::Scripted { .. } => "scripted",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_noise = |n: &NoiseSpec| -> Result<()> {
            ensure_finite("user noise", &[n.amplitude, n.bandwidth_hz])?;
            if n.amplitude < 0.0 || n.bandwidth_hz <= 0.0 {
                return Err(Error::Range {
                    what: "user.noise",
                    value: n.amplitude.min(n.bandwidth_hz),
                    constraint: "amplitude must be >= 0 and bandwidth > 0",
                });
            }
            Ok(())
        };
        match self {
            UserModel::Passive { damping, noise } => {
                ensure_finite("user.damping", &[*damping])?;
                if *damping < 0.0 {
                    return Err(Error::Range {
                        what: "user.damping",
                        value: *damping,
                        constraint: "must be >= 0",
                    });
                }
                check_noise(noise)
            }
            UserModel::Active {
                gain_fraction,
                noise,
            } => {
                ensure_finite("user.gain_fraction", &[*gain_fraction])?;
                if *gain_fraction < 0.0 {
                    return Err(Error::Range {
                        what: "user.gain_fraction",
                        value: *gain_fraction,
                        constraint: "must be >= 0",
                    });
                }
                check_noise(noise)
            }
            UserModel::Scripted { times, torques } => {
                if times.len() != torques.len() {
                    return Err(Error::InvalidInput(
                        "scripted user needs as many times as torques".into(),
                    ));
                }
                ensure_finite("user.times", times)?;
                ensure_finite("user.torques", torques)?;
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidInput(
                        "scripted user times must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Per-joint runtime state of a user model.
#[derive(Debug, Clone)]
pub(crate) struct UserJoint {
    noise: f64,
    rng: ChaCha8Rng,
}

impl UserJoint {
    pub(crate) fn new(rng: ChaCha8Rng) -> Self {
        Self { noise: 0.0, rng }
    }

    fn next_noise(&mut self, spec: &NoiseSpec, dt: f64) -> f64 {
        // draw every tick so paired runs share the stream regardless of use
        let z: f64 = self.rng.sample(StandardNormal);
        if spec.amplitude == 0.0 {
            return 0.0;
        }
        let a = (-TAU * spec.bandwidth_hz * dt).exp();
        let sigma = 0.5 * spec.amplitude;
        self.noise = a * self.noise + (1.0 - a * a).sqrt() * sigma * z;
        self.noise.clamp(-spec.amplitude, spec.amplitude)
    }

    /// Torque applied by the user on this tick, clamped to the plant bounds.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn torque(
        &mut self,
        model: &UserModel,
        plant: &JointPlant,
        backup: &FilterParams,
        state: JointState,
        q_des: f64,
        dq_des: f64,
        t: f64,
        dt: f64,
    ) -> f64 {
        let u = match model {
            UserModel::Passive { damping, noise } => -damping * state.dq + self.next_noise(noise, dt),
            UserModel::Active {
                gain_fraction,
                noise,
            } => {
                gain_fraction * (backup.kp * (q_des - state.q) + backup.kd * (dq_des - state.dq))
                    + self.next_noise(noise, dt)
            }
            UserModel::Scripted { times, torques } => match times.partition_point(|&x| x <= t) {
                0 => 0.0,
                n => torques[n - 1],
            },
        };
        plant.clamp_user(u)
    }
}
