//! Single-joint dynamics and the torques that make the joint transparent.
//!
//! The simulated joint obeys
//!
//! ```text
//! J qdd = sat(u) + u_ext - k_d sign(dq) - k_v dq - m g l sin(q)
//! ```
//!
//! where the friction and gravity terms are the passive physics that the
//! idealization torque cancels. With those cancelled, the joint reduces to
//! `J qdd = u_v + u_f + u_ext`, the model the guide filter reasons about.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::trajectory::NominalGait;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JointPlant {
    /// Inertia seen at the joint (kg m^2).
    pub inertia: f64,
    /// Dry friction (N m).
    pub k_dry: f64,
    /// Viscous friction (N m s/rad).
    pub k_viscous: f64,
    /// Pendulum gravity amplitude `m g l` (N m).
    pub gravity_amp: f64,
    /// Actuator limit (N m).
    pub u_max: f64,
    /// Bounds on the torque the user can exert (N m).
    pub uext_min: f64,
    pub uext_max: f64,
    /// Evaluate the idealization friction on `q` instead of `dq`.
    pub friction_on_position: bool,
}

impl Default for JointPlant {
    fn default() -> Self {
        Self {
            inertia: 1.5,
            k_dry: 1.0,
            k_viscous: 0.5,
            gravity_amp: 20.0,
            u_max: 120.0,
            uext_min: -40.0,
            uext_max: 40.0,
            friction_on_position: false,
        }
    }
}

impl JointPlant {
    /// Frictionless, gravity-free joint.
    pub fn ideal(inertia: f64, u_max: f64, uext_bound: f64) -> Self {
        Self {
            inertia,
            k_dry: 0.0,
            k_viscous: 0.0,
            gravity_amp: 0.0,
            u_max,
            uext_min: -uext_bound,
            uext_max: uext_bound,
            friction_on_position: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "plant parameters",
            &[
                self.inertia,
                self.k_dry,
                self.k_viscous,
                self.gravity_amp,
                self.u_max,
                self.uext_min,
                self.uext_max,
            ],
        )?;
        if self.inertia <= 0.0 {
            return Err(Error::Range {
                what: "plant.inertia",
                value: self.inertia,
                constraint: "must be > 0",
            });
        }
        if self.u_max <= 0.0 {
            return Err(Error::Range {
                what: "plant.u_max",
                value: self.u_max,
                constraint: "must be > 0",
            });
        }
        if self.uext_min > 0.0 {
            return Err(Error::Range {
                what: "plant.uext_min",
                value: self.uext_min,
                constraint: "must be <= 0",
            });
        }
        if self.uext_max < 0.0 {
            return Err(Error::Range {
                what: "plant.uext_max",
                value: self.uext_max,
                constraint: "must be >= 0",
            });
        }
        if self.uext_min.abs() >= self.u_max || self.uext_max >= self.u_max {
            return Err(Error::Range {
                what: "plant.uext_max",
                value: self.uext_max.max(-self.uext_min),
                constraint: "user torque bounds must stay below u_max",
            });
        }
        if self.k_dry < 0.0 || self.k_viscous < 0.0 || self.gravity_amp < 0.0 {
            return Err(Error::InvalidInput(
                "friction and gravity coefficients must be non-negative".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn saturate(&self, u: f64) -> f64 {
        u.clamp(-self.u_max, self.u_max)
    }

    #[inline]
    pub fn clamp_user(&self, u: f64) -> f64 {
        u.clamp(self.uext_min, self.uext_max)
    }

    /// Torque the passive joint physics applies against the actuator.
    #[inline]
    pub fn passive_torque(&self, q: f64, dq: f64) -> f64 {
        self.friction_torque(dq) + gravity_torque(self, q)
    }

    #[inline]
    pub fn friction_torque(&self, dq: f64) -> f64 {
        self.k_dry * sign(dq) + self.k_viscous * dq
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointState {
    pub q: f64,
    pub dq: f64,
}

impl JointState {
    pub fn new(q: f64, dq: f64) -> Self {
        Self { q, dq }
    }
}

/// `sign` with `sign(0) = 0`.
#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn gravity_torque(plant: &JointPlant, q: f64) -> f64 {
    plant.gravity_amp * q.sin()
}

/// Friction plus gravity compensation.
pub fn idealization_torque(plant: &JointPlant, state: JointState) -> f64 {
    idealization_with_sin(plant, state, state.q.sin())
}

/// [`idealization_torque`] with `sin(q)` supplied by the caller.
#[inline]
pub(crate) fn idealization_with_sin(plant: &JointPlant, state: JointState, sin_q: f64) -> f64 {
    let x = if plant.friction_on_position {
        state.q
    } else {
        state.dq
    };
    plant.friction_torque(x) + plant.gravity_amp * sin_q
}

/// Inertia compensation along the nominal motion, scaled by `intensity`.
pub fn feedforward_torque(plant: &JointPlant, gait: &NominalGait, phase: f64, intensity: f64) -> f64 {
    if intensity == 0.0 {
        return 0.0;
    }
    intensity * plant.inertia * gait.sample(phase).ddq
}

/// One classic Runge-Kutta step of `q' = dq, dq' = accel(t, q, dq)`.
#[inline]
pub fn rk4_step<F>(state: JointState, t: f64, dt: f64, accel: F) -> JointState
where
    F: Fn(f64, f64, f64) -> f64,
{
    let half = 0.5 * dt;
    let (q, v) = (state.q, state.dq);

    let a1 = accel(t, q, v);
    let (q2, v2) = (q + half * v, v + half * a1);
    let a2 = accel(t + half, q2, v2);
    let (q3, v3) = (q + half * v2, v + half * a2);
    let a3 = accel(t + half, q3, v3);
    let (q4, v4) = (q + dt * v3, v + dt * a3);
    let a4 = accel(t + dt, q4, v4);

    JointState {
        q: q + dt / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4),
        dq: v + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
    }
}

/// Advances the joint by `dt` with the controller torque held constant.
///
/// The controller torque is saturated to `[-u_max, u_max]`; the user torque is
/// applied as given.
pub fn step_dynamics(
    plant: &JointPlant,
    state: JointState,
    u_total: f64,
    u_ext: f64,
    dt: f64,
) -> Result<JointState> {
    ensure_finite("torque", &[u_total, u_ext])?;
    ensure_finite("state", &[state.q, state.dq])?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Range {
            what: "dt",
            value: dt,
            constraint: "must be finite and > 0",
        });
    }
    let drive = plant.saturate(u_total) + u_ext;
    let inv_j = 1.0 / plant.inertia;
    Ok(rk4_step(state, 0.0, dt, |_, q, dq| {
        (drive - plant.passive_torque(q, dq)) * inv_j
    }))
}
