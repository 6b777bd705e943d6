//! Assistive torque composition, joint selection and haptic feedback.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::guide::AssistanceFactor;
use crate::plant::{JointPlant, JointState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LegPhase {
    Stance,
    Swing,
}

impl LegPhase {
    pub fn flipped(self) -> Self {
        match self {
            LegPhase::Stance => LegPhase::Swing,
            LegPhase::Swing => LegPhase::Stance,
        }
    }
}

/// Whether a joint receives the assistive torque on this tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointSelection {
    pub assisted: bool,
    pub leg_phase: LegPhase,
}

impl JointSelection {
    /// Assistable joints are assisted only while their leg swings.
    pub fn new(leg_phase: LegPhase, assistable: bool) -> Self {
        Self {
            assisted: assistable && leg_phase == LegPhase::Swing,
            leg_phase,
        }
    }
}

/// Torque components of one joint on one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TorqueBreakdown {
    pub u_i: f64,
    pub u_f: f64,
    pub u_v: f64,
    pub u_a: f64,
    pub u_t: f64,
    pub u_cmd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TorqueInputs {
    pub u_i: f64,
    pub u_f: f64,
    pub u_v: f64,
    pub u_t: f64,
}

pub fn compose_command(inputs: TorqueInputs, selection: JointSelection, u_max: f64) -> TorqueBreakdown {
    let u_a = inputs.u_i + inputs.u_f + inputs.u_v;
    let raw = if selection.assisted { u_a } else { inputs.u_t };
    TorqueBreakdown {
        u_i: inputs.u_i,
        u_f: inputs.u_f,
        u_v: inputs.u_v,
        u_a,
        u_t: inputs.u_t,
        u_cmd: raw.clamp(-u_max, u_max),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidGains {
    pub kp: f64,
    pub kd: f64,
    pub ki: f64,
    /// Bound on `|ki * integral|` (N m).
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 3000.0,
            kd: 140.0,
            ki: 0.0,
            integral_limit: 5.0,
        }
    }
}

/// Running integral of the position error; owned by the caller and reset at
/// every impact.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidIntegral(pub f64);

impl PidIntegral {
    /// Accumulates `error * dt`, clamped so the integral torque stays within
    /// the limit.
    pub fn accumulate(&mut self, gains: &PidGains, error: f64, dt: f64) {
        self.0 += error * dt;
        if gains.ki > 0.0 {
            let cap = gains.integral_limit / gains.ki;
            self.0 = self.0.clamp(-cap, cap);
        }
    }
}

/// Baseline tracking torque, saturated at the actuator limit.
pub fn baseline_torque(
    gains: &PidGains,
    plant: &JointPlant,
    state: JointState,
    q_des: f64,
    dq_des: f64,
    integral: PidIntegral,
) -> f64 {
    let pd = gains.kp * (q_des - state.q) + gains.kd * (dq_des - state.dq);
    let i = if gains.ki == 0.0 {
        0.0
    } else {
        (gains.ki * integral.0).clamp(-gains.integral_limit, gains.integral_limit)
    };
    plant.saturate(pd + i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    None,
    Front,
    Back,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::None => "none",
            Side::Front => "front",
            Side::Back => "back",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vibration {
    pub intensity: f64,
    pub side: Side,
}

/// Vibration cue: normalized distance from the tube center, faded out as the
/// assistance factor approaches 1, on the side of the tracking error.
pub fn haptic_vibration(q: f64, q_des: f64, half_width: f64, xi: AssistanceFactor) -> Vibration {
    let side = if q > q_des {
        Side::Front
    } else if q < q_des {
        Side::Back
    } else {
        Side::None
    };
    let ratio = ((q - q_des) / half_width).abs();
    let fade = 1.0 - (30.0 * (xi.get() - 1.0)).exp();
    Vibration {
        intensity: (ratio * fade).clamp(0.0, 1.0),
        side,
    }
}
