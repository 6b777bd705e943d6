//! Virtual guide filter.
//!
//! The filter keeps a joint inside its guide tube by blending the user's freedom
//! with a saturated PD backup policy. Viability of the current state is judged
//! by integrating the closed loop under the backup policy over the rest of the
//! step, once for each extreme of the user torque:
//!
//! ```text
//! h_omega(t, x) = min over tau in [0, T - t], u_ext in {min, max} of h(phi_tau(x))
//! u_v = (lambda + (1 - lambda) lambda_d) u_b
//! lambda = clamp((1 + (xi^10 - 1) h_omega)^3, 0, 1)
//! ```
//!
//! The closed loop is monotone in a constant user torque, so the two extreme
//! flows bound every constant disturbance. Once `h_omega` reaches zero the
//! blend is exactly the backup torque, which keeps the state in the safe
//! backward image and therefore inside the tube. Time-varying disturbances
//! are covered only while the backup stays out of saturation.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::guide::{barrier, AssistanceFactor, GuideSpec};
use crate::plant::{idealization_with_sin, rk4_step, JointPlant, JointState};
use crate::trajectory::{DesiredSample, StepTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterParams {
    /// Backup proportional gain (N m/rad), shared with the baseline PID.
    pub kp: f64,
    /// Backup derivative gain (N m s/rad), shared with the baseline PID.
    pub kd: f64,
    /// Gain on the rate at which `h_omega` falls (s).
    pub zeta: f64,
    /// Number of horizon intervals sampled per flow.
    pub horizon_grid_n: usize,
    /// Period at which the predicted backup command is resampled, and the
    /// upper bound on the flow integration step (s).
    pub flow_dt: f64,
    /// Include the feedforward torque in the predicted closed loop.
    pub flow_feedforward: bool,
    /// Hold the predicted command over each `flow_dt` period from the current
    /// tick, as the sampled controller does. Otherwise the backup is
    /// re-evaluated continuously.
    pub hold_command: bool,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            kp: 3000.0,
            kd: 140.0,
            zeta: 0.05,
            horizon_grid_n: 32,
            flow_dt: 1e-3,
            flow_feedforward: true,
            hold_command: true,
        }
    }
}

/// Minimum integration substeps between two horizon samples.
const MIN_SUBSTEPS: usize = 4;

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("filter parameters", &[self.kp, self.kd, self.zeta, self.flow_dt])?;
        if self.kp <= 0.0 {
            return Err(Error::Range {
                what: "filter.kp",
                value: self.kp,
                constraint: "must be > 0",
            });
        }
        if self.kd <= 0.0 {
            return Err(Error::Range {
                what: "filter.kd",
                value: self.kd,
                constraint: "must be > 0",
            });
        }
        if self.zeta < 0.0 {
            return Err(Error::Range {
                what: "filter.zeta",
                value: self.zeta,
                constraint: "must be >= 0",
            });
        }
        if self.horizon_grid_n < 8 {
            return Err(Error::Range {
                what: "filter.horizon_grid_n",
                value: self.horizon_grid_n as f64,
                constraint: "must be >= 8",
            });
        }
        if self.flow_dt <= 0.0 {
            return Err(Error::Range {
                what: "filter.flow_dt",
                value: self.flow_dt,
                constraint: "must be > 0",
            });
        }
        Ok(())
    }

    /// Integration substeps per horizon interval of length `spacing`.
    ///
    /// The effective step is `min(flow_dt, horizon / (4 n))`, rounded down so it
    /// divides the sample spacing.
    pub fn substeps(&self, spacing: f64) -> usize {
        let k = (spacing / self.flow_dt - 1e-9).ceil();
        (k.max(0.0) as usize).max(MIN_SUBSTEPS)
    }
}

/// Everything the filter needs to predict the closed loop over the rest of a
/// step: the desired trajectory and how strongly the idealization and
/// feedforward torques are applied alongside the backup.
#[derive(Debug, Clone, Copy)]
pub struct FlowContext<'a> {
    pub trajectory: StepTrajectory<'a>,
    pub feedforward_intensity: f64,
    pub idealization_intensity: f64,
}

impl<'a> FlowContext<'a> {
    /// Context with full idealization.
    pub fn new(trajectory: StepTrajectory<'a>, feedforward_intensity: f64) -> Self {
        Self {
            trajectory,
            feedforward_intensity,
            idealization_intensity: 1.0,
        }
    }

    pub fn with_idealization(self, intensity: f64) -> Self {
        Self {
            idealization_intensity: intensity,
            ..self
        }
    }

    fn reference(&self, plant: &JointPlant, params: &FilterParams, phase: f64) -> RefPoint {
        self.reference_from(plant, params, self.trajectory.at_phase(phase))
    }

    fn reference_from(&self, plant: &JointPlant, params: &FilterParams, d: DesiredSample) -> RefPoint {
        let u_ff = if params.flow_feedforward && self.feedforward_intensity != 0.0 {
            self.feedforward_intensity * plant.inertia * d.ddq_nom
        } else {
            0.0
        };
        RefPoint {
            q: d.q,
            dq: d.dq,
            u_ff,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct RefPoint {
    q: f64,
    dq: f64,
    u_ff: f64,
}

/// Which user-torque extreme a flow assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extreme {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierValue {
    /// Robust viability value `h_omega`.
    pub h_omega: f64,
    /// Guide value at the current state.
    pub h_now: f64,
    /// Horizon time at which the minimum is reached (s).
    pub argmin_tau: f64,
    pub binding_extreme: Extreme,
}

/// Saturated PD law toward the desired trajectory.
#[inline]
pub fn backup_torque(
    params: &FilterParams,
    plant: &JointPlant,
    state: JointState,
    q_des: f64,
    dq_des: f64,
) -> f64 {
    plant.saturate(params.kp * (q_des - state.q) + params.kd * (dq_des - state.dq))
}

/// Summed command with the backup fully engaged, saturated as the plant does.
#[inline]
#[allow(clippy::too_many_arguments)]
fn backup_command(
    params: &FilterParams,
    plant: &JointPlant,
    r: &RefPoint,
    ideal: f64,
    q: f64,
    dq: f64,
    sin_q: f64,
) -> f64 {
    let u_b = plant.saturate(params.kp * (r.q - q) + params.kd * (r.dq - dq));
    let u_i = if ideal != 0.0 {
        ideal * idealization_with_sin(plant, JointState::new(q, dq), sin_q)
    } else {
        0.0
    };
    plant.saturate(u_i + u_b + r.u_ff)
}

/// Joint acceleration with the backup fully engaged and re-evaluated
/// continuously.
#[inline]
#[allow(clippy::too_many_arguments)]
fn closed_loop_accel(
    params: &FilterParams,
    plant: &JointPlant,
    r: &RefPoint,
    ideal: f64,
    q: f64,
    dq: f64,
    u_ext: f64,
    inv_j: f64,
) -> f64 {
    let u_c = plant.saturate(params.kp * (r.q - q) + params.kd * (r.dq - dq)) + r.u_ff;
    // Exact idealization cancels the passive torque unless the sum saturates.
    if ideal == 1.0
        && !plant.friction_on_position
        && u_c.abs() + plant.k_dry + plant.k_viscous * dq.abs() + plant.gravity_amp < plant.u_max
    {
        return (u_c + u_ext) * inv_j;
    }
    let sin_q = q.sin();
    let command = backup_command(params, plant, r, ideal, q, dq, sin_q);
    (command + u_ext - plant.friction_torque(dq) - plant.gravity_amp * sin_q) * inv_j
}

/// Integrates `N` closed-loop flows in lockstep (they share reference
/// evaluations) and reports every integration step as
/// `visit(tau, phase, q_des, states, node)`, starting with `tau = 0`.
/// `node` marks the `horizon_grid_n + 1` uniform horizon samples.
fn integrate_lockstep<const N: usize, F>(
    params: &FilterParams,
    plant: &JointPlant,
    ctx: &FlowContext<'_>,
    state: JointState,
    phase: f64,
    disturbances: [f64; N],
    visit: F,
) where
    F: FnMut(f64, f64, f64, &[JointState; N], bool),
{
    if params.hold_command {
        integrate_held(params, plant, ctx, state, phase, disturbances, visit)
    } else {
        integrate_continuous(params, plant, ctx, state, phase, disturbances, visit)
    }
}

/// Sampled backup: the command is recomputed every `flow_dt` from `tau = 0`
/// and held in between. Steps are split at grid nodes so they can be reported.
fn integrate_held<const N: usize, F>(
    params: &FilterParams,
    plant: &JointPlant,
    ctx: &FlowContext<'_>,
    state: JointState,
    phase: f64,
    disturbances: [f64; N],
    mut visit: F,
) where
    F: FnMut(f64, f64, f64, &[JointState; N], bool),
{
    const EPS: f64 = 1e-12;
    let end = ctx.trajectory.duration();
    let horizon = (end - phase).max(0.0);
    let mut states = [state; N];
    let mut des = ctx.trajectory.at_phase(phase);
    visit(0.0, phase, des.q, &states, true);
    if horizon <= 0.0 {
        return;
    }

    let n = params.horizon_grid_n;
    let spacing = horizon / n as f64;
    let node_time = |j: usize| if j == n { horizon } else { j as f64 * spacing };
    let period = params.flow_dt;
    let holds = ((horizon / period) - 1e-9).ceil().max(1.0) as usize;
    let inv_j = 1.0 / plant.inertia;
    let ideal = ctx.idealization_intensity;
    let mut next_node = 1;
    let mut held = [(0.0, 0.0, 0.0, 0.0); N];

    for m in 0..holds {
        let start = m as f64 * period;
        let stop = if m + 1 == holds { horizon } else { (m + 1) as f64 * period };
        let r = ctx.reference_from(plant, params, des);
        for ((h, s), &u) in held.iter_mut().zip(&states).zip(&disturbances) {
            let (sin0, cos0) = s.q.sin_cos();
            *h = (s.q, sin0, cos0, backup_command(params, plant, &r, ideal, s.q, s.dq, sin0) + u);
        }
        let mut t = start;
        while t < stop - EPS {
            let node_t = node_time(next_node);
            let (t1, node) = if node_t < stop - EPS {
                (node_t, true)
            } else {
                (stop, (node_t - stop).abs() <= EPS)
            };
            let dt = t1 - t;
            for (s, &(q0, sin0, cos0, drive)) in states.iter_mut().zip(&held) {
                // Gravity from a cubic expansion about q0; q moves by at most
                // a few mrad within one hold.
                let gravity = |q: f64| {
                    let d = q - q0;
                    plant.gravity_amp * (sin0 * (1.0 - 0.5 * d * d) + cos0 * d * (1.0 - d * d / 6.0))
                };
                *s = rk4_step(*s, 0.0, dt, |_, q, dq| {
                    (drive - plant.friction_torque(dq) - gravity(q)) * inv_j
                });
            }
            des = ctx.trajectory.at_phase(phase + t1);
            visit(t1, phase + t1, des.q, &states, node);
            if node {
                next_node += 1;
            }
            t = t1;
        }
    }
}

/// Backup re-evaluated at every RK4 stage, `k` substeps per grid interval.
fn integrate_continuous<const N: usize, F>(
    params: &FilterParams,
    plant: &JointPlant,
    ctx: &FlowContext<'_>,
    state: JointState,
    phase: f64,
    disturbances: [f64; N],
    mut visit: F,
) where
    F: FnMut(f64, f64, f64, &[JointState; N], bool),
{
    let end = ctx.trajectory.duration();
    let horizon = (end - phase).max(0.0);
    let mut states = [state; N];
    let mut r0 = ctx.reference(plant, params, phase);
    visit(0.0, phase, r0.q, &states, true);
    if horizon <= 0.0 {
        return;
    }

    let n = params.horizon_grid_n;
    let spacing = horizon / n as f64;
    let k = params.substeps(spacing);
    let dt = spacing / k as f64;
    let half = 0.5 * dt;
    let inv_j = 1.0 / plant.inertia;
    let ideal = ctx.idealization_intensity;

    for j in 0..n {
        let seg_start = phase + j as f64 * spacing;
        for i in 0..k {
            let t0 = seg_start + i as f64 * dt;
            let r1 = ctx.reference(plant, params, t0 + dt);
            let rm = ctx.reference(plant, params, t0 + half);
            for (s, &u) in states.iter_mut().zip(disturbances.iter()) {
                let (q, v) = (s.q, s.dq);
                let a1 = closed_loop_accel(params, plant, &r0, ideal, q, v, u, inv_j);
                let (q2, v2) = (q + half * v, v + half * a1);
                let a2 = closed_loop_accel(params, plant, &rm, ideal, q2, v2, u, inv_j);
                let (q3, v3) = (q + half * v2, v + half * a2);
                let a3 = closed_loop_accel(params, plant, &rm, ideal, q3, v3, u, inv_j);
                let (q4, v4) = (q + dt * v3, v + dt * a3);
                let a4 = closed_loop_accel(params, plant, &r1, ideal, q4, v4, u, inv_j);
                s.q = q + dt / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4);
                s.dq = v + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            }
            r0 = r1;
            let tau = j as f64 * spacing + (i + 1) as f64 * dt;
            visit(tau, phase + tau, r0.q, &states, i + 1 == k);
        }
    }
}

/// One sample of a backup flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub tau: f64,
    pub state: JointState,
}

/// Closed-loop trajectory under the backup policy and a constant user torque,
/// from `phase` to the end of the step, sampled at `horizon_grid_n + 1`
/// uniformly spaced horizon times.
pub fn flow_under_backup(
    params: &FilterParams,
    plant: &JointPlant,
    ctx: &FlowContext<'_>,
    state: JointState,
    phase: f64,
    u_ext: f64,
) -> Result<Vec<FlowSample>> {
    ensure_finite("flow input", &[state.q, state.dq, phase, u_ext])?;
    if u_ext < plant.uext_min || u_ext > plant.uext_max {
        return Err(Error::Range {
            what: "u_ext",
            value: u_ext,
            constraint: "must lie in [uext_min, uext_max]",
        });
    }
    if phase < 0.0 || phase > ctx.trajectory.duration() {
        return Err(Error::Range {
            what: "phase",
            value: phase,
            constraint: "must lie in [0, T]",
        });
    }
    let mut out = Vec::with_capacity(params.horizon_grid_n + 1);
    integrate_lockstep(params, plant, ctx, state, phase, [u_ext], |tau, _, _, s, node| {
        if node {
            out.push(FlowSample { tau, state: s[0] })
        }
    });
    Ok(out)
}

/// Robust viability value of `state` at `phase`.
pub fn eval_h_omega(
    params: &FilterParams,
    plant: &JointPlant,
    guide: &GuideSpec,
    ctx: &FlowContext<'_>,
    state: JointState,
    phase: f64,
) -> BarrierValue {
    let phase = phase.clamp(0.0, ctx.trajectory.duration());
    let h_now = barrier(ctx.trajectory.at_phase(phase).q, state.q, guide.qbound(phase));
    let mut best = BarrierValue {
        h_omega: h_now,
        h_now,
        argmin_tau: 0.0,
        binding_extreme: Extreme::Min,
    };
    integrate_lockstep(
        params,
        plant,
        ctx,
        state,
        phase,
        [plant.uext_min, plant.uext_max],
        |tau, p, q_des, states, _| {
            if tau == 0.0 {
                return;
            }
            let bound = guide.qbound(p);
            for (s, extreme) in states.iter().zip([Extreme::Min, Extreme::Max]) {
                let h = barrier(q_des, s.q, bound);
                if h < best.h_omega {
                    best.h_omega = h;
                    best.argmin_tau = tau;
                    best.binding_extreme = extreme;
                }
            }
        },
    );
    best
}

/// Intervention weight from the robust viability value.
pub fn eval_lambda(xi: AssistanceFactor, h_omega: f64) -> f64 {
    let base = 1.0 + (xi.get().powi(10) - 1.0) * h_omega;
    (base * base * base).clamp(0.0, 1.0)
}

/// Damping weight from the backward difference of `h_omega` across ticks.
///
/// Positive only while `h_omega` falls; zero on the first tick of a step.
pub fn eval_lambda_d(params: &FilterParams, h_omega_now: f64, h_omega_prev: Option<f64>, dt: f64) -> f64 {
    match h_omega_prev {
        Some(prev) if dt > 0.0 => (params.zeta * (prev - h_omega_now) / dt).clamp(0.0, 1.0),
        _ => 0.0,
    }
}

/// Result of one filter evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOutput {
    pub u_v: f64,
    pub u_b: f64,
    pub lambda: f64,
    pub lambda_d: f64,
    /// `lambda + (1 - lambda) lambda_d`, in `[0, 1]`.
    pub blend: f64,
    pub barrier: BarrierValue,
}

/// Blended guide torque for the current tick.
///
/// `prev` is the barrier value of the previous tick of the same step; `dt` the
/// control period separating them.
#[allow(clippy::too_many_arguments)]
pub fn filter_torque(
    params: &FilterParams,
    plant: &JointPlant,
    guide: &GuideSpec,
    ctx: &FlowContext<'_>,
    state: JointState,
    phase: f64,
    prev: Option<&BarrierValue>,
    dt: f64,
) -> Result<FilterOutput> {
    ensure_finite("filter state", &[state.q, state.dq, phase])?;
    let barrier = eval_h_omega(params, plant, guide, ctx, state, phase);
    let des = ctx.trajectory.at_phase(phase);
    let u_b = backup_torque(params, plant, state, des.q, des.dq);
    let lambda = eval_lambda(guide.xi(), barrier.h_omega);
    let lambda_d = eval_lambda_d(params, barrier.h_omega, prev.map(|p| p.h_omega), dt);
    let blend = if barrier.h_omega <= 0.0 {
        1.0
    } else {
        (lambda + (1.0 - lambda) * lambda_d).clamp(0.0, 1.0)
    };
    let u_v = if blend == 1.0 { u_b } else { blend * u_b };
    Ok(FilterOutput {
        u_v,
        u_b,
        lambda,
        lambda_d,
        blend,
        barrier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guide::{make_shape, ShapeParams};
    use crate::trajectory::{make_deadbeat_spline, DeadbeatSpline, NominalGait};
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn xi(v: f64) -> AssistanceFactor {
        AssistanceFactor::new(v).unwrap()
    }

    fn plant() -> JointPlant {
        JointPlant::ideal(1.5, 120.0, 40.0)
    }

    #[test]
    fn backup_examples() {
        let p = FilterParams {
            kp: 100.0,
            ..FilterParams::default()
        };
        let pl = plant();
        assert_eq!(backup_torque(&p, &pl, JointState::new(0.2, 0.5), 0.2, 0.5), 0.0);
        assert!((backup_torque(&p, &pl, JointState::new(0.0, 0.5), 0.1, 0.5) - 10.0).abs() < 1e-12);
        assert_eq!(backup_torque(&p, &pl, JointState::new(0.0, 0.0), 5.0, 0.0), 120.0);
        assert_eq!(backup_torque(&p, &pl, JointState::new(5.0, 0.0), 0.0, 0.0), -120.0);
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(eval_lambda(xi(1.0), 0.37), 1.0);
        assert_eq!(eval_lambda(xi(1.0), -2.0), 1.0);
        assert_eq!(eval_lambda(xi(0.0), 1.0), 0.0);
        assert_eq!(eval_lambda(xi(0.0), 0.0), 1.0);
        assert_eq!(eval_lambda(xi(0.0), -0.5), 1.0);
    }

    #[test]
    fn lambda_d_examples() {
        let p = FilterParams::default();
        assert_eq!(eval_lambda_d(&p, 0.6, Some(0.6), 1e-3), 0.0);
        assert_eq!(eval_lambda_d(&p, 0.6, None, 1e-3), 0.0);
        let off = FilterParams { zeta: 0.0, ..p };
        assert_eq!(eval_lambda_d(&off, 0.2, Some(0.9), 1e-3), 0.0);

        // synthetic h falling at rate r with zeta * r = 0.5
        let zeta = 0.05;
        let rate = 0.5 / zeta;
        let dt = 1e-3;
        let p = FilterParams { zeta, ..p };
        let h: Vec<f64> = (0..5).map(|i| 0.9 - rate * dt * i as f64).collect();
        for w in h.windows(2) {
            let hand = zeta * (w[0] - w[1]) / dt;
            let got = eval_lambda_d(&p, w[1], Some(w[0]), dt);
            assert!((hand - 0.5).abs() < 1e-9);
            assert!((got - hand).abs() < 1e-12);
        }
        // rising h never subtracts assistance
        assert_eq!(eval_lambda_d(&p, 0.9, Some(0.5), dt), 0.0);
    }

    #[test]
    fn flow_stays_at_equilibrium() {
        let gait = NominalGait::constant(0.2, 0.8).unwrap();
        let ctx = FlowContext::new(StepTrajectory::new(&gait, DeadbeatSpline::identity(&gait, 0.0)), 1.0);
        let params = FilterParams::default();
        let flow = flow_under_backup(&params, &plant(), &ctx, JointState::new(0.2, 0.0), 0.1, 0.0).unwrap();
        assert_eq!(flow.len(), params.horizon_grid_n + 1);
        for s in &flow {
            assert_eq!(s.state, JointState::new(0.2, 0.0));
        }
        assert!((flow.last().unwrap().tau - 0.7).abs() < 1e-12);
    }

    #[test]
    fn flow_rejects_out_of_range_disturbance() {
        let gait = NominalGait::constant(0.0, 0.8).unwrap();
        let ctx = FlowContext::new(StepTrajectory::new(&gait, DeadbeatSpline::identity(&gait, 0.0)), 1.0);
        let r = flow_under_backup(&FilterParams::default(), &plant(), &ctx, JointState::default(), 0.0, 41.0);
        assert!(r.is_err());
    }

    #[test]
    fn refined_grid_agrees_on_shared_samples() {
        let gait = NominalGait::sinusoid(0.0, 0.3, TAU / 0.8, 0.8).unwrap();
        let ctx = FlowContext::new(StepTrajectory::new(&gait, DeadbeatSpline::identity(&gait, 0.0)), 1.0);
        let pl = plant();
        // 0.64 s horizon: spacing 20 ms (n=32) and 10 ms (n=64), both integrated at 1 ms
        let coarse = FilterParams::default();
        let fine = FilterParams {
            horizon_grid_n: 64,
            ..coarse
        };
        let s0 = JointState::new(0.05, 0.4);
        let a = flow_under_backup(&coarse, &pl, &ctx, s0, 0.16, 25.0).unwrap();
        let b = flow_under_backup(&fine, &pl, &ctx, s0, 0.16, 25.0).unwrap();
        for (i, s) in a.iter().enumerate() {
            let t = b[2 * i];
            assert!((s.tau - t.tau).abs() < 1e-12);
            assert!((s.state.q - t.state.q).abs() < 1e-9);
            assert!((s.state.dq - t.state.dq).abs() < 1e-9);
        }
    }

    #[test]
    fn boundary_state_is_not_viable() {
        let gait = NominalGait::sinusoid(0.0, 0.3, TAU / 0.8, 0.8).unwrap();
        let ctx = FlowContext::new(StepTrajectory::new(&gait, DeadbeatSpline::identity(&gait, 0.0)), 1.0);
        let guide = make_shape(&ShapeParams::Constant, xi(0.5), 0.8).unwrap();
        let phase = 0.3;
        let q = gait.q(phase) + guide.qbound(phase);
        let b = eval_h_omega(&FilterParams::default(), &plant(), &guide, &ctx, JointState::new(q, gait.dq(phase)), phase);
        assert!(b.h_now.abs() < 1e-12);
        assert!(b.h_omega <= 1e-9);
    }

    #[test]
    fn empty_horizon_returns_current_value() {
        let gait = NominalGait::sinusoid(0.0, 0.3, TAU / 0.8, 0.8).unwrap();
        let ctx = FlowContext::new(StepTrajectory::new(&gait, DeadbeatSpline::identity(&gait, 0.0)), 1.0);
        let guide = make_shape(&ShapeParams::Constant, xi(0.0), 0.8).unwrap();
        let s = JointState::new(gait.q(0.8) + 0.05, 3.0);
        let b = eval_h_omega(&FilterParams::default(), &plant(), &guide, &ctx, s, 0.8);
        assert_eq!(b.h_omega, b.h_now);
        assert_eq!(b.argmin_tau, 0.0);
    }

    #[test]
    fn center_of_wide_tube_is_viable() {
        let gait = NominalGait::constant(0.0, 0.8).unwrap();
        let ctx = FlowContext::new(StepTrajectory::new(&gait, DeadbeatSpline::identity(&gait, 0.0)), 1.0);
        let guide = make_shape(&ShapeParams::Constant, xi(0.0), 0.8).unwrap();
        let quiet = JointPlant::ideal(1.5, 120.0, 0.0);
        let strong = FilterParams::default();
        let b = eval_h_omega(&strong, &quiet, &guide, &ctx, JointState::default(), 0.0);
        assert!((b.h_omega - 1.0).abs() < 1e-3);

        // with user torque the worst extreme sets the value
        let b = eval_h_omega(&strong, &plant(), &guide, &ctx, JointState::default(), 0.0);
        let steady = 40.0 / strong.kp / guide.qbound(0.0);
        assert!(b.h_omega < 1.0 && b.h_omega > 1.0 - 1.5 * steady * steady);
    }

    #[test]
    fn full_assistance_reproduces_backup() {
        let gait = NominalGait::sinusoid(0.1, 0.3, TAU / 0.8, 0.8).unwrap();
        let spline = make_deadbeat_spline(0.2, 0.1, &gait, 0.25, 0.0).unwrap();
        let ctx = FlowContext::new(StepTrajectory::new(&gait, spline), 1.0);
        let guide = make_shape(&ShapeParams::Constant, xi(1.0), 0.8).unwrap();
        let out = filter_torque(
            &FilterParams::default(),
            &plant(),
            &guide,
            &ctx,
            JointState::new(0.21, 0.3),
            0.05,
            None,
            1e-3,
        )
        .unwrap();
        assert_eq!(out.u_v, out.u_b);
        assert_eq!(out.lambda, 1.0);
    }

    #[test]
    fn no_assistance_at_center_is_transparent() {
        let gait = NominalGait::constant(0.0, 0.8).unwrap();
        let ctx = FlowContext::new(StepTrajectory::new(&gait, DeadbeatSpline::identity(&gait, 0.0)), 1.0);
        let guide = make_shape(&ShapeParams::Constant, xi(0.0), 0.8).unwrap();
        let quiet = JointPlant::ideal(1.5, 120.0, 0.0);
        let params = FilterParams {
            zeta: 0.0,
            ..FilterParams::default()
        };
        // slightly off center so u_b is not zero
        let s = JointState::new(1e-4, 0.0);
        let out = filter_torque(&params, &quiet, &guide, &ctx, s, 0.0, None, 1e-3).unwrap();
        assert!(out.barrier.h_omega > 0.999);
        assert!(out.u_v.abs() < 1e-6 * out.u_b.abs());
    }

    #[test]
    fn boundary_state_gets_full_backup() {
        let gait = NominalGait::constant(0.0, 0.8).unwrap();
        let ctx = FlowContext::new(StepTrajectory::new(&gait, DeadbeatSpline::identity(&gait, 0.0)), 1.0);
        let guide = make_shape(&ShapeParams::Constant, xi(0.25), 0.8).unwrap();
        let s = JointState::new(guide.qbound(0.2), 0.1);
        let out = filter_torque(&FilterParams::default(), &plant(), &guide, &ctx, s, 0.2, None, 1e-3).unwrap();
        assert_eq!(out.blend, 1.0);
        assert_eq!(out.u_v, out.u_b);
    }

    proptest! {
        #[test]
        fn blend_bounds(x in 0.0f64..=1.0, h in -2.0f64..=1.0, ld in 0.0f64..=1.0) {
            let l = eval_lambda(xi(x), h);
            prop_assert!((0.0..=1.0).contains(&l));
            let blend = l + (1.0 - l) * ld;
            prop_assert!((0.0..=1.0 + 1e-15).contains(&blend));
            if h <= 0.0 {
                prop_assert_eq!(l, 1.0);
            }
        }

        #[test]
        fn lambda_monotone(x in 0.0f64..=1.0, h in 0.0f64..=1.0, dh in 0.0f64..0.5, dx in 0.0f64..0.5) {
            // less viable -> more intervention
            prop_assert!(eval_lambda(xi(x), h) >= eval_lambda(xi(x), (h + dh).min(1.0)));
            // more assistance -> more intervention
            prop_assert!(eval_lambda(xi((x + dx).min(1.0)), h) >= eval_lambda(xi(x), h));
        }

        #[test]
        fn h_omega_below_h_now(
            dq0 in -1.0f64..1.0,
            off in -0.9f64..0.9,
            phase in 0.0f64..0.8,
            x in 0.0f64..1.0,
        ) {
            let gait = NominalGait::sinusoid(0.1, 0.3, TAU / 0.8, 0.8).unwrap();
            let ctx = FlowContext::new(StepTrajectory::new(&gait, DeadbeatSpline::identity(&gait, 0.0)), 1.0);
            let guide = make_shape(&ShapeParams::Sinusoidal { modulation: 0.4, cycles: 1, offset: 0.0 }, xi(x), 0.8).unwrap();
            let q = gait.q(phase) + off * guide.qbound(phase);
            let params = FilterParams { horizon_grid_n: 8, flow_dt: 4e-3, ..FilterParams::default() };
            let b = eval_h_omega(&params, &plant(), &guide, &ctx, JointState::new(q, gait.dq(phase) + dq0), phase);
            prop_assert!(b.h_omega <= b.h_now + 1e-9);
            prop_assert!(b.h_omega <= 1.0);
        }
    }
}
