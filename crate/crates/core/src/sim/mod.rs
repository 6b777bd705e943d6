//! Closed-loop episodes: the composed controller driving simulated joints
//! against a synthetic user, with impacts, re-splining and logging.

mod impact;
mod log;
mod metrics;
mod sweep;
mod user;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use impact::{detect_impact, plan_impact, EarlyImpact, XiSchedule};
pub use log::{EpisodeLog, JointLog, StepRecord, TickRecord, EPISODE_COLUMNS};
pub use metrics::{compute_metrics, compute_metrics_from, Metrics, METRIC_NAMES};
pub use sweep::{aggregate, is_non_increasing, run_sweep, sweep_experiment, SweepCell, SweepRow, SweepTable};
pub use user::{NoiseSpec, UserModel};

use crate::assist::{
    baseline_torque, compose_command, haptic_vibration, JointSelection, LegPhase, PidGains, PidIntegral, TorqueInputs,
};
use crate::error::{ensure_finite, Error, Result};
use crate::filter::{filter_torque, BarrierValue, FilterParams, FlowContext};
use crate::guide::{barrier, make_shape, AssistanceFactor, GuideSpec, ShapeParams};
use crate::plant::{feedforward_torque, idealization_torque, step_dynamics, JointPlant, JointState};
use crate::trajectory::{make_deadbeat_spline, DeadbeatSpline, Harmonic, NominalGait, StepTrajectory};
use user::UserJoint;

/// Joint angle beyond which an episode is declared diverged (rad).
pub const DIVERGENCE_LIMIT: f64 = 10.0;

/// Slack on tube containment for discrete-time control (rad).
pub const CONTAINMENT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    /// Step length (m); carried along for reporting only.
    pub step_length: f64,
    pub step_duration: f64,
    pub n_steps: usize,
    pub xi_schedule: XiSchedule,
    pub early_impact: EarlyImpact,
    pub seed: u64,
    pub control_dt: f64,
    /// Offset added to every joint's initial angle (rad). Zero starts the
    /// episode on the nominal gait.
    pub initial_offset: f64,
    /// Leg phase of the simulated leg during the first step.
    pub start_leg: LegPhase,
    /// Flip between swing and stance at every impact.
    pub alternate_legs: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            step_length: 0.16,
            step_duration: 0.8,
            n_steps: 30,
            xi_schedule: XiSchedule::protocol_steps(0.8, 9, 3, AssistanceFactor::new(0.5).unwrap()),
            early_impact: EarlyImpact {
                probability: 0.5,
                min_fraction: 0.85,
                max_fraction: 1.0,
            },
            seed: 0,
            control_dt: 1e-3,
            initial_offset: 0.0,
            start_leg: LegPhase::Swing,
            alternate_legs: true,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "episode",
            &[self.step_length, self.step_duration, self.control_dt, self.initial_offset],
        )?;
        if self.control_dt <= 0.0 {
            return Err(Error::Range {
                what: "episode.control_dt",
                value: self.control_dt,
                constraint: "must be > 0",
            });
        }
        if self.step_duration <= 0.0 {
            return Err(Error::Range {
                what: "episode.step_duration",
                value: self.step_duration,
                constraint: "must be > 0",
            });
        }
        let ticks = self.step_duration / self.control_dt;
        if (ticks - ticks.round()).abs() > 1e-6 {
            return Err(Error::Range {
                what: "episode.control_dt",
                value: self.control_dt,
                constraint: "must divide the step duration",
            });
        }
        if self.n_steps == 0 {
            return Err(Error::Range {
                what: "episode.n_steps",
                value: 0.0,
                constraint: "must be >= 1",
            });
        }
        self.xi_schedule.validate()?;
        self.early_impact.validate()
    }

    fn ticks_per_step(&self) -> usize {
        (self.step_duration / self.control_dt).round() as usize
    }
}

/// One simulated joint.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSetup {
    pub name: String,
    pub gait: NominalGait,
    pub shape: ShapeParams,
    pub plant: JointPlant,
    /// Receives assistive torque while its leg swings.
    pub assistable: bool,
}

/// Sagittal hip and knee of one leg with representative periodic gaits.
pub fn default_joints(step_duration: f64) -> Result<Vec<JointSetup>> {
    let hip = NominalGait::periodic(
        0.05,
        vec![
            Harmonic {
                amplitude: 0.30,
                phase: 0.0,
            },
            Harmonic {
                amplitude: 0.04,
                phase: 0.5,
            },
        ],
        step_duration,
    )?;
    let knee = NominalGait::periodic(
        0.45,
        vec![
            Harmonic {
                amplitude: 0.35,
                phase: -std::f64::consts::FRAC_PI_2,
            },
            Harmonic {
                amplitude: 0.08,
                phase: 0.0,
            },
        ],
        step_duration,
    )?;
    Ok(vec![
        JointSetup {
            name: "hip".into(),
            gait: hip,
            shape: ShapeParams::Constant,
            plant: JointPlant::default(),
            assistable: true,
        },
        JointSetup {
            name: "knee".into(),
            gait: knee,
            shape: ShapeParams::Constant,
            plant: JointPlant {
                inertia: 0.8,
                gravity_amp: 10.0,
                ..JointPlant::default()
            },
            assistable: true,
        },
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub filter: FilterParams,
    /// Integral gain of the baseline PID; its P and D gains are the backup's.
    pub ki: f64,
    pub integral_limit: f64,
    /// Scales the friction and gravity compensation, in `[0, 1]`.
    pub idealization_intensity: f64,
    /// Scales the inertia feedforward, in `[0, 1]`.
    pub feedforward_intensity: f64,
    /// Deadbeat blend fraction of the step.
    pub alpha: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            filter: FilterParams::default(),
            ki: 100.0,
            integral_limit: 5.0,
            idealization_intensity: 1.0,
            feedforward_intensity: 1.0,
            alpha: crate::trajectory::DEFAULT_ALPHA,
        }
    }
}

impl ControllerConfig {
    pub fn pid(&self) -> PidGains {
        PidGains {
            kp: self.filter.kp,
            kd: self.filter.kd,
            ki: self.ki,
            integral_limit: self.integral_limit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        ensure_finite(
            "controller",
            &[self.ki, self.integral_limit, self.idealization_intensity, self.feedforward_intensity, self.alpha],
        )?;
        for (what, v) in [
            ("controller.idealization_intensity", self.idealization_intensity),
            ("controller.feedforward_intensity", self.feedforward_intensity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Range {
                    what,
                    value: v,
                    constraint: "must lie in [0, 1]",
                });
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Range {
                what: "controller.alpha",
                value: self.alpha,
                constraint: "must lie in (0, 1]",
            });
        }
        if self.ki < 0.0 || self.integral_limit < 0.0 {
            return Err(Error::Range {
                what: "controller.ki",
                value: self.ki.min(self.integral_limit),
                constraint: "ki and integral_limit must be >= 0",
            });
        }
        Ok(())
    }
}

/// Everything needed to run an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub episode: EpisodeConfig,
    pub joints: Vec<JointSetup>,
    pub controller: ControllerConfig,
    pub user: UserModel,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        self.controller.validate()?;
        self.user.validate()?;
        if self.joints.is_empty() {
            return Err(Error::InvalidInput("at least one joint is required".into()));
        }
        for j in &self.joints {
            j.plant.validate()?;
            if (j.gait.duration() - self.episode.step_duration).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "joint {} gait lasts {} s, episode steps last {} s",
                    j.name,
                    j.gait.duration(),
                    self.episode.step_duration
                )));
            }
            make_shape(&j.shape, AssistanceFactor::FULL, self.episode.step_duration)?;
        }
        Ok(())
    }

    /// Guides every joint would use for the given assistance factor.
    pub fn guides(&self, xi: AssistanceFactor) -> Result<Vec<GuideSpec>> {
        self.joints
            .iter()
            .map(|j| make_shape(&j.shape, xi, self.episode.step_duration))
            .collect()
    }
}

struct JointRun<'a> {
    setup: &'a JointSetup,
    state: JointState,
    spline: DeadbeatSpline,
    guide: GuideSpec,
    integral: PidIntegral,
    prev: Option<BarrierValue>,
    user: UserJoint,
    log: JointLog,
}

/// Runs one episode. Deterministic given the experiment (including its seed).
pub fn run_episode(exp: &Experiment) -> Result<(EpisodeLog, Metrics)> {
    exp.validate()?;
    let cfg = &exp.episode;
    let ctl = &exp.controller;
    let pid = ctl.pid();
    let dt = cfg.control_dt;
    let duration = cfg.step_duration;
    let ticks_per_step = cfg.ticks_per_step();

    let mut impact_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    impact_rng.set_stream(0);

    let mut xi = cfg.xi_schedule.at(0.0);
    let mut joints = Vec::with_capacity(exp.joints.len());
    for (j, setup) in exp.joints.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1 + j as u64);
        let start = setup.gait.sample(0.0);
        joints.push(JointRun {
            setup,
            state: JointState::new(start.q + cfg.initial_offset, start.dq),
            spline: DeadbeatSpline::identity(&setup.gait, 0.0),
            guide: make_shape(&setup.shape, xi, duration)?,
            integral: PidIntegral::default(),
            prev: None,
            user: UserJoint::new(rng),
            log: JointLog {
                name: setup.name.clone(),
                records: Vec::with_capacity(cfg.n_steps * ticks_per_step),
            },
        });
    }

    let mut leg = cfg.start_leg;
    let mut steps = Vec::with_capacity(cfg.n_steps);
    let mut step_idx = 0usize;
    let mut tick = 0usize;
    let mut step_start_tick = 0usize;
    let plan_ticks = |rng: &mut ChaCha8Rng| -> usize {
        let planned = plan_impact(&cfg.early_impact, duration, rng);
        ((planned / dt).round() as usize).clamp(1, ticks_per_step)
    };
    let mut impact_tick = plan_ticks(&mut impact_rng);

    loop {
        let t = tick as f64 * dt;
        let phase = ((tick - step_start_tick) as f64 * dt).min(duration);

        for run in joints.iter_mut() {
            let setup = run.setup;
            let plant = &setup.plant;
            let traj = StepTrajectory::new(&setup.gait, run.spline);
            let des = traj.at_phase(phase);
            let qbound = run.guide.qbound(phase);
            let ctx = FlowContext::new(traj, ctl.feedforward_intensity).with_idealization(ctl.idealization_intensity);

            let fo = filter_torque(&ctl.filter, plant, &run.guide, &ctx, run.state, phase, run.prev.as_ref(), dt)?;
            let u_i = ctl.idealization_intensity * idealization_torque(plant, run.state);
            let u_f = feedforward_torque(plant, &setup.gait, phase, ctl.feedforward_intensity);
            let u_t = baseline_torque(&pid, plant, run.state, des.q, des.dq, run.integral);
            let selection = JointSelection::new(leg, setup.assistable);
            let tb = compose_command(
                TorqueInputs {
                    u_i,
                    u_f,
                    u_v: fo.u_v,
                    u_t,
                },
                selection,
                plant.u_max,
            );
            let u_ext = run
                .user
                .torque(&exp.user, plant, &ctl.filter, run.state, des.q, des.dq, t, dt);
            let vib = haptic_vibration(run.state.q, des.q, qbound, xi);

            run.log.records.push(TickRecord {
                t,
                phase,
                q: run.state.q,
                dq: run.state.dq,
                q_des: des.q,
                dq_des: des.dq,
                qbound,
                h: barrier(des.q, run.state.q, qbound),
                h_omega: fo.barrier.h_omega,
                lambda: fo.lambda,
                lambda_d: fo.lambda_d,
                u_i,
                u_f,
                u_v: fo.u_v,
                u_b: fo.u_b,
                u_t,
                u_cmd: tb.u_cmd,
                u_ext,
                vib: vib.intensity,
                vib_side: vib.side,
                xi: xi.get(),
                step_idx,
                assisted: selection.assisted,
            });

            run.integral.accumulate(&pid, des.q - run.state.q, dt);
            run.prev = Some(fo.barrier);
            run.state = step_dynamics(plant, run.state, tb.u_cmd, u_ext, dt)?;
            if !(run.state.q.abs() <= DIVERGENCE_LIMIT && run.state.dq.is_finite()) {
                let q = run.state.q;
                let partial = EpisodeLog {
                    control_dt: dt,
                    joints: joints.into_iter().map(|r| r.log).collect(),
                    steps,
                };
                return Err(Error::Diverged {
                    time: t + dt,
                    q,
                    partial: Box::new(partial),
                });
            }
        }

        tick += 1;
        if tick - step_start_tick < impact_tick {
            continue;
        }

        let t_impact = tick as f64 * dt;
        steps.push(StepRecord {
            step_idx,
            impact_time: t_impact,
            impact_phase: (tick - step_start_tick) as f64 * dt,
        });
        step_idx += 1;
        if step_idx >= cfg.n_steps {
            break;
        }
        step_start_tick = tick;
        if cfg.alternate_legs {
            leg = leg.flipped();
        }
        xi = cfg.xi_schedule.at(t_impact);
        for run in joints.iter_mut() {
            run.spline = make_deadbeat_spline(run.state.q, run.state.dq, &run.setup.gait, ctl.alpha, t_impact)?;
            run.guide = make_shape(&run.setup.shape, xi, duration)?;
            run.integral = PidIntegral::default();
            run.prev = None;
        }
        impact_tick = plan_ticks(&mut impact_rng);
    }

    let log = EpisodeLog {
        control_dt: dt,
        joints: joints.into_iter().map(|r| r.log).collect(),
        steps,
    };
    let metrics = compute_metrics_from(&log, cfg.xi_schedule.settle_time() - 1e-9);
    Ok((log, metrics))
}
