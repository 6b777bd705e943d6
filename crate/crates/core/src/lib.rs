//! Variable-assistance control for exoskeleton joints.
//!
//! A joint is allowed to move freely inside a tube around its desired
//! trajectory. The [`filter`] module blends in a saturated PD backup policy
//! only as much as needed to keep the joint inside that tube, with the tube
//! width set by an assistance factor in `[0, 1]`.
//!
//! Module map:
//! - [`trajectory`]: nominal gaits and deadbeat re-splining after impacts
//! - [`guide`]: tube shapes and the guide function `h`
//! - [`plant`]: joint dynamics, idealization and feedforward torques
//! - [`filter`]: backup flows, robust viability value and the filtered torque
//! - [`assist`]: torque composition, baseline PID, haptic cue
//! - [`sim`]: closed-loop episodes, metrics and sweeps

pub mod assist;
pub mod error;
pub mod filter;
pub mod guide;
pub mod plant;
pub mod sim;
pub mod trajectory;

pub use assist::{LegPhase, Side, TorqueBreakdown};
pub use error::{Error, Result};
pub use filter::{BarrierValue, FilterOutput, FilterParams, FlowContext};
pub use guide::{AssistanceFactor, GuideSpec, ShapeParams, ShapeTag};
pub use plant::{JointPlant, JointState};
pub use sim::{
    run_episode, run_sweep, ControllerConfig, EpisodeConfig, EpisodeLog, Experiment, JointSetup, Metrics, UserModel,
    XiSchedule,
};
pub use trajectory::{DeadbeatSpline, NominalGait, StepTrajectory};
