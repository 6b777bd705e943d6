//! Step timing: when impacts happen and which assistance factor each step uses.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::guide::AssistanceFactor;

/// Early heel strike model: with probability `probability` a step ends at
/// `f * T` with `f ~ U(min_fraction, max_fraction)`, otherwise at `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EarlyImpact {
    pub probability: f64,
    pub min_fraction: f64,
    pub max_fraction: f64,
}

impl Default for EarlyImpact {
    fn default() -> Self {
        Self {
            probability: 0.0,
            min_fraction: 0.85,
            max_fraction: 1.0,
        }
    }
}

impl EarlyImpact {
    pub fn never() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "early impact",
            &[self.probability, self.min_fraction, self.max_fraction],
        )?;
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::Range {
                what: "episode.early_impact.probability",
                value: self.probability,
                constraint: "must lie in [0, 1]",
            });
        }
        if !(self.min_fraction > 0.0
            && self.min_fraction <= self.max_fraction
            && self.max_fraction <= 1.0)
        {
            return Err(Error::Range {
                what: "episode.early_impact.min_fraction",
                value: self.min_fraction,
                constraint: "need 0 < min_fraction <= max_fraction <= 1",
            });
        }
        Ok(())
    }
}

/// Draws the phase at which the current step will end. Always consumes the
/// same number of random draws so streams stay aligned across configurations.
pub fn plan_impact(early: &EarlyImpact, duration: f64, rng: &mut ChaCha8Rng) -> f64 {
    let coin: f64 = rng.gen();
    let u: f64 = rng.gen();
    if coin < early.probability {
        let f = early.min_fraction + (early.max_fraction - early.min_fraction) * u;
        f * duration
    } else {
        duration
    }
}

/// Whether a step planned to end at `planned_phase` has ended at `phase`.
/// A step never outlives its nominal duration.
pub fn detect_impact(planned_phase: f64, duration: f64, phase: f64, tol: f64) -> bool {
    phase >= planned_phase.min(duration) - tol
}

/// Impact times are tick multiples; treat times this close to a segment start
/// as inside the new segment.
const BOUNDARY_TOL: f64 = 1e-9;

/// Assistance factor as a function of time, looked up at every impact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum XiSchedule {
    Constant { xi: AssistanceFactor },
    /// Full assistance, a linear transition, then the target factor.
    Protocol {
        full_s: f64,
        transition_s: f64,
        target: AssistanceFactor,
    },
    /// Explicit `(start time, factor)` segments; the first must start at 0.
    Segments {
        starts: Vec<f64>,
        values: Vec<AssistanceFactor>,
    },
}

impl XiSchedule {
    pub fn constant(xi: AssistanceFactor) -> Self {
        XiSchedule::Constant { xi }
    }

    /// Full-assist, transition and target phases measured in nominal steps.
    pub fn protocol_steps(step_duration: f64, full_steps: u32, transition_steps: u32, target: AssistanceFactor) -> Self {
        XiSchedule::Protocol {
            full_s: full_steps as f64 * step_duration,
            transition_s: transition_steps as f64 * step_duration,
            target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            XiSchedule::Constant { .. } => Ok(()),
            XiSchedule::Protocol {
                full_s,
                transition_s,
                ..
            } => {
                ensure_finite("xi protocol", &[*full_s, *transition_s])?;
                if *full_s < 0.0 || *transition_s < 0.0 {
                    return Err(Error::Range {
                        what: "episode.xi_schedule",
                        value: full_s.min(*transition_s),
                        constraint: "protocol durations must be >= 0",
                    });
                }
                Ok(())
            }
            XiSchedule::Segments { starts, values } => {
                if starts.is_empty() || starts.len() != values.len() || starts[0] != 0.0 {
                    return Err(Error::InvalidInput(
                        "xi segments need matching starts/values, the first starting at 0".into(),
                    ));
                }
                ensure_finite("xi segment starts", starts)?;
                if starts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidInput(
                        "xi segment starts must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn at(&self, t: f64) -> AssistanceFactor {
        match self {
            XiSchedule::Constant { xi } => *xi,
            XiSchedule::Protocol {
                full_s,
                transition_s,
                target,
            } => {
                if t < full_s - BOUNDARY_TOL {
                    AssistanceFactor::FULL
                } else if t < full_s + transition_s - BOUNDARY_TOL {
                    let f = ((t - full_s) / transition_s).clamp(0.0, 1.0);
                    AssistanceFactor::new(1.0 + (target.get() - 1.0) * f).unwrap_or(*target)
                } else {
                    *target
                }
            }
            XiSchedule::Segments { starts, values } => {
                let n = starts.partition_point(|&s| s <= t + BOUNDARY_TOL).max(1);
                values[n - 1]
            }
        }
    }

    /// Time from which the factor stays at its final value.
    pub fn settle_time(&self) -> f64 {
        match self {
            XiSchedule::Constant { .. } => 0.0,
            XiSchedule::Protocol {
                full_s,
                transition_s,
                ..
            } => full_s + transition_s,
            XiSchedule::Segments { starts, .. } => *starts.last().unwrap_or(&0.0),
        }
    }

    pub fn target(&self) -> AssistanceFactor {
        match self {
            XiSchedule::Constant { xi } => *xi,
            XiSchedule::Protocol { target, .. } => *target,
            XiSchedule::Segments { values, .. } => *values.last().unwrap_or(&AssistanceFactor::FULL),
        }
    }

    /// Same schedule with a different final factor.
    pub fn with_target(&self, xi: AssistanceFactor) -> Self {
        match self {
            XiSchedule::Constant { .. } => XiSchedule::Constant { xi },
            XiSchedule::Protocol {
                full_s,
                transition_s,
                ..
            } => XiSchedule::Protocol {
                full_s: *full_s,
                transition_s: *transition_s,
                target: xi,
            },
            XiSchedule::Segments { starts, values } => {
                let mut values = values.clone();
                if let Some(last) = values.last_mut() {
                    *last = xi;
                }
                XiSchedule::Segments {
                    starts: starts.clone(),
                    values,
                }
            }
        }
    }
}
