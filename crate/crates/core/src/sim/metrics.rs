use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::sim::log::{EpisodeLog, TickRecord};

/// Episode summary. Integrals use the trapezoid rule over control ticks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Metrics {
    /// RMS of `q - q_des` over all joints and ticks (rad).
    pub rms_tracking_error: f64,
    /// Largest excursion beyond the tube, 0 when contained (rad).
    pub max_tube_violation: f64,
    /// Integral of the squared user torque, summed over joints (N^2 m^2 s).
    pub user_effort: f64,
    /// Integral of `|u_v dq|`, summed over joints (J).
    pub assist_energy: f64,
    /// Fraction of joint-ticks inside the tube.
    pub containment_fraction: f64,
}

pub const METRIC_NAMES: [&str; 5] = [
    "rms_tracking_error",
    "max_tube_violation",
    "user_effort",
    "assist_energy",
    "containment_fraction",
];

impl Metrics {
    pub fn values(&self) -> [f64; 5] {
        [
            self.rms_tracking_error,
            self.max_tube_violation,
            self.user_effort,
            self.assist_energy,
            self.containment_fraction,
        ]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Self {
            rms_tracking_error: v[0],
            max_tube_violation: v[1],
            user_effort: v[2],
            assist_energy: v[3],
            containment_fraction: v[4],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        METRIC_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| self.values()[i])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(METRIC_NAMES)?;
        w.write_record(self.values().iter().map(|v| v.to_string()))?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn trapezoid(records: &[&TickRecord], f: impl Fn(&TickRecord) -> f64) -> f64 {
    records
        .windows(2)
        .map(|w| 0.5 * (f(w[0]) + f(w[1])) * (w[1].t - w[0].t))
        .sum()
}

/// Metrics over the ticks at or after `t_from`.
pub fn compute_metrics_from(log: &EpisodeLog, t_from: f64) -> Metrics {
    let mut sq_err = 0.0;
    let mut n = 0usize;
    let mut inside = 0usize;
    let mut violation: f64 = 0.0;
    let mut effort = 0.0;
    let mut energy = 0.0;
    for joint in &log.joints {
        let recs: Vec<&TickRecord> = joint.records.iter().filter(|r| r.t >= t_from).collect();
        for r in &recs {
            let e = r.q - r.q_des;
            sq_err += e * e;
            n += 1;
            let excess = e.abs() - r.qbound;
            if excess <= 0.0 {
                inside += 1;
            }
            violation = violation.max(excess);
        }
        effort += trapezoid(&recs, |r| r.u_ext * r.u_ext);
        energy += trapezoid(&recs, |r| (r.u_v * r.dq).abs());
    }
    if n == 0 {
        return Metrics::default();
    }
    Metrics {
        rms_tracking_error: (sq_err / n as f64).sqrt(),
        max_tube_violation: violation.max(0.0),
        user_effort: effort,
        assist_energy: energy,
        containment_fraction: inside as f64 / n as f64,
    }
}

pub fn compute_metrics(log: &EpisodeLog) -> Metrics {
    compute_metrics_from(log, f64::NEG_INFINITY)
}
