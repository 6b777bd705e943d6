use std::io::Write;

use crate::assist::Side;
use crate::error::Result;

/// Column order of episode CSV files.
pub const EPISODE_COLUMNS: [&str; 20] = [
    "t", "phase", "q", "dq", "q_des", "qbound", "h", "h_omega", "lambda", "lambda_d", "u_i", "u_f",
    "u_v", "u_t", "u_cmd", "u_ext", "vib", "vib_side", "xi", "step_idx",
];

/// State, torques and filter internals of one joint on one control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub phase: f64,
    pub q: f64,
    pub dq: f64,
    pub q_des: f64,
    pub dq_des: f64,
    pub qbound: f64,
    pub h: f64,
    pub h_omega: f64,
    pub lambda: f64,
    pub lambda_d: f64,
    pub u_i: f64,
    pub u_f: f64,
    pub u_v: f64,
    pub u_b: f64,
    pub u_t: f64,
    pub u_cmd: f64,
    pub u_ext: f64,
    pub vib: f64,
    pub vib_side: Side,
    pub xi: f64,
    pub step_idx: usize,
    pub assisted: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointLog {
    pub name: String,
    pub records: Vec<TickRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step_idx: usize,
    /// Time of the impact that ended the step (s).
    pub impact_time: f64,
    /// Phase at which it ended (s).
    pub impact_phase: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeLog {
    pub control_dt: f64,
    pub joints: Vec<JointLog>,
    pub steps: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn joint(&self, name: &str) -> Option<&JointLog> {
        self.joints.iter().find(|j| j.name == name)
    }

    pub fn ticks(&self) -> usize {
        self.joints.first().map_or(0, |j| j.records.len())
    }
}

impl JointLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(EPISODE_COLUMNS)?;
        for r in &self.records {
            w.write_record(&[
                r.t.to_string(),
                r.phase.to_string(),
                r.q.to_string(),
                r.dq.to_string(),
                r.q_des.to_string(),
                r.qbound.to_string(),
                r.h.to_string(),
                r.h_omega.to_string(),
                r.lambda.to_string(),
                r.lambda_d.to_string(),
                r.u_i.to_string(),
                r.u_f.to_string(),
                r.u_v.to_string(),
                r.u_t.to_string(),
                r.u_cmd.to_string(),
                r.u_ext.to_string(),
                r.vib.to_string(),
                r.vib_side.to_string(),
                r.xi.to_string(),
                r.step_idx.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
