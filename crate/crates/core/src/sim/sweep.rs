//! Assistance-factor sweeps.
//!
//! Repetition `r` runs with seed `base_seed + r` for every factor and user,
//! so cells that differ only in factor or user model see the same disturbance
//! noise and impact timing.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::guide::AssistanceFactor;
use crate::sim::metrics::{Metrics, METRIC_NAMES};
use crate::sim::{run_episode, Experiment, UserModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub xi: f64,
    pub user: &'static str,
    pub rep: usize,
    pub seed: u64,
    /// Episode metrics, or the error that ended the episode.
    pub outcome: std::result::Result<Metrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub xi: f64,
    pub user: &'static str,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean: Metrics,
    pub std: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
}

/// Runs one episode per (factor, user, repetition). Cells may run in
/// parallel on up to `threads` workers (all available when `None`); results
/// are ordered by cell index either way.
pub fn run_sweep(
    base: &Experiment,
    xi_values: &[AssistanceFactor],
    users: &[UserModel],
    repetitions: usize,
    threads: Option<usize>,
) -> Result<SweepTable> {
    if xi_values.is_empty() || users.is_empty() || repetitions == 0 {
        return Err(Error::InvalidInput(
            "sweep needs at least one factor, one user and one repetition".into(),
        ));
    }
    base.validate()?;

    let mut jobs = Vec::with_capacity(xi_values.len() * users.len() * repetitions);
    for &xi in xi_values {
        for user in users {
            for rep in 0..repetitions {
                jobs.push((xi, user, rep));
            }
        }
    }

    let run = |&(xi, user, rep): &(AssistanceFactor, &UserModel, usize)| {
        let exp = sweep_experiment(base, xi, user, rep);
        SweepRow {
            xi: xi.get(),
            user: user.kind_name(),
            rep,
            seed: exp.episode.seed,
            outcome: run_episode(&exp).map(|(_, m)| m).map_err(|e| e.to_string()),
        }
    };

    let rows: Vec<SweepRow> = match threads {
        Some(1) => jobs.iter().map(run).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(|| jobs.par_iter().map(run).collect()),
        None => jobs.par_iter().map(run).collect(),
    };
    let cells = aggregate(&rows);
    Ok(SweepTable { rows, cells })
}

/// The experiment a sweep runs for one (factor, user, repetition) cell entry.
pub fn sweep_experiment(base: &Experiment, xi: AssistanceFactor, user: &UserModel, rep: usize) -> Experiment {
    let mut exp = base.clone();
    exp.user = user.clone();
    exp.episode.xi_schedule = base.episode.xi_schedule.with_target(xi);
    exp.episode.seed = base.episode.seed.wrapping_add(rep as u64);
    exp
}

/// Mean and sample standard deviation per (factor, user), in first-seen order.
pub fn aggregate(rows: &[SweepRow]) -> Vec<SweepCell> {
    let mut keys: Vec<(f64, &'static str)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|&(x, u)| x == r.xi && u == r.user) {
            keys.push((r.xi, r.user));
        }
    }
    keys.into_iter()
        .map(|(xi, user)| {
            let cell: Vec<&SweepRow> = rows.iter().filter(|r| r.xi == xi && r.user == user).collect();
            let ok: Vec<[f64; 5]> = cell
                .iter()
                .filter_map(|r| r.outcome.as_ref().ok().map(Metrics::values))
                .collect();
            let n = ok.len();
            let mut mean = [0.0; 5];
            let mut std = [0.0; 5];
            if n > 0 {
                for v in &ok {
                    for i in 0..5 {
                        mean[i] += v[i] / n as f64;
                    }
                }
                if n > 1 {
                    for v in &ok {
                        for i in 0..5 {
                            std[i] += (v[i] - mean[i]).powi(2) / (n - 1) as f64;
                        }
                    }
                    std.iter_mut().for_each(|s| *s = s.sqrt());
                }
            }
            SweepCell {
                xi,
                user,
                n_ok: n,
                n_failed: cell.len() - n,
                mean: Metrics::from_values(mean),
                std: Metrics::from_values(std),
            }
        })
        .collect()
}

/// Whether the mean of `metric` for `user` never increases as the factor
/// grows. `None` when fewer than two cells exist or a cell has no data.
pub fn is_non_increasing(cells: &[SweepCell], user: &str, metric: &str) -> Option<bool> {
    let mut series = Vec::new();
    for c in cells.iter().filter(|c| c.user == user) {
        if c.n_ok == 0 {
            return None;
        }
        series.push((c.xi, c.mean.get(metric)?));
    }
    if series.len() < 2 {
        return None;
    }
    series.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(series.windows(2).all(|w| w[1].1 <= w[0].1))
}

impl SweepTable {
    /// One row per episode.
    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["xi", "user", "rep", "seed", "status"];
        header.extend(METRIC_NAMES);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.xi.to_string(),
                r.user.to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
            ];
            match &r.outcome {
                Ok(m) => {
                    rec.push("ok".into());
                    rec.extend(m.values().iter().map(|v| v.to_string()));
                }
                Err(e) => {
                    rec.push(format!("failed: {e}"));
                    rec.extend(std::iter::repeat(String::new()).take(METRIC_NAMES.len()));
                }
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Per-cell mean and standard deviation, plus the rms error and effort
    /// normalized by the full-assistance cell of the same user when present.
    pub fn write_cells_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["xi".to_string(), "user".into(), "n_ok".into(), "n_failed".into()];
        for m in METRIC_NAMES {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_std"));
        }
        header.push("rms_tracking_error_norm".into());
        header.push("user_effort_norm".into());
        w.write_record(&header)?;
        for c in &self.cells {
            let reference = self
                .cells
                .iter()
                .find(|r| r.user == c.user && r.xi == 1.0 && r.n_ok > 0);
            let mut rec = vec![
                c.xi.to_string(),
                c.user.to_string(),
                c.n_ok.to_string(),
                c.n_failed.to_string(),
            ];
            for (m, s) in c.mean.values().iter().zip(c.std.values()) {
                rec.push(m.to_string());
                rec.push(s.to_string());
            }
            let norm = |a: f64, b: Option<f64>| match b {
                Some(b) if b > 0.0 => (a / b).to_string(),
                _ => String::new(),
            };
            rec.push(norm(
                c.mean.rms_tracking_error,
                reference.map(|r| r.mean.rms_tracking_error),
            ));
            rec.push(norm(c.mean.user_effort, reference.map(|r| r.mean.user_effort)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
