//! The `run`, `sweep` and `shapes` subcommands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use vguide::sim::{
    compute_metrics, is_non_increasing, run_sweep, sweep_experiment, EpisodeLog, CONTAINMENT_TOLERANCE,
};
use vguide::{run_episode, AssistanceFactor, Error as CoreError};

use crate::scenario::ScenarioFile;
use crate::{CliError, Status};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `output.dir`.
    pub out: Option<PathBuf>,
    /// Overrides `episode.seed`.
    pub seed: Option<u64>,
    /// Fail when any joint leaves its tube by more than the containment
    /// tolerance.
    pub strict: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Overrides `sweep.xi`.
    pub xi: Option<Vec<f64>>,
    /// Also write the per-tick logs of every episode under `logs/`.
    pub full_logs: bool,
    /// Fail when any episode of the sweep fails.
    pub strict: bool,
    /// Worker cap; all cores when `None`.
    pub threads: Option<usize>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Creates `path` and hands a buffered writer to `fill`.
fn write_file(
    path: &Path,
    fill: impl FnOnce(&mut BufWriter<File>) -> Result<(), CoreError>,
) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    fill(&mut w).map_err(|e| match e {
        CoreError::Csv(c) => CliError::Io {
            path: path.to_path_buf(),
            source: c.into(),
        },
        other => other.into(),
    })?;
    w.flush().map_err(io_err(path))
}

/// Applies command-line overrides, creates the output directory and echoes
/// the effective configuration to `stdout` and `effective_config.toml`.
fn prepare(
    scenario: &mut ScenarioFile,
    out: &Option<PathBuf>,
    seed: Option<u64>,
    stdout: &mut dyn Write,
) -> Result<PathBuf, CliError> {
    if let Some(dir) = out {
        scenario.output.dir = dir.clone();
    }
    if let Some(seed) = seed {
        if seed > i64::MAX as u64 {
            return Err(CliError::Usage(format!("--seed {seed} does not fit in a signed 64-bit integer")));
        }
        scenario.episode.seed = seed;
    }
    let dir = scenario.output.dir.clone();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let text = scenario.to_toml();
    let path = dir.join("effective_config.toml");
    fs::write(&path, &text).map_err(io_err(&path))?;
    let _ = writeln!(stdout, "{text}");
    Ok(dir)
}

fn write_episode(dir: &Path, prefix: &str, log: &EpisodeLog) -> Result<(), CliError> {
    for j in &log.joints {
        write_file(&dir.join(format!("{prefix}{}.csv", j.name)), |w| j.write_csv(w))?;
    }
    Ok(())
}

fn write_steps(path: &Path, log: &EpisodeLog) -> Result<(), CliError> {
    write_file(path, |w| {
        writeln!(w, "step_idx,impact_time,impact_phase").map_err(csv::Error::from)?;
        for s in &log.steps {
            writeln!(w, "{},{},{}", s.step_idx, s.impact_time, s.impact_phase).map_err(csv::Error::from)?;
        }
        Ok(())
    })
}

/// Runs one episode and writes `episode_<joint>.csv`, `steps.csv` and
/// `metrics.csv`. A diverged episode still gets its partial logs written
/// before the error is returned.
pub fn cmd_run(mut scenario: ScenarioFile, opts: &RunOptions, stdout: &mut dyn Write) -> Result<Status, CliError> {
    let dir = prepare(&mut scenario, &opts.out, opts.seed, stdout)?;
    let exp = scenario.experiment()?;
    let (log, metrics) = match run_episode(&exp) {
        Ok(r) => r,
        Err(CoreError::Diverged { time, q, partial }) => {
            write_episode(&dir, "episode_", &partial)?;
            write_steps(&dir.join("steps.csv"), &partial)?;
            return Err(CoreError::Diverged { time, q, partial }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_episode(&dir, "episode_", &log)?;
    write_steps(&dir.join("steps.csv"), &log)?;
    write_file(&dir.join("metrics.csv"), |w| metrics.write_csv(w))?;

    // strict mode checks the whole episode, including any schedule transient
    let worst = compute_metrics(&log).max_tube_violation;
    let violated = worst > CONTAINMENT_TOLERANCE;
    let _ = writeln!(
        stdout,
        "run: {} steps, {} ticks, rms error {:.5} rad, containment {:.4}, max violation {:.2e} rad{}; output in {}",
        log.steps.len(),
        log.ticks(),
        metrics.rms_tracking_error,
        metrics.containment_fraction,
        worst,
        if violated { " (VIOLATION)" } else { "" },
        dir.display()
    );
    Ok(if opts.strict && violated { Status::Failed } else { Status::Ok })
}

/// Trend checks printed after a sweep: metric that should not increase with
/// the factor, per user kind.
pub const TREND_CHECKS: [(&str, &str); 2] = [("passive", "rms_tracking_error"), ("active", "user_effort")];

fn xi_label(xi: f64) -> String {
    format!("{xi:.4}").trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Runs the (factor, user, repetition) grid and writes `sweep_rows.csv` and
/// `sweep_cells.csv`, plus per-episode logs with `full_logs`.
pub fn cmd_sweep(mut scenario: ScenarioFile, opts: &SweepOptions, stdout: &mut dyn Write) -> Result<Status, CliError> {
    if let Some(xi) = &opts.xi {
        if xi.is_empty() {
            return Err(CliError::Usage("--xi needs at least one value".into()));
        }
        for &v in xi {
            AssistanceFactor::new(v).map_err(|_| CliError::Usage(format!("--xi value {v} is outside [0, 1]")))?;
        }
        scenario.sweep.xi = xi.clone();
    }
    if opts.threads == Some(0) {
        return Err(CliError::Usage("thread count must be >= 1".into()));
    }
    let dir = prepare(&mut scenario, &opts.out, opts.seed, stdout)?;
    let base = scenario.experiment()?;
    let xis: Vec<AssistanceFactor> = scenario
        .sweep
        .xi
        .iter()
        .map(|&v| AssistanceFactor::new(v))
        .collect::<Result<_, _>>()?;
    let users = &scenario.sweep.users;
    let reps = scenario.sweep.repetitions;

    let table = run_sweep(&base, &xis, users, reps, opts.threads)?;
    write_file(&dir.join("sweep_rows.csv"), |w| table.write_rows_csv(w))?;
    write_file(&dir.join("sweep_cells.csv"), |w| table.write_cells_csv(w))?;

    if opts.full_logs {
        let logs = dir.join("logs");
        fs::create_dir_all(&logs).map_err(io_err(&logs))?;
        for &xi in &xis {
            for user in users {
                for rep in 0..reps {
                    let exp = sweep_experiment(&base, xi, user, rep);
                    let prefix = format!("xi{}_{}_rep{rep}_", xi_label(xi.get()), user.kind_name());
                    match run_episode(&exp) {
                        Ok((log, _)) => write_episode(&logs, &prefix, &log)?,
                        Err(CoreError::Diverged { partial, .. }) => write_episode(&logs, &prefix, &partial)?,
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }
    }

    let failed = table.rows.iter().filter(|r| r.outcome.is_err()).count();
    let _ = writeln!(
        stdout,
        "sweep: {} episodes ({} failed) over {} factors x {} users x {} repetitions; output in {}",
        table.rows.len(),
        failed,
        xis.len(),
        users.len(),
        reps,
        dir.display()
    );
    let mut checked = 0;
    let mut monotone = true;
    for (user, metric) in TREND_CHECKS {
        let verdict = match is_non_increasing(&table.cells, user, metric) {
            Some(ok) => {
                checked += 1;
                monotone &= ok;
                if ok {
                    "yes"
                } else {
                    "no"
                }
            }
            None => "n/a",
        };
        let _ = writeln!(stdout, "trend {user} {metric} non-increasing in xi: {verdict}");
    }
    let _ = writeln!(
        stdout,
        "monotone: {}",
        match (checked, monotone) {
            (0, _) => "n/a",
            (_, true) => "yes",
            (_, false) => "no",
        }
    );
    Ok(if opts.strict && failed > 0 { Status::Failed } else { Status::Ok })
}

/// Writes `shapes_<joint>.csv`: nominal angle and tube bounds sampled at the
/// control period over one step, for the final assistance factor.
pub fn cmd_shapes(mut scenario: ScenarioFile, out: &Option<PathBuf>, stdout: &mut dyn Write) -> Result<Status, CliError> {
    let dir = prepare(&mut scenario, out, None, stdout)?;
    let exp = scenario.experiment()?;
    let xi = exp.episode.xi_schedule.target();
    let guides = exp.guides(xi)?;
    let dt = exp.episode.control_dt;
    let ticks = (exp.episode.step_duration / dt).round() as usize;
    for (joint, guide) in exp.joints.iter().zip(&guides) {
        let path = dir.join(format!("shapes_{}.csv", joint.name));
        write_file(&path, |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["phase", "q_nom", "qbound", "lower", "upper"])?;
            for k in 0..=ticks {
                let phase = k as f64 * dt;
                let q = joint.gait.q(phase);
                let b = guide.qbound(phase);
                c.write_record([phase, q, b, q - b, q + b].map(|v| v.to_string()))?;
            }
            c.flush().map_err(csv::Error::from)?;
            Ok(())
        })?;
    }
    let _ = writeln!(
        stdout,
        "shapes: {} joints, {} shape, xi {}; output in {}",
        exp.joints.len(),
        guides.first().map_or("none".to_string(), |g| g.tag().to_string()),
        xi,
        dir.display()
    );
    Ok(Status::Ok)
}
