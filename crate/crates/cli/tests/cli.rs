use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use vguide::sim::{EPISODE_COLUMNS, METRIC_NAMES};
use vguide_cli::ScenarioFile;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn vguide(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vguide"))
        .args(args)
        .current_dir(cwd)
        .env_remove("VG_THREADS")
        .output()
        .expect("spawn vguide")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

/// The demo scenario with some `[episode]` keys replaced, written into `dir`.
fn demo_variant(dir: &Path, name: &str, episode: &str) -> PathBuf {
    let text = fs::read_to_string(scenarios().join("demo.toml")).unwrap();
    let mut out = String::new();
    for line in text.lines() {
        out.push_str(line);
        out.push('\n');
        if line == "[episode]" {
            out.push_str(episode);
            out.push('\n');
        }
    }
    let keys: Vec<&str> = episode.lines().filter_map(|l| l.split('=').next()).map(str::trim).collect();
    // drop the demo's own values of overridden keys (they follow the inserted ones)
    let mut seen = std::collections::HashSet::new();
    let out: String = out
        .lines()
        .filter(|l| {
            let key = l.split('=').next().unwrap_or("").trim();
            !keys.contains(&key) || seen.insert(key.to_string())
        })
        .map(|l| format!("{l}\n"))
        .collect();
    let path = dir.join(name);
    fs::write(&path, out).unwrap();
    path
}

#[test]
fn run_demo_writes_expected_files() {
    let tmp = TempDir::new().unwrap();
    let demo = scenarios().join("demo.toml");
    let o = vguide(&["run", "--scenario", demo.to_str().unwrap(), "--out", "a"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("a");
    for joint in ["hip", "knee"] {
        assert_eq!(header(&out.join(format!("episode_{joint}.csv"))), EPISODE_COLUMNS);
    }
    assert_eq!(header(&out.join("metrics.csv")), METRIC_NAMES);
    assert_eq!(header(&out.join("steps.csv")), ["step_idx", "impact_time", "impact_phase"]);
    let summary = stdout(&o);
    assert!(summary.lines().last().unwrap().starts_with("run: 8 steps"), "{summary}");

    // the echoed config reproduces the run
    let echoed = out.join("effective_config.toml");
    let parsed = vguide_cli::parse_scenario(&echoed).unwrap();
    let again = ScenarioFile::from_toml(&parsed.to_toml(), Path::new("/")).unwrap();
    assert_eq!(parsed, again);
    let o = vguide(&["run", "--scenario", echoed.to_str().unwrap(), "--out", "b"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["episode_hip.csv", "episode_knee.csv", "metrics.csv", "steps.csv"] {
        assert_eq!(
            fs::read(out.join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_override_changes_the_episode() {
    let tmp = TempDir::new().unwrap();
    let s = demo_variant(tmp.path(), "short.toml", "n_steps = 2");
    let s = s.to_str().unwrap();
    for (dir, seed) in [("s1", "1"), ("s2", "2")] {
        let o = vguide(&["run", "--scenario", s, "--out", dir, "--seed", seed], tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = fs::read(tmp.path().join("s1/episode_hip.csv")).unwrap();
    let b = fs::read(tmp.path().join("s2/episode_hip.csv")).unwrap();
    assert_ne!(a, b);
    let echoed = fs::read_to_string(tmp.path().join("s2/effective_config.toml")).unwrap();
    assert!(echoed.contains("seed = 2"), "{echoed}");
}

#[test]
fn strict_fails_when_started_outside_the_tube() {
    let tmp = TempDir::new().unwrap();
    let s = demo_variant(tmp.path(), "sabotaged.toml", "n_steps = 1\ninitial_offset = 0.3");
    let o = vguide(&["run", "--scenario", s.to_str().unwrap(), "--out", "x", "--strict"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("VIOLATION"));
    // logs are still written
    assert!(tmp.path().join("x/episode_hip.csv").exists());

    let o = vguide(&["run", "--scenario", s.to_str().unwrap(), "--out", "y"], tmp.path());
    assert!(o.status.success());
}

#[test]
fn config_errors_name_the_key() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(scenarios().join("demo.toml")).unwrap();
    let cases = [
        (text.replace("xi = 0.5", "xi = 1.3"), "guide.xi"),
        (text.replace("control_dt = 0.001", "control_dt = 0.0"), "episode.control_dt"),
        (text.replace("n_steps = 8", "n_steps = 8\nbogus = 1"), "bogus"),
        (text.replace("repetitions = 4", "repetitions = 0"), "sweep.repetitions"),
    ];
    for (i, (body, key)) in cases.iter().enumerate() {
        let path = tmp.path().join(format!("bad{i}.toml"));
        fs::write(&path, body).unwrap();
        let o = vguide(&["run", "--scenario", path.to_str().unwrap()], tmp.path());
        assert_eq!(o.status.code(), Some(2), "{key}");
        assert!(stderr(&o).contains(key), "{key}: {}", stderr(&o));
        assert!(!tmp.path().join("out").exists(), "nothing runs before validation");
    }
}

#[test]
fn missing_files_are_reported_with_paths() {
    let tmp = TempDir::new().unwrap();
    let o = vguide(&["run", "--scenario", "nope.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.toml"));

    let body = "[guide]\nxi = 0.5\n[[gait.joints]]\nname = \"hip\"\nprofile = { kind = \"csv\", path = \"gait.csv\" }\n";
    let path = tmp.path().join("csvgait.toml");
    fs::write(&path, body).unwrap();
    let o = vguide(&["run", "--scenario", path.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gait.csv"), "{}", stderr(&o));
}

#[test]
fn csv_gait_resolves_relative_to_scenario() {
    let tmp = TempDir::new().unwrap();
    let sub = tmp.path().join("sc");
    fs::create_dir(&sub).unwrap();
    let mut table = String::from("phase_s,q_rad,dq_rad_s\n");
    let n = 80;
    for k in 0..=n {
        let t = 0.8 * k as f64 / n as f64;
        let w = std::f64::consts::TAU / 0.8;
        table.push_str(&format!("{t},{},{}\n", 0.2 * (w * t).sin(), 0.2 * w * (w * t).cos()));
    }
    fs::write(sub.join("gait.csv"), table).unwrap();
    let body = "[guide]\nxi = 0.5\n[episode]\nn_steps = 2\n[[gait.joints]]\nname = \"hip\"\nprofile = { kind = \"csv\", path = \"gait.csv\" }\n";
    fs::write(sub.join("s.toml"), body).unwrap();
    let o = vguide(&["run", "--scenario", "sc/s.toml", "--out", "o"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let echoed = fs::read_to_string(tmp.path().join("o/effective_config.toml")).unwrap();
    let abs = sub.join("gait.csv").canonicalize().unwrap();
    assert!(echoed.contains(abs.to_str().unwrap()), "{echoed}");
}

#[test]
fn sweep_row_count_and_usage_errors() {
    let tmp = TempDir::new().unwrap();
    let s = demo_variant(tmp.path(), "tiny.toml", "n_steps = 1\nstep_duration = 0.4");
    let text = fs::read_to_string(&s).unwrap().replace("repetitions = 4", "repetitions = 2");
    fs::write(&s, text).unwrap();
    let s = s.to_str().unwrap();

    let o = vguide(&["sweep", "--scenario", s, "--out", "sw"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv::Reader::from_path(tmp.path().join("sw/sweep_rows.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, 5 * 2 * 2);
    let cells = csv::Reader::from_path(tmp.path().join("sw/sweep_cells.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(cells, 5 * 2);
    assert!(stdout(&o).contains("monotone: "));

    let o = vguide(&["sweep", "--scenario", s, "--out", "x1", "--xi"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = vguide(&["sweep", "--scenario", s, "--out", "x2", "--xi", ""], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = vguide(&["sweep", "--scenario", s, "--out", "x3", "--xi", "0.5,1.2"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = vguide(
        &["sweep", "--scenario", s, "--out", "full", "--xi", "0,1", "--full-logs"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let logs: Vec<_> = fs::read_dir(tmp.path().join("full/logs")).unwrap().collect();
    assert_eq!(logs.len(), 2 * 2 * 2 * 2);
    assert!(tmp.path().join("full/logs/xi0_passive_rep1_knee.csv").exists());
    assert!(tmp.path().join("full/logs/xi1_active_rep0_hip.csv").exists());
}

/// Means recomputed from the per-episode rows, independent of the cell table.
fn means_by_xi(rows_csv: &Path, user: &str, metric: &str) -> Vec<(f64, f64)> {
    let mut r = csv::Reader::from_path(rows_csv).unwrap();
    let h = r.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let (xi_c, user_c, m_c) = (col("xi"), col("user"), col(metric));
    let mut acc: Vec<(f64, f64, usize)> = Vec::new();
    for rec in r.records() {
        let rec = rec.unwrap();
        if &rec[user_c] != user {
            continue;
        }
        let xi: f64 = rec[xi_c].parse().unwrap();
        let v: f64 = rec[m_c].parse().unwrap();
        match acc.iter_mut().find(|a| a.0 == xi) {
            Some(a) => {
                a.1 += v;
                a.2 += 1;
            }
            None => acc.push((xi, v, 1)),
        }
    }
    acc.sort_by(|a, b| a.0.total_cmp(&b.0));
    acc.into_iter().map(|(x, s, n)| (x, s / n as f64)).collect()
}

#[test]
fn demo_sweep_is_monotone() {
    let tmp = TempDir::new().unwrap();
    let demo = scenarios().join("demo.toml");
    let o = vguide(&["sweep", "--scenario", demo.to_str().unwrap(), "--out", "sw"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("monotone: yes"), "{}", stdout(&o));
    let means = means_by_xi(&tmp.path().join("sw/sweep_rows.csv"), "passive", "rms_tracking_error");
    assert_eq!(means.len(), 5);
    assert!(means.windows(2).all(|w| w[1].1 <= w[0].1), "{means:?}");
}

#[test]
fn shapes_emit_tube_geometry() {
    let tmp = TempDir::new().unwrap();
    let s = scenarios().join("empty_plant.toml");
    let o = vguide(&["shapes", "--scenario", s.to_str().unwrap(), "--out", "sh"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let path = tmp.path().join("sh/shapes_hip.csv");
    assert_eq!(header(&path), ["phase", "q_nom", "qbound", "lower", "upper"]);
    let mut r = csv::Reader::from_path(&path).unwrap();
    let rows: Vec<Vec<f64>> = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 801);
    // tapered from 1.5x to 0.5x the mean half-width of 4 degrees
    let mean = 4f64.to_radians();
    assert!((rows[0][2] - 1.5 * mean).abs() < 1e-12);
    assert!((rows[800][2] - 0.5 * mean).abs() < 1e-12);
    for row in &rows {
        assert!((row[3] - (row[1] - row[2])).abs() < 1e-15 && (row[4] - (row[1] + row[2])).abs() < 1e-15);
    }
}

#[test]
fn selftest_passes() {
    let tmp = TempDir::new().unwrap();
    let o = vguide(&["selftest"], tmp.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn help_documents_flags() {
    let tmp = TempDir::new().unwrap();
    let o = vguide(&["sweep", "--help"], tmp.path());
    let text = stdout(&o);
    for flag in ["--scenario", "--out", "--seed", "--strict", "--full-logs", "--xi", "VG_THREADS"] {
        assert!(text.contains(flag), "{flag} missing from help:\n{text}");
    }
}
