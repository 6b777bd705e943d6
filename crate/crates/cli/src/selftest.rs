//! Fast invariant checks runnable from the command line.

use std::io::Write;

use vguide::guide::qbound_from_xi;
use vguide::plant::rk4_step;
use vguide::sim::{default_joints, EarlyImpact, CONTAINMENT_TOLERANCE};
use vguide::trajectory::make_deadbeat_spline;
use vguide::{
    run_episode, AssistanceFactor, ControllerConfig, EpisodeConfig, Experiment, JointState, UserModel, XiSchedule,
};

pub struct Check {
    pub name: &'static str,
    pub run: fn() -> Result<(), String>,
}

fn xi(v: f64) -> AssistanceFactor {
    AssistanceFactor::new(v).expect("valid factor")
}

fn short_experiment(factor: f64, user: UserModel, seed: u64) -> Experiment {
    Experiment {
        episode: EpisodeConfig {
            n_steps: 3,
            xi_schedule: XiSchedule::constant(xi(factor)),
            seed,
            ..EpisodeConfig::default()
        },
        joints: default_joints(0.8).expect("built-in joints"),
        controller: ControllerConfig::default(),
        user,
    }
}

fn qbound_constants() -> Result<(), String> {
    for (f, deg) in [(0.0, 7.5f64), (0.5, 4.0), (1.0, 0.5)] {
        let got = qbound_from_xi(xi(f));
        if (got - deg.to_radians()).abs() > 1e-12 {
            return Err(format!("qbound({f}) = {got} rad, expected {deg} deg"));
        }
    }
    Ok(())
}

fn spline_boundaries() -> Result<(), String> {
    let gait = &default_joints(0.8).map_err(|e| e.to_string())?[0].gait;
    let s = make_deadbeat_spline(0.2, -0.4, gait, 0.2, 0.0).map_err(|e| e.to_string())?;
    let (s0, ds0, _) = s.eval(0.0);
    let n0 = gait.sample(0.0);
    let [c0, c1, c2, c3] = s.coeffs;
    let w = s.window;
    let end = c0 + w * (c1 + w * (c2 + w * c3));
    let dend = c1 + w * (2.0 * c2 + 3.0 * w * c3);
    let residuals = [n0.q + s0 - 0.2, n0.dq + ds0 + 0.4, end, dend];
    match residuals.iter().map(|r| r.abs()).fold(0.0, f64::max) {
        r if r < 1e-12 => Ok(()),
        r => Err(format!("boundary residual {r:.3e}")),
    }
}

fn rk4_order() -> Result<(), String> {
    // harmonic oscillator q'' = -q
    let run = |n: usize| {
        let dt = 2.0 / n as f64;
        let mut s = JointState::new(1.0, 0.0);
        for k in 0..n {
            s = rk4_step(s, k as f64 * dt, dt, |_, q, _| -q);
        }
        (s.q - 2f64.cos()).abs()
    };
    let ratio = run(20) / run(40);
    if (8.0..=32.0).contains(&ratio) {
        Ok(())
    } else {
        Err(format!("error ratio {ratio:.2}"))
    }
}

fn full_assist_is_backup() -> Result<(), String> {
    let (log, _) = run_episode(&short_experiment(1.0, UserModel::passive(), 1)).map_err(|e| e.to_string())?;
    let worst = log
        .joints
        .iter()
        .flat_map(|j| &j.records)
        .filter(|r| r.assisted)
        .map(|r| (r.u_v - r.u_b).abs())
        .fold(0.0, f64::max);
    if worst < 1e-9 {
        Ok(())
    } else {
        Err(format!("|u_v - u_b| up to {worst:.3e}"))
    }
}

fn short_containment() -> Result<(), String> {
    for seed in 0..3 {
        let exp = short_experiment(0.5, UserModel::passive(), seed);
        let (log, _) = run_episode(&exp).map_err(|e| e.to_string())?;
        let min_h = log
            .joints
            .iter()
            .flat_map(|j| &j.records)
            .filter(|r| r.assisted)
            .map(|r| r.h)
            .fold(f64::INFINITY, f64::min);
        if min_h < -CONTAINMENT_TOLERANCE {
            return Err(format!("seed {seed}: h dropped to {min_h:.3e}"));
        }
    }
    Ok(())
}

fn determinism() -> Result<(), String> {
    let mut exp = short_experiment(0.25, UserModel::active(), 7);
    exp.episode.early_impact = EarlyImpact {
        probability: 0.5,
        ..EarlyImpact::default()
    };
    let a = run_episode(&exp).map_err(|e| e.to_string())?;
    let b = run_episode(&exp).map_err(|e| e.to_string())?;
    if a == b {
        Ok(())
    } else {
        Err("two runs with the same seed differ".into())
    }
}

pub const CHECKS: [Check; 6] = [
    Check {
        name: "tube width constants",
        run: qbound_constants,
    },
    Check {
        name: "re-spline boundary conditions",
        run: spline_boundaries,
    },
    Check {
        name: "rk4 fourth-order convergence",
        run: rk4_order,
    },
    Check {
        name: "full assistance equals backup policy",
        run: full_assist_is_backup,
    },
    Check {
        name: "short episodes stay in the tube",
        run: short_containment,
    },
    Check {
        name: "same seed, same episode",
        run: determinism,
    },
];

/// Runs every check, printing one PASS/FAIL line each. True when all pass.
pub fn run_selftest(out: &mut dyn Write) -> bool {
    let mut all = true;
    for c in &CHECKS {
        let r = (c.run)();
        all &= r.is_ok();
        let _ = match r {
            Ok(()) => writeln!(out, "PASS  {}", c.name),
            Err(e) => writeln!(out, "FAIL  {}: {e}", c.name),
        };
    }
    all
}
