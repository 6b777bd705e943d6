use proptest::prelude::*;
use vguide::sim::default_joints;
use vguide::trajectory::{eval_desired, eval_nominal_accel, make_deadbeat_spline, Harmonic, SampledGait};
use vguide::{DeadbeatSpline, NominalGait, StepTrajectory};

fn gait(offset: f64, a1: f64, a2: f64, p2: f64) -> NominalGait {
    NominalGait::periodic(
        offset,
        vec![
            Harmonic {
                amplitude: a1,
                phase: 0.0,
            },
            Harmonic {
                amplitude: a2,
                phase: p2,
            },
        ],
        0.8,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn fourier_derivatives_match_differences(
        offset in -0.5f64..0.5, a1 in 0.0f64..0.5, a2 in 0.0f64..0.2, p2 in -3.0f64..3.0, t in 0.01f64..0.79,
    ) {
        let g = gait(offset, a1, a2, p2);
        let h = 1e-5;
        let fd_v = (g.q(t + h) - g.q(t - h)) / (2.0 * h);
        let fd_a = (g.dq(t + h) - g.dq(t - h)) / (2.0 * h);
        prop_assert!((g.dq(t) - fd_v).abs() < 1e-6);
        prop_assert!((eval_nominal_accel(&g, t).unwrap() - fd_a).abs() < 1e-4);
    }

    #[test]
    fn fourier_matches_direct_sum(a1 in 0.0f64..0.5, a2 in 0.0f64..0.2, p2 in -3.0f64..3.0, t in 0.0f64..0.8) {
        let g = gait(0.1, a1, a2, p2);
        let w = std::f64::consts::TAU / 0.8;
        let direct = 0.1 + a1 * (w * t).sin() + a2 * (2.0 * w * t + p2).sin();
        prop_assert!((g.q(t) - direct).abs() < 1e-12);
    }

    #[test]
    fn spline_meets_boundary_conditions(
        dq0 in -3.0f64..3.0, dqq in -3.0f64..3.0, e in -0.3f64..0.3, alpha in 0.05f64..1.0, t_i in 0.0f64..20.0,
    ) {
        let g = gait(0.0, 0.3, 0.05, dq0);
        let start = g.sample(0.0);
        let sp = make_deadbeat_spline(start.q + e, start.dq + dqq, &g, alpha, t_i).unwrap();
        let d0 = eval_desired(&g, &sp, t_i).unwrap();
        prop_assert!((d0.q - (start.q + e)).abs() < 1e-12);
        prop_assert!((d0.dq - (start.dq + dqq)).abs() < 1e-12);
        // after the window the desired trajectory is the nominal gait
        let after = t_i + sp.window + 1e-9;
        let d1 = eval_desired(&g, &sp, after).unwrap();
        prop_assert!((d1.q - g.q(sp.window + 1e-9)).abs() < 1e-12);
        // C1 across the window boundary; spline accel is at most ~1e3 here
        let traj = StepTrajectory::new(&g, sp);
        let (l, r) = (traj.at_phase(sp.window - 1e-10), traj.at_phase(sp.window));
        prop_assert!((l.q - r.q).abs() < 1e-9 && (l.dq - r.dq).abs() < 1e-6);
    }
}

#[test]
fn desired_rejects_times_before_impact() {
    let g = gait(0.0, 0.3, 0.0, 0.0);
    let sp = DeadbeatSpline::identity(&g, 2.0);
    assert!(eval_desired(&g, &sp, 1.0).is_err());
    assert!(eval_desired(&g, &sp, f64::NAN).is_err());
}

#[test]
fn spline_rejects_bad_alpha() {
    let g = gait(0.0, 0.3, 0.0, 0.0);
    for alpha in [0.0, -0.1, 1.5, f64::NAN] {
        assert!(make_deadbeat_spline(0.1, 0.0, &g, alpha, 0.0).is_err(), "{alpha}");
    }
}

#[test]
fn sampled_gait_follows_table() {
    let n = 200;
    let (mut phase, mut q, mut dq) = (vec![], vec![], vec![]);
    let w = std::f64::consts::TAU / 0.8;
    for k in 0..=n {
        let t = 0.8 * k as f64 / n as f64;
        phase.push(t);
        q.push(0.2 * (w * t).sin());
        dq.push(0.2 * w * (w * t).cos());
    }
    let g = NominalGait::sampled(SampledGait::new(phase, q, dq).unwrap()).unwrap();
    assert!((g.duration() - 0.8).abs() < 1e-12);
    for t in [0.0, 0.1234, 0.4, 0.799] {
        assert!((g.q(t) - 0.2 * (w * t).sin()).abs() < 1e-6, "{t}");
        assert!((g.dq(t) - 0.2 * w * (w * t).cos()).abs() < 1e-3, "{t}");
    }
}

#[test]
fn sampled_gait_rejects_bad_tables() {
    assert!(SampledGait::new(vec![0.0, 0.4, 0.4], vec![0.0; 3], vec![0.0; 3]).is_err());
    assert!(SampledGait::new(vec![0.0, 0.4], vec![0.0; 3], vec![0.0; 2]).is_err());
    assert!(SampledGait::from_reader("phase_s,q_rad,dq_rad_s\n0,0,0\n0.5,x,0\n".as_bytes()).is_err());
}

#[test]
fn built_in_gaits_are_periodic() {
    for j in default_joints(0.8).unwrap() {
        let (a, b) = (j.gait.sample(0.0), j.gait.sample(0.8));
        assert!((a.q - b.q).abs() < 1e-12 && (a.dq - b.dq).abs() < 1e-12, "{}", j.name);
    }
}
