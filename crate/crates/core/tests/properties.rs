use shortcut_core::experiments::trajectory::fixed_start;
use shortcut_core::experiments::{
    success_rate_sweep, trajectory_csv, trajectory_experiment, SweepConfig, TrajectoryVariant,
    Variant,
};
use shortcut_core::verification::Monitor;
use shortcut_core::{
    check_dissipativity, gd_step, monitor_trajectory, population_loss, run, sample_init,
    RegionSpec, RunConfig, StepSchedule, TeacherSpec,
};

#[test]
fn gd_iterates_stay_on_manifold() {
    for (p, k, seed) in [(2, 3, 1), (8, 25, 2), (5, 1, 3)] {
        let t = TeacherSpec::sample_with_prior(p, k, seed).unwrap();
        let mut s = sample_init(&t, seed);
        let eta = 1.0 / (k * k) as f64;
        for _ in 0..2000 {
            s = gd_step(&s, &t, eta, eta).unwrap();
            assert!(s.on_manifold(1e-9));
        }
    }
}

#[test]
fn ssw_loss_ends_below_start() {
    let t = TeacherSpec::sample_with_prior(4, 9, 5).unwrap();
    let init = sample_init(&t, 0);
    let traj = run(
        &init,
        &t,
        &StepSchedule::ssw_for_k(9),
        &RunConfig::new(200_000, 100),
    )
    .unwrap();
    assert!(traj.outcome.is_success(), "{:?}", traj.outcome);
    assert!(population_loss(&traj.final_state, &t).unwrap() < population_loss(&init, &t).unwrap());
}

#[test]
fn trajectory_csv_is_byte_identical_across_runs() {
    let cfg = RunConfig::new(3000, 7);
    for v in [TrajectoryVariant::Ssw, TrajectoryVariant::Constant] {
        let a = trajectory_experiment(v, &cfg, None).unwrap();
        let b = trajectory_experiment(v, &cfg, None).unwrap();
        assert_eq!(trajectory_csv(&a.records), trajectory_csv(&b.records));
    }
}

#[test]
fn sweep_json_is_byte_identical() {
    let cfg = SweepConfig {
        k_values: vec![16, 25],
        n_trials: 6,
        base_seed: 42,
        variants: vec![Variant::ResnetSsw, Variant::CnnBaseline],
        ..SweepConfig::default()
    };
    let (a, _) = success_rate_sweep(&cfg).unwrap();
    let (b, _) = success_rate_sweep(&cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    for c in &a.cells {
        assert_eq!(c.success_count + c.spurious_count + c.undecided_count, 6);
        assert!(c.ci_low <= c.success_rate && c.success_rate <= c.ci_high);
    }
}

#[test]
fn sum_bound_holds_along_ssw_runs() {
    for seed in 0..5 {
        let t = TeacherSpec::sample_with_prior(4, 6, 100 + seed).unwrap();
        let traj = run(
            &sample_init(&t, seed),
            &t,
            &StepSchedule::ssw_for_k(6),
            &RunConfig::new(20_000, 1),
        )
        .unwrap();
        let rep = monitor_trajectory(&traj, &t, &[Monitor::SumBound]);
        assert!(rep.is_clean(), "{:?}", rep.violations.first());
        assert!(!rep.sampled);
    }
}

#[test]
fn fixed_start_ssw_enters_basin_and_stays() {
    let (t, init) = fixed_start().unwrap();
    let traj = run(
        &init,
        &t,
        &StepSchedule::ssw_for_k(25),
        &RunConfig::new(500_000, 1),
    )
    .unwrap();
    let rep = monitor_trajectory(
        &traj,
        &t,
        &[Monitor::BasinAngle, Monitor::BasinBand, Monitor::SumBound],
    );
    assert!(rep.basin_entry.is_some());
    assert!(rep.is_clean(), "{:?}", rep.violations.first());
}

#[test]
fn dissipativity_report_serializes() {
    let t = TeacherSpec::sample_with_prior(3, 4, 9).unwrap();
    let r = check_dissipativity(&RegionSpec::K { m: 0.1 }, &t, 300, 1).unwrap();
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["region"]["region"], "K");
    assert_eq!(json["n_points"], 300);
    assert!(r.passed());
}
