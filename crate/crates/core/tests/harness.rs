mod common;

use std::process::Command;

use cellfree::config::PilotMode;
use cellfree::harness::{
    ecdf, emit_rate_cdf, emit_sumrate_curve, percentile_nearest_rank, run_experiment, run_sweep, run_trial,
    trial_seed, ExperimentResult, OperatingPoint,
};
use cellfree::linkmodel::{PowerMatrix, RateModel};
use cellfree::slbm::Objective;
use cellfree::{CsiMode, NetworkMode, SystemConfig};
use common::desk;

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap()
}

#[test]
fn trials_are_reproducible() {
    let cfg = desk();
    for objective in [Objective::SumRate, Objective::MaxMin] {
        let c = SystemConfig { objective, ..cfg.clone() };
        let a = run_trial(&c, trial_seed(3, 1)).unwrap();
        let b = run_trial(&c, trial_seed(3, 1)).unwrap();
        assert_eq!(json(&a), json(&b));
    }
}

#[test]
fn noiseless_orthogonal_training_equals_perfect_csi() {
    // Estimates equal the truth up to roundoff, so every rate of a fixed allocation agrees.
    // Optimized allocations are not compared: the optimizer's accept/reject decisions can
    // amplify 1e-14 input differences into a different end point.
    let base = SystemConfig { pilot_mode: PilotMode::Orthogonal, training_noise_var_w: Some(0.0), ..desk() };
    for t in 0..5 {
        let est = common::csi_gains(&base, trial_seed(8, t), CsiMode::Estimated);
        let per = common::csi_gains(&base, trial_seed(8, t), CsiMode::Perfect);
        let model_e = RateModel::new(&est, base.noise_var_w(), base.bandwidth_hz);
        let model_p = RateModel::new(&per, base.noise_var_w(), base.bandwidth_hz);
        let uniform = PowerMatrix::uniform(per.clusters(), base.p_max_w);
        let tilted = PowerMatrix { eta: uniform.eta.map_with_location(|k, m, v| v * (0.2 + 0.3 * ((k + m) % 3) as f64)) };
        for eta in [&uniform, &tilted] {
            let (a, b) = (model_e.rates(eta).unwrap(), model_p.rates(eta).unwrap());
            for (x, y) in a.per_user.iter().zip(&b.per_user) {
                assert!((x - y).abs() <= 1e-8 * y);
            }
        }
        let trial = run_trial(&SystemConfig { csi: CsiMode::Estimated, ..base.clone() }, trial_seed(8, t)).unwrap();
        let truth = run_trial(&SystemConfig { csi: CsiMode::Perfect, ..base.clone() }, trial_seed(8, t)).unwrap();
        for (x, y) in trial.rates_uniform.per_user.iter().zip(&truth.rates_uniform.per_user) {
            assert!((x - y).abs() <= 1e-8 * y);
        }
    }
}

#[test]
fn full_user_centric_clusters_reproduce_cell_free() {
    let cf = desk();
    let uc = SystemConfig { mode: NetworkMode::Uc, n_cluster: Some(cf.num_users), ..cf.clone() };
    for t in 0..3 {
        let a = run_trial(&cf, trial_seed(4, t)).unwrap();
        let b = run_trial(&uc, trial_seed(4, t)).unwrap();
        assert_eq!(a.rates_uniform, b.rates_uniform);
        assert_eq!(a.rates_optimized, b.rates_optimized);
    }
}

#[test]
fn user_centric_needs_a_cluster_size() {
    let uc = SystemConfig { mode: NetworkMode::Uc, n_cluster: None, ..desk() };
    assert!(run_trial(&uc, 1).is_err());
}

#[test]
fn single_trial_aggregates_are_the_trial() {
    let r = run_experiment(&desk(), 12, 1, 1).unwrap();
    let t = &r.trials[0];
    for (stats, report) in [(&r.uniform, &t.rates_uniform), (&r.optimized, &t.rates_optimized)] {
        assert_eq!(stats.mean_sum_rate, report.sum_rate);
        assert_eq!(stats.std_sum_rate, 0.0);
        assert_eq!(stats.mean_min_rate, report.min_rate);
        assert_eq!(stats.pooled_rates, report.per_user);
        assert_eq!(stats.p5_rate, report.per_user.iter().cloned().fold(f64::INFINITY, f64::min));
    }
}

#[test]
fn aggregates_follow_from_the_trials() {
    let r = run_experiment(&desk(), 13, 4, 1).unwrap();
    let again = ExperimentResult::from_trials(r.config.clone(), r.master_seed, r.trials.clone());
    assert_eq!(json(&r), json(&again));
    let sums: Vec<f64> = r.trials.iter().map(|t| t.rates_optimized.sum_rate).collect();
    let mean = sums.iter().sum::<f64>() / 4.0;
    let sd = (sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    assert!((r.optimized.mean_sum_rate - mean).abs() <= 1e-12 * mean);
    assert!((r.optimized.std_sum_rate - sd).abs() <= 1e-9 * sd.max(1.0));
    assert_eq!(r.optimized.p5_rate, percentile_nearest_rank(&r.optimized.pooled_rates, 5.0));
}

#[test]
fn worker_count_does_not_change_results() {
    let points = [
        OperatingPoint { mode: NetworkMode::Cf, csi: CsiMode::Estimated, p_max_w: 0.1 },
        OperatingPoint { mode: NetworkMode::Uc, csi: CsiMode::Perfect, p_max_w: 1.0 },
    ];
    let base = SystemConfig { n_cluster: Some(2), ..desk() };
    let one = run_sweep(&base, &points, 21, 6, 1).unwrap();
    let many = run_sweep(&base, &points, 21, 6, 8).unwrap();
    assert_eq!(json(&one), json(&many));
}

#[test]
fn sweep_points_share_realizations() {
    let points = [
        OperatingPoint { mode: NetworkMode::Cf, csi: CsiMode::Estimated, p_max_w: 1.0 },
        OperatingPoint { mode: NetworkMode::Uc, csi: CsiMode::Estimated, p_max_w: 1.0 },
    ];
    let base = SystemConfig { n_cluster: Some(2), ..desk() };
    let res = run_sweep(&base, &points, 5, 3, 1).unwrap();
    let cf = run_experiment(&base, 5, 3, 1).unwrap();
    let uc = run_experiment(&SystemConfig { mode: NetworkMode::Uc, ..base.clone() }, 5, 3, 1).unwrap();
    assert_eq!(json(&res[0].trials), json(&cf.trials));
    assert_eq!(json(&res[1].trials), json(&uc.trials));
    assert!(run_sweep(&base, &points, 5, 0, 1).is_err());
    assert!(run_sweep(&base, &[], 5, 1, 1).is_err());
}

fn three_point_sweep() -> Vec<ExperimentResult> {
    let base = SystemConfig { n_cluster: Some(2), ..desk() };
    let mut points = Vec::new();
    for p in [0.01, 0.1, 1.0] {
        for mode in [NetworkMode::Cf, NetworkMode::Uc] {
            points.push(OperatingPoint { mode, csi: CsiMode::Estimated, p_max_w: p });
        }
    }
    run_sweep(&base, &points, 31, 4, 1).unwrap()
}

#[test]
fn sum_rate_curve_layout_and_dominance() {
    let res = three_point_sweep();
    let csv = emit_sumrate_curve(&res).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "p_max_dbm,mode,csi,allocation,mean_sum_rate_bps,std_sum_rate_bps,n_trials");
    assert_eq!(lines.len(), 13);
    assert!(!csv.contains('\r'));
    for r in &res {
        for (u, o) in r.trials.iter().map(|t| (t.rates_uniform.sum_rate, t.rates_optimized.sum_rate)) {
            assert!(o >= u);
        }
        assert!(r.optimized.mean_sum_rate >= r.uniform.mean_sum_rate);
    }
    assert!(lines[1].starts_with("10,cf,estimated,uniform,"));
}

#[test]
fn optimized_curve_grows_with_the_budget() {
    let res = three_point_sweep();
    for mode in [NetworkMode::Cf, NetworkMode::Uc] {
        let means: Vec<f64> =
            res.iter().filter(|r| r.point().mode == mode).map(|r| r.optimized.mean_sum_rate).collect();
        assert!(means.windows(2).all(|w| w[1] >= w[0]), "{mode:?}: {means:?}");
    }
}

#[test]
fn curves_refuse_mixed_configs() {
    let a = run_experiment(&desk(), 1, 1, 1).unwrap();
    let b = run_experiment(&SystemConfig { num_aps: 3, ..desk() }, 1, 1, 1).unwrap();
    assert!(emit_sumrate_curve(&[a.clone(), b]).is_err());
    let c = run_experiment(&desk(), 2, 1, 1).unwrap();
    assert!(emit_sumrate_curve(&[a.clone(), c]).is_err());
    let d = run_experiment(&SystemConfig { p_max_w: 0.5, ..desk() }, 1, 1, 1).unwrap();
    assert!(emit_sumrate_curve(&[a.clone(), d.clone()]).is_ok());
    assert!(emit_rate_cdf(&[a, d]).is_err());
}

#[test]
fn rate_cdf_layout() {
    let r = run_experiment(&SystemConfig { objective: Objective::MaxMin, ..desk() }, 17, 5, 1).unwrap();
    let csv = emit_rate_cdf(std::slice::from_ref(&r)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "rate_bps,ecdf,mode,csi,allocation");
    let footers: Vec<&str> = lines.iter().filter(|l| l.contains(",p5,")).cloned().collect();
    assert_eq!(footers.len(), 2);
    let p5 = |alloc: &str| -> f64 {
        footers.iter().find(|l| l.ends_with(alloc)).unwrap().split(',').next().unwrap().parse().unwrap()
    };
    assert_eq!(p5("uniform"), r.uniform.p5_rate);
    assert_eq!(p5("optimized"), r.optimized.p5_rate);
    let levels: Vec<f64> = lines[1..]
        .iter()
        .filter(|l| l.ends_with("uniform") && !l.contains(",p5,"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(*levels.last().unwrap(), 1.0);
    assert!(levels.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn ecdf_examples() {
    assert_eq!(ecdf(&[1.0, 2.0, 3.0, 4.0]), vec![(1.0, 0.25), (2.0, 0.5), (3.0, 0.75), (4.0, 1.0)]);
    assert_eq!(ecdf(&[7.0, 7.0, 7.0]), vec![(7.0, 1.0)]);
    assert_eq!(ecdf(&[2.0, 1.0, 2.0, 3.0]), vec![(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]);
}

fn simulate() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simulate"))
}

#[test]
fn cli_writes_the_requested_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("desk.toml");
    std::fs::write(&cfg_path, "M = 4\nK = 3\nN_AP = 2\nN_MS = 2\nP_k = 2\n").unwrap();
    let out = dir.path().join("run");
    let status = simulate()
        .args(["--config", cfg_path.to_str().unwrap(), "--mode", "cf,uc", "--n-cluster", "2"])
        .args(["--objective", "maxmin", "--csi", "estimated", "--pmax-dbw", "-10,0", "--trials", "2"])
        .args(["--seed", "9", "--emit", "curve,trace", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let curve = std::fs::read_to_string(out.join("sumrate_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 2 * 2 * 2);
    assert!(!out.join("rate_cdf.csv").exists());
    assert!(out.join("trace_0_uc_estimated_0dBW.csv").exists());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["master_seed"], 9);
    assert_eq!(meta["config"]["K"], 3);
    assert_eq!(meta["config"]["objective"], "maxmin");
    assert_eq!(meta["p_max_sweep_is_default"], false);

    // a single budget adds the CDF by default; same seed, same bytes
    let again = |name: &str| {
        let o = dir.path().join(name);
        let ok = simulate()
            .args(["--config", cfg_path.to_str().unwrap(), "--pmax-dbw", "0", "--trials", "2", "--seed", "4"])
            .args(["--out", o.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(ok.success());
        o
    };
    let (a, b) = (again("a"), again("b"));
    for f in ["sumrate_curve.csv", "rate_cdf.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn cli_rejects_uc_without_cluster_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate()
        .args(["--mode", "uc", "--trials", "1", "--pmax-dbw", "0", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n-cluster"));
}
