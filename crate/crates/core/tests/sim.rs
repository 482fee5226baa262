use rsma_fbl::ao::{ao_solve, Access, AoOptions, RisMode, VariantSpec};
use rsma_fbl::fbl::metrics_report;
use rsma_fbl::linalg::frob_sq;
use rsma_fbl::model::{BeamformerSet, DesignPoint, RisPhase};
use rsma_fbl::sim::channel::user_positions;
use rsma_fbl::sim::export::{export_timing, rows_to_csv, CSV_HEADER};
use rsma_fbl::sim::runner::drop_set;
use rsma_fbl::sim::*;

fn tiny_plan(drops: usize, seed: u64) -> ExperimentPlan {
    ExperimentPlan {
        scenario: PlanScenario { users: 2, ris_elements: 2, ..Default::default() },
        drops,
        master_seed: seed,
        variants: vec!["RIS-RSMA".into(), "No-RIS-SDMA".into()],
        ..Default::default()
    }
}

#[test]
fn direct_gain_matches_path_loss() {
    let topo = TopologyConfig::default();
    let cfg = default_scenario(2, 2, 2, 0);
    let mut ratio = 0.0;
    let n = 10_000;
    for seed in 0..n {
        let d = generate_drop(&cfg, &topo, seed).unwrap();
        let pos = user_positions(2, &topo, seed);
        for k in 0..2 {
            let dist = (pos[k][0].powi(2) + pos[k][1].powi(2)).sqrt();
            ratio += frob_sq(&d.direct[k]) / (4.0 * topo.path_gain(dist, topo.direct_exponent));
        }
    }
    let mean = ratio / (2 * n) as f64;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}

#[test]
fn plan_rows_are_complete_and_reproducible() {
    let plan = ExperimentPlan { variants: vec!["RIS-RSMA".into()], ..tiny_plan(2, 4) };
    let rows = run_plan(&plan).unwrap();
    assert_eq!(rows.len(), 2);
    let plan = tiny_plan(2, 4);
    let a = run_plan(&plan).unwrap();
    let b = run_plan(&plan).unwrap();
    assert_eq!(a.len(), 4);
    assert_eq!(rows_to_csv(&a), rows_to_csv(&b));
    assert!(a.iter().all(|r| r.verdict != "error"));
    // with warm starts the optimized RSMA scheme is never worse
    for d in 0..2 {
        let (x, y) = (&a[2 * d], &a[2 * d + 1]);
        assert_eq!((x.variant.as_str(), y.variant.as_str()), ("RIS-RSMA", "No-RIS-SDMA"));
        assert!(x.objective <= y.objective + 1e-6);
    }
}

#[test]
fn export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<ResultRow> = (0..1000)
        .map(|i| {
            let x = i as f64;
            ResultRow {
                power_dbm: 10.0,
                error_total: 1e-5,
                ris_elements: 20,
                alpha: 0.5,
                users: 4,
                variant: if i % 2 == 0 { "RIS-RSMA" } else { "No-RIS-SDMA" }.into(),
                seed: i as u64 * 7919,
                minmax_delay: 100.0 + (x * 0.731).sin() * 37.123456789123,
                maxmin_ee: 2.0 + (x * 1.37).cos() / 3.0,
                objective: 50.0 + x.sqrt() * std::f64::consts::PI,
                iters: i % 100,
                converged: i % 3 != 0,
                verdict: if i % 3 != 0 { "converged" } else { "max-iterations" }.into(),
                wall_ms: x,
                point: 0,
                drop_index: i,
            }
        })
        .collect();
    let csv = dir.path().join("rows.csv");
    let json = dir.path().join("rows.json");
    export_results(&rows, Format::Csv, &csv).unwrap();
    export_results(&rows, Format::Json, &json).unwrap();
    let back = read_csv(&csv).unwrap();
    let back_json = read_json(&json).unwrap();
    assert_eq!(back.len(), 1000);
    assert_eq!(back, back_json);
    for (a, b) in rows.iter().zip(&back) {
        assert!((a.minmax_delay - b.minmax_delay).abs() <= 5e-9 * a.minmax_delay.abs());
        assert_eq!((a.seed, a.iters, a.converged, &a.variant), (b.seed, b.iters, b.converged, &b.variant));
    }
    let (s0, s1) = (summarize(&rows), summarize(&back));
    for (a, b) in s0.iter().zip(&s1) {
        for (x, y) in [(a.mean_delay, b.mean_delay), (a.mean_ee, b.mean_ee), (a.mean_objective, b.mean_objective)] {
            assert!((x - y).abs() <= 1e-9 * x.abs(), "{x} vs {y}");
        }
    }

    let empty = dir.path().join("empty.csv");
    export_results(&[], Format::Csv, &empty).unwrap();
    assert_eq!(std::fs::read_to_string(&empty).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
    export_timing(&rows, &dir.path().join("timing.csv")).unwrap();
}

#[test]
fn export_reports_path_on_failure() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let target = blocker.join("rows.csv");
    let err = export_results(&[], Format::Csv, &target).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}

fn tiny_scenario() -> rsma_fbl::model::ScenarioConfig {
    let mut cfg = default_scenario(2, 1, 1, 1);
    cfg.latency_weight = 1.0;
    cfg
}

#[test]
fn oracle_rejects_large_instances() {
    let cfg = default_scenario(3, 1, 1, 1);
    let drop = generate_drop(&cfg, &TopologyConfig::default(), 0).unwrap();
    assert!(grid_oracle(&cfg, &drop, VariantSpec::new(Access::Rsma, RisMode::Optimized)).is_err());
    let cfg = default_scenario(2, 2, 1, 1);
    let drop = generate_drop(&cfg, &TopologyConfig::default(), 0).unwrap();
    assert!(grid_oracle(&cfg, &drop, VariantSpec::new(Access::Rsma, RisMode::Optimized)).is_err());
}

#[test]
fn oracle_with_no_power_is_infeasible() {
    let mut cfg = tiny_scenario();
    let drop = generate_drop(&cfg, &TopologyConfig::default(), 1).unwrap();
    cfg.power_budget = 0.0;
    let res = grid_oracle(&cfg, &drop, VariantSpec::new(Access::Rsma, RisMode::Optimized)).unwrap();
    assert!(!res.feasible);
    assert!(res.objective.is_infinite());
}

#[test]
fn single_user_oracle_beats_hand_points() {
    let mut cfg = tiny_scenario();
    cfg.users = 1;
    cfg.message_nats.truncate(1);
    let drop = generate_drop(&cfg, &TopologyConfig::default(), 2).unwrap();
    let v = VariantSpec::new(Access::Rsma, RisMode::Optimized);
    let res = grid_oracle(&cfg, &drop, v).unwrap();
    assert!(res.feasible);
    let c = |x: f64| rsma_fbl::linalg::CMat::from_element(1, 1, num_complex::Complex64::new(x.sqrt(), 0.0));
    for (pp, pc, phase) in [(1.0, 0.0, 0.0), (0.5, 0.5, 1.0), (0.9, 0.1, 2.0), (0.3, 0.0, 3.0)] {
        let dp = DesignPoint {
            beams: BeamformerSet { common: c(pc * cfg.power_budget), private: vec![c(pp * cfg.power_budget)] },
            ris: RisPhase { psi: vec![num_complex::Complex64::from_polar(1.0, phase)] },
            z: vec![0.0],
        };
        let obj = metrics_report(&cfg, &drop, &dp).unwrap().objective;
        assert!(res.objective <= obj, "{} > {obj}", res.objective);
    }
}

#[test]
fn ao_close_to_oracle_on_a_tiny_drop() {
    let cfg = tiny_scenario();
    let drop = generate_drop(&cfg, &TopologyConfig::default(), 3).unwrap();
    let v = VariantSpec::new(Access::Rsma, RisMode::Optimized);
    let oracle = grid_oracle(&cfg, &drop, v).unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
    let ao = ao_solve(&cfg, &drop, v, &AoOptions::default(), &[], &mut rng).unwrap();
    let (a, o) = (ao.objective(), oracle.objective);
    assert!((a - o) / o.abs() <= 0.05, "ao {a} oracle {o}");
}

#[test]
fn pareto_endpoints() {
    let cfg = default_scenario(2, 2, 2, 4);
    let drops = drop_set(&cfg, &TopologyConfig::default(), 11, 3).unwrap();
    let v = VariantSpec::new(Access::Rsma, RisMode::Optimized);
    let pts = pareto_region(&cfg, &drops, v, &[0.0, 0.5, 1.0], &AoOptions::default()).unwrap();
    assert_eq!(pts.len(), 3);
    let max_ee = pts.iter().map(|p| p.mean_ee).fold(f64::NEG_INFINITY, f64::max);
    let min_delay = pts.iter().map(|p| p.mean_delay).fold(f64::INFINITY, f64::min);
    assert_eq!(pts[0].mean_ee, max_ee);
    assert_eq!(pts[2].mean_delay, min_delay);
    assert!(pareto_region(&cfg, &drops, v, &[0.5, 0.0], &AoOptions::default()).is_err());
    let front = pareto_filter(&pts);
    assert!(front.windows(2).all(|w| w[0].mean_delay >= w[1].mean_delay && w[0].mean_ee >= w[1].mean_ee));
}

#[test]
fn plan_files_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.toml");
    std::fs::write(
        &path,
        "drops = 2\nmaster_seed = 5\n[scenario]\nusers = 2\n[[sweep]]\nparameter = \"alpha\"\nvalues = [0.0, 1.0]\n",
    )
    .unwrap();
    let plan = ExperimentPlan::load(&path).unwrap();
    assert_eq!(plan.points().unwrap().len(), 2);
    std::fs::write(&path, "drops = 2\nseed = 5\n").unwrap();
    let err = ExperimentPlan::load(&path).unwrap_err();
    assert!(err.to_string().contains("plan.toml"));
    assert!(ExperimentPlan::load(&dir.path().join("missing.toml")).is_err());
}
