use shopfloor::harness::{
    evaluate_per_seed, rerun_manifest, run_experiment, EvalPolicy, ExperimentSpec, CURVE_FILE, MANIFEST_FILE, METRICS_FILE,
};
use shopfloor::heuristics::HeuristicKind;
use shopfloor::metrics::MetricsRow;
use shopfloor::sim::run_episode;
use shopfloor::{Action, Shop, ShopConfig};

fn seeds() -> Vec<u64> {
    (100..110).collect()
}

#[test]
fn evaluation_is_deterministic() {
    let cfg = ShopConfig::default();
    for kind in [HeuristicKind::Edf, HeuristicKind::Lst, HeuristicKind::Random] {
        let a = evaluate_per_seed(&EvalPolicy::Heuristic(kind), &cfg, &seeds()).unwrap();
        let b = evaluate_per_seed(&EvalPolicy::Heuristic(kind), &cfg, &seeds()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn dispatching_completes_and_keeps_jobs_under_load() {
    let cfg = ShopConfig { arrival_prob: 0.9, ..ShopConfig::default() };
    let edf = evaluate_per_seed(&EvalPolicy::Heuristic(HeuristicKind::Edf), &cfg, &seeds()).unwrap();
    for (seed, e) in seeds().into_iter().zip(&edf) {
        let mut never = |_: &Shop| Action::Void;
        let mut shop = Shop::new(cfg.clone(), seed).unwrap();
        let ep = run_episode(&mut shop, &mut never).unwrap();
        let idle = MetricsRow::from_episode(&ep.rewards, &ep.final_state, cfg.gamma);
        assert!(e.jobs_completed > 0.0 && idle.jobs_completed == 0.0, "seed {seed}");
        assert!(e.jobs_dropped < idle.jobs_dropped, "seed {seed}");
    }
}

#[test]
fn idle_machine_only_collects_drop_penalties() {
    let cfg = ShopConfig { arrival_prob: 0.9, ..ShopConfig::default() };
    let mut never = |_: &Shop| Action::Void;
    let mut shop = Shop::new(cfg.clone(), 4).unwrap();
    let ep = run_episode(&mut shop, &mut never).unwrap();
    let m = MetricsRow::from_episode(&ep.rewards, &ep.final_state, cfg.gamma);
    assert_eq!(m.jobs_completed, 0.0);
    assert!(m.jobs_dropped > 0.0);
    assert!(ep.rewards.iter().all(|&r| r == 0.0 || r == cfg.drop_penalty));
    let drops = ep.log.iter().filter(|r| r.dropped_flag == 1).count() as f64;
    assert_eq!(drops, m.jobs_dropped);
}

#[test]
fn heavier_traffic_drops_more_jobs() {
    let spec = ExperimentSpec::from_json(
        r#"{"dispatcher": "edf", "sweep": {"field": "lambda", "values": [0.3, 0.6, 0.9]}}"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&spec, dir.path()).unwrap();
    let dropped: Vec<f64> = report.cells.iter().map(|c| c.metrics.jobs_dropped).collect();
    assert!(dropped.windows(2).all(|w| w[0] <= w[1]), "{dropped:?}");
    assert!(report.cells[2].metrics.total_discounted_reward < report.cells[0].metrics.total_discounted_reward);
}

#[test]
fn manifest_rerun_reproduces_every_output() {
    let spec = ExperimentSpec::from_json(
        r#"{"config": {"T": 8, "Z": 3, "n": 5, "m": 10, "long_range": [6, 8], "traj_len": 20},
            "dispatcher": "imitation", "eval_trajectories": 2,
            "imitation": {"samples": 300, "options": {"hidden": [8], "supervised": {"epochs": 3}}}}"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_experiment(&spec, &a).unwrap();
    rerun_manifest(a.join(MANIFEST_FILE), &b).unwrap();
    for name in [METRICS_FILE, CURVE_FILE, MANIFEST_FILE] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn tampered_manifest_is_rejected() {
    let spec = ExperimentSpec::from_json(r#"{"eval_trajectories": 1}"#).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&spec, dir.path()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).unwrap().replacen("\"eval_trajectories\": 1", "\"eval_trajectories\": 2", 1);
    std::fs::write(&path, text).unwrap();
    assert!(rerun_manifest(&path, &dir.path().join("again")).is_err());
}

