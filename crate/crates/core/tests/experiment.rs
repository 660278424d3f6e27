use supermux::alloc::{allocate, AllocatorOptions, Scheme, SurrogateModel};
use supermux::experiment::{
    cdf_stats, dof_experiment, run_experiment, write_outputs, DofConfig, ExperimentConfig, MuPolicy, ScenarioRef,
};
use supermux::sysim::{drop_to_channel_stats, generate_drop, NetworkScenario};
use supermux::{MimoShape, RateEstimator, SurrogateTable};

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        user_counts: vec![4, 8],
        n_drops: 6,
        n_samples: 2_000,
        shapes: vec!["4x2".into()],
        seed: 5,
        ..ExperimentConfig::default()
    }
}

#[test]
fn single_drop_matches_direct_allocation() {
    let cfg = ExperimentConfig {
        user_counts: vec![1],
        schemes: vec![Scheme::Alg1],
        n_drops: 1,
        n_samples: 2_000,
        shapes: vec!["4x2".into()],
        seed: 9,
        ..ExperimentConfig::default()
    };
    let (res, _) = run_experiment(&cfg, None).unwrap();
    let sc = NetworkScenario::default();
    let drop = generate_drop(&sc, 1, 9, 0).unwrap();
    let stats = drop_to_channel_stats(&drop, &sc, 1).unwrap();
    let shape = MimoShape::new(4, 2).unwrap();
    let est = RateEstimator::lookup(shape, 2_000, 9).unwrap();
    let alpha = SurrogateTable::reference().get(shape).unwrap().alpha;
    let model = SurrogateModel::new(alpha, 2).unwrap();
    let direct = allocate(
        Scheme::Alg1,
        &stats,
        1.0,
        1.0,
        model,
        &est,
        &AllocatorOptions::default(),
    )
    .unwrap();
    let s = res.series(shape, 1, Scheme::Alg1).unwrap();
    assert_eq!(s.sum_rates, vec![direct.rates.sum_rate]);
}

#[test]
fn unicast_only_ignores_the_weight_policy() {
    let mut a = small_config();
    a.schemes = vec![Scheme::Uo];
    let mut b = a.clone();
    b.mu_policy = MuPolicy::Fixed(0.3);
    let (ra, _) = run_experiment(&a, None).unwrap();
    let (rb, _) = run_experiment(&b, None).unwrap();
    for (x, y) in ra.series.iter().zip(&rb.series) {
        assert_eq!(x.sum_rates, y.sum_rates);
    }
}

#[test]
fn outputs_are_byte_identical_across_reruns_and_thread_counts() {
    let mut cfg = small_config();
    cfg.export_drops = true;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = pool.install(|| {
            let (res, drops) = run_experiment(&cfg, None).unwrap();
            write_outputs(&res, &drops, dir.path()).unwrap()
        });
        let files: Vec<(String, Vec<u8>)> = manifest
            .files
            .iter()
            .map(|f| (f.clone(), std::fs::read(dir.path().join(f)).unwrap()))
            .collect();
        (manifest, files)
    };
    let (m1, f1) = run(1);
    let (m2, f2) = run(3);
    assert_eq!(f1, f2);
    assert_eq!(m1.config_hash, m2.config_hash);
    assert!(m1.invariant_violations.is_empty() && m1.failed_drops.is_empty());
    let names: Vec<&str> = f1.iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.starts_with(&["cdf.csv", "percentile.csv", "modes.csv"]));
    assert_eq!(names.iter().filter(|n| n.starts_with("drops/")).count(), 6);
}

#[test]
fn csv_schemas_and_aggregates_are_consistent() {
    let cfg = small_config();
    let (res, drops) = run_experiment(&cfg, None).unwrap();
    assert!(drops.is_empty());
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&res, &drops, dir.path()).unwrap();
    let read = |n: &str| std::fs::read_to_string(dir.path().join(n)).unwrap();
    let cdf = read("cdf.csv");
    assert!(cdf.starts_with("scheme,k_users,sum_rate_bps_hz\n"));
    assert_eq!(cdf.lines().count(), 1 + 6 * 2 * Scheme::ALL.len());
    assert!(read("percentile.csv").starts_with("scheme,k_users,p5_se\n"));
    let modes = read("modes.csv");
    assert!(modes.starts_with("k_users,mode,fraction\n"));
    for k in [4, 8] {
        let f = res.modes(MimoShape::new(4, 2).unwrap(), k).unwrap();
        assert!((f.superposition + f.unicast_only + f.multicast_only + f.off - 1.0).abs() < 1e-12);
    }
    for s in &res.series {
        assert_eq!(s.sum_rates.len(), 6);
        assert_eq!(s.user_se.len(), 6 * s.k_users);
        let c = cdf_stats(&s.sum_rates).unwrap();
        assert!(c.points.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
        assert_eq!(c.eval(f64::MAX), 1.0);
    }
}

#[test]
fn scenario_can_be_loaded_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let sc = NetworkScenario {
        n_subchannels: 4,
        ..NetworkScenario::default()
    };
    std::fs::write(dir.path().join("rma.toml"), sc.to_toml()).unwrap();
    let cfg = ExperimentConfig {
        scenario: ScenarioRef::Path("rma.toml".into()),
        user_counts: vec![3],
        schemes: vec![Scheme::Mo],
        n_drops: 2,
        n_samples: 1_000,
        shapes: vec!["2x2".into()],
        ..ExperimentConfig::default()
    };
    let (res, _) = run_experiment(&cfg, Some(dir.path())).unwrap();
    assert_eq!(res.series[0].sum_rates.len(), 2);
    assert!(run_experiment(&cfg, None).is_err());
}

#[test]
fn dof_sweep_reports_expected_slopes() {
    let cfg = DofConfig::default();
    let rows = dof_experiment(&cfg, &SurrogateTable::reference(), 3).unwrap();
    let slope = |name: &str| rows.iter().find(|r| r.scheme == name).unwrap().slope;
    assert!((slope("mo") - 6.0).abs() < 0.3);
    assert!((slope("uo") - 2.0).abs() < 0.1);
    assert!((slope("sc-m1-f0.5") - 4.0).abs() < 0.28);
}
