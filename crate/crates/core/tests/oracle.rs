use supermux::alloc::{algorithm1, AllocatorOptions, Scheme, SurrogateModel};
use supermux::oracle::{brute_force_wsr, direct_covariance_solver, dof_slope, DirectOptions, DofScenario, OraclePoint};
use supermux::{ChannelStats, MimoShape, RateEstimator};

fn siso_lookup() -> RateEstimator {
    RateEstimator::lookup(MimoShape::new(1, 1).unwrap(), 50_000, 11).unwrap()
}

#[test]
fn brute_force_agrees_with_algorithm1_on_two_user_instance() {
    let stats = ChannelStats::with_uniform_eta(vec![vec![4.0, 1.0]]).unwrap();
    let est = siso_lookup();
    let bf = brute_force_wsr(&stats, 2.0, 10.0, 16, &est).unwrap();
    let model = SurrogateModel::new(1.306, 1).unwrap();
    let a1 = algorithm1(&stats, 2.0, 10.0, model, &est, &AllocatorOptions::default()).unwrap();
    let rel = (bf.best_wsr - a1.rates.wsr).abs() / bf.best_wsr;
    assert!(rel < 0.02, "brute {} vs alg1 {}", bf.best_wsr, a1.rates.wsr);
    assert!(bf.best_wsr >= a1.rates.wsr - 1e-6);
    // the best point serves the strongest user
    match bf.best_point {
        OraclePoint::Powers { unicast_user, p1, .. } => {
            assert!(p1[0] > 0.0);
            assert_eq!(unicast_user, vec![0]);
        }
        _ => panic!("expected scalar powers"),
    }
}

#[test]
fn brute_force_refinement_is_consistent() {
    let stats = ChannelStats::with_uniform_eta(vec![vec![3.0, 1.0, 0.4], vec![0.5, 2.0, 1.5]]).unwrap();
    let est = siso_lookup();
    let coarse = brute_force_wsr(&stats, 3.0, 4.0, 8, &est).unwrap();
    let fine = brute_force_wsr(&stats, 3.0, 4.0, 16, &est).unwrap();
    assert!(
        fine.best_wsr >= coarse.best_wsr - 1e-3,
        "{} < {}",
        fine.best_wsr,
        coarse.best_wsr
    );
    assert!((fine.best_wsr - coarse.best_wsr).abs() < 0.02);
}

#[test]
fn brute_force_tracks_algorithm1_on_random_instances() {
    let est = RateEstimator::lookup(MimoShape::new(2, 2).unwrap(), 20_000, 5).unwrap();
    let model = SurrogateModel::new(1.402, 2).unwrap();
    let rows = [
        vec![vec![5.0, 1.2, 0.3], vec![2.0, 4.0, 0.8]],
        vec![vec![10.0, 9.0, 1.0], vec![0.2, 0.7, 3.0]],
    ];
    for r in rows {
        let stats = ChannelStats::with_uniform_eta(r).unwrap();
        let bf = brute_force_wsr(&stats, 3.0, 2.0, 16, &est).unwrap();
        let a1 = algorithm1(&stats, 3.0, 2.0, model, &est, &AllocatorOptions::default()).unwrap();
        // the grid search is local on ridges of the max-min objective, so
        // agreement is two-sided rather than strict dominance
        assert!(
            (bf.best_wsr - a1.rates.wsr).abs() <= 0.03 * bf.best_wsr,
            "{} vs {}",
            bf.best_wsr,
            a1.rates.wsr
        );
    }
}

fn covariances(r: &supermux::oracle::OracleResult) -> (Vec<f64>, Vec<Vec<f64>>) {
    match &r.best_point {
        OraclePoint::Covariances { q0, q_users } => (q0.clone(), q_users.clone()),
        _ => panic!("expected covariances"),
    }
}

#[test]
fn direct_solver_shows_greedy_structure_and_scalar_multicast() {
    let stats = ChannelStats::with_uniform_eta(vec![vec![4.0, 1.0, 0.5]]).unwrap();
    let opts = DirectOptions {
        n_samples: 300,
        random_starts: 5,
        ..DirectOptions::default()
    };
    let r = direct_covariance_solver(&stats, &[0.0, 0.0, 2.0], 4.0, MimoShape::new(2, 2).unwrap(), &opts).unwrap();
    let (q0, q) = covariances(&r);
    let others: f64 = q[1].iter().chain(&q[2]).sum();
    assert!(others / 4.0 < 1e-3, "weaker users hold power {others}");
    let mean = q0.iter().sum::<f64>() / q0.len() as f64;
    assert!(mean > 0.0);
    for v in &q0 {
        assert!((v / mean - 1.0).abs() < 0.01, "q0 = {q0:?}");
    }
}

#[test]
fn direct_solver_unicast_only_below_unit_weight() {
    let stats = ChannelStats::with_uniform_eta(vec![vec![4.0, 1.0]]).unwrap();
    let opts = DirectOptions {
        n_samples: 300,
        ..DirectOptions::default()
    };
    let r = direct_covariance_solver(&stats, &[0.0, 0.8], 2.0, MimoShape::new(2, 2).unwrap(), &opts).unwrap();
    let (q0, q) = covariances(&r);
    assert!(q0.iter().sum::<f64>() < 2e-3, "q0 = {q0:?}");
    for v in &q[0] {
        assert!((v - 1.0).abs() < 0.01, "q1 = {:?}", q[0]);
    }
}

#[test]
fn direct_solver_rejects_large_shapes() {
    let stats = ChannelStats::with_uniform_eta(vec![vec![4.0, 1.0]]).unwrap();
    let r = direct_covariance_solver(
        &stats,
        &[1.0, 1.0],
        1.0,
        MimoShape::new(8, 2).unwrap(),
        &DirectOptions::default(),
    );
    assert!(r.is_err());
}

fn dof_setup() -> (ChannelStats, RateEstimator, SurrogateModel) {
    let stats = ChannelStats::with_uniform_eta(vec![vec![2.0, 1.0, 0.5], vec![1.5, 0.7, 3.0]]).unwrap();
    let est = RateEstimator::monte_carlo(MimoShape::new(2, 2).unwrap(), 4_000, 3).unwrap();
    (stats, est, SurrogateModel::new(1.402, 2).unwrap())
}

const GRID: [f64; 4] = [30.0, 40.0, 50.0, 60.0];

#[test]
fn dof_multicast_only_is_full() {
    let (stats, est, model) = dof_setup();
    let r = dof_slope(
        DofScenario::Scheme { scheme: Scheme::Mo },
        &stats,
        &GRID,
        model,
        &est,
        &AllocatorOptions::default(),
    )
    .unwrap();
    assert!((r.slope - 6.0).abs() < 0.3, "slope {}", r.slope);
}

#[test]
fn dof_unicast_only_is_single_user() {
    let (stats, est, model) = dof_setup();
    let r = dof_slope(
        DofScenario::Scheme { scheme: Scheme::Uo },
        &stats,
        &GRID,
        model,
        &est,
        &AllocatorOptions::default(),
    )
    .unwrap();
    assert!((r.slope - 2.0).abs() < 0.15, "slope {}", r.slope);
}

#[test]
fn dof_partial_superposition() {
    let (stats, est, model) = dof_setup();
    let r = dof_slope(
        DofScenario::FixedSuperposition {
            m_prime: 1,
            unicast_fraction: 0.5,
        },
        &stats,
        &GRID,
        model,
        &est,
        &AllocatorOptions::default(),
    )
    .unwrap();
    assert!((r.slope - 4.0).abs() < 0.2, "slope {}", r.slope);
    assert!(dof_slope(
        DofScenario::Scheme { scheme: Scheme::Uo },
        &stats,
        &[30.0, 40.0],
        model,
        &est,
        &AllocatorOptions::default()
    )
    .is_err());
}
