use alignperc::covdecay::{
    covariance_batch, covariance_estimate, decay_bound, decoupling_event_probability, CovModel, LocalEvent,
    LocalEventSpec,
};
use alignperc::RandomSource;

#[test]
fn one_arm_covariance_at_distance_eight_is_dominated() {
    let a = LocalEventSpec { center: vec![0, 0], l: 2, event: LocalEvent::OneArm };
    let b = LocalEventSpec { center: vec![8, 0], ..a.clone() };
    let row = covariance_estimate(&a, &b, 0.3, CovModel::Independent { lambda: 0.5 }, 100_000, &RandomSource::from_seed(51))
        .unwrap();
    let bound = decay_bound(2.0, 8.0, 0.3, 2).unwrap();
    assert_eq!(row.bound, bound);
    assert!(row.cov_hat.abs() <= bound + 3.0 * row.sigma, "{row:?}");
}

#[test]
fn full_occupancy_decorrelates_disjoint_boxes() {
    // at p = 1 every edge is its own pair, so boxes at distance > 2L share nothing
    let rows = covariance_batch(&LocalEvent::ALL, 2, 1, 3, 1.0, CovModel::Independent { lambda: 0.5 }, 50_000, &RandomSource::from_seed(52))
        .unwrap();
    for r in rows {
        assert_eq!(r.bound, 0.0);
        assert!(r.cov_hat.abs() <= 4.0 * r.sigma, "{r:?}");
    }
}

#[test]
fn lambda_extremes_give_zero_covariance() {
    for lambda in [0.0, 1.0] {
        let rows = covariance_batch(&LocalEvent::ALL, 2, 1, 4, 0.5, CovModel::Independent { lambda }, 2_000, &RandomSource::from_seed(53))
            .unwrap();
        for r in rows {
            assert_eq!(r.cov_hat, 0.0, "{r:?}");
        }
    }
}

#[test]
fn decoupling_exact_never_exceeds_union_bound() {
    for l in 1..=3 {
        for dist in [2 * l + 1, 2 * l + 4, 4 * l + 6] {
            for p in [0.05, 0.2, 0.5, 0.8, 0.95] {
                let c = decoupling_event_probability(l, &[dist, 0], p).unwrap();
                assert!((0.0..=1.0).contains(&c.exact), "{c:?}");
                assert!(c.exact <= c.union_bound + 1e-12, "L={l} D={dist} p={p}: {c:?}");
            }
        }
    }
}

#[test]
fn decay_bound_reference_value() {
    let p = 1.0 - (-1.0f64).exp();
    let b = decay_bound(1.0, 5.0, p, 2).unwrap();
    assert!((b - 12.0 * (-3.0f64).exp()).abs() < 1e-12);
    assert!(decay_bound(1.0, 500.0, 0.5, 2).unwrap() < 1e-100);
}
