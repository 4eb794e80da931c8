mod common;

use std::collections::BTreeMap;

use alignperc::oracle::{
    all_open_probability, enumerate_box_probability, pattern_probability, BoxEvent, EdgePattern, EdgeState,
    PatternEdge,
};
use alignperc::{Boundary, EdgeConfig, LatticeSpec, ModelParams, RandomSource};
use alignperc::model::sample_model;
use common::pattern_holds;
use rand::Rng;
use rayon::prelude::*;

/// Up to four edges anchored in `[-1, 1]^2` with random required states.
fn random_pattern(rng: &RandomSource) -> EdgePattern {
    let mut r = rng.rng();
    let k = r.random_range(1..=4);
    let mut edges = BTreeMap::new();
    while edges.len() < k {
        let site = vec![r.random_range(-1..=1i64), r.random_range(-1..=1i64)];
        let axis = r.random_range(0..2usize);
        edges.insert((site, axis), EdgeState::from_open(r.random_bool(0.5)));
    }
    let edges = edges
        .into_iter()
        .map(|((site, axis), state)| PatternEdge { site, axis, state })
        .collect();
    EdgePattern::new(2, edges).unwrap()
}

#[test]
fn random_patterns_match_simulation() {
    let (p, lambda) = (0.45, 0.6);
    let rng = RandomSource::from_seed(31);
    let patterns: Vec<EdgePattern> = (0..24).map(|i| random_pattern(&rng.child(i))).collect();
    let exact: Vec<f64> = patterns.iter().map(|pat| pattern_probability(pat, p, lambda).unwrap()).collect();

    // frame two sites beyond the pattern support
    let spec = LatticeSpec::cube(2, 7, Boundary::OccupiedFrame).unwrap();
    let params = ModelParams::new(p, lambda).unwrap();
    let n = 100_000u64;
    let mc = rng.child(1000);
    let hits = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = sample_model(&spec, params, &mc.child(i)).unwrap();
            patterns.iter().map(|pat| u64::from(pattern_holds(&s.edges, pat, &[3, 3]))).collect::<Vec<_>>()
        })
        .reduce(|| vec![0; patterns.len()], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    for ((pat, &q), &h) in patterns.iter().zip(&exact).zip(&hits) {
        let f = h as f64 / n as f64;
        let sd = (q * (1.0 - q) / n as f64).sqrt().max(1e-9);
        assert!((f - q).abs() <= 4.0 * sd, "{pat:?}: exact {q}, simulated {f}");
    }
}

#[test]
fn closed_box_centre_incident_edge_matches_simulation() {
    let spec = LatticeSpec::cube(2, 3, Boundary::Closed).unwrap();
    let centre = spec.index(&[1, 1]);
    let around: Vec<usize> = (0..2)
        .flat_map(|a| [spec.edge_index(centre, a), spec.edge_index(spec.step(centre, a, false).unwrap(), a)])
        .collect();
    let test = |e: &EdgeConfig| around.iter().any(|&x| e.is_open(x));
    let (p, lambda) = (0.5, 0.5);
    let exact = enumerate_box_probability(&spec, p, lambda, &BoxEvent::Predicate { test: &test, support: None }).unwrap();
    let with_support =
        enumerate_box_probability(&spec, p, lambda, &BoxEvent::Predicate { test: &test, support: Some(&around) }).unwrap();
    assert!((exact - with_support).abs() < 1e-12);

    let params = ModelParams::new(p, lambda).unwrap();
    let rng = RandomSource::from_seed(32);
    let n = 100_000u64;
    let hits: u64 = (0..n)
        .into_par_iter()
        .map(|i| u64::from(test(&sample_model(&spec, params, &rng.child(i)).unwrap().edges)))
        .sum();
    let f = hits as f64 / n as f64;
    let sd = (exact * (1.0 - exact) / n as f64).sqrt();
    assert!((f - exact).abs() <= 4.0 * sd, "exact {exact}, simulated {f}");
}

#[test]
fn all_open_on_a_line_pair_decreases_in_p() {
    let e = [(vec![0i64, 0], 0usize), (vec![-1, 0], 0)];
    let lo = all_open_probability(2, &e, 0.2, 0.5).unwrap();
    let hi = all_open_probability(2, &e, 0.8, 0.5).unwrap();
    // one pair when the origin is vacant, two otherwise
    assert!((lo - (0.8 * 0.5 + 0.2 * 0.25)).abs() < 1e-15);
    assert!(lo >= hi);
}

#[test]
fn polynomial_is_a_probability_on_a_grid() {
    let rng = RandomSource::from_seed(33);
    for i in 0..40 {
        let pat = random_pattern(&rng.child(i));
        for p in [0.1, 0.5, 0.9, 1.0] {
            for lambda in [0.0, 0.3, 0.7, 1.0] {
                let q = pattern_probability(&pat, p, lambda).unwrap();
                assert!((-1e-15..=1.0 + 1e-15).contains(&q), "{pat:?} at ({p},{lambda}): {q}");
            }
        }
    }
}
