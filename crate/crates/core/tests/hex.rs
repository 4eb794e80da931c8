mod common;

use alignperc::hex::{
    build_hex, crossing_fraction, embedded_edge_states, embedded_uniforms, hex_threshold, hex_threshold_estimate,
    hex_thresholds, independence_battery,
};
use alignperc::{ModelParams, RandomSource};
use common::central_vertices;
use rayon::prelude::*;

#[test]
fn full_occupancy_threshold_is_the_honeycomb_value() {
    let est = hex_threshold_estimate(1.0, 64, 2000, &RandomSource::from_seed(61)).unwrap();
    assert!((est.estimate - hex_threshold()).abs() <= 0.02, "{est:?}");
    assert!((hex_threshold() - (1.0 - 2.0 * (std::f64::consts::PI / 18.0).sin())).abs() < 1e-15);
}

#[test]
fn estimates_agree_across_p() {
    let rng = RandomSource::from_seed(62);
    let lo = hex_threshold_estimate(0.3, 32, 2000, &rng.child(0)).unwrap();
    let hi = hex_threshold_estimate(0.9, 32, 2000, &rng.child(1)).unwrap();
    assert!(lo.ci.overlaps(&hi.ci), "{lo:?} vs {hi:?}");
}

#[test]
fn crossing_is_near_certain_well_above_threshold() {
    let t = hex_thresholds(0.5, 64, 1000, &RandomSource::from_seed(63)).unwrap();
    let f = crossing_fraction(&t, 0.9);
    assert!(f > 0.99, "crossing fraction {f}");
}

#[test]
fn crossing_fraction_is_monotone_in_lambda() {
    let t = hex_thresholds(0.6, 24, 500, &RandomSource::from_seed(64)).unwrap();
    let f: Vec<f64> = (0..=20).map(|i| crossing_fraction(&t, i as f64 / 20.0)).collect();
    assert!(f.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(f[0], 0.0);
}

#[test]
fn edges_sharing_a_central_vertex_are_uncorrelated() {
    let (p, lambda) = (0.5, 0.4);
    let emb = build_hex(16, 8).unwrap();
    let centre = central_vertices(&emb, 2);
    let rng = RandomSource::from_seed(65);
    let samples: Vec<Vec<bool>> = (0..100_000u64)
        .into_par_iter()
        .map(|i| embedded_uniforms(p, &emb, &rng.child(i)).unwrap().into_iter().map(|u| u < lambda).collect())
        .collect();
    let rep = independence_battery(&emb, &samples, lambda, Some(&centre)).unwrap();
    assert!(rep.pairs_tested >= 10, "{rep:?}");
    assert!(rep.within(4.0), "{rep:?}");
}

#[test]
fn dense_sampler_has_the_same_marginal() {
    let (p, lambda) = (0.5, 0.4);
    let emb = build_hex(8, 4).unwrap();
    let rng = RandomSource::from_seed(66);
    let n = 20_000u64;
    let params = ModelParams::new(p, lambda).unwrap();
    let open: u64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = embedded_edge_states(params, &emb, &rng.child(i)).unwrap();
            s.open.iter().filter(|&&b| b).count() as u64
        })
        .sum();
    let m = (n as usize * emb.edges.len()) as f64;
    let z = (open as f64 - m * lambda) / (m * lambda * (1.0 - lambda)).sqrt();
    assert!(z.abs() <= 4.0, "z = {z}");
}
