//! Golden fixtures in `tests/fixtures`. Set `ALIGNPERC_UPDATE_GOLDEN=1`
//! to rewrite the sampled snapshots after an intended stream change.

use std::path::PathBuf;

use alignperc::fixture::{ModelFixture, SiteFixture, StatesFixture};
use alignperc::model::{extract_pairs, project_edges, sample_model, PairKind};
use alignperc::{Boundary, LatticeSpec, ModelParams, RandomSource};
use serde::{Deserialize, Serialize};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct Expected {
    /// `(axis, line_base coords, start, len, kind)` in canonical pair order.
    pairs: Vec<(usize, Vec<usize>, usize, usize, PairKind)>,
    /// `(anchor coords, axis)` of every open edge.
    open_edges: Vec<(Vec<usize>, usize)>,
}

fn describe(fx: &ModelFixture) -> Expected {
    let sites = fx.sites.to_config().unwrap();
    let spec = sites.spec().clone();
    let seg = extract_pairs(&sites);
    let states = fx.states.as_ref().unwrap().to_states(&seg).unwrap();
    let edges = project_edges(&seg, &states).unwrap();
    Expected {
        pairs: seg
            .pairs()
            .iter()
            .map(|p| (p.axis, spec.coords(p.line_base), p.start, p.len, p.kind))
            .collect(),
        open_edges: (0..spec.num_edge_slots())
            .filter(|&e| edges.is_open(e))
            .map(|e| {
                let (s, a) = spec.edge_anchor(e);
                (spec.coords(s), a)
            })
            .collect(),
    }
}

fn read<T: for<'de> Deserialize<'de>>(name: &str) -> T {
    serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

#[test]
fn hand_fixture_pairs_and_projection() {
    let fx = ModelFixture::load(&fixture("torus_4x4.json")).unwrap();
    let want: Expected = read("torus_4x4.expected.json");
    assert_eq!(describe(&fx), want);
}

#[test]
fn closed_box_fixture_pairs_and_projection() {
    let fx = ModelFixture::load(&fixture("closed_5x3.json")).unwrap();
    let want: Expected = read("closed_5x3.expected.json");
    assert_eq!(describe(&fx), want);
}

#[test]
fn seeded_samples_are_stable() {
    let cases = [
        ("sample_torus_6x6.json", Boundary::Torus, 0.5, 0.5, 2024u64),
        ("sample_frame_6x6.json", Boundary::OccupiedFrame, 0.3, 0.7, 7),
    ];
    for (name, boundary, p, lambda, seed) in cases {
        let spec = LatticeSpec::cube(2, 6, boundary).unwrap();
        let s = sample_model(&spec, ModelParams::new(p, lambda).unwrap(), &RandomSource::from_seed(seed)).unwrap();
        let got = ModelFixture {
            sites: SiteFixture::from_config(&s.sites),
            states: Some(StatesFixture::from_states(&s.states)),
        };
        if std::env::var_os("ALIGNPERC_UPDATE_GOLDEN").is_some() {
            got.save(&fixture(name)).unwrap();
        }
        let want = ModelFixture::load(&fixture(name)).unwrap();
        assert_eq!(got, want, "{name}");
    }
}
