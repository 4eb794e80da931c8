//! Site fields, feasible pairs and segment states.
//!
//! A sample of the model is built in three stages: occupancy of every site
//! ([`SiteConfig`]), the feasible pairs between consecutive occupied sites
//! on every axis line ([`LineSegmentation`]), and one Bernoulli state per
//! pair ([`PairStates`]). [`project_edges`] turns pair states into the
//! open/closed state of each lattice edge.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{check_probability_closed, check_probability_open_closed, Error, Result};
use crate::lattice::{Boundary, EdgeConfig, LatticeSpec};
use crate::rng::{mix64, streams, RandomSource};

/// Sentinel in the edge-to-pair map for edges covered by no pair.
pub const NO_PAIR: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p: f64,
    pub lambda: f64,
}

impl ModelParams {
    pub fn new(p: f64, lambda: f64) -> Result<Self> {
        check_probability_open_closed("p", p)?;
        check_probability_closed("lambda", lambda)?;
        Ok(Self { p, lambda })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteConfig {
    spec: LatticeSpec,
    occupied: Vec<bool>,
    seed: u64,
    p: Option<f64>,
}

impl SiteConfig {
    /// Builds a configuration from explicit occupancy. Frame sites are
    /// forced occupied when the boundary is `occupied_frame`.
    pub fn from_occupancy(spec: &LatticeSpec, mut occupied: Vec<bool>) -> Result<Self> {
        if occupied.len() != spec.num_sites() {
            return Err(Error::Structural(format!(
                "occupancy has {} entries, lattice has {} sites",
                occupied.len(),
                spec.num_sites()
            )));
        }
        force_frame(spec, &mut occupied);
        Ok(Self {
            spec: spec.clone(),
            occupied,
            seed: 0,
            p: None,
        })
    }

    #[inline]
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    #[inline]
    pub fn is_occupied(&self, site: usize) -> bool {
        self.occupied[site]
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupied
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Sampling probability; `None` for hand-built configurations.
    pub fn p(&self) -> Option<f64> {
        self.p
    }

    /// Whether every site occupied here is occupied in `other`.
    pub fn is_subset_of(&self, other: &SiteConfig) -> bool {
        self.occupied
            .iter()
            .zip(&other.occupied)
            .all(|(&a, &b)| !a || b)
    }
}

fn force_frame(spec: &LatticeSpec, occupied: &mut [bool]) {
    if spec.boundary() == Boundary::OccupiedFrame {
        for (site, o) in occupied.iter_mut().enumerate() {
            if spec.is_frame(site) {
                *o = true;
            }
        }
    }
}

/// Each site independently occupied with probability `p`.
pub fn sample_sites(spec: &LatticeSpec, p: f64, rng: &RandomSource) -> Result<SiteConfig> {
    check_probability_open_closed("p", p)?;
    let mut r = rng.rng();
    let mut occupied: Vec<bool> = (0..spec.num_sites())
        .map(|_| r.random::<f64>() < p)
        .collect();
    force_frame(spec, &mut occupied);
    Ok(SiteConfig {
        spec: spec.clone(),
        occupied,
        seed: rng.seed(),
        p: Some(p),
    })
}

/// Same law as [`sample_sites`], generated line by line from geometric gaps
/// between occupied sites. Work is proportional to the number of occupied
/// sites plus the number of lines. Each axis-0 line uses its own stream.
pub fn sample_sites_sparse(spec: &LatticeSpec, p: f64, rng: &RandomSource) -> Result<SiteConfig> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param(format!(
            "sparse sampling needs p in (0,1), got {p}"
        )));
    }
    let geo = Geometric::new(p).map_err(|e| Error::param(e.to_string()))?;
    let e0 = spec.extent()[0];
    let mut occupied = vec![false; spec.num_sites()];
    for (line, chunk) in occupied.chunks_mut(e0).enumerate() {
        let mut r = rng.child(line as u64).rng();
        let mut pos = geo.sample(&mut r);
        while pos < e0 as u64 {
            chunk[pos as usize] = true;
            pos = pos.saturating_add(1).saturating_add(geo.sample(&mut r));
        }
    }
    force_frame(spec, &mut occupied);
    Ok(SiteConfig {
        spec: spec.clone(),
        occupied,
        seed: rng.seed(),
        p: Some(p),
    })
}

/// Occupancy at several `p` from one uniform per site: site occupied at
/// level `p` iff its uniform is below `p`, so the sets are nested.
pub fn coupled_sample_p(spec: &LatticeSpec, ps: &[f64], rng: &RandomSource) -> Result<Vec<SiteConfig>> {
    check_ascending("ps", ps)?;
    for &p in ps {
        check_probability_open_closed("p", p)?;
    }
    let mut r = rng.rng();
    let uniforms: Vec<f64> = (0..spec.num_sites()).map(|_| r.random()).collect();
    Ok(ps
        .iter()
        .map(|&p| {
            let mut occupied: Vec<bool> = uniforms.iter().map(|&u| u < p).collect();
            force_frame(spec, &mut occupied);
            SiteConfig {
                spec: spec.clone(),
                occupied,
                seed: rng.seed(),
                p: Some(p),
            }
        })
        .collect())
}

fn check_ascending(name: &str, xs: &[f64]) -> Result<()> {
    if xs.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::param(format!("{name} must be ascending")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Ordinary,
    /// The single arc of a torus line holding exactly one occupied site.
    FullCycle,
}

/// A maximal axis-parallel run of edges between two consecutive occupied
/// sites of one line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeasiblePair {
    pub axis: usize,
    /// Site of the line with coordinate 0 along `axis`.
    pub line_base: usize,
    /// Position of the first endpoint along the line.
    pub start: usize,
    /// Number of edges; the span may wrap on a torus.
    pub len: usize,
    pub kind: PairKind,
}

impl FeasiblePair {
    /// Lattice edges covered by this pair, in order along the line.
    pub fn edges<'a>(&self, spec: &'a LatticeSpec) -> impl Iterator<Item = usize> + 'a {
        let FeasiblePair {
            axis,
            line_base,
            start,
            len,
            ..
        } = *self;
        let e = spec.extent()[axis];
        let stride = spec.stride(axis);
        (0..len).map(move |j| spec.edge_index(line_base + ((start + j) % e) * stride, axis))
    }

    /// The two endpoint sites (equal for a full cycle).
    pub fn endpoints(&self, spec: &LatticeSpec) -> (usize, usize) {
        let e = spec.extent()[self.axis];
        let stride = spec.stride(self.axis);
        (
            self.line_base + self.start * stride,
            self.line_base + ((self.start + self.len) % e) * stride,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineEntry {
    pub axis: usize,
    pub line_base: usize,
    pub pairs: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct LineSegmentation {
    spec: LatticeSpec,
    pairs: Vec<FeasiblePair>,
    lines: Vec<LineEntry>,
    edge_pair: Vec<u32>,
    fingerprint: u64,
}

/// Base sites (coordinate 0 along `axis`) in increasing order.
pub(crate) fn line_bases(spec: &LatticeSpec, axis: usize) -> impl Iterator<Item = usize> {
    let stride = spec.stride(axis);
    let block = stride * spec.extent()[axis];
    let outer = spec.num_sites() / block;
    (0..outer).flat_map(move |o| (0..stride).map(move |i| o * block + i))
}

/// Feasible pairs of a site configuration.
pub fn extract_pairs(sites: &SiteConfig) -> LineSegmentation {
    let spec = &sites.spec;
    let mut pairs = Vec::with_capacity(sites.occupied_count() * spec.d() + spec.d());
    let mut lines = Vec::new();
    let mut edge_pair = vec![NO_PAIR; spec.num_edge_slots()];
    let mut occ_pos: Vec<usize> = Vec::new();
    let torus = spec.boundary().is_periodic();
    let n = spec.num_sites();

    for axis in 0..spec.d() {
        let e = spec.extent()[axis];
        let stride = spec.stride(axis);
        for base in line_bases(spec, axis) {
            occ_pos.clear();
            occ_pos.extend((0..e).filter(|&x| sites.occupied[base + x * stride]));
            let first = pairs.len();
            let mut push = |start: usize, len: usize, kind: PairKind| {
                let id = pairs.len() as u32;
                let pair = FeasiblePair {
                    axis,
                    line_base: base,
                    start,
                    len,
                    kind,
                };
                let slot = axis * n + base;
                if start + len <= e {
                    for j in start..start + len {
                        edge_pair[slot + j * stride] = id;
                    }
                } else {
                    for j in start..start + len {
                        edge_pair[slot + (j % e) * stride] = id;
                    }
                }
                pairs.push(pair);
            };
            match occ_pos.len() {
                0 => {}
                1 if torus => push(occ_pos[0], e, PairKind::FullCycle),
                k => {
                    for w in occ_pos.windows(2) {
                        push(w[0], w[1] - w[0], PairKind::Ordinary);
                    }
                    if torus {
                        push(occ_pos[k - 1], occ_pos[0] + e - occ_pos[k - 1], PairKind::Ordinary);
                    }
                }
            }
            lines.push(LineEntry {
                axis,
                line_base: base,
                pairs: first..pairs.len(),
            });
        }
    }
    let fingerprint = fingerprint(spec, &pairs);
    LineSegmentation {
        spec: spec.clone(),
        pairs,
        lines,
        edge_pair,
        fingerprint,
    }
}

fn fingerprint(spec: &LatticeSpec, pairs: &[FeasiblePair]) -> u64 {
    let mut h = mix64(spec.num_sites() as u64 ^ ((spec.d() as u64) << 56));
    for p in pairs {
        h = mix64(h ^ (p.line_base as u64).wrapping_mul(31) ^ ((p.start as u64) << 20) ^ ((p.len as u64) << 40) ^ p.axis as u64);
    }
    mix64(h ^ pairs.len() as u64)
}

impl LineSegmentation {
    #[inline]
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    #[inline]
    pub fn pairs(&self) -> &[FeasiblePair] {
        &self.pairs
    }

    #[inline]
    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn lines(&self) -> &[LineEntry] {
        &self.lines
    }

    /// Pair containing `edge`, if any.
    #[inline]
    pub fn pair_of_edge(&self, edge: usize) -> Option<usize> {
        match self.edge_pair[edge] {
            NO_PAIR => None,
            id => Some(id as usize),
        }
    }

    pub fn edge_pair_map(&self) -> &[u32] {
        &self.edge_pair
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Number of distinct pairs containing at least one edge of `edges`.
    pub fn pairs_touching(&self, edges: &[usize]) -> usize {
        let mut ids: Vec<u32> = edges
            .iter()
            .map(|&e| self.edge_pair[e])
            .filter(|&id| id != NO_PAIR)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Distinct pairs with `site` as an endpoint, in axis order (backward
    /// pair before forward pair).
    pub fn incident_pairs(&self, site: usize) -> Vec<usize> {
        let spec = &self.spec;
        let mut out = Vec::with_capacity(2 * spec.d());
        for axis in 0..spec.d() {
            if let Some(prev) = spec.step(site, axis, false) {
                if let Some(id) = self.pair_of_edge(spec.edge_index(prev, axis)) {
                    out.push(id);
                }
            }
            if spec.step(site, axis, true).is_some() {
                if let Some(id) = self.pair_of_edge(spec.edge_index(site, axis)) {
                    if !out.contains(&id) {
                        out.push(id);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairStates {
    state: Vec<bool>,
    lambda: Option<f64>,
    seed: u64,
    fingerprint: u64,
}

impl PairStates {
    pub fn from_states(seg: &LineSegmentation, state: Vec<bool>) -> Result<Self> {
        if state.len() != seg.num_pairs() {
            return Err(Error::Structural(format!(
                "{} states for {} pairs",
                state.len(),
                seg.num_pairs()
            )));
        }
        Ok(Self {
            state,
            lambda: None,
            seed: 0,
            fingerprint: seg.fingerprint,
        })
    }

    #[inline]
    pub fn is_open(&self, pair: usize) -> bool {
        self.state[pair]
    }

    pub fn states(&self) -> &[bool] {
        &self.state
    }

    pub fn open_count(&self) -> usize {
        self.state.iter().filter(|&&s| s).count()
    }

    /// Pair probability; `None` for one-choice and hand-built states.
    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_subset_of(&self, other: &PairStates) -> bool {
        self.state.iter().zip(&other.state).all(|(&a, &b)| !a || b)
    }
}

/// One uniform per pair in pair order; the coupling variable behind
/// [`assign_pair_states`] and [`coupled_sample_lambda`].
pub fn pair_uniforms(seg: &LineSegmentation, rng: &RandomSource) -> Vec<f64> {
    let mut r = rng.rng();
    (0..seg.num_pairs()).map(|_| r.random()).collect()
}

/// Independent model: each pair open with probability `lambda`.
pub fn assign_pair_states(seg: &LineSegmentation, lambda: f64, rng: &RandomSource) -> Result<PairStates> {
    check_probability_closed("lambda", lambda)?;
    let state = pair_uniforms(seg, rng).into_iter().map(|u| u < lambda).collect();
    Ok(PairStates {
        state,
        lambda: Some(lambda),
        seed: rng.seed(),
        fingerprint: seg.fingerprint,
    })
}

/// Pair states at ascending `lambdas` sharing one uniform per pair.
pub fn coupled_sample_lambda(seg: &LineSegmentation, lambdas: &[f64], rng: &RandomSource) -> Result<Vec<PairStates>> {
    check_ascending("lambdas", lambdas)?;
    for &l in lambdas {
        check_probability_closed("lambda", l)?;
    }
    let u = pair_uniforms(seg, rng);
    Ok(lambdas
        .iter()
        .map(|&lambda| PairStates {
            state: u.iter().map(|&x| x < lambda).collect(),
            lambda: Some(lambda),
            seed: rng.seed(),
            fingerprint: seg.fingerprint,
        })
        .collect())
}

/// One-choice model: every occupied site picks one of its distinct incident
/// pairs uniformly; a pair is open iff some endpoint picked it.
///
/// On a closed box an occupied site can be alone on all of its lines and
/// then has nothing to choose; it is skipped.
pub fn sample_one_choice(sites: &SiteConfig, seg: &LineSegmentation, rng: &RandomSource) -> Result<PairStates> {
    if sites.spec != seg.spec {
        return Err(Error::Structural("segmentation belongs to another lattice".into()));
    }
    let mut r = rng.rng();
    let mut state = vec![false; seg.num_pairs()];
    for site in 0..sites.spec.num_sites() {
        if !sites.occupied[site] {
            continue;
        }
        let inc = seg.incident_pairs(site);
        if inc.is_empty() {
            if sites.spec.boundary() != Boundary::Closed {
                return Err(Error::Internal(format!(
                    "occupied site {site} has no incident pair"
                )));
            }
            continue;
        }
        let pick = inc[r.random_range(0..inc.len())];
        state[pick] = true;
    }
    Ok(PairStates {
        state,
        lambda: None,
        seed: rng.seed(),
        fingerprint: seg.fingerprint,
    })
}

/// Edge `e` is open iff the pair containing it is open.
pub fn project_edges(seg: &LineSegmentation, states: &PairStates) -> Result<EdgeConfig> {
    if states.fingerprint != seg.fingerprint || states.state.len() != seg.num_pairs() {
        return Err(Error::Structural(
            "pair states were not drawn for this segmentation".into(),
        ));
    }
    let open = seg
        .edge_pair
        .iter()
        .map(|&id| id != NO_PAIR && states.state[id as usize])
        .collect();
    EdgeConfig::from_open(&seg.spec, open)
}

/// Independent bond percolation: every edge open with probability `lambda`.
pub fn sample_bernoulli_bonds(spec: &LatticeSpec, lambda: f64, rng: &RandomSource) -> Result<EdgeConfig> {
    check_probability_closed("lambda", lambda)?;
    let mut r = rng.rng();
    let open = (0..spec.num_edge_slots())
        .map(|e| spec.edge_exists(e) && r.random::<f64>() < lambda)
        .collect();
    EdgeConfig::from_open(spec, open)
}

/// A full sample of the independent model.
#[derive(Debug, Clone)]
pub struct ModelSample {
    pub sites: SiteConfig,
    pub seg: LineSegmentation,
    pub states: PairStates,
    pub edges: EdgeConfig,
}

/// Sites from child stream `SITES`, pair states from child stream `PAIRS`.
pub fn sample_model(spec: &LatticeSpec, params: ModelParams, rng: &RandomSource) -> Result<ModelSample> {
    let sites = sample_sites(spec, params.p, &rng.child(streams::SITES))?;
    let seg = extract_pairs(&sites);
    let states = assign_pair_states(&seg, params.lambda, &rng.child(streams::PAIRS))?;
    let edges = project_edges(&seg, &states)?;
    Ok(ModelSample {
        sites,
        seg,
        states,
        edges,
    })
}

/// Sites as in [`sample_model`] with one-choice pair states.
pub fn sample_one_choice_model(spec: &LatticeSpec, p: f64, rng: &RandomSource) -> Result<ModelSample> {
    let sites = sample_sites(spec, p, &rng.child(streams::SITES))?;
    let seg = extract_pairs(&sites);
    let states = sample_one_choice(&sites, &seg, &rng.child(streams::CHOICE))?;
    let edges = project_edges(&seg, &states)?;
    Ok(ModelSample {
        sites,
        seg,
        states,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec2(side: usize, b: Boundary) -> LatticeSpec {
        LatticeSpec::cube(2, side, b).unwrap()
    }

    fn occ_from(spec: &LatticeSpec, coords: &[[usize; 2]]) -> SiteConfig {
        let mut occ = vec![false; spec.num_sites()];
        for c in coords {
            occ[spec.index(c)] = true;
        }
        SiteConfig::from_occupancy(spec, occ).unwrap()
    }

    #[test]
    fn p_one_occupies_everything_and_p_zero_is_rejected() {
        let s = spec2(6, Boundary::Torus);
        let rng = RandomSource::from_seed(5);
        assert_eq!(sample_sites(&s, 1.0, &rng).unwrap().occupied_count(), 36);
        assert!(sample_sites(&s, 0.0, &rng).is_err());
        assert!(sample_sites(&s, 1.5, &rng).is_err());
    }

    #[test]
    fn occupied_fraction_within_binomial_band() {
        let s = spec2(64, Boundary::Torus);
        let c = sample_sites(&s, 0.5, &RandomSource::from_seed(42)).unwrap();
        let n = s.num_sites() as f64;
        let sd = (n * 0.25).sqrt();
        assert!((c.occupied_count() as f64 - 0.5 * n).abs() <= 4.0 * sd);
    }

    #[test]
    fn one_line_gap_is_a_single_pair() {
        // Line [occ, vac, vac, occ] on a closed 4x2 box: axis-0 line y=0.
        let s = LatticeSpec::new(vec![4, 2], Boundary::Closed).unwrap();
        let sites = occ_from(&s, &[[0, 0], [3, 0]]);
        let seg = extract_pairs(&sites);
        let on_line: Vec<_> = seg
            .pairs()
            .iter()
            .filter(|p| p.axis == 0 && p.line_base == 0)
            .collect();
        assert_eq!(on_line.len(), 1);
        assert_eq!(on_line[0].len, 3);
        assert_eq!(on_line[0].start, 0);
    }

    #[test]
    fn full_occupancy_gives_unit_pairs() {
        let s = spec2(5, Boundary::Closed);
        let sites = sample_sites(&s, 1.0, &RandomSource::from_seed(1)).unwrap();
        let seg = extract_pairs(&sites);
        assert_eq!(seg.num_pairs(), s.num_edges());
        assert!(seg.pairs().iter().all(|p| p.len == 1));
    }

    #[test]
    fn hand_enumerated_fixture_4x4_torus() {
        // 5 occupied sites on a 4x4 torus.
        let s = spec2(4, Boundary::Torus);
        let sites = occ_from(&s, &[[0, 0], [2, 0], [1, 1], [2, 2], [0, 3]]);
        let seg = extract_pairs(&sites);
        let mut got: Vec<(usize, usize, usize, usize, PairKind)> = seg
            .pairs()
            .iter()
            .map(|p| (p.axis, s.coords(p.line_base)[1 - p.axis], p.start, p.len, p.kind))
            .collect();
        got.sort();
        use PairKind::*;
        let mut want = vec![
            // axis 0 lines indexed by y
            (0, 0, 0, 2, Ordinary),
            (0, 0, 2, 2, Ordinary),
            (0, 1, 1, 4, FullCycle),
            (0, 2, 2, 4, FullCycle),
            (0, 3, 0, 4, FullCycle),
            // axis 1 lines indexed by x
            (1, 0, 0, 3, Ordinary),
            (1, 0, 3, 1, Ordinary),
            (1, 1, 1, 4, FullCycle),
            (1, 2, 0, 2, Ordinary),
            (1, 2, 2, 2, Ordinary),
        ];
        want.sort();
        assert_eq!(got, want);
        // x = 3 column is empty: its edges belong to no pair.
        for y in 0..4 {
            assert_eq!(seg.pair_of_edge(s.edge_index(s.index(&[3, y]), 1)), None);
        }
    }

    #[test]
    fn closed_boundary_leaves_end_runs_pairless() {
        let s = LatticeSpec::new(vec![6, 2], Boundary::Closed).unwrap();
        let sites = occ_from(&s, &[[2, 0], [4, 0]]);
        let seg = extract_pairs(&sites);
        let covered: Vec<bool> = (0..5)
            .map(|x| seg.pair_of_edge(s.edge_index(s.index(&[x, 0]), 0)).is_some())
            .collect();
        assert_eq!(covered, vec![false, false, true, true, false]);
    }

    #[test]
    fn occupied_frame_covers_every_edge() {
        let s = spec2(7, Boundary::OccupiedFrame);
        let sites = sample_sites(&s, 0.2, &RandomSource::from_seed(3)).unwrap();
        let seg = extract_pairs(&sites);
        for e in 0..s.num_edge_slots() {
            if s.edge_exists(e) {
                assert!(seg.pair_of_edge(e).is_some());
            }
        }
    }

    #[test]
    fn lambda_extremes() {
        let s = spec2(8, Boundary::Torus);
        let sites = sample_sites(&s, 0.4, &RandomSource::from_seed(8)).unwrap();
        let seg = extract_pairs(&sites);
        let all = assign_pair_states(&seg, 1.0, &RandomSource::from_seed(1)).unwrap();
        assert_eq!(all.open_count(), seg.num_pairs());
        let none = assign_pair_states(&seg, 0.0, &RandomSource::from_seed(1)).unwrap();
        assert_eq!(none.open_count(), 0);
        assert_eq!(project_edges(&seg, &none).unwrap().open_count(), 0);
        assert!(assign_pair_states(&seg, -0.1, &RandomSource::from_seed(1)).is_err());
    }

    #[test]
    fn open_pair_fraction_within_binomial_band() {
        let s = spec2(64, Boundary::Torus);
        let sites = sample_sites(&s, 0.5, &RandomSource::from_seed(4)).unwrap();
        let seg = extract_pairs(&sites);
        let st = assign_pair_states(&seg, 0.3, &RandomSource::from_seed(9)).unwrap();
        let n = seg.num_pairs() as f64;
        let sd = (n * 0.3 * 0.7).sqrt();
        assert!((st.open_count() as f64 - 0.3 * n).abs() <= 4.0 * sd);
    }

    #[test]
    fn projection_of_all_open_is_union_of_spans() {
        let s = spec2(6, Boundary::Closed);
        let sites = sample_sites(&s, 0.5, &RandomSource::from_seed(11)).unwrap();
        let seg = extract_pairs(&sites);
        let st = PairStates::from_states(&seg, vec![true; seg.num_pairs()]).unwrap();
        let edges = project_edges(&seg, &st).unwrap();
        let mut union = vec![false; s.num_edge_slots()];
        for p in seg.pairs() {
            for e in p.edges(&s) {
                union[e] = true;
            }
        }
        assert_eq!(edges.open_slots(), &union[..]);
    }

    #[test]
    fn projection_of_hand_fixture() {
        let s = spec2(4, Boundary::Torus);
        let sites = occ_from(&s, &[[0, 0], [2, 0], [1, 1], [2, 2], [0, 3]]);
        let seg = extract_pairs(&sites);
        // open only the axis-0 pair [2 -> 0) on row 0 and the column-1 full cycle
        let state: Vec<bool> = seg
            .pairs()
            .iter()
            .map(|p| {
                (p.axis == 0 && p.line_base == 0 && p.start == 2)
                    || (p.axis == 1 && p.line_base == 1)
            })
            .collect();
        let st = PairStates::from_states(&seg, state).unwrap();
        let edges = project_edges(&seg, &st).unwrap();
        let mut want = vec![false; s.num_edge_slots()];
        want[s.edge_index(s.index(&[2, 0]), 0)] = true;
        want[s.edge_index(s.index(&[3, 0]), 0)] = true;
        for y in 0..4 {
            want[s.edge_index(s.index(&[1, y]), 1)] = true;
        }
        assert_eq!(edges.open_slots(), &want[..]);
    }

    #[test]
    fn mismatched_states_rejected() {
        let s = spec2(6, Boundary::Torus);
        let a = extract_pairs(&sample_sites(&s, 0.5, &RandomSource::from_seed(1)).unwrap());
        let b = extract_pairs(&sample_sites(&s, 0.5, &RandomSource::from_seed(2)).unwrap());
        let st = assign_pair_states(&a, 0.5, &RandomSource::from_seed(3)).unwrap();
        assert!(project_edges(&b, &st).is_err() || a.fingerprint() == b.fingerprint());
    }

    #[test]
    fn single_site_torus_line_gives_d_incident_pairs() {
        let s = LatticeSpec::cube(3, 4, Boundary::Torus).unwrap();
        let mut occ = vec![false; s.num_sites()];
        let o = s.index(&[1, 2, 3]);
        occ[o] = true;
        let sites = SiteConfig::from_occupancy(&s, occ).unwrap();
        let seg = extract_pairs(&sites);
        let inc = seg.incident_pairs(o);
        assert_eq!(inc.len(), 3);
        assert!(inc.iter().all(|&i| seg.pairs()[i].kind == PairKind::FullCycle));
        let st = sample_one_choice(&sites, &seg, &RandomSource::from_seed(1)).unwrap();
        assert_eq!(st.open_count(), 1);
    }

    #[test]
    fn one_choice_replays() {
        let s = spec2(10, Boundary::Torus);
        let sites = sample_sites(&s, 0.6, &RandomSource::from_seed(1)).unwrap();
        let seg = extract_pairs(&sites);
        let a = sample_one_choice(&sites, &seg, &RandomSource::from_seed(2)).unwrap();
        let b = sample_one_choice(&sites, &seg, &RandomSource::from_seed(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_choice_bulk_edge_probability() {
        // All sites occupied: an edge is open iff one of its two endpoints
        // picks it, 1 - (1 - 1/4)^2 = 7/16 in d = 2.
        let s = spec2(16, Boundary::Torus);
        let sites = sample_sites(&s, 1.0, &RandomSource::from_seed(0)).unwrap();
        let seg = extract_pairs(&sites);
        let mut open = 0usize;
        let mut total = 0usize;
        for rep in 0..400 {
            let st = sample_one_choice(&sites, &seg, &RandomSource::new(7, rep)).unwrap();
            open += st.open_count();
            total += seg.num_pairs();
        }
        let expected = 1.0 - (1.0 - 0.25f64).powi(2);
        let sd = (total as f64 * expected * (1.0 - expected)).sqrt();
        // Edges of one sample are correlated; a generous band still pins the mean.
        assert!((open as f64 - expected * total as f64).abs() < 6.0 * sd * 2.0);
    }

    #[test]
    fn lambda_coupling_nests() {
        let s = spec2(12, Boundary::Torus);
        let sites = sample_sites(&s, 0.5, &RandomSource::from_seed(3)).unwrap();
        let seg = extract_pairs(&sites);
        let out = coupled_sample_lambda(&seg, &[0.0, 0.2, 0.5, 0.9, 1.0], &RandomSource::from_seed(4)).unwrap();
        assert_eq!(out[0].open_count(), 0);
        assert_eq!(out[4].open_count(), seg.num_pairs());
        for w in out.windows(2) {
            assert!(w[0].is_subset_of(&w[1]));
        }
        assert!(coupled_sample_lambda(&seg, &[0.5, 0.2], &RandomSource::from_seed(4)).is_err());
    }

    #[test]
    fn p_coupling_nests() {
        let s = spec2(12, Boundary::Torus);
        let out = coupled_sample_p(&s, &[0.3, 0.7], &RandomSource::from_seed(5)).unwrap();
        assert!(out[0].is_subset_of(&out[1]));
        let full = coupled_sample_p(&s, &[1.0], &RandomSource::from_seed(5)).unwrap();
        assert_eq!(full[0].occupied_count(), s.num_sites());
        assert!(coupled_sample_p(&s, &[0.7, 0.3], &RandomSource::from_seed(5)).is_err());
    }

    #[test]
    fn bernoulli_bonds() {
        let s = spec2(32, Boundary::Torus);
        let all = sample_bernoulli_bonds(&s, 1.0, &RandomSource::from_seed(1)).unwrap();
        assert_eq!(all.open_count(), s.num_edges());
        let half = sample_bernoulli_bonds(&s, 0.5, &RandomSource::from_seed(1)).unwrap();
        let n = s.num_edges() as f64;
        assert!((half.open_count() as f64 - n / 2.0).abs() < 4.0 * (n / 4.0).sqrt());
    }

    #[test]
    fn sparse_sampler_rejects_p_one() {
        let s = spec2(8, Boundary::Torus);
        assert!(sample_sites_sparse(&s, 1.0, &RandomSource::from_seed(1)).is_err());
    }
}
