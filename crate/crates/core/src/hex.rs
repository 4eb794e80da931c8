//! Honeycomb lattice inside `Z^3`.
//!
//! `V1 = {x + y + z = k}` and `V2 = {x + y + z = k + 1}`, joined by the
//! unit edges `u -> u + e_i`. Writing `V1(a, b) = (a, b, k - a - b)` and
//! `V2(a, b) = (a, b, k + 1 - a - b)`, the neighbours of `V1(a, b)` are
//! `V2(a+1, b)`, `V2(a, b+1)` and `V2(a, b)`. Each axis line meets each plane
//! once, so no two embedding edges share a line and every embedding edge
//! lies in its own feasible pair. The edge states are therefore i.i.d.
//! Bernoulli(λ) whatever `p` is.
//!
//! For `d > 3` the same construction runs on the slice where every
//! coordinate beyond the third is zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability_closed, check_probability_open_closed, Error, Result};
use crate::lattice::{Boundary, LatticeSpec};
use crate::model::{sample_model, ModelParams};
use crate::rng::{mix64, RandomSource};
use crate::stats::{bisect_half, median, median_interval, Interval};

/// Bond percolation threshold of the honeycomb lattice, `1 - 2 sin(π/18)`.
pub fn hex_threshold() -> f64 {
    1.0 - 2.0 * (std::f64::consts::PI / 18.0).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HexEdge {
    /// Index into `v1`.
    pub u: usize,
    /// Index into `v2`.
    pub v: usize,
    /// `v = u + e_axis`.
    pub axis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexEmbedding {
    pub k: i64,
    pub extent: usize,
    pub v1: Vec<[i64; 3]>,
    pub v2: Vec<[i64; 3]>,
    pub edges: Vec<HexEdge>,
}

/// Rhombic patch `0 <= a, b < extent` of both planes.
pub fn build_hex(k: i64, extent: usize) -> Result<HexEmbedding> {
    if extent < 2 {
        return Err(Error::param(format!("extent must be >= 2, got {extent}")));
    }
    let e = extent;
    let idx = |a: usize, b: usize| b * e + a;
    let mut v1 = Vec::with_capacity(e * e);
    let mut v2 = Vec::with_capacity(e * e);
    for b in 0..e as i64 {
        for a in 0..e as i64 {
            v1.push([a, b, k - a - b]);
            v2.push([a, b, k + 1 - a - b]);
        }
    }
    let mut edges = Vec::with_capacity(3 * e * e);
    for b in 0..e {
        for a in 0..e {
            let u = idx(a, b);
            if a + 1 < e {
                edges.push(HexEdge { u, v: idx(a + 1, b), axis: 0 });
            }
            if b + 1 < e {
                edges.push(HexEdge { u, v: idx(a, b + 1), axis: 1 });
            }
            edges.push(HexEdge { u, v: idx(a, b), axis: 2 });
        }
    }
    Ok(HexEmbedding { k, extent, v1, v2, edges })
}

impl HexEmbedding {
    /// Vertex ids: `V1` first, then `V2`.
    pub fn num_vertices(&self) -> usize {
        self.v1.len() + self.v2.len()
    }

    pub fn endpoints(&self, e: &HexEdge) -> (usize, usize) {
        (e.u, self.v1.len() + e.v)
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vertices()];
        for e in &self.edges {
            let (a, b) = self.endpoints(e);
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn vertex(&self, id: usize) -> [i64; 3] {
        if id < self.v1.len() {
            self.v1[id]
        } else {
            self.v2[id - self.v1.len()]
        }
    }

    /// Every edge joins the two planes with a unit step.
    pub fn edges_are_unit_steps(&self) -> bool {
        self.edges.iter().all(|e| {
            let (u, v) = (self.v1[e.u], self.v2[e.v]);
            let sum = |x: [i64; 3]| x.iter().sum::<i64>();
            let diff: Vec<i64> = (0..3).map(|i| v[i] - u[i]).collect();
            sum(u) == self.k
                && sum(v) == self.k + 1
                && diff.iter().map(|d| d.abs()).max() == Some(1)
                && diff[e.axis] == 1
        })
    }

    /// Simple cycles of length 6 through `start`, each counted once.
    pub fn hexagons_through(&self, start: usize) -> usize {
        let adj = self.adjacency();
        let mut count = 0;
        let mut path = vec![start];
        fn walk(adj: &[Vec<usize>], path: &mut Vec<usize>, start: usize, count: &mut usize) {
            let last = *path.last().expect("nonempty");
            for &nb in &adj[last] {
                if path.len() == 6 {
                    if nb == start {
                        *count += 1;
                    }
                } else if !path.contains(&nb) {
                    path.push(nb);
                    walk(adj, path, start, count);
                    path.pop();
                }
            }
        }
        walk(&adj, &mut path, start, &mut count);
        // each cycle is found in both directions
        count / 2
    }

    /// Length of the shortest cycle in the graph (`None` if acyclic).
    pub fn girth(&self) -> Option<usize> {
        let adj = self.adjacency();
        let n = self.num_vertices();
        let mut best: Option<usize> = None;
        for s in 0..n {
            let mut dist = vec![usize::MAX; n];
            let mut parent = vec![usize::MAX; n];
            let mut queue = std::collections::VecDeque::from([s]);
            dist[s] = 0;
            while let Some(x) = queue.pop_front() {
                for &y in &adj[x] {
                    if dist[y] == usize::MAX {
                        dist[y] = dist[x] + 1;
                        parent[y] = x;
                        queue.push_back(y);
                    } else if parent[x] != y {
                        let c = dist[x] + dist[y] + 1;
                        best = Some(best.map_or(c, |b| b.min(c)));
                    }
                }
            }
        }
        best
    }

    /// Smallest box of `Z^3` holding the patch with one layer of margin on
    /// every side, as an occupied-frame lattice; the second value is the
    /// `Z^3` position of lattice site `(0, 0, 0)`.
    pub fn bounding_lattice(&self) -> Result<(LatticeSpec, [i64; 3])> {
        let (lo, hi) = self.bounds();
        let extent: Vec<usize> = (0..3).map(|i| (hi[i] - lo[i] + 1) as usize).collect();
        Ok((LatticeSpec::new(extent, Boundary::OccupiedFrame)?, lo))
    }

    /// Inclusive corners of the bounding box, margin included.
    fn bounds(&self) -> ([i64; 3], [i64; 3]) {
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for x in self.v1.iter().chain(&self.v2) {
            for i in 0..3 {
                lo[i] = lo[i].min(x[i] - 1);
                hi[i] = hi[i].max(x[i] + 1);
            }
        }
        (lo, hi)
    }

    fn side_vertices(&self, a: i64) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&i| self.vertex(i)[0] == a).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddedStates {
    pub open: Vec<bool>,
    /// Feasible pair holding each embedding edge.
    pub pairs: Vec<usize>,
}

/// Samples the full model on the bounding box and reads the embedding edges.
pub fn embedded_edge_states(params: ModelParams, emb: &HexEmbedding, rng: &RandomSource) -> Result<EmbeddedStates> {
    let (spec, lo) = emb.bounding_lattice()?;
    if spec.sample_footprint_bytes() > 4 << 30 {
        return Err(Error::Size {
            what: "hex bounding box".into(),
            requested: spec.sample_footprint_bytes(),
            limit: 4 << 30,
        });
    }
    let sample = sample_model(&spec, params, rng)?;
    let mut open = Vec::with_capacity(emb.edges.len());
    let mut pairs = Vec::with_capacity(emb.edges.len());
    for e in &emb.edges {
        let u = emb.v1[e.u];
        let rel: Vec<i64> = (0..3).map(|i| u[i] - lo[i]).collect();
        let site = spec.index_signed(&rel).expect("vertex inside box");
        let edge = spec.edge_index(site, e.axis);
        let pair = sample
            .seg
            .pair_of_edge(edge)
            .ok_or_else(|| Error::Internal("embedding edge outside every pair".into()))?;
        open.push(sample.states.is_open(pair));
        pairs.push(pair);
    }
    check_distinct(&pairs)?;
    Ok(EmbeddedStates { open, pairs })
}

fn check_distinct<T: Ord + Clone + std::fmt::Debug>(ids: &[T]) -> Result<()> {
    let mut sorted = ids.to_vec();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Internal(format!("two embedding edges share the pair {:?}", w[0])));
    }
    Ok(())
}

#[inline]
fn unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The model on the bounding box, evaluated on demand: site `x` is
/// occupied iff a hash of `(seed, x)` falls below `p` (frame sites always),
/// and the pair starting at `x` along `axis` draws its uniform from a hash
/// of `(seed, x, axis)`.
struct LazyModel {
    p: f64,
    site_seed: u64,
    pair_seed: u64,
    lo: [i64; 3],
    hi: [i64; 3],
}

impl LazyModel {
    fn key(&self, x: [i64; 3]) -> u64 {
        let w = [(self.hi[0] - self.lo[0] + 1) as u64, (self.hi[1] - self.lo[1] + 1) as u64];
        (x[0] - self.lo[0]) as u64 + w[0] * ((x[1] - self.lo[1]) as u64 + w[1] * (x[2] - self.lo[2]) as u64)
    }

    fn occupied(&self, x: [i64; 3]) -> bool {
        (0..3).any(|i| x[i] == self.lo[i] || x[i] == self.hi[i]) || unit(mix64(self.site_seed ^ mix64(self.key(x)))) < self.p
    }

    /// Start site of the pair holding the edge `u -> u + e_axis`.
    fn pair_start(&self, mut u: [i64; 3], axis: usize) -> [i64; 3] {
        while !self.occupied(u) {
            u[axis] -= 1;
        }
        u
    }

    fn pair_uniform(&self, start: [i64; 3], axis: usize) -> f64 {
        unit(mix64(self.pair_seed ^ mix64(self.key(start) * 3 + axis as u64)))
    }
}

/// Pair uniforms of the embedding edges under the on-demand sampler: the
/// edge is open at `λ` iff its uniform is `< λ`.
pub fn embedded_uniforms(p: f64, emb: &HexEmbedding, rng: &RandomSource) -> Result<Vec<f64>> {
    check_probability_open_closed("p", p)?;
    let (lo, hi) = emb.bounds();
    let model = LazyModel {
        p,
        site_seed: rng.child(0).seed(),
        pair_seed: rng.child(1).seed(),
        lo,
        hi,
    };
    let starts: Vec<([i64; 3], usize)> = emb.edges.iter().map(|e| (model.pair_start(emb.v1[e.u], e.axis), e.axis)).collect();
    check_distinct(&starts)?;
    Ok(starts.iter().map(|&(s, a)| model.pair_uniform(s, a)).collect())
}

/// Smallest `λ` at which the patch has an open path from the `a = 0` side
/// to the `a = extent - 1` side: edges are added in increasing uniform
/// until the two sides join.
pub fn crossing_threshold(emb: &HexEmbedding, uniforms: &[f64]) -> f64 {
    let n = emb.num_vertices();
    let (left, right) = (n, n + 1);
    let mut parent: Vec<usize> = (0..n + 2).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    fn union(parent: &mut [usize], a: usize, b: usize) {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    for v in emb.side_vertices(0) {
        union(&mut parent, v, left);
    }
    for v in emb.side_vertices(emb.extent as i64 - 1) {
        union(&mut parent, v, right);
    }
    let mut order: Vec<usize> = (0..emb.edges.len()).collect();
    order.sort_by(|&i, &j| uniforms[i].total_cmp(&uniforms[j]).then(i.cmp(&j)));
    for i in order {
        let (a, b) = emb.endpoints(&emb.edges[i]);
        union(&mut parent, a, b);
        if find(&mut parent, left) == find(&mut parent, right) {
            return uniforms[i];
        }
    }
    1.0
}

/// Fraction of per-sample thresholds below `lambda`: the crossing
/// probability at `lambda` under the coupling.
pub fn crossing_fraction(thresholds: &[f64], lambda: f64) -> f64 {
    thresholds.iter().filter(|&&t| t < lambda).count() as f64 / thresholds.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexThreshold {
    pub p: f64,
    pub extent: usize,
    pub n: u64,
    /// λ where the crossing fraction passes 1/2, by bisection.
    pub estimate: f64,
    pub median: f64,
    pub ci: Interval,
    pub reference: f64,
    pub bisection_steps: usize,
}

/// Per-sample crossing thresholds for `n` independent patches.
pub fn hex_thresholds(p: f64, extent: usize, n: u64, rng: &RandomSource) -> Result<Vec<f64>> {
    let emb = build_hex(2 * extent as i64, extent)?;
    (0..n)
        .into_par_iter()
        .map(|i| Ok(crossing_threshold(&emb, &embedded_uniforms(p, &emb, &rng.child(i))?)))
        .collect()
}

/// Bisection on `λ` of the crossing fraction against 1/2, to `tol`.
pub fn hex_threshold_estimate(p: f64, extent: usize, n: u64, rng: &RandomSource) -> Result<HexThreshold> {
    check_probability_open_closed("p", p)?;
    if n == 0 {
        return Err(Error::param("n must be >= 1"));
    }
    let mut t = hex_thresholds(p, extent, n, rng)?;
    let (estimate, steps) = bisect_half(&t, 1e-9)?;
    t.sort_by(f64::total_cmp);
    Ok(HexThreshold {
        p,
        extent,
        n,
        estimate,
        median: median(&t),
        ci: median_interval(&t, 0.95),
        reference: hex_threshold(),
        bisection_steps: steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub samples: usize,
    pub edges: usize,
    /// z-score of the overall open frequency against `λ`.
    pub marginal_z: f64,
    /// Largest `|r| sqrt(n)` over pairs of edges sharing a vertex.
    pub max_pair_z: f64,
    pub pairs_tested: usize,
    /// z-score of the number of state changes along the edge order.
    pub runs_z: f64,
}

impl BatteryReport {
    pub fn within(&self, z: f64) -> bool {
        self.marginal_z.abs() <= z && self.max_pair_z <= z && self.runs_z.abs() <= z
    }
}

/// Checks samples of embedding edge states against i.i.d. Bernoulli(λ).
/// Pair correlations are taken over edges sharing one of `vertices`, or
/// any vertex when `None`.
pub fn independence_battery(
    emb: &HexEmbedding,
    samples: &[Vec<bool>],
    lambda: f64,
    vertices: Option<&[usize]>,
) -> Result<BatteryReport> {
    check_probability_closed("lambda", lambda)?;
    let n = samples.len();
    let m = emb.edges.len();
    if n < 2 || samples.iter().any(|s| s.len() != m) || !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::param("need >= 2 samples of every edge and λ in (0,1)"));
    }
    let nf = n as f64;
    let total: usize = samples.iter().map(|s| s.iter().filter(|&&b| b).count()).sum();
    let marginal_z = (total as f64 - nf * m as f64 * lambda) / (nf * m as f64 * lambda * (1.0 - lambda)).sqrt();

    let mut at_vertex = vec![Vec::new(); emb.num_vertices()];
    for (i, e) in emb.edges.iter().enumerate() {
        let (a, b) = emb.endpoints(e);
        at_vertex[a].push(i);
        at_vertex[b].push(i);
    }
    let mut pairs = Vec::new();
    let chosen: Vec<usize> = match vertices {
        Some(v) => v.to_vec(),
        None => (0..emb.num_vertices()).collect(),
    };
    for list in chosen.iter().map(|&v| &at_vertex[v]) {
        for (x, &i) in list.iter().enumerate() {
            for &j in &list[x + 1..] {
                pairs.push((i, j));
            }
        }
    }
    let freq: Vec<f64> = (0..m).map(|i| samples.iter().filter(|s| s[i]).count() as f64 / nf).collect();
    let max_pair_z = pairs
        .iter()
        .map(|&(i, j)| {
            let both = samples.iter().filter(|s| s[i] && s[j]).count() as f64 / nf;
            let v = freq[i] * (1.0 - freq[i]) * freq[j] * (1.0 - freq[j]);
            if v > 0.0 {
                ((both - freq[i] * freq[j]) / v.sqrt()).abs() * nf.sqrt()
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);

    // changes X_j != X_{j+1}: mean q = 2λ(1-λ) each, neighbours covary by
    // λ(1-λ) - q^2
    let q = 2.0 * lambda * (1.0 - lambda);
    let c = lambda * (1.0 - lambda) - q * q;
    let per_sample_var = (m - 1) as f64 * q * (1.0 - q) + 2.0 * (m as f64 - 2.0).max(0.0) * c;
    let changes: usize = samples.iter().map(|s| s.windows(2).filter(|w| w[0] != w[1]).count()).sum();
    let runs_z = (changes as f64 - nf * (m - 1) as f64 * q) / (nf * per_sample_var).sqrt();

    Ok(BatteryReport {
        samples: n,
        edges: m,
        marginal_z,
        max_pair_z,
        pairs_tested: pairs.len(),
        runs_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_value() {
        assert!((hex_threshold() - 0.652_703_644_666_139_3).abs() < 1e-15);
    }

    #[test]
    fn extent_two_patch_by_hand() {
        let h = build_hex(4, 2).unwrap();
        assert_eq!(h.num_vertices(), 8);
        assert_eq!(h.edges.len(), 8);
        assert!(h.edges_are_unit_steps());
        assert_eq!(h.girth(), Some(6));
        assert_eq!(h.hexagons_through(0), 1);
        // V2(0,0) and V1(1,1) hang off the single hexagon
        let deg: Vec<usize> = h.adjacency().iter().map(|a| a.len()).collect();
        assert_eq!(deg.iter().filter(|&&d| d == 1).count(), 2);
    }

    #[test]
    fn bulk_structure() {
        let h = build_hex(12, 6).unwrap();
        let adj = h.adjacency();
        let e = h.extent;
        for b in 1..e - 1 {
            for a in 1..e - 1 {
                assert_eq!(adj[b * e + a].len(), 3);
                assert_eq!(adj[h.v1.len() + b * e + a].len(), 3);
            }
        }
        for b in 2..e - 2 {
            for a in 2..e - 2 {
                assert_eq!(h.hexagons_through(b * e + a), 3);
            }
        }
        assert_eq!(h.girth(), Some(6));
        // V1(a,b) + e_i for each axis
        let u = h.v1[e + 1];
        let nbrs: Vec<[i64; 3]> = adj[e + 1].iter().map(|&v| h.vertex(v)).collect();
        for i in 0..3 {
            let mut w = u;
            w[i] += 1;
            assert!(nbrs.contains(&w));
        }
    }

    #[test]
    fn dense_and_lazy_agree_on_pairs() {
        // with the same occupancy, both routes select the same pair starts
        let h = build_hex(8, 4).unwrap();
        let (spec, lo) = h.bounding_lattice().unwrap();
        let (blo, bhi) = h.bounds();
        let lazy = LazyModel { p: 0.4, site_seed: 99, pair_seed: 1, lo: blo, hi: bhi };
        let occ: Vec<bool> = (0..spec.num_sites())
            .map(|s| {
                let c = spec.coords(s);
                lazy.occupied([c[0] as i64 + lo[0], c[1] as i64 + lo[1], c[2] as i64 + lo[2]])
            })
            .collect();
        let sites = crate::model::SiteConfig::from_occupancy(&spec, occ).unwrap();
        let seg = crate::model::extract_pairs(&sites);
        for e in &h.edges {
            let u = h.v1[e.u];
            let start = lazy.pair_start(u, e.axis);
            let site = spec.index_signed(&[u[0] - lo[0], u[1] - lo[1], u[2] - lo[2]]).unwrap();
            let pair = seg.pairs()[seg.pair_of_edge(spec.edge_index(site, e.axis)).unwrap()];
            let (a, _) = pair.endpoints(&spec);
            let want = spec.index_signed(&[start[0] - lo[0], start[1] - lo[1], start[2] - lo[2]]).unwrap();
            assert_eq!(a, want);
        }
    }

    #[test]
    fn all_open_at_lambda_one() {
        let h = build_hex(6, 3).unwrap();
        let s = embedded_edge_states(ModelParams::new(0.3, 1.0).unwrap(), &h, &RandomSource::from_seed(2)).unwrap();
        assert!(s.open.iter().all(|&b| b));
        let u = embedded_uniforms(0.3, &h, &RandomSource::from_seed(2)).unwrap();
        assert!(u.iter().all(|&x| x < 1.0));
    }

    #[test]
    fn threshold_is_monotone_crossing_point() {
        let h = build_hex(8, 4).unwrap();
        let u = embedded_uniforms(0.5, &h, &RandomSource::from_seed(3)).unwrap();
        let t = crossing_threshold(&h, &u);
        // below t the open edges do not cross, at t they do
        let cross = |lam: f64| {
            let open: Vec<f64> = u.iter().map(|&x| if x < lam { 0.0 } else { 1.0 }).collect();
            crossing_threshold(&h, &open) == 0.0
        };
        assert!(!cross(t));
        assert!(cross(f64::from_bits(t.to_bits() + 1)));
    }

    #[test]
    fn bisection_matches_median() {
        let t = hex_thresholds(0.5, 8, 101, &RandomSource::from_seed(8)).unwrap();
        let (x, _) = bisect_half(&t, 1e-12).unwrap();
        let mut s = t.clone();
        s.sort_by(f64::total_cmp);
        assert!((x - median(&s)).abs() < 1e-9);
    }
}
