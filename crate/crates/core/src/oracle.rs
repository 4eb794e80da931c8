//! Exact probabilities of finite edge patterns.
//!
//! # Infinite-lattice marginals
//!
//! Fix a pattern: finitely many edges, each required open or closed. Group
//! the edges by the axis line they lie on. On each line take the support
//! interval, the sites from the lowest to the highest endpoint of the
//! pattern's edges on that line, and let `S` be the union of these sites.
//!
//! Condition on the occupancy of `S`. Two pattern edges on one line lie in
//! the same feasible pair exactly when no occupied site of `S` sits
//! strictly between them; sites outside the support interval cannot
//! separate them. So the pattern edges of a line split into classes, the
//! runs between occupied interior support sites, and this split is the same
//! for every extension of the occupancy of `S` to the rest of `Z^d`.
//!
//! A class touching the end of the support interval continues into
//! unexplored territory ("escapes"). With `p > 0` the line holds occupied
//! sites beyond the interval almost surely, so the pair containing the
//! class exists. Distinct classes lie in distinct pairs (on one line they
//! are separated by an occupied site; on different lines they are on
//! different pairs trivially), and pair states are i.i.d. Bernoulli(λ)
//! given the occupancy. A class therefore contributes `λ` when all its edges
//! are required open, `1 - λ` when all are required closed, and `0` when the
//! requirements conflict. Summing over the `2^|S|` occupancies of `S`
//! weighted by `p^occ (1-p)^vac` gives the exact probability with no
//! boundary convention at all.
//!
//! The result is kept as a polynomial: integer counts of support
//! occupancies per `(occupied, open classes, closed classes)` triple, so it
//! is exact until the final evaluation at `(p, λ)`.
//!
//! The same counting runs on a torus by taking the whole cyclic line as
//! support, and on any small box by full enumeration
//! ([`enumerate_box_probability`]).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability_closed, check_probability_open_closed, Error, Result};
use crate::lattice::{Boundary, EdgeConfig, LatticeSpec};
use crate::model::{extract_pairs, SiteConfig};
use crate::stats::CompensatedSum;

/// Largest support the infinite-lattice oracle enumerates.
pub const MAX_SUPPORT_SITES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeState {
    Open,
    Closed,
}

impl EdgeState {
    pub fn from_open(open: bool) -> Self {
        if open {
            EdgeState::Open
        } else {
            EdgeState::Closed
        }
    }

    pub fn is_open(self) -> bool {
        self == EdgeState::Open
    }
}

/// Edge `(site, axis)` joins `site` to `site + e_axis`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatternEdge {
    pub site: Vec<i64>,
    pub axis: usize,
    pub state: EdgeState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PatternRepr", into = "PatternRepr")]
pub struct EdgePattern {
    d: usize,
    edges: Vec<PatternEdge>,
}

#[derive(Serialize, Deserialize)]
struct PatternRepr {
    d: usize,
    edges: Vec<PatternEdge>,
}

impl TryFrom<PatternRepr> for EdgePattern {
    type Error = Error;

    fn try_from(r: PatternRepr) -> Result<Self> {
        EdgePattern::new(r.d, r.edges)
    }
}

impl From<EdgePattern> for PatternRepr {
    fn from(p: EdgePattern) -> Self {
        PatternRepr {
            d: p.d,
            edges: p.edges,
        }
    }
}

impl EdgePattern {
    /// Validates and canonicalizes; identical duplicates are merged,
    /// contradictory duplicates rejected.
    pub fn new(d: usize, mut edges: Vec<PatternEdge>) -> Result<Self> {
        if d < 2 {
            return Err(Error::Pattern(format!("dimension must be >= 2, got {d}")));
        }
        for e in &edges {
            if e.site.len() != d || e.axis >= d {
                return Err(Error::Pattern(format!(
                    "edge {:?} axis {} does not fit dimension {d}",
                    e.site, e.axis
                )));
            }
        }
        edges.sort_by(|a, b| (a.axis, &a.site).cmp(&(b.axis, &b.site)));
        edges.dedup();
        if let Some(w) = edges
            .windows(2)
            .find(|w| w[0].axis == w[1].axis && w[0].site == w[1].site)
        {
            return Err(Error::Pattern(format!(
                "edge {:?} axis {} required both open and closed",
                w[0].site, w[0].axis
            )));
        }
        Ok(Self { d, edges })
    }

    /// Pattern requiring every listed `(site, axis)` edge to have `state`.
    pub fn uniform(d: usize, edges: &[(Vec<i64>, usize)], state: EdgeState) -> Result<Self> {
        Self::new(
            d,
            edges
                .iter()
                .map(|(site, axis)| PatternEdge {
                    site: site.clone(),
                    axis: *axis,
                    state,
                })
                .collect(),
        )
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn edges(&self) -> &[PatternEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// The `2d` edges incident to the origin: `(o, a)` and `(o - e_a, a)`.
pub fn origin_star(d: usize) -> Vec<(Vec<i64>, usize)> {
    let mut out = Vec::with_capacity(2 * d);
    for a in 0..d {
        out.push((vec![0; d], a));
        let mut s = vec![0; d];
        s[a] = -1;
        out.push((s, a));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportLine {
    pub axis: usize,
    /// A site of the line with coordinate 0 along `axis`.
    pub base: Vec<i64>,
    /// Inclusive range of positions along `axis`.
    pub lo: i64,
    pub hi: i64,
}

impl SupportLine {
    pub fn site(&self, pos: i64) -> Vec<i64> {
        let mut s = self.base.clone();
        s[self.axis] = pos;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSites {
    pub lines: Vec<SupportLine>,
    /// Distinct sites of all lines, sorted.
    pub sites: Vec<Vec<i64>>,
}

impl SupportSites {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

fn line_key(e: &PatternEdge) -> (usize, Vec<i64>) {
    let mut base = e.site.clone();
    base[e.axis] = 0;
    (e.axis, base)
}

/// Per touched line, the minimal interval of sites spanning its pattern
/// edges, endpoints included.
pub fn support_sites(pattern: &EdgePattern) -> SupportSites {
    let mut ranges: BTreeMap<(usize, Vec<i64>), (i64, i64)> = BTreeMap::new();
    for e in &pattern.edges {
        let pos = e.site[e.axis];
        let r = ranges.entry(line_key(e)).or_insert((pos, pos + 1));
        r.0 = r.0.min(pos);
        r.1 = r.1.max(pos + 1);
    }
    let lines: Vec<SupportLine> = ranges
        .into_iter()
        .map(|((axis, base), (lo, hi))| SupportLine { axis, base, lo, hi })
        .collect();
    let mut sites: Vec<Vec<i64>> = lines
        .iter()
        .flat_map(|l| (l.lo..=l.hi).map(move |x| l.site(x)))
        .collect();
    sites.sort();
    sites.dedup();
    SupportSites { lines, sites }
}

/// Pattern edges of one line, ready for repeated evaluation.
#[derive(Debug, Clone)]
struct CompiledLine {
    /// Variable index of each site in order along the line, `None` for a
    /// site whose occupancy is fixed occupied.
    sites: Vec<Option<usize>>,
    /// Requirement on the edge from `sites[j]` to `sites[j + 1]` (cyclically
    /// for a cyclic line).
    edges: Vec<Option<EdgeState>>,
    cyclic: bool,
}

#[derive(Default, Clone, Copy)]
struct ClassAcc {
    open: bool,
    closed: bool,
}

impl ClassAcc {
    #[inline]
    fn add(&mut self, s: Option<EdgeState>) {
        match s {
            Some(EdgeState::Open) => self.open = true,
            Some(EdgeState::Closed) => self.closed = true,
            None => {}
        }
    }

    /// Folds the finished class into the counters; `false` on conflict.
    #[inline]
    fn flush(&mut self, counts: &mut (u32, u32)) -> bool {
        let ok = match (self.open, self.closed) {
            (true, true) => false,
            (true, false) => {
                counts.0 += 1;
                true
            }
            (false, true) => {
                counts.1 += 1;
                true
            }
            (false, false) => true,
        };
        *self = ClassAcc::default();
        ok
    }
}

impl CompiledLine {
    #[inline]
    fn occupied(&self, j: usize, mask: u64) -> bool {
        match self.sites[j] {
            Some(v) => mask >> v & 1 == 1,
            None => true,
        }
    }

    /// Adds this line's (open, closed) class counts; `false` on conflict.
    fn classify(&self, mask: u64, counts: &mut (u32, u32)) -> bool {
        let m = self.edges.len();
        let mut acc = ClassAcc::default();
        if !self.cyclic {
            for j in 0..m {
                acc.add(self.edges[j]);
                if j + 1 < m && self.occupied(j + 1, mask) && !acc.flush(counts) {
                    return false;
                }
            }
            return acc.flush(counts);
        }
        let Some(q0) = (0..m).find(|&j| self.occupied(j, mask)) else {
            // No occupied site: no pair covers the line, every edge closed.
            return !self.edges.iter().any(|e| *e == Some(EdgeState::Open));
        };
        for step in 0..m {
            let j = (q0 + step) % m;
            acc.add(self.edges[j]);
            let next = (j + 1) % m;
            if step + 1 < m && self.occupied(next, mask) && !acc.flush(counts) {
                return false;
            }
        }
        acc.flush(counts)
    }
}

/// Occupancy counts of a pattern event, exact in integers.
///
/// `count(k, a, b)` is the number of assignments of the free sites with `k`
/// occupied under which the pattern splits into `a` all-open and `b`
/// all-closed classes without conflict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternPolynomial {
    pub free_sites: usize,
    pub max_classes: usize,
    counts: Vec<u64>,
}

impl PatternPolynomial {
    fn zero(free_sites: usize, max_classes: usize) -> Self {
        let m = max_classes + 1;
        Self {
            free_sites,
            max_classes,
            counts: vec![0; (free_sites + 1) * m * m],
        }
    }

    #[inline]
    fn slot(&self, k: usize, a: usize, b: usize) -> usize {
        let m = self.max_classes + 1;
        (k * m + a) * m + b
    }

    pub fn count(&self, k: usize, a: usize, b: usize) -> u64 {
        self.counts[self.slot(k, a, b)]
    }

    fn add_assign(&mut self, o: &PatternPolynomial) {
        for (x, y) in self.counts.iter_mut().zip(&o.counts) {
            *x += y;
        }
    }

    /// `Σ count · p^k (1-p)^(n-k) λ^a (1-λ)^b`, compensated.
    pub fn evaluate(&self, p: f64, lambda: f64) -> f64 {
        let n = self.free_sites;
        let m = self.max_classes;
        let mut s = CompensatedSum::new();
        for k in 0..=n {
            let wk = p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
            for a in 0..=m {
                for b in 0..=m - a {
                    let c = self.count(k, a, b);
                    if c != 0 {
                        s.add(c as f64 * wk * lambda.powi(a as i32) * (1.0 - lambda).powi(b as i32));
                    }
                }
            }
        }
        s.value()
    }

    /// Law of the number of all-open classes, `P(t = i)`; meaningful for
    /// all-open patterns, where it is the number of pairs the edges touch.
    pub fn class_count_distribution(&self, p: f64) -> Vec<f64> {
        let n = self.free_sites;
        (0..=self.max_classes)
            .map(|a| {
                let mut s = CompensatedSum::new();
                for k in 0..=n {
                    let c = self.count(k, a, 0);
                    if c != 0 {
                        s.add(c as f64 * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32));
                    }
                }
                s.value()
            })
            .collect()
    }
}

/// Enumerates `2^free` masks in fixed shards and sums integer tables.
fn count_masks<F>(free: usize, max_classes: usize, eval: F) -> PatternPolynomial
where
    F: Fn(u64, &mut PatternPolynomial) + Sync,
{
    let total: u64 = 1 << free;
    let shard_bits = free.min(8);
    let shards: u64 = 1 << shard_bits;
    let per = total / shards;
    let parts: Vec<PatternPolynomial> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut poly = PatternPolynomial::zero(free, max_classes);
            for mask in s * per..(s + 1) * per {
                eval(mask, &mut poly);
            }
            poly
        })
        .collect();
    let mut out = PatternPolynomial::zero(free, max_classes);
    for p in &parts {
        out.add_assign(p);
    }
    out
}

fn polynomial_of_lines(lines: &[CompiledLine], free: usize, max_classes: usize) -> PatternPolynomial {
    count_masks(free, max_classes, |mask, poly| {
        let mut c = (0u32, 0u32);
        if lines.iter().all(|l| l.classify(mask, &mut c)) {
            let slot = poly.slot(mask.count_ones() as usize, c.0 as usize, c.1 as usize);
            poly.counts[slot] += 1;
        }
    })
}

/// Exact infinite-lattice counting polynomial of a pattern.
pub fn pattern_polynomial(pattern: &EdgePattern) -> Result<PatternPolynomial> {
    let support = support_sites(pattern);
    if support.len() > MAX_SUPPORT_SITES {
        return Err(Error::Size {
            what: "pattern support".into(),
            requested: support.len() as u64,
            limit: MAX_SUPPORT_SITES as u64,
        });
    }
    let var = |s: &Vec<i64>| support.sites.binary_search(s).expect("support site");
    let mut by_line: BTreeMap<(usize, Vec<i64>), Vec<&PatternEdge>> = BTreeMap::new();
    for e in &pattern.edges {
        by_line.entry(line_key(e)).or_default().push(e);
    }
    let lines: Vec<CompiledLine> = support
        .lines
        .iter()
        .map(|l| {
            let edges_here = &by_line[&(l.axis, l.base.clone())];
            let mut edges = vec![None; (l.hi - l.lo) as usize];
            for e in edges_here {
                edges[(e.site[l.axis] - l.lo) as usize] = Some(e.state);
            }
            CompiledLine {
                sites: (l.lo..=l.hi).map(|x| Some(var(&l.site(x)))).collect(),
                edges,
                cyclic: false,
            }
        })
        .collect();
    Ok(polynomial_of_lines(&lines, support.len(), pattern.len()))
}

/// Exact probability of `pattern` on the infinite lattice.
pub fn pattern_probability(pattern: &EdgePattern, p: f64, lambda: f64) -> Result<f64> {
    check_probability_open_closed("p", p)?;
    check_probability_closed("lambda", lambda)?;
    Ok(pattern_polynomial(pattern)?.evaluate(p, lambda))
}

/// Pattern edges mapped onto `spec`, wrapping on a torus. Errors for edges
/// that do not exist and for contradictions created by wrapping.
fn pattern_on_spec(spec: &LatticeSpec, pattern: &EdgePattern) -> Result<Vec<(usize, EdgeState)>> {
    if pattern.d != spec.d() {
        return Err(Error::Pattern(format!(
            "pattern dimension {} on a {}-dimensional lattice",
            pattern.d,
            spec.d()
        )));
    }
    let mut out: Vec<(usize, EdgeState)> = Vec::with_capacity(pattern.len());
    for e in &pattern.edges {
        let site = spec
            .index_signed(&e.site)
            .ok_or_else(|| Error::Pattern(format!("site {:?} outside the box", e.site)))?;
        let edge = spec.edge_index(site, e.axis);
        if !spec.edge_exists(edge) {
            return Err(Error::Pattern(format!(
                "edge at {:?} axis {} leaves the box",
                e.site, e.axis
            )));
        }
        out.push((edge, e.state));
    }
    out.sort();
    out.dedup();
    if out.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Pattern("pattern contradicts itself on this lattice".into()));
    }
    Ok(out)
}

/// Exact pattern probability under torus semantics, with each touched
/// cyclic line as support. Zero-occupied lines have all edges closed and a
/// line with one occupied site is one full-cycle pair.
pub fn pattern_probability_torus(spec: &LatticeSpec, pattern: &EdgePattern, p: f64, lambda: f64) -> Result<f64> {
    check_probability_open_closed("p", p)?;
    check_probability_closed("lambda", lambda)?;
    Ok(torus_pattern_polynomial(spec, pattern)?.evaluate(p, lambda))
}

pub fn torus_pattern_polynomial(spec: &LatticeSpec, pattern: &EdgePattern) -> Result<PatternPolynomial> {
    if spec.boundary() != Boundary::Torus {
        return Err(Error::param("torus semantics need a torus lattice"));
    }
    let edges = pattern_on_spec(spec, pattern)?;
    let mut lines: BTreeMap<(usize, usize), Vec<(usize, EdgeState)>> = BTreeMap::new();
    for &(edge, state) in &edges {
        let (site, axis) = spec.edge_anchor(edge);
        let base = site - spec.coord(site, axis) * spec.stride(axis);
        lines.entry((axis, base)).or_default().push((spec.coord(site, axis), state));
    }
    let mut vars: Vec<usize> = lines
        .keys()
        .flat_map(|&(axis, base)| (0..spec.extent()[axis]).map(move |x| base + x * spec.stride(axis)))
        .collect();
    vars.sort_unstable();
    vars.dedup();
    if vars.len() > MAX_SUPPORT_SITES {
        return Err(Error::Size {
            what: "torus pattern support".into(),
            requested: vars.len() as u64,
            limit: MAX_SUPPORT_SITES as u64,
        });
    }
    let compiled: Vec<CompiledLine> = lines
        .iter()
        .map(|(&(axis, base), es)| {
            let e = spec.extent()[axis];
            let mut req = vec![None; e];
            for &(pos, st) in es {
                req[pos] = Some(st);
            }
            CompiledLine {
                sites: (0..e)
                    .map(|x| Some(vars.binary_search(&(base + x * spec.stride(axis))).unwrap()))
                    .collect(),
                edges: req,
                cyclic: true,
            }
        })
        .collect();
    Ok(polynomial_of_lines(&compiled, vars.len(), edges.len()))
}

/// Probability that the origin has at least one open incident edge:
/// `p[1 - (1-λ)^(2d)] + (1-p)[1 - (1-λ)^d]`. An occupied origin ends `2d`
/// distinct pairs; a vacant one sits inside `d` pairs, one per axis.
/// Increasing in `p`.
pub fn incident_edge_probability(p: f64, lambda: f64, d: usize) -> Result<f64> {
    check_probability_open_closed("p", p)?;
    check_probability_closed("lambda", lambda)?;
    if d < 2 {
        return Err(Error::param(format!("dimension must be >= 2, got {d}")));
    }
    let q = 1.0 - lambda;
    Ok(p * (1.0 - q.powi(2 * d as i32)) + (1.0 - p) * (1.0 - q.powi(d as i32)))
}

/// Same quantity through the pattern oracle: one minus the probability
/// that the whole origin star is closed.
pub fn incident_edge_probability_by_pattern(p: f64, lambda: f64, d: usize) -> Result<f64> {
    let star = EdgePattern::uniform(d, &origin_star(d), EdgeState::Closed)?;
    Ok(1.0 - pattern_probability(&star, p, lambda)?)
}

/// The four configurations of the lattice-condition counterexample on the
/// origin star in `d = 2`. `x`: both axis-0 edges open, both axis-1 edges
/// closed. `y`: the two forward edges open, the two backward edges closed.
#[derive(Debug, Clone)]
pub struct LatticeConditionPatterns {
    pub join: EdgePattern,
    pub meet: EdgePattern,
    pub x: EdgePattern,
    pub y: EdgePattern,
}

pub fn lattice_condition_patterns() -> LatticeConditionPatterns {
    use EdgeState::{Closed as C, Open as O};
    // star order: +e0, -e0, +e1, -e1
    let star = origin_star(2);
    let build = |states: [EdgeState; 4]| {
        EdgePattern::new(
            2,
            star.iter()
                .zip(states)
                .map(|((site, axis), state)| PatternEdge {
                    site: site.clone(),
                    axis: *axis,
                    state,
                })
                .collect(),
        )
        .expect("static pattern")
    };
    LatticeConditionPatterns {
        join: build([O, O, O, C]),
        meet: build([O, C, C, C]),
        x: build([O, O, C, C]),
        y: build([O, C, O, C]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeConditionGap {
    pub join: f64,
    pub meet: f64,
    pub x: f64,
    pub y: f64,
    /// `μ(x∨y) μ(x∧y) - μ(x) μ(y)`.
    pub gap: f64,
}

/// Closed forms of the four star probabilities and the resulting gap.
pub fn lattice_condition_gap(p: f64, lambda: f64) -> Result<LatticeConditionGap> {
    check_probability_open_closed("p", p)?;
    check_probability_closed("lambda", lambda)?;
    let (l, q) = (lambda, 1.0 - lambda);
    let join = p * l.powi(3) * q;
    let meet = p * l * q.powi(3);
    let x = p * l * l * q * q + (1.0 - p) * l * q;
    let y = p * l * l * q * q;
    Ok(LatticeConditionGap {
        join,
        meet,
        x,
        y,
        gap: join * meet - x * y,
    })
}

/// The gap assembled from pattern-oracle values of the four patterns.
pub fn lattice_condition_gap_by_pattern(p: f64, lambda: f64) -> Result<LatticeConditionGap> {
    let pats = lattice_condition_patterns();
    let join = pattern_probability(&pats.join, p, lambda)?;
    let meet = pattern_probability(&pats.meet, p, lambda)?;
    let x = pattern_probability(&pats.x, p, lambda)?;
    let y = pattern_probability(&pats.y, p, lambda)?;
    Ok(LatticeConditionGap {
        join,
        meet,
        x,
        y,
        gap: join * meet - x * y,
    })
}

/// `P(every edge of E open) = E[λ^t]`, `t` the number of pairs touching
/// `E`. Non-increasing in `p`: adding sites can only split pairs.
pub fn all_open_probability(d: usize, edges: &[(Vec<i64>, usize)], p: f64, lambda: f64) -> Result<f64> {
    if edges.is_empty() {
        return Ok(1.0);
    }
    pattern_probability(&EdgePattern::uniform(d, edges, EdgeState::Open)?, p, lambda)
}

/// Law of `t(η, E)`, the number of distinct pairs touching `E`.
pub fn touching_pairs_distribution(d: usize, edges: &[(Vec<i64>, usize)], p: f64) -> Result<Vec<f64>> {
    check_probability_open_closed("p", p)?;
    if edges.is_empty() {
        return Ok(vec![1.0]);
    }
    let pat = EdgePattern::uniform(d, edges, EdgeState::Open)?;
    Ok(pattern_polynomial(&pat)?.class_count_distribution(p))
}

/// Event evaluated by [`enumerate_box_probability`].
pub enum BoxEvent<'a> {
    /// Pattern in box coordinates (wrapped on a torus).
    Pattern(&'a EdgePattern),
    /// Arbitrary event. When `support` is given the event must depend only
    /// on those edges, and only pairs touching them are enumerated.
    Predicate {
        test: &'a (dyn Fn(&EdgeConfig) -> bool + Sync),
        support: Option<&'a [usize]>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationLimits {
    pub max_free_sites: usize,
    pub max_pairs: usize,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self {
            max_free_sites: 24,
            max_pairs: 24,
        }
    }
}

/// Exact probability of an event on a small finite lattice under its own
/// boundary convention, by enumerating every occupancy of the free sites
/// (frame sites are fixed under `occupied_frame`).
pub fn enumerate_box_probability(spec: &LatticeSpec, p: f64, lambda: f64, event: &BoxEvent<'_>) -> Result<f64> {
    enumerate_box_probability_with(spec, p, lambda, event, EnumerationLimits::default())
}

pub fn enumerate_box_probability_with(
    spec: &LatticeSpec,
    p: f64,
    lambda: f64,
    event: &BoxEvent<'_>,
    limits: EnumerationLimits,
) -> Result<f64> {
    check_probability_open_closed("p", p)?;
    check_probability_closed("lambda", lambda)?;
    Ok(box_polynomial(spec, event, limits)?.evaluate(p, lambda))
}

/// Counting polynomial of an event on a small lattice; for predicates the
/// `(a, b)` indices are the numbers of open and closed enumerated pairs.
pub fn box_polynomial(spec: &LatticeSpec, event: &BoxEvent<'_>, limits: EnumerationLimits) -> Result<PatternPolynomial> {
    let free: Vec<usize> = (0..spec.num_sites())
        .filter(|&s| !(spec.boundary() == Boundary::OccupiedFrame && spec.is_frame(s)))
        .collect();
    if free.len() > limits.max_free_sites {
        return Err(Error::Size {
            what: "free sites to enumerate".into(),
            requested: free.len() as u64,
            limit: limits.max_free_sites as u64,
        });
    }
    let occupancy = |mask: u64| {
        let mut occ = vec![false; spec.num_sites()];
        for (i, &s) in free.iter().enumerate() {
            occ[s] = mask >> i & 1 == 1;
        }
        SiteConfig::from_occupancy(spec, occ).expect("sized occupancy")
    };
    match event {
        BoxEvent::Pattern(pattern) => {
            let req = pattern_on_spec(spec, pattern)?;
            Ok(count_masks(free.len(), req.len(), |mask, poly| {
                let seg = extract_pairs(&occupancy(mask));
                let mut by_pair: BTreeMap<usize, ClassAcc> = BTreeMap::new();
                for &(edge, st) in &req {
                    match seg.pair_of_edge(edge) {
                        Some(id) => by_pair.entry(id).or_default().add(Some(st)),
                        None if st.is_open() => return,
                        None => {}
                    }
                }
                let mut c = (0u32, 0u32);
                for acc in by_pair.values_mut() {
                    if !acc.flush(&mut c) {
                        return;
                    }
                }
                let slot = poly.slot(mask.count_ones() as usize, c.0 as usize, c.1 as usize);
                poly.counts[slot] += 1;
            }))
        }
        BoxEvent::Predicate { test, support } => {
            let bound = match support {
                Some(s) => s.len(),
                None => spec.num_edges(),
            };
            if bound > limits.max_pairs {
                return Err(Error::Size {
                    what: "pairs to enumerate".into(),
                    requested: bound as u64,
                    limit: limits.max_pairs as u64,
                });
            }
            Ok(count_masks(free.len(), bound, |mask, poly| {
                let seg = extract_pairs(&occupancy(mask));
                let relevant: Vec<usize> = match support {
                    Some(s) => {
                        let mut ids: Vec<usize> = s.iter().filter_map(|&e| seg.pair_of_edge(e)).collect();
                        ids.sort_unstable();
                        ids.dedup();
                        ids
                    }
                    None => (0..seg.num_pairs()).collect(),
                };
                let spans: Vec<Vec<usize>> = relevant
                    .iter()
                    .map(|&id| seg.pairs()[id].edges(spec).collect())
                    .collect();
                let r = relevant.len();
                let k = mask.count_ones() as usize;
                let mut cfg = EdgeConfig::all_closed(spec);
                for states in 0u64..1 << r {
                    for (i, span) in spans.iter().enumerate() {
                        let open = states >> i & 1 == 1;
                        for &e in span {
                            cfg.set(e, open);
                        }
                    }
                    if test(&cfg) {
                        let a = states.count_ones() as usize;
                        let slot = poly.slot(k, a, r - a);
                        poly.counts[slot] += 1;
                    }
                }
            }))
        }
    }
}
