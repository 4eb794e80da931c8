//! Covariance of local events in two distant boxes, against the bound
//! `4 (2L+1)^{d-1} e^{-α(p)(D-2L)}`.
//!
//! The bound comes from the event `C` that some line crossing both boxes
//! has every site between (and including) its two box endpoints vacant.
//! Off `C` no feasible pair meets both boxes, so the two boxes decouple.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::one_arm_radii;
use crate::error::{check_probability_closed, check_probability_open_closed, Error, Result};
use crate::lattice::{Boundary, EdgeConfig, LatticeSpec};
use crate::model::{sample_model, sample_one_choice_model, ModelParams};
use crate::renorm::alpha;
use crate::rng::RandomSource;
use crate::stats::PairCounts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalEvent {
    /// Every edge at the centre is open.
    AllOpen,
    /// The centre is joined to `∂B(center, L)` inside the box.
    OneArm,
    /// Open left-right crossing of the box along the first axis.
    Crossing,
}

impl LocalEvent {
    pub const ALL: [LocalEvent; 3] = [LocalEvent::AllOpen, LocalEvent::OneArm, LocalEvent::Crossing];

    pub fn name(self) -> &'static str {
        match self {
            Self::AllOpen => "all_open",
            Self::OneArm => "one_arm",
            Self::Crossing => "crossing",
        }
    }
}

impl std::str::FromStr for LocalEvent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::param(format!("unknown event {s:?}; expected all_open, one_arm or crossing")))
    }
}

/// An event read from the edges with both endpoints in `B(center, l)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalEventSpec {
    pub center: Vec<i64>,
    pub l: i64,
    pub event: LocalEvent,
}

impl LocalEventSpec {
    pub fn evaluate(&self, edges: &EdgeConfig, origin: &[i64]) -> Result<bool> {
        let spec = edges.spec();
        let abs: Vec<i64> = self.center.iter().zip(origin).map(|(c, o)| c + o).collect();
        let x = spec
            .index_signed(&abs)
            .ok_or_else(|| Error::Geometry(format!("centre {abs:?} outside the lattice")))?;
        match self.event {
            LocalEvent::AllOpen => Ok((0..spec.d()).all(|a| {
                let back = spec.step(x, a, false).expect("interior centre");
                edges.is_open(spec.edge_index(x, a)) && edges.is_open(spec.edge_index(back, a))
            })),
            LocalEvent::OneArm => one_arm_radii(edges, x, 0, self.l),
            LocalEvent::Crossing => Ok(box_crossing(edges, &abs, self.l)),
        }
    }
}

/// Left-right crossing of `B(c, l)` along axis 0 using edges inside the box.
fn box_crossing(edges: &EdgeConfig, c: &[i64], l: i64) -> bool {
    let spec = edges.spec();
    let d = spec.d();
    let side = 2 * l + 1;
    let vol = side.pow(d as u32) as usize;
    let offset = |mut i: usize| -> Vec<i64> {
        (0..d)
            .map(|_| {
                let v = (i % side as usize) as i64 - l;
                i /= side as usize;
                v
            })
            .collect()
    };
    let local = |off: &[i64]| -> usize { off.iter().rev().fold(0usize, |acc, &o| acc * side as usize + (o + l) as usize) };
    let site = |off: &[i64]| -> usize {
        let abs: Vec<i64> = c.iter().zip(off).map(|(a, b)| a + b).collect();
        spec.index_signed(&abs).expect("box inside lattice")
    };
    let mut seen = vec![false; vol];
    let mut stack: Vec<usize> = (0..vol).filter(|&i| offset(i)[0] == -l).collect();
    stack.iter().for_each(|&i| seen[i] = true);
    while let Some(i) = stack.pop() {
        let off = offset(i);
        if off[0] == l {
            return true;
        }
        let s = site(&off);
        for a in 0..d {
            for fwd in [true, false] {
                let mut nb = off.clone();
                nb[a] += if fwd { 1 } else { -1 };
                if nb[a].abs() > l {
                    continue;
                }
                let j = local(&nb);
                let e = if fwd { spec.edge_index(s, a) } else { spec.edge_index(site(&nb), a) };
                if !seen[j] && edges.is_open(e) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    false
}

/// `4 (2L+1)^{d-1} e^{-α(p)(D-2L)}`; zero at `p = 1`.
pub fn decay_bound(l: f64, dist: f64, p: f64, d: usize) -> Result<f64> {
    check_probability_open_closed("p", p)?;
    if !(l >= 0.0) || !(dist > 2.0 * l) || d < 1 {
        return Err(Error::param(format!("need D > 2L >= 0, got L = {l}, D = {dist}")));
    }
    if p == 1.0 {
        return Ok(0.0);
    }
    Ok(4.0 * (2.0 * l + 1.0).powi(d as i32 - 1) * (-alpha(p) * (dist - 2.0 * l)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecouplingProbability {
    /// Lines meeting both boxes.
    pub lines: u64,
    /// Sites on each connecting segment, endpoints included.
    pub sites_per_line: u64,
    /// `P(C)` by inclusion-exclusion over the lines.
    pub exact: f64,
    /// `(2L+1)^{d-1} (1-p)^{D-2L}`.
    pub union_bound: f64,
}

/// Largest line count for the alternating inclusion-exclusion sum.
const MAX_EXACT_LINES: u64 = 64;

/// Probability of the decoupling event for boxes `B(0, l)` and
/// `B(offset, l)`. Separation is along the first axis of largest
/// displacement.
pub fn decoupling_event_probability(l: i64, offset: &[i64], p: f64) -> Result<DecouplingProbability> {
    check_probability_closed("p", p)?;
    let d = offset.len();
    let dist = offset.iter().map(|v| v.abs()).max().unwrap_or(0);
    if l < 0 || d == 0 || dist <= 2 * l {
        return Err(Error::param(format!("need D > 2L, got L = {l}, offset {offset:?}")));
    }
    let t = offset.iter().position(|v| v.abs() == dist).expect("max attained");
    let lines: u64 = (0..d)
        .filter(|&s| s != t)
        .map(|s| (2 * l + 1 - offset[s].abs()).max(0) as u64)
        .product();
    let sites_per_line = (dist - 2 * l + 1) as u64;
    let union_bound = (2.0 * l as f64 + 1.0).powi(d as i32 - 1) * (1.0 - p).powi((dist - 2 * l) as i32);
    if lines > MAX_EXACT_LINES {
        return Err(Error::Size {
            what: "inclusion-exclusion lines".into(),
            requested: lines,
            limit: MAX_EXACT_LINES,
        });
    }
    // segments on distinct lines are disjoint, so the j-fold intersections
    // have probability q^j
    let q = (1.0 - p).powi(sites_per_line as i32);
    let mut exact = 0.0;
    let mut binom = 1.0;
    for j in 1..=lines {
        binom = binom * (lines - j + 1) as f64 / j as f64;
        let term = binom * q.powi(j as i32);
        exact += if j % 2 == 1 { term } else { -term };
    }
    let exact = exact.clamp(0.0, 1.0);
    if exact > union_bound * (1.0 + 1e-12) + f64::MIN_POSITIVE {
        return Err(Error::Internal(format!("P(C) = {exact} exceeds union bound {union_bound}")));
    }
    Ok(DecouplingProbability {
        lines,
        sites_per_line,
        exact,
        union_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CovModel {
    Independent { lambda: f64 },
    OneChoice,
}

impl CovModel {
    pub fn lambda(&self) -> Option<f64> {
        match self {
            Self::Independent { lambda } => Some(*lambda),
            Self::OneChoice => None,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Independent { .. } => "independent",
            Self::OneChoice => "one_choice",
        }
    }
}

/// One output row; also the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovRow {
    #[serde(rename = "L")]
    pub l: i64,
    #[serde(rename = "D")]
    pub dist: i64,
    pub p: f64,
    pub lambda: Option<f64>,
    pub model: String,
    pub event: String,
    pub n: u64,
    pub p_a: f64,
    pub p_b: f64,
    pub cov_hat: f64,
    pub sigma: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Sample box holding `B(0, l)` and `B(dist e0, l)` with `margin` layers
/// around both; returns the lattice and the absolute position of `0`.
fn pair_geometry(d: usize, l: i64, dist: i64, margin: i64) -> Result<(LatticeSpec, Vec<i64>)> {
    let reach = l + margin;
    let mut extent = vec![(2 * reach + 1) as usize; d];
    extent[0] = (2 * reach + dist + 1) as usize;
    let spec = LatticeSpec::new(extent, Boundary::OccupiedFrame)?;
    Ok((spec, vec![reach; d]))
}

/// Covariances of each event family on the pair `B(0, l)`, `B(D e0, l)`,
/// all evaluated on the same `n` samples. Sample `i` uses `rng.child(i)`;
/// the box has `⌈4L⌉` occupied-frame layers of margin.
pub fn covariance_batch(
    events: &[LocalEvent],
    d: usize,
    l: i64,
    dist: i64,
    p: f64,
    model: CovModel,
    n: u64,
    rng: &RandomSource,
) -> Result<Vec<CovRow>> {
    if l < 1 || dist <= 2 * l {
        return Err(Error::param(format!("need L >= 1 and D > 2L, got L = {l}, D = {dist}")));
    }
    if d < 2 || n == 0 || events.is_empty() {
        return Err(Error::param("need d >= 2, n >= 1 and at least one event"));
    }
    let lambda = model.lambda().unwrap_or(1.0);
    let params = ModelParams::new(p, lambda)?;
    let (spec, origin) = pair_geometry(d, l, dist, 4 * l)?;
    let specs: Vec<(LocalEventSpec, LocalEventSpec)> = events
        .iter()
        .map(|&event| {
            let mut far = vec![0; d];
            far[0] = dist;
            (
                LocalEventSpec { center: vec![0; d], l, event },
                LocalEventSpec { center: far, l, event },
            )
        })
        .collect();
    let counts = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Vec<PairCounts>> {
            let r = rng.child(i);
            let sample = match model {
                CovModel::Independent { .. } => sample_model(&spec, params, &r)?,
                CovModel::OneChoice => sample_one_choice_model(&spec, p, &r)?,
            };
            specs
                .iter()
                .map(|(a, b)| {
                    let mut c = PairCounts::default();
                    c.push(a.evaluate(&sample.edges, &origin)?, b.evaluate(&sample.edges, &origin)?);
                    Ok(c)
                })
                .collect()
        })
        .try_reduce(
            || vec![PairCounts::default(); specs.len()],
            |mut acc, x| {
                acc.iter_mut().zip(&x).for_each(|(a, b)| a.merge(b));
                Ok(acc)
            },
        )?;
    let bound = decay_bound(l as f64, dist as f64, p, d)?;
    Ok(events
        .iter()
        .zip(counts)
        .map(|(e, c)| {
            let cov_hat = c.covariance();
            let sigma = c.covariance_se();
            CovRow {
                l,
                dist,
                p,
                lambda: model.lambda(),
                model: model.name().to_string(),
                event: e.name().to_string(),
                n,
                p_a: c.a as f64 / n as f64,
                p_b: c.b as f64 / n as f64,
                cov_hat,
                sigma,
                bound,
                pass: cov_hat.abs() - 3.0 * sigma <= bound,
            }
        })
        .collect())
}

/// Covariance for one pair of catalogue events of equal radius.
pub fn covariance_estimate(
    a: &LocalEventSpec,
    b: &LocalEventSpec,
    p: f64,
    model: CovModel,
    n: u64,
    rng: &RandomSource,
) -> Result<CovRow> {
    if a.center.len() != b.center.len() || a.l != b.l || a.event != b.event {
        return Err(Error::param("events must share dimension, radius and family"));
    }
    if a.center == b.center {
        return Err(Error::param("events need distinct centres"));
    }
    let diff: Vec<i64> = b.center.iter().zip(&a.center).map(|(x, y)| x - y).collect();
    if diff[1..].iter().any(|&v| v != 0) || diff[0] <= 0 {
        return Err(Error::param("the second centre must lie on the positive first axis from the first"));
    }
    let rows = covariance_batch(&[a.event], a.center.len(), a.l, diff[0], p, model, n, rng)?;
    Ok(rows.into_iter().next().expect("one row"))
}

/// Parameter grid of the dominance check: `L ∈ {1,2}`, `D ∈ {6,10,14}`,
/// `p ∈ {0.2,0.5,0.8}`.
pub fn dominance_cells() -> Vec<(i64, i64, f64)> {
    let mut cells = Vec::new();
    for l in [1, 2] {
        for dist in [6, 10, 14] {
            for p in [0.2, 0.5, 0.8] {
                cells.push((l, dist, p));
            }
        }
    }
    cells
}

pub const DOMINANCE_LAMBDAS: [f64; 2] = [0.3, 0.7];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_arithmetic() {
        let p = 1.0 - (-1f64).exp();
        let b = decay_bound(1.0, 5.0, p, 2).unwrap();
        assert!((b - 12.0 * (-3f64).exp()).abs() < 1e-12);
        assert!((b - 0.597_445_5).abs() < 1e-6);
        assert_eq!(decay_bound(1.0, 5.0, 1.0, 2).unwrap(), 0.0);
        assert!(decay_bound(1.0, 500.0, 0.5, 2).unwrap() < 1e-100);
        assert!(decay_bound(2.0, 4.0, 0.5, 2).is_err());
    }

    #[test]
    fn decoupling_exact_matches_closed_form() {
        for &(l, dist, p) in &[(1i64, 6i64, 0.2), (2, 10, 0.5), (1, 3, 0.8), (0, 1, 0.3)] {
            let r = decoupling_event_probability(l, &[dist, 0], p).unwrap();
            let q = (1.0 - p).powi((dist - 2 * l + 1) as i32);
            let closed = 1.0 - (1.0 - q).powi((2 * l + 1) as i32);
            assert!((r.exact - closed).abs() < 1e-14, "{r:?}");
            assert!(r.exact <= r.union_bound);
        }
    }

    #[test]
    fn decoupling_single_line_and_empty() {
        // boxes offset so only one line is shared
        let r = decoupling_event_probability(1, &[6, 2], 0.3).unwrap();
        assert_eq!(r.lines, 1);
        assert!((r.exact - 0.7f64.powi(5)).abs() < 1e-15);
        let r = decoupling_event_probability(1, &[6, 4], 0.3).unwrap();
        assert_eq!(r.lines, 0);
        assert_eq!(r.exact, 0.0);
        assert!(decoupling_event_probability(40, &[100, 0, 0], 0.3).is_err());
    }

    #[test]
    fn trivial_covariances() {
        let rng = RandomSource::from_seed(4);
        let rows = covariance_batch(&[LocalEvent::AllOpen], 2, 1, 4, 0.4, CovModel::Independent { lambda: 1.0 }, 200, &rng).unwrap();
        assert_eq!((rows[0].p_a, rows[0].p_b, rows[0].cov_hat), (1.0, 1.0, 0.0));
        let rows = covariance_batch(&LocalEvent::ALL, 2, 1, 4, 0.4, CovModel::Independent { lambda: 0.0 }, 200, &rng).unwrap();
        for r in rows {
            assert_eq!((r.p_a, r.cov_hat), (0.0, 0.0), "{r:?}");
        }
    }

    #[test]
    fn estimate_rejects_bad_geometry() {
        let rng = RandomSource::from_seed(4);
        let a = LocalEventSpec { center: vec![0, 0], l: 2, event: LocalEvent::OneArm };
        let near = LocalEventSpec { center: vec![4, 0], ..a.clone() };
        assert!(covariance_estimate(&a, &near, 0.5, CovModel::OneChoice, 10, &rng).is_err());
        assert!(covariance_estimate(&a, &a, 0.5, CovModel::OneChoice, 10, &rng).is_err());
    }

    #[test]
    fn crossing_on_full_and_empty() {
        let spec = LatticeSpec::cube(2, 9, Boundary::Closed).unwrap();
        let open = EdgeConfig::all_open(&spec);
        assert!(box_crossing(&open, &[4, 4], 2));
        assert!(!box_crossing(&EdgeConfig::all_closed(&spec), &[4, 4], 2));
        // a single open row crosses
        let mut e = EdgeConfig::all_closed(&spec);
        for x in 2..6 {
            e.set(spec.edge_index(spec.index(&[x, 5]), 0), true);
        }
        assert!(box_crossing(&e, &[4, 4], 2));
        // the row outside the box does not
        let mut e = EdgeConfig::all_closed(&spec);
        for x in 2..6 {
            e.set(spec.edge_index(spec.index(&[x, 7]), 0), true);
        }
        assert!(!box_crossing(&e, &[4, 4], 2));
    }
}
