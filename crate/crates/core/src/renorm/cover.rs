use serde::{Deserialize, Serialize};

use super::estimate::EventFamily;
use super::ScaleLadder;
use crate::cluster::sphere_offsets;
use crate::error::{Error, Result};
use crate::lattice::EdgeConfig;

/// Refuse boundary enumerations beyond this many sites.
const MAX_SPHERE_SITES: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverTarget {
    /// `∂B(o, L_{k+1})`.
    Inner,
    /// `∂B(o, 5 L_{k+1})`.
    Outer,
}

impl CoverTarget {
    pub fn from_index(which: u8) -> Result<Self> {
        match which {
            1 => Ok(Self::Inner),
            2 => Ok(Self::Outer),
            _ => Err(Error::param(format!("cover index must be 1 or 2, got {which}"))),
        }
    }

    fn factor(self) -> f64 {
        match self {
            Self::Inner => 1.0,
            Self::Outer => 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverBounds {
    /// `|∂B| / (d (2⌊L_k⌋+1)^{d-1})`, valid for every cover.
    pub lower: f64,
    /// `|∂B| / ⌊L_k/2⌋^{d-1}`, valid for the greedy net.
    pub upper: f64,
    /// Upper bound with `|∂B|` replaced by `2d(2⌊R⌋+1)^{d-1}`.
    pub upper_loose: f64,
    /// `(L_{k+1} / L_k)^{d-1}`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSet {
    pub target: CoverTarget,
    pub k: usize,
    pub d: usize,
    /// `⌊R⌋` of the covered sphere.
    pub radius: i64,
    /// `⌊L_k⌋`, the covering radius.
    pub reach: i64,
    pub points: Vec<Vec<i64>>,
    pub net_size: usize,
    pub boundary_size: usize,
    pub bounds: CoverBounds,
}

fn dist(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).max().unwrap_or(0)
}

/// Greedy net on the target sphere with pairwise separation `> ⌊L_k⌋`
/// (so the balls of radius `⌊L_k/2⌋` are disjoint), pruned to a cover by
/// balls of radius `⌊L_k⌋`. Coverage is verified site by site.
pub fn cover_sets(ladder: &ScaleLadder, k: usize, target: CoverTarget, d: usize) -> Result<CoverSet> {
    if d < 2 {
        return Err(Error::param(format!("dimension must be >= 2, got {d}")));
    }
    let lk = ladder.level(k)?;
    let lk1 = ladder.level(k + 1)?;
    let radius = (target.factor() * lk1).floor() as i64;
    let reach = lk.floor() as i64;
    let sphere_sites = (2 * radius + 1).pow(d as u32) - (2 * radius - 1).max(0).pow(d as u32);
    if sphere_sites as usize > MAX_SPHERE_SITES {
        return Err(Error::Size {
            what: "cover boundary sites".into(),
            requested: sphere_sites as u64,
            limit: MAX_SPHERE_SITES as u64,
        });
    }
    let sphere = sphere_offsets(d, radius);

    let mut net: Vec<Vec<i64>> = Vec::new();
    for y in &sphere {
        if net.iter().all(|x| dist(x, y) > reach) {
            net.push(y.clone());
        }
    }

    // multiplicity of coverage per sphere site, then drop redundant points
    let mut cover_count = vec![0u32; sphere.len()];
    let covered_by: Vec<Vec<usize>> = net
        .iter()
        .map(|x| (0..sphere.len()).filter(|&i| dist(x, &sphere[i]) <= reach).collect())
        .collect();
    for list in &covered_by {
        for &i in list {
            cover_count[i] += 1;
        }
    }
    let mut keep = vec![true; net.len()];
    for (j, list) in covered_by.iter().enumerate() {
        if list.iter().all(|&i| cover_count[i] > 1) {
            keep[j] = false;
            for &i in list {
                cover_count[i] -= 1;
            }
        }
    }
    let points: Vec<Vec<i64>> = net.iter().zip(&keep).filter(|(_, &k)| k).map(|(x, _)| x.clone()).collect();

    if let Some(miss) = sphere.iter().find(|y| points.iter().all(|x| dist(x, y) > reach)) {
        return Err(Error::Internal(format!("cover misses boundary site {miss:?}")));
    }

    let dm1 = d as i32 - 1;
    let boundary = sphere.len() as f64;
    let half = (lk / 2.0).floor();
    let bounds = CoverBounds {
        lower: boundary / (d as f64 * (2.0 * reach as f64 + 1.0).powi(dm1)),
        upper: boundary / half.powi(dm1),
        upper_loose: 2.0 * d as f64 * (2.0 * radius as f64 + 1.0).powi(dm1) / half.powi(dm1),
        ratio: (lk1 / lk).powi(dm1),
    };
    Ok(CoverSet {
        target,
        k,
        d,
        radius,
        reach,
        points,
        net_size: net.len(),
        boundary_size: sphere.len(),
        bounds,
    })
}

impl CoverSet {
    /// The covering size bounds hold for this set.
    pub fn within_bounds(&self) -> bool {
        let n = self.points.len() as f64;
        self.bounds.lower <= n && n <= self.bounds.upper && n <= self.bounds.upper_loose
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeOutcome {
    /// `A_{k+1}(o)` holds.
    pub parent: bool,
    pub x1: Option<Vec<i64>>,
    pub x2: Option<Vec<i64>>,
    /// Smallest `‖x1 - x2‖∞` over all pairs of cover points.
    pub min_separation: i64,
}

impl CascadeOutcome {
    /// Either the parent event fails or both children were found.
    pub fn consistent(&self) -> bool {
        !self.parent || (self.x1.is_some() && self.x2.is_some())
    }
}

/// Looks for level-`k` events on the two covers whenever the level-`k+1`
/// event holds at `center`.
pub fn cascade_witness(
    edges: &EdgeConfig,
    center: usize,
    family: EventFamily,
    ladder: &ScaleLadder,
    k: usize,
    inner: &CoverSet,
    outer: &CoverSet,
) -> Result<CascadeOutcome> {
    if inner.target != CoverTarget::Inner || outer.target != CoverTarget::Outer || inner.k != k || outer.k != k {
        return Err(Error::param("covers do not match level and targets"));
    }
    let spec = edges.spec();
    let lk = ladder.level(k)?;
    let min_separation = inner
        .points
        .iter()
        .flat_map(|a| outer.points.iter().map(move |b| dist(a, b)))
        .min()
        .unwrap_or(i64::MAX);
    let parent = family.holds(edges, center, ladder.level(k + 1)?)?;
    if !parent {
        return Ok(CascadeOutcome {
            parent,
            x1: None,
            x2: None,
            min_separation,
        });
    }
    let c: Vec<i64> = spec.coords(center).into_iter().map(|v| v as i64).collect();
    let find = |set: &CoverSet| -> Result<Option<Vec<i64>>> {
        for off in &set.points {
            let abs: Vec<i64> = c.iter().zip(off).map(|(a, b)| a + b).collect();
            let site = spec
                .index_signed(&abs)
                .ok_or_else(|| Error::Geometry(format!("cover point {abs:?} outside the lattice")))?;
            if family.holds(edges, site, lk)? {
                return Ok(Some(off.clone()));
            }
        }
        Ok(None)
    };
    Ok(CascadeOutcome {
        parent,
        x1: find(inner)?,
        x2: find(outer)?,
        min_separation,
    })
}
