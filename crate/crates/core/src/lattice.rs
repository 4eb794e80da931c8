//! Finite boxes and tori of `Z^d` with a canonical site and edge indexing.
//!
//! Sites are numbered with axis 0 varying fastest. An edge is anchored at
//! its lower endpoint: edge `(site, axis)` joins `site` to `site + e_axis`
//! and has index `axis * num_sites + site`. On a box the slot for a site on
//! the upper face of `axis` is not an edge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Torus,
    Closed,
    OccupiedFrame,
}

impl Boundary {
    pub fn is_periodic(self) -> bool {
        matches!(self, Boundary::Torus)
    }
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "torus" => Ok(Boundary::Torus),
            "closed" => Ok(Boundary::Closed),
            "occupied_frame" | "frame" => Ok(Boundary::OccupiedFrame),
            other => Err(Error::param(format!("unknown boundary `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct LatticeSpec {
    d: usize,
    extent: Vec<usize>,
    boundary: Boundary,
    strides: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    d: usize,
    extent: Vec<usize>,
    boundary: Boundary,
}

impl TryFrom<SpecRepr> for LatticeSpec {
    type Error = Error;

    fn try_from(r: SpecRepr) -> Result<Self> {
        if r.d != r.extent.len() {
            return Err(Error::param(format!(
                "d = {} but {} extents given",
                r.d,
                r.extent.len()
            )));
        }
        LatticeSpec::new(r.extent, r.boundary)
    }
}

impl From<LatticeSpec> for SpecRepr {
    fn from(s: LatticeSpec) -> Self {
        SpecRepr {
            d: s.d,
            extent: s.extent,
            boundary: s.boundary,
        }
    }
}

impl LatticeSpec {
    pub fn new(extent: Vec<usize>, boundary: Boundary) -> Result<Self> {
        let d = extent.len();
        if d < 2 {
            return Err(Error::param(format!("dimension must be >= 2, got {d}")));
        }
        if let Some(&e) = extent.iter().find(|&&e| e < 2) {
            return Err(Error::param(format!("every extent must be >= 2, got {e}")));
        }
        let mut strides = Vec::with_capacity(d);
        let mut acc: usize = 1;
        for &e in &extent {
            strides.push(acc);
            acc = acc
                .checked_mul(e)
                .ok_or_else(|| Error::param("lattice too large to index"))?;
        }
        Ok(Self {
            d,
            extent,
            boundary,
            strides,
        })
    }

    pub fn cube(d: usize, side: usize, boundary: Boundary) -> Result<Self> {
        Self::new(vec![side; d], boundary)
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn extent(&self) -> &[usize] {
        &self.extent
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    #[inline]
    pub fn num_sites(&self) -> usize {
        self.strides[self.d - 1] * self.extent[self.d - 1]
    }

    /// Number of edge slots, `d * num_sites`; not all are edges on a box.
    #[inline]
    pub fn num_edge_slots(&self) -> usize {
        self.d * self.num_sites()
    }

    pub fn num_edges(&self) -> usize {
        if self.boundary.is_periodic() {
            return self.num_edge_slots();
        }
        (0..self.d)
            .map(|a| self.num_sites() / self.extent[a] * (self.extent[a] - 1))
            .sum()
    }

    #[inline]
    pub fn coord(&self, site: usize, axis: usize) -> usize {
        (site / self.strides[axis]) % self.extent[axis]
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        (0..self.d).map(|a| self.coord(site, a)).collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.d);
        coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| c * s)
            .sum()
    }

    /// Index of the site at signed integer coordinates, wrapping on a torus.
    pub fn index_signed(&self, coords: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for (a, &c) in coords.iter().enumerate() {
            let e = self.extent[a] as i64;
            let c = if self.boundary.is_periodic() {
                c.rem_euclid(e)
            } else if (0..e).contains(&c) {
                c
            } else {
                return None;
            };
            idx += c as usize * self.strides[a];
        }
        Some(idx)
    }

    /// Neighbour of `site` one step along `axis`; `None` off the edge of a box.
    #[inline]
    pub fn step(&self, site: usize, axis: usize, forward: bool) -> Option<usize> {
        let c = self.coord(site, axis);
        let e = self.extent[axis];
        let s = self.strides[axis];
        if forward {
            if c + 1 < e {
                Some(site + s)
            } else if self.boundary.is_periodic() {
                Some(site + s - e * s)
            } else {
                None
            }
        } else if c > 0 {
            Some(site - s)
        } else if self.boundary.is_periodic() {
            Some(site + (e - 1) * s)
        } else {
            None
        }
    }

    #[inline]
    pub fn edge_index(&self, site: usize, axis: usize) -> usize {
        axis * self.num_sites() + site
    }

    #[inline]
    pub fn edge_anchor(&self, edge: usize) -> (usize, usize) {
        let n = self.num_sites();
        (edge % n, edge / n)
    }

    #[inline]
    pub fn edge_exists(&self, edge: usize) -> bool {
        let (site, axis) = self.edge_anchor(edge);
        self.boundary.is_periodic() || self.coord(site, axis) + 1 < self.extent[axis]
    }

    /// Endpoints of an existing edge.
    #[inline]
    pub fn edge_endpoints(&self, edge: usize) -> Option<(usize, usize)> {
        let (site, axis) = self.edge_anchor(edge);
        self.step(site, axis, true).map(|t| (site, t))
    }

    /// Edge joining two neighbouring sites, if any.
    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        for axis in 0..self.d {
            if self.step(u, axis, true) == Some(v) {
                return Some(self.edge_index(u, axis));
            }
            if self.step(v, axis, true) == Some(u) {
                return Some(self.edge_index(v, axis));
            }
        }
        None
    }

    pub fn is_frame(&self, site: usize) -> bool {
        (0..self.d).any(|a| {
            let c = self.coord(site, a);
            c == 0 || c + 1 == self.extent[a]
        })
    }

    /// Signed coordinate difference `v - u` taken with the minimum-image
    /// convention on a torus.
    pub fn displacement(&self, u: usize, v: usize, axis: usize) -> i64 {
        let a = self.coord(u, axis) as i64;
        let b = self.coord(v, axis) as i64;
        let mut d = b - a;
        if self.boundary.is_periodic() {
            let e = self.extent[axis] as i64;
            d = d.rem_euclid(e);
            if 2 * d > e {
                d -= e;
            }
        }
        d
    }

    /// Rough memory footprint in bytes of one full sample with pair
    /// structure and cluster labels.
    pub fn sample_footprint_bytes(&self) -> u64 {
        self.num_sites() as u64 * Self::footprint_per_site(self.d)
    }

    pub fn footprint_per_site(d: usize) -> u64 {
        let d = d as u64;
        // occupancy + edge bits + edge->pair map + pairs + union-find arrays
        1 + d + 4 * d + 12 * d + 8
    }
}

/// Open/closed state of every lattice edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeConfig {
    spec: LatticeSpec,
    open: Vec<bool>,
}

impl EdgeConfig {
    pub fn all_closed(spec: &LatticeSpec) -> Self {
        Self {
            spec: spec.clone(),
            open: vec![false; spec.num_edge_slots()],
        }
    }

    pub fn all_open(spec: &LatticeSpec) -> Self {
        let open = (0..spec.num_edge_slots())
            .map(|e| spec.edge_exists(e))
            .collect();
        Self {
            spec: spec.clone(),
            open,
        }
    }

    pub fn from_open(spec: &LatticeSpec, open: Vec<bool>) -> Result<Self> {
        if open.len() != spec.num_edge_slots() {
            return Err(Error::Structural(format!(
                "edge vector has {} slots, lattice has {}",
                open.len(),
                spec.num_edge_slots()
            )));
        }
        if open
            .iter()
            .enumerate()
            .any(|(e, &o)| o && !spec.edge_exists(e))
        {
            return Err(Error::Structural("non-existent edge marked open".into()));
        }
        Ok(Self {
            spec: spec.clone(),
            open,
        })
    }

    #[inline]
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    #[inline]
    pub fn is_open(&self, edge: usize) -> bool {
        self.open[edge]
    }

    #[inline]
    pub fn set(&mut self, edge: usize, open: bool) {
        debug_assert!(!open || self.spec.edge_exists(edge));
        self.open[edge] = open;
    }

    pub fn open_slots(&self) -> &[bool] {
        &self.open
    }

    pub fn open_count(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }

    /// Whether every open edge of `self` is open in `other`.
    pub fn is_subset_of(&self, other: &EdgeConfig) -> bool {
        self.open
            .iter()
            .zip(&other.open)
            .all(|(&a, &b)| !a || b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_dimensions() {
        assert!(LatticeSpec::new(vec![4], Boundary::Torus).is_err());
        assert!(LatticeSpec::new(vec![4, 1], Boundary::Torus).is_err());
    }

    #[test]
    fn indexing_round_trips() {
        let s = LatticeSpec::new(vec![3, 4, 5], Boundary::Closed).unwrap();
        for site in 0..s.num_sites() {
            assert_eq!(s.index(&s.coords(site)), site);
        }
    }

    #[test]
    fn edge_counts() {
        let b = LatticeSpec::cube(2, 5, Boundary::Closed).unwrap();
        assert_eq!(b.num_edges(), 40);
        let t = LatticeSpec::cube(2, 5, Boundary::Torus).unwrap();
        assert_eq!(t.num_edges(), 50);
        let existing = (0..b.num_edge_slots()).filter(|&e| b.edge_exists(e)).count();
        assert_eq!(existing, 40);
    }

    #[test]
    fn torus_steps_wrap() {
        let t = LatticeSpec::cube(2, 4, Boundary::Torus).unwrap();
        let s = t.index(&[3, 1]);
        assert_eq!(t.step(s, 0, true), Some(t.index(&[0, 1])));
        assert_eq!(t.step(t.index(&[0, 0]), 1, false), Some(t.index(&[0, 3])));
        let b = LatticeSpec::cube(2, 4, Boundary::Closed).unwrap();
        assert_eq!(b.step(s, 0, true), None);
    }

    #[test]
    fn displacement_minimum_image() {
        let t = LatticeSpec::cube(2, 8, Boundary::Torus).unwrap();
        let u = t.index(&[7, 0]);
        let v = t.index(&[0, 0]);
        assert_eq!(t.displacement(u, v, 0), 1);
        assert_eq!(t.displacement(v, u, 0), -1);
    }
}
