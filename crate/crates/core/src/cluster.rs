//! Connectivity of open edges: components, wrapping and crossing, one-arm
//! events, the planar dual and circuit detection around a box.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Boundary, EdgeConfig, LatticeSpec};

/// Union-find with path compression, union by size and, per site, the
/// displacement to its parent in unwrapped coordinates. A cycle whose net
/// displacement is nonzero along an axis wraps the torus along that axis.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    d: usize,
    disp: Vec<i32>,
    wraps: Vec<u8>,
}

/// What a single [`UnionFind::union_step`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnionOutcome {
    Merged,
    /// Same component, the closed cycle has zero net displacement.
    Cycle,
    /// Same component and the closed cycle winds; bit `a` set for axis `a`.
    Wrap(u8),
}

impl UnionFind {
    pub fn new(n: usize, d: usize) -> Self {
        assert!(n < u32::MAX as usize, "too many sites for u32 labels");
        assert!(d <= 8, "wrap mask holds at most 8 axes");
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            d,
            disp: vec![0; n * d],
            wraps: vec![0; n],
        }
    }

    /// Root of `x`, accumulating `x`'s displacement to the root into `out`.
    pub fn find_with(&mut self, x: usize, out: &mut [i32]) -> usize {
        let d = self.d;
        let mut total = [0i32; 8];
        let mut root = x;
        while self.parent[root] as usize != root {
            for a in 0..d {
                total[a] += self.disp[root * d + a];
            }
            root = self.parent[root] as usize;
        }
        // Second pass: point every node on the path at the root, rewriting
        // its displacement to the remainder of the path.
        let mut rem = total;
        let mut cur = x;
        while cur != root {
            let next = self.parent[cur] as usize;
            for a in 0..d {
                let old = self.disp[cur * d + a];
                self.disp[cur * d + a] = rem[a];
                rem[a] -= old;
            }
            self.parent[cur] = root as u32;
            cur = next;
        }
        out[..d].copy_from_slice(&total[..d]);
        root
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut buf = [0i32; 8];
        self.find_with(x, &mut buf)
    }

    /// Adds the edge `u -> v` where `v` is `u` moved by `+1` along `axis`.
    pub fn union_step(&mut self, u: usize, v: usize, axis: usize) -> UnionOutcome {
        let d = self.d;
        let mut du = [0i32; 8];
        let mut dv = [0i32; 8];
        let ru = self.find_with(u, &mut du);
        let rv = self.find_with(v, &mut dv);
        // Displacement of rv relative to ru along the new edge.
        let mut delta = [0i32; 8];
        for a in 0..d {
            delta[a] = du[a] + i32::from(a == axis) - dv[a];
        }
        if ru == rv {
            let mask = (0..d).filter(|&a| delta[a] != 0).fold(0u8, |m, a| m | 1 << a);
            if mask == 0 {
                return UnionOutcome::Cycle;
            }
            self.wraps[ru] |= mask;
            return UnionOutcome::Wrap(mask);
        }
        let (big, small, sign) = if self.size[ru] >= self.size[rv] {
            (ru, rv, 1)
        } else {
            (rv, ru, -1)
        };
        self.parent[small] = big as u32;
        self.size[big] += self.size[small];
        self.wraps[big] |= self.wraps[small];
        for a in 0..d {
            self.disp[small * d + a] = sign * delta[a];
        }
        UnionOutcome::Merged
    }

    pub fn component_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r] as usize
    }

    /// Axes along which the component of `x` wraps.
    pub fn wrap_mask(&mut self, x: usize) -> u8 {
        let r = self.find(x);
        self.wraps[r]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Component label per site, numbered by smallest member site.
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
    pub largest: usize,
    /// Per axis, whether some component wraps (torus only).
    pub wraps: Vec<bool>,
    /// Per axis, whether some component touches both faces (box only).
    pub crossings: Vec<bool>,
}

impl ClusterReport {
    pub fn num_components(&self) -> usize {
        self.sizes.len()
    }

    pub fn connected(&self, u: usize, v: usize) -> bool {
        self.labels[u] == self.labels[v]
    }
}

fn build_union_find(edges: &EdgeConfig) -> UnionFind {
    let spec = edges.spec();
    let mut uf = UnionFind::new(spec.num_sites(), spec.d());
    for (e, &open) in edges.open_slots().iter().enumerate() {
        if open {
            let (u, axis) = spec.edge_anchor(e);
            let v = spec.step(u, axis, true).expect("open edge exists");
            uf.union_step(u, v, axis);
        }
    }
    uf
}

/// Components of the open subgraph.
pub fn components(edges: &EdgeConfig) -> ClusterReport {
    let spec = edges.spec();
    let n = spec.num_sites();
    let d = spec.d();
    let mut uf = build_union_find(edges);
    let mut root_label = vec![u32::MAX; n];
    let mut labels = vec![0u32; n];
    let mut sizes = Vec::new();
    let mut wraps = vec![false; d];
    // Per label, touches face 0 / face e-1 along each axis.
    let mut lo_face: Vec<u8> = Vec::new();
    let mut hi_face: Vec<u8> = Vec::new();
    for s in 0..n {
        let r = uf.find(s);
        if root_label[r] == u32::MAX {
            root_label[r] = sizes.len() as u32;
            sizes.push(0usize);
            lo_face.push(0);
            hi_face.push(0);
            let m = uf.wraps[r];
            for (a, w) in wraps.iter_mut().enumerate() {
                *w |= m >> a & 1 == 1;
            }
        }
        let l = root_label[r];
        labels[s] = l;
        sizes[l as usize] += 1;
        for a in 0..d {
            let c = spec.coord(s, a);
            if c == 0 {
                lo_face[l as usize] |= 1 << a;
            }
            if c + 1 == spec.extent()[a] {
                hi_face[l as usize] |= 1 << a;
            }
        }
    }
    let crossings = (0..d)
        .map(|a| {
            !spec.boundary().is_periodic()
                && lo_face
                    .iter()
                    .zip(&hi_face)
                    .any(|(l, h)| (l & h) >> a & 1 == 1)
        })
        .collect();
    let largest = sizes.iter().copied().max().unwrap_or(0);
    ClusterReport {
        labels,
        sizes,
        largest,
        wraps,
        crossings,
    }
}

/// Box: an open path joins the two faces orthogonal to `axis`. Torus: an
/// open cluster wraps along `axis`.
pub fn crossing(edges: &EdgeConfig, axis: usize) -> bool {
    let spec = edges.spec();
    if spec.boundary().is_periodic() {
        let uf = build_union_find(edges);
        (0..spec.num_sites()).any(|s| uf.parent[s] as usize == s && uf.wraps[s] >> axis & 1 == 1)
    } else {
        face_to_face(edges, axis)
    }
}

fn face_to_face(edges: &EdgeConfig, axis: usize) -> bool {
    let spec = edges.spec();
    let e = spec.extent()[axis];
    let mut seen = vec![false; spec.num_sites()];
    let mut queue: VecDeque<usize> = (0..spec.num_sites())
        .filter(|&s| spec.coord(s, axis) == 0)
        .collect();
    for &s in &queue {
        seen[s] = true;
    }
    while let Some(u) = queue.pop_front() {
        if spec.coord(u, axis) + 1 == e {
            return true;
        }
        for a in 0..spec.d() {
            for fwd in [true, false] {
                if let Some(v) = spec.step(u, a, fwd) {
                    let edge = if fwd { spec.edge_index(u, a) } else { spec.edge_index(v, a) };
                    if !seen[v] && edges.is_open(edge) {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
    }
    false
}

/// Offset view of a cube `B(x, r)` inside a lattice.
struct LocalBox<'a> {
    spec: &'a LatticeSpec,
    center: Vec<i64>,
    r: i64,
}

impl<'a> LocalBox<'a> {
    fn new(spec: &'a LatticeSpec, x: usize, r: i64) -> Result<Self> {
        let center: Vec<i64> = spec.coords(x).into_iter().map(|c| c as i64).collect();
        for a in 0..spec.d() {
            let e = spec.extent()[a] as i64;
            let fits = if spec.boundary().is_periodic() {
                2 * r + 1 <= e
            } else {
                center[a] - r >= 0 && center[a] + r < e
            };
            if !fits {
                return Err(Error::Geometry(format!(
                    "B(x, {r}) around {:?} does not fit extent {:?}",
                    center,
                    spec.extent()
                )));
            }
        }
        Ok(Self { spec, center, r })
    }

    fn side(&self) -> usize {
        (2 * self.r + 1) as usize
    }

    /// Local index of an offset vector, `None` outside the box.
    fn local(&self, off: &[i64]) -> Option<usize> {
        let side = self.side() as i64;
        let mut idx = 0i64;
        for a in (0..off.len()).rev() {
            if off[a].abs() > self.r {
                return None;
            }
            idx = idx * side + off[a] + self.r;
        }
        Some(idx as usize)
    }

    fn offset(&self, local: usize) -> Vec<i64> {
        let side = self.side();
        let mut rest = local;
        (0..self.spec.d())
            .map(|_| {
                let c = (rest % side) as i64 - self.r;
                rest /= side;
                c
            })
            .collect()
    }

    fn site(&self, off: &[i64]) -> usize {
        let abs: Vec<i64> = self.center.iter().zip(off).map(|(c, o)| c + o).collect();
        self.spec.index_signed(&abs).expect("inside checked geometry")
    }

    /// Edge from `off` one step forward along `axis`.
    fn edge(&self, off: &[i64], axis: usize) -> usize {
        self.spec.edge_index(self.site(off), axis)
    }
}

fn norm(off: &[i64]) -> i64 {
    off.iter().map(|c| c.abs()).max().unwrap_or(0)
}

/// `B(x, ⌊L⌋)` is joined to `∂B(x, ⌊10L⌋)` by open edges inside
/// `B(x, ⌊10L⌋)`.
pub fn one_arm(edges: &EdgeConfig, x: usize, l: f64) -> Result<bool> {
    if !(l >= 0.0) {
        return Err(Error::param(format!("scale must be >= 0, got {l}")));
    }
    one_arm_radii(edges, x, l.floor() as i64, (10.0 * l).floor() as i64)
}

/// `B(x, r_in)` is joined to `∂B(x, r_out)` by open edges inside
/// `B(x, r_out)`.
pub fn one_arm_radii(edges: &EdgeConfig, x: usize, r_in: i64, r_out: i64) -> Result<bool> {
    if r_in > r_out || r_in < 0 {
        return Err(Error::param(format!("radii {r_in}, {r_out} out of order")));
    }
    let spec = edges.spec();
    let b = LocalBox::new(spec, x, r_out)?;
    if r_in == r_out {
        return Ok(true);
    }
    let total = b.side().pow(spec.d() as u32);
    let mut seen = vec![false; total];
    let mut queue = VecDeque::new();
    for l in 0..total {
        if norm(&b.offset(l)) <= r_in {
            seen[l] = true;
            queue.push_back(l);
        }
    }
    let mut off = vec![0i64; spec.d()];
    while let Some(l) = queue.pop_front() {
        off.copy_from_slice(&b.offset(l));
        if norm(&off) == r_out {
            return Ok(true);
        }
        for a in 0..spec.d() {
            for fwd in [true, false] {
                off[a] += if fwd { 1 } else { -1 };
                if let Some(nl) = b.local(&off) {
                    if !seen[nl] {
                        let open = if fwd {
                            off[a] -= 1;
                            let e = b.edge(&off, a);
                            off[a] += 1;
                            edges.is_open(e)
                        } else {
                            edges.is_open(b.edge(&off, a))
                        };
                        if open {
                            seen[nl] = true;
                            queue.push_back(nl);
                        }
                    }
                }
                off[a] -= if fwd { 1 } else { -1 };
            }
        }
    }
    Ok(false)
}

/// Dual of a planar edge configuration. Dual vertex `(a, b)` stands for
/// the point `(a + 1/2, b + 1/2)`. Dual edges are indexed by the primal edge
/// they cross: the primal edge `(i,j)-(i+1,j)` is crossed by the dual edge
/// `(i,j-1)-(i,j)`, and `(i,j)-(i,j+1)` by `(i-1,j)-(i,j)`. A dual edge is
/// open iff its primal edge is open; the closed ones form `C*`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualConfig {
    spec: LatticeSpec,
    open: Vec<bool>,
}

pub fn dual_config(edges: &EdgeConfig) -> Result<DualConfig> {
    if edges.spec().d() != 2 {
        return Err(Error::param("the planar dual needs d = 2"));
    }
    Ok(DualConfig {
        spec: edges.spec().clone(),
        open: edges.open_slots().to_vec(),
    })
}

impl DualConfig {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    /// Dual edge crossing primal edge `e` is in `O*`.
    pub fn is_open(&self, e: usize) -> bool {
        self.open[e]
    }

    /// Dual edge crossing primal edge `e` is in `C*`.
    pub fn is_closed(&self, e: usize) -> bool {
        self.spec.edge_exists(e) && !self.open[e]
    }

    /// Endpoints of the dual edge crossing primal edge `e`, as dual vertex
    /// indices in unwrapped coordinates.
    pub fn endpoints(&self, e: usize) -> ([i64; 2], [i64; 2]) {
        let (site, axis) = self.spec.edge_anchor(e);
        let i = self.spec.coord(site, 0) as i64;
        let j = self.spec.coord(site, 1) as i64;
        if axis == 0 {
            ([i, j - 1], [i, j])
        } else {
            ([i - 1, j], [i, j])
        }
    }

    pub fn closed_count(&self) -> usize {
        (0..self.open.len()).filter(|&e| self.is_closed(e)).count()
    }
}

/// No open circuit in the annulus `B(x, ⌊10L⌋) \ B(x, ⌊L⌋)` surrounds the
/// inner box.
pub fn annulus_circuit_absent(edges: &EdgeConfig, x: usize, l: f64) -> Result<bool> {
    if !(l >= 0.0) {
        return Err(Error::param(format!("scale must be >= 0, got {l}")));
    }
    circuit_absent_between(edges, x, l.floor() as i64, (10.0 * l).floor() as i64)
}

fn check_annulus(edges: &EdgeConfig, r_in: i64, r_out: i64) -> Result<()> {
    if edges.spec().d() != 2 {
        return Err(Error::param("circuits are defined for d = 2"));
    }
    if r_in < 0 || r_out <= r_in {
        return Err(Error::param(format!("annulus radii {r_in}, {r_out} invalid")));
    }
    Ok(())
}

/// Circuit absence through the dual: the ring's sites are those with
/// `r_in < ‖z - x‖∞ <= r_out` and its edges join two ring sites. Unit faces
/// inside ring `r_in + 1` form the hole, faces outside ring `r_out` the
/// exterior. No open ring circuit surrounds the hole iff a path of faces
/// crossing only closed ring edges joins hole and exterior.
pub fn circuit_absent_between(edges: &EdgeConfig, x: usize, r_in: i64, r_out: i64) -> Result<bool> {
    check_annulus(edges, r_in, r_out)?;
    let b = LocalBox::new(edges.spec(), x, r_out)?;
    // Faces by lower-left corner (a, b) with a, b in [-r_out-1, r_out].
    let lo = -r_out - 1;
    let side = (2 * r_out + 2) as usize;
    let fidx = |a: i64, c: i64| ((c - lo) as usize) * side + (a - lo) as usize;
    // Twice the ℓ∞ norm of the face centre.
    let nu2 = |a: i64, c: i64| (2 * a + 1).abs().max((2 * c + 1).abs());
    let is_hole = |a: i64, c: i64| nu2(a, c) <= 2 * r_in + 1;
    let is_outer = |a: i64, c: i64| nu2(a, c) >= 2 * r_out + 1;
    let mut seen = vec![false; side * side];
    let mut queue = VecDeque::new();
    for c in lo..=r_out {
        for a in lo..=r_out {
            if is_hole(a, c) {
                seen[fidx(a, c)] = true;
                queue.push_back((a, c));
            }
        }
    }
    let in_ring = |off: [i64; 2]| {
        let n = norm(&off);
        n > r_in && n <= r_out
    };
    while let Some((a, c)) = queue.pop_front() {
        if is_outer(a, c) {
            return Ok(true);
        }
        // (neighbour face, primal edge between: lower endpoint and axis)
        let moves = [
            ((a + 1, c), [a + 1, c], 1usize),
            ((a - 1, c), [a, c], 1),
            ((a, c + 1), [a, c + 1], 0),
            ((a, c - 1), [a, c], 0),
        ];
        for ((na, nc), lower, axis) in moves {
            if na < lo || nc < lo || na > r_out || nc > r_out || seen[fidx(na, nc)] {
                continue;
            }
            let mut upper = lower;
            upper[axis] += 1;
            let passable = if in_ring(lower) && in_ring(upper) {
                !edges.is_open(b.edge(&lower, axis))
            } else {
                // Edges outside the ring only separate two hole faces or
                // two exterior faces.
                debug_assert!(
                    (is_hole(a, c) && is_hole(na, nc)) || (is_outer(a, c) && is_outer(na, nc))
                );
                true
            };
            if passable {
                seen[fidx(na, nc)] = true;
                queue.push_back((na, nc));
            }
        }
    }
    Ok(false)
}

/// Reference implementation of [`circuit_absent_between`] on the primal
/// graph: union-find over open ring edges with a winding potential that
/// counts signed crossings of the ray `{(t, 1/2) : t > 0}` relative to `x`.
/// A cycle with nonzero potential winds around the hole.
pub fn circuit_absent_primal(edges: &EdgeConfig, x: usize, r_in: i64, r_out: i64) -> Result<bool> {
    check_annulus(edges, r_in, r_out)?;
    let b = LocalBox::new(edges.spec(), x, r_out)?;
    let side = b.side();
    let mut parent: Vec<usize> = (0..side * side).collect();
    let mut pot = vec![0i64; side * side];
    fn find(parent: &mut [usize], pot: &mut [i64], x: usize) -> (usize, i64) {
        let mut path = Vec::new();
        let mut r = x;
        while parent[r] != r {
            path.push(r);
            r = parent[r];
        }
        for &n in path.iter().rev() {
            let par = parent[n];
            if par != r {
                pot[n] += pot[par];
                parent[n] = r;
            }
        }
        (r, if x == r { 0 } else { pot[x] })
    }
    let in_ring = |off: &[i64]| {
        let n = norm(off);
        n > r_in && n <= r_out
    };
    for c in -r_out..=r_out {
        for a in -r_out..=r_out {
            let u = [a, c];
            if !in_ring(&u) {
                continue;
            }
            for axis in 0..2 {
                let mut v = u;
                v[axis] += 1;
                if !in_ring(&v) || !edges.is_open(b.edge(&u, axis)) {
                    continue;
                }
                let w = i64::from(axis == 1 && c == 0 && a >= 1);
                let lu = b.local(&u).unwrap();
                let lv = b.local(&v).unwrap();
                let (ru, pu) = find(&mut parent, &mut pot, lu);
                let (rv, pv) = find(&mut parent, &mut pot, lv);
                if ru == rv {
                    if pu + w - pv != 0 {
                        return Ok(false);
                    }
                } else {
                    // pot(x) is the sum from x to its root; attach rv under ru.
                    parent[rv] = ru;
                    pot[rv] = pu + w - pv;
                }
            }
        }
    }
    Ok(true)
}

/// Sites of `∂B(x, r)`, in offset coordinates.
pub fn sphere_offsets(d: usize, r: i64) -> Vec<Vec<i64>> {
    let side = 2 * r + 1;
    let total = (side as usize).pow(d as u32);
    (0..total)
        .filter_map(|mut l| {
            let off: Vec<i64> = (0..d)
                .map(|_| {
                    let c = (l % side as usize) as i64 - r;
                    l /= side as usize;
                    c
                })
                .collect();
            (norm(&off) == r).then_some(off)
        })
        .collect()
}

/// Boundary convention check shared by samplers that need infinite-lattice
/// locality around a point.
pub fn require_local_boundary(spec: &LatticeSpec) -> Result<()> {
    match spec.boundary() {
        Boundary::Torus | Boundary::OccupiedFrame => Ok(()),
        Boundary::Closed => Err(Error::param(
            "local event estimates need a torus or occupied_frame lattice",
        )),
    }
}
