//! Phase-boundary estimation on the torus and the phase-diagram outputs.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cluster::{UnionFind, UnionOutcome};
use crate::error::{check_probability_open_closed, Error, Result};
use crate::hex::hex_threshold;
use crate::lattice::{Boundary, LatticeSpec};
use crate::model::{extract_pairs, pair_uniforms, sample_sites};
use crate::rng::{streams, RandomSource};
use crate::stats::{bisect_half, t_interval};

/// Bond percolation thresholds of `Z^d` used as reference lines.
pub fn bond_threshold(d: usize) -> Option<f64> {
    match d {
        2 => Some(0.5),
        3 => Some(0.248_812_6),
        4 => Some(0.160_131_4),
        5 => Some(0.118_171_7),
        6 => Some(0.094_201_9),
        _ => None,
    }
}

/// Smallest `λ` at which the sample wraps the torus along the first axis:
/// pairs are opened in increasing order of their uniforms and the uniform
/// of the pair that closes the first winding cycle is returned. Infinite if
/// no wrap exists even with every pair open.
///
/// Sites and uniforms use the same child streams as
/// [`sample_model`](crate::model::sample_model), so the sample at `λ` wraps
/// iff the returned value is `< λ`.
pub fn wrap_threshold(spec: &LatticeSpec, p: f64, rng: &RandomSource) -> Result<f64> {
    if spec.boundary() != Boundary::Torus {
        return Err(Error::param("wrapping needs a torus"));
    }
    let sites = sample_sites(spec, p, &rng.child(streams::SITES))?;
    let seg = extract_pairs(&sites);
    let u = pair_uniforms(&seg, &rng.child(streams::PAIRS));
    let mut order: Vec<u32> = (0..seg.num_pairs() as u32).collect();
    order.sort_unstable_by(|&a, &b| u[a as usize].total_cmp(&u[b as usize]).then(a.cmp(&b)));
    let mut uf = UnionFind::new(spec.num_sites(), spec.d());
    for id in order {
        let pair = &seg.pairs()[id as usize];
        for edge in pair.edges(spec) {
            let (site, axis) = spec.edge_anchor(edge);
            let next = spec.step(site, axis, true).expect("torus step");
            if let UnionOutcome::Wrap(mask) = uf.union_step(site, next, axis) {
                if mask & 1 != 0 {
                    return Ok(u[id as usize]);
                }
            }
        }
    }
    Ok(f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaCConfig {
    pub d: usize,
    /// Torus side.
    pub size: usize,
    /// Samples per replicate.
    pub n: u64,
    /// Bisection tolerance in `λ`.
    pub tol: f64,
    /// Independent replicates, each with its own seed.
    pub replicates: u64,
    /// Refuse tori whose single sample exceeds this many bytes.
    pub memory_budget: u64,
}

impl Default for LambdaCConfig {
    fn default() -> Self {
        Self {
            d: 2,
            size: 256,
            n: 64,
            tol: 0.005,
            replicates: 5,
            memory_budget: 1 << 30,
        }
    }
}

/// One row of the phase diagram; also the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagramRow {
    pub p: f64,
    pub lambda_c_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub d: usize,
    pub geometry: String,
    pub size: usize,
    pub n: u64,
    pub replicates: u64,
    pub tol: f64,
}

/// `λ̂_c(p)`: each replicate bisects its empirical wrapping curve for the
/// 1/2 point; the row reports their mean with a Student-t interval.
/// Replicate `r` draws sample `i` from `rng.child(r).child(i)`.
pub fn lambda_c_estimate(p: f64, cfg: &LambdaCConfig, rng: &RandomSource) -> Result<PhaseDiagramRow> {
    check_probability_open_closed("p", p)?;
    if !(cfg.tol > 0.0) || cfg.n == 0 || cfg.replicates < 2 || cfg.size < 2 {
        return Err(Error::param("need tol > 0, n >= 1, replicates >= 2 and size >= 2"));
    }
    let spec = LatticeSpec::cube(cfg.d, cfg.size, Boundary::Torus)?;
    if spec.sample_footprint_bytes() > cfg.memory_budget {
        return Err(Error::Size {
            what: format!("torus of side {} in d = {}", cfg.size, cfg.d),
            requested: spec.sample_footprint_bytes(),
            limit: cfg.memory_budget,
        });
    }
    let n = cfg.n;
    let thresholds: Vec<f64> = (0..cfg.replicates * n)
        .into_par_iter()
        .map(|j| wrap_threshold(&spec, p, &rng.child(j / n).child(j % n)))
        .collect::<Result<_>>()?;
    let estimates: Vec<f64> = thresholds
        .chunks(n as usize)
        .map(|t| bisect_half(t, cfg.tol).map(|(x, _)| x))
        .collect::<Result<_>>()?;
    let summary = t_interval(&estimates, 0.95);
    Ok(PhaseDiagramRow {
        p,
        lambda_c_hat: summary.mean,
        ci_low: summary.ci.lo.max(0.0),
        ci_high: summary.ci.hi.min(1.0),
        d: cfg.d,
        geometry: "torus".into(),
        size: cfg.size,
        n,
        replicates: cfg.replicates,
        tol: cfg.tol,
    })
}

/// One row per grid point; row `j` uses `rng.child(j)`.
pub fn phase_diagram(grid: &[f64], cfg: &LambdaCConfig, rng: &RandomSource) -> Result<Vec<PhaseDiagramRow>> {
    if grid.is_empty() {
        return Err(Error::param("empty p grid"));
    }
    grid.iter()
        .enumerate()
        .map(|(j, &p)| lambda_c_estimate(p, cfg, &rng.child(j as u64)))
        .collect()
}

pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Internal(format!("csv buffer: {e}")))
}

pub fn rows_from_csv<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>> {
    csv::Reader::from_reader(bytes).deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    rows_from_csv(&bytes)
}

/// Plot of `λ̂_c` against `p` with the lines `λ = p/(2d-1)`, the bond
/// threshold and, for `d >= 3`, the honeycomb threshold.
pub fn render_phase_svg(rows: &[PhaseDiagramRow], d: usize) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const M: f64 = 60.0;
    let x = |p: f64| M + p * (W - 2.0 * M);
    let y = |l: f64| H - M - l * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M {x0} {y0} H {x1} M {x0} {y0} V {y1}" stroke="black" fill="none"/>"#,
        x0 = x(0.0),
        y0 = y(0.0),
        x1 = x(1.0),
        y1 = y(1.0)
    );
    for t in 0..=4 {
        let v = t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{v:.2}</text>"#,
            x(v),
            y(0.0) + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="end">{v:.2}</text>"#,
            x(0.0) - 6.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">p</text>"#, W / 2.0, H - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" font-size="14" text-anchor="middle" transform="rotate(-90 18 {:.1})">lambda</text>"#,
        H / 2.0,
        H / 2.0
    );

    let mut refs: Vec<(&str, &str, f64, f64)> = vec![("lower", "#1f77b4", 0.0, 1.0 / (2.0 * d as f64 - 1.0))];
    if let Some(b) = bond_threshold(d) {
        refs.push(("bond", "#2ca02c", b, b));
    }
    if d >= 3 {
        let h = hex_threshold();
        refs.push(("hex", "#d62728", h, h));
    }
    for (name, color, a, b) in &refs {
        let _ = writeln!(
            s,
            r#"<polyline class="reference" data-name="{name}" points="{:.2},{:.2} {:.2},{:.2}" stroke="{color}" stroke-dasharray="6 4" fill="none"/>"#,
            x(0.0),
            y(*a),
            x(1.0),
            y(*b)
        );
    }
    for r in rows {
        let _ = writeln!(
            s,
            r#"<line class="ci" x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
            y(r.ci_low),
            y(r.ci_high),
            px = x(r.p)
        );
        let _ = writeln!(
            s,
            r#"<circle class="estimate" cx="{:.2}" cy="{:.2}" r="3" fill="black"/>"#,
            x(r.p),
            y(r.lambda_c_hat)
        );
    }
    s.push_str("</svg>\n");
    s
}
