use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{alpha, RecurrenceConstants, ScaleLadder};
use crate::cluster::{annulus_circuit_absent, one_arm};
use crate::error::{check_probability_closed, Error, Result};
use crate::lattice::{Boundary, EdgeConfig, LatticeSpec};
use crate::model::{sample_model, ModelParams};
use crate::rng::{mix64, RandomSource};
use crate::stats::{fit_line, t_quantile, wilson, Interval, Z95};

pub const QK_SCHEMA: &str = "alignperc.qk/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventFamily {
    /// No open circuit in `B(x, 10L) \ B(x, L)` surrounds `B(x, L)` (d = 2).
    CircuitAbsent,
    /// `B(x, L)` is joined to `∂B(x, 10L)` inside `B(x, 10L)`.
    OneArm,
}

impl EventFamily {
    pub fn holds(self, edges: &EdgeConfig, x: usize, l: f64) -> Result<bool> {
        match self {
            Self::CircuitAbsent => annulus_circuit_absent(edges, x, l),
            Self::OneArm => one_arm(edges, x, l),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::CircuitAbsent => "circuit_absent",
            Self::OneArm => "one_arm",
        }
    }
}

impl std::str::FromStr for EventFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circuit_absent" => Ok(Self::CircuitAbsent),
            "one_arm" => Ok(Self::OneArm),
            _ => Err(Error::param(format!("unknown event family {s:?}"))),
        }
    }
}

/// Simulation box around the evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QkGeometry {
    pub boundary: Boundary,
    /// Extra layers beyond `⌊10 L_k⌋`; `None` means `⌈2 L_k⌉`.
    pub margin: Option<i64>,
    /// Offset of the evaluation point from the box centre (torus only).
    pub shift: Vec<i64>,
    /// Cap on the memory of the samples alive at once.
    pub memory_budget: u64,
}

impl Default for QkGeometry {
    fn default() -> Self {
        Self {
            boundary: Boundary::OccupiedFrame,
            margin: None,
            shift: Vec::new(),
            memory_budget: 2 << 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEstimate {
    pub schema: String,
    pub family: EventFamily,
    pub k: usize,
    pub l_k: f64,
    pub p: f64,
    pub lambda: f64,
    pub d: usize,
    pub boundary: Boundary,
    pub n: u64,
    pub successes: u64,
    pub estimate: f64,
    pub ci: Interval,
    pub master_seed: u64,
    pub stream: u64,
}

impl EventEstimate {
    /// Estimate with a Wilson interval from raw counts.
    #[allow(clippy::too_many_arguments)]
    pub fn from_counts(
        family: EventFamily,
        k: usize,
        l_k: f64,
        params: ModelParams,
        d: usize,
        boundary: Boundary,
        n: u64,
        successes: u64,
        rng: &RandomSource,
    ) -> Self {
        Self {
            schema: QK_SCHEMA.to_string(),
            family,
            k,
            l_k,
            p: params.p,
            lambda: params.lambda,
            d,
            boundary,
            n,
            successes,
            estimate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
            ci: wilson(successes, n, Z95),
            master_seed: rng.master,
            stream: rng.stream,
        }
    }

    fn same_model(&self, other: &EventEstimate) -> bool {
        self.family == other.family
            && self.p == other.p
            && self.lambda == other.lambda
            && self.d == other.d
            && self.boundary == other.boundary
    }
}

/// Box side and evaluation site for level `k`.
fn qk_lattice(l: f64, d: usize, geom: &QkGeometry) -> Result<(LatticeSpec, Vec<i64>)> {
    let margin = geom.margin.unwrap_or_else(|| (2.0 * l).ceil() as i64);
    if margin < 0 || (geom.boundary == Boundary::OccupiedFrame && margin < 1) {
        return Err(Error::param(format!("margin {margin} leaves the event region touching the frame")));
    }
    if geom.boundary == Boundary::Closed {
        return Err(Error::param("level events need a torus or occupied_frame box"));
    }
    if !geom.shift.is_empty() && (geom.shift.len() != d || geom.boundary != Boundary::Torus) {
        return Err(Error::param("a shifted evaluation point needs a torus of matching dimension"));
    }
    let r = (10.0 * l).floor() as i64 + margin;
    let side = 2 * r as u64 + 1;
    let sites = (side as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    let footprint = sites.saturating_mul(LatticeSpec::footprint_per_site(d) as u128);
    let alive = footprint.saturating_mul(rayon::current_num_threads() as u128);
    if alive > geom.memory_budget as u128 || sites > usize::MAX as u128 / 64 {
        return Err(Error::Size {
            what: format!("level sample box of side {side} in d = {d} (shrink L0 or raise the memory budget)"),
            requested: alive.min(u64::MAX as u128) as u64,
            limit: geom.memory_budget,
        });
    }
    let spec = LatticeSpec::cube(d, side as usize, geom.boundary)?;
    let center: Vec<i64> = (0..d)
        .map(|a| {
            let s = geom.shift.get(a).copied().unwrap_or(0);
            (r + s).rem_euclid(side as i64)
        })
        .collect();
    Ok((spec, center))
}

/// `q̂_k`: fraction of `n` independent boxes where the level-`k` event holds
/// at the evaluation point. Replicate `i` uses `rng.child(i)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_qk(
    family: EventFamily,
    ladder: &ScaleLadder,
    k: usize,
    params: ModelParams,
    d: usize,
    n: u64,
    rng: &RandomSource,
) -> Result<EventEstimate> {
    estimate_qk_at(family, ladder, k, params, d, n, rng, &QkGeometry::default())
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_qk_at(
    family: EventFamily,
    ladder: &ScaleLadder,
    k: usize,
    params: ModelParams,
    d: usize,
    n: u64,
    rng: &RandomSource,
    geom: &QkGeometry,
) -> Result<EventEstimate> {
    if family == EventFamily::CircuitAbsent && d != 2 {
        return Err(Error::param("circuit events are defined for d = 2"));
    }
    let l = ladder.level(k)?;
    let (spec, center) = qk_lattice(l, d, geom)?;
    let x = spec.index_signed(&center).expect("centre inside box");
    let successes = (0..n)
        .into_par_iter()
        .map(|i| -> Result<u64> {
            let sample = sample_model(&spec, params, &rng.child(i))?;
            Ok(family.holds(&sample.edges, x, l)? as u64)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(EventEstimate::from_counts(
        family,
        k,
        l,
        params,
        d,
        geom.boundary,
        n,
        successes,
        rng,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceReport {
    pub k: usize,
    pub l_k: f64,
    /// Upper CI of `q_{k+1}`.
    pub lhs: f64,
    /// Upper CI of `q_k`.
    pub q_k_upper: f64,
    /// `c0 L_k^{d-1} q_k^2` at the upper endpoint.
    pub main_term: f64,
    /// `c1 L_k^{2d-2} e^{-3α L_k^{3/2}}`.
    pub error_term: f64,
    pub ln_error_term: f64,
    /// The error term is below the smallest positive double.
    pub error_underflow: bool,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
    /// Verdict with point estimates on both sides, for reference.
    pub point_pass: bool,
    /// `4⌊L_{k+1}⌋ - 20 L_k >= 3 L_{k+1}`, assumed by the error term.
    pub separation_premise: bool,
}

/// Conservative check of
/// `q_{k+1} <= c0 L_k^{d-1} q_k^2 + c1 L_k^{2d-2} e^{-3α(p) L_k^{3/2}}`:
/// upper CI of `q_{k+1}` against the bound at the upper CI of `q_k`.
pub fn recurrence_check(
    q_k: &EventEstimate,
    q_k1: &EventEstimate,
    consts: &RecurrenceConstants,
    ladder: &ScaleLadder,
) -> Result<RecurrenceReport> {
    if !q_k.same_model(q_k1) {
        return Err(Error::param("estimates were taken under different parameters"));
    }
    if q_k1.k != q_k.k + 1 {
        return Err(Error::param(format!("levels {} and {} are not consecutive", q_k.k, q_k1.k)));
    }
    if consts.d != q_k.d {
        return Err(Error::param("constants are for another dimension"));
    }
    let k = q_k.k;
    let l = ladder.level(k)?;
    let l1 = ladder.level(k + 1)?;
    let d = consts.d as i32;
    let ln_error_term = consts.ln_error_term(l, alpha(q_k.p));
    let error_term = ln_error_term.exp();
    let main = |q: f64| consts.c0 * l.powi(d - 1) * q * q;
    let main_term = main(q_k.ci.hi);
    let bound = main_term + error_term;
    let lhs = q_k1.ci.hi;
    Ok(RecurrenceReport {
        k,
        l_k: l,
        lhs,
        q_k_upper: q_k.ci.hi,
        main_term,
        error_term,
        ln_error_term,
        error_underflow: error_term == 0.0,
        bound,
        slack: bound - lhs,
        pass: lhs <= bound,
        point_pass: q_k1.estimate <= main(q_k.estimate) + error_term,
        separation_premise: 4.0 * l1.floor() - 20.0 * l >= 3.0 * l1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelVerdict {
    pub k: usize,
    pub l_k: f64,
    pub upper: f64,
    /// `L_k^{-2d}`.
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductiveReport {
    pub levels: Vec<LevelVerdict>,
    pub first_failure: Option<usize>,
    pub pass: bool,
}

/// `q_k <= L_k^{-2d}` at the upper CI, level by level.
pub fn inductive_decay_check(estimates: &[EventEstimate], ladder: &ScaleLadder, d: usize) -> Result<InductiveReport> {
    let first = estimates.first().ok_or_else(|| Error::param("no estimates"))?;
    for (i, e) in estimates.iter().enumerate() {
        if e.k != first.k + i {
            return Err(Error::param(format!("levels are not consecutive at level {}", e.k)));
        }
        if !e.same_model(first) || e.d != d {
            return Err(Error::param("estimates were taken under different parameters"));
        }
    }
    let levels: Vec<LevelVerdict> = estimates
        .iter()
        .map(|e| {
            let l = ladder.level(e.k)?;
            let threshold = l.powi(-2 * d as i32);
            Ok(LevelVerdict {
                k: e.k,
                l_k: l,
                upper: e.ci.hi,
                threshold,
                pass: e.ci.hi <= threshold,
            })
        })
        .collect::<Result<_>>()?;
    let first_failure = levels.iter().find(|v| !v.pass).map(|v| v.k);
    Ok(InductiveReport {
        pass: first_failure.is_none(),
        levels,
        first_failure,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiEstimate {
    pub lambda: f64,
    pub d: usize,
    pub radii: Vec<i64>,
    pub successes: Vec<u64>,
    pub n: u64,
    /// Slope of `-ln P̂(o ↔ ∂B(o, R))` against `R`; infinite at `λ = 0`.
    pub psi: f64,
    pub ci: Interval,
    pub r_squared: f64,
    pub infinite: bool,
}

/// Largest `‖z‖∞` reached by the open cluster of the origin in Bernoulli
/// bond percolation, explored inside `B(o, r_max)`. Edge states come from
/// hashing `(seed, edge)`, so only visited edges are ever drawn.
fn cluster_reach(d: usize, r_max: i64, lambda: f64, seed: u64, visited: &mut [bool], stack: &mut Vec<usize>) -> i64 {
    let side = 2 * r_max + 1;
    let threshold = (lambda * (1u64 << 53) as f64) as u64;
    let open = |site: usize, axis: usize| -> bool { (mix64(seed ^ mix64((site * d + axis) as u64)) >> 11) < threshold };
    let stride: Vec<usize> = (0..d).map(|a| (side as usize).pow(a as u32)).collect();
    let coord = |s: usize, a: usize| (s / stride[a]) as i64 % side - r_max;
    stack.clear();
    let origin: usize = stride.iter().map(|s| s * r_max as usize).sum();
    visited[origin] = true;
    stack.push(origin);
    let mut reach = 0;
    let mut touched = vec![origin];
    while let Some(s) = stack.pop() {
        let norm = (0..d).map(|a| coord(s, a).abs()).max().unwrap_or(0);
        reach = reach.max(norm);
        if reach == r_max {
            break;
        }
        for a in 0..d {
            let c = coord(s, a);
            for (nb, edge_site) in [(s + stride[a], s), (s.wrapping_sub(stride[a]), s.wrapping_sub(stride[a]))] {
                let inside = if nb > s { c < r_max } else { c > -r_max };
                if inside && !visited[nb] && open(edge_site, a) {
                    visited[nb] = true;
                    touched.push(nb);
                    stack.push(nb);
                }
            }
        }
    }
    for t in touched {
        visited[t] = false;
    }
    reach
}

/// Fits `-ln P̂(o ↔ ∂B(o, R)) ≈ ψ R + c` over `radii` for Bernoulli bond
/// percolation at `lambda`.
pub fn estimate_psi(lambda: f64, d: usize, radii: &[i64], n: u64, rng: &RandomSource) -> Result<PsiEstimate> {
    check_probability_closed("lambda", lambda)?;
    if radii.len() < 2 || radii.iter().any(|&r| r < 1) {
        return Err(Error::param("need at least two radii >= 1"));
    }
    if d < 2 || n == 0 {
        return Err(Error::param("need d >= 2 and n >= 1"));
    }
    let r_max = *radii.iter().max().expect("nonempty");
    let side = (2 * r_max + 1) as usize;
    let volume = side.checked_pow(d as u32).filter(|&v| v <= 1 << 28).ok_or_else(|| Error::Size {
        what: "one-arm exploration box".into(),
        requested: side as u64,
        limit: 1 << 28,
    })?;
    let reaches: Vec<i64> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![false; volume], Vec::new()),
            |(visited, stack), i| cluster_reach(d, r_max, lambda, rng.child(i).seed(), visited, stack),
        )
        .collect();
    let successes: Vec<u64> = radii
        .iter()
        .map(|&r| reaches.iter().filter(|&&m| m >= r).count() as u64)
        .collect();
    let mut out = PsiEstimate {
        lambda,
        d,
        radii: radii.to_vec(),
        successes: successes.clone(),
        n,
        psi: f64::INFINITY,
        ci: Interval {
            lo: f64::INFINITY,
            hi: f64::INFINITY,
        },
        r_squared: 1.0,
        infinite: true,
    };
    if lambda == 0.0 {
        return Ok(out);
    }
    if let Some(j) = successes.iter().position(|&s| s == 0) {
        return Err(Error::FitQuality(format!(
            "no arm reached radius {} in {n} samples; lower the radii or raise n",
            radii[j]
        )));
    }
    let x: Vec<f64> = radii.iter().map(|&r| r as f64).collect();
    let y: Vec<f64> = successes.iter().map(|&s| -(s as f64 / n as f64).ln()).collect();
    let fit = fit_line(&x, &y);
    if !(fit.slope > 0.0) || fit.r_squared < 0.9 {
        return Err(Error::FitQuality(format!(
            "decay fit slope {:.4}, R^2 {:.4}; λ may be too close to critical",
            fit.slope, fit.r_squared
        )));
    }
    let half = if radii.len() > 2 {
        t_quantile(radii.len() as f64 - 2.0, 0.95) * fit.slope_se
    } else {
        f64::NAN
    };
    out.psi = fit.slope;
    out.ci = Interval {
        lo: fit.slope - half,
        hi: fit.slope + half,
    };
    out.r_squared = fit.r_squared;
    out.infinite = false;
    Ok(out)
}
