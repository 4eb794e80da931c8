//! Multiscale machinery: the scale ladder `L_{k+1} = L_k^{3/2}`, covering
//! nets of box boundaries, estimates of the level-`k` seed probabilities
//! `q_k`, the recurrence and inductive-step checkers, and the two triggers.
//!
//! # Constants
//!
//! The recurrence `q_{k+1} <= c0 L_k^{d-1} q_k^2 + c1 L_k^{2d-2} e^{-3α L_k^{3/2}}`
//! is instantiated with constants derived from explicit bounds, never
//! tuned:
//!
//! * Covering size. The greedy net on `∂B(o, R)` has at most
//!   `|∂B(o, R)| / ⌊L_k/2⌋^{d-1}` points and
//!   `|∂B(o, R)| <= 2d (2⌊R⌋+1)^{d-1}`. For the larger sphere,
//!   `R = 5 L_{k+1}`, use `2⌊5L_{k+1}⌋ + 1 <= 11 L_{k+1}` and
//!   `⌊L_k/2⌋ >= L_k/4` (valid for `L_k >= 2`). Hence
//!   `|cover| <= c3 (L_{k+1}/L_k)^{d-1}` with `c3 = 2d · 44^{d-1}`.
//! * Correlation of two level-`k` events on boxes of radius `10 L_k`:
//!   `4 (2·10L_k + 1)^{d-1} <= c2 L_k^{d-1}` with `c2 = 4 · 21^{d-1}`.
//! * `c0 = c3^2`, `c1 = c3^2 · c2`.
//!
//! For `d = 2`: `c3 = 176`, `c2 = 84`, `c0 = 30976`, `c1 = 2601984`.
//!
//! The error term assumes the two boxes are at distance
//! `4⌊L_{k+1}⌋ - 20 L_k >= 3 L_{k+1}`, which only holds once `L_k` is
//! large; reports carry that premise as a flag.

mod cover;
mod estimate;
mod halfline;

pub use cover::{cascade_witness, cover_sets, CoverBounds, CoverSet, CoverTarget};
pub use estimate::{
    estimate_psi, estimate_qk, estimate_qk_at, inductive_decay_check, recurrence_check, EventEstimate, EventFamily,
    InductiveReport, LevelVerdict, PsiEstimate, QkGeometry, RecurrenceReport, QK_SCHEMA,
};
pub use halfline::{halfline_cover, HalflineLevel, HalflineReport};

use serde::{Deserialize, Serialize};

use crate::error::{check_probability_closed, Error, Result};

/// Critical probability of bond percolation on the square lattice.
pub const BOND_THRESHOLD_2D: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    l0: f64,
    levels: Vec<f64>,
}

/// `L_k` for `k = 0..=kmax`, built by `L_{k+1} = L_k · sqrt(L_k)`.
pub fn ladder(l0: f64, kmax: usize) -> Result<ScaleLadder> {
    if !(l0 >= 2.0) || !l0.is_finite() {
        return Err(Error::param(format!("L0 must be a finite value >= 2, got {l0}")));
    }
    let mut levels = vec![l0];
    for k in 0..kmax {
        let l = levels[k];
        let next = l * l.sqrt();
        if !next.is_finite() {
            return Err(Error::Range {
                msg: format!("L_{} overflows", k + 1),
                max_usable: k,
            });
        }
        levels.push(next);
    }
    Ok(ScaleLadder { l0, levels })
}

impl ScaleLadder {
    pub fn l0(&self) -> f64 {
        self.l0
    }

    pub fn kmax(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> Result<f64> {
        self.levels.get(k).copied().ok_or_else(|| Error::Range {
            msg: format!("level {k} not on the ladder"),
            max_usable: self.kmax(),
        })
    }
}

/// `α(p) = -ln(1 - p)`, infinite at `p = 1`.
pub fn alpha(p: f64) -> f64 {
    -(-p).ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceConstants {
    pub d: usize,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl RecurrenceConstants {
    /// Constants from the covering and correlation bounds (module docs).
    pub fn derived(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::param(format!("dimension must be >= 2, got {d}")));
        }
        let c3 = 2.0 * d as f64 * 44f64.powi(d as i32 - 1);
        let c2 = 4.0 * 21f64.powi(d as i32 - 1);
        Ok(Self::explicit(d, c3 * c3, c3 * c3 * c2, c2, c3))
    }

    pub fn explicit(d: usize, c0: f64, c1: f64, c2: f64, c3: f64) -> Self {
        Self { d, c0, c1, c2, c3 }
    }

    /// `ln` of the recurrence error term `c1 L^{2d-2} e^{-3α L^{3/2}}`.
    pub fn ln_error_term(&self, l: f64, alpha: f64) -> f64 {
        self.c1.ln() + (2.0 * self.d as f64 - 2.0) * l.ln() - 3.0 * alpha * l.powf(1.5)
    }
}

/// Diagnostics of the two level conditions at one scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KZeroLevel {
    pub k: usize,
    pub l: f64,
    /// `c0 / L`.
    pub first: f64,
    /// `ln(c1 L^{5d-2} e^{-3α L^{3/2}})`.
    pub ln_second: f64,
}

fn k0_levels(p: f64, consts: &RecurrenceConstants, ladder: &ScaleLadder) -> Vec<KZeroLevel> {
    let a = alpha(p);
    let d = consts.d as f64;
    ladder
        .levels()
        .iter()
        .enumerate()
        .map(|(k, &l)| KZeroLevel {
            k,
            l,
            first: consts.c0 / l,
            ln_second: consts.c1.ln() + (5.0 * d - 2.0) * l.ln() - 3.0 * a * l.powf(1.5),
        })
        .collect()
}

/// Smallest ladder level with `c0/L_k <= 1/2` and
/// `c1 L_k^{5d-2} e^{-3α L_k^{3/2}} <= 1/2`, evaluated in log space.
pub fn k0(p: f64, consts: &RecurrenceConstants, ladder: &ScaleLadder) -> Result<usize> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(format!("p must lie in (0,1], got {p}")));
    }
    let levels = k0_levels(p, consts, ladder);
    levels
        .iter()
        .find(|lv| lv.first <= 0.5 && lv.ln_second <= 0.5f64.ln())
        .map(|lv| lv.k)
        .ok_or_else(|| {
            let last = levels.last().expect("ladder has a level");
            Error::NotFound(format!(
                "no k <= {} meets both conditions; at L = {:.4e}: c0/L = {:.4e}, ln(second) = {:.4e}",
                ladder.kmax(),
                last.l,
                last.first,
                last.ln_second
            ))
        })
}

/// Number of edges with at least one endpoint in a cube of side `m`:
/// `d m^{d-1} (m + 1)`.
pub fn edges_touching_cube(d: usize, m: u64) -> Result<u128> {
    let m = m as u128;
    (0..d - 1)
        .try_fold(1u128, |acc, _| acc.checked_mul(m))
        .and_then(|v| v.checked_mul(d as u128))
        .and_then(|v| v.checked_mul(m + 1))
        .ok_or_else(|| Error::param("edge count overflows"))
}

/// Side `2⌊R⌋ + 1` of `B(o, R)`.
pub fn box_side(r: f64) -> u64 {
    2 * r.floor() as u64 + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaZeroTrigger {
    pub k0: usize,
    pub l_k0: f64,
    /// Edges with an endpoint in `B(o, 10 L_{k0})`.
    pub edges: u128,
    pub lambda0: f64,
    /// `1 - λ0`, kept separately since `λ0` rounds to 1 at realistic scales.
    pub one_minus_lambda0: f64,
    /// Guaranteed bound on `q_{k0}` for `λ >= λ0`: `L_{k0}^{-4}`.
    pub threshold: f64,
}

/// `λ0 = (1 - L_{k0}^{-4})^{1/N}`: with every edge near the box open the
/// circuit surely exists, and that has probability at least `λ^N`.
pub fn lambda0_trigger(p: f64, d: usize, ladder: &ScaleLadder, consts: &RecurrenceConstants) -> Result<LambdaZeroTrigger> {
    if d != 2 {
        return Err(Error::param("the circuit trigger is defined for d = 2"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param(format!("p must lie in (0,1), got {p}")));
    }
    let k0 = k0(p, consts, ladder)?;
    let l = ladder.level(k0)?;
    let edges = edges_touching_cube(d, box_side(10.0 * l))?;
    let threshold = l.powi(-4);
    let log_lambda0 = (-threshold).ln_1p() / edges as f64;
    Ok(LambdaZeroTrigger {
        k0,
        l_k0: l,
        edges,
        lambda0: log_lambda0.exp(),
        one_minus_lambda0: -log_lambda0.exp_m1(),
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PZeroTrigger {
    /// First level where the bond one-arm bound is at most `L^{-2d}/2`.
    pub k_tilde0: usize,
    /// Level condition at `p = 1/2`, the worst case for `p >= 1/2`.
    pub k0: usize,
    pub k1: usize,
    pub l_k1: f64,
    /// Sites of `B(o, 10 L_{k1})`.
    pub volume: u128,
    pub p0: f64,
    pub one_minus_p0: f64,
}

/// Prefactor of the one-arm bound: `|∂B(o, L)| <= 2d · 3^{d-1} L^{d-1}`
/// for `L >= 1`.
pub fn one_arm_prefactor(d: usize) -> f64 {
    2.0 * d as f64 * 3f64.powi(d as i32 - 1)
}

/// `k1 = max(k̃0, k0)` and `p0 = (1 - L_{k1}^{-2d}/2)^{1/|V|}`.
pub fn p0_trigger(
    lambda: f64,
    d: usize,
    ladder: &ScaleLadder,
    consts: &RecurrenceConstants,
    psi_hat: f64,
) -> Result<PZeroTrigger> {
    check_probability_closed("lambda", lambda)?;
    if !(psi_hat > 0.0) {
        return Err(Error::param(format!("psi must be > 0, got {psi_hat}")));
    }
    let c = one_arm_prefactor(d);
    let dd = d as f64;
    let k_tilde0 = ladder
        .levels()
        .iter()
        .position(|&l| {
            if psi_hat.is_infinite() {
                return true;
            }
            c.ln() + (dd - 1.0) * l.ln() - psi_hat * l <= 0.5f64.ln() - 2.0 * dd * l.ln()
        })
        .ok_or_else(|| Error::NotFound(format!("bond bound not reached by k = {}", ladder.kmax())))?;
    let k0 = k0(0.5, consts, ladder)?;
    let k1 = k_tilde0.max(k0);
    let l = ladder.level(k1)?;
    let side = box_side(10.0 * l) as u128;
    let volume = (0..d)
        .try_fold(1u128, |acc, _| acc.checked_mul(side))
        .ok_or_else(|| Error::param("volume overflows"))?;
    let log_p0 = (-0.5 * l.powi(-2 * d as i32)).ln_1p() / volume as f64;
    Ok(PZeroTrigger {
        k_tilde0,
        k0,
        k1,
        l_k1: l,
        volume,
        p0: log_p0.exp(),
        one_minus_p0: -log_p0.exp_m1(),
    })
}
