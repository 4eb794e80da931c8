use serde::{Deserialize, Serialize};

use super::ScaleLadder;
use crate::error::Result;

/// Exhaustive coverage checks stop beyond this abscissa.
const MAX_CHECKED_ABSCISSA: i64 = 200_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalflineLevel {
    pub k: usize,
    pub l_k: f64,
    /// Abscissae `x_{k,i} = ⌈10 L_k⌉ + (i-1) 2⌊L_k⌋` for `i = 1..=s_k`.
    pub points: Vec<i64>,
    pub s_k: usize,
    /// `5 L_k^{1/2}`.
    pub s_bound: f64,
    pub s_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalflineReport {
    pub levels: Vec<HalflineLevel>,
    /// Boxes cover every abscissa in `(⌊10 L_0⌋, covered_to]`.
    pub covered_to: i64,
    pub coverage_ok: bool,
    /// Consecutive boxes of a level share their boundary column.
    pub adjacency_ok: bool,
    /// `Σ_k 5 L_k^{-7/2}` over the ladder.
    pub summability: f64,
}

/// Boxes `B(x_{k,i}, L_k)` along the positive first axis for
/// `k = 0..kmax`; `s_k` needs level `k + 1`, so the ladder must reach
/// `kmax + 1`.
pub fn halfline_cover(ladder: &ScaleLadder, kmax: usize) -> Result<HalflineReport> {
    ladder.level(kmax + 1)?;
    let first = |l: f64| (10.0 * l).ceil() as i64;
    let mut levels = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let l = ladder.level(k)?;
        let step = 2 * l.floor() as i64;
        let target = first(ladder.level(k + 1)?);
        let mut points = vec![first(l)];
        while *points.last().expect("nonempty") < target {
            points.push(points.last().expect("nonempty") + step);
        }
        let s_bound = 5.0 * l.sqrt();
        levels.push(HalflineLevel {
            k,
            l_k: l,
            s_k: points.len(),
            s_ok: points.len() as f64 <= s_bound,
            s_bound,
            points,
        });
    }

    // intervals [x - ⌊L⌋, x + ⌊L⌋] in order of appearance
    let mut intervals: Vec<(i64, i64)> = Vec::new();
    let mut adjacency_ok = true;
    for lv in &levels {
        let r = lv.l_k.floor() as i64;
        for w in lv.points.windows(2) {
            adjacency_ok &= (w[0] + r) == (w[1] - r);
        }
        intervals.extend(lv.points.iter().map(|&x| (x - r, x + r)));
    }
    let start = (10.0 * ladder.level(0)?).floor() as i64 + 1;
    let end = intervals.iter().map(|iv| iv.1).max().unwrap_or(start).min(MAX_CHECKED_ABSCISSA);
    intervals.sort_unstable();
    let mut covered_to = start - 1;
    let mut coverage_ok = true;
    // sweep every integer abscissa; the sorted intervals are consumed in order
    let mut idx = 0;
    let mut best = i64::MIN;
    for x in start..=end {
        while idx < intervals.len() && intervals[idx].0 <= x {
            best = best.max(intervals[idx].1);
            idx += 1;
        }
        if best < x {
            coverage_ok = false;
            break;
        }
        covered_to = x;
    }
    let summability = ladder.levels().iter().map(|l| 5.0 * l.powf(-3.5)).sum();
    Ok(HalflineReport {
        levels,
        covered_to,
        coverage_ok,
        adjacency_ok,
        summability,
    })
}
