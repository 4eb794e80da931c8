//! Small statistics toolkit shared by the estimators.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal, StudentsT};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Merges shard sums pairwise in a fixed tree order, so the result depends
/// only on the shard contents.
pub fn pairwise_merge(mut shards: Vec<CompensatedSum>) -> CompensatedSum {
    if shards.is_empty() {
        return CompensatedSum::new();
    }
    while shards.len() > 1 {
        let mut next = Vec::with_capacity(shards.len().div_ceil(2));
        for chunk in shards.chunks(2) {
            let mut a = chunk[0];
            if let Some(b) = chunk.get(1) {
                a.merge(b);
            }
            next.push(a);
        }
        shards = next;
    }
    shards[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(successes: u64, n: u64, z: f64) -> Interval {
    if n == 0 {
        return Interval { lo: 0.0, hi: 1.0 };
    }
    let nf = n as f64;
    let ph = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (ph + z2 / (2.0 * nf)) / denom;
    let half = z * (ph * (1.0 - ph) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Interval {
        lo: if successes == 0 { 0.0 } else { (center - half).max(0.0) },
        hi: if successes == n { 1.0 } else { (center + half).min(1.0) },
    }
}

/// Normal quantile for two-sided coverage `level`.
pub fn z_for_level(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci: Interval,
}

/// Two-sided Student-t quantile with `df` degrees of freedom.
pub fn t_quantile(df: f64, level: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("valid degrees of freedom")
        .inverse_cdf(0.5 + level / 2.0)
}

/// Mean with a Student-t interval at coverage `level`.
pub fn t_interval(values: &[f64], level: f64) -> MeanSummary {
    let n = values.len();
    let mut s = CompensatedSum::new();
    values.iter().for_each(|&v| s.add(v));
    let mean = s.value() / n as f64;
    if n < 2 {
        return MeanSummary {
            n,
            mean,
            sd: f64::NAN,
            ci: Interval { lo: mean, hi: mean },
        };
    }
    let mut ss = CompensatedSum::new();
    values.iter().for_each(|&v| ss.add((v - mean).powi(2)));
    let sd = (ss.value() / (n as f64 - 1.0)).sqrt();
    let t = t_quantile(n as f64 - 1.0, level);
    let half = t * sd / (n as f64).sqrt();
    MeanSummary {
        n,
        mean,
        sd,
        ci: Interval {
            lo: mean - half,
            hi: mean + half,
        },
    }
}

/// Distribution-free interval for the median from order statistics:
/// `[x_(j), x_(n+1-j)]` with the largest `j` giving coverage ≥ `level`.
pub fn median_interval(sorted: &[f64], level: f64) -> Interval {
    let n = sorted.len();
    assert!(n > 0, "median of empty sample");
    if n < 6 {
        return Interval {
            lo: sorted[0],
            hi: sorted[n - 1],
        };
    }
    let b = Binomial::new(0.5, n as u64).expect("valid binomial");
    // coverage of [x_(j), x_(n+1-j)] (1-based) is 1 - 2 P(Bin <= j-1)
    let mut j = 1usize;
    while j < n / 2 && 1.0 - 2.0 * b.cdf(j as u64) >= level {
        j += 1;
    }
    Interval {
        lo: sorted[j - 1],
        hi: sorted[n - j],
    }
}

pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Bisection for the 1/2 point of the empirical curve
/// `λ -> #{t < λ} / n` built from per-sample thresholds.
pub fn bisect_half(thresholds: &[f64], tol: f64) -> crate::error::Result<(f64, usize)> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let f = |l: f64| thresholds.iter().filter(|&&t| t < l).count() as f64 / thresholds.len() as f64 - 0.5;
    if f(lo) >= 0.0 || f(next_up(hi)) < 0.0 {
        return Err(crate::error::Error::Bracketing(format!(
            "crossing fraction {} at 0 and {} at 1",
            f(lo) + 0.5,
            f(next_up(hi)) + 0.5
        )));
    }
    let mut steps = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    Ok((0.5 * (lo + hi), steps))
}

fn next_up(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

/// Ordinary least-squares line fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|&a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|&b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_se = if x.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LineFit {
        slope,
        intercept,
        slope_se,
        r_squared,
    }
}

/// Joint counts of two indicator events over `n` shared samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub n: u64,
    pub a: u64,
    pub b: u64,
    pub ab: u64,
}

impl PairCounts {
    pub fn push(&mut self, a: bool, b: bool) {
        self.n += 1;
        self.a += a as u64;
        self.b += b as u64;
        self.ab += (a && b) as u64;
    }

    pub fn merge(&mut self, o: &PairCounts) {
        self.n += o.n;
        self.a += o.a;
        self.b += o.b;
        self.ab += o.ab;
    }

    /// Plug-in covariance `P(A∩B) - P(A)P(B)`.
    pub fn covariance(&self) -> f64 {
        let n = self.n as f64;
        self.ab as f64 / n - (self.a as f64 / n) * (self.b as f64 / n)
    }

    /// Delta-method standard error of [`covariance`](Self::covariance):
    /// the influence of one sample is `(A - pA)(B - pB) - Cov`.
    pub fn covariance_se(&self) -> f64 {
        let n = self.n as f64;
        let pa = self.a as f64 / n;
        let pb = self.b as f64 / n;
        let pab = self.ab as f64 / n;
        let c = pab - pa * pb;
        // E[((A-pA)(B-pB))^2] over the four cells of the joint table.
        let cells = [
            (pab, (1.0 - pa) * (1.0 - pb)),
            (pa - pab, (1.0 - pa) * (-pb)),
            (pb - pab, (-pa) * (1.0 - pb)),
            (1.0 - pa - pb + pab, pa * pb),
        ];
        let m2: f64 = cells.iter().map(|&(w, v)| w * v * v).sum();
        ((m2 - c * c).max(0.0) / n).sqrt()
    }

    /// Sample correlation of the two indicators; 0 if either is constant.
    pub fn correlation(&self) -> f64 {
        let n = self.n as f64;
        let pa = self.a as f64 / n;
        let pb = self.b as f64 / n;
        let v = pa * (1.0 - pa) * pb * (1.0 - pb);
        if v <= 0.0 {
            0.0
        } else {
            self.covariance() / v.sqrt()
        }
    }
}
