//! Rank statistics and resampling.
//!
//! Spearman uses average ranks for ties, Kendall uses tau-b. The exact
//! permutation test enumerates every ordering of one vector, so its p-values
//! are multiples of `1/n!` and never zero.

mod bootstrap;
mod ceiling;

pub use bootstrap::{bootstrap_rsa, percentile, BootstrapCI, MAX_REDRAWS};
pub use ceiling::{split_half_ceiling, NoiseCeiling};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when comparing permuted tau values against the observed one.
pub const PERMUTATION_EPS: f64 = 1e-12;

/// Largest input length accepted by [`exact_permutation_test`] (8! = 40320).
pub const MAX_EXACT_N: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {min} values, got {len}")]
    TooShort { len: usize, min: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("exact permutation test limited to n <= {max}, got n = {n}")]
    TooLarge { n: usize, max: usize },
    #[error("Spearman-Brown correction undefined at r = {0} (requires -1 < r <= 1)")]
    Singular(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("resample {index}: no usable draw after {attempts} attempts")]
    ResampleCap { index: usize, attempts: usize },
}

/// A finite-valued vector of scores ready for rank statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RankVector(Vec<f64>);

impl RankVector {
    pub fn new(values: Vec<f64>) -> Result<Self, StatsError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite { index });
        }
        Ok(RankVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for RankVector {
    type Error = StatsError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        RankVector::new(v)
    }
}

impl From<RankVector> for Vec<f64> {
    fn from(v: RankVector) -> Self {
        v.0
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(StatsError::TooShort {
            len: x.len(),
            min: 2,
        });
    }
    Ok(())
}

/// 1-based ranks with ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share ranks i+1..=j
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Two-pass Pearson correlation; `None` when either side has zero variance.
pub(crate) fn pearson_raw(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    // sqrt(x * x) == x exactly, so identical inputs give exactly 1
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub(crate) fn spearman_slices(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson_raw(&rx, &ry)
        .ok_or_else(|| StatsError::Degenerate("all values tied; Spearman rho undefined".into()))
}

/// Spearman rank correlation.
pub fn spearman(x: &RankVector, y: &RankVector) -> Result<f64, StatsError> {
    spearman_slices(x.values(), y.values())
}

/// Pair counts for tau-b: (concordant - discordant, pairs untied in x, pairs untied in y).
fn tau_counts(x: &[f64], y: &[f64]) -> (i64, i64, i64) {
    let n = x.len();
    let (mut s, mut ux, mut uy) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = sign(x[j] - x[i]);
            let dy = sign(y[j] - y[i]);
            s += dx * dy;
            ux += dx.abs();
            uy += dy.abs();
        }
    }
    (s, ux, uy)
}

fn sign(v: f64) -> i64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn tau_b(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let (s, ux, uy) = tau_counts(x, y);
    if ux == 0 || uy == 0 {
        return Err(StatsError::Degenerate(
            "all values tied; Kendall tau undefined".into(),
        ));
    }
    Ok(s as f64 / ((ux as f64) * (uy as f64)).sqrt())
}

/// Kendall's tau-b. Equals tau-a when neither input has ties.
pub fn kendall_tau(x: &RankVector, y: &RankVector) -> Result<f64, StatsError> {
    check_pair(x.values(), y.values())?;
    tau_b(x.values(), y.values())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sidedness {
    One,
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationTestResult {
    pub tau: f64,
    pub p_two_sided: f64,
    /// Tail in the direction of the observed tau (upper tail when tau >= 0).
    pub p_one_sided: f64,
    pub n_permutations: u64,
    pub sidedness: Sidedness,
}

impl PermutationTestResult {
    /// The p-value for the requested sidedness.
    pub fn p(&self) -> f64 {
        match self.sidedness {
            Sidedness::One => self.p_one_sided,
            Sidedness::Two => self.p_two_sided,
        }
    }
}

/// Exact permutation test of Kendall's tau, enumerating all `n!` orderings of `y`.
pub fn exact_permutation_test(
    x: &RankVector,
    y: &RankVector,
    sidedness: Sidedness,
) -> Result<PermutationTestResult, StatsError> {
    let (xs, ys) = (x.values(), y.values());
    check_pair(xs, ys)?;
    let n = xs.len();
    if n > MAX_EXACT_N {
        return Err(StatsError::TooLarge { n, max: MAX_EXACT_N });
    }
    let observed = tau_b(xs, ys)?;

    let mut perm: Vec<f64> = ys.to_vec();
    let (mut total, mut two, mut one) = (0u64, 0u64, 0u64);
    let mut tally = |p: &[f64]| {
        // ties are carried by the permuted values, so tau-b never degenerates here
        let t = tau_b(xs, p).expect("non-degenerate inputs stay non-degenerate");
        total += 1;
        if t.abs() >= observed.abs() - PERMUTATION_EPS {
            two += 1;
        }
        let extreme = if observed >= 0.0 {
            t >= observed - PERMUTATION_EPS
        } else {
            t <= observed + PERMUTATION_EPS
        };
        if extreme {
            one += 1;
        }
    };
    heap_permutations(&mut perm, &mut tally);

    Ok(PermutationTestResult {
        tau: observed,
        p_two_sided: two as f64 / total as f64,
        p_one_sided: one as f64 / total as f64,
        n_permutations: total,
        sidedness,
    })
}

/// Visits every permutation of `items` in place (iterative Heap's algorithm).
fn heap_permutations<T>(items: &mut [T], visit: &mut impl FnMut(&[T])) {
    let n = items.len();
    let mut c = vec![0usize; n];
    visit(items);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            visit(items);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Spearman-Brown prophecy for doubling test length: `2r / (1 + r)`.
pub fn spearman_brown(r: f64) -> Result<f64, StatsError> {
    if !r.is_finite() || r > 1.0 {
        return Err(StatsError::InvalidArgument(format!(
            "reliability must lie in (-1, 1], got {r}"
        )));
    }
    if r <= -1.0 {
        return Err(StatsError::Singular(r));
    }
    Ok(2.0 * r / (1.0 + r))
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
