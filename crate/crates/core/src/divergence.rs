//! Kullback-Leibler and Jensen-Shannon divergences (log base 2, so JSD lies
//! in `[0, 1]`) and pairwise JSD matrices over labelled distributions.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::calendar::Day;
use crate::math;
use crate::timeseries::{DayDistribution, DayKey};

/// Tolerance on `|sum(p) - 1|` for inputs to the divergence functions.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DivergenceError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty probability vector")]
    Empty,
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("negative or non-finite probability {value} at index {index}")]
    InvalidProbability { index: usize, value: f64 },
    #[error("support violation at index {0}: p > 0 where q = 0")]
    Support(usize),
    #[error("distribution `{0}` has no observations")]
    EmptyDistribution(String),
    #[error("distributions use different bin widths ({0} vs {1})")]
    BinWidthMismatch(u32, u32),
    #[error("expected {expected} distributions, got {got}")]
    WrongCount { expected: usize, got: usize },
}

fn check_simplex(p: &[f64]) -> Result<(), DivergenceError> {
    if p.is_empty() {
        return Err(DivergenceError::Empty);
    }
    let mut sum = 0.0;
    for (index, &value) in p.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(DivergenceError::InvalidProbability { index, value });
        }
        sum += value;
    }
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(DivergenceError::NotNormalized(sum));
    }
    Ok(())
}

fn check_pair(p: &[f64], q: &[f64]) -> Result<(), DivergenceError> {
    if p.len() != q.len() {
        return Err(DivergenceError::LengthMismatch(p.len(), q.len()));
    }
    check_simplex(p)?;
    check_simplex(q)
}

/// `p * log2(p / q)` with `0 * log(0 / q) = 0`; caller guarantees `q > 0` when `p > 0`.
#[inline]
fn kl_term(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * math::log2(p / q)
    }
}

/// `sum p_i log2(p_i / q_i)`. Errors instead of returning infinity when `q`
/// does not cover the support of `p`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, DivergenceError> {
    check_pair(p, q)?;
    let mut sum = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 && qi == 0.0 {
            return Err(DivergenceError::Support(i));
        }
        sum += kl_term(pi, qi);
    }
    // Rounding can leave a tiny negative residue when p == q elementwise.
    Ok(sum.max(0.0))
}

/// `1/2 KL(p || m) + 1/2 KL(q || m)` with `m = (p + q) / 2`.
///
/// Each bin contributes `f(p_i, m_i) + f(q_i, m_i)`, which is exactly
/// symmetric under swapping `p` and `q`, so `js(p, q) == js(q, p)` bitwise.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64, DivergenceError> {
    check_pair(p, q)?;
    let mut sum = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let mi = 0.5 * (pi + qi);
        if mi == 0.0 {
            continue;
        }
        sum += kl_term(pi, mi) + kl_term(qi, mi);
    }
    Ok((0.5 * sum).clamp(0.0, 1.0))
}

/// Symmetric pairwise JSD matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JsdMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl JsdMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Long-format `(row, column, value)` triples, row-major.
    pub fn cells(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        self.labels.iter().enumerate().flat_map(move |(i, a)| {
            self.labels
                .iter()
                .enumerate()
                .map(move |(j, b)| (a.as_str(), b.as_str(), self.values[i][j]))
        })
    }
}

/// Each unordered pair is evaluated once and mirrored.
pub fn jsd_matrix(labels: Vec<String>, dists: &[&[f64]]) -> Result<JsdMatrix, DivergenceError> {
    if labels.len() != dists.len() {
        return Err(DivergenceError::WrongCount {
            expected: labels.len(),
            got: dists.len(),
        });
    }
    let n = dists.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = js_divergence(dists[i], dists[j])?;
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(JsdMatrix { labels, values })
}

pub(crate) fn check_distributions(dists: &[&DayDistribution]) -> Result<(), DivergenceError> {
    let Some(first) = dists.first() else {
        return Ok(());
    };
    for d in dists {
        if d.bin_width != first.bin_width {
            return Err(DivergenceError::BinWidthMismatch(first.bin_width, d.bin_width));
        }
        if d.is_empty() {
            return Err(DivergenceError::EmptyDistribution(alloc::format!(
                "{} {} {}",
                d.city,
                d.day,
                d.direction
            )));
        }
    }
    Ok(())
}

/// 7x7 day-of-week matrix for one city, labelled Mon..Sun. `dists` must be
/// the seven per-day distributions in Mon..Sun order.
pub fn jsd_day_matrix(dists: &[&DayDistribution]) -> Result<JsdMatrix, DivergenceError> {
    if dists.len() != 7 {
        return Err(DivergenceError::WrongCount {
            expected: 7,
            got: dists.len(),
        });
    }
    check_distributions(dists)?;
    let labels = dists
        .iter()
        .zip(Day::ALL)
        .map(|(d, fallback)| match d.day {
            DayKey::Day(day) => day.to_string(),
            DayKey::Class(_) => fallback.to_string(),
        })
        .collect();
    let probs: Vec<&[f64]> = dists.iter().map(|d| d.probs.as_slice()).collect();
    jsd_matrix(labels, &probs)
}
