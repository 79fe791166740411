//! Pointwise summaries of retained draws: means, central intervals and
//! predictive intervals for absolute residuals and errors.
//!
//! Interval endpoints are nearest-rank order statistics: for probability `p`
//! over `N` sorted values the endpoint is the `ceil(p N)`-th value.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::PosteriorDraws;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryTarget {
    /// `sigma_i`
    Sigma,
    /// `sqrt(sigma_i^2 - gamma^2)`
    ErrorSd,
    /// `|r_i|` with `r_i ~ N(0, sigma_i^2)`
    AbsResidual,
    /// `|e_i|` with `e_i ~ N(0, sigma_i^2 - gamma^2)`
    AbsError,
}

impl SummaryTarget {
    pub const ALL: [SummaryTarget; 4] = [
        SummaryTarget::Sigma,
        SummaryTarget::ErrorSd,
        SummaryTarget::AbsResidual,
        SummaryTarget::AbsError,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SummaryTarget::Sigma => "sigma",
            SummaryTarget::ErrorSd => "error_sd",
            SummaryTarget::AbsResidual => "abs_residual",
            SummaryTarget::AbsError => "abs_error",
        }
    }

    pub fn is_predictive(&self) -> bool {
        matches!(self, SummaryTarget::AbsResidual | SummaryTarget::AbsError)
    }
}

impl fmt::Display for SummaryTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SummaryTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown summary target `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummarySeries {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub target: SummaryTarget,
}

impl SummarySeries {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// One-based nearest rank of probability `p` among `n` sorted values.
pub fn nearest_rank(p: f64, n: usize) -> usize {
    let k = (p * n as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(n)
}

/// Ranks of the lower and upper endpoints of a central `level` interval.
pub fn interval_ranks(level: f64, n: usize) -> (usize, usize) {
    (nearest_rank(0.5 * (1.0 - level), n), nearest_rank(0.5 * (1.0 + level), n))
}

fn check(draws: &PosteriorDraws, times: &[f64], level: f64) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::EmptyInput("posterior draws"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("level must lie in (0, 1), got {level}")));
    }
    if times.len() != draws.n_obs() {
        return Err(Error::LengthMismatch {
            expected: draws.n_obs(),
            got: times.len(),
        });
    }
    Ok(())
}

/// Summaries of an `[n_draws x n]` row-major matrix, column by column.
fn summarize_matrix(values: &[f64], n: usize, times: &[f64], level: f64, target: SummaryTarget) -> SummarySeries {
    let m = values.len() / n;
    let (lo, hi) = interval_ranks(level, m);
    let mut column = vec![0.0; m];
    let mut out = SummarySeries {
        times: times.to_vec(),
        mean: Vec::with_capacity(n),
        lower: Vec::with_capacity(n),
        upper: Vec::with_capacity(n),
        level,
        target,
    };
    for i in 0..n {
        for (d, c) in column.iter_mut().enumerate() {
            *c = values[d * n + i];
        }
        column.sort_by(f64::total_cmp);
        out.mean.push(column.iter().sum::<f64>() / m as f64);
        out.lower.push(column[lo - 1]);
        out.upper.push(column[hi - 1]);
    }
    out
}

/// Mean and central interval of `sigma_i` across draws.
pub fn summarize_sigma(draws: &PosteriorDraws, times: &[f64], level: f64) -> Result<SummarySeries> {
    check(draws, times, level)?;
    let values: Vec<f64> = draws.sigma2().iter().map(|v| v.sqrt()).collect();
    Ok(summarize_matrix(&values, draws.n_obs(), times, level, SummaryTarget::Sigma))
}

/// Mean and central interval of `sqrt(max(sigma_i^2 - gamma^2, 0))`.
pub fn summarize_error_sd(draws: &PosteriorDraws, times: &[f64], gamma2: f64, level: f64) -> Result<SummarySeries> {
    check(draws, times, level)?;
    let values: Vec<f64> = draws.sigma2().iter().map(|v| (v - gamma2).max(0.0).sqrt()).collect();
    Ok(summarize_matrix(&values, draws.n_obs(), times, level, SummaryTarget::ErrorSd))
}

/// One normal draw per retained draw and index, summarised in absolute value.
pub fn predictive_abs<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    times: &[f64],
    gamma2: f64,
    target: SummaryTarget,
    level: f64,
    rng: &mut R,
) -> Result<SummarySeries> {
    check(draws, times, level)?;
    let offset = match target {
        SummaryTarget::AbsResidual => 0.0,
        SummaryTarget::AbsError => gamma2,
        other => return Err(Error::invalid(format!("`{other}` is not a predictive target"))),
    };
    let values: Vec<f64> = draws
        .sigma2()
        .iter()
        .map(|v| {
            let e: f64 = rng.sample(StandardNormal);
            ((v - offset).max(0.0).sqrt() * e).abs()
        })
        .collect();
    Ok(summarize_matrix(&values, draws.n_obs(), times, level, target))
}

/// Fraction of indices whose truth lies inside `[lower, upper]`.
pub fn coverage_check(summary: &SummarySeries, truth: &[f64]) -> Result<f64> {
    if truth.len() != summary.len() {
        return Err(Error::LengthMismatch {
            expected: summary.len(),
            got: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput("coverage truth"));
    }
    let inside = truth
        .iter()
        .enumerate()
        .filter(|(i, t)| summary.lower[*i] <= **t && **t <= summary.upper[*i])
        .count();
    Ok(inside as f64 / truth.len() as f64)
}
