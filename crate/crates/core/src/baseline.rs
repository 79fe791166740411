//! Order-restricted maximum-likelihood variances: the isotonic regression of
//! squared residuals by pool-adjacent-violators, floored at `gamma^2`.

use crate::error::{Error, Result};
use crate::observe::ResidualSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct MlEstimate {
    pub times: Vec<f64>,
    pub sigma2_hat: Vec<f64>,
}

/// Nondecreasing least-squares fit to `values` with unit weights.
pub fn pava(values: &[f64]) -> Vec<f64> {
    // blocks as (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 <= s1 / c1 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, c0 + c1);
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, c) in blocks {
        out.extend(std::iter::repeat_n(s / c as f64, c));
    }
    out
}

pub fn isotonic_mle(resid: &ResidualSeries) -> Result<MlEstimate> {
    if resid.is_empty() {
        return Err(Error::EmptyInput("residual series"));
    }
    let squares: Vec<f64> = resid.residuals().iter().map(|r| r * r).collect();
    let gamma2 = resid.noise_var();
    let sigma2_hat = pava(&squares).into_iter().map(|v| v.max(gamma2)).collect();
    Ok(MlEstimate {
        times: resid.times().to_vec(),
        sigma2_hat,
    })
}
