//! Independent numerical oracles shared by the integration tests: quadrature
//! in log space, Monte Carlo standard errors, marginal shrinkage priors and a
//! dense-grid joint posterior for tiny series.
#![allow(dead_code)]

use std::f64::consts::PI;

use isovar::dist::{mixture_density, MixtureTable};
use isovar::observe::ResidualSeries;

/// Composite tanh-sinh quadrature over `[a, b]` split into `pieces`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, pieces: usize) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let lo = a + k as f64 * h;
            quadrature::double_exponential::integrate(&f, lo, lo + h, 1e-13).integral
        })
        .sum()
}

/// Region of `[lo, hi]` where `log_k` is within 80 nats of its maximum,
/// found on a scan grid, plus that maximum.
pub fn effective_support<F: Fn(f64) -> f64>(log_k: &F, lo: f64, hi: f64) -> (f64, f64, f64) {
    let n = 40_000;
    let step = (hi - lo) / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| log_k(lo + i as f64 * step)).collect();
    let max = vals.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let first = vals.iter().position(|v| *v > max - 80.0).unwrap();
    let last = vals.iter().rposition(|v| *v > max - 80.0).unwrap();
    let a = lo + first.saturating_sub(1) as f64 * step;
    let b = lo + (last + 1).min(n) as f64 * step;
    (a, b, max)
}

/// `E[f(U)]` for a density proportional to `exp(log_k(u))` on `[lo, hi]`.
pub fn expectation<K, F>(log_k: K, lo: f64, hi: f64, f: F) -> f64
where
    K: Fn(f64) -> f64,
    F: Fn(f64) -> f64,
{
    let (a, b, max) = effective_support(&log_k, lo, hi);
    let w = |u: f64| (log_k(u) - max).exp();
    let z = integrate(w, a, b, 200);
    integrate(|u| w(u) * f(u), a, b, 200) / z
}

/// First two raw moments of `GIG(a, b, p)` from the unnormalised kernel,
/// integrated in `u = ln x`.
pub fn gig_moments(a: f64, b: f64, p: f64) -> (f64, f64) {
    let log_k = |u: f64| p * u - 0.5 * (a * u.exp() + b * (-u).exp());
    let m1 = expectation(log_k, -700.0, 700.0, |u| u.exp());
    let m2 = expectation(log_k, -700.0, 700.0, |u| (2.0 * u).exp());
    (m1, m2)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean of independent draws.
pub fn iid_se(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Batch-means standard error for a correlated chain.
pub fn batch_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&xs[b * size..(b + 1) * size])).collect();
    (variance(&means) / batches as f64).sqrt()
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -(x - mean) * (x - mean) / (2.0 * var) - 0.5 * (2.0 * PI * var).ln()
}

/// `ln Ga(x; shape, rate)` straight from the density formula.
pub fn log_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - statrs::function::gamma::ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Residual series whose log-squares are exactly `z`.
pub fn series_with_log_squares(z: &[f64], gamma2: f64) -> ResidualSeries {
    let times = (0..z.len()).map(|i| i as f64).collect();
    let r = z.iter().map(|z| (0.5 * z).exp()).collect();
    ResidualSeries::new(times, r, gamma2).unwrap()
}

/// Marginal prior of the first increment above `ln gamma^2`, with its
/// scale mixed over `tau ~ Ga(1, nu)`, `nu ~ Ga(1/2, 1)`, i.e. over
/// `pi(tau) = (1 + tau)^{-3/2} / 2`:
/// `h_1(y) = int 2 N(y; 0, tau) pi(tau) dtau`.
pub fn h_first(y: f64) -> f64 {
    let f = |u: f64| {
        let tau = u.exp();
        2.0 * normal_pdf(y, 0.0, tau) * 0.5 * (1.0 + tau).powf(-1.5) * tau
    };
    let lo = if y > 0.0 { 2.0 * y.ln() - 10.0 } else { -80.0 };
    integrate(f, lo.min(-80.0).max(-700.0), 80.0, 400)
}

/// Density of a scale with a half-Cauchy square root:
/// `Ga(1/2, nu)` mixed over `nu ~ Ga(1/2, 1)`.
pub fn half_cauchy_var_density(t: f64) -> f64 {
    t.powf(-0.5) / (PI * (1.0 + t))
}

/// `h(y) = int 2 N(y; 0, tau) pi(tau) dtau` with the half-Cauchy scale.
pub fn h_local(y: f64) -> f64 {
    let f = |u: f64| {
        let tau = u.exp();
        2.0 * normal_pdf(y, 0.0, tau) * half_cauchy_var_density(tau) * tau
    };
    let lo = (2.0 * y.ln() - 10.0).max(-700.0);
    integrate(f, lo, 60.0, 200)
}

/// `ln h_local` tabulated on a log grid and interpolated linearly.
pub struct LocalPriorTable {
    log_y0: f64,
    step: f64,
    log_h: Vec<f64>,
}

impl LocalPriorTable {
    pub fn new() -> Self {
        let (lo, hi, n) = (-30.0f64, 15.0f64, 4500usize);
        let step = (hi - lo) / n as f64;
        let log_h = (0..=n).map(|i| h_local((lo + i as f64 * step).exp()).ln()).collect();
        Self { log_y0: lo, step, log_h }
    }

    pub fn log_h(&self, y: f64) -> f64 {
        let x = ((y.ln() - self.log_y0) / self.step).clamp(0.0, (self.log_h.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.log_h.len() - 2);
        let f = x - i as f64;
        self.log_h[i] * (1.0 - f) + self.log_h[i + 1] * f
    }
}

/// Posterior means of the increments for `n <= 3` under the mixture
/// likelihood and the full shrinkage prior, by dense grids.
///
/// Increments are placed on `x = t^2` grids, which smooths the logarithmic
/// spike of the local prior at zero. The global scale is integrated out on a
/// grid in `ln lambda` before the increments are summed.
pub fn grid_posterior_eta_means(z: &[f64], gamma2: f64, table: &MixtureTable) -> Vec<f64> {
    let n = z.len();
    assert!((1..=3).contains(&n));
    let m = 240;
    let t_max = 40f64.sqrt();
    let dt = t_max / m as f64;
    let ts: Vec<f64> = (0..=m).map(|i| i as f64 * dt).collect();
    let xs: Vec<f64> = ts.iter().map(|t| t * t).collect();
    // trapezoid weights times the Jacobian 2t
    let wt: Vec<f64> = ts
        .iter()
        .enumerate()
        .map(|(i, t)| if i == 0 || i == m { 0.5 } else { 1.0 } * dt * 2.0 * t)
        .collect();

    let lg = gamma2.ln();
    let prior1: Vec<f64> = xs.iter().map(|x| h_first(*x)).collect();
    let g = |e: f64| mixture_density(e, table);

    // joint prior of the later increments, integrated over lambda
    let local = LocalPriorTable::new();
    let (u_lo, u_hi, nu) = (-40.0, 40.0, 1600);
    let du = (u_hi - u_lo) / nu as f64;
    let us: Vec<f64> = (0..=nu).map(|k| u_lo + k as f64 * du).collect();
    let later = n - 1;
    let lam_weight = |u: f64| {
        // pi(lambda) * lambda * lambda^{-later/2}, trapezoid in u
        (0.5 * u - 0.5 * later as f64 * u).exp() / (PI * (1.0 + u.exp()))
    };
    let joint_later = |idx: &[usize]| -> f64 {
        us.iter()
            .enumerate()
            .map(|(k, u)| {
                let w = if k == 0 || k == nu { 0.5 } else { 1.0 } * du;
                let s = (-0.5 * u).exp();
                let lh: f64 = idx.iter().map(|i| local.log_h(xs[*i] * s)).sum();
                w * lam_weight(*u) * lh.exp()
            })
            .sum()
    };

    let mut norm = 0.0;
    let mut sums = vec![0.0; n];
    match n {
        1 => {
            for i in 1..=m {
                let e1 = lg + xs[i];
                let w = wt[i] * prior1[i] * g(z[0] - e1);
                norm += w;
                sums[0] += w * e1;
            }
        }
        2 => {
            let p2: Vec<f64> = (0..=m).map(|j| if j == 0 { 0.0 } else { joint_later(&[j]) }).collect();
            for i in 1..=m {
                let e1 = lg + xs[i];
                let a = wt[i] * prior1[i] * g(z[0] - e1);
                for j in 1..=m {
                    let w = a * wt[j] * p2[j] * g(z[1] - e1 - xs[j]);
                    norm += w;
                    sums[0] += w * e1;
                    sums[1] += w * xs[j];
                }
            }
        }
        _ => {
            let mut p23 = vec![0.0; (m + 1) * (m + 1)];
            for j in 1..=m {
                for k in 1..=m {
                    p23[j * (m + 1) + k] = joint_later(&[j, k]);
                }
            }
            for i in 1..=m {
                let e1 = lg + xs[i];
                let a = wt[i] * prior1[i] * g(z[0] - e1);
                for j in 1..=m {
                    let c2 = e1 + xs[j];
                    let b = a * wt[j] * g(z[1] - c2);
                    for k in 1..=m {
                        let w = b * wt[k] * p23[j * (m + 1) + k] * g(z[2] - c2 - xs[k]);
                        norm += w;
                        sums[0] += w * e1;
                        sums[1] += w * xs[j];
                        sums[2] += w * xs[k];
                    }
                }
            }
        }
    }
    sums.iter().map(|s| s / norm).collect()
}

/// Brute-force isotonic fit: `max_{s<=i} min_{t>=i} mean(v[s..=t])`.
pub fn max_min_isotonic(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            (0..=i)
                .map(|s| {
                    (i..n)
                        .map(|t| v[s..=t].iter().sum::<f64>() / (t - s + 1) as f64)
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}
