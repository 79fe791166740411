//! Gibbs sampler for monotone error variances.
//!
//! The variances are parametrised by increments `eta`: `ln sigma_1^2 = eta_1`
//! and `ln sigma_i^2 - ln sigma_{i-1}^2 = eta_i`, with `eta_1 >= ln gamma^2` and
//! `eta_i >= 0`. Each increment carries a truncated-normal prior whose scale is
//! a horseshoe-type mixture (`tau`, `nu` local, `lambda`, `xi` global). The
//! likelihood of `z_i = ln r_i^2` is replaced by the ten-component normal
//! mixture, with labels `s` as auxiliary variables.
//!
//! Labels are stored zero-based (`0..N_COMPONENTS`); index `j` in the `eta`
//! functions is also zero-based, so `eta[0]` is the first increment.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{
    sample_gamma, sample_gig, sample_truncnorm_lower, substream, GigParams, GigRegime, MixtureTable, SimRng,
    N_COMPONENTS,
};
use crate::error::{Error, Result};
use crate::observe::ResidualSeries;

/// Cumulative log-variances above this are treated as a diverged chain.
pub const LOG_VARIANCE_CAP: f64 = 700.0;

/// Initial value of the increments after the first.
pub const INITIAL_INCREMENT: f64 = 1e-3;

/// First RNG stream used by chains; chain `c` draws from stream `CHAIN_STREAM + c`.
pub const CHAIN_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SUpdateMode {
    /// `s_i` drawn from its full conditional given `z_i` and the current path.
    #[default]
    Posterior,
    /// `s_i` drawn from the mixture weights alone.
    Prior,
}

impl FromStr for SUpdateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "posterior" => Ok(SUpdateMode::Posterior),
            "prior" => Ok(SUpdateMode::Prior),
            other => Err(Error::invalid(format!("unknown s-update mode `{other}` (posterior|prior)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConfig {
    pub n_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub gamma2: f64,
    pub s_update_mode: SUpdateMode,
    pub thinning: usize,
    /// Keep the `eta` rows of retained sweeps as well as the variances.
    pub store_eta: bool,
}

impl GibbsConfig {
    pub fn new(n_samples: usize, burn_in: usize, seed: u64, gamma2: f64) -> Self {
        Self {
            n_samples,
            burn_in,
            seed,
            gamma2,
            s_update_mode: SUpdateMode::Posterior,
            thinning: 1,
            store_eta: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples must be positive"));
        }
        if self.thinning == 0 {
            return Err(Error::invalid("thinning must be positive"));
        }
        if !(self.gamma2 > 0.0 && self.gamma2.is_finite()) {
            return Err(Error::invalid(format!("gamma2 must be positive, got {}", self.gamma2)));
        }
        Ok(())
    }

    pub fn total_sweeps(&self) -> usize {
        self.burn_in + self.n_samples * self.thinning
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    pub eta: Vec<f64>,
    pub tau: Vec<f64>,
    pub nu: Vec<f64>,
    pub lambda: f64,
    pub xi: f64,
    /// Zero-based mixture labels.
    pub s: Vec<usize>,
}

impl GibbsState {
    /// Starting point: `eta_1 = max(ln gamma^2, ln mean r^2)`, small positive
    /// increments, unit scales and labels drawn from the mixture weights.
    pub fn initial<R: Rng + ?Sized>(residuals: &[f64], gamma2: f64, table: &MixtureTable, rng: &mut R) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::EmptyInput("residual series"));
        }
        let n = residuals.len();
        let mean_sq = residuals.iter().map(|r| r * r).sum::<f64>() / n as f64;
        let mut eta = vec![INITIAL_INCREMENT; n];
        eta[0] = gamma2.ln().max(mean_sq.ln());
        let s = (0..n).map(|_| categorical(table.weights(), rng)).collect();
        Ok(Self {
            eta,
            tau: vec![1.0; n],
            nu: vec![1.0; n],
            lambda: 1.0,
            xi: 1.0,
            s,
        })
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn satisfies_invariants(&self, gamma2: f64) -> bool {
        let n = self.eta.len();
        let positive = |x: &f64| *x > 0.0 && x.is_finite();
        n > 0
            && self.tau.len() == n
            && self.nu.len() == n
            && self.s.len() == n
            && self.eta[0] >= gamma2.ln()
            && self.eta[1..].iter().all(|e| *e >= 0.0)
            && self.eta.iter().all(|e| e.is_finite())
            && self.tau.iter().all(positive)
            && self.nu.iter().all(positive)
            && positive(&self.lambda)
            && positive(&self.xi)
            && self.s.iter().all(|k| *k < N_COMPONENTS)
    }
}

/// Metropolis–Hastings bookkeeping for the small-`b` GIG steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MhStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl MhStats {
    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.proposals > 0).then(|| self.accepted as f64 / self.proposals as f64)
    }

    fn record(&mut self, regime: GigRegime, accepted: bool) {
        if regime == GigRegime::GammaMetropolis {
            self.proposals += 1;
            self.accepted += u64::from(accepted);
        }
    }

    fn add(&mut self, other: MhStats) {
        self.proposals += other.proposals;
        self.accepted += other.accepted;
    }
}

/// Retained variance paths, row-major `[n_draws x n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    n: usize,
    sigma2: Vec<f64>,
    eta: Option<Vec<f64>>,
    lambda_traces: Vec<Vec<f64>>,
    mh: MhStats,
}

impl PosteriorDraws {
    /// Wrap raw rows (as read back from disk); no trace or diagnostics.
    pub fn from_rows(n: usize, sigma2: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("draw rows"));
        }
        if sigma2.len() % n != 0 {
            return Err(Error::LengthMismatch {
                expected: (sigma2.len() / n + 1) * n,
                got: sigma2.len(),
            });
        }
        Ok(Self {
            n,
            sigma2,
            eta: None,
            lambda_traces: Vec::new(),
            mh: MhStats::default(),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn n_draws(&self) -> usize {
        self.sigma2.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.sigma2[d * self.n..(d + 1) * self.n]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.sigma2.chunks_exact(self.n)
    }

    pub fn eta_rows(&self) -> Option<std::slice::ChunksExact<'_, f64>> {
        self.eta.as_ref().map(|e| e.chunks_exact(self.n))
    }

    /// `lambda` after every sweep (burn-in included), one vector per chain.
    pub fn lambda_traces(&self) -> &[Vec<f64>] {
        &self.lambda_traces
    }

    pub fn mh_stats(&self) -> MhStats {
        self.mh
    }

    /// True when every row satisfies `gamma2 <= sigma2_1 <= ... <= sigma2_n`.
    pub fn all_monotone(&self, gamma2: f64) -> bool {
        self.rows().all(|row| row[0] >= gamma2 && row.windows(2).all(|w| w[0] <= w[1]))
    }

    /// Concatenate draws from independent chains, in the given order.
    pub fn merge(parts: Vec<PosteriorDraws>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let mut out = iter.next().ok_or(Error::EmptyInput("chains"))?;
        for part in iter {
            if part.n != out.n {
                return Err(Error::LengthMismatch {
                    expected: out.n,
                    got: part.n,
                });
            }
            out.sigma2.extend_from_slice(&part.sigma2);
            out.eta = match (out.eta.take(), part.eta) {
                (Some(mut a), Some(b)) => {
                    a.extend_from_slice(&b);
                    Some(a)
                }
                _ => None,
            };
            out.lambda_traces.extend(part.lambda_traces);
            out.mh.add(part.mh);
        }
        Ok(out)
    }
}

/// `sigma_i^2 = exp(eta_1 + ... + eta_i)`.
///
/// A cumulative sum above [`LOG_VARIANCE_CAP`] is reported as
/// [`Error::Divergence`] with `sweep = 0`; the sampler fills in the sweep.
pub fn eta_to_sigma2(eta: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(eta.len());
    let mut c = 0.0;
    for e in eta {
        c += e;
        if !(c <= LOG_VARIANCE_CAP) {
            return Err(Error::Divergence { sweep: 0, value: c });
        }
        out.push(c.exp());
    }
    Ok(out)
}

fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

fn update_s_into<R: Rng + ?Sized>(
    z: &[f64],
    eta: &[f64],
    table: &MixtureTable,
    mode: SUpdateMode,
    rng: &mut R,
    s: &mut [usize],
) {
    match mode {
        SUpdateMode::Prior => {
            for label in s.iter_mut() {
                *label = categorical(table.weights(), rng);
            }
        }
        SUpdateMode::Posterior => {
            let mut c = 0.0;
            let mut probs = [0.0; N_COMPONENTS];
            for i in 0..z.len() {
                c += eta[i];
                let eps = z[i] - c;
                let mut max = f64::NEG_INFINITY;
                for (k, p) in probs.iter_mut().enumerate() {
                    *p = table.component_log_density(k, eps);
                    max = max.max(*p);
                }
                for p in probs.iter_mut() {
                    *p = (*p - max).exp();
                }
                s[i] = categorical(&probs, rng);
            }
        }
    }
}

/// Fresh labels for all observations.
pub fn update_s<R: Rng + ?Sized>(
    z: &[f64],
    eta: &[f64],
    table: &MixtureTable,
    mode: SUpdateMode,
    rng: &mut R,
) -> Vec<usize> {
    let mut s = vec![0; z.len()];
    update_s_into(z, eta, table, mode, rng, &mut s);
    s
}

/// `N(mean, var)` restricted to `[lower, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncNormal {
    pub mean: f64,
    pub var: f64,
    pub lower: f64,
}

impl TruncNormal {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_truncnorm_lower(self.mean, self.var, self.lower, rng)
    }
}

fn eta1_posterior(mu_tilde: f64, w_tilde2: f64, tau1: f64, log_gamma2: f64) -> TruncNormal {
    // shrink weight tau / (w + tau), written to survive tau = inf
    let r = 1.0 / (1.0 + w_tilde2 / tau1);
    let q = 1.0 / (1.0 + tau1 / w_tilde2);
    TruncNormal {
        mean: r * mu_tilde + q * log_gamma2,
        var: w_tilde2 * r,
        lower: log_gamma2,
    }
}

fn eta_j_posterior(mu_tilde: f64, w_tilde2: f64, prior_var: f64) -> TruncNormal {
    let r = if prior_var > 0.0 { 1.0 / (1.0 + w_tilde2 / prior_var) } else { 0.0 };
    TruncNormal {
        mean: r * mu_tilde,
        var: w_tilde2 * r,
        lower: 0.0,
    }
}

fn check_lengths(z: &[f64], s: &[usize], eta: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(Error::EmptyInput("log-squared residuals"));
    }
    for len in [s.len(), eta.len()] {
        if len != z.len() {
            return Err(Error::LengthMismatch { expected: z.len(), got: len });
        }
    }
    Ok(())
}

/// Full conditional of `eta[0]`, by direct summation.
pub fn eta1_conditional(
    z: &[f64],
    s: &[usize],
    eta: &[f64],
    tau1: f64,
    gamma2: f64,
    table: &MixtureTable,
) -> Result<TruncNormal> {
    check_lengths(z, s, eta)?;
    let (mut w, mut num, mut c) = (0.0, 0.0, 0.0);
    for i in 0..z.len() {
        if i > 0 {
            c += eta[i];
        }
        let prec = 1.0 / table.variances()[s[i]];
        w += prec;
        num += (z[i] - table.means()[s[i]] - c) * prec;
    }
    Ok(eta1_posterior(num / w, 1.0 / w, tau1, gamma2.ln()))
}

/// Full conditional of `eta[j]`, `j >= 1`, by direct summation.
pub fn eta_j_conditional(
    j: usize,
    z: &[f64],
    s: &[usize],
    eta: &[f64],
    tau_j: f64,
    lambda: f64,
    table: &MixtureTable,
) -> Result<TruncNormal> {
    check_lengths(z, s, eta)?;
    if j == 0 || j >= z.len() {
        return Err(Error::invalid(format!("increment index {j} outside 1..{}", z.len())));
    }
    let (mut w, mut num) = (0.0, 0.0);
    let mut c: f64 = eta[..j].iter().sum();
    for i in j..z.len() {
        if i > j {
            c += eta[i];
        }
        let prec = 1.0 / table.variances()[s[i]];
        w += prec;
        num += (z[i] - table.means()[s[i]] - c) * prec;
    }
    Ok(eta_j_posterior(num / w, 1.0 / w, lambda * tau_j))
}

pub fn update_eta1<R: Rng + ?Sized>(
    z: &[f64],
    s: &[usize],
    eta: &[f64],
    tau1: f64,
    gamma2: f64,
    table: &MixtureTable,
    rng: &mut R,
) -> Result<f64> {
    Ok(eta1_conditional(z, s, eta, tau1, gamma2, table)?.sample(rng))
}

#[allow(clippy::too_many_arguments)]
pub fn update_eta_j<R: Rng + ?Sized>(
    j: usize,
    z: &[f64],
    s: &[usize],
    eta: &[f64],
    tau_j: f64,
    lambda: f64,
    table: &MixtureTable,
    rng: &mut R,
) -> Result<f64> {
    Ok(eta_j_conditional(j, z, s, eta, tau_j, lambda, table)?.sample(rng))
}

/// Scratch buffers for one pass over the increments.
#[derive(Debug, Default, Clone)]
struct EtaScratch {
    y: Vec<f64>,
    prec: Vec<f64>,
    suffix: Vec<f64>,
    k: Vec<f64>,
}

impl EtaScratch {
    fn load(&mut self, z: &[f64], s: &[usize], table: &MixtureTable) {
        let n = z.len();
        self.y.clear();
        self.prec.clear();
        for i in 0..n {
            self.y.push(z[i] - table.means()[s[i]]);
            self.prec.push(1.0 / table.variances()[s[i]]);
        }
        self.suffix.resize(n, 0.0);
        let mut acc = 0.0;
        for j in (0..n).rev() {
            acc += self.prec[j];
            self.suffix[j] = acc;
        }
        self.k.resize(n, 0.0);
    }

    /// Visit the increments in order. `visit(j, mu_tilde, w_tilde2, k_tail)`
    /// returns the new `eta[j]`; the residual vector `k` is carried forward by
    /// `k_{i,j} = k_{i,j-1} - eta_{j-1} + eta_j`, so one pass costs O(n^2).
    fn pass<F>(&mut self, eta: &mut [f64], mut visit: F) -> Result<()>
    where
        F: FnMut(usize, f64, f64, &[f64]) -> Result<f64>,
    {
        let n = eta.len();
        let mut c = 0.0;
        let mut num = 0.0;
        for i in 0..n {
            if i > 0 {
                c += eta[i];
            }
            self.k[i] = self.y[i] - c;
            num += self.k[i] * self.prec[i];
        }
        eta[0] = visit(0, num / self.suffix[0], 1.0 / self.suffix[0], &self.k)?;
        for j in 1..n {
            let delta = eta[j] - eta[j - 1];
            let mut num = 0.0;
            for i in j..n {
                self.k[i] += delta;
                num += self.k[i] * self.prec[i];
            }
            eta[j] = visit(j, num / self.suffix[j], 1.0 / self.suffix[j], &self.k[j..])?;
        }
        Ok(())
    }
}

/// Quantities the sampler computes for increment `j` by recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaTerms {
    /// Weighted mean of the partial residuals.
    pub mu_tilde: f64,
    /// Inverse of the summed precisions over `i >= j`.
    pub w_tilde2: f64,
    /// `k_{i,j}` for `i >= j`.
    pub k: Vec<f64>,
}

/// Recursive terms for every increment with `eta` held fixed; runs the same
/// code path as the sampler.
pub fn recursive_terms(z: &[f64], s: &[usize], eta: &[f64], table: &MixtureTable) -> Result<Vec<EtaTerms>> {
    check_lengths(z, s, eta)?;
    let mut scratch = EtaScratch::default();
    scratch.load(z, s, table);
    let mut eta = eta.to_vec();
    let mut out = Vec::with_capacity(eta.len());
    let fixed = eta.clone();
    scratch.pass(&mut eta, |j, mu_tilde, w_tilde2, k| {
        out.push(EtaTerms {
            mu_tilde,
            w_tilde2,
            k: k.to_vec(),
        });
        Ok(fixed[j])
    })?;
    Ok(out)
}

/// Shape and rate of the `nu_1` conditional.
pub fn nu1_conditional(tau1: f64) -> (f64, f64) {
    (1.5, 1.0 + tau1)
}

pub fn tau1_conditional(eta1: f64, nu1: f64, gamma2: f64) -> Result<GigParams> {
    let d = eta1 - gamma2.ln();
    GigParams::new(2.0 * nu1, d * d, 0.5)
}

/// Shape and rate of the `nu_j` conditional, `j >= 1`.
pub fn nu_j_conditional(tau_j: f64) -> (f64, f64) {
    (1.0, 1.0 + tau_j)
}

/// `GIG(2 nu_j, eta_j^2 / lambda, 0)`; `b` is floored at the smallest normal
/// double so the law stays proper when `eta_j` is exactly zero.
pub fn tau_j_conditional(eta_j: f64, nu_j: f64, lambda: f64) -> Result<GigParams> {
    GigParams::new(2.0 * nu_j, (eta_j * eta_j / lambda).max(f64::MIN_POSITIVE), 0.0)
}

/// Shape and rate of the `xi` conditional.
pub fn xi_conditional(lambda: f64) -> (f64, f64) {
    (1.0, 1.0 + lambda)
}

/// `GIG(2 xi, sum_{j>=1} eta_j^2 / tau_j, (2 - n) / 2)`, with the same floor on
/// `b` whenever the order is not positive.
pub fn lambda_conditional(eta: &[f64], tau: &[f64], xi: f64) -> Result<GigParams> {
    if eta.is_empty() || eta.len() != tau.len() {
        return Err(Error::LengthMismatch {
            expected: eta.len(),
            got: tau.len(),
        });
    }
    let p = (2.0 - eta.len() as f64) / 2.0;
    let mut b: f64 = eta[1..].iter().zip(&tau[1..]).map(|(e, t)| e * e / t).sum();
    if p <= 0.0 {
        b = b.max(f64::MIN_POSITIVE);
    }
    GigParams::new(2.0 * xi, b, p)
}

/// Which update just finished, for [`GibbsSampler::sweep_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Labels,
    Eta(usize),
    Nu1,
    Tau1,
    Nu(usize),
    Tau(usize),
    Xi,
    Lambda,
}

fn update_hyperparams_staged<R, F>(
    state: &mut GibbsState,
    gamma2: f64,
    rng: &mut R,
    mut inspect: F,
) -> Result<MhStats>
where
    R: Rng + ?Sized,
    F: FnMut(Stage, &GibbsState),
{
    let mut stats = MhStats::default();
    let n = state.len();

    let (shape, rate) = nu1_conditional(state.tau[0]);
    state.nu[0] = sample_gamma(shape, rate, rng)?;
    inspect(Stage::Nu1, state);

    let draw = sample_gig(&tau1_conditional(state.eta[0], state.nu[0], gamma2)?, rng, Some(state.tau[0]))?;
    stats.record(draw.regime, draw.accepted);
    state.tau[0] = draw.value;
    inspect(Stage::Tau1, state);

    for j in 1..n {
        let (shape, rate) = nu_j_conditional(state.tau[j]);
        state.nu[j] = sample_gamma(shape, rate, rng)?;
        inspect(Stage::Nu(j), state);
    }
    for j in 1..n {
        let params = tau_j_conditional(state.eta[j], state.nu[j], state.lambda)?;
        let draw = sample_gig(&params, rng, Some(state.tau[j]))?;
        stats.record(draw.regime, draw.accepted);
        state.tau[j] = draw.value;
        inspect(Stage::Tau(j), state);
    }

    let (shape, rate) = xi_conditional(state.lambda);
    state.xi = sample_gamma(shape, rate, rng)?;
    inspect(Stage::Xi, state);

    let draw = sample_gig(&lambda_conditional(&state.eta, &state.tau, state.xi)?, rng, Some(state.lambda))?;
    stats.record(draw.regime, draw.accepted);
    state.lambda = draw.value;
    inspect(Stage::Lambda, state);
    Ok(stats)
}

/// Redraw `nu_1, tau_1`, all `nu_j`, all `tau_j`, `xi`, `lambda` in that order.
pub fn update_hyperparams<R: Rng + ?Sized>(state: &mut GibbsState, gamma2: f64, rng: &mut R) -> Result<MhStats> {
    update_hyperparams_staged(state, gamma2, rng, |_, _| {})
}

/// One chain: state, RNG and scratch space.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    z: Vec<f64>,
    gamma2: f64,
    table: MixtureTable,
    mode: SUpdateMode,
    state: GibbsState,
    rng: SimRng,
    mh: MhStats,
    sweeps: usize,
    scratch: EtaScratch,
    sigma2: Vec<f64>,
}

impl GibbsSampler {
    pub fn new(resid: &ResidualSeries, config: &GibbsConfig, stream: u64) -> Result<Self> {
        Self::with_table(resid, config, MixtureTable::standard(), stream)
    }

    pub fn with_table(resid: &ResidualSeries, config: &GibbsConfig, table: MixtureTable, stream: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(config.seed, stream);
        let state = GibbsState::initial(resid.residuals(), config.gamma2, &table, &mut rng)?;
        let mut sampler = Self {
            z: resid.log_squares().to_vec(),
            gamma2: config.gamma2,
            table,
            mode: config.s_update_mode,
            state,
            rng,
            mh: MhStats::default(),
            sweeps: 0,
            scratch: EtaScratch::default(),
            sigma2: Vec::new(),
        };
        sampler.refresh_sigma2()?;
        Ok(sampler)
    }

    pub fn state(&self) -> &GibbsState {
        &self.state
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn mh_stats(&self) -> MhStats {
        self.mh
    }

    /// Variances of the current state, floored at `gamma2` against round-off.
    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn sweep(&mut self) -> Result<()> {
        self.sweep_with(|_, _| {})
    }

    /// One sweep, calling `inspect` after every individual update.
    pub fn sweep_with<F: FnMut(Stage, &GibbsState)>(&mut self, mut inspect: F) -> Result<()> {
        let sweep = self.sweeps + 1;
        self.sweep_inner(&mut inspect).map_err(|e| match e {
            Error::Divergence { value, .. } => Error::Divergence { sweep, value },
            other => Error::Sweep {
                sweep,
                source: Box::new(other),
            },
        })?;
        self.sweeps = sweep;
        Ok(())
    }

    fn sweep_inner<F: FnMut(Stage, &GibbsState)>(&mut self, inspect: &mut F) -> Result<()> {
        let Self {
            z,
            gamma2,
            table,
            mode,
            state,
            rng,
            scratch,
            ..
        } = self;
        update_s_into(z, &state.eta, table, *mode, rng, &mut state.s);
        inspect(Stage::Labels, state);

        scratch.load(z, &state.s, table);
        let log_gamma2 = gamma2.ln();
        let mut eta = std::mem::take(&mut state.eta);
        let result = scratch.pass(&mut eta, |j, mu_tilde, w_tilde2, _| {
            let cond = if j == 0 {
                eta1_posterior(mu_tilde, w_tilde2, state.tau[0], log_gamma2)
            } else {
                eta_j_posterior(mu_tilde, w_tilde2, state.lambda * state.tau[j])
            };
            Ok(cond.sample(rng))
        });
        state.eta = eta;
        result?;
        for j in 0..state.len() {
            inspect(Stage::Eta(j), state);
        }

        let stats = update_hyperparams_staged(state, *gamma2, rng, &mut *inspect)?;
        self.mh.add(stats);
        self.refresh_sigma2()
    }

    fn refresh_sigma2(&mut self) -> Result<()> {
        let mut sigma2 = eta_to_sigma2(&self.state.eta)?;
        for v in sigma2.iter_mut() {
            *v = v.max(self.gamma2);
        }
        self.sigma2 = sigma2;
        Ok(())
    }
}

/// Run one chain on stream [`CHAIN_STREAM`].
pub fn run_gibbs(resid: &ResidualSeries, config: &GibbsConfig) -> Result<PosteriorDraws> {
    run_chain(resid, config, CHAIN_STREAM)
}

fn run_chain(resid: &ResidualSeries, config: &GibbsConfig, stream: u64) -> Result<PosteriorDraws> {
    let mut sampler = GibbsSampler::new(resid, config, stream)?;
    let n = resid.len();
    let mut sigma2 = Vec::with_capacity(config.n_samples * n);
    let mut eta = config.store_eta.then(|| Vec::with_capacity(config.n_samples * n));
    let mut trace = Vec::with_capacity(config.total_sweeps());
    for t in 1..=config.total_sweeps() {
        sampler.sweep()?;
        trace.push(sampler.state.lambda);
        if t > config.burn_in && (t - config.burn_in) % config.thinning == 0 {
            sigma2.extend_from_slice(sampler.sigma2());
            if let Some(eta) = eta.as_mut() {
                eta.extend_from_slice(&sampler.state.eta);
            }
        }
    }
    Ok(PosteriorDraws {
        n,
        sigma2,
        eta,
        lambda_traces: vec![trace],
        mh: sampler.mh,
    })
}

/// Run `chains` independent chains concurrently and merge them in chain order.
/// Chain `c` uses stream `CHAIN_STREAM + c`, so one chain equals [`run_gibbs`].
pub fn run_chains(resid: &ResidualSeries, config: &GibbsConfig, chains: usize) -> Result<PosteriorDraws> {
    if chains == 0 {
        return Err(Error::invalid("at least one chain is required"));
    }
    if chains == 1 {
        return run_gibbs(resid, config);
    }
    let results: Vec<Result<PosteriorDraws>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains as u64)
            .map(|c| scope.spawn(move || run_chain(resid, config, CHAIN_STREAM + c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    });
    PosteriorDraws::merge(results.into_iter().collect::<Result<Vec<_>>>()?)
}
