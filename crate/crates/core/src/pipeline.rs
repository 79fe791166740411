//! The stages behind the command-line tool. Every stage reads its inputs from
//! and writes its outputs to `output.dir`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::baseline::isotonic_mle;
use crate::config::{IntegratorMethod, ModelKind, RunConfig};
use crate::dist::substream;
use crate::error::{Error, Result};
use crate::gibbs::run_chains;
use crate::io;
use crate::observe::{observe, residuals, ObservationOperator, ObservationSeries, ResidualSeries};
use crate::ode::{
    integrate_explicit_euler, integrate_reference, integrate_symplectic_euler, sample_at, OdeModel,
    ReferenceOptions, TrajectoryGrid,
};
use crate::posterior::{predictive_abs, summarize_error_sd, summarize_sigma, SummaryTarget};

/// RNG stream of the predictive draws (noise uses 0, chains 1, 2, ...).
pub const PREDICTIVE_STREAM: u64 = 1 << 32;

/// Reference output is stored this many times more densely than observed.
pub const REFERENCE_OVERSAMPLING: f64 = 10.0;

pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const NUMERIC_FILE: &str = "numeric.dat";
pub const REFERENCE_FILE: &str = "reference.dat";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const BASELINE_FILE: &str = "ml.dat";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone)]
pub struct Simulation {
    pub observations: ObservationSeries,
    pub numeric: TrajectoryGrid,
    /// Dense reference solution, absent for `custom-csv` input.
    pub reference: Option<TrajectoryGrid>,
    pub residuals: ResidualSeries,
    /// `O(x(t_i)) - O(x_i)`, absent for `custom-csv` input.
    pub errors: Option<Vec<f64>>,
}

fn build_model(config: &RunConfig) -> Result<(OdeModel, Vec<f64>)> {
    match config.model.kind {
        ModelKind::FitzHughNagumo => {
            let x0 = config.model.x0.clone().unwrap_or_else(|| vec![1.0, -1.0]);
            Ok((OdeModel::fitzhugh_nagumo(config.fn_params()?), x0))
        }
        ModelKind::Kepler => {
            let x0 = match &config.model.x0 {
                Some(x0) => x0.clone(),
                None => config.kepler_params()?.initial_state().to_vec(),
            };
            Ok((OdeModel::kepler(), x0))
        }
        ModelKind::CustomCsv => Err(Error::config("model.kind", "custom-csv has no vector field")),
    }
}

/// Reference solution stored exactly at `times` (all `> t0`), integrating
/// segment by segment so no interpolation enters the truth.
pub fn reference_at(model: &OdeModel, x0: &[f64], t0: f64, times: &[f64], opts: &ReferenceOptions) -> Result<TrajectoryGrid> {
    let opts = ReferenceOptions { output_dt: None, ..*opts };
    let mut grid_t = vec![t0];
    let mut states = vec![x0.to_vec()];
    let mut x = x0.to_vec();
    let mut t = t0;
    for &target in times {
        if target > t {
            x = integrate_reference(model, &x, (t, target), &opts)?.last_state().to_vec();
            t = target;
            grid_t.push(t);
            states.push(x.clone());
        } else if target < t {
            return Err(Error::invalid("reference output times must be increasing and after the start"));
        }
    }
    TrajectoryGrid::new(grid_t, states)
}

fn step_count(t_end: f64, h: f64) -> usize {
    let ratio = t_end / h;
    let r = ratio.round();
    if (ratio - r).abs() <= 1e-9 * ratio.max(1.0) {
        r as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Integrate, observe and form residuals (or read them from CSV input).
pub fn simulate(config: &RunConfig) -> Result<Simulation> {
    config.validate()?;
    let gamma2 = config.gamma2()?;
    let op = config.operator()?;
    if config.model.kind == ModelKind::CustomCsv {
        let obs = io::read_observations(config.model.observations.as_ref().unwrap(), gamma2)?;
        let numeric = io::read_trajectory(config.model.numeric.as_ref().unwrap())?;
        let resid = residuals(&obs, &numeric, &op)?;
        return Ok(Simulation {
            observations: obs,
            numeric,
            reference: None,
            residuals: resid,
            errors: None,
        });
    }

    let (model, x0) = build_model(config)?;
    let times = config.observation_times()?;
    let t_end = config.integration_end();
    let opts = config.reference_options();
    let integ = config.integrator.as_ref().expect("validated");
    let truth = reference_at(&model, &x0, 0.0, &times, &opts)?;
    let numeric = match integ.method {
        IntegratorMethod::ExplicitEuler => {
            let h = integ.h.expect("validated");
            integrate_explicit_euler(&model, &x0, 0.0, h, step_count(t_end, h))?
        }
        IntegratorMethod::SymplecticEuler => {
            let h = integ.h.expect("validated");
            integrate_symplectic_euler(&model, &x0, 0.0, h, step_count(t_end, h))?
        }
        IntegratorMethod::Reference => truth.clone(),
    };
    let obs = observe(&truth, &op, &times, gamma2, config.seed)?;
    let resid = residuals(&obs, &numeric, &op)?;
    let errors = true_errors(&truth, &numeric, &op, &times)?;
    let dense = ReferenceOptions {
        output_dt: Some(config.observation.dt / REFERENCE_OVERSAMPLING),
        ..opts
    };
    let reference = integrate_reference(&model, &x0, (0.0, t_end), &dense)?;
    Ok(Simulation {
        observations: obs,
        numeric,
        reference: Some(reference),
        residuals: resid,
        errors: Some(errors),
    })
}

fn true_errors(truth: &TrajectoryGrid, numeric: &TrajectoryGrid, op: &ObservationOperator, times: &[f64]) -> Result<Vec<f64>> {
    times
        .iter()
        .map(|&t| Ok(op.apply(&sample_at(truth, t)?)? - op.apply(&sample_at(numeric, t)?)?))
        .collect()
}

pub fn cmd_simulate(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let sim = simulate(config)?;
    let dir = &config.output.dir;
    let mut written = Vec::new();
    let path = dir.join(OBSERVATIONS_FILE);
    io::write_observations(&path, &sim.observations)?;
    written.push(path);
    let path = dir.join(NUMERIC_FILE);
    io::write_trajectory(&path, &sim.numeric)?;
    written.push(path);
    if let Some(reference) = &sim.reference {
        let path = dir.join(REFERENCE_FILE);
        io::write_trajectory(&path, reference)?;
        written.push(path);
    }
    let path = dir.join(RESIDUALS_FILE);
    io::write_residuals(&path, &sim.residuals)?;
    written.push(path);
    if let Some(errors) = &sim.errors {
        let path = dir.join(ERRORS_FILE);
        io::write_columns_csv(&path, &["t", "error"], &[sim.residuals.times(), errors])?;
        written.push(path);
    }
    Ok(written)
}

fn fit_gamma2(config: &RunConfig) -> Result<f64> {
    let gamma2 = config.gamma2()?;
    if !(gamma2 > 0.0) {
        return Err(Error::config("observation.gamma2", "must be positive to fit the model"));
    }
    Ok(gamma2)
}

/// Run the sampler on a residual file; writes the draws and the `lambda` trace.
pub fn cmd_fit(config: &RunConfig, residuals_path: &Path) -> Result<Vec<PathBuf>> {
    let gamma2 = fit_gamma2(config)?;
    let resid = io::read_residuals(residuals_path, gamma2)?;
    let draws = run_chains(&resid, &config.gibbs_config()?, config.gibbs.chains)?;
    let dir = &config.output.dir;
    let draws_path = dir.join(config.output.draws_format.file_name());
    match config.output.draws_format {
        crate::config::DrawsFormat::Bin => io::write_draws_bin(&draws_path, &draws)?,
        crate::config::DrawsFormat::Csv => io::write_draws_csv(&draws_path, &draws)?,
    }
    let trace_path = dir.join(TRACE_FILE);
    io::write_trace(&trace_path, &draws)?;
    Ok(vec![draws_path, trace_path])
}

/// Summaries of all four targets. Observation times come from the residual
/// file when given, otherwise from the configured window.
pub fn cmd_summarize(config: &RunConfig, draws_path: &Path, residuals_path: Option<&Path>) -> Result<Vec<PathBuf>> {
    let gamma2 = fit_gamma2(config)?;
    let draws = io::read_draws(draws_path)?;
    let times = match residuals_path {
        Some(p) => io::read_residuals(p, gamma2)?.times().to_vec(),
        None => config.observation_times()?,
    };
    let dir = &config.output.dir;
    let (sl, pl) = (config.output.sigma_level, config.output.predictive_level);
    let mut rng = substream(config.seed, PREDICTIVE_STREAM);
    let mut written = Vec::new();
    for target in SummaryTarget::ALL {
        let summary = match target {
            SummaryTarget::Sigma => summarize_sigma(&draws, &times, sl)?,
            SummaryTarget::ErrorSd => summarize_error_sd(&draws, &times, gamma2, sl)?,
            predictive => predictive_abs(&draws, &times, gamma2, predictive, pl, &mut rng)?,
        };
        written.extend(io::write_summary(dir, &summary)?);
    }
    Ok(written)
}

pub fn cmd_baseline(config: &RunConfig, residuals_path: &Path) -> Result<Vec<PathBuf>> {
    let gamma2 = config.gamma2()?;
    let resid = io::read_residuals(residuals_path, gamma2)?;
    let est = isotonic_mle(&resid)?;
    let path = config.output.dir.join(BASELINE_FILE);
    io::write_two_column_dat(&path, &est.times, &est.sigma2_hat)?;
    Ok(vec![path])
}

/// simulate, fit, summarize and baseline in sequence, then a manifest of
/// SHA-256 hashes for every file written.
pub fn cmd_quantify(config: &RunConfig) -> Result<PathBuf> {
    let dir = &config.output.dir;
    let mut written = cmd_simulate(config)?;
    let resid = dir.join(RESIDUALS_FILE);
    let fit = cmd_fit(config, &resid)?;
    let draws = fit[0].clone();
    written.extend(fit);
    written.extend(cmd_summarize(config, &draws, Some(&resid))?);
    written.extend(cmd_baseline(config, &resid)?);
    write_manifest(dir, &written)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `<sha256>  <file name>` per line, sorted by name.
pub fn write_manifest(dir: &Path, files: &[PathBuf]) -> Result<PathBuf> {
    let mut entries = BTreeMap::new();
    for f in files {
        let name = f.strip_prefix(dir).unwrap_or(f).display().to_string();
        entries.insert(name, sha256_file(f)?);
    }
    let mut text = String::new();
    for (name, hash) in &entries {
        writeln!(text, "{hash}  {name}").unwrap();
    }
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Read a manifest back as `(file name, hash)` pairs.
pub fn read_manifest(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let (hash, name) = line.split_once("  ").ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "expected `<hash>  <name>`".into(),
            })?;
            Ok((name.to_string(), hash.to_string()))
        })
        .collect()
}

/// Description of the sweep, as printed by `--print-algorithm`.
pub const ALGORITHM: &str = "\
Gibbs sweep (one iteration, in order):
  1. s_i      mixture label of z_i = ln r_i^2, for every i
              posterior mode: P(s_i = k) ~ w_k N(z_i; eta_1 + ... + eta_i + m_k, v_k^2)
              prior mode:     P(s_i = k) = w_k
  2. eta_1    N(mu_1, w_1^2) truncated to [ln gamma^2, inf)
  3. eta_j    N(mu_j, w_j^2) truncated to [0, inf), j = 2..n in order,
              partial residuals k_{i,j} carried by k_{i,j} = k_{i,j-1} - eta_{j-1} + eta_j
  4. nu_1     Ga(3/2, 1 + tau_1)
  5. tau_1    GIG(2 nu_1, (eta_1 - ln gamma^2)^2, 1/2)
  6. nu_j     Ga(1, 1 + tau_j), j = 2..n
  7. tau_j    GIG(2 nu_j, eta_j^2 / lambda, 0), j = 2..n
  8. xi       Ga(1, 1 + lambda)
  9. lambda   GIG(2 xi, sum_j eta_j^2 / tau_j, (2 - n) / 2)
 10. sigma_i^2 = exp(eta_1 + ... + eta_i)

Conventions:
  - Step 7 assigns tau_j for each j (a common listing writes tau_1 on this
    line; that index is a typo, since tau_1 is already drawn in step 5).
  - mu_1 = (tau_1 mu~_1 + w~_1^2 ln gamma^2) / (w~_1^2 + tau_1) and
    w_j^2 = w~_j^2 lambda tau_j / (w~_j^2 + lambda tau_j): the conjugate
    normal-normal forms.
  - Ga(shape, rate); GIG(a, b, p) has density ~ x^(p-1) exp(-(a x + b / x) / 2).
  - GIG draws with negligible b and p > 0 use an independence
    Metropolis-Hastings step with a Ga(p, a/2) proposal.
  - Default s mode is posterior; prior mode does not leave the joint
    posterior invariant and is kept for comparison only.
";
