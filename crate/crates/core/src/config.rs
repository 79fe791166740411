//! Run configuration: a TOML document with one table per stage.
//!
//! ```toml
//! seed = 1
//!
//! [model]
//! kind = "fn"                 # fn | kepler | custom-csv
//! a = 0.2                     # fn parameters
//! b = 0.2
//! c = 3.0
//! # e = 0.6                   # kepler eccentricity
//! # x0 = [1.0, -1.0]          # optional initial state
//! # observations = "obs.csv"  # custom-csv: columns t,value
//! # numeric = "numeric.dat"   # custom-csv: time then state columns
//!
//! [integrator]
//! method = "explicit_euler"   # explicit_euler | symplectic_euler | reference
//! h = 0.1
//! # t_end = 50.0              # defaults to the last observation time
//!
//! [reference]
//! abstol = 1e-10
//! reltol = 1e-10
//!
//! [observation]
//! operator = "component:0"    # component:<i> | velocity_magnitude
//! t_start = 5.0
//! t_end = 50.0
//! dt = 0.2
//! gamma2 = 0.0025
//!
//! [gibbs]
//! n_samples = 2500
//! burn_in = 500
//! s_mode = "posterior"        # posterior | prior
//! thinning = 1
//! store_eta = false
//! chains = 1
//!
//! [output]
//! dir = "out"
//! sigma_level = 0.95
//! predictive_level = 0.9
//! draws_format = "bin"        # bin | csv
//! ```
//!
//! `ISOVAR_SEED` and `ISOVAR_OUT` override `seed` and `output.dir`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{GibbsConfig, SUpdateMode};
use crate::observe::{observation_times, ObservationOperator};
use crate::ode::{FnParams, KeplerParams, ReferenceOptions};

pub const SEED_ENV: &str = "ISOVAR_SEED";
pub const OUT_ENV: &str = "ISOVAR_OUT";

/// Built-in presets, by name.
pub const PRESETS: [(&str, &str); 5] = [
    ("fn-v", include_str!("../presets/fn-v.toml")),
    ("fn-r", include_str!("../presets/fn-r.toml")),
    ("fn-v-pred", include_str!("../presets/fn-v-pred.toml")),
    ("fn-r-pred", include_str!("../presets/fn-r-pred.toml")),
    ("kepler", include_str!("../presets/kepler.toml")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "fn")]
    FitzHughNagumo,
    #[serde(rename = "kepler")]
    Kepler,
    #[serde(rename = "custom-csv")]
    CustomCsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorMethod {
    ExplicitEuler,
    SymplecticEuler,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: IntegratorMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    #[serde(default = "default_tol")]
    pub abstol: f64,
    #[serde(default = "default_tol")]
    pub reltol: f64,
}

fn default_tol() -> f64 {
    1e-10
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self {
            abstol: default_tol(),
            reltol: default_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    pub operator: String,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsSection {
    pub n_samples: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default)]
    pub s_mode: SUpdateMode,
    #[serde(default = "one")]
    pub thinning: usize,
    #[serde(default)]
    pub store_eta: bool,
    #[serde(default = "one")]
    pub chains: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawsFormat {
    #[default]
    Bin,
    Csv,
}

impl DrawsFormat {
    pub fn file_name(&self) -> &'static str {
        match self {
            DrawsFormat::Bin => "draws.bin",
            DrawsFormat::Csv => "draws.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_sigma_level")]
    pub sigma_level: f64,
    #[serde(default = "default_predictive_level")]
    pub predictive_level: f64,
    #[serde(default)]
    pub draws_format: DrawsFormat,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_sigma_level() -> f64 {
    0.95
}
fn default_predictive_level() -> f64 {
    0.9
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            sigma_level: default_sigma_level(),
            predictive_level: default_predictive_level(),
            draws_format: DrawsFormat::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSection>,
    #[serde(default)]
    pub reference: ReferenceSection,
    pub observation: ObservationSection,
    pub gibbs: GibbsSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn parse_error(path: &Path, text: &str, err: toml::de::Error) -> Error {
    let line = err
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: err.message().to_string(),
    }
}

impl RunConfig {
    /// Parse and validate; `origin` names the source in diagnostics.
    pub fn from_toml_str(text: &str, origin: impl AsRef<Path>) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| parse_error(origin.as_ref(), text, e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text, path)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let names: Vec<_> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::config("preset", format!("unknown preset `{name}` (one of {})", names.join(", ")))
        })?;
        Self::from_toml_str(text, format!("<preset {name}>"))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Relative input paths of a `custom-csv` model are read relative to the
    /// config file.
    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.model.observations, &mut self.model.numeric].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Apply `ISOVAR_SEED` / `ISOVAR_OUT` if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(seed) = std::env::var(SEED_ENV) {
            self.seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::config(SEED_ENV, format!("not an unsigned integer: `{seed}`")))?;
        }
        if let Ok(dir) = std::env::var(OUT_ENV) {
            self.output.dir = PathBuf::from(dir);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        match m.kind {
            ModelKind::FitzHughNagumo => {
                self.fn_params()?;
                if let Some(x0) = &m.x0 {
                    expect_len("model.x0", x0, 2)?;
                }
            }
            ModelKind::Kepler => {
                self.kepler_params()?;
                if let Some(x0) = &m.x0 {
                    expect_len("model.x0", x0, 4)?;
                }
            }
            ModelKind::CustomCsv => {
                if m.observations.is_none() {
                    return Err(Error::config("model.observations", "required for custom-csv"));
                }
                if m.numeric.is_none() {
                    return Err(Error::config("model.numeric", "required for custom-csv"));
                }
            }
        }

        let o = &self.observation;
        let op = ObservationOperator::parse(&o.operator).map_err(|e| Error::config("observation.operator", e.to_string()))?;
        if let ObservationOperator::Component(i) = op {
            let dim = match m.kind {
                ModelKind::FitzHughNagumo => Some(2),
                ModelKind::Kepler => Some(4),
                ModelKind::CustomCsv => None,
            };
            if dim.is_some_and(|d| i >= d) {
                return Err(Error::config("observation.operator", format!("component {i} out of range")));
            }
        }
        observation_times(o.t_start, o.t_end, o.dt).map_err(|e| Error::config("observation.dt", e.to_string()))?;
        if o.t_start < 0.0 {
            return Err(Error::config("observation.t_start", "must be >= 0 (integration starts at t = 0)"));
        }
        let gamma2 = self.gamma2()?;
        if !(gamma2 >= 0.0 && gamma2.is_finite()) {
            return Err(Error::config("observation.gamma2", format!("must be >= 0, got {gamma2}")));
        }

        if m.kind != ModelKind::CustomCsv {
            let integ = self
                .integrator
                .as_ref()
                .ok_or_else(|| Error::config("integrator", "missing section"))?;
            if integ.method != IntegratorMethod::Reference {
                match integ.h {
                    Some(h) if h > 0.0 && h.is_finite() => {}
                    Some(h) => return Err(Error::config("integrator.h", format!("must be positive, got {h}"))),
                    None => return Err(Error::config("integrator.h", "missing step size")),
                }
            }
            if integ.method == IntegratorMethod::SymplecticEuler && m.kind != ModelKind::Kepler {
                return Err(Error::config("integrator.method", "symplectic_euler needs a separable model (kepler)"));
            }
            if self.integration_end() < o.t_end {
                return Err(Error::config("integrator.t_end", "integration window ends before the last observation"));
            }
        }
        if !(self.reference.abstol > 0.0 && self.reference.reltol > 0.0) {
            return Err(Error::config("reference", "tolerances must be positive"));
        }

        let g = &self.gibbs;
        if g.n_samples == 0 {
            return Err(Error::config("gibbs.n_samples", "must be positive"));
        }
        if g.thinning == 0 {
            return Err(Error::config("gibbs.thinning", "must be positive"));
        }
        if g.chains == 0 {
            return Err(Error::config("gibbs.chains", "must be positive"));
        }
        for (field, level) in [
            ("output.sigma_level", self.output.sigma_level),
            ("output.predictive_level", self.output.predictive_level),
        ] {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::config(field, format!("must lie in (0, 1), got {level}")));
            }
        }
        Ok(())
    }

    pub fn gamma2(&self) -> Result<f64> {
        self.observation
            .gamma2
            .ok_or_else(|| Error::config("observation.gamma2", "missing observation noise variance"))
    }

    pub fn operator(&self) -> Result<ObservationOperator> {
        ObservationOperator::parse(&self.observation.operator)
    }

    pub fn observation_times(&self) -> Result<Vec<f64>> {
        let o = &self.observation;
        observation_times(o.t_start, o.t_end, o.dt)
    }

    pub fn integration_end(&self) -> f64 {
        self.integrator
            .as_ref()
            .and_then(|i| i.t_end)
            .unwrap_or(self.observation.t_end)
    }

    pub fn fn_params(&self) -> Result<FnParams> {
        let d = FnParams::default();
        let m = &self.model;
        FnParams::new(m.a.unwrap_or(d.a), m.b.unwrap_or(d.b), m.c.unwrap_or(d.c))
            .map_err(|e| Error::config("model.c", e.to_string()))
    }

    pub fn kepler_params(&self) -> Result<KeplerParams> {
        let e = self.model.e.ok_or_else(|| Error::config("model.e", "kepler needs an eccentricity"))?;
        KeplerParams::new(e).map_err(|err| Error::config("model.e", err.to_string()))
    }

    pub fn reference_options(&self) -> ReferenceOptions {
        ReferenceOptions {
            abstol: self.reference.abstol,
            reltol: self.reference.reltol,
            output_dt: None,
        }
    }

    pub fn gibbs_config(&self) -> Result<GibbsConfig> {
        Ok(GibbsConfig {
            n_samples: self.gibbs.n_samples,
            burn_in: self.gibbs.burn_in,
            seed: self.seed,
            gamma2: self.gamma2()?,
            s_update_mode: self.gibbs.s_mode,
            thinning: self.gibbs.thinning,
            store_eta: self.gibbs.store_eta,
        })
    }
}

fn expect_len(field: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::config(field, format!("expected {n} values, got {}", v.len())));
    }
    Ok(())
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_toml_string())
    }
}
