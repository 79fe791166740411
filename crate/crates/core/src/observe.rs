//! Synthetic noisy observations and the residual series that drives inference.

use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::dist::substream;
use crate::error::{Error, Result};
use crate::ode::{sample_at, TrajectoryGrid};

/// Squared residuals are floored here before taking the log.
pub const SQUARED_RESIDUAL_FLOOR: f64 = 1e-300;

/// Generator stream reserved for observation noise.
pub const NOISE_STREAM: u64 = 0;

/// Scalar observation map `O: state -> R`.
#[derive(Clone)]
pub enum ObservationOperator {
    Component(usize),
    /// Euclidean norm of the momentum half of a `(q, p)` state.
    VelocityMagnitude,
    Custom {
        description: String,
        map: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for ObservationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.description())
    }
}

impl ObservationOperator {
    pub fn custom<F>(description: impl Into<String>, map: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        ObservationOperator::Custom {
            description: description.into(),
            map: Arc::new(map),
        }
    }

    /// Parses `component:<index>` or `velocity_magnitude`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "velocity_magnitude" {
            return Ok(ObservationOperator::VelocityMagnitude);
        }
        if let Some(idx) = s.strip_prefix("component:") {
            let idx = idx
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad component index in `{s}`")))?;
            return Ok(ObservationOperator::Component(idx));
        }
        Err(Error::invalid(format!(
            "unknown observation operator `{s}` (expected `component:<i>` or `velocity_magnitude`)"
        )))
    }

    pub fn description(&self) -> String {
        match self {
            ObservationOperator::Component(i) => format!("component:{i}"),
            ObservationOperator::VelocityMagnitude => "velocity_magnitude".to_string(),
            ObservationOperator::Custom { description, .. } => description.clone(),
        }
    }

    pub fn apply(&self, state: &[f64]) -> Result<f64> {
        match self {
            ObservationOperator::Component(i) => state.get(*i).copied().ok_or(Error::LengthMismatch {
                expected: i + 1,
                got: state.len(),
            }),
            ObservationOperator::VelocityMagnitude => {
                if state.len() % 2 != 0 {
                    return Err(Error::invalid("velocity magnitude needs an even-dimensional (q, p) state"));
                }
                Ok(state[state.len() / 2..].iter().map(|p| p * p).sum::<f64>().sqrt())
            }
            ObservationOperator::Custom { map, .. } => Ok(map(state)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub noise_var: f64,
}

impl ObservationSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, noise_var: f64) -> Result<Self> {
        check_times(&times)?;
        if values.len() != times.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: values.len(),
            });
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(Error::invalid(format!("noise variance must be >= 0, got {noise_var}")));
        }
        Ok(Self {
            times,
            values,
            noise_var,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Residuals `r_i` and their log-squares `z_i = ln r_i^2` for one observed
/// component.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    times: Vec<f64>,
    residuals: Vec<f64>,
    log_squares: Vec<f64>,
    noise_var: f64,
}

impl ResidualSeries {
    pub fn new(times: Vec<f64>, residuals: Vec<f64>, noise_var: f64) -> Result<Self> {
        check_times(&times)?;
        if residuals.len() != times.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: residuals.len(),
            });
        }
        if residuals.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("residuals must be finite"));
        }
        let log_squares = residuals.iter().map(|r| log_square(*r)).collect();
        Ok(Self {
            times,
            residuals,
            log_squares,
            noise_var,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }
    pub fn log_squares(&self) -> &[f64] {
        &self.log_squares
    }
    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn with_noise_var(mut self, noise_var: f64) -> Self {
        self.noise_var = noise_var;
        self
    }
}

pub fn log_square(r: f64) -> f64 {
    (r * r).max(SQUARED_RESIDUAL_FLOOR).ln()
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("observation times must be strictly increasing"));
    }
    Ok(())
}

/// `start, start + dt, ...` up to `end` inclusive (within rounding).
pub fn observation_times(start: f64, end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(end >= start) {
        return Err(Error::invalid(format!("bad observation window {start}:{dt}:{end}")));
    }
    let ratio = (end - start) / dt;
    let mut count = ratio.round();
    if (ratio - count).abs() > 1e-9 * ratio.max(1.0) {
        count = ratio.floor();
    }
    Ok((0..=count as usize).map(|i| start + i as f64 * dt).collect())
}

/// `v_i = O(x(t_i)) + e_i` with `e_i ~ N(0, gamma2)` drawn in time order from
/// the seeded noise stream.
pub fn observe(
    traj: &TrajectoryGrid,
    op: &ObservationOperator,
    times: &[f64],
    gamma2: f64,
    seed: u64,
) -> Result<ObservationSeries> {
    if !(gamma2 >= 0.0 && gamma2.is_finite()) {
        return Err(Error::invalid(format!("noise variance must be >= 0, got {gamma2}")));
    }
    check_times(times)?;
    let mut rng = substream(seed, NOISE_STREAM);
    let sd = gamma2.sqrt();
    let values = times
        .iter()
        .map(|&t| {
            let state = sample_at(traj, t)?;
            let noise: f64 = StandardNormal.sample(&mut rng);
            Ok(op.apply(&state)? + sd * noise)
        })
        .collect::<Result<Vec<_>>>()?;
    ObservationSeries::new(times.to_vec(), values, gamma2)
}

/// `r_i = v_i - O(x_i)` with the numerical state interpolated at `t_i`.
pub fn residuals(obs: &ObservationSeries, numeric: &TrajectoryGrid, op: &ObservationOperator) -> Result<ResidualSeries> {
    let r = obs
        .times
        .iter()
        .zip(&obs.values)
        .map(|(&t, &v)| Ok(v - op.apply(&sample_at(numeric, t)?)?))
        .collect::<Result<Vec<_>>>()?;
    ResidualSeries::new(obs.times.clone(), r, obs.noise_var)
}
