//! ODE models and the integrators used to produce the numerical solution
//! under study and a high-accuracy reference solution.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Signature of a right-hand side `f(x)` writing into `out`.
pub type VectorField = dyn Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync;

/// Below this squared radius the Kepler force is treated as singular.
pub const KEPLER_SINGULAR_THRESHOLD: f64 = 1e-12;

/// Autonomous ODE `dx/dt = f(x)`.
#[derive(Clone)]
pub struct OdeModel {
    name: String,
    dimension: usize,
    field: Arc<VectorField>,
    hamiltonian_split: bool,
}

impl fmt::Debug for OdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeModel")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .field("hamiltonian_split", &self.hamiltonian_split)
            .finish()
    }
}

impl OdeModel {
    pub fn new<F>(name: impl Into<String>, dimension: usize, field: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync + 'static,
    {
        if dimension == 0 {
            return Err(Error::invalid("model dimension must be positive"));
        }
        Ok(Self {
            name: name.into(),
            dimension,
            field: Arc::new(field),
            hamiltonian_split: false,
        })
    }

    /// Marks the state as `(q, p)` halves of a separable Hamiltonian system:
    /// `dq/dt` depends on `p` only and `dp/dt` on `q` only.
    pub fn with_hamiltonian_split(mut self) -> Result<Self> {
        if self.dimension % 2 != 0 {
            return Err(Error::invalid(format!(
                "hamiltonian split needs an even dimension, got {}",
                self.dimension
            )));
        }
        self.hamiltonian_split = true;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_hamiltonian_split(&self) -> bool {
        self.hamiltonian_split
    }

    pub fn eval(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        if state.len() != self.dimension {
            return Err(Error::LengthMismatch {
                expected: self.dimension,
                got: state.len(),
            });
        }
        if out.len() != self.dimension {
            return Err(Error::LengthMismatch {
                expected: self.dimension,
                got: out.len(),
            });
        }
        (self.field)(state, out)
    }

    pub fn fitzhugh_nagumo(params: FnParams) -> Self {
        Self::new("fitzhugh-nagumo", 2, move |x, out| {
            let d = fn_vector_field(&params, [x[0], x[1]]);
            out.copy_from_slice(&d);
            Ok(())
        })
        .expect("dimension is positive")
    }

    pub fn kepler() -> Self {
        Self::kepler_with_threshold(KEPLER_SINGULAR_THRESHOLD)
    }

    pub fn kepler_with_threshold(threshold: f64) -> Self {
        Self::new("kepler", 4, move |x, out| {
            let d = kepler_vector_field_with([x[0], x[1], x[2], x[3]], threshold)?;
            out.copy_from_slice(&d);
            Ok(())
        })
        .and_then(Self::with_hamiltonian_split)
        .expect("dimension is 4")
    }
}

/// FitzHugh–Nagumo parameters `(a, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FnParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl FnParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if c == 0.0 || !c.is_finite() {
            return Err(Error::invalid("FitzHugh-Nagumo parameter c must be finite and nonzero"));
        }
        Ok(Self { a, b, c })
    }
}

impl Default for FnParams {
    fn default() -> Self {
        Self { a: 0.2, b: 0.2, c: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeplerParams {
    pub e: f64,
}

impl KeplerParams {
    pub fn new(e: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&e) {
            return Err(Error::invalid(format!("eccentricity must lie in [0, 1), got {e}")));
        }
        Ok(Self { e })
    }

    /// Pericentre start `(1 - e, 0, 0, sqrt((1 + e) / (1 - e)))` of the
    /// orbit with unit semi-major axis (period `2*pi`).
    pub fn initial_state(&self) -> [f64; 4] {
        let e = self.e;
        [1.0 - e, 0.0, 0.0, ((1.0 + e) / (1.0 - e)).sqrt()]
    }
}

pub fn fn_vector_field(params: &FnParams, state: [f64; 2]) -> [f64; 2] {
    let [v, r] = state;
    let FnParams { a, b, c } = *params;
    [c * (v - v * v * v / 3.0 + r), -(v - a + b * r) / c]
}

pub fn kepler_vector_field(state: [f64; 4]) -> Result<[f64; 4]> {
    kepler_vector_field_with(state, KEPLER_SINGULAR_THRESHOLD)
}

pub fn kepler_vector_field_with(state: [f64; 4], threshold: f64) -> Result<[f64; 4]> {
    let [q1, q2, p1, p2] = state;
    let norm2 = q1 * q1 + q2 * q2;
    if norm2 < threshold {
        return Err(Error::SingularOrigin { norm2 });
    }
    let inv_r3 = 1.0 / (norm2 * norm2.sqrt());
    Ok([p1, p2, -q1 * inv_r3, -q2 * inv_r3])
}

/// Time grid with one state vector per node, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryGrid {
    times: Vec<f64>,
    dimension: usize,
    states: Vec<f64>,
}

impl TrajectoryGrid {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptyInput("trajectory"));
        }
        if states.len() != times.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: states.len(),
            });
        }
        let dimension = states[0].len();
        if dimension == 0 {
            return Err(Error::invalid("trajectory states must be nonempty"));
        }
        let mut flat = Vec::with_capacity(dimension * states.len());
        for s in &states {
            if s.len() != dimension {
                return Err(Error::LengthMismatch {
                    expected: dimension,
                    got: s.len(),
                });
            }
            flat.extend_from_slice(s);
        }
        Self::from_flat(times, dimension, flat)
    }

    pub fn from_flat(times: Vec<f64>, dimension: usize, states: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptyInput("trajectory"));
        }
        if states.len() != dimension * times.len() {
            return Err(Error::LengthMismatch {
                expected: dimension * times.len(),
                got: states.len(),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("trajectory times must be strictly increasing"));
        }
        Ok(Self {
            times,
            dimension,
            states,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dimension..(k + 1) * self.dimension]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dimension)
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }
}

/// Linear interpolation between the bracketing grid states.
///
/// Times within `1e-9 * max(1, span)` outside the grid are snapped to the
/// nearest end; anything further out is an error.
pub fn sample_at(traj: &TrajectoryGrid, t: f64) -> Result<Vec<f64>> {
    let (start, end) = traj.span();
    let slack = 1e-9 * (end - start).abs().max(1.0);
    if !(t >= start - slack && t <= end + slack) {
        return Err(Error::OutOfRange { t, start, end });
    }
    let times = traj.times();
    let t = t.clamp(start, end);
    // first index with times[k] > t
    let upper = times.partition_point(|&s| s <= t);
    if upper == 0 {
        return Ok(traj.state(0).to_vec());
    }
    let lo = upper - 1;
    if times[lo] == t || upper == times.len() {
        return Ok(traj.state(lo).to_vec());
    }
    let w = (t - times[lo]) / (times[upper] - times[lo]);
    let (a, b) = (traj.state(lo), traj.state(upper));
    Ok(a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect())
}

fn check_step(h: f64, n_steps: usize, x0: &[f64], model: &OdeModel) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("step size must be positive, got {h}")));
    }
    if n_steps == 0 {
        return Err(Error::invalid("number of steps must be positive"));
    }
    if x0.len() != model.dimension() {
        return Err(Error::LengthMismatch {
            expected: model.dimension(),
            got: x0.len(),
        });
    }
    Ok(())
}

/// `x_{k+1} = x_k + h f(x_k)`, with `t_k = t0 + k h`.
pub fn integrate_explicit_euler(
    model: &OdeModel,
    x0: &[f64],
    t0: f64,
    h: f64,
    n_steps: usize,
) -> Result<TrajectoryGrid> {
    check_step(h, n_steps, x0, model)?;
    let d = model.dimension();
    let mut states = Vec::with_capacity(d * (n_steps + 1));
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut dx = vec![0.0; d];
    for _ in 0..n_steps {
        model.eval(&x, &mut dx)?;
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += h * di;
        }
        states.extend_from_slice(&x);
    }
    let times = (0..=n_steps).map(|k| t0 + k as f64 * h).collect();
    TrajectoryGrid::from_flat(times, d, states)
}

/// Symplectic Euler for separable `(q, p)` systems, momentum first:
/// `p_{k+1} = p_k + h g(q_k)` then `q_{k+1} = q_k + h u(p_{k+1})`.
pub fn integrate_symplectic_euler(
    model: &OdeModel,
    x0: &[f64],
    t0: f64,
    h: f64,
    n_steps: usize,
) -> Result<TrajectoryGrid> {
    if !model.is_hamiltonian_split() {
        return Err(Error::invalid(format!(
            "model `{}` has no hamiltonian split; symplectic Euler needs (q, p) structure",
            model.name()
        )));
    }
    check_step(h, n_steps, x0, model)?;
    let d = model.dimension();
    let half = d / 2;
    let mut states = Vec::with_capacity(d * (n_steps + 1));
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut dx = vec![0.0; d];
    for _ in 0..n_steps {
        model.eval(&x, &mut dx)?;
        for k in half..d {
            x[k] += h * dx[k];
        }
        model.eval(&x, &mut dx)?;
        for k in 0..half {
            x[k] += h * dx[k];
        }
        states.extend_from_slice(&x);
    }
    let times = (0..=n_steps).map(|k| t0 + k as f64 * h).collect();
    TrajectoryGrid::from_flat(times, d, states)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    pub abstol: f64,
    pub reltol: f64,
    /// Store the solution on `t0 + k * dt` (plus the end point) instead of
    /// at every accepted step.
    pub output_dt: Option<f64>,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            abstol: 1e-8,
            reltol: 1e-8,
            output_dt: None,
        }
    }
}

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn weighted_rms(v: &[f64], scale: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(scale).map(|(x, s)| (x / s).powi(2)).sum();
    (s / v.len() as f64).sqrt()
}

fn output_times(t0: f64, t1: f64, dt: Option<f64>) -> Result<Vec<f64>> {
    match dt {
        None => Ok(vec![t1]),
        Some(dt) => {
            if !(dt > 0.0) {
                return Err(Error::invalid(format!("output spacing must be positive, got {dt}")));
            }
            let ratio = (t1 - t0) / dt;
            let mut k_max = ratio.round();
            if (ratio - k_max).abs() > 1e-9 * ratio.max(1.0) {
                k_max = ratio.floor();
            }
            let mut out: Vec<f64> = (1..=k_max as usize).map(|k| t0 + k as f64 * dt).collect();
            match out.last_mut() {
                Some(last) if (t1 - *last).abs() <= 1e-9 * dt => *last = t1,
                _ => out.push(t1),
            }
            Ok(out)
        }
    }
}

/// Adaptive embedded 5(4) Runge–Kutta (Dormand–Prince) integration on
/// `[t0, t1]`, accepting steps on the mixed absolute/relative RMS norm.
pub fn integrate_reference(
    model: &OdeModel,
    x0: &[f64],
    t_span: (f64, f64),
    opts: &ReferenceOptions,
) -> Result<TrajectoryGrid> {
    let (t0, t1) = t_span;
    if !(opts.abstol > 0.0 && opts.reltol > 0.0) {
        return Err(Error::invalid("tolerances must be positive"));
    }
    if !(t1 > t0) {
        return Err(Error::invalid(format!("empty time span [{t0}, {t1}]")));
    }
    let d = model.dimension();
    if x0.len() != d {
        return Err(Error::LengthMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    let dense = opts.output_dt.is_some();
    let targets = output_times(t0, t1, opts.output_dt)?;

    let mut times = vec![t0];
    let mut states = x0.to_vec();
    let mut t = t0;
    let mut y = x0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; d]; 7];
    let mut stage = vec![0.0; d];
    let mut y_new = vec![0.0; d];
    let mut err = vec![0.0; d];
    let mut scale = vec![0.0; d];
    model.eval(&y, &mut k[0])?;

    let mut h = initial_step(model, &y, &k[0], opts, t1 - t0)?;
    let mut target_idx = 0;

    while target_idx < targets.len() {
        let target = targets[target_idx];
        let floor = 1e-14 * t.abs().max(1.0);
        let remaining = target - t;
        if remaining <= floor {
            t = target;
            times.push(t);
            states.extend_from_slice(&y);
            target_idx += 1;
            continue;
        }
        let clipped = remaining <= h;
        let step = if clipped { remaining } else { h };
        if step < floor {
            return Err(Error::StepUnderflow { t, h: step });
        }

        for s in 1..7 {
            let (done, rest) = k.split_at_mut(s);
            for i in 0..d {
                let acc: f64 = done.iter().enumerate().map(|(j, kj)| A[s][j] * kj[i]).sum();
                stage[i] = y[i] + step * acc;
            }
            model.eval(&stage, &mut rest[0])?;
        }
        // the seventh stage is evaluated at the 5th-order solution itself
        y_new.copy_from_slice(&stage);
        for i in 0..d {
            err[i] = step * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>();
            scale[i] = opts.abstol + opts.reltol * y[i].abs().max(y_new[i].abs());
        }
        let e = weighted_rms(&err, &scale);
        if e <= 1.0 {
            t = if clipped { target } else { t + step };
            y.copy_from_slice(&y_new);
            k.swap(0, 6);
            let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
            // a clipped step says nothing about the controller's step size
            if !clipped || step * factor > h {
                h = step * factor;
            }
            if clipped {
                times.push(t);
                states.extend_from_slice(&y);
                target_idx += 1;
            } else if !dense {
                times.push(t);
                states.extend_from_slice(&y);
            }
        } else {
            h = step * (0.9 * e.powf(-0.2)).clamp(0.2, 1.0);
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t, h });
            }
        }
    }
    TrajectoryGrid::from_flat(times, d, states)
}

fn initial_step(
    model: &OdeModel,
    y0: &[f64],
    f0: &[f64],
    opts: &ReferenceOptions,
    span: f64,
) -> Result<f64> {
    let d = y0.len();
    let scale: Vec<f64> = y0.iter().map(|y| opts.abstol + opts.reltol * y.abs()).collect();
    let d0 = weighted_rms(y0, &scale);
    let d1 = weighted_rms(f0, &scale);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; d];
    model.eval(&y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = weighted_rms(&diff, &scale) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span))
}
