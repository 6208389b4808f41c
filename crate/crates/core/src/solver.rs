//! Pseudo-spectral time stepping of `θ_t + u·∇θ = -κ(-Δ)^s θ` with
//! `u = (-R₂θ, R₁θ)` on the `2π`-periodic square.
//!
//! The dissipation is integrated exactly through the per-mode factor
//! `exp(-κ|k|^{2s} t)` and the advection term by classical RK4 in the
//! integrating-factor variable. The quadratic term is dealiased by the 2/3
//! rule.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::spectral::{
    dealias_keeps, forward_transform, inverse_transform, Fft2, Grid, RealField, SpectralError,
    SpectralField,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("blow-up at t = {t}: sup norm {sup_norm:e}")]
    BlowUp { t: f64, sup_norm: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Floor on the velocity used in the CFL condition.
pub const VELOCITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub s: f64,
    pub kappa: f64,
    pub n: usize,
    pub t_end: f64,
    pub cfl: f64,
    pub dt_max: f64,
    pub dealias: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            s: 0.25,
            kappa: 1.0,
            n: 64,
            t_end: 1.0,
            cfl: 0.4,
            dt_max: 0.05,
            dealias: true,
        }
    }
}

impl SolverConfig {
    /// Checks the configuration. `s ∈ [1/2, 1)` is accepted for comparison
    /// runs; [`SolverConfig::is_super_critical`] tells the regimes apart.
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::InvalidConfig(msg));
        if !(self.s > 0.0 && self.s < 1.0) {
            return bad(format!("s = {} outside (0, 1)", self.s));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa = {} must be finite and >= 0", self.kappa));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl = {} outside (0, 1]", self.cfl));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return bad(format!("dt_max = {} must be positive", self.dt_max));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be finite and >= 0", self.t_end));
        }
        if self.n < 8 {
            return bad(format!("n = {} below the minimum of 8", self.n));
        }
        Grid::periodic(self.n).map_err(SolverError::from)?;
        Ok(())
    }

    pub fn is_super_critical(&self) -> bool {
        self.s < 0.5
    }
}

/// `min(dt_max, cfl Δx / max(‖u1‖∞, ‖u2‖∞, ε))`.
pub fn cfl_dt(u: (&RealField, &RealField), cfg: &SolverConfig) -> f64 {
    let speed = u.0.sup_norm().max(u.1.sup_norm());
    dt_for_speed(speed, u.0.grid().dx(), cfg)
}

fn dt_for_speed(speed: f64, dx: f64, cfg: &SolverConfig) -> f64 {
    cfg.dt_max.min(cfg.cfl * dx / speed.max(VELOCITY_FLOOR))
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub theta: SpectralField,
    pub t: f64,
}

impl State {
    pub fn from_physical(theta: &RealField, t: f64) -> Result<Self, SolverError> {
        let mut spec = forward_transform(theta)?;
        spec.symmetrize();
        Ok(Self { theta: spec, t })
    }

    pub fn physical(&self) -> Result<RealField, SolverError> {
        Ok(inverse_transform(&self.theta)?)
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    /// `max(‖u1‖∞, ‖u2‖∞)` at the start of the step.
    pub speed: f64,
}

/// Precomputed symbols for one configuration.
pub struct Solver {
    cfg: SolverConfig,
    grid: Grid,
    fft: Arc<Fft2>,
    decay: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    riesz1: Vec<f64>,
    riesz2: Vec<f64>,
    keep: Vec<bool>,
}

impl Solver {
    pub fn new(cfg: SolverConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        let grid = Grid::periodic(cfg.n)?;
        let n = grid.n();
        let size = n * n;
        let mut decay = vec![0.0; size];
        let mut k1 = vec![0.0; size];
        let mut k2 = vec![0.0; size];
        let mut riesz1 = vec![0.0; size];
        let mut riesz2 = vec![0.0; size];
        let mut keep = vec![true; size];
        for m1 in 0..n {
            for m2 in 0..n {
                let i = m1 * n + m2;
                let (w1, w2) = (grid.wavenumber(m1), grid.wavenumber(m2));
                let norm = grid.wavevector_norm(m1, m2);
                if norm > 0.0 {
                    decay[i] = cfg.kappa * norm.powf(2.0 * cfg.s);
                }
                if !grid.is_nyquist(m1) {
                    k1[i] = w1;
                }
                if !grid.is_nyquist(m2) {
                    k2[i] = w2;
                }
                if norm > 0.0 && !grid.is_nyquist(m1) && !grid.is_nyquist(m2) {
                    riesz1[i] = w1 / norm;
                    riesz2[i] = w2 / norm;
                }
                keep[i] = !cfg.dealias || dealias_keeps(&grid, m1, m2);
            }
        }
        Ok(Self {
            cfg,
            grid,
            fft: Fft2::for_size(n),
            decay,
            k1,
            k2,
            riesz1,
            riesz2,
            keep,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Builds the initial state, truncated to the retained band.
    pub fn initial_state(&self, theta0: &RealField, t: f64) -> Result<State, SolverError> {
        if theta0.grid().n() != self.grid.n() {
            return Err(SolverError::InvalidConfig(format!(
                "initial field has n = {}, solver expects {}",
                theta0.grid().n(),
                self.grid.n()
            )));
        }
        let mut state = State::from_physical(theta0, t)?;
        for (c, &keep) in state.theta.coefficients_mut().iter_mut().zip(&self.keep) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        Ok(state)
    }

    /// `-dealias(F[u·∇θ])` and the velocity sup norm.
    fn nonlinear(&self, v: &[Complex64]) -> (Vec<Complex64>, f64) {
        let i = Complex64::new(0.0, 1.0);
        // u1 + i ∂1θ and u2 + i ∂2θ are each the transform of one complex
        // field whose real and imaginary parts are the two real factors
        let mut first: Vec<Complex64> = v
            .iter()
            .enumerate()
            .map(|(j, &c)| -i * self.riesz2[j] * c + i * (i * self.k1[j] * c))
            .collect();
        let mut second: Vec<Complex64> = v
            .iter()
            .enumerate()
            .map(|(j, &c)| i * self.riesz1[j] * c + i * (i * self.k2[j] * c))
            .collect();
        self.fft.inverse(&mut first);
        self.fft.inverse(&mut second);
        let mut speed = 0.0f64;
        let mut product: Vec<Complex64> = first
            .iter()
            .zip(&second)
            .map(|(a, b)| {
                speed = speed.max(a.re.abs()).max(b.re.abs());
                Complex64::new(a.re * a.im + b.re * b.im, 0.0)
            })
            .collect();
        self.fft.forward(&mut product);
        let scale = -1.0 / (self.grid.len() as f64);
        for (c, &keep) in product.iter_mut().zip(&self.keep) {
            *c = if keep { *c * scale } else { Complex64::new(0.0, 0.0) };
        }
        product[0] = Complex64::new(0.0, 0.0);
        (product, speed)
    }

    /// One step with the CFL step size, clipped so that `t + dt <= t_limit`.
    pub fn step_until(&self, state: &State, t_limit: f64) -> Result<(State, StepInfo), SolverError> {
        let v = state.theta.coefficients();
        let (a, speed) = self.nonlinear(v);
        let mut dt = dt_for_speed(speed, self.grid.dx(), &self.cfg);
        let remaining = t_limit - state.t;
        let landing = remaining <= dt * (1.0 + 1e-9);
        if landing {
            dt = remaining;
        }
        if !(dt > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "non-positive step {dt} at t = {}",
                state.t
            )));
        }
        let half: Vec<f64> = self.decay.iter().map(|l| (-0.5 * l * dt).exp()).collect();
        let h = 0.5 * dt;

        let stage: Vec<Complex64> = (0..v.len()).map(|j| half[j] * (v[j] + h * a[j])).collect();
        let (b, _) = self.nonlinear(&stage);
        let stage: Vec<Complex64> = (0..v.len()).map(|j| half[j] * v[j] + h * b[j]).collect();
        let (c, _) = self.nonlinear(&stage);
        let stage: Vec<Complex64> = (0..v.len())
            .map(|j| half[j] * (half[j] * v[j] + dt * c[j]))
            .collect();
        let (d, _) = self.nonlinear(&stage);
        let next: Vec<Complex64> = (0..v.len())
            .map(|j| {
                let e = half[j];
                let e2 = e * e;
                e2 * v[j] + dt / 6.0 * (e2 * a[j] + 2.0 * e * (b[j] + c[j]) + d[j])
            })
            .collect();

        let t = if landing { t_limit } else { state.t + dt };
        if let Some(bad) = next.iter().find(|c| !(c.re.is_finite() && c.im.is_finite())) {
            let _ = bad;
            return Err(SolverError::BlowUp {
                t,
                sup_norm: f64::INFINITY,
            });
        }
        let mut theta = SpectralField::new(self.grid, next)?;
        theta.symmetrize();
        Ok((State { theta, t }, StepInfo { dt, speed }))
    }

    /// One unclipped step.
    pub fn step(&self, state: &State) -> Result<(State, StepInfo), SolverError> {
        self.step_until(state, f64::INFINITY)
    }
}

/// One step of the solver for `cfg`.
pub fn step(state: &State, cfg: &SolverConfig) -> Result<State, SolverError> {
    Ok(Solver::new(*cfg)?.step(state)?.0)
}

/// Receives the state at every sample time.
pub trait Observer {
    fn sample(&mut self, state: &State, theta: &RealField);
}

impl<F: FnMut(&State, &RealField)> Observer for F {
    fn sample(&mut self, state: &State, theta: &RealField) {
        self(state, theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_state: State,
    pub steps: usize,
    pub samples: usize,
}

/// Blow-up threshold relative to the sup norm at the start of a run.
pub const BLOW_UP_FACTOR: f64 = 10.0;

/// Index of the first sample time strictly after `t`.
fn next_sample_index(t: f64, sample_dt: f64) -> u64 {
    let j = (t / sample_dt * (1.0 + 1e-12)).floor() as u64;
    if j as f64 * sample_dt > t * (1.0 + 1e-12) {
        j
    } else {
        j + 1
    }
}

/// Integrates from `theta0` at `t = 0` to `cfg.t_end`, calling `observer`
/// at `t = 0`, at every multiple of `sample_dt` and at `t_end`.
pub fn run(
    theta0: &RealField,
    cfg: &SolverConfig,
    sample_dt: f64,
    observer: &mut dyn Observer,
) -> Result<RunSummary, SolverError> {
    let solver = Solver::new(*cfg)?;
    let state = solver.initial_state(theta0, 0.0)?;
    let theta = state.physical()?;
    observer.sample(&state, &theta);
    advance(&solver, state, sample_dt, observer, 1)
}

/// Continues a run from `state` (typically loaded from a snapshot) without
/// re-sampling the starting point.
pub fn run_from(
    state: State,
    cfg: &SolverConfig,
    sample_dt: f64,
    observer: &mut dyn Observer,
) -> Result<RunSummary, SolverError> {
    let solver = Solver::new(*cfg)?;
    if state.theta.grid().n() != cfg.n {
        return Err(SolverError::InvalidConfig(format!(
            "state has n = {}, configuration has n = {}",
            state.theta.grid().n(),
            cfg.n
        )));
    }
    advance(&solver, state, sample_dt, observer, 0)
}

fn advance(
    solver: &Solver,
    mut state: State,
    sample_dt: f64,
    observer: &mut dyn Observer,
    mut samples: usize,
) -> Result<RunSummary, SolverError> {
    if !(sample_dt > 0.0 && sample_dt.is_finite()) {
        return Err(SolverError::InvalidConfig(format!(
            "sample interval {sample_dt} must be positive"
        )));
    }
    let t_end = solver.config().t_end;
    let limit = BLOW_UP_FACTOR * state.physical()?.sup_norm();
    let mut steps = 0;
    while state.t < t_end {
        let target = (next_sample_index(state.t, sample_dt) as f64 * sample_dt).min(t_end);
        while state.t < target {
            let (next, _) = solver.step_until(&state, target)?;
            state = next;
            steps += 1;
            if state.t < target {
                let sup = state.physical()?.sup_norm();
                if sup > limit {
                    return Err(SolverError::BlowUp {
                        t: state.t,
                        sup_norm: sup,
                    });
                }
            }
        }
        let theta = state.physical()?;
        if theta.sup_norm() > limit {
            return Err(SolverError::BlowUp {
                t: state.t,
                sup_norm: theta.sup_norm(),
            });
        }
        observer.sample(&state, &theta);
        samples += 1;
    }
    Ok(RunSummary {
        final_state: state,
        steps,
        samples,
    })
}
