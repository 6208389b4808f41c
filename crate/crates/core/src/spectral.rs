//! Periodic 2D grids, fields in physical and Fourier representation, and the
//! Fourier-multiplier operators used by the solver: gradient, spectral
//! fractional Laplacian, Riesz-transform velocity and 2/3-rule dealiasing.
//!
//! Layout is row-major with `x1` as the row index: `values[j1 * n + j2]` holds
//! the sample at `(j1 * dx, j2 * dx)`. Spectral coefficients use the same
//! layout with FFT index ordering, so `coefficients[m1 * n + m2]` belongs to
//! the integer frequency `(freq(m1), freq(m2))`, `freq(m) = m` for `m < n/2`
//! and `m - n` otherwise.
//!
//! Forward transforms are normalised by `1/n^2`, so that `cos(x1)` has
//! coefficient `1/2` at `k = (±1, 0)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("grid size {0} is invalid: need an even number of points >= 8")]
    InvalidGridSize(usize),
    #[error("grid period {0} must be positive and finite")]
    InvalidPeriod(f64),
    #[error("field has {got} values, grid expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("fractional power {0} outside (0, 1)")]
    InvalidPower(f64),
    #[error("fields live on different grids")]
    GridMismatch,
}

/// Square periodic grid with `n` points per dimension on `[0, length)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self, SpectralError> {
        if n < 4 || n % 2 != 0 {
            return Err(SpectralError::InvalidGridSize(n));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(SpectralError::InvalidPeriod(length));
        }
        Ok(Self { n, length })
    }

    /// Grid on the standard `2π` torus.
    pub fn periodic(n: usize) -> Result<Self, SpectralError> {
        Self::new(n, 2.0 * PI)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn coordinate(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    /// Signed integer frequency of FFT index `m`.
    pub fn frequency(&self, m: usize) -> i64 {
        let n = self.n as i64;
        let m = m as i64;
        if m < n / 2 {
            m
        } else {
            m - n
        }
    }

    /// Physical wavenumber of FFT index `m`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        2.0 * PI / self.length * self.frequency(m) as f64
    }

    /// FFT index holding the negative of frequency index `m`.
    pub fn mirror(&self, m: usize) -> usize {
        (self.n - m) % self.n
    }

    pub fn is_nyquist(&self, m: usize) -> bool {
        m == self.n / 2
    }

    /// Wavevector magnitude at `(m1, m2)`.
    pub fn wavevector_norm(&self, m1: usize, m2: usize) -> f64 {
        self.wavenumber(m1).hypot(self.wavenumber(m2))
    }
}

/// Real scalar field sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, SpectralError> {
        if values.len() != grid.len() {
            return Err(SpectralError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f(x1, x2)` at every grid node. Non-finite samples are rejected.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self, SpectralError> {
        let n = grid.n();
        let values = (0..grid.len())
            .map(|idx| f(grid.coordinate(idx / n), grid.coordinate(idx % n)))
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, j1: usize, j2: usize) -> f64 {
        self.values[j1 * self.grid.n + j2]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Grid approximation of `(1/|T|) ∫ θ^2`.
    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Pointwise sum; both fields must share a grid.
    pub fn add(&self, other: &RealField) -> Result<RealField, SpectralError> {
        if self.grid != other.grid {
            return Err(SpectralError::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &RealField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Spectral interpolation onto a grid with `n_new` points (zero padding
    /// or truncation of the coefficient array).
    pub fn resample(&self, n_new: usize) -> Result<RealField, SpectralError> {
        let grid = Grid::new(n_new, self.grid.length)?;
        let spec = forward_transform(self)?;
        let mut out = SpectralField::zeros(grid);
        let n = self.grid.n;
        let half = (n.min(n_new) / 2) as i64;
        for m1 in 0..n {
            for m2 in 0..n {
                let f1 = self.grid.frequency(m1);
                let f2 = self.grid.frequency(m2);
                // drop the (ambiguous) Nyquist row/column of the smaller grid
                if f1.abs() >= half || f2.abs() >= half {
                    continue;
                }
                let t1 = f1.rem_euclid(n_new as i64) as usize;
                let t2 = f2.rem_euclid(n_new as i64) as usize;
                out.coefficients[t1 * n_new + t2] = spec.coefficients[m1 * n + m2];
            }
        }
        inverse_transform(&out)
    }
}

/// Complex Fourier coefficients of a periodic field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coefficients: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: Grid, coefficients: Vec<Complex64>) -> Result<Self, SpectralError> {
        if coefficients.len() != grid.len() {
            return Err(SpectralError::LengthMismatch {
                expected: grid.len(),
                got: coefficients.len(),
            });
        }
        Ok(Self { grid, coefficients })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coefficients: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coefficients
    }

    /// Coefficient at signed integer frequency `(k1, k2)`.
    pub fn mode(&self, k1: i64, k2: i64) -> Complex64 {
        let n = self.grid.n as i64;
        let m1 = k1.rem_euclid(n) as usize;
        let m2 = k2.rem_euclid(n) as usize;
        self.coefficients[m1 * self.grid.n + m2]
    }

    pub fn mean(&self) -> f64 {
        self.coefficients[0].re
    }

    /// `Σ |c_k|^2`, equal to the mean square of the physical field (Parseval).
    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest violation of `c(-k) = conj(c(k))`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n;
        let mut worst = 0.0_f64;
        for m1 in 0..n {
            for m2 in 0..n {
                let a = self.coefficients[m1 * n + m2];
                let b = self.coefficients[self.grid.mirror(m1) * n + self.grid.mirror(m2)];
                worst = worst.max((a - b.conj()).norm());
            }
        }
        worst
    }

    /// Projects onto Hermitian-symmetric coefficient arrays (real fields).
    pub fn symmetrize(&mut self) {
        let n = self.grid.n;
        for m1 in 0..n {
            for m2 in 0..n {
                let i = m1 * n + m2;
                let j = self.grid.mirror(m1) * n + self.grid.mirror(m2);
                if j < i {
                    continue;
                }
                let avg = 0.5 * (self.coefficients[i] + self.coefficients[j].conj());
                self.coefficients[i] = avg;
                self.coefficients[j] = avg.conj();
            }
        }
    }

    /// Multiplies every coefficient by `symbol(m1, m2)`.
    pub fn apply_multiplier(&self, symbol: impl Fn(usize, usize) -> Complex64 + Sync) -> Self {
        let n = self.grid.n;
        let coefficients = self
            .coefficients
            .par_iter()
            .enumerate()
            .map(|(idx, c)| c * symbol(idx / n, idx % n))
            .collect();
        Self {
            grid: self.grid,
            coefficients,
        }
    }

    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.coefficients
            .iter()
            .zip(&other.coefficients)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()))
    }
}

fn check_finite(values: &[f64]) -> Result<(), SpectralError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(SpectralError::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Cached pair of 1D FFT plans for an `n x n` transform.
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    /// Shared plan for size `n`; plans are created once per size and reused
    /// from every thread.
    pub fn for_size(n: usize) -> Arc<Fft2> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Fft2>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(Fft2 {
                    n,
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                })
            })
            .clone()
    }

    fn process(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        data.par_chunks_mut(n).for_each_init(
            || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            |scratch, row| fft.process_with_scratch(row, scratch),
        );
        let mut t = transpose(data, n);
        t.par_chunks_mut(n).for_each_init(
            || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            |scratch, row| fft.process_with_scratch(row, scratch),
        );
        let back = transpose(&t, n);
        data.copy_from_slice(&back);
    }

    /// Unnormalised forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.process(data, &self.forward);
    }

    /// Unnormalised inverse transform in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.process(data, &self.inverse);
    }
}

fn transpose(data: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, v) in row.iter_mut().enumerate() {
            *v = data[i * n + j];
        }
    });
    out
}

pub fn forward_transform(f: &RealField) -> Result<SpectralField, SpectralError> {
    check_finite(&f.values)?;
    let grid = f.grid;
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Fft2::for_size(grid.n).forward(&mut data);
    let scale = 1.0 / grid.len() as f64;
    data.iter_mut().for_each(|c| *c *= scale);
    Ok(SpectralField {
        grid,
        coefficients: data,
    })
}

/// Inverse transform keeping the real part.
pub fn inverse_transform(f: &SpectralField) -> Result<RealField, SpectralError> {
    let mut data = f.coefficients.clone();
    Fft2::for_size(f.grid.n).inverse(&mut data);
    let values: Vec<f64> = data.into_iter().map(|c| c.re).collect();
    RealField::new(f.grid, values)
}

/// Partial derivative symbol `i k_j`; zero on the Nyquist line of axis `j`
/// so that real fields stay real.
fn derivative_symbol(grid: &Grid, axis: usize, m1: usize, m2: usize) -> Complex64 {
    let m = if axis == 0 { m1 } else { m2 };
    if grid.is_nyquist(m) {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, grid.wavenumber(m))
    }
}

pub fn gradient(f: &SpectralField) -> Result<(RealField, RealField), SpectralError> {
    let g = f.grid;
    let d1 = f.apply_multiplier(|m1, m2| derivative_symbol(&g, 0, m1, m2));
    let d2 = f.apply_multiplier(|m1, m2| derivative_symbol(&g, 1, m1, m2));
    Ok((inverse_transform(&d1)?, inverse_transform(&d2)?))
}

/// Second derivatives `(∂11, ∂12, ∂22)`.
pub fn hessian(f: &SpectralField) -> Result<[RealField; 3], SpectralError> {
    let g = f.grid;
    let mul = |a: usize, b: usize| {
        f.apply_multiplier(move |m1, m2| {
            derivative_symbol(&g, a, m1, m2) * derivative_symbol(&g, b, m1, m2)
        })
    };
    Ok([
        inverse_transform(&mul(0, 0))?,
        inverse_transform(&mul(0, 1))?,
        inverse_transform(&mul(1, 1))?,
    ])
}

/// Pointwise maximum of `|∇θ|` over the grid.
pub fn gradient_sup(f: &SpectralField) -> Result<f64, SpectralError> {
    let (g1, g2) = gradient(f)?;
    Ok(g1
        .values
        .iter()
        .zip(&g2.values)
        .fold(0.0_f64, |m, (a, b)| m.max(a.hypot(*b))))
}

/// Pointwise maximum of the Frobenius norm of the Hessian.
pub fn hessian_sup(f: &SpectralField) -> Result<f64, SpectralError> {
    let [h11, h12, h22] = hessian(f)?;
    let mut worst = 0.0_f64;
    for i in 0..h11.values.len() {
        let (a, b, c) = (h11.values[i], h12.values[i], h22.values[i]);
        worst = worst.max((a * a + 2.0 * b * b + c * c).sqrt());
    }
    Ok(worst)
}

/// Spectral symbol `|k|^{2s}` of `(-Δ)^s`.
pub fn fractional_symbol(grid: &Grid, s: f64, m1: usize, m2: usize) -> f64 {
    let k = grid.wavevector_norm(m1, m2);
    if k == 0.0 {
        0.0
    } else {
        k.powf(2.0 * s)
    }
}

/// Applies `(-Δ)^s` as the Fourier multiplier `|k|^{2s}`.
pub fn fractional_laplacian_spectral(
    f: &SpectralField,
    s: f64,
) -> Result<SpectralField, SpectralError> {
    if !(s > 0.0 && s < 1.0) {
        return Err(SpectralError::InvalidPower(s));
    }
    let g = f.grid;
    Ok(f.apply_multiplier(|m1, m2| Complex64::new(fractional_symbol(&g, s, m1, m2), 0.0)))
}

/// Spectral velocity `u = (-R2 θ, R1 θ)` with `R_j = i k_j / |k|`.
pub fn riesz_velocity_spectral(theta: &SpectralField) -> (SpectralField, SpectralField) {
    let g = theta.grid;
    let riesz = move |axis: usize, m1: usize, m2: usize| {
        if g.is_nyquist(m1) || g.is_nyquist(m2) {
            return Complex64::new(0.0, 0.0);
        }
        let k = g.wavevector_norm(m1, m2);
        if k == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let kj = if axis == 0 { g.wavenumber(m1) } else { g.wavenumber(m2) };
        Complex64::new(0.0, kj / k)
    };
    let u1 = theta.apply_multiplier(|m1, m2| -riesz(1, m1, m2));
    let u2 = theta.apply_multiplier(|m1, m2| riesz(0, m1, m2));
    (u1, u2)
}

pub fn riesz_velocity(theta: &SpectralField) -> Result<(RealField, RealField), SpectralError> {
    let (u1, u2) = riesz_velocity_spectral(theta);
    Ok((inverse_transform(&u1)?, inverse_transform(&u2)?))
}

/// Largest coefficient of `i k · û`.
pub fn spectral_divergence(u1: &SpectralField, u2: &SpectralField) -> Result<f64, SpectralError> {
    if u1.grid != u2.grid {
        return Err(SpectralError::GridMismatch);
    }
    let g = u1.grid;
    let n = g.n;
    let mut worst = 0.0_f64;
    for m1 in 0..n {
        for m2 in 0..n {
            let i = m1 * n + m2;
            let d = derivative_symbol(&g, 0, m1, m2) * u1.coefficients[i]
                + derivative_symbol(&g, 1, m1, m2) * u2.coefficients[i];
            worst = worst.max(d.norm());
        }
    }
    Ok(worst)
}

/// True when the 2/3 rule keeps mode `(m1, m2)`.
pub fn dealias_keeps(grid: &Grid, m1: usize, m2: usize) -> bool {
    let cutoff = grid.n() as i64 / 3;
    grid.frequency(m1).abs() <= cutoff && grid.frequency(m2).abs() <= cutoff
}

/// 2/3-rule truncation: zero every mode with `max(|k1|, |k2|) > n/3`.
pub fn dealias(f: &SpectralField) -> SpectralField {
    let g = f.grid;
    f.apply_multiplier(|m1, m2| {
        if dealias_keeps(&g, m1, m2) {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::periodic(n).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::periodic(2).is_err());
        assert!(Grid::periodic(9).is_err());
        assert!(Grid::new(16, 0.0).is_err());
        assert!(Grid::periodic(8).is_ok());
    }

    #[test]
    fn rejects_non_finite_fields() {
        let g = grid(8);
        let mut v = vec![0.0; 64];
        v[5] = f64::NAN;
        assert!(matches!(
            RealField::new(g, v),
            Err(SpectralError::NonFinite { index: 5, .. })
        ));
        assert!(matches!(
            RealField::new(g, vec![0.0; 10]),
            Err(SpectralError::LengthMismatch { expected: 64, got: 10 })
        ));
    }

    #[test]
    fn constant_field_has_only_mean() {
        let f = RealField::constant(grid(16), 2.5);
        let s = forward_transform(&f).unwrap();
        assert!((s.mode(0, 0).re - 2.5).abs() < 1e-15);
        let rest: f64 = s.coefficients().iter().skip(1).map(|c| c.norm()).sum();
        assert!(rest < 1e-13);
    }

    #[test]
    fn cosine_has_half_amplitudes() {
        let f = RealField::from_fn(grid(16), |x, _| x.cos()).unwrap();
        let s = forward_transform(&f).unwrap();
        for (k1, k2) in [(1, 0), (-1, 0)] {
            assert!((s.mode(k1, k2) - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
        let total: f64 = s.coefficients().iter().map(|c| c.norm()).sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn gradient_of_analytic_fields() {
        let g = grid(32);
        let c = forward_transform(&RealField::constant(g, 3.0)).unwrap();
        let (a, b) = gradient(&c).unwrap();
        assert!(a.sup_norm() < 1e-13 && b.sup_norm() < 1e-13);

        let f = forward_transform(&RealField::from_fn(g, |x, _| x.sin()).unwrap()).unwrap();
        let (a, b) = gradient(&f).unwrap();
        let expect = RealField::from_fn(g, |x, _| x.cos()).unwrap();
        assert!(a.max_abs_diff(&expect) < 1e-12);
        assert!(b.sup_norm() < 1e-12);

        let f = RealField::from_fn(g, |x, y| (2.0 * x).sin() * (3.0 * y).cos()).unwrap();
        let (a, b) = gradient(&forward_transform(&f).unwrap()).unwrap();
        let ea = RealField::from_fn(g, |x, y| 2.0 * (2.0 * x).cos() * (3.0 * y).cos()).unwrap();
        let eb = RealField::from_fn(g, |x, y| -3.0 * (2.0 * x).sin() * (3.0 * y).sin()).unwrap();
        assert!(a.max_abs_diff(&ea) < 1e-12);
        assert!(b.max_abs_diff(&eb) < 1e-12);
    }

    #[test]
    fn fractional_laplacian_eigenvalues() {
        let g = grid(16);
        let f = forward_transform(&RealField::from_fn(g, |x, _| x.cos()).unwrap()).unwrap();
        let out = inverse_transform(&fractional_laplacian_spectral(&f, 0.25).unwrap()).unwrap();
        let expect = RealField::from_fn(g, |x, _| x.cos()).unwrap();
        assert!(out.max_abs_diff(&expect) < 1e-13);

        let f = forward_transform(&RealField::from_fn(g, |x, _| (2.0 * x).cos()).unwrap()).unwrap();
        let out = inverse_transform(&fractional_laplacian_spectral(&f, 0.25).unwrap()).unwrap();
        let expect = RealField::from_fn(g, |x, _| 2f64.sqrt() * (2.0 * x).cos()).unwrap();
        assert!(out.max_abs_diff(&expect) < 1e-13);

        let c = forward_transform(&RealField::constant(g, 1.0)).unwrap();
        let out = inverse_transform(&fractional_laplacian_spectral(&c, 0.3).unwrap()).unwrap();
        assert!(out.sup_norm() < 1e-15);

        assert_eq!(
            fractional_laplacian_spectral(&c, 1.0).unwrap_err(),
            SpectralError::InvalidPower(1.0)
        );
        assert!(fractional_laplacian_spectral(&c, 0.0).is_err());
    }

    #[test]
    fn riesz_velocity_of_cos_x2() {
        let g = grid(32);
        let f = forward_transform(&RealField::from_fn(g, |_, y| y.cos()).unwrap()).unwrap();
        let (u1, u2) = riesz_velocity(&f).unwrap();
        let expect = RealField::from_fn(g, |_, y| y.sin()).unwrap();
        assert!(u1.max_abs_diff(&expect) < 1e-12);
        assert!(u2.sup_norm() < 1e-12);

        let c = forward_transform(&RealField::constant(g, 4.0)).unwrap();
        let (u1, u2) = riesz_velocity(&c).unwrap();
        assert!(u1.sup_norm() == 0.0 && u2.sup_norm() == 0.0);
    }

    #[test]
    fn dealias_truncates_upper_third() {
        let g = grid(16);
        let low = RealField::from_fn(g, |x, y| (2.0 * x).cos() + (x + 2.0 * y).sin()).unwrap();
        let s = forward_transform(&low).unwrap();
        assert!(dealias(&s).max_abs_diff(&s) < 1e-15);

        let high = RealField::from_fn(g, |x, _| (7.0 * x).cos()).unwrap();
        let s = forward_transform(&high).unwrap();
        assert!(dealias(&s).energy() < 1e-28);
        // n/3 = 5 for n = 16: kept
        let edge = forward_transform(&RealField::from_fn(g, |x, _| (5.0 * x).cos()).unwrap())
            .unwrap();
        assert!(dealias(&edge).max_abs_diff(&edge) < 1e-15);
        assert!((dealias(&edge).energy() - edge.energy()).abs() < 1e-15);
    }

    #[test]
    fn resample_preserves_band_limited_fields() {
        let g = grid(16);
        let f = RealField::from_fn(g, |x, y| (x + y).sin() + 0.5 * (3.0 * y).cos()).unwrap();
        let up = f.resample(32).unwrap();
        let expect =
            RealField::from_fn(grid(32), |x, y| (x + y).sin() + 0.5 * (3.0 * y).cos()).unwrap();
        assert!(up.max_abs_diff(&expect) < 1e-13);
        let down = up.resample(16).unwrap();
        assert!(down.max_abs_diff(&f) < 1e-13);
    }

    #[test]
    fn symmetrize_makes_hermitian() {
        let g = grid(8);
        let mut s = SpectralField::zeros(g);
        s.coefficients_mut()[9] = Complex64::new(1.0, 2.0);
        assert!(s.hermitian_defect() > 0.0);
        s.symmetrize();
        assert!(s.hermitian_defect() < 1e-15);
    }
}
