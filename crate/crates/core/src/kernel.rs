//! Extension-kernel representation of the fractional Laplacian.
//!
//! The kernel family `P_{n,h}(x) = C w(h) / (|x|² + a(h)²)^{n/2+s}` comes in
//! two forms:
//!
//! | form       | `w(h)`   | `a(h)`          | quotient variable `q` |
//! |------------|----------|-----------------|-----------------------|
//! | `Printed`  | `h`      | `2s h^{1/(2s)}` | `h`                   |
//! | `Standard` | `h^{2s}` | `h`             | `h^{2s}`              |
//!
//! In both, `(P_{n,h} * θ - θ)/q → -C (-Δ)^s θ` as `h → 0`.
//!
//! On the torus the convolution acts diagonally on Fourier modes. By Poisson
//! summation the periodised kernel has Fourier coefficients `P̂(k)`, and since
//! `P` is radial, `P̂(k)` is the one-dimensional transform of the marginal
//! `P_{1,h}` along `k/|k|`. Each mode is therefore multiplied by
//! `-2 C_1 (w/q) ∫_0^∞ (1 - cos |k|t) (t² + a²)^{-1/2-s} dt`, evaluated by
//! quadrature with an asymptotic tail, and the difference quotients over the
//! `h` ladder are Richardson-extrapolated.

use std::collections::HashMap;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::quadrature::{integrate_segments, Estimate, QuadConfig, QuadError};
use crate::spectral::{
    forward_transform, fractional_laplacian_spectral, inverse_transform, RealField,
    SpectralError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("extrapolation failed for |k| = {k}: {reason} (orders so far {orders:?})")]
    Extrapolation {
        k: f64,
        reason: String,
        orders: Vec<f64>,
    },
    #[error("representation mismatch: relative residual {residual:e} with fitted C = {c}")]
    RepresentationMismatch { residual: f64, c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum KernelForm {
    #[default]
    Printed,
    Standard,
}

impl KernelForm {
    /// Numerator weight `w(h)`.
    pub fn weight(self, s: f64, h: f64) -> f64 {
        match self {
            KernelForm::Printed => h,
            KernelForm::Standard => h.powf(2.0 * s),
        }
    }

    /// Core width `a(h)`.
    pub fn width(self, s: f64, h: f64) -> f64 {
        match self {
            KernelForm::Printed => 2.0 * s * h.powf(0.5 / s),
            KernelForm::Standard => h,
        }
    }

    /// Variable the difference quotient is taken in.
    pub fn quotient_variable(self, s: f64, h: f64) -> f64 {
        match self {
            KernelForm::Printed => h,
            KernelForm::Standard => h.powf(2.0 * s),
        }
    }

    /// `a^{2s}/w`, independent of `h`.
    fn scale(self, s: f64) -> f64 {
        match self {
            KernelForm::Printed => (2.0 * s).powf(2.0 * s),
            KernelForm::Standard => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsKernelParams {
    pub n: usize,
    pub s: f64,
    pub c_norm: f64,
    pub form: KernelForm,
}

impl CsKernelParams {
    pub fn new(n: usize, s: f64, form: KernelForm) -> Result<Self, KernelError> {
        Ok(Self {
            n,
            s,
            c_norm: cs_normalization_with(n, s, form, &QuadConfig::with_rel_tol(1e-14))?,
            form,
        })
    }

    /// `n/2 + s`
    fn exponent(&self) -> f64 {
        0.5 * self.n as f64 + self.s
    }
}

fn check_power(s: f64) -> Result<(), KernelError> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter(format!("s = {s} outside (0, 1)")))
    }
}

fn check_h(h: f64) -> Result<(), KernelError> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter(format!("h = {h} must be positive")))
    }
}

/// `Σ_j binom(-ν, j) x^j w(j)` for `0 <= x < 1`, truncated once a term drops
/// below `1e-18` relative.
fn binomial_series(nu: f64, x: f64, mut term_weight: impl FnMut(usize) -> f64) -> f64 {
    let mut coeff = 1.0;
    let mut power = 1.0;
    let mut sum = 0.0;
    for j in 0..200 {
        let term = coeff * power * term_weight(j);
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
        coeff *= (-nu - j as f64) / (j as f64 + 1.0);
        power *= x;
    }
    sum
}

/// `∫_0^∞ ρ^{d-1} (ρ² + c²)^{-ν} dρ` for `2ν > d`, by quadrature on `[0, R]`
/// and the binomial expansion of the integrand beyond `R = 10 max(c, 1)`.
fn radial_integral(d: usize, nu: f64, c: f64, cfg: &QuadConfig) -> Result<Estimate, QuadError> {
    let cutoff = 10.0 * c.max(1.0);
    let dm1 = d as i32 - 1;
    let f = |rho: f64| rho.powi(dm1) * (rho * rho + c * c).powf(-nu);
    let mut pts = vec![0.0];
    if c > 0.0 && c < cutoff {
        pts.push(c);
    }
    pts.push(cutoff);
    let body = integrate_segments(f, &pts, cfg)?;
    // ρ^{d-1-2ν} Σ binom(-ν, j) (c/ρ)^{2j}
    let tail = cutoff.powf(d as f64 - 2.0 * nu)
        * binomial_series(nu, (c / cutoff).powi(2), |j| {
            1.0 / (2.0 * nu + 2.0 * j as f64 - d as f64)
        });
    Ok(body + Estimate::exact(tail))
}

fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => unreachable!("dimension checked by caller"),
    }
}

fn check_dimension(n: usize) -> Result<(), KernelError> {
    if n == 1 || n == 2 {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter(format!("dimension {n} not in {{1, 2}}")))
    }
}

/// Normalisation constant of the printed kernel.
pub fn cs_normalization(n: usize, s: f64) -> Result<f64, KernelError> {
    cs_normalization_with(n, s, KernelForm::Printed, &QuadConfig::with_rel_tol(1e-14))
}

/// Normalisation constant of either form, from the radial integral
/// `I_n = |S^{n-1}| ∫_0^∞ ρ^{n-1} (ρ² + 1)^{-n/2-s} dρ` as
/// `C = (a^{2s}/w) / I_n`.
pub fn cs_normalization_with(
    n: usize,
    s: f64,
    form: KernelForm,
    cfg: &QuadConfig,
) -> Result<f64, KernelError> {
    check_dimension(n)?;
    check_power(s)?;
    let radial = radial_integral(n, 0.5 * n as f64 + s, 1.0, cfg)?;
    Ok(form.scale(s) / (sphere_area(n) * radial.value))
}

/// `P_{n,h}(x)`; `x` must have `p.n` components.
pub fn cs_kernel_value(x: &[f64], h: f64, p: &CsKernelParams) -> Result<f64, KernelError> {
    check_h(h)?;
    if x.len() != p.n {
        return Err(KernelError::InvalidParameter(format!(
            "point has {} components, kernel dimension is {}",
            x.len(),
            p.n
        )));
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let a = p.form.width(p.s, h);
    Ok(p.c_norm * p.form.weight(p.s, h) * (r2 + a * a).powf(-p.exponent()))
}

/// `∫_{ℝⁿ} P_{n,h} dx` by radial quadrature in the original variables.
pub fn kernel_mass(p: &CsKernelParams, h: f64, cfg: &QuadConfig) -> Result<Estimate, KernelError> {
    check_h(h)?;
    let a = p.form.width(p.s, h);
    let radial = radial_integral(p.n, p.exponent(), a, cfg)?;
    Ok(radial * (sphere_area(p.n) * p.c_norm * p.form.weight(p.s, h)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCheck {
    /// `(x1, ∫ P_{2,h}(x1, x2) dx2, P_{1,h}(x1))`
    pub samples: Vec<(f64, f64, f64)>,
    pub max_deviation: f64,
    pub pass: bool,
}

const MARGINAL_SAMPLES: [f64; 9] = [0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0];

/// Compares the `x2`-marginal of the planar kernel with the line kernel at
/// `x1 = ±t` for a fixed set of `t`. Quadrature runs at relative tolerance
/// `tol · 10⁻³`.
pub fn kernel_marginal_check(
    s: f64,
    h: f64,
    tol: f64,
    form: KernelForm,
) -> Result<MarginalCheck, KernelError> {
    check_h(h)?;
    let cfg = QuadConfig::with_rel_tol((tol * 1e-3).clamp(1e-14, 1e-6));
    let p2 = CsKernelParams::new(2, s, form)?;
    let p1 = CsKernelParams::new(1, s, form)?;
    let a = form.width(s, h);
    let w = form.weight(s, h);
    let mut samples = Vec::with_capacity(2 * MARGINAL_SAMPLES.len());
    for t in MARGINAL_SAMPLES {
        for x1 in [t, -t] {
            let c = (x1 * x1 + a * a).sqrt();
            let marginal = 2.0 * p2.c_norm * w * radial_integral(1, 1.0 + s, c, &cfg)?.value;
            let line = cs_kernel_value(&[x1], h, &p1)?;
            samples.push((x1, marginal, line));
        }
    }
    let max_deviation = samples
        .iter()
        .map(|(_, m, l)| (m - l).abs())
        .fold(0.0, f64::max);
    Ok(MarginalCheck {
        samples,
        max_deviation,
        pass: max_deviation <= tol,
    })
}

/// `J(k, a) = ∫_0^∞ (1 - cos kt) (t² + a²)^{-ν} dt` with `ν = 1/2 + s`.
fn oscillatory_integral(k: f64, a: f64, s: f64, cfg: &QuadConfig) -> Result<Estimate, QuadError> {
    let nu = 0.5 + s;
    let period = 2.0 * PI / k;
    let periods = ((4.0 * a / period).ceil() as usize).max(8);
    let cut = period * periods as f64;
    let mut pts = vec![0.0];
    if a > 0.0 && a < period {
        pts.push(a);
    }
    pts.extend((1..=periods).map(|j| period * j as f64));
    let g = |t: f64| (t * t + a * a).powf(-nu);
    let body = integrate_segments(
        |t| {
            let half = (0.5 * k * t).sin();
            2.0 * half * half * g(t)
        },
        &pts,
        cfg,
    )?;

    // beyond the cut g(t) = Σ_j binom(-ν, j) a^{2j} t^{-2ν-2j}
    let x2 = (a / cut).powi(2);
    let plain_tail =
        cut.powf(1.0 - 2.0 * nu) * binomial_series(nu, x2, |j| 1.0 / (2.0 * nu + 2.0 * j as f64 - 1.0));
    // ∫_cut^∞ cos(kt) g dt = Σ_{m>=1} (-1)^m g^{(2m-1)}(cut) / k^{2m}, since sin(k cut) = 0
    let derivative = |order: usize| {
        cut.powf(-2.0 * nu - order as f64)
            * binomial_series(nu, x2, |j| {
                let e = -2.0 * nu - 2.0 * j as f64;
                (0..order).map(|i| e - i as f64).product::<f64>()
            })
    };
    let mut cos_tail = 0.0;
    let mut last = f64::INFINITY;
    for m in 1..40 {
        let term = (-1f64).powi(m as i32) * derivative(2 * m - 1) / k.powi(2 * m as i32);
        if term.abs() >= last {
            break;
        }
        cos_tail += term;
        last = term.abs();
        if term.abs() <= 1e-18 * cos_tail.abs() {
            break;
        }
    }
    Ok(Estimate {
        error: body.error + last.min(1.0) * 1e-3,
        ..body + Estimate::exact(plain_tail - cos_tail)
    })
}

/// Difference-quotient multiplier `(P̂_h(k) - 1)/q` for `|k| = k`.
pub fn cs_quotient(k: f64, s: f64, h: f64, form: KernelForm, cfg: &QuadConfig) -> Result<f64, KernelError> {
    check_power(s)?;
    check_h(h)?;
    if k == 0.0 {
        return Ok(0.0);
    }
    let c1 = cs_normalization_with(1, s, form, &QuadConfig::with_rel_tol(1e-14))?;
    let a = form.width(s, h);
    let j = oscillatory_integral(k, a, s, cfg)?;
    Ok(-2.0 * c1 * form.weight(s, h) / form.quotient_variable(s, h) * j.value)
}

/// Result of extrapolating a difference-quotient ladder to `h → 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolated {
    pub value: f64,
    /// Last correction applied; an error estimate.
    pub error: f64,
    /// Empirical orders (in the quotient variable) eliminated, in sequence.
    pub orders: Vec<f64>,
}

/// Iterated Richardson extrapolation of `values[i]` taken at quotient
/// variables with constant ratio `ratio = q_i/q_{i+1} > 1`.
///
/// Each level replaces every consecutive triple by its extrapolant, using
/// the order `p = log(Δ_i/Δ_{i+1}) / log(ratio)` estimated from that triple.
/// Iteration stops once the two finest entries agree to `1e-12` relative,
/// or when fewer than three entries remain. A non-positive or non-finite
/// order on the raw ladder fails the ratio test; on later levels it means
/// the differences have reached round-off and the current entry is kept.
pub fn richardson(values: &[f64], ratio: f64, k: f64) -> Result<Extrapolated, KernelError> {
    let mut orders = Vec::new();
    if values.is_empty() {
        return Err(KernelError::Extrapolation {
            k,
            reason: "empty ladder".into(),
            orders,
        });
    }
    let mut row = values.to_vec();
    let mut level = 0;
    loop {
        let n = row.len();
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let last = if n > 1 {
            (row[n - 1] - row[n - 2]).abs()
        } else {
            f64::INFINITY
        };
        let done = Extrapolated {
            value: row[n - 1],
            error: last,
            orders: orders.clone(),
        };
        if n < 3 || last <= 1e-12 * scale {
            return Ok(done);
        }
        let order_of = |i: usize| {
            let d0 = (row[i + 1] - row[i]).abs();
            let d1 = (row[i + 2] - row[i + 1]).abs();
            (d0 / d1).ln() / ratio.ln()
        };
        let p = order_of(n - 3);
        if !p.is_finite() || p <= 0.0 {
            if level == 0 {
                return Err(KernelError::Extrapolation {
                    k,
                    reason: format!("ratio test gave order {p}"),
                    orders,
                });
            }
            return Ok(done);
        }
        orders.push(p);
        row = (0..n - 2)
            .map(|i| {
                let p = order_of(i);
                if !p.is_finite() || p <= 0.0 {
                    return row[i + 2];
                }
                let f = ratio.powf(p);
                (f * row[i + 2] - row[i + 1]) / (f - 1.0)
            })
            .collect();
        level += 1;
    }
}

/// Extrapolated multiplier at `|k| = k` for a ladder with ratio-constant
/// quotient variables.
pub fn cs_multiplier(
    k: f64,
    s: f64,
    h_ladder: &[f64],
    form: KernelForm,
) -> Result<Extrapolated, KernelError> {
    check_ladder(h_ladder)?;
    let ratio = ladder_ratio(s, h_ladder, form)?;
    let cfg = QuadConfig::with_rel_tol(1e-13);
    let values = h_ladder
        .iter()
        .map(|&h| cs_quotient(k, s, h, form, &cfg))
        .collect::<Result<Vec<_>, _>>()?;
    richardson(&values, ratio, k)
}

fn check_ladder(h_ladder: &[f64]) -> Result<(), KernelError> {
    if h_ladder.is_empty()
        || h_ladder.iter().any(|h| !(h.is_finite() && *h > 0.0))
        || h_ladder.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(KernelError::InvalidParameter(format!(
            "h ladder must be positive and strictly decreasing: {h_ladder:?}"
        )));
    }
    Ok(())
}

fn ladder_ratio(s: f64, h_ladder: &[f64], form: KernelForm) -> Result<f64, KernelError> {
    if h_ladder.len() < 2 {
        return Ok(2.0);
    }
    let q: Vec<f64> = h_ladder
        .iter()
        .map(|&h| form.quotient_variable(s, h))
        .collect();
    let ratio = q[0] / q[1];
    if q.windows(2).any(|w| ((w[0] / w[1]) / ratio - 1.0).abs() > 1e-9) {
        return Err(KernelError::InvalidParameter(
            "h ladder must be geometric".into(),
        ));
    }
    Ok(ratio)
}

/// Geometric ladder `h_0 2^{-j}`, `j < levels`, with `h_0` chosen so that
/// `a(h_0) k_max = 1/2`.
pub fn default_h_ladder(s: f64, form: KernelForm, k_max: f64, levels: usize) -> Vec<f64> {
    let a0 = 0.5 / k_max.max(1.0);
    let h0 = match form {
        KernelForm::Printed => (a0 / (2.0 * s)).powf(2.0 * s),
        KernelForm::Standard => a0,
    };
    (0..levels).map(|j| h0 * 0.5f64.powi(j as i32)).collect()
}

/// Applies the extrapolated kernel operator to a band-limited field.
pub fn cs_fractional_laplacian(
    theta: &RealField,
    s: f64,
    h_ladder: &[f64],
    form: KernelForm,
) -> Result<RealField, KernelError> {
    check_power(s)?;
    check_ladder(h_ladder)?;
    let spec = forward_transform(theta)?;
    let grid = spec.grid();
    let n = grid.n();
    let scale = spec
        .coefficients()
        .iter()
        .fold(0.0f64, |m, c| m.max(c.norm()));
    // one multiplier per distinct |k|² among the active modes
    let mut cache: HashMap<i64, f64> = HashMap::new();
    for m1 in 0..n {
        for m2 in 0..n {
            let c = spec.coefficients()[m1 * n + m2];
            if c.norm() <= 1e-14 * scale {
                continue;
            }
            let (k1, k2) = (grid.frequency(m1), grid.frequency(m2));
            let key = k1 * k1 + k2 * k2;
            if let std::collections::hash_map::Entry::Vacant(e) = cache.entry(key) {
                let k = grid.wavevector_norm(m1, m2);
                e.insert(cs_multiplier(k, s, h_ladder, form)?.value);
            }
        }
    }
    let out = spec.apply_multiplier(|m1, m2| {
        let (k1, k2) = (grid.frequency(m1), grid.frequency(m2));
        let v = cache.get(&(k1 * k1 + k2 * k2)).copied().unwrap_or(0.0);
        Complex64::new(v, 0.0)
    });
    Ok(inverse_transform(&out)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationFit {
    pub s: f64,
    pub form: KernelForm,
    /// Least-squares constant with `kernel ≈ -C (-Δ)^s`.
    pub c: f64,
    /// `‖kernel - C·spectral‖ / ‖kernel‖`.
    pub residual: f64,
    /// `(k1, k2, C)` from single-mode fields.
    pub per_mode: Vec<(i64, i64, f64)>,
}

const FIT_MODES: [(i64, i64); 5] = [(1, 0), (0, 2), (2, 0), (1, 1), (2, 3)];

/// Fits the representation constant on a sum of eigenfunctions at grid size
/// `n`, and separately on each eigenfunction.
pub fn estimate_representation_constant(
    s: f64,
    form: KernelForm,
    n: usize,
    h_ladder: Option<&[f64]>,
) -> Result<RepresentationFit, KernelError> {
    check_power(s)?;
    let grid = crate::spectral::Grid::periodic(n)?;
    let k_max = FIT_MODES
        .iter()
        .map(|(a, b)| ((a * a + b * b) as f64).sqrt())
        .fold(0.0, f64::max);
    let default = default_h_ladder(s, form, k_max, 8);
    let ladder = h_ladder.unwrap_or(&default);

    let mode_field = |k1: i64, k2: i64, phase: f64| {
        RealField::from_fn(grid, move |x, y| (k1 as f64 * x + k2 as f64 * y + phase).cos())
    };
    let fit = |field: &RealField| -> Result<(f64, f64), KernelError> {
        let kernel = cs_fractional_laplacian(field, s, ladder, form)?;
        let spectral = inverse_transform(&fractional_laplacian_spectral(
            &forward_transform(field)?,
            s,
        )?)?;
        let (kv, sv) = (kernel.values(), spectral.values());
        let dot: f64 = kv.iter().zip(sv).map(|(a, b)| a * b).sum();
        let norm: f64 = sv.iter().map(|b| b * b).sum();
        let c = -dot / norm;
        let resid: f64 = kv
            .iter()
            .zip(sv)
            .map(|(a, b)| (a + c * b).powi(2))
            .sum::<f64>()
            .sqrt();
        let knorm: f64 = kv.iter().map(|a| a * a).sum::<f64>().sqrt();
        Ok((c, resid / knorm))
    };

    let mut combined = RealField::zeros(grid);
    let mut per_mode = Vec::new();
    for (i, &(k1, k2)) in FIT_MODES.iter().enumerate() {
        let single = mode_field(k1, k2, 0.3 * i as f64)?;
        per_mode.push((k1, k2, fit(&single)?.0));
        combined = combined.add(&single.scaled(1.0 / (i as f64 + 1.0)))?;
    }
    let (c, residual) = fit(&combined)?;
    if !(residual <= 1e-2) {
        return Err(KernelError::RepresentationMismatch { residual, c });
    }
    Ok(RepresentationFit {
        s,
        form,
        c,
        residual,
        per_mode,
    })
}
