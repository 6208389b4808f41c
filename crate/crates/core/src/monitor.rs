//! Trajectory-side regularity diagnostics: empirical moduli of grid fields,
//! the rescaled modulus `ω_μ(ξ) = μ^{2s-1} ω(μξ)`, the smallness condition,
//! breakthrough detection and gradient / BKM tracking.

use rayon::prelude::*;
use thiserror::Error;

use crate::moc::{smallness_constant, KnvModulus, Modulus, PowerTail, Side};
use crate::solver::{Observer, SolverConfig, SolverError, State};
use crate::spectral::{forward_transform, gradient_sup, hessian_sup, Grid, RealField, SpectralError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error("rescaled modulus needs a non-constant initial field")]
    ConstantField,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Grid size above which far displacements are sampled instead of enumerated.
pub const EXACT_LIMIT: usize = 256;
/// Radius, in grid cells, inside which every displacement is always used.
pub const NEAR_RADIUS: i64 = 16;

/// One displacement class: all lattice displacements with the same squared
/// length, together with the largest `|θ(x+d) - θ(x)|` among them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementBin {
    pub length_sq: u64,
    pub separation: f64,
    pub sup: f64,
}

/// `ω_M(ξ) = sup_{|x-y| <= ξ} |θ(x) - θ(y)|` on the grid, with the torus
/// metric.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModulus {
    pub xi_samples: Vec<f64>,
    pub omega_m: Vec<f64>,
    /// Per-bin suprema in increasing separation.
    pub bins: Vec<DisplacementBin>,
    /// False when far displacements were subsampled.
    pub exact: bool,
}

impl EmpiricalModulus {
    /// Running maximum over all bins with separation `<= xi`.
    pub fn at(&self, xi: f64) -> f64 {
        self.bins
            .iter()
            .take_while(|b| b.separation <= xi * (1.0 + 1e-12))
            .fold(0.0, |m, b| m.max(b.sup))
    }
}

fn wrap(d: i64, n: i64) -> usize {
    d.rem_euclid(n) as usize
}

/// Lattice displacements `d ≠ 0` with `|d|² <= radius_sq`, one from each
/// `±d` pair, in minimal-image form. Returns the list and whether it is
/// complete.
fn displacements(n: usize, radius_sq: f64, subsample: bool) -> (Vec<(i64, i64)>, bool) {
    let ni = n as i64;
    let half = ni / 2;
    let lo = -(ni - 1) / 2;
    let reach = (radius_sq.sqrt().floor() as i64).min(half);
    let canonical = |d1: i64, d2: i64| (wrap(d1, ni), wrap(d2, ni));
    let mut all = Vec::new();
    let mut exact = true;
    let near_sq = (NEAR_RADIUS * NEAR_RADIUS) as f64;
    for d1 in (-reach).max(lo)..=reach {
        for d2 in (-reach).max(lo)..=reach {
            let sq = (d1 * d1 + d2 * d2) as f64;
            if sq == 0.0 || sq > radius_sq {
                continue;
            }
            if canonical(-d1, -d2) < canonical(d1, d2) {
                continue;
            }
            if subsample && sq > near_sq {
                exact = false;
                continue;
            }
            all.push((d1, d2));
        }
    }
    if subsample && !exact {
        let max_r = radius_sq.sqrt().min(half as f64 * std::f64::consts::SQRT_2);
        let mut r = NEAR_RADIUS as f64;
        while r < max_r {
            r = (r * 1.15).min(max_r);
            let angles = 64;
            for a in 0..angles {
                let phi = std::f64::consts::PI * a as f64 / angles as f64;
                let d1 = (r * phi.cos()).round() as i64;
                let d2 = (r * phi.sin()).round() as i64;
                let (d1, d2) = (minimal(d1, ni), minimal(d2, ni));
                let sq = (d1 * d1 + d2 * d2) as f64;
                if sq <= near_sq || sq > radius_sq {
                    continue;
                }
                let (d1, d2) = if canonical(-d1, -d2) < canonical(d1, d2) {
                    (minimal(-d1, ni), minimal(-d2, ni))
                } else {
                    (d1, d2)
                };
                all.push((d1, d2));
            }
        }
        all.sort_unstable();
        all.dedup();
    }
    (all, exact)
}

fn minimal(d: i64, n: i64) -> i64 {
    let w = d.rem_euclid(n);
    if w > n / 2 {
        w - n
    } else {
        w
    }
}

/// `sup_x |θ(x+d) - θ(x)|` and the flat index of a maximizing `x`.
fn shifted_sup(values: &[f64], n: usize, d: (i64, i64)) -> (f64, usize) {
    let ni = n as i64;
    let s1 = wrap(d.0, ni);
    let s2 = wrap(d.1, ni);
    let mut best = (0.0, 0);
    for j1 in 0..n {
        let row = &values[j1 * n..(j1 + 1) * n];
        let k1 = (j1 + s1) % n;
        let other = &values[k1 * n..(k1 + 1) * n];
        let (head, tail) = other.split_at(s2);
        for (j2, (a, b)) in row.iter().zip(tail.iter().chain(head)).enumerate() {
            let diff = (b - a).abs();
            if diff > best.0 {
                best = (diff, j1 * n + j2);
            }
        }
    }
    best
}

struct BinScan {
    bins: Vec<DisplacementBin>,
    /// Per bin: the displacement and point attaining its supremum.
    witnesses: Vec<((i64, i64), usize)>,
    exact: bool,
}

fn scan_bins(theta: &RealField, xi_max: f64) -> BinScan {
    let grid = theta.grid();
    let n = grid.n();
    let dx = grid.dx();
    let radius = xi_max / dx;
    let radius_sq = radius * radius * (1.0 + 1e-12);
    let (list, exact) = displacements(n, radius_sq, n > EXACT_LIMIT);
    let values = theta.values();
    let sups: Vec<(f64, usize)> = list.par_iter().map(|&d| shifted_sup(values, n, d)).collect();
    let mut keyed: Vec<(u64, f64, (i64, i64), usize)> = list
        .iter()
        .zip(&sups)
        .map(|(&(d1, d2), &(sup, at))| (((d1 * d1 + d2 * d2) as u64), sup, (d1, d2), at))
        .collect();
    keyed.sort_by_key(|k| k.0);
    let mut bins: Vec<DisplacementBin> = Vec::new();
    let mut witnesses = Vec::new();
    for (sq, sup, d, at) in keyed {
        match bins.last_mut() {
            Some(last) if last.length_sq == sq => {
                if sup > last.sup {
                    last.sup = sup;
                    *witnesses.last_mut().unwrap() = (d, at);
                }
            }
            _ => {
                bins.push(DisplacementBin {
                    length_sq: sq,
                    separation: (sq as f64).sqrt() * dx,
                    sup,
                });
                witnesses.push((d, at));
            }
        }
    }
    BinScan {
        bins,
        witnesses,
        exact,
    }
}

/// Empirical modulus of `theta`, evaluated at each of `xi_samples`.
///
/// Every lattice displacement within the largest sample is used for
/// `n <= 256`; above that, displacements beyond 16 cells are sampled on a
/// logarithmic radial and uniform angular pattern and the result is marked
/// inexact.
pub fn empirical_modulus(theta: &RealField, xi_samples: &[f64]) -> EmpiricalModulus {
    let xi_max = xi_samples
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(0.0, f64::max);
    let scan = scan_bins(theta, xi_max);
    let mut result = EmpiricalModulus {
        xi_samples: xi_samples.to_vec(),
        omega_m: Vec::new(),
        bins: scan.bins,
        exact: scan.exact,
    };
    result.omega_m = xi_samples.iter().map(|&x| result.at(x)).collect();
    result
}

/// Pair of grid points where the modulus is (nearly) saturated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakthroughRecord {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub separation: f64,
    /// `θ(x) - θ(y) - ω(|x-y|)`.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MocCheck {
    /// Largest `ω_M - ω` over the scanned bins.
    pub max_slack: f64,
    pub tolerance: f64,
    /// Set when `max_slack >= -tolerance`.
    pub record: Option<BreakthroughRecord>,
    pub exact: bool,
}

/// Default breakthrough tolerance, `½ ‖∇²θ‖∞ Δx²`.
pub fn default_moc_tolerance(theta: &RealField) -> Result<f64, MonitorError> {
    let dx = theta.grid().dx();
    Ok(0.5 * hessian_sup(&forward_transform(theta)?)? * dx * dx)
}

/// Compares the empirical modulus of `theta` with `omega` bin by bin.
///
/// Only separations where `ω` has not yet exceeded the oscillation of
/// `theta` by more than the tolerance are scanned; beyond them the slack is
/// below `-tol` automatically.
pub fn check_moc<M: Modulus + ?Sized>(
    theta: &RealField,
    omega: &M,
    tol: Option<f64>,
) -> Result<MocCheck, MonitorError> {
    let tol = match tol {
        Some(t) if t >= 0.0 && t.is_finite() => t,
        Some(t) => return Err(MonitorError::InvalidArgument(format!("tolerance {t}"))),
        None => default_moc_tolerance(theta)?,
    };
    let grid = *theta.grid();
    let torus_max = grid.length() * std::f64::consts::SQRT_2 / 2.0;
    let osc = theta.max() - theta.min();
    let mut cap = grid.dx();
    while cap < torus_max && omega.value(cap) < osc + tol {
        cap *= 2.0;
    }
    let scan = scan_bins(theta, cap.min(torus_max));
    let mut best: Option<(usize, f64)> = None;
    for (i, b) in scan.bins.iter().enumerate() {
        let slack = b.sup - omega.value(b.separation);
        if best.is_none_or(|(_, s)| slack > s) {
            best = Some((i, slack));
        }
    }
    let Some((i, max_slack)) = best else {
        return Ok(MocCheck {
            max_slack: f64::NEG_INFINITY,
            tolerance: tol,
            record: None,
            exact: scan.exact,
        });
    };
    let record = (max_slack >= -tol).then(|| {
        let ((d1, d2), at) = scan.witnesses[i];
        let n = grid.n();
        let (j1, j2) = (at / n, at % n);
        let ni = n as i64;
        let (k1, k2) = (wrap(j1 as i64 + d1, ni), wrap(j2 as i64 + d2, ni));
        let p = (grid.coordinate(j1), grid.coordinate(j2));
        let q = (grid.coordinate(k1), grid.coordinate(k2));
        let (x, y) = if theta.at(j1, j2) >= theta.at(k1, k2) {
            (p, q)
        } else {
            (q, p)
        };
        BreakthroughRecord {
            x,
            y,
            separation: scan.bins[i].separation,
            slack: max_slack,
        }
    });
    Ok(MocCheck {
        max_slack,
        tolerance: tol,
        record,
        exact: scan.exact,
    })
}

/// `ξ ↦ μ^{2s-1} ω(μξ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaledModulus<M> {
    pub base: M,
    pub mu: f64,
    pub s: f64,
}

impl<M: Modulus> RescaledModulus<M> {
    pub fn new(base: M, mu: f64, s: f64) -> Self {
        Self { base, mu, s }
    }

    fn amp(&self) -> f64 {
        self.mu.powf(2.0 * self.s - 1.0)
    }
}

impl<M: Modulus> Modulus for RescaledModulus<M> {
    fn value(&self, xi: f64) -> f64 {
        self.amp() * self.base.value(self.mu * xi)
    }

    fn slope(&self, xi: f64, side: Side) -> f64 {
        self.amp() * self.mu * self.base.slope(self.mu * xi, side)
    }

    fn curvature(&self, xi: f64, side: Side) -> f64 {
        self.amp() * self.mu * self.mu * self.base.curvature(self.mu * xi, side)
    }

    fn kinks(&self) -> Vec<f64> {
        self.base.kinks().into_iter().map(|k| k / self.mu).collect()
    }

    fn tail(&self) -> PowerTail {
        let t = self.base.tail();
        PowerTail {
            start: t.start / self.mu,
            offset: self.amp() * t.offset,
            coeff: self.amp() * t.coeff * self.mu.powf(t.exponent),
            exponent: t.exponent,
        }
    }

    fn increment(&self, lo: f64, hi: f64) -> f64 {
        self.amp() * self.base.increment(self.mu * lo, self.mu * hi)
    }

    fn near_log_integral(&self, x: f64) -> Option<f64> {
        self.base.near_log_integral(self.mu * x).map(|v| self.amp() * v)
    }

    fn second_difference(&self, xi: f64, h: f64) -> f64 {
        self.amp() * self.base.second_difference(self.mu * xi, self.mu * h)
    }

    fn check(&self) -> Result<(), crate::moc::MocError> {
        self.base.check()
    }
}

/// `μ = (2‖∇θ₀‖∞)^{1/(2s)}` and the corresponding rescaling of `m`.
pub fn rescaled_modulus(
    m: &KnvModulus,
    theta0: &RealField,
) -> Result<RescaledModulus<KnvModulus>, MonitorError> {
    let g = gradient_sup(&forward_transform(theta0)?)?;
    if !(g > 0.0) {
        return Err(MonitorError::ConstantField);
    }
    Ok(RescaledModulus::new(*m, (2.0 * g).powf(0.5 / m.s), m.s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallnessReport {
    pub sup_norm: f64,
    pub grad_sup: f64,
    /// `‖∇θ₀‖∞^{1-2s} ‖θ₀‖∞^{2s}`.
    pub product: f64,
    pub c_s: f64,
    pub pass: bool,
    /// `2‖θ₀‖∞ <= ω_μ(δ/μ)`.
    pub rescaled_pass: bool,
    /// Set for fields with zero gradient.
    pub degenerate: bool,
}

impl SmallnessReport {
    pub fn consistent(&self) -> bool {
        self.pass == self.rescaled_pass
    }
}

pub fn smallness_check(theta0: &RealField, m: &KnvModulus) -> Result<SmallnessReport, MonitorError> {
    let sup = theta0.sup_norm();
    let grad = gradient_sup(&forward_transform(theta0)?)?;
    let s = m.s;
    let product = grad.powf(1.0 - 2.0 * s) * sup.powf(2.0 * s);
    let c_s = smallness_constant(m);
    let pass = product < c_s;
    if !(grad > 0.0) {
        return Ok(SmallnessReport {
            sup_norm: sup,
            grad_sup: grad,
            product,
            c_s,
            pass,
            rescaled_pass: pass,
            degenerate: true,
        });
    }
    let omega = rescaled_modulus(m, theta0)?;
    let rescaled_pass = 2.0 * sup < omega.value(m.delta / omega.mu);
    Ok(SmallnessReport {
        sup_norm: sup,
        grad_sup: grad,
        product,
        c_s,
        pass,
        rescaled_pass,
        degenerate: false,
    })
}

/// `max ‖∇θ‖∞ < 2‖∇θ₀‖∞` over the report, with `1e-10` relative slack.
pub fn gradient_bound_check(report: &TrajectoryReport, grad0: f64) -> bool {
    report
        .grad_sup
        .iter()
        .all(|&g| g < 2.0 * grad0 * (1.0 + 1e-10))
}

/// Qualitative properties the breakthrough argument needs from a modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModulusShape {
    /// `ω(ξ) → ∞` as `ξ → ∞`, read off the power-law tail.
    pub unbounded: bool,
    /// `ω''(0+) = -∞`: curvature strictly decreasing along `ξ = 10^{-k}`,
    /// `k = 6..=18`, with a positive power-law rate.
    pub singular_at_zero: bool,
}

impl ModulusShape {
    pub fn admissible(&self) -> bool {
        self.unbounded && self.singular_at_zero
    }
}

pub fn modulus_shape<M: Modulus + ?Sized>(omega: &M) -> ModulusShape {
    let tail = omega.tail();
    let unbounded = tail.exponent > 0.0 && tail.coeff > 0.0;
    let curv: Vec<f64> = (6..=18)
        .map(|k| omega.curvature(10f64.powi(-k), Side::Right))
        .collect();
    let first = curv[0];
    let last = curv[curv.len() - 1];
    let singular_at_zero = curv.iter().all(|c| c.is_finite() && *c < 0.0)
        && curv.windows(2).all(|w| w[1] < w[0])
        && (last / first).ln() / (12.0 * 10f64.ln()) > 1e-3;
    ModulusShape {
        unbounded,
        singular_at_zero,
    }
}

/// `‖∇θ‖∞ <= ω'(0) + slack`.
pub fn omega_prime_zero_bound<M: Modulus + ?Sized>(
    theta: &RealField,
    omega: &M,
    slack: f64,
) -> Result<bool, MonitorError> {
    let g = gradient_sup(&forward_transform(theta)?)?;
    Ok(g <= omega.slope(0.0, Side::Right) + slack)
}

/// Trapezoidal `∫ g dt` over the samples.
pub fn bkm_accumulate(times: &[f64], grad_sup: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(grad_sup.windows(2))
        .map(|(t, g)| 0.5 * (t[1] - t[0]) * (g[0] + g[1]))
        .sum()
}

/// Relative tolerance for the sup-norm monotonicity flag.
pub const SUP_NORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryReport {
    pub times: Vec<f64>,
    pub sup_norm: Vec<f64>,
    pub grad_sup: Vec<f64>,
    pub bkm: Vec<f64>,
    pub moc_slack: Vec<f64>,
    pub grad_ok: Vec<bool>,
    pub sup_ok: Vec<bool>,
    pub moc_ok: Vec<bool>,
    pub breakthroughs: Vec<(f64, BreakthroughRecord)>,
}

impl TrajectoryReport {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn pass(&self) -> bool {
        self.grad_ok.iter().all(|&x| x)
            && self.sup_ok.iter().all(|&x| x)
            && self.moc_ok.iter().all(|&x| x)
    }
}

/// Observer that fills a [`TrajectoryReport`].
pub struct TrajectoryMonitor {
    omega: Option<RescaledModulus<KnvModulus>>,
    grad0: Option<f64>,
    tol: Option<f64>,
    report: TrajectoryReport,
    error: Option<MonitorError>,
}

impl TrajectoryMonitor {
    /// `omega = None` disables breakthrough detection. The gradient bound is
    /// taken from the first sample.
    pub fn new(omega: Option<RescaledModulus<KnvModulus>>, tol: Option<f64>) -> Self {
        Self {
            omega,
            grad0: None,
            tol,
            report: TrajectoryReport::default(),
            error: None,
        }
    }

    /// Continues an existing report, e.g. after loading a snapshot.
    pub fn resume(
        omega: Option<RescaledModulus<KnvModulus>>,
        tol: Option<f64>,
        grad0: f64,
        report: TrajectoryReport,
    ) -> Self {
        Self {
            omega,
            grad0: Some(grad0),
            tol,
            report,
            error: None,
        }
    }

    pub fn report(&self) -> &TrajectoryReport {
        &self.report
    }

    pub fn into_report(self) -> Result<TrajectoryReport, MonitorError> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.report),
        }
    }

    fn record(&mut self, state: &State, theta: &RealField) -> Result<(), MonitorError> {
        let grad = gradient_sup(&state.theta)?;
        let grad0 = *self.grad0.get_or_insert(grad);
        let sup = theta.sup_norm();
        let r = &mut self.report;
        let bkm = match (r.times.last(), r.grad_sup.last(), r.bkm.last()) {
            (Some(&t0), Some(&g0), Some(&b0)) => b0 + 0.5 * (state.t - t0) * (g0 + grad),
            _ => 0.0,
        };
        let sup_ok = r
            .sup_norm
            .last()
            .is_none_or(|&prev| sup <= prev * (1.0 + SUP_NORM_TOL) + SUP_NORM_TOL * f64::MIN_POSITIVE);
        let (slack, record) = match &self.omega {
            Some(omega) => {
                let check = check_moc(theta, omega, self.tol)?;
                (check.max_slack, check.record)
            }
            None => (f64::NEG_INFINITY, None),
        };
        r.times.push(state.t);
        r.sup_norm.push(sup);
        r.grad_sup.push(grad);
        r.bkm.push(bkm);
        r.moc_slack.push(slack);
        r.grad_ok.push(grad < 2.0 * grad0 * (1.0 + 1e-10) || grad == 0.0);
        r.sup_ok.push(sup_ok);
        r.moc_ok.push(record.is_none());
        if let Some(rec) = record {
            r.breakthroughs.push((state.t, rec));
        }
        Ok(())
    }
}

impl Observer for TrajectoryMonitor {
    fn sample(&mut self, state: &State, theta: &RealField) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = self.record(state, theta) {
            self.error = Some(e);
        }
    }
}

#[derive(Debug, Error)]
pub enum RunFailure {
    #[error("{error}")]
    Solver {
        error: SolverError,
        partial: Box<TrajectoryReport>,
    },
    #[error(transparent)]
    Monitor(#[from] MonitorError),
}

/// Runs the solver under a [`TrajectoryMonitor`] checking against the
/// rescaled modulus of `m` (when given). A solver failure carries the report
/// accumulated up to that point.
pub fn monitored_run(
    theta0: &RealField,
    cfg: &SolverConfig,
    sample_dt: f64,
    m: Option<&KnvModulus>,
    tol: Option<f64>,
) -> Result<TrajectoryReport, RunFailure> {
    let omega = match m {
        Some(m) => Some(rescaled_modulus(m, theta0)?),
        None => None,
    };
    let mut monitor = TrajectoryMonitor::new(omega, tol);
    match crate::solver::run(theta0, cfg, sample_dt, &mut monitor) {
        Ok(_) => Ok(monitor.into_report()?),
        Err(error) => Err(RunFailure::Solver {
            error,
            partial: Box::new(monitor.into_report()?),
        }),
    }
}

/// Torus distance between two points of `grid`.
pub fn torus_distance(grid: &Grid, x: (f64, f64), y: (f64, f64)) -> f64 {
    let l = grid.length();
    let fold = |d: f64| {
        let d = d.rem_euclid(l);
        d.min(l - d)
    };
    fold(x.0 - y.0).hypot(fold(x.1 - y.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moc::CappedLinear;
    use std::f64::consts::PI;

    fn brute_force(theta: &RealField, xi: f64) -> f64 {
        let g = theta.grid();
        let n = g.n();
        let mut best = 0.0f64;
        for a in 0..n * n {
            for b in 0..n * n {
                let p = (g.coordinate(a / n), g.coordinate(a % n));
                let q = (g.coordinate(b / n), g.coordinate(b % n));
                if torus_distance(g, p, q) <= xi * (1.0 + 1e-12) {
                    best = best.max((theta.values()[a] - theta.values()[b]).abs());
                }
            }
        }
        best
    }

    #[test]
    fn constant_field_has_zero_modulus() {
        let g = Grid::periodic(16).unwrap();
        let em = empirical_modulus(&RealField::constant(g, 3.0), &[0.1, 1.0, 5.0]);
        assert!(em.omega_m.iter().all(|&v| v == 0.0));
        assert!(em.exact);
    }

    #[test]
    fn spike_matches_brute_force() {
        let g = Grid::periodic(4).unwrap();
        let mut v = vec![0.0; 16];
        v[5] = 1.0;
        let theta = RealField::new(g, v).unwrap();
        let xs: Vec<f64> = (0..40).map(|i| 0.1 * i as f64).collect();
        let em = empirical_modulus(&theta, &xs);
        for (x, w) in xs.iter().zip(&em.omega_m) {
            assert_eq!(*w, brute_force(&theta, *x), "{x}");
            assert_eq!(*w, if *x >= g.dx() { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn cosine_matches_closed_form() {
        let g = Grid::periodic(32).unwrap();
        let theta = RealField::from_fn(g, |x, _| x.cos()).unwrap();
        let xs: Vec<f64> = (1..=16).map(|i| i as f64 * g.dx()).collect();
        let em = empirical_modulus(&theta, &xs);
        for (x, w) in xs.iter().zip(&em.omega_m) {
            let exact = 2.0 * (x / 2.0).sin();
            assert!(*w <= exact + 1e-12 && exact - w <= 0.25 * g.dx() * g.dx(), "{x}");
            assert!((w - brute_force(&theta, *x)).abs() < 1e-15);
        }
        assert!((em.at(PI) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn subsampled_scan_is_flagged() {
        let g = Grid::periodic(288).unwrap();
        let theta = RealField::from_fn(g, |x, y| (x + y).sin()).unwrap();
        let near = empirical_modulus(&theta, &[10.0 * g.dx()]);
        assert!(near.exact);
        let far = empirical_modulus(&theta, &[40.0 * g.dx()]);
        assert!(!far.exact);
        assert!(far.omega_m[0] > near.omega_m[0]);
    }

    #[test]
    fn rescaled_reference_values() {
        let m = KnvModulus::reference();
        let g = Grid::periodic(32).unwrap();
        let theta = RealField::from_fn(g, |x, _| 0.5 * x.sin()).unwrap();
        let w = rescaled_modulus(&m, &theta).unwrap();
        assert!((w.mu - 1.0).abs() < 1e-12);
        assert!((w.value(0.3) - m.value(0.3)).abs() < 1e-12);

        let theta = RealField::from_fn(g, |x, _| 3.0 * x.sin()).unwrap();
        let w = rescaled_modulus(&m, &theta).unwrap();
        assert!((w.slope(0.0, Side::Right) - 6.0).abs() < 1e-9);
        let at = w.value(m.delta / w.mu);
        let expect = w.mu.powf(2.0 * m.s - 1.0) * (m.delta - m.delta.powf(m.r));
        assert!((at - expect).abs() < 1e-14 * expect);
        let tail = w.tail();
        let x = 10.0 * tail.start;
        assert!((tail.offset + tail.coeff * x.powf(tail.exponent) - w.value(x)).abs() < 1e-12 * w.value(x));

        assert_eq!(
            rescaled_modulus(&m, &RealField::constant(g, 1.0)),
            Err(MonitorError::ConstantField)
        );
    }

    #[test]
    fn smallness_examples() {
        let m = KnvModulus::reference();
        let g = Grid::periodic(32).unwrap();
        let small = RealField::from_fn(g, |x, _| 1e-3 * x.sin()).unwrap();
        let r = smallness_check(&small, &m).unwrap();
        assert!((r.product - 1e-3).abs() < 1e-12);
        assert!(r.pass && r.consistent() && !r.degenerate);
        let big = RealField::from_fn(g, |x, _| x.sin()).unwrap();
        let r = smallness_check(&big, &m).unwrap();
        assert!((r.product - 1.0).abs() < 1e-12);
        assert!(!r.pass && r.consistent());
        let r = smallness_check(&RealField::zeros(g), &m).unwrap();
        assert!(r.pass && r.degenerate && r.product == 0.0);
    }

    #[test]
    fn zero_field_has_no_breakthrough() {
        let g = Grid::periodic(32).unwrap();
        let m = RescaledModulus::new(KnvModulus::reference(), 2.0, 0.25);
        let c = check_moc(&RealField::zeros(g), &m, None).unwrap();
        assert!(c.record.is_none() && c.max_slack < 0.0);
    }

    #[test]
    fn tangent_field_is_reported() {
        let g = Grid::periodic(64).unwrap();
        let omega = RescaledModulus::new(KnvModulus::reference(), 3.0, 0.25);
        let theta = RealField::from_fn(g, |x, y| (x + 0.3).sin() + 0.4 * (2.0 * y).cos()).unwrap();
        let xs: Vec<f64> = vec![PI * 2f64.sqrt()];
        let em = empirical_modulus(&theta, &xs);
        let ratio = em
            .bins
            .iter()
            .map(|b| b.sup / omega.value(b.separation))
            .fold(0.0, f64::max);
        let tangent = theta.scaled(1.0 / ratio);
        let c = check_moc(&tangent, &omega, Some(1e-9)).unwrap();
        let rec = c.record.expect("tangency must be reported");
        assert!(rec.slack.abs() <= 1e-9);
        let d = torus_distance(&g, rec.x, rec.y);
        assert!((d - rec.separation).abs() < 1e-12);
        let below = check_moc(&theta.scaled(0.5 / ratio), &omega, Some(1e-9)).unwrap();
        assert!(below.record.is_none());
    }

    #[test]
    fn omega_prime_zero_equality_case() {
        let g = Grid::periodic(64).unwrap();
        let theta = RealField::from_fn(g, |x, _| 0.7 * x.sin()).unwrap();
        let lin = RescaledModulus::new(CappedLinear { cap: 10.0 }, 1.0, 0.5);
        let scaled = RescaledModulus {
            base: CappedLinear { cap: 7.0 },
            mu: 0.7f64.sqrt(),
            s: 1.0,
        };
        assert!((scaled.slope(0.0, Side::Right) - 0.7).abs() < 1e-15);
        assert!(omega_prime_zero_bound(&theta, &scaled, 1e-12).unwrap());
        assert!(!omega_prime_zero_bound(&theta.scaled(2.0), &scaled, 1e-12).unwrap());
        assert!(omega_prime_zero_bound(&RealField::constant(g, 5.0), &lin, 0.0).unwrap());
    }

    #[test]
    fn modulus_shape_flags() {
        let m = KnvModulus::reference();
        assert!(modulus_shape(&m).admissible());
        let theta = RealField::from_fn(Grid::periodic(16).unwrap(), |x, _| 0.3 * x.sin()).unwrap();
        assert!(modulus_shape(&rescaled_modulus(&m, &theta).unwrap()).admissible());
        let steep = KnvModulus { s: 0.49, r: 1.97, alpha: 0.99, gamma: 0.004, ..m };
        assert!(modulus_shape(&steep).singular_at_zero);
        let capped = modulus_shape(&CappedLinear { cap: 1.0 });
        assert!(!capped.unbounded && !capped.singular_at_zero);
    }

    #[test]
    fn smallness_implies_no_breakthrough_on_generated_data() {
        use crate::initial::{generate_initial_data, InitialKind, InitialSpec};
        let m = KnvModulus::reference();
        let g = Grid::periodic(64).unwrap();
        for seed in 0..4 {
            let spec = InitialSpec {
                kind: InitialKind::Random {
                    max_mode: 5,
                    sup_norm: 2e-3,
                    grad_sup: 8e-3,
                    seed,
                },
            };
            let theta = generate_initial_data(&spec, g).unwrap();
            let small = smallness_check(&theta, &m).unwrap();
            assert!(small.pass && small.consistent());
            let omega = rescaled_modulus(&m, &theta).unwrap();
            let c = check_moc(&theta, &omega, None).unwrap();
            assert!(c.record.is_none(), "seed {seed}: {c:?}");
        }
    }

    #[test]
    fn bkm_examples() {
        assert_eq!(bkm_accumulate(&[], &[]), 0.0);
        let t: Vec<f64> = (0..=10).map(|i| i as f64 * 0.3).collect();
        assert!((bkm_accumulate(&t, &vec![2.0; 11]) - 6.0).abs() < 1e-14);
        let t: Vec<f64> = (0..=3000).map(|i| i as f64 * 1e-3).collect();
        let g: Vec<f64> = t.iter().map(|t| 1.5 * (-0.8 * t).exp()).collect();
        let exact = 1.5 * (1.0 - (-0.8f64 * 3.0).exp()) / 0.8;
        assert!((bkm_accumulate(&t, &g) - exact).abs() < 1e-6);
    }

    #[test]
    fn decay_run_passes_monitor() {
        let cfg = SolverConfig {
            n: 32,
            t_end: 2.0,
            kappa: 1.0,
            dt_max: 0.1,
            ..SolverConfig::default()
        };
        let g = Grid::periodic(32).unwrap();
        let theta0 = RealField::from_fn(g, |x, _| 1e-3 * x.cos()).unwrap();
        let report = monitored_run(&theta0, &cfg, 0.5, Some(&KnvModulus::reference()), None).unwrap();
        assert_eq!(report.len(), 5);
        for (t, s) in report.times.iter().zip(&report.sup_norm) {
            assert!((s - 1e-3 * (-t).exp()).abs() < 1e-12);
        }
        assert!(report.pass(), "{report:?}");
        assert!(gradient_bound_check(&report, report.grad_sup[0]));
        assert!(report.bkm.windows(2).all(|w| w[1] >= w[0]));
    }
}
