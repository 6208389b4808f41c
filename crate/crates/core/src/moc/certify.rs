use rayon::prelude::*;

use crate::quadrature::QuadConfig;

use super::functionals::{dissipation_functional, riesz_modulus};
use super::modulus::{validate_params, GammaBounds, KnvModulus, Modulus, Side};
use super::MocError;

/// Constants the dominance inequality depends on but which are not pinned
/// down analytically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateConstants {
    /// Riesz-transform estimate constant.
    pub a: f64,
    /// Dissipation representation constant.
    pub c_diss: f64,
    /// Convection case-bound constant for `ξ > δ`.
    pub c_prime: f64,
    /// Dissipation coefficient; zero is accepted so that failure can be
    /// demonstrated.
    pub kappa: f64,
}

impl Default for CertificateConstants {
    fn default() -> Self {
        Self {
            a: 1.0,
            c_diss: 1.0,
            c_prime: 1.0,
            kappa: 1.0,
        }
    }
}

impl CertificateConstants {
    pub fn validate(&self) -> Result<(), MocError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.a) && ok(self.c_diss) && ok(self.c_prime) && self.kappa.is_finite() && self.kappa >= 0.0 {
            Ok(())
        } else {
            Err(MocError::InvalidArgument(format!(
                "certificate constants must be positive (kappa >= 0): {self:?}"
            )))
        }
    }
}

/// `count` points per decade from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let steps = (decades * per_decade as f64).round().max(1.0) as usize;
    let (a, b) = (lo.ln(), hi.ln());
    (0..=steps)
        .map(|i| {
            if i == steps {
                hi
            } else {
                (a + (b - a) * i as f64 / steps as f64).exp()
            }
        })
        .collect()
}

/// 64 points per decade over `[10⁻⁶ δ, 10⁶ δ]`; `δ` itself is a grid point.
pub fn default_xi_grid(delta: f64) -> Vec<f64> {
    let mut grid = log_grid(1e-6 * delta, 1e6 * delta, 64);
    grid[384] = delta;
    grid
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginPoint {
    pub xi: f64,
    pub convection: f64,
    pub dissipation: f64,
    pub margin: f64,
    /// Quadrature error bound on `margin`.
    pub error: f64,
}

/// `Ω(ξ) ω'(ξ) + κ C D(ξ)`; the certificate holds at `ξ` when negative.
/// At `ξ = δ` the left slope `1 - r δ^{r-1}` is used.
pub fn dominance_margin(
    m: &KnvModulus,
    xi: f64,
    k: &CertificateConstants,
    cfg: &QuadConfig,
) -> Result<MarginPoint, MocError> {
    k.validate()?;
    let omega = riesz_modulus(m, xi, k.a, cfg)?;
    let slope = m.slope(xi, Side::Left);
    let scale = k.kappa * k.c_diss;
    let (dissipation, d_err) = if scale == 0.0 {
        (0.0, 0.0)
    } else {
        let d = dissipation_functional(m, xi, m.s, cfg)?.total();
        (scale * d.value, scale * d.error)
    };
    let convection = omega.value * slope;
    Ok(MarginPoint {
        xi,
        convection,
        dissipation,
        margin: convection + dissipation,
        error: omega.error * slope + d_err,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub xi_grid: Vec<f64>,
    pub convection: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub margin: Vec<f64>,
    pub error: Vec<f64>,
    /// Every margin is negative.
    pub pass: bool,
}

impl DominanceReport {
    pub fn max_margin(&self) -> f64 {
        self.margin.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest margin.
    pub fn worst(&self) -> Option<usize> {
        (0..self.margin.len()).max_by(|&i, &j| self.margin[i].total_cmp(&self.margin[j]))
    }
}

/// Evaluates [`dominance_margin`] over a grid, in parallel.
pub fn dominance_report(
    m: &KnvModulus,
    k: &CertificateConstants,
    grid: &[f64],
    cfg: &QuadConfig,
) -> Result<DominanceReport, MocError> {
    m.check_structure()?;
    let points = grid
        .par_iter()
        .map(|&xi| dominance_margin(m, xi, k, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let pass = !points.is_empty() && points.iter().all(|p| p.margin < 0.0);
    Ok(DominanceReport {
        xi_grid: grid.to_vec(),
        convection: points.iter().map(|p| p.convection).collect(),
        dissipation: points.iter().map(|p| p.dissipation).collect(),
        margin: points.iter().map(|p| p.margin).collect(),
        error: points.iter().map(|p| p.error).collect(),
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `ξ <= δ`
    Near,
    /// `ξ > δ`
    Far,
}

/// Constants entering the case bounds that are fitted from the functionals
/// themselves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseConstants {
    /// Largest `c` with `D(ξ) <= -c ξ^{r-2s}` on the near grid.
    pub c_near: f64,
    /// Smallest `C′` with `Ω(ξ) <= A ω(ξ)(C′ + log(ξ/δ))` on the far grid.
    pub c_prime: f64,
    /// Doubling deficit `inf (2 - ω(2ξ)/ω(ξ))` on the far grid.
    pub doubling: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseBounds {
    pub regime: Regime,
    pub convection: f64,
    pub dissipation: f64,
}

/// `A ξ (3 + log(δ/ξ))`.
pub fn near_convection_bound(m: &KnvModulus, xi: f64, a: f64) -> f64 {
    a * xi * (3.0 + (m.delta / xi).ln())
}

/// `A γ ω(ξ) (C′ + log(ξ/δ)) (ξ/δ)^{-α}`.
pub fn far_convection_bound(m: &KnvModulus, xi: f64, a: f64, c_prime: f64) -> f64 {
    let x = xi / m.delta;
    a * m.gamma * m.value(xi) * (c_prime + x.ln()) * x.powf(-m.alpha)
}

/// Closed-form upper bounds on convection and dissipation in the regime
/// containing `ξ`. Near: `A ξ (3 + log(δ/ξ))` and `-κ C c ξ^{r-2s}`. Far:
/// [`far_convection_bound`] with `k.c_prime`, and
/// `κ C (ω(2ξ) - 2ω(ξ)) (ξ/2)^{-2s} / (2s)`.
pub fn case_bounds(
    m: &KnvModulus,
    xi: f64,
    k: &CertificateConstants,
    fitted: &CaseConstants,
) -> CaseBounds {
    let scale = k.kappa * k.c_diss;
    let s = m.s;
    if xi <= m.delta {
        CaseBounds {
            regime: Regime::Near,
            convection: near_convection_bound(m, xi, k.a),
            dissipation: -scale * fitted.c_near * xi.powf(m.r - 2.0 * s),
        }
    } else {
        let deficit = m.value(2.0 * xi) - 2.0 * m.value(xi);
        CaseBounds {
            regime: Regime::Far,
            convection: far_convection_bound(m, xi, k.a, k.c_prime),
            dissipation: scale * deficit * (0.5 * xi).powf(-2.0 * s) / (2.0 * s),
        }
    }
}

/// Upper bound on `margin/ω(ξ)` for `ξ > δ`:
/// `A γ (C′ + log(ξ/δ))(ξ/δ)^{-α} - κ C C″ 2^{2s}/(2s) ξ^{-2s}`.
pub fn far_margin_bound(
    m: &KnvModulus,
    xi: f64,
    k: &CertificateConstants,
    c_prime: f64,
    doubling: f64,
) -> f64 {
    let x = xi / m.delta;
    let s = m.s;
    k.a * m.gamma * (c_prime + x.ln()) * x.powf(-m.alpha)
        - k.kappa * k.c_diss * doubling * 2f64.powf(2.0 * s) / (2.0 * s) * xi.powf(-2.0 * s)
}

/// Fits [`CaseConstants`] from the functionals on `grid`.
pub fn fit_case_constants(
    m: &KnvModulus,
    grid: &[f64],
    cfg: &QuadConfig,
) -> Result<CaseConstants, MocError> {
    m.check_structure()?;
    let near: Vec<f64> = grid.iter().copied().filter(|&x| x <= m.delta).collect();
    let far: Vec<f64> = grid.iter().copied().filter(|&x| x > m.delta).collect();
    let c_near = near
        .par_iter()
        .map(|&xi| {
            let d = dissipation_functional(m, xi, m.s, cfg)?.total().value;
            Ok(-d / xi.powf(m.r - 2.0 * m.s))
        })
        .collect::<Result<Vec<f64>, MocError>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let c_prime = far
        .par_iter()
        .map(|&xi| {
            let omega = riesz_modulus(m, xi, 1.0, cfg)?.value;
            Ok(omega / m.value(xi) - (xi / m.delta).ln())
        })
        .collect::<Result<Vec<f64>, MocError>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let doubling = if far.is_empty() {
        f64::NAN
    } else {
        doubling_deficit(m, &far)?
    };
    Ok(CaseConstants {
        c_near,
        c_prime,
        doubling,
    })
}

/// `½ (δ - δ^r)^{2s}`.
pub fn smallness_constant(m: &KnvModulus) -> f64 {
    0.5 * m.value_at_delta().powf(2.0 * m.s)
}

fn far_grid_only(m: &KnvModulus, grid: &[f64]) -> Result<(), MocError> {
    match grid.iter().find(|&&x| !(x > m.delta) || !x.is_finite()) {
        Some(x) => Err(MocError::InvalidArgument(format!(
            "grid point {x} is not beyond delta = {}",
            m.delta
        ))),
        None => Ok(()),
    }
}

/// Largest `δ^α ξ^{1-α} - ((1-α)/γ) ω(ξ)` over the grid; `<= 0` means the
/// growth comparison holds everywhere.
pub fn growth_comparison_check(m: &KnvModulus, grid: &[f64]) -> Result<f64, MocError> {
    m.check_structure()?;
    far_grid_only(m, grid)?;
    let ratio = (1.0 - m.alpha) / m.gamma;
    Ok(grid
        .iter()
        .map(|&xi| m.delta.powf(m.alpha) * xi.powf(1.0 - m.alpha) - ratio * m.value(xi))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `inf (2 - ω(2ξ)/ω(ξ))` over the grid.
pub fn doubling_deficit(m: &KnvModulus, grid: &[f64]) -> Result<f64, MocError> {
    m.check_structure()?;
    far_grid_only(m, grid)?;
    Ok(grid
        .iter()
        .map(|&xi| 2.0 - m.value(2.0 * xi) / m.value(xi))
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBudget {
    pub max_iterations: usize,
    pub delta_start: f64,
    /// Factor applied to `δ` after each failed candidate.
    pub shrink: f64,
    pub r: Option<f64>,
    pub alpha: Option<f64>,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            max_iterations: 40,
            delta_start: 0.1,
            shrink: 0.5,
            r: None,
            alpha: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Whether `modulus` passed dominance on the whole grid.
    pub found: bool,
    /// The passing modulus, or the candidate with the smallest worst margin.
    pub modulus: KnvModulus,
    pub report: DominanceReport,
    pub iterations: usize,
}

impl SearchOutcome {
    pub fn best_margin(&self) -> f64 {
        self.report.max_margin()
    }
}

/// Geometric descent on `δ` with `γ` at half its tightest bound, until the
/// dominance margin is negative over [`default_xi_grid`].
///
/// Exhausting the budget is not an error: the outcome then has
/// `found == false` and carries the best candidate seen.
pub fn find_admissible(
    s: f64,
    k: &CertificateConstants,
    budget: &SearchBudget,
    cfg: &QuadConfig,
) -> Result<SearchOutcome, MocError> {
    if !(s > 0.0 && s < 0.5) {
        return Err(MocError::InvalidArgument(format!(
            "dissipation power {s} outside (0, 1/2)"
        )));
    }
    k.validate()?;
    if !(budget.delta_start > 0.0 && budget.shrink > 0.0 && budget.shrink < 1.0) {
        return Err(MocError::InvalidArgument(format!(
            "search budget needs delta_start > 0 and shrink in (0, 1): {budget:?}"
        )));
    }
    let r = budget.r.unwrap_or(1.0 + s);
    let alpha = budget.alpha.unwrap_or((2.0 * s + 1.0) / 2.0);
    let mut best: Option<SearchOutcome> = None;
    let mut delta = budget.delta_start;
    for iteration in 1..=budget.max_iterations {
        let gamma = 0.5 * GammaBounds::new(delta, r, alpha, s).min();
        let candidate = KnvModulus {
            delta,
            gamma,
            r,
            alpha,
            s,
        };
        delta *= budget.shrink;
        if !validate_params(&candidate).is_valid() {
            continue;
        }
        let report = dominance_report(&candidate, k, &default_xi_grid(candidate.delta), cfg)?;
        let outcome = SearchOutcome {
            found: report.pass,
            modulus: candidate,
            report,
            iterations: iteration,
        };
        if outcome.found {
            return Ok(outcome);
        }
        if best
            .as_ref()
            .is_none_or(|b| outcome.best_margin() < b.best_margin())
        {
            best = Some(outcome);
        }
    }
    best.map(|mut b| {
        b.iterations = budget.max_iterations;
        b
    })
    .ok_or_else(|| {
        MocError::InvalidArgument(format!(
            "no valid candidate modulus within the search budget {budget:?}"
        ))
    })
}
