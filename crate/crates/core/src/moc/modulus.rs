use std::fmt;

use super::MocError;

/// Which one-sided limit to take at a kink.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Closed form of a modulus beyond `start`: `ω(η) = offset + coeff · η^exponent`
/// with `exponent ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTail {
    pub start: f64,
    pub offset: f64,
    pub coeff: f64,
    pub exponent: f64,
}

impl PowerTail {
    /// `∫_lo^hi ω(η)/η dη` for `start <= lo <= hi`.
    pub fn log_integral(&self, lo: f64, hi: f64) -> f64 {
        let power_part = if self.exponent == 0.0 {
            self.coeff * (hi / lo).ln()
        } else {
            self.coeff * (hi.powf(self.exponent) - lo.powf(self.exponent)) / self.exponent
        };
        self.offset * (hi / lo).ln() + power_part
    }

    /// `∫_from^∞ ω(η)/η^2 dη` for `from >= start`.
    pub fn inverse_square_tail(&self, from: f64) -> f64 {
        self.offset / from + self.coeff * from.powf(self.exponent - 1.0) / (1.0 - self.exponent)
    }
}

/// A concave, increasing modulus of continuity with a power-law far field.
///
/// Implementors must be smooth between the points returned by [`kinks`],
/// and must match [`tail`] exactly beyond `tail().start`.
///
/// [`kinks`]: Modulus::kinks
/// [`tail`]: Modulus::tail
pub trait Modulus: Sync {
    fn value(&self, xi: f64) -> f64;
    fn slope(&self, xi: f64, side: Side) -> f64;
    fn curvature(&self, xi: f64, side: Side) -> f64;
    fn kinks(&self) -> Vec<f64>;
    fn tail(&self) -> PowerTail;

    /// `ω(hi) - ω(lo)`; implementors may override with a cancellation-free
    /// formula.
    fn increment(&self, lo: f64, hi: f64) -> f64 {
        self.value(hi) - self.value(lo)
    }

    /// Closed form of `∫_0^x ω(η)/η dη` when `x` lies below the first kink.
    fn near_log_integral(&self, _x: f64) -> Option<f64> {
        None
    }

    /// `ω(ξ + h) + ω(ξ - h) - 2ω(ξ)` for `0 <= h <= ξ`.
    fn second_difference(&self, xi: f64, h: f64) -> f64 {
        self.increment(xi, xi + h) - self.increment(xi - h, xi)
    }

    /// Rejects parameter sets that do not define a modulus.
    fn check(&self) -> Result<(), MocError> {
        Ok(())
    }
}

/// `(1 + t)^p + (1 - t)^p - 2` for `0 <= t <= 1`, free of cancellation for
/// small `t`.
pub(crate) fn symmetric_power_difference(t: f64, p: f64) -> f64 {
    if t > 0.25 {
        return (1.0 + t).powf(p) + (1.0 - t).powf(p) - 2.0;
    }
    // 2 Σ_{k even} binom(p, k) t^k
    let t2 = t * t;
    let mut coeff = p * (p - 1.0) / 2.0;
    let mut power = t2;
    let mut sum = 0.0;
    let mut k = 2.0;
    loop {
        let term = coeff * power;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() || k > 200.0 {
            break;
        }
        coeff *= (p - k) * (p - k - 1.0) / ((k + 1.0) * (k + 2.0));
        power *= t2;
        k += 2.0;
    }
    2.0 * sum
}

/// `hi^p - lo^p` without cancellation when `hi ≈ lo`.
pub(crate) fn power_difference(lo: f64, hi: f64, p: f64) -> f64 {
    if lo <= 0.0 {
        return hi.powf(p) - lo.max(0.0).powf(p);
    }
    lo.powf(p) * (p * ((hi - lo) / lo).ln_1p()).exp_m1()
}

/// The piecewise modulus `ξ - ξ^r` on `[0, δ]`, continued with slope
/// `γ (ξ/δ)^{-α}` beyond `δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnvModulus {
    pub delta: f64,
    pub gamma: f64,
    pub r: f64,
    pub alpha: f64,
    pub s: f64,
}

/// Upper bounds on `γ` implied by the remaining parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaBounds {
    /// `1 - r δ^{r-1}` (strict): concavity at the breakpoint.
    pub concavity: f64,
    /// `α`: convection estimate for `ξ <= δ`.
    pub alpha: f64,
    /// `(1 - α)/2` (strict): growth comparison for `ξ > δ`.
    pub half_one_minus_alpha: f64,
    /// `δ^{2s}`: far-field dominance.
    pub delta_power: f64,
}

impl GammaBounds {
    pub fn new(delta: f64, r: f64, alpha: f64, s: f64) -> Self {
        Self {
            concavity: 1.0 - r * delta.powf(r - 1.0),
            alpha,
            half_one_minus_alpha: 0.5 * (1.0 - alpha),
            delta_power: delta.powf(2.0 * s),
        }
    }

    pub fn min(&self) -> f64 {
        self.concavity
            .min(self.alpha)
            .min(self.half_one_minus_alpha)
            .min(self.delta_power)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    PowerRange,
    DeltaPositive,
    GammaPositive,
    NearExponentRange,
    FarExponentRange,
    Concavity,
    GammaBelowAlpha,
    GammaBelowHalfGap,
    GammaBelowDeltaPower,
}

impl Constraint {
    /// Structural constraints make `ω` a modulus at all; the others are
    /// needed only by the dominance argument.
    pub fn is_structural(self) -> bool {
        !matches!(
            self,
            Constraint::GammaBelowAlpha
                | Constraint::GammaBelowHalfGap
                | Constraint::GammaBelowDeltaPower
        )
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            Constraint::PowerRange => "s in (0, 1/2)",
            Constraint::DeltaPositive => "delta > 0",
            Constraint::GammaPositive => "gamma > 0",
            Constraint::NearExponentRange => "r in (1, 1 + 2s)",
            Constraint::FarExponentRange => "alpha in (2s, 1)",
            Constraint::Concavity => "gamma < 1 - r delta^(r-1)",
            Constraint::GammaBelowAlpha => "gamma <= alpha",
            Constraint::GammaBelowHalfGap => "gamma < (1 - alpha)/2",
            Constraint::GammaBelowDeltaPower => "gamma <= delta^(2s)",
        };
        f.write_str(text)
    }
}

/// One violated constraint. `margin` is negative and measures by how much
/// the parameter misses its bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub constraint: Constraint,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} violated: value {:e}, bound {:e}, margin {:e}",
            self.constraint, self.value, self.bound, self.margin
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    pub gamma_bounds: GammaBounds,
    pub violations: Vec<Violation>,
}

impl ParamReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn is_structurally_valid(&self) -> bool {
        self.violations.iter().all(|v| !v.constraint.is_structural())
    }
}

/// Checks every parameter constraint independently.
pub fn validate_params(m: &KnvModulus) -> ParamReport {
    let bounds = GammaBounds::new(m.delta, m.r, m.alpha, m.s);
    let mut violations = Vec::new();
    let mut check = |constraint, ok: bool, value: f64, bound: f64, margin: f64| {
        if !ok {
            violations.push(Violation {
                constraint,
                value,
                bound,
                margin,
            });
        }
    };
    let open = |x: f64, lo: f64, hi: f64| (x - lo).min(hi - x);

    let sm = open(m.s, 0.0, 0.5);
    check(Constraint::PowerRange, sm > 0.0, m.s, 0.5, sm);
    check(Constraint::DeltaPositive, m.delta > 0.0, m.delta, 0.0, m.delta);
    check(Constraint::GammaPositive, m.gamma > 0.0, m.gamma, 0.0, m.gamma);
    let rm = open(m.r, 1.0, 1.0 + 2.0 * m.s);
    check(Constraint::NearExponentRange, rm > 0.0, m.r, 1.0 + 2.0 * m.s, rm);
    let am = open(m.alpha, 2.0 * m.s, 1.0);
    check(Constraint::FarExponentRange, am > 0.0, m.alpha, 2.0 * m.s, am);
    let g = m.gamma;
    check(
        Constraint::Concavity,
        g < bounds.concavity,
        g,
        bounds.concavity,
        bounds.concavity - g,
    );
    check(
        Constraint::GammaBelowAlpha,
        g <= bounds.alpha,
        g,
        bounds.alpha,
        bounds.alpha - g,
    );
    check(
        Constraint::GammaBelowHalfGap,
        g < bounds.half_one_minus_alpha,
        g,
        bounds.half_one_minus_alpha,
        bounds.half_one_minus_alpha - g,
    );
    check(
        Constraint::GammaBelowDeltaPower,
        g <= bounds.delta_power,
        g,
        bounds.delta_power,
        bounds.delta_power - g,
    );
    // NaN parameters fail every comparison above; make sure they are caught
    let non_finite = [m.delta, m.gamma, m.r, m.alpha, m.s]
        .iter()
        .any(|v| !v.is_finite());
    check(Constraint::DeltaPositive, !non_finite, m.delta, 0.0, f64::NAN);
    ParamReport {
        gamma_bounds: bounds,
        violations,
    }
}

impl KnvModulus {
    /// Parameters used throughout the tests and examples:
    /// `s = 1/4, r = 1.2, α = 0.6, δ = 0.01, γ = 0.05`.
    pub fn reference() -> Self {
        Self {
            delta: 0.01,
            gamma: 0.05,
            r: 1.2,
            alpha: 0.6,
            s: 0.25,
        }
    }

    /// Modulus with `r = 1 + s`, `α = (2s + 1)/2` (interval midpoints).
    pub fn with_default_exponents(s: f64, delta: f64, gamma: f64) -> Self {
        Self {
            delta,
            gamma,
            r: 1.0 + s,
            alpha: (2.0 * s + 1.0) / 2.0,
            s,
        }
    }

    /// Rejects parameters for which `ω` is not a modulus of continuity.
    pub fn check_structure(&self) -> Result<(), MocError> {
        let report = validate_params(self);
        if report.is_structurally_valid() {
            Ok(())
        } else {
            Err(MocError::InvalidModulus(
                report
                    .violations
                    .into_iter()
                    .filter(|v| v.constraint.is_structural())
                    .collect(),
            ))
        }
    }

    /// Far-field coefficient `γ δ^α / (1 - α)`.
    pub fn far_coeff(&self) -> f64 {
        self.gamma * self.delta.powf(self.alpha) / (1.0 - self.alpha)
    }

    /// `ω(δ) = δ - δ^r`.
    pub fn value_at_delta(&self) -> f64 {
        self.delta - self.delta.powf(self.r)
    }

    fn near(&self, xi: f64) -> f64 {
        xi - xi.powf(self.r)
    }

    fn near_increment(&self, lo: f64, hi: f64) -> f64 {
        (hi - lo) - power_difference(lo, hi, self.r)
    }

    fn far_increment(&self, lo: f64, hi: f64) -> f64 {
        self.far_coeff() * power_difference(lo, hi, 1.0 - self.alpha)
    }
}

impl Modulus for KnvModulus {
    fn value(&self, xi: f64) -> f64 {
        if xi <= self.delta {
            self.near(xi.max(0.0))
        } else {
            self.value_at_delta() + self.far_increment(self.delta, xi)
        }
    }

    fn slope(&self, xi: f64, side: Side) -> f64 {
        if xi < self.delta || (xi == self.delta && side == Side::Left) {
            1.0 - self.r * xi.max(0.0).powf(self.r - 1.0)
        } else {
            self.gamma * (xi / self.delta).powf(-self.alpha)
        }
    }

    fn curvature(&self, xi: f64, side: Side) -> f64 {
        if xi < self.delta || (xi == self.delta && side == Side::Left) {
            -self.r * (self.r - 1.0) * xi.powf(self.r - 2.0)
        } else {
            -self.alpha * self.gamma / self.delta * (xi / self.delta).powf(-self.alpha - 1.0)
        }
    }

    fn kinks(&self) -> Vec<f64> {
        vec![self.delta]
    }

    fn tail(&self) -> PowerTail {
        PowerTail {
            start: self.delta,
            offset: self.value_at_delta() - self.gamma * self.delta / (1.0 - self.alpha),
            coeff: self.far_coeff(),
            exponent: 1.0 - self.alpha,
        }
    }

    fn increment(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(0.0);
        if hi == lo {
            return 0.0;
        }
        if hi < lo {
            return -self.increment(hi, lo);
        }
        let d = self.delta;
        if hi <= d {
            self.near_increment(lo, hi)
        } else if lo >= d {
            self.far_increment(lo, hi)
        } else {
            self.near_increment(lo, d) + self.far_increment(d, hi)
        }
    }

    fn near_log_integral(&self, x: f64) -> Option<f64> {
        (x <= self.delta).then(|| x - x.powf(self.r) / self.r)
    }

    fn second_difference(&self, xi: f64, h: f64) -> f64 {
        if xi <= 0.0 {
            return 0.0;
        }
        let t = (h / xi).min(1.0);
        if xi + h <= self.delta {
            -xi.powf(self.r) * symmetric_power_difference(t, self.r)
        } else if xi - h >= self.delta {
            let p = 1.0 - self.alpha;
            self.far_coeff() * xi.powf(p) * symmetric_power_difference(t, p)
        } else {
            self.increment(xi, xi + h) - self.increment(xi - h, xi)
        }
    }

    fn check(&self) -> Result<(), MocError> {
        self.check_structure()
    }
}

/// `ω(ξ) = min(ξ, cap)`; a modulus with a closed-form Riesz functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CappedLinear {
    pub cap: f64,
}

impl Modulus for CappedLinear {
    fn near_log_integral(&self, x: f64) -> Option<f64> {
        (x <= self.cap).then_some(x)
    }

    fn value(&self, xi: f64) -> f64 {
        xi.clamp(0.0, self.cap)
    }

    fn slope(&self, xi: f64, side: Side) -> f64 {
        if xi < self.cap || (xi == self.cap && side == Side::Left) {
            1.0
        } else {
            0.0
        }
    }

    fn curvature(&self, _xi: f64, _side: Side) -> f64 {
        0.0
    }

    fn kinks(&self) -> Vec<f64> {
        vec![self.cap]
    }

    fn tail(&self) -> PowerTail {
        PowerTail {
            start: self.cap,
            offset: self.cap,
            coeff: 0.0,
            exponent: 0.0,
        }
    }
}

/// Evaluates `ω(ξ)` after rejecting structurally invalid parameters.
pub fn knv_omega(m: &KnvModulus, xi: f64) -> Result<f64, MocError> {
    m.check_structure()?;
    if !(xi >= 0.0) {
        return Err(MocError::InvalidArgument(format!("separation {xi} must be >= 0")));
    }
    Ok(m.value(xi))
}

/// Evaluates `ω'(ξ)`; at `ξ = δ` this is the left limit `1 - r δ^{r-1}`.
pub fn knv_omega_prime(m: &KnvModulus, xi: f64) -> Result<f64, MocError> {
    m.check_structure()?;
    if !(xi >= 0.0) {
        return Err(MocError::InvalidArgument(format!("separation {xi} must be >= 0")));
    }
    Ok(m.slope(xi, Side::Left))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_values() {
        let m = KnvModulus::reference();
        assert_eq!(knv_omega(&m, 0.0).unwrap(), 0.0);
        // 0.01 - 0.01^1.2
        let w = knv_omega(&m, 0.01).unwrap();
        assert!((w - (0.01 - 0.01f64.powf(1.2))).abs() < 1e-16);
        assert!((w - 6.0189e-3).abs() < 1e-7);
        let w2 = knv_omega(&m, 0.02).unwrap();
        assert!(w2 > w && w2 - 2.0 * w < 0.0);

        assert_eq!(knv_omega_prime(&m, 0.0).unwrap(), 1.0);
        let left = knv_omega_prime(&m, 0.01).unwrap();
        assert!((left - 0.52227).abs() < 1e-5);
        assert!((m.slope(0.01, Side::Right) - 0.05).abs() < 1e-16);
    }

    #[test]
    fn gamma_bounds_for_reference_parameters() {
        let m = KnvModulus::reference();
        let report = validate_params(&m);
        assert!(report.is_valid(), "{:?}", report.violations);
        let b = report.gamma_bounds;
        assert!((b.concavity - (1.0 - 1.2 * 0.01f64.powf(0.2))).abs() < 1e-15);
        assert_eq!(b.alpha, 0.6);
        assert!((b.half_one_minus_alpha - 0.2).abs() < 1e-15);
        assert!((b.delta_power - 0.1).abs() < 1e-15);
        assert!((b.min() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn single_violations_are_isolated() {
        let m = KnvModulus {
            gamma: 0.15,
            ..KnvModulus::reference()
        };
        let report = validate_params(&m);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].constraint, Constraint::GammaBelowDeltaPower);
        assert!((report.violations[0].margin + 0.05).abs() < 1e-12);
        assert!(report.is_structurally_valid());
        assert!(knv_omega(&m, 0.5).is_ok());

        let m = KnvModulus {
            r: 1.6,
            ..KnvModulus::reference()
        };
        let report = validate_params(&m);
        assert!(report
            .violations
            .iter()
            .any(|v| v.constraint == Constraint::NearExponentRange));
        assert!(matches!(knv_omega(&m, 0.1), Err(MocError::InvalidModulus(_))));
    }

    #[test]
    fn nan_parameters_are_rejected() {
        let m = KnvModulus {
            delta: f64::NAN,
            ..KnvModulus::reference()
        };
        assert!(!validate_params(&m).is_valid());
    }

    #[test]
    fn tail_matches_value() {
        let m = KnvModulus::reference();
        let t = m.tail();
        for xi in [0.01f64, 0.02, 1.0, 1e4] {
            let closed = t.offset + t.coeff * xi.powf(t.exponent);
            assert!((closed - m.value(xi)).abs() <= 1e-14 * m.value(xi).max(1.0));
        }
    }

    #[test]
    fn symmetric_difference_series_matches_direct_form() {
        for p in [0.3, 1.2, 1.45] {
            for t in [0.01, 0.1, 0.2, 0.25] {
                let direct = (1.0f64 + t).powf(p) + (1.0f64 - t).powf(p) - 2.0;
                let series = symmetric_power_difference(t, p);
                assert!((direct - series).abs() <= 1e-15 + 1e-12 * direct.abs(), "{p} {t}");
            }
        }
        // leading term p (p - 1) t^2
        let v = symmetric_power_difference(1e-6, 1.2);
        assert!((v / (1.2 * 0.2 * 1e-12) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn increment_is_accurate_for_close_points() {
        let m = KnvModulus::reference();
        let (lo, hi) = (3.0, 3.0 + 1e-9);
        let exact = m.slope(3.0, Side::Right) * (hi - lo);
        assert!(((m.increment(lo, hi) - exact) / exact).abs() < 1e-8);
        let mixed = m.increment(0.005, 0.5);
        assert!((mixed - (m.value(0.5) - m.value(0.005))).abs() < 1e-15);
    }

    fn valid_modulus() -> impl Strategy<Value = KnvModulus> {
        (0.05f64..0.45, 0.01f64..0.99, 0.01f64..0.99, -6.0f64..-1.0, 0.01f64..0.99).prop_map(
            |(s, rf, af, log_delta, gf)| {
                let r = 1.0 + rf * 2.0 * s;
                let alpha = 2.0 * s + af * (1.0 - 2.0 * s);
                let delta = 10f64.powf(log_delta);
                let gamma = gf * GammaBounds::new(delta, r, alpha, s).min();
                KnvModulus {
                    delta,
                    gamma,
                    r,
                    alpha,
                    s,
                }
            },
        )
    }

    proptest! {
        #[test]
        fn modulus_properties(m in valid_modulus(), a in 0.0f64..1.0, b in 0.0f64..1.0, scale in -8.0f64..4.0) {
            prop_assume!(validate_params(&m).is_valid());
            let x = a * 10f64.powf(scale);
            let y = b * 10f64.powf(scale);
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            // increasing, below the diagonal, concave at midpoints
            prop_assert!(m.value(hi) >= m.value(lo));
            prop_assert!(m.value(hi) <= hi * (1.0 + 1e-12));
            let mid = m.value(0.5 * (lo + hi));
            prop_assert!(mid + 1e-15 * mid.abs().max(1e-300) >= 0.5 * (m.value(lo) + m.value(hi)));
            prop_assert!(m.slope(hi, Side::Left) <= 1.0);
            // continuity at the breakpoint
            let d = m.delta;
            let jump = m.tail().offset + m.tail().coeff * d.powf(m.tail().exponent) - m.value_at_delta();
            prop_assert!(jump.abs() <= 1e-14 * d);
            // concavity at the kink: slope drops
            prop_assert!(m.slope(d, Side::Left) > m.slope(d, Side::Right));
        }
    }
}
