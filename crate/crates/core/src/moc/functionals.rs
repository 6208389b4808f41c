use crate::quadrature::{breakpoints, integrate_segments, Estimate, QuadConfig};

use super::modulus::{Modulus, Side};
use super::MocError;

fn check_separation(xi: f64) -> Result<(), MocError> {
    if xi.is_finite() && xi >= 0.0 {
        Ok(())
    } else {
        Err(MocError::InvalidArgument(format!(
            "separation {xi} must be finite and >= 0"
        )))
    }
}

fn quad_err(xi: f64) -> impl Fn(crate::quadrature::QuadError) -> MocError {
    move |source| MocError::Quadrature { xi, source }
}

fn kinks_of<M: Modulus + ?Sized>(m: &M) -> Vec<f64> {
    m.kinks()
        .into_iter()
        .filter(|b| b.is_finite() && *b > 0.0)
        .collect()
}

/// `Ω(ξ) = A [∫_0^ξ ω(η)/η dη + ξ ∫_ξ^∞ ω(η)/η² dη]`.
///
/// The part below the modulus' first kink uses its closed form when
/// available, the far field uses the power-law tail, and whatever lies in
/// between goes through adaptive quadrature. `Ω(0) = 0` is returned directly.
pub fn riesz_modulus<M: Modulus + ?Sized>(
    m: &M,
    xi: f64,
    a: f64,
    cfg: &QuadConfig,
) -> Result<Estimate, MocError> {
    m.check()?;
    check_separation(xi)?;
    if xi == 0.0 {
        return Ok(Estimate::ZERO);
    }
    let tail = m.tail();
    let x_tail = tail.start;
    let kinks = kinks_of(m);
    let near_end = xi.min(x_tail);

    let mut inner = match m.near_log_integral(near_end) {
        Some(v) => Estimate::exact(v),
        None => integrate_segments(
            |eta| m.value(eta) / eta,
            &breakpoints(0.0, near_end, kinks.iter().copied()),
            cfg,
        )
        .map_err(quad_err(xi))?,
    };
    if xi > x_tail {
        inner = inner + Estimate::exact(tail.log_integral(x_tail, xi));
    }

    let outer = if xi < x_tail {
        let middle = integrate_segments(
            |eta| m.value(eta) / (eta * eta),
            &breakpoints(xi, x_tail, kinks.iter().copied()),
            cfg,
        )
        .map_err(quad_err(xi))?;
        middle + Estimate::exact(tail.inverse_square_tail(x_tail))
    } else {
        Estimate::exact(tail.inverse_square_tail(xi))
    };
    Ok((inner + outer * xi) * a)
}

/// The two parts of the dissipation functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissipation {
    /// `∫_0^{ξ/2} [ω(ξ+2η) + ω(ξ-2η) - 2ω(ξ)] η^{-1-2s} dη`
    pub near: Estimate,
    /// `∫_{ξ/2}^∞ [ω(2η+ξ) - ω(2η-ξ) - 2ω(ξ)] η^{-1-2s} dη`
    pub far: Estimate,
}

impl Dissipation {
    pub fn total(&self) -> Estimate {
        self.near + self.far
    }
}

/// Evaluates `D(ξ)` for the dissipation power `s ∈ (0, 1/2)`.
///
/// Below `η_c` the numerator of the first integral is replaced by its Taylor
/// expansion and integrated exactly: `4ω''(ξ)η²` away from kinks, and
/// `2η Δω'(ξ) + 2η² Σω''(ξ)` when `ξ` sits on one. The far integral is cut at
/// `η_T = 10³ max(ξ, kinks)`; beyond it the constant `-2ω(ξ)` is integrated
/// exactly and the decaying remainder is mapped to `[0, 1]` by
/// `t = (η_T/η)^{2s}`.
pub fn dissipation_functional<M: Modulus + ?Sized>(
    m: &M,
    xi: f64,
    s: f64,
    cfg: &QuadConfig,
) -> Result<Dissipation, MocError> {
    m.check()?;
    check_separation(xi)?;
    if xi == 0.0 {
        return Err(MocError::InvalidArgument(
            "dissipation functional needs xi > 0".into(),
        ));
    }
    if !(s > 0.0 && s < 0.5) {
        return Err(MocError::InvalidArgument(format!(
            "dissipation power {s} outside (0, 1/2)"
        )));
    }
    let kinks = kinks_of(m);
    let weight = |eta: f64| eta.powf(-1.0 - 2.0 * s);

    // near part
    let at_kink = kinks.iter().any(|b| (xi - b).abs() <= 1e-12 * xi);
    let gap = kinks
        .iter()
        .map(|b| (xi - b).abs())
        .filter(|d| *d > 1e-12 * xi)
        .fold(f64::INFINITY, f64::min);
    let eta_c = if at_kink { 1e-6 * xi } else { 1e-3 * xi }.min(0.25 * gap);
    let taylor = if at_kink {
        let jump = m.slope(xi, Side::Right) - m.slope(xi, Side::Left);
        let curv = m.curvature(xi, Side::Right) + m.curvature(xi, Side::Left);
        let v = 2.0 * jump * eta_c.powf(1.0 - 2.0 * s) / (1.0 - 2.0 * s)
            + 2.0 * curv * eta_c.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);
        Estimate {
            value: v,
            error: 4.0 * v.abs() * eta_c / xi,
            evaluations: 0,
        }
    } else {
        let curv = m.curvature(xi, Side::Right);
        let v = 4.0 * curv * eta_c.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);
        Estimate {
            value: v,
            error: 4.0 * v.abs() * (eta_c / xi).powi(2),
            evaluations: 0,
        }
    };
    let near_points = breakpoints(
        eta_c,
        0.5 * xi,
        kinks
            .iter()
            .flat_map(|b| [0.5 * (b - xi), 0.5 * (xi - b)]),
    );
    let near_quad = integrate_segments(
        |eta| m.second_difference(xi, (2.0 * eta).min(xi)) * weight(eta),
        &near_points,
        cfg,
    )
    .map_err(quad_err(xi))?;
    let near = taylor + near_quad;

    // far part
    let omega = m.value(xi);
    let scale = kinks.iter().copied().fold(xi, f64::max);
    let eta_t = 1e3 * scale;
    let far_points = breakpoints(
        0.5 * xi,
        eta_t,
        kinks
            .iter()
            .flat_map(|b| [0.5 * (b - xi), 0.5 * (b + xi)]),
    );
    let spread = |eta: f64| m.increment((2.0 * eta - xi).max(0.0), 2.0 * eta + xi);
    let far_quad = integrate_segments(
        |eta| (spread(eta) - 2.0 * omega) * weight(eta),
        &far_points,
        cfg,
    )
    .map_err(quad_err(xi))?;
    let cut = eta_t.powf(-2.0 * s) / (2.0 * s);
    let constant_tail = Estimate::exact(-2.0 * omega * cut);
    let decaying_tail = integrate_segments(
        |t| {
            let eta = eta_t * t.powf(-0.5 / s);
            if eta.is_finite() {
                spread(eta)
            } else {
                0.0
            }
        },
        &[0.0, 1.0],
        cfg,
    )
    .map_err(quad_err(xi))?
        * cut;
    let far = far_quad + constant_tail + decaying_tail;
    Ok(Dissipation { near, far })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moc::modulus::{CappedLinear, KnvModulus};

    fn cfg() -> QuadConfig {
        QuadConfig::default()
    }

    #[test]
    fn capped_linear_riesz_closed_form() {
        let m = CappedLinear { cap: 1.0 };
        let xi = (-1.0f64).exp();
        let omega = riesz_modulus(&m, xi, 1.0, &cfg()).unwrap().value;
        assert!((omega - 3.0 / std::f64::consts::E).abs() < 1e-12);
        assert!((omega - 1.10364).abs() < 1e-5);
        for xi in [1e-6, 0.01, 0.5, 1.0] {
            let v = riesz_modulus(&m, xi, 2.5, &cfg()).unwrap().value;
            let exact = 2.5 * xi * (2.0 + (1.0 / xi).ln());
            assert!((v - exact).abs() <= 1e-12 * exact, "{xi}");
        }
    }

    // Ω/A for the piecewise modulus written out by hand.
    fn knv_riesz_closed_form(m: &KnvModulus, xi: f64) -> f64 {
        let (d, r, a) = (m.delta, m.r, m.alpha);
        let p = 1.0 - a;
        let b = m.far_coeff();
        let offset = d - d.powf(r) - m.gamma * d / p;
        let tail_from = |x: f64| offset / x + b * x.powf(p - 1.0) / a;
        if xi <= d {
            let inner = xi - xi.powf(r) / r;
            let middle = (d / xi).ln() - (d.powf(r - 1.0) - xi.powf(r - 1.0)) / (r - 1.0);
            inner + xi * (middle + tail_from(d))
        } else {
            let inner = d - d.powf(r) / r + offset * (xi / d).ln() + b * (xi.powf(p) - d.powf(p)) / p;
            inner + xi * tail_from(xi)
        }
    }

    #[test]
    fn knv_riesz_matches_closed_form() {
        let m = KnvModulus::reference();
        for xi in [1e-8, 1e-4, 5e-3, 0.01, 0.0100001, 0.3, 1e4] {
            let v = riesz_modulus(&m, xi, 1.0, &cfg()).unwrap();
            let exact = knv_riesz_closed_form(&m, xi);
            assert!((v.value - exact).abs() <= 1e-10 * exact, "{xi}: {} vs {exact}", v.value);
        }
    }

    #[test]
    fn riesz_is_linear_in_amplitude_and_constant() {
        let m = KnvModulus::reference();
        let base = riesz_modulus(&m, 0.003, 1.0, &cfg()).unwrap().value;
        let doubled = riesz_modulus(&m, 0.003, 2.0, &cfg()).unwrap().value;
        assert!((doubled - 2.0 * base).abs() < 1e-15 * base);
        assert_eq!(riesz_modulus(&m, 0.0, 1.0, &cfg()).unwrap().value, 0.0);
        assert!(riesz_modulus(&m, -1.0, 1.0, &cfg()).is_err());
    }

    #[test]
    fn dissipation_of_capped_linear_near_kink() {
        // ω = min(η, 1): D(1) near part = ∫_0^{1/2} -2η η^{-1-2s} dη
        let m = CappedLinear { cap: 1.0 };
        let s = 0.25;
        let d = dissipation_functional(&m, 1.0, s, &cfg()).unwrap();
        let exact_near = -2.0 * 0.5f64.powf(1.0 - 2.0 * s) / (1.0 - 2.0 * s);
        assert!((d.near.value - exact_near).abs() < 1e-9 * exact_near.abs());
        // far: ω(2η+1) - ω(2η-1) - 2 = (1 - (2η - 1)) - 2 = -2η for η <= 1, -2 beyond
        let exact_far = -2.0 * (1.0 - 0.5f64.powf(0.5)) / 0.5 - 2.0 / 0.5;
        assert!((d.far.value - exact_far).abs() < 1e-9 * exact_far.abs(), "{:?}", d.far);
    }

    #[test]
    fn dissipation_is_negative_for_reference() {
        let m = KnvModulus::reference();
        for xi in [1e-7, 1e-4, 0.005, 0.01, 0.02, 1.0, 1e3] {
            let d = dissipation_functional(&m, xi, m.s, &cfg()).unwrap();
            assert!(d.near.value < 0.0 && d.far.value < 0.0, "{xi}: {d:?}");
            assert!(d.total().error < 1e-8 * d.total().value.abs());
        }
    }

    #[test]
    fn rejects_bad_dissipation_inputs() {
        let m = KnvModulus::reference();
        assert!(dissipation_functional(&m, 0.0, 0.25, &cfg()).is_err());
        assert!(dissipation_functional(&m, 1.0, 0.5, &cfg()).is_err());
        let bad = KnvModulus { r: 2.0, ..m };
        assert!(matches!(
            dissipation_functional(&bad, 1.0, 0.25, &cfg()),
            Err(MocError::InvalidModulus(_))
        ));
    }
}
