//! Band-limited, mean-free initial data with prescribed `‖θ₀‖∞` and
//! `‖∇θ₀‖∞`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::spectral::{forward_transform, gradient_sup, Grid, RealField, SpectralError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitialDataError {
    #[error("invalid initial-data spec: {0}")]
    InvalidSpec(String),
    #[error("gradient/sup ratio {requested} unreachable; feasible range [{low}, {high}]")]
    UnreachableRatio { requested: f64, low: f64, high: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialKind {
    /// `a cos(k·x + φ)`.
    SingleMode { k1: i64, k2: i64, amplitude: f64, phase: f64 },
    /// Random trigonometric sum over `1 <= |k|_∞ <= max_mode`, rescaled to
    /// the requested norms. The outer shell `|k|_∞ = max_mode` is weighted
    /// against the rest to reach the requested gradient/sup ratio.
    Random { max_mode: i64, sup_norm: f64, grad_sup: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSpec {
    pub kind: InitialKind,
}

/// Relative accuracy of the norm targets.
pub const NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
struct Wave {
    k1: f64,
    k2: f64,
    a: f64,
    b: f64,
}

fn synthesize(grid: Grid, waves: &[Wave]) -> Result<RealField, SpectralError> {
    RealField::from_fn(grid, |x, y| {
        waves
            .iter()
            .map(|w| {
                let p = w.k1 * x + w.k2 * y;
                w.a * p.cos() + w.b * p.sin()
            })
            .sum()
    })
}

fn norms(f: &RealField) -> Result<(f64, f64), SpectralError> {
    Ok((f.sup_norm(), gradient_sup(&forward_transform(f)?)?))
}

pub fn generate_initial_data(spec: &InitialSpec, grid: Grid) -> Result<RealField, InitialDataError> {
    let band = grid.n() as i64 / 3;
    let bad = |m: String| Err(InitialDataError::InvalidSpec(m));
    match spec.kind {
        InitialKind::SingleMode { k1, k2, amplitude, phase } => {
            if (k1, k2) == (0, 0) || k1.abs().max(k2.abs()) > band {
                return bad(format!("mode ({k1}, {k2}) outside 1..={band}"));
            }
            if !(amplitude.is_finite() && phase.is_finite()) {
                return bad("amplitude and phase must be finite".into());
            }
            let (k1, k2) = (k1 as f64, k2 as f64);
            Ok(RealField::from_fn(grid, |x, y| amplitude * (k1 * x + k2 * y + phase).cos())?)
        }
        InitialKind::Random { max_mode, sup_norm, grad_sup, seed } => {
            if max_mode < 2 || max_mode > band {
                return bad(format!("max_mode {max_mode} outside 2..={band}"));
            }
            if !(sup_norm > 0.0 && grad_sup > 0.0 && sup_norm.is_finite() && grad_sup.is_finite()) {
                return bad("norm targets must be positive and finite".into());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut low = Vec::new();
            let mut high = Vec::new();
            for k1 in 0..=max_mode {
                for k2 in -max_mode..=max_mode {
                    if k1 == 0 && k2 <= 0 {
                        continue;
                    }
                    let norm = ((k1 * k1 + k2 * k2) as f64).sqrt();
                    let scale = norm.powi(-2);
                    let w = Wave {
                        k1: k1 as f64,
                        k2: k2 as f64,
                        a: scale * rng.gen_range(-1.0..1.0),
                        b: scale * rng.gen_range(-1.0..1.0),
                    };
                    if k1.abs().max(k2.abs()) < max_mode {
                        low.push(w);
                    } else {
                        high.push(w);
                    }
                }
            }
            let f_low = synthesize(grid, &low)?;
            let f_high = synthesize(grid, &high)?;
            let ratio_of = |beta: f64| -> Result<(f64, f64, f64), SpectralError> {
                let f = f_low.add(&f_high.scaled(beta))?;
                let (s, g) = norms(&f)?;
                Ok((g / s, s, g))
            };
            let target = grad_sup / sup_norm;
            let mut betas = vec![0.0];
            betas.extend((0..=60).map(|i| 10f64.powf(-3.0 + 0.1 * i as f64)));
            let mut samples = Vec::with_capacity(betas.len());
            for &b in &betas {
                samples.push((b, ratio_of(b)?.0));
            }
            let bracket = samples
                .windows(2)
                .find(|w| (w[0].1 - target) * (w[1].1 - target) <= 0.0);
            let Some(w) = bracket else {
                let (low, high) = samples
                    .iter()
                    .fold((f64::INFINITY, 0.0f64), |(l, h), s| (l.min(s.1), h.max(s.1)));
                return Err(InitialDataError::UnreachableRatio {
                    requested: target,
                    low,
                    high,
                });
            };
            let (mut lo, mut hi) = (w[0], w[1]);
            let mut beta = lo.0;
            for _ in 0..100 {
                if ((lo.1 - target) / target).abs() < 0.1 * NORM_TOLERANCE {
                    beta = lo.0;
                    break;
                }
                beta = 0.5 * (lo.0 + hi.0);
                let r = ratio_of(beta)?.0;
                if (r - target) * (lo.1 - target) <= 0.0 {
                    hi = (beta, r);
                } else {
                    lo = (beta, r);
                }
                if ((r - target) / target).abs() < 0.1 * NORM_TOLERANCE {
                    break;
                }
            }
            let (_, s, _) = ratio_of(beta)?;
            Ok(f_low.add(&f_high.scaled(beta))?.scaled(sup_norm / s))
        }
    }
}
