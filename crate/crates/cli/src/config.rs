//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment, unknown or repeated keys are
//! errors. Every key has a default, so an empty file is a valid config.

use std::fmt::{self, Write as _};
use std::path::PathBuf;

use sqg_core::initial::{InitialKind, InitialSpec};
use sqg_core::kernel::KernelForm;
use sqg_core::moc::{CertificateConstants, KnvModulus, SearchBudget};
use sqg_core::solver::SolverConfig;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid value for `{key}`: {msg}")]
    Value { key: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModulusChoice {
    /// Run the parameter search.
    Search,
    /// `δ = 0.01, γ = 0.05, r = 1.2, α = 0.6` at the configured `s`.
    Reference,
    Explicit { delta: f64, gamma: f64, r: f64, alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialChoice {
    Single { k1: i64, k2: i64, amplitude: f64, phase: f64 },
    Random { max_mode: i64, sup_norm: f64, grad_sup: f64 },
}

/// Inclusive log-spaced range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRange {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl LogRange {
    pub fn points(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.lo];
        }
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (0..self.count)
            .map(|i| (a + (b - a) * i as f64 / (self.count - 1) as f64).exp())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub solver: SolverConfig,
    pub sample_dt: f64,
    /// Snapshot every this many samples; the final state is always saved.
    pub snapshot_every: usize,
    pub modulus: ModulusChoice,
    pub constants: CertificateConstants,
    pub search_iterations: usize,
    pub initial: InitialChoice,
    pub seed: u64,
    pub output: PathBuf,
    pub tol: Option<f64>,
    pub kernel_s: Vec<f64>,
    pub kernel_form: KernelForm,
    pub kernel_n: usize,
    pub scan_delta: LogRange,
    pub scan_gamma: LogRange,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            sample_dt: 0.1,
            snapshot_every: 10,
            modulus: ModulusChoice::Reference,
            constants: CertificateConstants::default(),
            search_iterations: SearchBudget::default().max_iterations,
            initial: InitialChoice::Random {
                max_mode: 6,
                sup_norm: 5e-4,
                grad_sup: 2e-3,
            },
            seed: 0,
            output: PathBuf::from("out"),
            tol: None,
            kernel_s: vec![0.25, 0.4, 0.5],
            kernel_form: KernelForm::Printed,
            kernel_n: 64,
            scan_delta: LogRange { lo: 1e-3, hi: 0.1, count: 5 },
            scan_gamma: LogRange { lo: 1e-3, hi: 0.1, count: 5 },
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        msg: format!("`{v}` is not a number"),
    })?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ConfigError::Value {
            key: key.into(),
            msg: "must be finite".into(),
        })
    }
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        msg: format!("`{v}` is not an integer in range"),
    })
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::Value {
            key: key.into(),
            msg: format!("`{v}` is not true/false"),
        }),
    }
}

fn parse_range(key: &str, v: &str) -> Result<LogRange, ConfigError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    let bad = |msg: &str| ConfigError::Value {
        key: key.into(),
        msg: msg.into(),
    };
    if parts.len() != 3 {
        return Err(bad("expected `lo, hi, count`"));
    }
    let r = LogRange {
        lo: parse_f64(key, parts[0])?,
        hi: parse_f64(key, parts[1])?,
        count: parse_int(key, parts[2])?,
    };
    if !(r.lo > 0.0 && r.hi >= r.lo && r.count >= 1 && r.count <= 10_000) {
        return Err(bad("need 0 < lo <= hi and 1 <= count <= 10000"));
    }
    Ok(r)
}

/// Raw values for keys that only make sense together.
#[derive(Default)]
struct Pending {
    modulus: Option<String>,
    delta: Option<f64>,
    gamma: Option<f64>,
    r: Option<f64>,
    alpha: Option<f64>,
    initial: Option<String>,
    k1: Option<i64>,
    k2: Option<i64>,
    amplitude: Option<f64>,
    phase: Option<f64>,
    max_mode: Option<i64>,
    sup_norm: Option<f64>,
    grad_sup: Option<f64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut p = Pending::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            let (key, v) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            let k = key;
            match key {
                "n" => cfg.solver.n = parse_int(k, v)?,
                "s" => cfg.solver.s = parse_f64(k, v)?,
                "kappa" => cfg.solver.kappa = parse_f64(k, v)?,
                "t_end" => cfg.solver.t_end = parse_f64(k, v)?,
                "cfl" => cfg.solver.cfl = parse_f64(k, v)?,
                "dt_max" => cfg.solver.dt_max = parse_f64(k, v)?,
                "dealias" => cfg.solver.dealias = parse_bool(k, v)?,
                "sample_dt" => cfg.sample_dt = parse_f64(k, v)?,
                "snapshot_every" => cfg.snapshot_every = parse_int(k, v)?,
                "modulus" => p.modulus = Some(v.to_string()),
                "delta" => p.delta = Some(parse_f64(k, v)?),
                "gamma" => p.gamma = Some(parse_f64(k, v)?),
                "r" => p.r = Some(parse_f64(k, v)?),
                "alpha" => p.alpha = Some(parse_f64(k, v)?),
                "a" => cfg.constants.a = parse_f64(k, v)?,
                "c_diss" => cfg.constants.c_diss = parse_f64(k, v)?,
                "c_prime" => cfg.constants.c_prime = parse_f64(k, v)?,
                "search_iterations" => cfg.search_iterations = parse_int(k, v)?,
                "initial" => p.initial = Some(v.to_string()),
                "k1" => p.k1 = Some(parse_int(k, v)?),
                "k2" => p.k2 = Some(parse_int(k, v)?),
                "amplitude" => p.amplitude = Some(parse_f64(k, v)?),
                "phase" => p.phase = Some(parse_f64(k, v)?),
                "max_mode" => p.max_mode = Some(parse_int(k, v)?),
                "sup_norm" => p.sup_norm = Some(parse_f64(k, v)?),
                "grad_sup" => p.grad_sup = Some(parse_f64(k, v)?),
                "seed" => cfg.seed = parse_int(k, v)?,
                "output" => cfg.output = PathBuf::from(v),
                "tol" => cfg.tol = Some(parse_f64(k, v)?),
                "kernel_s" => {
                    cfg.kernel_s = v
                        .split(',')
                        .map(|x| parse_f64(k, x.trim()))
                        .collect::<Result<_, _>>()?
                }
                "kernel_form" => {
                    cfg.kernel_form = match v {
                        "printed" => KernelForm::Printed,
                        "standard" => KernelForm::Standard,
                        _ => {
                            return Err(ConfigError::Value {
                                key: k.into(),
                                msg: format!("`{v}` is not printed/standard"),
                            })
                        }
                    }
                }
                "kernel_n" => cfg.kernel_n = parse_int(k, v)?,
                "scan_delta" => cfg.scan_delta = parse_range(k, v)?,
                "scan_gamma" => cfg.scan_gamma = parse_range(k, v)?,
                _ => {
                    return Err(ConfigError::Syntax {
                        line: line_no,
                        msg: format!("unknown key `{key}`"),
                    })
                }
            }
        }
        cfg.constants.kappa = cfg.solver.kappa;
        cfg.resolve(p)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, p: Pending) -> Result<(), ConfigError> {
        let stray = |keys: &[(&str, bool)], context: &str| -> Result<(), ConfigError> {
            match keys.iter().find(|(_, set)| *set) {
                Some((k, _)) => Err(ConfigError::Value {
                    key: (*k).into(),
                    msg: format!("not used with {context}"),
                }),
                None => Ok(()),
            }
        };
        let knv_keys = [
            ("delta", p.delta.is_some()),
            ("gamma", p.gamma.is_some()),
            ("r", p.r.is_some()),
            ("alpha", p.alpha.is_some()),
        ];
        self.modulus = match p.modulus.as_deref().unwrap_or("reference") {
            "search" => {
                stray(&knv_keys, "modulus = search")?;
                ModulusChoice::Search
            }
            "reference" => {
                stray(&knv_keys, "modulus = reference")?;
                ModulusChoice::Reference
            }
            "knv" => {
                let need = |key: &str, v: Option<f64>| {
                    v.ok_or_else(|| ConfigError::Value {
                        key: key.into(),
                        msg: "required with modulus = knv".into(),
                    })
                };
                ModulusChoice::Explicit {
                    delta: need("delta", p.delta)?,
                    gamma: need("gamma", p.gamma)?,
                    r: need("r", p.r)?,
                    alpha: need("alpha", p.alpha)?,
                }
            }
            other => {
                return Err(ConfigError::Value {
                    key: "modulus".into(),
                    msg: format!("`{other}` is not search/reference/knv"),
                })
            }
        };
        let single_keys = [
            ("k1", p.k1.is_some()),
            ("k2", p.k2.is_some()),
            ("amplitude", p.amplitude.is_some()),
            ("phase", p.phase.is_some()),
        ];
        let random_keys = [
            ("max_mode", p.max_mode.is_some()),
            ("sup_norm", p.sup_norm.is_some()),
            ("grad_sup", p.grad_sup.is_some()),
        ];
        self.initial = match p.initial.as_deref().unwrap_or("random") {
            "single" => {
                stray(&random_keys, "initial = single")?;
                InitialChoice::Single {
                    k1: p.k1.unwrap_or(1),
                    k2: p.k2.unwrap_or(0),
                    amplitude: p.amplitude.unwrap_or(1e-3),
                    phase: p.phase.unwrap_or(0.0),
                }
            }
            "random" => {
                stray(&single_keys, "initial = random")?;
                let InitialChoice::Random { max_mode, sup_norm, grad_sup } =
                    ExperimentConfig::default().initial
                else {
                    unreachable!()
                };
                InitialChoice::Random {
                    max_mode: p.max_mode.unwrap_or(max_mode),
                    sup_norm: p.sup_norm.unwrap_or(sup_norm),
                    grad_sup: p.grad_sup.unwrap_or(grad_sup),
                }
            }
            other => {
                return Err(ConfigError::Value {
                    key: "initial".into(),
                    msg: format!("`{other}` is not single/random"),
                })
            }
        };
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |key: &str, msg: String| {
            Err(ConfigError::Value {
                key: key.into(),
                msg,
            })
        };
        if let Err(e) = self.solver.validate() {
            return err("solver", e.to_string());
        }
        if !(self.sample_dt > 0.0) {
            return err("sample_dt", "must be positive".into());
        }
        if let Err(e) = self.constants.validate() {
            return err("constants", e.to_string());
        }
        if self.kernel_s.is_empty() || self.kernel_s.iter().any(|s| !(*s > 0.0 && *s < 1.0)) {
            return err("kernel_s", "values must lie in (0, 1)".into());
        }
        if !(8..=4096).contains(&self.kernel_n) || self.kernel_n % 2 != 0 {
            return err("kernel_n", "must be even and in 8..=4096".into());
        }
        if let Some(t) = self.tol {
            if !(t >= 0.0) {
                return err("tol", "must be >= 0".into());
            }
        }
        Ok(())
    }

    pub fn knv_modulus(&self) -> Option<KnvModulus> {
        let s = self.solver.s;
        match self.modulus {
            ModulusChoice::Search => None,
            ModulusChoice::Reference => Some(KnvModulus {
                s,
                ..KnvModulus::reference()
            }),
            ModulusChoice::Explicit { delta, gamma, r, alpha } => Some(KnvModulus {
                delta,
                gamma,
                r,
                alpha,
                s,
            }),
        }
    }

    pub fn initial_spec(&self) -> InitialSpec {
        let kind = match self.initial {
            InitialChoice::Single { k1, k2, amplitude, phase } => InitialKind::SingleMode {
                k1,
                k2,
                amplitude,
                phase,
            },
            InitialChoice::Random { max_mode, sup_norm, grad_sup } => InitialKind::Random {
                max_mode,
                sup_norm,
                grad_sup,
                seed: self.seed,
            },
        };
        InitialSpec { kind }
    }

    pub fn search_budget(&self) -> SearchBudget {
        SearchBudget {
            max_iterations: self.search_iterations,
            ..SearchBudget::default()
        }
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let sv = &self.solver;
        let _ = writeln!(out, "n = {}", sv.n);
        let _ = writeln!(out, "s = {:?}", sv.s);
        let _ = writeln!(out, "kappa = {:?}", sv.kappa);
        let _ = writeln!(out, "t_end = {:?}", sv.t_end);
        let _ = writeln!(out, "cfl = {:?}", sv.cfl);
        let _ = writeln!(out, "dt_max = {:?}", sv.dt_max);
        let _ = writeln!(out, "dealias = {}", sv.dealias);
        let _ = writeln!(out, "sample_dt = {:?}", self.sample_dt);
        let _ = writeln!(out, "snapshot_every = {}", self.snapshot_every);
        match self.modulus {
            ModulusChoice::Search => {
                let _ = writeln!(out, "modulus = search");
            }
            ModulusChoice::Reference => {
                let _ = writeln!(out, "modulus = reference");
            }
            ModulusChoice::Explicit { delta, gamma, r, alpha } => {
                let _ = writeln!(out, "modulus = knv");
                let _ = writeln!(out, "delta = {delta:?}");
                let _ = writeln!(out, "gamma = {gamma:?}");
                let _ = writeln!(out, "r = {r:?}");
                let _ = writeln!(out, "alpha = {alpha:?}");
            }
        }
        let c = &self.constants;
        let _ = writeln!(out, "a = {:?}", c.a);
        let _ = writeln!(out, "c_diss = {:?}", c.c_diss);
        let _ = writeln!(out, "c_prime = {:?}", c.c_prime);
        let _ = writeln!(out, "search_iterations = {}", self.search_iterations);
        match self.initial {
            InitialChoice::Single { k1, k2, amplitude, phase } => {
                let _ = writeln!(out, "initial = single");
                let _ = writeln!(out, "k1 = {k1}");
                let _ = writeln!(out, "k2 = {k2}");
                let _ = writeln!(out, "amplitude = {amplitude:?}");
                let _ = writeln!(out, "phase = {phase:?}");
            }
            InitialChoice::Random { max_mode, sup_norm, grad_sup } => {
                let _ = writeln!(out, "initial = random");
                let _ = writeln!(out, "max_mode = {max_mode}");
                let _ = writeln!(out, "sup_norm = {sup_norm:?}");
                let _ = writeln!(out, "grad_sup = {grad_sup:?}");
            }
        }
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "output = {}", self.output.display());
        if let Some(t) = self.tol {
            let _ = writeln!(out, "tol = {t:?}");
        }
        let list: Vec<String> = self.kernel_s.iter().map(|s| format!("{s:?}")).collect();
        let _ = writeln!(out, "kernel_s = {}", list.join(", "));
        let form = match self.kernel_form {
            KernelForm::Printed => "printed",
            KernelForm::Standard => "standard",
        };
        let _ = writeln!(out, "kernel_form = {form}");
        let _ = writeln!(out, "kernel_n = {}", self.kernel_n);
        for (key, r) in [("scan_delta", self.scan_delta), ("scan_gamma", self.scan_gamma)] {
            let _ = writeln!(out, "{key} = {:?}, {:?}, {}", r.lo, r.hi, r.count);
        }
        f.write_str(&out)
    }
}
