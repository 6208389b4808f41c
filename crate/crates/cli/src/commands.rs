//! Subcommand implementations. Each returns the process exit status or a
//! [`CliError`] carrying one.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sqg_core::initial::{generate_initial_data, InitialDataError};
use sqg_core::kernel::{
    estimate_representation_constant, kernel_marginal_check, kernel_mass, CsKernelParams, KernelForm,
};
use sqg_core::moc::{
    default_xi_grid, dominance_report, find_admissible, smallness_constant, validate_params,
    KnvModulus, MocError,
};
use sqg_core::monitor::{
    modulus_shape, rescaled_modulus, smallness_check, TrajectoryMonitor, TrajectoryReport,
};
use sqg_core::quadrature::QuadConfig;
use sqg_core::solver::{run, run_from, Observer, SolverError, State};
use sqg_core::spectral::{Grid, RealField};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::snapshot::{Snapshot, SnapshotError};
use crate::tables::{self, float, KernelRow, Meta, ScanRow, TableError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Pass = 0,
    CheckFailed = 1,
    Usage = 2,
    Numerical = 3,
}

impl Exit {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Exit::Pass
        } else {
            Exit::CheckFailed
        }
    }
}

#[derive(Debug, Error)]
#[error("{msg}")]
pub struct CliError {
    pub exit: Exit,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            exit: Exit::Usage,
            msg: msg.into(),
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self {
            exit: Exit::Numerical,
            msg: msg.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::usage(format!("i/o error: {e}"))
    }
}

impl From<SnapshotError> for CliError {
    fn from(e: SnapshotError) -> Self {
        Self::usage(format!("snapshot: {e}"))
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        Self::usage(format!("table: {e}"))
    }
}

impl From<MocError> for CliError {
    fn from(e: MocError) -> Self {
        match e {
            MocError::InvalidModulus(_) | MocError::InvalidArgument(_) => Self::usage(e.to_string()),
            MocError::Quadrature { .. } => Self::numerical(e.to_string()),
        }
    }
}

impl From<InitialDataError> for CliError {
    fn from(e: InitialDataError) -> Self {
        match e {
            InitialDataError::Spectral(_) => Self::numerical(e.to_string()),
            _ => Self::usage(e.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidConfig(_) => Self::usage(e.to_string()),
            _ => Self::numerical(e.to_string()),
        }
    }
}

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const BREAKTHROUGH_FILE: &str = "breakthroughs.csv";
pub const DOMINANCE_FILE: &str = "dominance.csv";
pub const KERNEL_FILE: &str = "kernel.csv";
pub const SCAN_FILE: &str = "scan.csv";
pub const FINAL_SNAPSHOT: &str = "final.bin";

pub fn snapshot_name(index: u64) -> String {
    format!("snap_{index:06}.bin")
}

fn quad() -> QuadConfig {
    QuadConfig::default()
}

/// The modulus named by the config, running the search when asked to.
fn resolve_modulus(cfg: &ExperimentConfig, log: &mut dyn Write) -> Result<KnvModulus, CliError> {
    match cfg.knv_modulus() {
        Some(m) => {
            let report = validate_params(&m);
            if !report.is_structurally_valid() {
                let list: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
                return Err(CliError::usage(format!("invalid modulus: {}", list.join("; "))));
            }
            Ok(m)
        }
        None => {
            let out = find_admissible(cfg.solver.s, &cfg.constants, &cfg.search_budget(), &quad())?;
            writeln!(
                log,
                "search: found={} after {} candidates (delta={:e}, gamma={:e})",
                out.found, out.iterations, out.modulus.delta, out.modulus.gamma
            )?;
            Ok(out.modulus)
        }
    }
}

struct SimObserver<'a> {
    monitor: TrajectoryMonitor,
    out: &'a Path,
    sample_dt: f64,
    every: u64,
    s: f64,
    kappa: f64,
    error: Option<std::io::Error>,
}

impl Observer for SimObserver<'_> {
    fn sample(&mut self, state: &State, theta: &RealField) {
        self.monitor.sample(state, theta);
        if self.error.is_some() {
            return;
        }
        let index = (state.t / self.sample_dt).round() as u64;
        if self.every > 0 && index % self.every == 0 {
            let snap = Snapshot {
                s: self.s,
                kappa: self.kappa,
                t: state.t,
                theta: theta.clone(),
            };
            if let Err(e) = snap.save(&self.out.join(snapshot_name(index))) {
                self.error = Some(match e {
                    SnapshotError::Io(io) => io,
                    other => std::io::Error::other(other.to_string()),
                });
            }
        }
    }
}

fn truncate_report(report: &mut TrajectoryReport, t: f64) {
    let keep = report
        .times
        .iter()
        .take_while(|&&x| x <= t * (1.0 + 1e-12) + 1e-300)
        .count();
    report.times.truncate(keep);
    report.sup_norm.truncate(keep);
    report.grad_sup.truncate(keep);
    report.bkm.truncate(keep);
    report.moc_slack.truncate(keep);
    report.grad_ok.truncate(keep);
    report.sup_ok.truncate(keep);
    report.moc_ok.truncate(keep);
    report.breakthroughs.retain(|(time, _)| *time <= t * (1.0 + 1e-12));
}

fn write_trajectory(out: &Path, report: &TrajectoryReport, meta: Meta) -> Result<(), CliError> {
    fs::write(out.join(TRAJECTORY_FILE), tables::trajectory_table(report, meta).render())?;
    fs::write(
        out.join(BREAKTHROUGH_FILE),
        tables::breakthrough_table(&report.breakthroughs).render(),
    )?;
    Ok(())
}

/// Runs (or resumes) a monitored simulation and writes the trajectory
/// report, breakthrough events and snapshots to `cfg.output`.
pub fn simulate(cfg: &ExperimentConfig, resume: Option<&Path>, log: &mut dyn Write) -> Result<Exit, CliError> {
    let out = cfg.output.as_path();
    fs::create_dir_all(out)?;
    let grid = Grid::periodic(cfg.solver.n).map_err(|e| CliError::usage(e.to_string()))?;
    let theta0 = generate_initial_data(&cfg.initial_spec(), grid)?;
    let modulus = resolve_modulus(cfg, log)?;
    let small = smallness_check(&theta0, &modulus).map_err(|e| CliError::numerical(e.to_string()))?;
    writeln!(
        log,
        "smallness: product={:e} c_s={:e} pass={}",
        small.product, small.c_s, small.pass
    )?;
    let shape = modulus_shape(&modulus);
    if !shape.admissible() {
        writeln!(
            log,
            "warning: modulus unbounded={} singular_at_zero={}",
            shape.unbounded, shape.singular_at_zero
        )?;
    }
    let omega = rescaled_modulus(&modulus, &theta0).ok();

    let mut meta = Meta::new();
    meta.insert("seed".into(), cfg.seed.to_string());
    meta.insert("n".into(), cfg.solver.n.to_string());
    meta.insert("s".into(), float(cfg.solver.s));
    meta.insert("kappa".into(), float(cfg.solver.kappa));
    meta.insert("sample_dt".into(), float(cfg.sample_dt));
    meta.insert("smallness".into(), small.pass.to_string());
    meta.insert("modulus_shape".into(), shape.admissible().to_string());

    let (monitor, start) = match resume {
        None => (TrajectoryMonitor::new(omega, cfg.tol), None),
        Some(path) => {
            let snap = Snapshot::load(path)?;
            if snap.theta.grid().n() != cfg.solver.n || snap.s != cfg.solver.s || snap.kappa != cfg.solver.kappa {
                return Err(CliError::usage(format!(
                    "snapshot (n={}, s={}, kappa={}) does not match the configuration",
                    snap.theta.grid().n(),
                    snap.s,
                    snap.kappa
                )));
            }
            let text = fs::read_to_string(out.join(TRAJECTORY_FILE))?;
            let (_, mut report) = tables::parse_trajectory(&text)?;
            if let Ok(text) = fs::read_to_string(out.join(BREAKTHROUGH_FILE)) {
                report.breakthroughs = tables::parse_breakthroughs(&text)?;
            }
            truncate_report(&mut report, snap.t);
            match report.times.last() {
                Some(&t) if (t - snap.t).abs() <= 1e-12 * snap.t.abs().max(1.0) => {}
                _ => {
                    return Err(CliError::usage(format!(
                        "trajectory in {} has no sample at t = {}",
                        out.display(),
                        snap.t
                    )))
                }
            }
            let grad0 = report.grad_sup[0];
            let state = State::from_physical(&snap.theta, snap.t)?;
            (TrajectoryMonitor::resume(omega, cfg.tol, grad0, report), Some(state))
        }
    };
    let mut observer = SimObserver {
        monitor,
        out,
        sample_dt: cfg.sample_dt,
        every: cfg.snapshot_every as u64,
        s: cfg.solver.s,
        kappa: cfg.solver.kappa,
        error: None,
    };
    let result = match start {
        None => run(&theta0, &cfg.solver, cfg.sample_dt, &mut observer),
        Some(state) => run_from(state, &cfg.solver, cfg.sample_dt, &mut observer),
    };
    if let Some(e) = observer.error.take() {
        return Err(e.into());
    }
    let report = observer
        .monitor
        .into_report()
        .map_err(|e| CliError::numerical(e.to_string()))?;
    match result {
        Ok(summary) => {
            meta.insert("status".into(), "complete".into());
            write_trajectory(out, &report, meta)?;
            let theta = summary.final_state.physical()?;
            Snapshot {
                s: cfg.solver.s,
                kappa: cfg.solver.kappa,
                t: summary.final_state.t,
                theta,
            }
            .save(&out.join(FINAL_SNAPSHOT))?;
            writeln!(
                log,
                "simulate: {} samples, {} steps, pass={}",
                report.len(),
                summary.steps,
                report.pass()
            )?;
            Ok(Exit::from_pass(report.pass()))
        }
        Err(e) => {
            meta.insert("status".into(), "failed".into());
            write_trajectory(out, &report, meta)?;
            writeln!(log, "simulate: failed after {} samples: {e}", report.len())?;
            Err(e.into())
        }
    }
}

/// Dominance report for the configured (or searched) modulus.
pub fn certify(cfg: &ExperimentConfig, log: &mut dyn Write) -> Result<Exit, CliError> {
    fs::create_dir_all(&cfg.output)?;
    let k = cfg.constants;
    let (m, report) = match cfg.knv_modulus() {
        None => {
            let out = find_admissible(cfg.solver.s, &k, &cfg.search_budget(), &quad())?;
            (out.modulus, out.report)
        }
        Some(_) => {
            let m = resolve_modulus(cfg, log)?;
            let report = dominance_report(&m, &k, &default_xi_grid(m.delta), &quad())?;
            (m, report)
        }
    };
    let params = validate_params(&m);
    let c_s = smallness_constant(&m);
    let pass = report.pass && params.is_valid();
    fs::write(
        cfg.output.join(DOMINANCE_FILE),
        tables::dominance_table(&report, &m, c_s).render(),
    )?;
    for v in &params.violations {
        writeln!(log, "violation: {v}")?;
    }
    writeln!(
        log,
        "certify: pass={pass} delta={:e} gamma={:e} c_s={:e} max_margin={:e}",
        m.delta,
        m.gamma,
        c_s,
        report.max_margin()
    )?;
    Ok(Exit::from_pass(pass))
}

/// Mass, marginal and representation checks for each configured `s`.
pub fn kernel_check(cfg: &ExperimentConfig, log: &mut dyn Write) -> Result<Exit, CliError> {
    fs::create_dir_all(&cfg.output)?;
    let tol = cfg.tol.unwrap_or(1e-6);
    let form = cfg.kernel_form;
    let numerical = |e: sqg_core::kernel::KernelError| CliError::numerical(e.to_string());
    let mut rows = Vec::new();
    for &s in &cfg.kernel_s {
        let p = CsKernelParams::new(2, s, form).map_err(|e| CliError::usage(e.to_string()))?;
        let mut mass_error = 0.0f64;
        for h in [0.05, 1.0, 3.7] {
            let mass = kernel_mass(&p, h, &QuadConfig::with_rel_tol(1e-12)).map_err(numerical)?;
            mass_error = mass_error.max((mass.value - 1.0).abs());
        }
        let marginal = kernel_marginal_check(s, 0.3, tol, form).map_err(numerical)?;
        let fit = estimate_representation_constant(s, form, cfg.kernel_n, None);
        let (constant, residual) = match &fit {
            Ok(f) => (f.c, f.residual),
            Err(_) => (f64::NAN, f64::INFINITY),
        };
        let pass = mass_error < 1e-8 && marginal.pass && residual < 1e-2;
        writeln!(
            log,
            "kernel s={s}: mass_error={mass_error:e} marginal={:e} C={constant} residual={residual:e} pass={pass}",
            marginal.max_deviation
        )?;
        rows.push(KernelRow {
            s,
            form: match form {
                KernelForm::Printed => "printed".into(),
                KernelForm::Standard => "standard".into(),
            },
            mass_error,
            marginal_deviation: marginal.max_deviation,
            constant,
            residual,
            pass,
        });
    }
    fs::write(cfg.output.join(KERNEL_FILE), tables::kernel_table(&rows).render())?;
    Ok(Exit::from_pass(rows.iter().all(|r| r.pass)))
}

/// Dominance over a `(δ, γ)` grid with default exponents. Passes when the
/// admissible region is non-empty.
pub fn moc_scan(cfg: &ExperimentConfig, log: &mut dyn Write) -> Result<Exit, CliError> {
    fs::create_dir_all(&cfg.output)?;
    let s = cfg.solver.s;
    let mut rows = Vec::new();
    for delta in cfg.scan_delta.points() {
        for gamma in cfg.scan_gamma.points() {
            let m = KnvModulus::with_default_exponents(s, delta, gamma);
            let params = validate_params(&m);
            let (pass, max_margin) = if params.is_structurally_valid() {
                let r = dominance_report(&m, &cfg.constants, &default_xi_grid(delta), &quad())?;
                (r.pass && params.is_valid(), r.max_margin())
            } else {
                (false, f64::NAN)
            };
            rows.push(ScanRow {
                delta,
                gamma,
                valid: params.is_valid(),
                pass,
                max_margin,
            });
        }
    }
    fs::write(cfg.output.join(SCAN_FILE), tables::scan_table(&rows, s).render())?;
    let passing = rows.iter().filter(|r| r.pass).count();
    writeln!(log, "moc-scan: {passing} of {} points pass", rows.len())?;
    Ok(Exit::from_pass(passing > 0))
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut found = Vec::new();
    let mut stack = vec![(dir.to_path_buf(), 0)];
    while let Some((d, depth)) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() && depth < 1 {
                stack.push((path, depth + 1));
            } else if path.extension().is_some_and(|e| e == "csv") {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Summarizes every table found in `dir` and its immediate subdirectories.
pub fn report(dir: &Path, log: &mut dyn Write) -> Result<Exit, CliError> {
    if !dir.is_dir() {
        return Err(CliError::usage(format!("{} is not a directory", dir.display())));
    }
    let mut runs = 0;
    let mut all_pass = true;
    for path in csv_files(dir)? {
        let text = fs::read_to_string(&path)?;
        let table = tables::Table::parse(&text)?;
        let name = path.display();
        let pass = match table.kind.as_str() {
            "trajectory" => {
                let (meta, r) = tables::parse_trajectory(&text)?;
                let status = meta.get("status").map(String::as_str).unwrap_or("unknown");
                let pass = r.pass() && status == "complete";
                writeln!(
                    log,
                    "{name}: trajectory, {} samples to t={}, status={status}, bkm={:e}, pass={pass}",
                    r.len(),
                    r.times.last().copied().unwrap_or(0.0),
                    r.bkm.last().copied().unwrap_or(0.0)
                )?;
                pass
            }
            "dominance" => {
                let d = tables::parse_dominance(&text)?;
                writeln!(
                    log,
                    "{name}: dominance, delta={:e} gamma={:e} c_s={:e}, pass={}",
                    d.modulus.delta, d.modulus.gamma, d.c_s, d.pass
                )?;
                d.pass
            }
            "kernel" => {
                let rows = tables::parse_kernel(&text)?;
                let pass = rows.iter().all(|r| r.pass);
                writeln!(log, "{name}: kernel, {} powers, pass={pass}", rows.len())?;
                pass
            }
            "scan" => {
                let rows = tables::parse_scan(&text)?;
                let n = rows.iter().filter(|r| r.pass).count();
                writeln!(log, "{name}: scan, {n} of {} points pass", rows.len())?;
                n > 0
            }
            "breakthroughs" => {
                let ev = tables::parse_breakthroughs(&text)?;
                writeln!(log, "{name}: {} breakthrough events", ev.len())?;
                continue;
            }
            other => {
                writeln!(log, "{name}: skipping unknown table kind `{other}`")?;
                continue;
            }
        };
        runs += 1;
        all_pass &= pass;
    }
    if runs == 0 {
        writeln!(log, "no runs found in {}", dir.display())?;
        return Ok(Exit::CheckFailed);
    }
    writeln!(log, "report: {runs} runs, pass={all_pass}")?;
    Ok(Exit::from_pass(all_pass))
}
