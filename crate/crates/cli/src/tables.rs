//! Versioned CSV tables.
//!
//! Each file starts with `# sqg-<kind> v<version>` followed by optional
//! `key=value` tokens, then any number of further `# key=value ...` lines,
//! then a CSV header and rows. Floats are written with 17 significant
//! digits so every value round-trips.

use std::collections::BTreeMap;

use sqg_core::moc::{DominanceReport, KnvModulus};
use sqg_core::monitor::{BreakthroughRecord, TrajectoryReport};
use thiserror::Error;

pub const VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("missing `# sqg-<kind> v<version>` header")]
    MissingHeader,
    #[error("expected a `{expected}` table, found `{found}`")]
    Kind { expected: String, found: String },
    #[error("unsupported table version {0}")]
    Version(u32),
    #[error("bad metadata token `{0}`")]
    Meta(String),
    #[error("expected columns {expected:?}, found {found:?}")]
    Columns { expected: Vec<String>, found: Vec<String> },
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("csv: {0}")]
    Csv(String),
}

pub type Meta = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub kind: String,
    pub meta: Meta,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn meta_tokens(meta: &Meta) -> String {
    meta.iter()
        .map(|(k, v)| format!(" {k}={v}"))
        .collect::<String>()
}

impl Table {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        Self {
            kind: kind.into(),
            meta: Meta::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!("# sqg-{} v{VERSION}{}\n", self.kind, meta_tokens(&self.meta));
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 input"));
        out
    }

    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut lines = text.split_inclusive('\n');
        let first_raw = lines.next().ok_or(TableError::MissingHeader)?;
        let first = first_raw.trim_end_matches(['\n', '\r']);
        let mut tokens = first
            .strip_prefix('#')
            .ok_or(TableError::MissingHeader)?
            .split_whitespace();
        let kind = tokens
            .next()
            .and_then(|t| t.strip_prefix("sqg-"))
            .ok_or(TableError::MissingHeader)?
            .to_string();
        let version: u32 = tokens
            .next()
            .and_then(|t| t.strip_prefix('v'))
            .and_then(|v| v.parse().ok())
            .ok_or(TableError::MissingHeader)?;
        if version != VERSION {
            return Err(TableError::Version(version));
        }
        let mut meta = Meta::new();
        let mut add = |tok: &str| -> Result<(), TableError> {
            let (k, v) = tok
                .split_once('=')
                .filter(|(k, _)| !k.is_empty())
                .ok_or_else(|| TableError::Meta(tok.to_string()))?;
            meta.insert(k.to_string(), v.to_string());
            Ok(())
        };
        for t in tokens {
            add(t)?;
        }
        let mut body_start = first_raw.len();
        for raw in lines {
            match raw.strip_prefix('#') {
                Some(rest) => {
                    for t in rest.split_whitespace() {
                        add(t)?;
                    }
                    body_start += raw.len();
                }
                None => break,
            }
        }
        let body = &text[body_start..];
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(body.as_bytes());
        let columns: Vec<String> = reader
            .headers()
            .map_err(|e| TableError::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| TableError::Csv(e.to_string()))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self {
            kind,
            meta,
            columns,
            rows,
        })
    }

    pub fn expect(&self, kind: &str, columns: &[&str]) -> Result<(), TableError> {
        if self.kind != kind {
            return Err(TableError::Kind {
                expected: kind.into(),
                found: self.kind.clone(),
            });
        }
        if self.columns != columns {
            return Err(TableError::Columns {
                expected: columns.iter().map(|c| c.to_string()).collect(),
                found: self.columns.clone(),
            });
        }
        Ok(())
    }

    fn f64_at(&self, row: usize, col: usize) -> Result<f64, TableError> {
        let raw = &self.rows[row][col];
        raw.trim().parse().map_err(|_| TableError::Row {
            row: row + 1,
            msg: format!("`{raw}` in column {} is not a number", self.columns[col]),
        })
    }

    fn bool_at(&self, row: usize, col: usize) -> Result<bool, TableError> {
        match self.rows[row][col].trim() {
            "true" => Ok(true),
            "false" => Ok(false),
            raw => Err(TableError::Row {
                row: row + 1,
                msg: format!("`{raw}` in column {} is not a boolean", self.columns[col]),
            }),
        }
    }

    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.meta.get(key).and_then(|v| v.parse().ok())
    }

    pub fn meta_bool(&self, key: &str) -> Option<bool> {
        self.meta.get(key).and_then(|v| v.parse().ok())
    }
}

pub const TRAJECTORY_COLUMNS: [&str; 8] = [
    "t", "sup_norm", "grad_sup", "bkm", "moc_slack", "grad_ok", "sup_ok", "moc_ok",
];

pub fn trajectory_table(report: &TrajectoryReport, meta: Meta) -> Table {
    let mut t = Table::new("trajectory", &TRAJECTORY_COLUMNS);
    t.meta = meta;
    for i in 0..report.len() {
        t.rows.push(vec![
            float(report.times[i]),
            float(report.sup_norm[i]),
            float(report.grad_sup[i]),
            float(report.bkm[i]),
            float(report.moc_slack[i]),
            report.grad_ok[i].to_string(),
            report.sup_ok[i].to_string(),
            report.moc_ok[i].to_string(),
        ]);
    }
    t
}

/// Reads a trajectory table; breakthrough events live in their own table.
pub fn parse_trajectory(text: &str) -> Result<(Meta, TrajectoryReport), TableError> {
    let t = Table::parse(text)?;
    t.expect("trajectory", &TRAJECTORY_COLUMNS)?;
    let mut r = TrajectoryReport::default();
    for i in 0..t.rows.len() {
        r.times.push(t.f64_at(i, 0)?);
        r.sup_norm.push(t.f64_at(i, 1)?);
        r.grad_sup.push(t.f64_at(i, 2)?);
        r.bkm.push(t.f64_at(i, 3)?);
        r.moc_slack.push(t.f64_at(i, 4)?);
        r.grad_ok.push(t.bool_at(i, 5)?);
        r.sup_ok.push(t.bool_at(i, 6)?);
        r.moc_ok.push(t.bool_at(i, 7)?);
    }
    Ok((t.meta, r))
}

pub const BREAKTHROUGH_COLUMNS: [&str; 7] = ["t", "x1", "x2", "y1", "y2", "separation", "slack"];

pub fn breakthrough_table(events: &[(f64, BreakthroughRecord)]) -> Table {
    let mut t = Table::new("breakthroughs", &BREAKTHROUGH_COLUMNS);
    for (time, r) in events {
        t.rows.push(
            [*time, r.x.0, r.x.1, r.y.0, r.y.1, r.separation, r.slack]
                .iter()
                .map(|v| float(*v))
                .collect(),
        );
    }
    t
}

pub fn parse_breakthroughs(text: &str) -> Result<Vec<(f64, BreakthroughRecord)>, TableError> {
    let t = Table::parse(text)?;
    t.expect("breakthroughs", &BREAKTHROUGH_COLUMNS)?;
    (0..t.rows.len())
        .map(|i| {
            let v: Vec<f64> = (0..7).map(|c| t.f64_at(i, c)).collect::<Result<_, _>>()?;
            Ok((
                v[0],
                BreakthroughRecord {
                    x: (v[1], v[2]),
                    y: (v[3], v[4]),
                    separation: v[5],
                    slack: v[6],
                },
            ))
        })
        .collect()
}

pub const DOMINANCE_COLUMNS: [&str; 4] = ["xi", "convection", "dissipation", "margin"];

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceTable {
    pub pass: bool,
    pub modulus: KnvModulus,
    pub c_s: f64,
    pub rows: Vec<[f64; 4]>,
}

pub fn dominance_table(report: &DominanceReport, m: &KnvModulus, c_s: f64) -> Table {
    let mut t = Table::new("dominance", &DOMINANCE_COLUMNS);
    t.meta.insert("pass".into(), report.pass.to_string());
    for (k, v) in [
        ("delta", m.delta),
        ("gamma", m.gamma),
        ("r", m.r),
        ("alpha", m.alpha),
        ("s", m.s),
        ("c_s", c_s),
    ] {
        t.meta.insert(k.into(), float(v));
    }
    for i in 0..report.xi_grid.len() {
        t.rows.push(
            [report.xi_grid[i], report.convection[i], report.dissipation[i], report.margin[i]]
                .iter()
                .map(|v| float(*v))
                .collect(),
        );
    }
    t
}

pub fn parse_dominance(text: &str) -> Result<DominanceTable, TableError> {
    let t = Table::parse(text)?;
    t.expect("dominance", &DOMINANCE_COLUMNS)?;
    let need = |k: &str| t.meta_f64(k).ok_or_else(|| TableError::Meta(k.to_string()));
    let modulus = KnvModulus {
        delta: need("delta")?,
        gamma: need("gamma")?,
        r: need("r")?,
        alpha: need("alpha")?,
        s: need("s")?,
    };
    let pass = t.meta_bool("pass").ok_or_else(|| TableError::Meta("pass".into()))?;
    let rows = (0..t.rows.len())
        .map(|i| Ok([t.f64_at(i, 0)?, t.f64_at(i, 1)?, t.f64_at(i, 2)?, t.f64_at(i, 3)?]))
        .collect::<Result<_, TableError>>()?;
    Ok(DominanceTable {
        pass,
        modulus,
        c_s: need("c_s")?,
        rows,
    })
}

pub const KERNEL_COLUMNS: [&str; 7] = [
    "s", "form", "mass_error", "marginal_deviation", "constant", "residual", "pass",
];

#[derive(Debug, Clone, PartialEq)]
pub struct KernelRow {
    pub s: f64,
    pub form: String,
    pub mass_error: f64,
    pub marginal_deviation: f64,
    pub constant: f64,
    pub residual: f64,
    pub pass: bool,
}

pub fn kernel_table(rows: &[KernelRow]) -> Table {
    let mut t = Table::new("kernel", &KERNEL_COLUMNS);
    for r in rows {
        t.rows.push(vec![
            float(r.s),
            r.form.clone(),
            float(r.mass_error),
            float(r.marginal_deviation),
            float(r.constant),
            float(r.residual),
            r.pass.to_string(),
        ]);
    }
    t
}

pub fn parse_kernel(text: &str) -> Result<Vec<KernelRow>, TableError> {
    let t = Table::parse(text)?;
    t.expect("kernel", &KERNEL_COLUMNS)?;
    (0..t.rows.len())
        .map(|i| {
            Ok(KernelRow {
                s: t.f64_at(i, 0)?,
                form: t.rows[i][1].clone(),
                mass_error: t.f64_at(i, 2)?,
                marginal_deviation: t.f64_at(i, 3)?,
                constant: t.f64_at(i, 4)?,
                residual: t.f64_at(i, 5)?,
                pass: t.bool_at(i, 6)?,
            })
        })
        .collect()
}

pub const SCAN_COLUMNS: [&str; 5] = ["delta", "gamma", "valid", "pass", "max_margin"];

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub delta: f64,
    pub gamma: f64,
    pub valid: bool,
    pub pass: bool,
    pub max_margin: f64,
}

pub fn scan_table(rows: &[ScanRow], s: f64) -> Table {
    let mut t = Table::new("scan", &SCAN_COLUMNS);
    t.meta.insert("s".into(), float(s));
    for r in rows {
        t.rows.push(vec![
            float(r.delta),
            float(r.gamma),
            r.valid.to_string(),
            r.pass.to_string(),
            float(r.max_margin),
        ]);
    }
    t
}

pub fn parse_scan(text: &str) -> Result<Vec<ScanRow>, TableError> {
    let t = Table::parse(text)?;
    t.expect("scan", &SCAN_COLUMNS)?;
    (0..t.rows.len())
        .map(|i| {
            Ok(ScanRow {
                delta: t.f64_at(i, 0)?,
                gamma: t.f64_at(i, 1)?,
                valid: t.bool_at(i, 2)?,
                pass: t.bool_at(i, 3)?,
                max_margin: t.f64_at(i, 4)?,
            })
        })
        .collect()
}
