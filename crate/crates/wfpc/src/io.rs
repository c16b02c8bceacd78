//! Artifact formats.
//!
//! CSV files open with a `# config_hash=<hex> seed=<n>` comment line. Matrix
//! files are plain text:
//!
//! ```text
//! # any comment
//! dims 4 4
//! layout 1 1 2
//! 1 0 0 0 0 0 0 0
//! ...
//! ```
//!
//! `layout` lists ground and excited dimensions followed by the environment
//! cutoffs; each data row holds `re im` pairs.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use wfpc_core::dynamics::Trajectory;
use wfpc_core::pulses::TimeField;
use wfpc_core::qrf::QrfReport;
use wfpc_core::tensor::{ComplexMatrix, SpaceLayout};
use wfpc_core::Complex64;

use crate::{Error, Result};

/// Identifies the scenario behind an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    fn comment(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

fn csv_writer(path: &Path, provenance: &Provenance) -> Result<csv::Writer<fs::File>> {
    let mut file = fs::File::create(path)?;
    file.write_all(provenance.comment().as_bytes())?;
    Ok(csv::Writer::from_writer(file))
}

/// One labelled trajectory for [`write_trajectories`].
pub struct TrajectoryRow<'a> {
    pub experiment: &'a str,
    pub mask_id: usize,
    pub trajectory: &'a Trajectory,
}

/// Columns `t,p,mask_id,method`, plus `experiment` when any row carries one.
pub fn write_trajectories(path: &Path, provenance: &Provenance, rows: &[TrajectoryRow<'_>]) -> Result<()> {
    let labelled = rows.iter().any(|r| !r.experiment.is_empty());
    let mut w = csv_writer(path, provenance)?;
    if labelled {
        w.write_record(["experiment", "mask_id", "method", "t", "p"])?;
    } else {
        w.write_record(["mask_id", "method", "t", "p"])?;
    }
    for row in rows {
        let tr = row.trajectory;
        for (t, p) in tr.times.iter().zip(&tr.populations) {
            let (id, t, p) = (row.mask_id.to_string(), fmt_f64(*t), fmt_f64(*p));
            if labelled {
                w.write_record([row.experiment, &id, tr.method.name(), &t, &p])?;
            } else {
                w.write_record([&id, tr.method.name(), &t, &p])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_qrf_scan(path: &Path, provenance: &Provenance, reports: &[QrfReport]) -> Result<()> {
    let mut w = csv_writer(path, provenance)?;
    w.write_record([
        "t1",
        "t2",
        "re_exact",
        "im_exact",
        "re_regr",
        "im_regr",
        "deviation",
        "chi_norm",
        "chi_ge_norm",
        "violated",
    ])?;
    for r in reports {
        w.write_record([
            fmt_f64(r.t1),
            fmt_f64(r.t2),
            fmt_f64(r.exact.re),
            fmt_f64(r.exact.im),
            fmt_f64(r.regression.re),
            fmt_f64(r.regression.im),
            fmt_f64(r.deviation),
            fmt_f64(r.chi_norm),
            fmt_f64(r.chi_ge_norm),
            r.violated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t,re,im`.
pub fn write_field(path: &Path, provenance: &Provenance, field: &TimeField) -> Result<()> {
    let mut w = csv_writer(path, provenance)?;
    w.write_record(["t", "re", "im"])?;
    for (k, v) in field.values().iter().enumerate() {
        w.write_record([fmt_f64(field.time(k)), fmt_f64(v.re), fmt_f64(v.im)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn format_matrix(m: &ComplexMatrix, layout: &SpaceLayout) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dims {} {}", m.rows(), m.cols());
    let _ = write!(out, "layout {} {}", layout.ground_dim(), layout.excited_dim());
    for d in layout.env_dims() {
        let _ = write!(out, " {d}");
    }
    out.push('\n');
    for i in 0..m.rows() {
        let row: Vec<String> = m
            .row(i)
            .iter()
            .map(|z| format!("{} {}", fmt_f64(z.re), fmt_f64(z.im)))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &ComplexMatrix, layout: &SpaceLayout) -> Result<()> {
    fs::write(path, format_matrix(m, layout))?;
    Ok(())
}

pub fn parse_matrix(text: &str) -> Result<(ComplexMatrix, SpaceLayout)> {
    let bad = |msg: &str| Error::Usage(format!("matrix file: {msg}"));
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let numbers = |line: Option<&str>, key: &str| -> Result<Vec<usize>> {
        let line = line.ok_or_else(|| bad(&format!("missing `{key}` line")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(bad(&format!("expected `{key}` line, got `{line}`")));
        }
        parts
            .map(|p| {
                p.parse()
                    .map_err(|_| bad(&format!("bad integer `{p}` in `{key}` line")))
            })
            .collect()
    };
    let dims = numbers(lines.next(), "dims")?;
    let [rows, cols] = dims[..] else {
        return Err(bad("`dims` needs two values"));
    };
    let spec = numbers(lines.next(), "layout")?;
    if spec.len() < 3 {
        return Err(bad(
            "`layout` needs ground, excited and at least one environment cutoff",
        ));
    }
    let layout = SpaceLayout::new(spec[0], spec[1], spec[2..].to_vec())?;
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let line = lines.next().ok_or_else(|| bad(&format!("missing row {i}")))?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| bad(&format!("bad number `{v}` in row {i}"))))
            .collect::<Result<_>>()?;
        if values.len() != 2 * cols {
            return Err(bad(&format!(
                "row {i} has {} numbers, expected {}",
                values.len(),
                2 * cols
            )));
        }
        data.extend(values.chunks(2).map(|c| Complex64::new(c[0], c[1])));
    }
    if lines.next().is_some() {
        return Err(bad("trailing data after the last row"));
    }
    Ok((ComplexMatrix::from_vec(rows, cols, data)?, layout))
}

pub fn read_matrix(path: &Path) -> Result<(ComplexMatrix, SpaceLayout)> {
    parse_matrix(&fs::read_to_string(path)?)
}
