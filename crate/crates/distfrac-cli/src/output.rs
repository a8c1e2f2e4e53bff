//! Deterministic artifact emission: CSV tables (17 significant digits,
//! `.` decimal separator), gnuplot scripts, and the `run.json`
//! provenance record.

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub fn fmt_g(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a CSV with a header row; fails loudly on an empty body.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    if rows.is_empty() {
        bail!("refusing to write empty CSV {}", path.display());
    }
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn trace_rows(times: &[f64], values: &[f64]) -> Vec<Vec<String>> {
    times
        .iter()
        .zip(values)
        .map(|(&t, &g)| vec![fmt_g(t), fmt_g(g)])
        .collect()
}

#[derive(Serialize)]
struct RunRecord<'a> {
    subcommand: &'a str,
    config_sha256: String,
    seed: u64,
    crate_version: &'a str,
}

/// `run.json`: enough to reproduce the run, nothing time-dependent.
pub fn write_run_record(dir: &Path, subcommand: &str, config_bytes: &[u8], seed: u64) -> Result<()> {
    let mut hasher = Sha256::new();
    hasher.update(config_bytes);
    let record = RunRecord {
        subcommand,
        config_sha256: format!("{:x}", hasher.finalize()),
        seed,
        crate_version: env!("CARGO_PKG_VERSION"),
    };
    let text = serde_json::to_string_pretty(&record)?;
    std::fs::write(dir.join("run.json"), text + "\n").context("writing run.json")?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    SmallTime,
    LargeTime,
    Recovery,
    ErrorHistory,
}

/// One curve of a plot: a CSV file plus its legend label. `offset` is
/// subtracted from the ordinate before plotting (the `g(0)` reference of
/// the small-time panels).
pub struct PlotSeries {
    pub csv: PathBuf,
    pub title: String,
    pub offset: f64,
}

/// Emit a self-contained gnuplot script rendering the given CSVs.
pub fn emit_plot_script(kind: PlotKind, series: &[PlotSeries], script_path: &Path) -> Result<()> {
    for s in series {
        if !s.csv.exists() {
            bail!("plot input missing: {}", s.csv.display());
        }
    }
    let mut out = String::new();
    let (png, title, xlabel, ylabel) = match kind {
        PlotKind::SmallTime => (
            "smalltime.png",
            "small-time asymptotics of the boundary trace",
            "t",
            "|g(t) - g(0)|",
        ),
        PlotKind::LargeTime => (
            "largetime.png",
            "large-time asymptotics of the boundary trace",
            "t",
            "|g(t)|",
        ),
        PlotKind::Recovery => ("recovery.png", "recovered order weight", "alpha", "mu"),
        PlotKind::ErrorHistory => (
            "error_history.png",
            "reconstruction error per iteration",
            "k",
            "L2 error",
        ),
    };
    writeln!(out, "set terminal pngcairo size 900,650")?;
    writeln!(out, "set output '{png}'")?;
    writeln!(out, "set datafile separator ','")?;
    writeln!(out, "set title '{title}'")?;
    writeln!(out, "set xlabel '{xlabel}'")?;
    writeln!(out, "set ylabel '{ylabel}'")?;
    writeln!(out, "set key left top")?;
    match kind {
        PlotKind::SmallTime | PlotKind::LargeTime => {
            writeln!(out, "set logscale xy")?;
            writeln!(out, "set format xy '1e%T'")?;
        }
        PlotKind::ErrorHistory => {
            writeln!(out, "set logscale y")?;
        }
        PlotKind::Recovery => {}
    }
    let mut parts = Vec::new();
    for s in series {
        let file = s.csv.file_name().unwrap().to_string_lossy();
        let using = match kind {
            PlotKind::SmallTime | PlotKind::LargeTime => {
                format!("using 1:(abs($2-({:.16e})))", s.offset)
            }
            PlotKind::Recovery => "using 1:2".to_string(),
            PlotKind::ErrorHistory => "using 1:4".to_string(),
        };
        parts.push(format!(
            "'{file}' every ::1 {using} with lines title '{}'",
            s.title
        ));
    }
    writeln!(out, "plot \\")?;
    writeln!(out, "  {}", parts.join(", \\\n  "))?;
    std::fs::write(script_path, out)
        .with_context(|| format!("writing {}", script_path.display()))?;
    Ok(())
}
