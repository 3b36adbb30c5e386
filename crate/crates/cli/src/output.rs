//! Report files: solution table, Picard trace, check reports and norms.
//!
//! Floats are written in Rust's shortest round-trip form, so equal runs give
//! equal bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use rbdsde_core::lattice::ScenarioLattice;
use rbdsde_core::{Barrier, CheckReport, PicardTrace, Solution};

use crate::error::{CliError, Result};

pub const SOLUTION_FILE: &str = "solution.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.json";
pub const NORMS_FILE: &str = "norms.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

/// One row per `(b_path, node)`.
pub fn write_solution(
    dir: &Path,
    lattice: &ScenarioLattice,
    solution: &Solution,
    barrier: &Barrier,
) -> Result<PathBuf> {
    let path = dir.join(SOLUTION_FILE);
    let (d, m) = (solution.w_dim, solution.n_marks);
    let mut w = csv_writer(&path)?;
    let mut header: Vec<String> = ["b_path", "time_index", "node_id", "Y", "Y_plus"].map(String::from).to_vec();
    header.extend((1..=d).map(|k| format!("Z{k}")));
    header.extend((1..=m).map(|e| format!("U{e}")));
    header.extend(["K", "K_d", "C", "xi", "xi_plus"].map(String::from));
    w.write_record(&header)?;
    for (b, p) in solution.paths.iter().enumerate() {
        for node in 0..lattice.n_nodes() {
            let mut row = vec![b.to_string(), lattice.time_index(node).to_string(), node.to_string()];
            let values = [p.y[node], p.y_plus[node]]
                .into_iter()
                .chain(p.z[node * d..(node + 1) * d].iter().copied())
                .chain(p.u[node * m..(node + 1) * m].iter().copied())
                .chain([p.k[node], p.k_d[node], p.c[node], barrier.value(node), barrier.right_limit(node)]);
            row.extend(values.map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}

/// `ratio` is empty on the first row.
pub fn write_trace(dir: &Path, trace: &PicardTrace) -> Result<PathBuf> {
    let path = dir.join(TRACE_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["iter", "bundle_diff", "ratio"])?;
    for r in &trace.rows {
        let ratio = r.ratio.map_or_else(String::new, |x| x.to_string());
        w.write_record([r.iter.to_string(), r.bundle_diff.to_string(), ratio])?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}

pub fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

pub fn write_reports(dir: &Path, reports: &[CheckReport]) -> Result<PathBuf> {
    write_json(dir, REPORT_FILE, reports)
}
