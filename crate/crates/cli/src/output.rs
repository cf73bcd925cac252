//! CSV writers. Files are written to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use wgf_core::analysis::{ConvergenceRow, CONVERGENCE_HEADER};
use wgf_core::{DensityField, Mesh, Trajectory};

use crate::error::CliError;

pub const SUMMARY_HEADER: &str = "t,tau,energy,mass,newton_iters";

pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn summary_csv(trajectory: &Trajectory, mesh: &Mesh) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for p in &trajectory.points {
        let mass: f64 = p.rho.masses(mesh).iter().sum();
        let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{}", p.time, p.tau, p.energy, mass, p.newton_iters);
    }
    out
}

pub fn state_csv(rho: &DensityField, mesh: &Mesh) -> String {
    let mut out = String::from("cell_id,x,y,rho");
    for s in 2..=rho.species() {
        let _ = write!(out, ",rho{s}");
    }
    out.push('\n');
    for (k, c) in mesh.centers().iter().enumerate() {
        let _ = write!(out, "{k},{:.16e},{:.16e}", c[0], c[1]);
        for s in 0..rho.species() {
            let _ = write!(out, ",{:.16e}", rho.at(s, k));
        }
        out.push('\n');
    }
    out
}

/// Rows of several schemes side by side; columns carry a `_<scheme>` suffix after the shared `h,dt`.
pub fn side_by_side_csv(tables: &[(&str, Vec<ConvergenceRow>)]) -> String {
    let metrics: Vec<&str> = CONVERGENCE_HEADER.split(',').skip(2).collect();
    let mut out = String::from("h,dt");
    for (name, _) in tables {
        for m in &metrics {
            let _ = write!(out, ",{m}_{name}");
        }
    }
    out.push('\n');
    let rows = tables.iter().map(|(_, r)| r.len()).min().unwrap_or(0);
    for i in 0..rows {
        let first = &tables[0].1[i];
        let _ = write!(out, "{:.16e},{:.16e}", first.h, first.dt);
        for (_, table) in tables {
            let csv = table[i].to_csv();
            for field in csv.split(',').skip(2) {
                let _ = write!(out, ",{field}");
            }
        }
        out.push('\n');
    }
    out
}
