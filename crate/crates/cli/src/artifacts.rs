//! Plain-text artifact files.

use std::fmt::Write as _;
use std::path::Path;

use rbto_core::fea::StructuredGrid;
use rbto_core::topopt::DensityField;
use rbto_core::verification::McsReport;
use rbto_core::RHO_MIN;

use crate::error::{CliError, Result};

/// Physical densities of every element (passive ones at `ρ_min`).
pub fn element_densities(grid: &StructuredGrid, design: &DensityField) -> Result<Vec<f64>> {
    Ok(grid.expand_active(design.physical(), RHO_MIN)?)
}

/// `ny` rows of `nx` values, top row first, six decimals.
pub fn density_csv(grid: &StructuredGrid, densities: &[f64]) -> String {
    let mut out = String::new();
    for ey in (0..grid.ny()).rev() {
        let row: Vec<String> = (0..grid.nx())
            .map(|ex| format!("{:.6}", densities[grid.element_index(ex, ey)]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses [`density_csv`] output back into element order.
pub fn parse_density_csv(text: &str, grid: &StructuredGrid) -> Result<Vec<f64>> {
    let malformed = |message: String| CliError::Malformed { path: "density csv".into(), message };
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != grid.ny() {
        return Err(malformed(format!("expected {} rows, found {}", grid.ny(), rows.len())));
    }
    let mut out = vec![0.0; grid.n_elements()];
    for (r, line) in rows.iter().enumerate() {
        let ey = grid.ny() - 1 - r;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != grid.nx() {
            return Err(malformed(format!("row {}: expected {} values, found {}", r + 1, grid.nx(), cells.len())));
        }
        for (ex, cell) in cells.iter().enumerate() {
            out[grid.element_index(ex, ey)] = cell
                .trim()
                .parse()
                .map_err(|e| malformed(format!("row {}, column {}: {e}", r + 1, ex + 1)))?;
        }
    }
    Ok(out)
}

/// Reloads a density CSV as a design over the grid's active elements.
pub fn load_design(path: &Path, grid: &StructuredGrid) -> Result<DensityField> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let all = parse_density_csv(&text, grid)?;
    let active: Vec<f64> = grid
        .active_elements()
        .into_iter()
        .map(|e| all[e].clamp(RHO_MIN, 1.0))
        .collect();
    Ok(DensityField::from_physical(active)?)
}

/// ASCII graymap: solid material prints black.
pub fn density_pgm(grid: &StructuredGrid, densities: &[f64]) -> String {
    let mut out = format!("P2\n{} {}\n255\n", grid.nx(), grid.ny());
    for ey in (0..grid.ny()).rev() {
        let row: Vec<String> = (0..grid.nx())
            .map(|ex| {
                let rho = densities[grid.element_index(ex, ey)];
                ((255.0 * (1.0 - rho)).round().clamp(0.0, 255.0) as u8).to_string()
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn cdf_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("displacement,empirical_cdf\n");
    for (x, p) in points {
        let _ = writeln!(out, "{x:.10},{p:.10}");
    }
    out
}

/// CDF file and its last-10-points tail.
pub fn cdf_files(report: &McsReport) -> (String, String) {
    (cdf_csv(&report.cdf), cdf_csv(report.tail(10)))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
