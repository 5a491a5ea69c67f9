//! Benchmark problems: the symmetric half of the MBB beam and the L-shaped
//! beam, both on unit-square elements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fea::StructuredGrid;

/// A mesh with supports and loads plus the displacement DOF that carries the
/// constraint and its allowable magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub grid: StructuredGrid,
    pub constraint_dof: usize,
    pub allowable: f64,
}

/// Options for the MBB half model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MbbOptions {
    pub nx: usize,
    pub ny: usize,
    /// Downward force applied at the top node of the symmetry edge.
    pub load: f64,
    pub allowable: f64,
}

impl Default for MbbOptions {
    fn default() -> Self {
        Self {
            nx: 60,
            ny: 20,
            load: 1.0,
            allowable: 170.0,
        }
    }
}

/// Half of a simply supported beam loaded at mid-span. The left edge is the
/// symmetry line (horizontal displacement fixed), the bottom-right node is a
/// vertical roller and the load acts downward at the top-left node, whose
/// vertical displacement is constrained.
pub fn mbb_half(opts: &MbbOptions) -> Result<Benchmark> {
    if !(opts.load > 0.0) || !(opts.allowable > 0.0) {
        return Err(Error::InvalidParameter("MBB load and allowable displacement must be positive".into()));
    }
    let mut grid = StructuredGrid::new(opts.nx, opts.ny)?;
    for j in 0..=opts.ny {
        grid.fix_dof(grid.dof_x(0, j))?;
    }
    grid.fix_dof(grid.dof_y(opts.nx, 0))?;
    let dof = grid.dof_y(0, opts.ny);
    grid.add_load(dof, -opts.load)?;
    Ok(Benchmark {
        grid,
        constraint_dof: dof,
        allowable: opts.allowable,
    })
}

/// Options for the L-shaped beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LBeamOptions {
    /// Elements per side of the bounding square.
    pub size: usize,
    /// Side of the removed upper-right square, in elements.
    pub cutout: usize,
    /// Fix the full top edge of the column (`true`) or only its two corner
    /// nodes (`false`).
    pub clamp_full_top_edge: bool,
    pub load: f64,
    pub allowable: f64,
}

impl Default for LBeamOptions {
    fn default() -> Self {
        Self {
            size: 60,
            cutout: 30,
            clamp_full_top_edge: true,
            load: 1.0,
            allowable: 100.0,
        }
    }
}

/// L-shaped beam: the upper-right `cutout × cutout` block of a square mesh is
/// passive void. The top edge of the remaining column is clamped; a downward
/// load acts at the midpoint of the right edge of the lower arm.
pub fn l_beam(opts: &LBeamOptions) -> Result<Benchmark> {
    let (n, c) = (opts.size, opts.cutout);
    if c == 0 || c >= n {
        return Err(Error::InvalidParameter(format!("cutout {c} must be in 1..{n}")));
    }
    if (n - c) % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "the arm height {} must be even so the load sits on a node",
            n - c
        )));
    }
    if !(opts.load > 0.0) || !(opts.allowable > 0.0) {
        return Err(Error::InvalidParameter("L-beam load and allowable displacement must be positive".into()));
    }
    let mut grid = StructuredGrid::new(n, n)?;
    let arm = n - c;
    for ey in arm..n {
        for ex in arm..n {
            grid.set_passive(grid.element_index(ex, ey))?;
        }
    }
    let top_nodes: Vec<usize> = if opts.clamp_full_top_edge {
        (0..=arm).collect()
    } else {
        vec![0, arm]
    };
    for i in top_nodes {
        grid.fix_dof(grid.dof_x(i, n))?;
        grid.fix_dof(grid.dof_y(i, n))?;
    }
    let dof = grid.dof_y(n, arm / 2);
    grid.add_load(dof, -opts.load)?;
    Ok(Benchmark {
        grid,
        constraint_dof: dof,
        allowable: opts.allowable,
    })
}
