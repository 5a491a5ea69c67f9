use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular mesh of unit-square Q4 elements with supports, point loads and
/// an active-element mask.
///
/// Nodes sit on integer coordinates `(i, j)`, `0 ≤ i ≤ nx`, `0 ≤ j ≤ ny`, with
/// `j` growing upward. Elements are indexed row by row from the bottom:
/// `e = ey * nx + ex`. Nodes are numbered along the shorter side first so the
/// stiffness profile stays narrow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredGrid {
    nx: usize,
    ny: usize,
    fixed_dofs: Vec<usize>,
    loads: Vec<(usize, f64)>,
    active: Vec<bool>,
}

impl StructuredGrid {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least one element per direction, got {nx}x{ny}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            fixed_dofs: Vec::new(),
            loads: Vec::new(),
            active: vec![true; nx * ny],
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    /// Node number of the grid point `(i, j)`.
    pub fn node(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny);
        if self.ny <= self.nx {
            i * (self.ny + 1) + j
        } else {
            j * (self.nx + 1) + i
        }
    }

    pub fn dof_x(&self, i: usize, j: usize) -> usize {
        2 * self.node(i, j)
    }

    pub fn dof_y(&self, i: usize, j: usize) -> usize {
        2 * self.node(i, j) + 1
    }

    pub fn element_index(&self, ex: usize, ey: usize) -> usize {
        ey * self.nx + ex
    }

    /// `(ex, ey)` position of element `e`.
    pub fn element_position(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    pub fn centroid(&self, e: usize) -> (f64, f64) {
        let (ex, ey) = self.element_position(e);
        (ex as f64 + 0.5, ey as f64 + 0.5)
    }

    /// The eight DOFs of element `e`, counter-clockwise from the lower-left
    /// node, `x` before `y` at each node.
    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let (ex, ey) = self.element_position(e);
        let corners = [
            self.node(ex, ey),
            self.node(ex + 1, ey),
            self.node(ex + 1, ey + 1),
            self.node(ex, ey + 1),
        ];
        let mut dofs = [0; 8];
        for (k, n) in corners.iter().enumerate() {
            dofs[2 * k] = 2 * n;
            dofs[2 * k + 1] = 2 * n + 1;
        }
        dofs
    }

    pub fn fix_dof(&mut self, dof: usize) -> Result<()> {
        self.check_dof(dof)?;
        if let Err(pos) = self.fixed_dofs.binary_search(&dof) {
            self.fixed_dofs.insert(pos, dof);
        }
        Ok(())
    }

    /// Adds `value` to the nodal force at `dof`.
    pub fn add_load(&mut self, dof: usize, value: f64) -> Result<()> {
        self.check_dof(dof)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("load value"));
        }
        match self.loads.iter_mut().find(|(d, _)| *d == dof) {
            Some(entry) => entry.1 += value,
            None => self.loads.push((dof, value)),
        }
        Ok(())
    }

    /// Marks an element as passive void: it stays in the mesh at the minimum
    /// density but is never a design variable.
    pub fn set_passive(&mut self, e: usize) -> Result<()> {
        if e >= self.n_elements() {
            return Err(Error::IndexOutOfRange {
                what: "element",
                index: e,
                len: self.n_elements(),
            });
        }
        self.active[e] = false;
        Ok(())
    }

    pub fn fixed_dofs(&self) -> &[usize] {
        &self.fixed_dofs
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed_dofs.binary_search(&dof).is_ok()
    }

    pub fn loads(&self) -> &[(usize, f64)] {
        &self.loads
    }

    pub fn load_vector(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.n_dofs()];
        for &(d, v) in &self.loads {
            f[d] += v;
        }
        f
    }

    pub fn is_active(&self, e: usize) -> bool {
        self.active[e]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    /// Element indices of the design variables, in ascending order.
    pub fn active_elements(&self) -> Vec<usize> {
        (0..self.n_elements()).filter(|&e| self.active[e]).collect()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Scatters per-active-element values into a full per-element vector,
    /// filling passive elements with `passive_value`.
    pub fn expand_active(&self, values: &[f64], passive_value: f64) -> Result<Vec<f64>> {
        crate::error::check_len("active element values", self.n_active(), values.len())?;
        let mut out = vec![passive_value; self.n_elements()];
        let mut it = values.iter();
        for (e, slot) in out.iter_mut().enumerate() {
            if self.active[e] {
                *slot = *it.next().unwrap();
            }
        }
        Ok(out)
    }

    fn check_dof(&self, dof: usize) -> Result<()> {
        if dof < self.n_dofs() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "dof",
                index: dof,
                len: self.n_dofs(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_numbering() {
        let g = StructuredGrid::new(3, 2).unwrap();
        assert_eq!(g.n_elements(), 6);
        assert_eq!(g.n_nodes(), 12);
        // ny < nx: columns of nodes are contiguous.
        assert_eq!(g.node(1, 0), 3);
        let tall = StructuredGrid::new(2, 3).unwrap();
        assert_eq!(tall.node(0, 1), 3);
        let mut seen: Vec<usize> = (0..=2)
            .flat_map(|i| (0..=3).map(move |j| (i, j)))
            .map(|(i, j)| tall.node(i, j))
            .collect();
        seen.sort();
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn element_dofs_are_counter_clockwise() {
        let g = StructuredGrid::new(2, 2).unwrap();
        let e = g.element_index(1, 0);
        let d = g.element_dofs(e);
        assert_eq!(d[0], g.dof_x(1, 0));
        assert_eq!(d[3], g.dof_y(2, 0));
        assert_eq!(d[4], g.dof_x(2, 1));
        assert_eq!(d[7], g.dof_y(1, 1));
    }

    #[test]
    fn rejects_bad_indices() {
        let mut g = StructuredGrid::new(1, 1).unwrap();
        assert!(g.fix_dof(8).is_err());
        assert!(g.add_load(100, 1.0).is_err());
        assert!(g.set_passive(1).is_err());
        assert!(StructuredGrid::new(0, 4).is_err());
    }

    #[test]
    fn passive_elements_leave_design_set() {
        let mut g = StructuredGrid::new(2, 2).unwrap();
        g.set_passive(3).unwrap();
        assert_eq!(g.active_elements(), vec![0, 1, 2]);
        let full = g.expand_active(&[0.2, 0.3, 0.4], 1e-3).unwrap();
        assert_eq!(full, vec![0.2, 0.3, 0.4, 1e-3]);
    }
}
