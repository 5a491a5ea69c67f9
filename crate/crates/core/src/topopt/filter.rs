use crate::error::{check_len, Error, Result};
use crate::fea::StructuredGrid;

/// Linear density filter over the active elements: each physical density is
/// the weighted mean of raw densities within `r_min`, with weights
/// `max(0, r_min − distance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFilter {
    radius: f64,
    /// Row-normalized weights; indices refer to positions in the active list.
    rows: Vec<Vec<(usize, f64)>>,
}

impl DensityFilter {
    pub fn new(grid: &StructuredGrid, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("filter radius must be > 0, got {radius}")));
        }
        let active = grid.active_elements();
        let mut slot = vec![usize::MAX; grid.n_elements()];
        for (k, &e) in active.iter().enumerate() {
            slot[e] = k;
        }
        let reach = radius.ceil() as isize;
        let (nx, ny) = (grid.nx() as isize, grid.ny() as isize);
        let rows = active
            .iter()
            .map(|&e| {
                let (ex, ey) = grid.element_position(e);
                let (ex, ey) = (ex as isize, ey as isize);
                let mut row = Vec::new();
                for jy in (ey - reach).max(0)..=(ey + reach).min(ny - 1) {
                    for jx in (ex - reach).max(0)..=(ex + reach).min(nx - 1) {
                        let other = grid.element_index(jx as usize, jy as usize);
                        if slot[other] == usize::MAX {
                            continue;
                        }
                        let dist = (((jx - ex).pow(2) + (jy - ey).pow(2)) as f64).sqrt();
                        let w = radius - dist;
                        if w > 0.0 {
                            row.push((slot[other], w));
                        }
                    }
                }
                let total: f64 = row.iter().map(|(_, w)| w).sum();
                row.iter_mut().for_each(|(_, w)| *w /= total);
                row
            })
            .collect();
        Ok(Self { radius, rows })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn weights(&self, k: usize) -> &[(usize, f64)] {
        &self.rows[k]
    }

    /// `ρ = W ρ̃`.
    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        check_len("raw densities", self.len(), raw.len())?;
        Ok(self
            .rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * raw[j]).sum())
            .collect())
    }

    /// Maps a gradient with respect to physical densities to one with respect
    /// to raw densities: `Wᵀ g`.
    pub fn chain_gradient(&self, grad: &[f64]) -> Result<Vec<f64>> {
        check_len("physical gradient", self.len(), grad.len())?;
        let mut out = vec![0.0; self.len()];
        for (row, &g) in self.rows.iter().zip(grad) {
            for &(j, w) in row {
                out[j] += w * g;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_normalized_with_positive_self_weight() {
        let g = StructuredGrid::new(7, 5).unwrap();
        let f = DensityFilter::new(&g, 1.5).unwrap();
        for k in 0..f.len() {
            let row = f.weights(k);
            let s: f64 = row.iter().map(|(_, w)| w).sum();
            assert!((s - 1.0).abs() < 1e-14);
            assert!(row.iter().any(|&(j, w)| j == k && w > 0.0));
            assert!(row.iter().all(|&(_, w)| w >= 0.0));
        }
        // Interior element: itself plus four edge neighbours (diagonals sit at √2 < 1.5).
        assert_eq!(f.weights(g.element_index(3, 2)).len(), 9);
    }

    #[test]
    fn uniform_field_is_preserved() {
        let g = StructuredGrid::new(6, 4).unwrap();
        let f = DensityFilter::new(&g, 2.3).unwrap();
        let out = f.apply(&vec![0.37; 24]).unwrap();
        assert!(out.iter().all(|&v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn small_radius_is_identity() {
        let g = StructuredGrid::new(4, 3).unwrap();
        let f = DensityFilter::new(&g, 1.0).unwrap();
        let raw: Vec<f64> = (0..12).map(|i| i as f64 / 12.0).collect();
        assert_eq!(f.apply(&raw).unwrap(), raw);
        assert_eq!(f.chain_gradient(&raw).unwrap(), raw);
    }

    #[test]
    fn transpose_identity() {
        // ⟨W a, b⟩ = ⟨a, Wᵀ b⟩
        let g = StructuredGrid::new(5, 5).unwrap();
        let f = DensityFilter::new(&g, 2.5).unwrap();
        let a: Vec<f64> = (0..25).map(|i| ((i * 7) % 11) as f64).collect();
        let b: Vec<f64> = (0..25).map(|i| ((i * 3) % 5) as f64 - 2.0).collect();
        let wa = f.apply(&a).unwrap();
        let wtb = f.chain_gradient(&b).unwrap();
        let lhs: f64 = wa.iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(&wtb).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn passive_elements_are_excluded() {
        let mut g = StructuredGrid::new(3, 1).unwrap();
        g.set_passive(1).unwrap();
        let f = DensityFilter::new(&g, 1.5).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f.apply(&[0.2, 0.8]).unwrap(), vec![0.2, 0.8]);
        assert!(f.apply(&[0.2]).is_err());
    }
}
