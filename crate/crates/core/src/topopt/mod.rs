//! SIMP topology optimization: density filtering, the MMA optimizer and the
//! volume-minimization driver under displacement constraints.

mod dto;
mod filter;
mod mma;

pub use dto::{run_dto, DtoConstraint, DtoIteration, DtoProblem, DtoResult};
pub use filter::DensityFilter;
pub use mma::{MmaParams, MmaState, MmaStep};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::RHO_MIN;

/// Raw design densities and their filtered (physical) counterpart, one value
/// per active element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    raw: Vec<f64>,
    physical: Vec<f64>,
}

impl DensityField {
    pub fn new(filter: &DensityFilter, raw: Vec<f64>) -> Result<Self> {
        check_bounds(&raw)?;
        let physical = filter.apply(&raw)?;
        Ok(Self { raw, physical })
    }

    /// Builds a field from physical densities alone (e.g. a design reloaded
    /// from disk), taking them as the raw values too.
    pub fn from_physical(physical: Vec<f64>) -> Result<Self> {
        check_bounds(&physical)?;
        Ok(Self {
            raw: physical.clone(),
            physical,
        })
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn physical(&self) -> &[f64] {
        &self.physical
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Mean physical density over the active elements.
    pub fn volume_fraction(&self) -> f64 {
        self.physical.iter().sum::<f64>() / self.physical.len() as f64
    }
}

fn check_bounds(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("density field is empty".into()));
    }
    for &v in values {
        if !v.is_finite() {
            return Err(Error::NonFinite("densities"));
        }
        if v < RHO_MIN - 1e-12 || v > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "density {v} outside [{RHO_MIN}, 1]"
            )));
        }
    }
    Ok(())
}

