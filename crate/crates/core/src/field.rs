//! Per-cell fields, possibly with several species.
//!
//! Values are stored species-major: entry `s * cells + k` holds species `s`
//! on cell `k`.

use crate::error::{Result, WgfError};
use crate::mesh::Mesh;

macro_rules! cell_field {
    ($(#[$meta:meta])* $name:ident, $check:expr, $what:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            cells: usize,
            species: usize,
            values: Vec<f64>,
        }

        impl $name {
            /// Single-species field.
            pub fn new(values: Vec<f64>) -> Result<Self> {
                let cells = values.len();
                Self::from_parts(cells, 1, values)
            }

            /// Field from one value vector per species, all of the same length.
            pub fn from_species(components: Vec<Vec<f64>>) -> Result<Self> {
                let species = components.len();
                let cells = components.first().map_or(0, Vec::len);
                if species == 0 || components.iter().any(|c| c.len() != cells) {
                    return Err(WgfError::InvalidInput("species components must be non-empty and of equal length".into()));
                }
                Self::from_parts(cells, species, components.concat())
            }

            pub fn from_parts(cells: usize, species: usize, values: Vec<f64>) -> Result<Self> {
                if species == 0 || values.len() != cells * species {
                    return Err(WgfError::InvalidInput(format!(
                        "field of {} values cannot hold {species} species on {cells} cells",
                        values.len()
                    )));
                }
                let check: fn(f64) -> bool = $check;
                if let Some(pos) = values.iter().position(|&v| !check(v)) {
                    return Err(WgfError::InvalidInput(format!(
                        "{} must be {}, found {} at index {pos}",
                        stringify!($name),
                        $what,
                        values[pos]
                    )));
                }
                Ok(Self { cells, species, values })
            }

            pub fn zeros(cells: usize, species: usize) -> Self {
                Self { cells, species, values: vec![0.0; cells * species] }
            }

            pub fn cells(&self) -> usize {
                self.cells
            }

            pub fn species(&self) -> usize {
                self.species
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub(crate) fn values_mut(&mut self) -> &mut [f64] {
                &mut self.values
            }

            pub fn into_values(self) -> Vec<f64> {
                self.values
            }

            pub fn component(&self, s: usize) -> &[f64] {
                &self.values[s * self.cells..(s + 1) * self.cells]
            }

            #[inline]
            pub fn at(&self, s: usize, k: usize) -> f64 {
                self.values[s * self.cells + k]
            }
        }
    };
}

cell_field!(
    /// Nonnegative densities `rho_K`.
    DensityField,
    |v| v.is_finite() && v >= 0.0,
    "finite and nonnegative"
);

cell_field!(
    /// Potentials `phi_K`.
    PotentialField,
    |v| v.is_finite(),
    "finite"
);

impl DensityField {
    /// Total mass `<rho_s, 1>` of every species.
    pub fn masses(&self, mesh: &Mesh) -> Vec<f64> {
        (0..self.species)
            .map(|s| mesh.cells().iter().zip(self.component(s)).map(|(c, r)| c.measure * r).sum())
            .collect()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `sum_K m_K |rho_K - other_K|` summed over species.
    pub fn l1_distance(&self, other: &DensityField, mesh: &Mesh) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        let m = mesh.measures();
        self.values.iter().zip(&other.values).enumerate().map(|(i, (a, b))| m[i % self.cells] * (a - b).abs()).sum()
    }
}
