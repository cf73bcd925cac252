//! Discrete energies `E_T(rho) = sum_K m_K e_K(rho_K)` with cell-local densities.
//!
//! Models implement the per-cell density `e_K` and its derivatives; the
//! provided methods assemble the mesh-weighted value, gradient and Hessian
//! blocks. Multi-species models couple species only within a cell.

use crate::error::{Result, WgfError};
use crate::field::DensityField;
use crate::mesh::{Mesh, Point};

pub trait EnergyModel: Send + Sync {
    fn species(&self) -> usize;

    /// Energy per unit measure of cell `k` at the species values `rho`.
    fn local_value(&self, k: usize, rho: &[f64]) -> f64;

    /// Derivative of the local density; `out` has one entry per species.
    fn local_gradient(&self, k: usize, rho: &[f64], out: &mut [f64]) -> Result<()>;

    /// Second derivative of the local density, row-major `S x S`.
    fn local_hessian(&self, k: usize, rho: &[f64], out: &mut [f64]) -> Result<()>;

    /// Bregman divergence `e(rho) - e(r) - e'(r)(rho - r)` of the local density.
    fn local_bregman(&self, k: usize, rho: &[f64], reference: &[f64]) -> Result<f64> {
        let mut g = vec![0.0; rho.len()];
        self.local_gradient(k, reference, &mut g)?;
        let lin: f64 = g.iter().zip(rho.iter().zip(reference)).map(|(gs, (a, b))| gs * (a - b)).sum();
        Ok(self.local_value(k, rho) - self.local_value(k, reference) - lin)
    }

    fn value(&self, mesh: &Mesh, rho: &DensityField) -> Result<f64> {
        check_shape(self.species(), mesh, rho)?;
        if let Some(v) = rho.values().iter().find(|v| !(**v >= 0.0)) {
            return Err(WgfError::InvalidInput(format!("negative density {v}")));
        }
        let mut local = vec![0.0; self.species()];
        Ok(mesh
            .cells()
            .iter()
            .enumerate()
            .map(|(k, c)| {
                gather(rho, k, &mut local);
                c.measure * self.local_value(k, &local)
            })
            .sum())
    }

    /// `dE_T / d rho_{s,K}`, species-major.
    fn gradient(&self, mesh: &Mesh, rho: &DensityField) -> Result<Vec<f64>> {
        check_shape(self.species(), mesh, rho)?;
        let (n, s) = (mesh.num_cells(), self.species());
        let mut out = vec![0.0; n * s];
        let mut local = vec![0.0; s];
        let mut g = vec![0.0; s];
        for (k, c) in mesh.cells().iter().enumerate() {
            gather(rho, k, &mut local);
            self.local_gradient(k, &local, &mut g)?;
            for (i, gi) in g.iter().enumerate() {
                out[i * n + k] = c.measure * gi;
            }
        }
        Ok(out)
    }

    /// Per-cell `S x S` Hessian blocks of `E_T`, concatenated cell by cell.
    fn hessian_blocks(&self, mesh: &Mesh, rho: &DensityField) -> Result<Vec<f64>> {
        check_shape(self.species(), mesh, rho)?;
        let s = self.species();
        let mut out = vec![0.0; mesh.num_cells() * s * s];
        let mut local = vec![0.0; s];
        for (k, c) in mesh.cells().iter().enumerate() {
            gather(rho, k, &mut local);
            let block = &mut out[k * s * s..(k + 1) * s * s];
            self.local_hessian(k, &local, block)?;
            block.iter_mut().for_each(|v| *v *= c.measure);
        }
        Ok(out)
    }

    /// `E_T(rho) - E_T(r) - <grad E_T(r), rho - r>`, evaluated without cancellation
    /// where the model allows. Equals `E_T(rho) - E_T(r)` when `r` is an
    /// equilibrium of the same mass.
    fn bregman(&self, mesh: &Mesh, rho: &DensityField, reference: &DensityField) -> Result<f64> {
        check_shape(self.species(), mesh, rho)?;
        check_shape(self.species(), mesh, reference)?;
        let s = self.species();
        let (mut a, mut b) = (vec![0.0; s], vec![0.0; s]);
        let mut total = 0.0;
        for (k, c) in mesh.cells().iter().enumerate() {
            gather(rho, k, &mut a);
            gather(reference, k, &mut b);
            total += c.measure * self.local_bregman(k, &a, &b)?;
        }
        Ok(total)
    }
}

fn check_shape(species: usize, mesh: &Mesh, rho: &DensityField) -> Result<()> {
    if rho.species() != species || rho.cells() != mesh.num_cells() {
        return Err(WgfError::InvalidInput(format!(
            "density has {} species on {} cells, energy expects {species} species on {} cells",
            rho.species(),
            rho.cells(),
            mesh.num_cells()
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn gather(rho: &DensityField, k: usize, out: &mut [f64]) {
    for (s, o) in out.iter_mut().enumerate() {
        *o = rho.at(s, k);
    }
}

/// Entropy plus potential energy: `rho log(rho / e^{-V}) - rho + e^{-V}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FokkerPlanckEnergy {
    potential: Vec<f64>,
}

impl FokkerPlanckEnergy {
    pub fn new(mesh: &Mesh, potential: impl Fn(Point) -> f64) -> Self {
        Self { potential: mesh.sample(potential) }
    }

    pub fn from_samples(potential: Vec<f64>) -> Self {
        Self { potential }
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }
}

impl EnergyModel for FokkerPlanckEnergy {
    fn species(&self) -> usize {
        1
    }

    fn local_value(&self, k: usize, rho: &[f64]) -> f64 {
        let v = self.potential[k];
        let r = rho[0];
        let entropy = if r > 0.0 { r * (r.ln() + v) } else { 0.0 };
        entropy - r + (-v).exp()
    }

    fn local_gradient(&self, k: usize, rho: &[f64], out: &mut [f64]) -> Result<()> {
        if !(rho[0] > 0.0) {
            return Err(WgfError::Domain(format!("log of density {} in cell {k}", rho[0])));
        }
        out[0] = rho[0].ln() + self.potential[k];
        Ok(())
    }

    fn local_hessian(&self, k: usize, rho: &[f64], out: &mut [f64]) -> Result<()> {
        if !(rho[0] > 0.0) {
            return Err(WgfError::Domain(format!("entropy Hessian at density {} in cell {k}", rho[0])));
        }
        out[0] = 1.0 / rho[0];
        Ok(())
    }

    fn local_bregman(&self, k: usize, rho: &[f64], reference: &[f64]) -> Result<f64> {
        let (p, r) = (rho[0], reference[0]);
        if !(r > 0.0) {
            return Err(WgfError::Domain(format!("relative entropy against density {r} in cell {k}")));
        }
        if p == 0.0 {
            return Ok(r);
        }
        Ok(r * entropy_excess((p - r) / r))
    }
}

/// `(1 + x) ln(1 + x) - x`, accurate for small `x`.
pub(crate) fn entropy_excess(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        // sum_{n>=2} (-x)^n / (n (n - 1))
        let mut term = x * x;
        let mut sum = 0.0;
        for n in 2..12 {
            sum += term / (n * (n - 1)) as f64;
            term *= -x;
        }
        sum
    } else {
        (1.0 + x) * x.ln_1p() - x
    }
}

/// `rho^m / (m - 1) + rho V`.
#[derive(Debug, Clone, PartialEq)]
pub struct PorousMediumEnergy {
    exponent: f64,
    potential: Vec<f64>,
}

impl PorousMediumEnergy {
    pub fn new(mesh: &Mesh, exponent: f64, potential: impl Fn(Point) -> f64) -> Result<Self> {
        Self::from_samples(exponent, mesh.sample(potential))
    }

    pub fn from_samples(exponent: f64, potential: Vec<f64>) -> Result<Self> {
        if !(exponent > 1.0) || !exponent.is_finite() {
            return Err(WgfError::InvalidInput(format!("porous medium exponent must exceed 1, got {exponent}")));
        }
        Ok(Self { exponent, potential })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }
}

impl EnergyModel for PorousMediumEnergy {
    fn species(&self) -> usize {
        1
    }

    fn local_value(&self, k: usize, rho: &[f64]) -> f64 {
        let m = self.exponent;
        rho[0].powf(m) / (m - 1.0) + rho[0] * self.potential[k]
    }

    fn local_gradient(&self, k: usize, rho: &[f64], out: &mut [f64]) -> Result<()> {
        let m = self.exponent;
        out[0] = m / (m - 1.0) * rho[0].powf(m - 1.0) + self.potential[k];
        Ok(())
    }

    fn local_hessian(&self, _k: usize, rho: &[f64], out: &mut [f64]) -> Result<()> {
        let m = self.exponent;
        out[0] = m * rho[0].powf(m - 2.0);
        Ok(())
    }
}

/// Two-layer aquifer energy `nu/2 (f + g + b)^2 + (1 - nu)/2 (g + b)^2`;
/// species 0 is the fresh layer `f`, species 1 the salt layer `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct SalinityEnergy {
    nu: f64,
    bedrock: Vec<f64>,
}

impl SalinityEnergy {
    pub fn new(mesh: &Mesh, nu: f64, bedrock: impl Fn(Point) -> f64) -> Result<Self> {
        Self::from_samples(nu, mesh.sample(bedrock))
    }

    pub fn from_samples(nu: f64, bedrock: Vec<f64>) -> Result<Self> {
        if !(nu > 0.0 && nu < 1.0) {
            return Err(WgfError::InvalidInput(format!("density ratio must lie in (0, 1), got {nu}")));
        }
        Ok(Self { nu, bedrock })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn bedrock(&self) -> &[f64] {
        &self.bedrock
    }
}

impl EnergyModel for SalinityEnergy {
    fn species(&self) -> usize {
        2
    }

    fn local_value(&self, k: usize, rho: &[f64]) -> f64 {
        let (f, g, b) = (rho[0], rho[1], self.bedrock[k]);
        0.5 * self.nu * (f + g + b).powi(2) + 0.5 * (1.0 - self.nu) * (g + b).powi(2)
    }

    fn local_gradient(&self, k: usize, rho: &[f64], out: &mut [f64]) -> Result<()> {
        let (f, g, b) = (rho[0], rho[1], self.bedrock[k]);
        out[0] = self.nu * (f + g + b);
        out[1] = self.nu * f + g + b;
        Ok(())
    }

    fn local_hessian(&self, _k: usize, _rho: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&[self.nu, self.nu, self.nu, 1.0]);
        Ok(())
    }

    fn local_bregman(&self, _k: usize, rho: &[f64], reference: &[f64]) -> Result<f64> {
        let (df, dg) = (rho[0] - reference[0], rho[1] - reference[1]);
        Ok(0.5 * (self.nu * (df + dg).powi(2) + (1.0 - self.nu) * dg * dg))
    }
}

/// Discrete equilibrium `rho_K = M e^{-V_K}` of the Fokker-Planck energy with the given mass.
pub fn fp_equilibrium(mesh: &Mesh, potential: &[f64], total_mass: f64) -> Result<DensityField> {
    if !(total_mass > 0.0) || !total_mass.is_finite() {
        return Err(WgfError::InvalidInput(format!("total mass must be positive, got {total_mass}")));
    }
    if potential.len() != mesh.num_cells() {
        return Err(WgfError::InvalidInput("potential length does not match the mesh".into()));
    }
    let z: f64 = mesh.cells().iter().zip(potential).map(|(c, v)| c.measure * (-v).exp()).sum();
    let scale = total_mass / z;
    DensityField::new(potential.iter().map(|v| scale * (-v).exp()).collect())
}
