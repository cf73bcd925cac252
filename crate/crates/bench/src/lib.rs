//! Fixtures shared by the benchmarks.

use wgf_core::analysis::{fp_exact, sample_density};
use wgf_core::ljko::{assemble_newton_system, NewtonSystem};
use wgf_core::{DensityField, FokkerPlanckEnergy, Mesh, PotentialField, Triangulation};

/// Fokker-Planck problem with drift 1 on the acute unit square mesh refined `level` times.
pub struct FpFixture {
    pub mesh: Mesh,
    pub energy: FokkerPlanckEnergy,
    pub rho0: DensityField,
}

impl FpFixture {
    pub fn new(level: usize) -> Self {
        let mesh = Triangulation::unit_square_acute().refine_n(level).unwrap().build().unwrap();
        let energy = FokkerPlanckEnergy::new(&mesh, |p| -p[0]);
        let rho0 = sample_density(&mesh, |p| fp_exact(p[0], p[1], 0.05, 1.0)).unwrap();
        Self { mesh, energy, rho0 }
    }

    /// Newton system at the first iterate of a step of size `tau`.
    pub fn system(&self, tau: f64) -> NewtonSystem {
        let phi = PotentialField::zeros(self.mesh.num_cells(), 1);
        assemble_newton_system(&self.mesh, &self.energy, &phi, &self.rho0, &self.rho0, tau).unwrap()
    }
}
