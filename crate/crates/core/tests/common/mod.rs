#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::Rng;
use wgf_core::mesh::build_cartesian;
use wgf_core::*;

pub struct Instance {
    pub label: String,
    pub mesh: Mesh,
    pub energy: Box<dyn EnergyModel>,
    pub rho0: DensityField,
    pub tau: f64,
}

pub fn mesh_by_index(i: usize) -> Mesh {
    match i % 3 {
        0 => build_cartesian(4, 4, Rect::unit()).unwrap(),
        1 => build_cartesian(8, 8, Rect::unit()).unwrap(),
        _ => Triangulation::unit_square_acute().build().unwrap(),
    }
}

/// Random Fokker-Planck or porous medium instance; porous medium densities may vanish on some cells.
pub fn random_instance(rng: &mut StdRng, i: usize) -> Instance {
    let mesh = mesh_by_index(i);
    let (a, b, c) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..3.0));
    let v = move |p: Point| a * p[0] + b * p[1] + c * ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2));
    let porous = rng.random_bool(0.5);
    let n = mesh.num_cells();
    let mut rho: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..2.0)).collect();
    let (label, energy): (String, Box<dyn EnergyModel>) = if porous {
        let m = [2.0, 3.0, 4.0][rng.random_range(0..3)];
        for r in rho.iter_mut() {
            if rng.random_bool(0.3) {
                *r = 0.0;
            }
        }
        rho[0] = rho[0].max(0.5);
        (format!("pm(m={m})"), Box::new(PorousMediumEnergy::new(&mesh, m, v).unwrap()))
    } else {
        ("fp".into(), Box::new(FokkerPlanckEnergy::new(&mesh, v)))
    };
    let tau = 10f64.powf(rng.random_range(-3.0..-1.3));
    Instance { label: format!("#{i} {label} n={n}"), mesh, energy, rho0: DensityField::new(rho).unwrap(), tau }
}
