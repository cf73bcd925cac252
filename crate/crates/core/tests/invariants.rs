mod common;

use proptest::prelude::*;
use wgf_core::dissipation::{kantorovich_potential, mass_inner, psi, psi_star, solve_hj};
use wgf_core::energy::fp_equilibrium;
use wgf_core::ljko::{assemble_newton_system, schur_solve};
use wgf_core::mesh::build_cartesian;
use wgf_core::*;

fn grid(n: usize) -> Mesh {
    build_cartesian(n, n, Rect::unit()).unwrap()
}

fn densities(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..3.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn steps_conserve_mass_and_positivity(
        rho in densities(9),
        a in -2.0f64..2.0,
        tau in 1e-3f64..0.1,
        porous in any::<bool>(),
    ) {
        let mesh = grid(3);
        let energy: Box<dyn EnergyModel> = if porous {
            Box::new(PorousMediumEnergy::new(&mesh, 2.0, |p| a * p[0]).unwrap())
        } else {
            Box::new(FokkerPlanckEnergy::new(&mesh, |p| a * p[1]))
        };
        let rho0 = DensityField::new(rho).unwrap();
        let m0 = rho0.masses(&mesh)[0];
        let config = NewtonConfig::fixed_step(tau);
        let ljko = ljko_step(&mesh, energy.as_ref(), &rho0, None, tau, &config).unwrap();
        let euler = euler_step(&mesh, energy.as_ref(), &rho0, tau, &config).unwrap();
        for rho in [&ljko.rho, &euler.rho] {
            prop_assert!((rho.masses(&mesh)[0] - m0).abs() <= 1e-12 * m0);
            prop_assert!(rho.min() > 0.0);
        }
    }

    #[test]
    fn step_satisfies_energy_dissipation_inequality(rho in densities(9), a in -2.0f64..2.0, tau in 1e-3f64..0.1) {
        let mesh = grid(3);
        let energy = FokkerPlanckEnergy::new(&mesh, |p| a * (p[0] - p[1]));
        let rho0 = DensityField::new(rho).unwrap();
        let config = NewtonConfig::fixed_step(tau);
        let before = energy.value(&mesh, &rho0).unwrap();
        for next in [
            ljko_step(&mesh, &energy, &rho0, None, tau, &config).unwrap().rho,
            euler_step(&mesh, &energy, &rho0, tau, &config).unwrap().rho,
        ] {
            let h: Vec<f64> = rho0.values().iter().zip(next.values()).map(|(p, r)| p - r).collect();
            let after = energy.value(&mesh, &next).unwrap() + psi(&mesh, next.values(), &h).unwrap() / tau;
            prop_assert!(after <= before + 1e-9);
        }
    }

    #[test]
    fn hj_solution_is_bounded_and_monotone(
        f in prop::collection::vec(-1.0f64..1.0, 16),
        bump in prop::collection::vec(0.0f64..0.5, 16),
        tau in 0.0f64..2.0,
    ) {
        let mesh = grid(4);
        let g: Vec<f64> = f.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let (pf, pg) = (solve_hj(&mesh, &f, tau).unwrap(), solve_hj(&mesh, &g, tau).unwrap());
        let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(pf.iter().all(|p| (lo..=hi).contains(p)));
        prop_assert!(pf.iter().zip(&pg).all(|(a, b)| a <= &(b + 1e-12)));
    }

    #[test]
    fn psi_is_the_convex_dual_of_psi_star(
        rho in densities(9),
        raw in prop::collection::vec(-1.0f64..1.0, 9),
        probe in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        let mesh = grid(3);
        let mean = mass_inner(&mesh, &raw, &[1.0; 9]) / mesh.total_area();
        let h: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let phi = kantorovich_potential(&mesh, &rho, &h).unwrap();
        let value = psi(&mesh, &rho, &h).unwrap();
        // Fenchel-Young with equality at the Kantorovich potential.
        prop_assert!((value + psi_star(&mesh, &rho, &phi) - mass_inner(&mesh, &h, &phi)).abs() <= 1e-9 * (1.0 + value));
        prop_assert!(psi_star(&mesh, &rho, &probe) + value >= mass_inner(&mesh, &h, &probe) - 1e-12);
    }

    #[test]
    fn psi_is_two_homogeneous(rho in densities(9), raw in prop::collection::vec(-1.0f64..1.0, 9), s in 0.1f64..5.0) {
        let mesh = grid(3);
        let mean = mass_inner(&mesh, &raw, &[1.0; 9]) / mesh.total_area();
        let h: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let scaled: Vec<f64> = h.iter().map(|v| s * v).collect();
        let (base, big) = (psi(&mesh, &rho, &h).unwrap(), psi(&mesh, &rho, &scaled).unwrap());
        prop_assert!((big - s * s * base).abs() <= 1e-9 * (1.0 + big));
    }

    #[test]
    fn schur_direction_solves_the_block_system(
        rho in densities(4),
        prev in densities(4),
        phi in prop::collection::vec(-1.0f64..1.0, 4),
        tau in 0.01f64..0.5,
    ) {
        let mesh = grid(2);
        let energy = PorousMediumEnergy::new(&mesh, 3.0, |p| p[0]).unwrap();
        let system = assemble_newton_system(
            &mesh,
            &energy,
            &PotentialField::new(phi).unwrap(),
            &DensityField::new(rho).unwrap(),
            &DensityField::new(prev).unwrap(),
            tau,
        ).unwrap();
        let schur = system.schur_matrix().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((schur.get(i, j) - schur.get(j, i)).abs() <= 1e-12 * schur.max_abs());
            }
        }
        let (d_phi, d_rho) = schur_solve(&system).unwrap();
        let dense = system.to_dense();
        let direction: Vec<f64> = d_phi.iter().chain(&d_rho).copied().collect();
        let rhs = system.rhs();
        for (row, r) in dense.iter().zip(&rhs) {
            let lhs: f64 = row.iter().zip(&direction).map(|(a, d)| a * d).sum();
            prop_assert!((lhs - r).abs() <= 1e-9 * (1.0 + r.abs()));
        }
    }

    #[test]
    fn energy_decreases_along_a_run(rho in densities(16), a in -2.0f64..2.0) {
        let mesh = grid(4);
        let energy = FokkerPlanckEnergy::new(&mesh, |p| a * p[0] * p[1]);
        let rho0 = DensityField::new(rho).unwrap();
        for scheme in [Scheme::Ljko, Scheme::Euler] {
            let traj = scheme.run(&mesh, &energy, &rho0, &TimeGrid::fixed(0.0, 0.1, 0.02), &NewtonConfig::fixed_step(0.02)).unwrap();
            prop_assert_eq!(traj.len(), 6);
            prop_assert!(traj.energies().windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
    }
}

#[test]
fn ljko_dissipates_at_least_as_fast_as_euler_on_one_step() {
    let mesh = Triangulation::unit_square_acute().build().unwrap();
    let energy = FokkerPlanckEnergy::new(&mesh, |p| -p[0]);
    let rho0 = DensityField::new(mesh.sample(|p| 1.0 + 0.5 * (3.0 * p[0]).cos() * p[1])).unwrap();
    let eq = fp_equilibrium(&mesh, energy.potential(), rho0.masses(&mesh)[0]).unwrap();
    let config = NewtonConfig::fixed_step(0.01);
    let ljko = ljko_step(&mesh, &energy, &rho0, None, 0.01, &config).unwrap();
    let euler = euler_step(&mesh, &energy, &rho0, 0.01, &config).unwrap();
    let gap = |r: &DensityField| energy.bregman(&mesh, r, &eq).unwrap();
    assert!(gap(&ljko.rho) <= gap(&euler.rho));
}

#[test]
fn random_suite_instances_run_on_every_mesh() {
    use rand::SeedableRng;
    let mut rng = rand::rngs::StdRng::seed_from_u64(3);
    for i in 0..6 {
        let inst = common::random_instance(&mut rng, i);
        let state = ljko_step(&inst.mesh, inst.energy.as_ref(), &inst.rho0, None, inst.tau, &NewtonConfig::default())
            .unwrap_or_else(|e| panic!("{}: {e}", inst.label));
        assert!(state.rho.min() >= 0.0);
    }
}
