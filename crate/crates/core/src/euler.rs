//! Backward Euler upwind finite volume scheme.
//!
//! Solves `(rho - rho_prev) m + tau div(rho, phi(rho)) = 0` with the
//! potential slaved to the density, `phi_K = (dE/drho_K) / m_K`.

use crate::dissipation::{flux_divergence, upwind_laplacian};
use crate::energy::EnergyModel;
use crate::error::{Result, WgfError};
use crate::field::{DensityField, PotentialField};
use crate::ljko::{
    check_step_input, clamp_floor, step_dissipation, with_restarts, NewtonConfig, NewtonOutcome, Progress, Stepper,
    TimeGrid, Trajectory, TrajectoryPoint,
};
use crate::mesh::Mesh;
use crate::sparse::{solve_refined, CsrMatrix, SkylineLu, TripletBuilder};

#[derive(Debug, Clone, PartialEq)]
pub struct EulerState {
    pub rho: DensityField,
    /// `phi = dE/drho / m` at the new density.
    pub phi_check: PotentialField,
    pub tau_used: f64,
    pub newton_iters: usize,
    pub residual_linf: f64,
}

/// `phi_K = (dE/drho_K) / m_K` for every species.
pub fn euler_potential(mesh: &Mesh, energy: &dyn EnergyModel, rho: &DensityField) -> Result<PotentialField> {
    let n = mesh.num_cells();
    let mut grad = energy.gradient(mesh, rho)?;
    for (i, g) in grad.iter_mut().enumerate() {
        *g /= mesh.measure(i % n);
    }
    PotentialField::from_parts(n, rho.species(), grad)
}

/// Residual `(rho - rho_prev) m + tau div(rho, phi)` for all species.
pub fn euler_residual(
    mesh: &Mesh,
    rho: &DensityField,
    rho_prev: &DensityField,
    phi: &PotentialField,
    tau: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(rho.values().len());
    for s in 0..rho.species() {
        let div = flux_divergence(mesh, rho.component(s), phi.component(s));
        for (k, d) in div.iter().enumerate() {
            out.push((rho.at(s, k) - rho_prev.at(s, k)) * mesh.measure(k) + tau * d);
        }
    }
    out
}

/// Jacobian of [`euler_residual`] with respect to the density, upwind
/// directions frozen at `phi`.
pub fn euler_jacobian(
    mesh: &Mesh,
    energy: &dyn EnergyModel,
    rho: &DensityField,
    phi: &PotentialField,
    tau: f64,
) -> Result<CsrMatrix> {
    let (n, s) = (mesh.num_cells(), rho.species());
    let hessian = energy.hessian_blocks(mesh, rho)?;
    let mut b = TripletBuilder::with_capacity(n * s, s * (n + 2 * mesh.num_faces()) * (1 + s));
    for sp in 0..s {
        let off = sp * n;
        let p = phi.component(sp);
        for k in 0..n {
            b.push(off + k, off + k, mesh.measure(k));
        }
        for f in mesh.faces() {
            let (k, l) = (f.left, f.right);
            let d = p[k] - p[l];
            let w = tau * f.transmissivity * d.abs();
            let (up, down) = if d >= 0.0 { (k, l) } else { (l, k) };
            b.push(off + up, off + up, w);
            b.push(off + down, off + up, -w);
        }
        // Chain rule through phi = H rho / m.
        let lap = upwind_laplacian(mesh, rho.component(sp), p, tau);
        for k in 0..n {
            for (j, v) in lap.row(k) {
                let block = &hessian[j * s * s..(j + 1) * s * s];
                let m = mesh.measure(j);
                for t in 0..s {
                    b.push(off + k, t * n + j, v * block[sp * s + t] / m);
                }
            }
        }
    }
    Ok(b.build())
}

fn euler_newton(
    mesh: &Mesh,
    energy: &dyn EnergyModel,
    rho_prev: &DensityField,
    tau: f64,
    config: &NewtonConfig,
    floors: &[f64],
) -> Result<NewtonOutcome<EulerState>> {
    let mut rho = rho_prev.clone();
    clamp_floor(&mut rho, floors);
    let mut progress = Progress::new(config.stagnation_window);
    let mut iterations = 0;
    loop {
        let phi = euler_potential(mesh, energy, &rho)?;
        let f = euler_residual(mesh, &rho, rho_prev, &phi, tau);
        let residual =
            f.iter().enumerate().fold(0.0f64, |acc, (i, x)| acc.max(x.abs() / mesh.measure(i % mesh.num_cells())));
        log::debug!("euler tau={tau:.6e} iter={iterations} residual={residual:.6e}");
        if !residual.is_finite() {
            return Ok(NewtonOutcome::Failed { message: "non-finite residual".into(), iterations, residual });
        }
        if iterations > 0 && residual <= config.tol_linf {
            return Ok(NewtonOutcome::Converged(EulerState {
                rho,
                phi_check: phi,
                tau_used: tau,
                newton_iters: iterations,
                residual_linf: residual,
            }));
        }
        if iterations == config.max_iter {
            return Ok(NewtonOutcome::Failed {
                message: "maximum Newton iterations reached".into(),
                iterations,
                residual,
            });
        }
        if progress.stagnated(residual) {
            return Ok(NewtonOutcome::Failed { message: "Newton residual stagnated".into(), iterations, residual });
        }
        let jac = euler_jacobian(mesh, energy, &rho, &phi, tau)?;
        let step = SkylineLu::factor(&jac).and_then(|lu| solve_refined(&lu, &jac, &f, 1e-10));
        let delta = match step {
            Ok(d) if d.iter().all(|v| v.is_finite()) => d,
            Ok(_) => {
                return Ok(NewtonOutcome::Failed {
                    message: "non-finite Newton direction".into(),
                    iterations,
                    residual,
                });
            }
            Err(e) if e.is_solver_failure() => {
                return Ok(NewtonOutcome::Failed { message: e.to_string(), iterations, residual });
            }
            Err(e) => return Err(e),
        };
        rho.values_mut().iter_mut().zip(&delta).for_each(|(r, d)| *r -= d);
        clamp_floor(&mut rho, floors);
        iterations += 1;
    }
}

/// One backward Euler step, retried with smaller steps on Newton failure.
pub fn euler_step(
    mesh: &Mesh,
    energy: &dyn EnergyModel,
    rho_prev: &DensityField,
    tau: f64,
    config: &NewtonConfig,
) -> Result<EulerState> {
    config.validate()?;
    check_step_input(mesh, energy, rho_prev, tau)?;
    if energy.species() != 1 {
        // The Jacobian is only column diagonally dominant for a single species.
        log::debug!("backward Euler with {} species uses an unpivoted LU", energy.species());
    }
    let floors = config.floors(mesh, rho_prev);
    with_restarts(tau, config, "Euler", |t| euler_newton(mesh, energy, rho_prev, t, config, &floors))
}

/// Marches the backward Euler scheme from `rho0` over `time`.
pub fn run_euler_flow(
    mesh: &Mesh,
    energy: &dyn EnergyModel,
    rho0: &DensityField,
    time: &TimeGrid,
    config: &NewtonConfig,
) -> Result<Trajectory> {
    let mut stepper = Stepper::new(time, config)?;
    let phi0 = match euler_potential(mesh, energy, rho0) {
        Ok(p) => p,
        Err(WgfError::Domain(_)) => PotentialField::zeros(mesh.num_cells(), energy.species()),
        Err(e) => return Err(e),
    };
    let mut points = vec![TrajectoryPoint {
        time: time.t_start,
        rho: rho0.clone(),
        phi: phi0,
        tau: 0.0,
        newton_iters: 0,
        residual_linf: 0.0,
        energy: energy.value(mesh, rho0)?,
        dissipation: 0.0,
    }];
    while let Some(tau) = stepper.next() {
        let prev = points.last().unwrap();
        let state = euler_step(mesh, energy, &prev.rho, tau, config)?;
        let t = stepper.accept(tau, state.tau_used, state.newton_iters, config);
        points.push(TrajectoryPoint {
            time: t,
            energy: energy.value(mesh, &state.rho)?,
            dissipation: step_dissipation(mesh, &state.rho, &state.phi_check, state.tau_used),
            tau: state.tau_used,
            newton_iters: state.newton_iters,
            residual_linf: state.residual_linf,
            rho: state.rho,
            phi: state.phi_check,
        });
    }
    Ok(Trajectory { points })
}
