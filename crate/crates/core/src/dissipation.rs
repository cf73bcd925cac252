//! Upstream-weighted dissipation potentials and the residuals of the coupled
//! Hamilton-Jacobi / continuity system.
//!
//! All functions act on a single species given as per-cell slices. The face
//! density is the upwind value `rho_sigma`, chosen on the side of the larger
//! potential; ties take the arithmetic mean.

use crate::error::{Result, WgfError};
use crate::mesh::Mesh;
use crate::sparse::{solve_refined, CsrMatrix, SkylineCholesky, SkylineLu, TripletBuilder};

pub use crate::field::{DensityField, PotentialField};

const KANTOROVICH_MAX_ITER: usize = 60;
const HJ_MAX_ITER: usize = 60;
const HJ_MAX_BACKTRACKS: usize = 8;

/// Upwind face density for potentials `phi_k`, `phi_l` on both sides of a face.
#[inline]
pub fn upwind(rho_k: f64, rho_l: f64, phi_k: f64, phi_l: f64) -> f64 {
    if phi_k > phi_l {
        rho_k
    } else if phi_k < phi_l {
        rho_l
    } else {
        0.5 * (rho_k + rho_l)
    }
}

/// Upwind density `rho_sigma` on an internal face.
pub fn upwind_value(mesh: &Mesh, rho: &[f64], phi: &[f64], face: usize) -> f64 {
    let f = &mesh.faces()[face];
    upwind(rho[f.left], rho[f.right], phi[f.left], phi[f.right])
}

/// `Psi*(rho; phi) = 1/2 sum_sigma a_sigma rho_sigma (phi_K - phi_L)^2`.
pub fn psi_star(mesh: &Mesh, rho: &[f64], phi: &[f64]) -> f64 {
    0.5 * mesh
        .faces()
        .iter()
        .map(|f| {
            let d = phi[f.left] - phi[f.right];
            f.transmissivity * upwind(rho[f.left], rho[f.right], phi[f.left], phi[f.right]) * d * d
        })
        .sum::<f64>()
}

/// Net outgoing upwind flux of every cell, `sum_sigma a_sigma rho_sigma (phi_K - phi_L)`.
pub fn flux_divergence(mesh: &Mesh, rho: &[f64], phi: &[f64]) -> Vec<f64> {
    let mut div = vec![0.0; mesh.num_cells()];
    for f in mesh.faces() {
        let (k, l) = (f.left, f.right);
        let flux = f.transmissivity * upwind(rho[k], rho[l], phi[k], phi[l]) * (phi[k] - phi[l]);
        div[k] += flux;
        div[l] -= flux;
    }
    div
}

/// Weighted Laplacian `scale * sum_sigma a_sigma rho_sigma (e_K - e_L)(e_K - e_L)^T`
/// with upwind weights frozen at `phi`.
pub fn upwind_laplacian(mesh: &Mesh, rho: &[f64], phi: &[f64], scale: f64) -> CsrMatrix {
    let n = mesh.num_cells();
    let mut b = TripletBuilder::with_capacity(n, n + 4 * mesh.num_faces());
    for k in 0..n {
        b.push(k, k, 0.0);
    }
    for f in mesh.faces() {
        let (k, l) = (f.left, f.right);
        let w = scale * f.transmissivity * upwind(rho[k], rho[l], phi[k], phi[l]);
        b.push(k, k, w);
        b.push(l, l, w);
        b.push(k, l, -w);
        b.push(l, k, -w);
    }
    b.build()
}

/// `<u, v>_T = sum_K m_K u_K v_K`.
pub fn mass_inner(mesh: &Mesh, u: &[f64], v: &[f64]) -> f64 {
    mesh.cells().iter().zip(u.iter().zip(v)).map(|(c, (a, b))| c.measure * a * b).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn orientation(mesh: &Mesh, phi: &[f64]) -> Vec<std::cmp::Ordering> {
    mesh.faces().iter().map(|f| phi[f.left].partial_cmp(&phi[f.right]).unwrap_or(std::cmp::Ordering::Equal)).collect()
}

/// Solves `h_K m_K = sum_sigma a_sigma rho_sigma (phi_K - phi_L)` for the
/// Kantorovich potential, normalized to zero mass-weighted mean.
///
/// The system is the optimality condition of the convex piecewise-quadratic
/// function `Psi*(rho; phi) - <h, phi>_T`, which is minimized by Newton's
/// method with Armijo backtracking. The source must have zero mean up to
/// `1e-12` relative to the mass of `rho`; that residual defect is removed
/// before solving.
pub fn kantorovich_potential(mesh: &Mesh, rho: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    let n = mesh.num_cells();
    if rho.len() != n || h.len() != n {
        return Err(WgfError::InvalidInput("field length does not match the mesh".into()));
    }
    if let Some(k) = rho.iter().position(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(WgfError::InvalidInput(format!(
            "Kantorovich potential needs a strictly positive density, rho[{k}] = {}",
            rho[k]
        )));
    }
    let area = mesh.total_area();
    let mass = mass_inner(mesh, rho, &vec![1.0; n]);
    let mean_h = mass_inner(mesh, h, &vec![1.0; n]);
    if mean_h.abs() > 1e-12 * mass {
        return Err(WgfError::InvalidInput(format!("source has nonzero mean {mean_h:e}")));
    }
    let source: Vec<f64> = mesh.cells().iter().zip(h).map(|(c, hk)| c.measure * (hk - mean_h / area)).collect();
    let scale = inf_norm(&source);
    if scale == 0.0 || n == 1 {
        return Ok(vec![0.0; n]);
    }

    // Objective and gradient with phi_0 pinned at zero.
    let objective = |phi: &[f64]| psi_star(mesh, rho, phi) - phi.iter().zip(&source).map(|(p, s)| p * s).sum::<f64>();
    let gradient = |phi: &[f64]| -> Vec<f64> {
        let mut g = flux_divergence(mesh, rho, phi);
        g.iter_mut().zip(&source).for_each(|(gi, s)| *gi -= s);
        g[0] = 0.0;
        g
    };

    let tol = 1e-12 * scale;
    let mut phi = vec![0.0; n];
    let mut grad = gradient(&phi);
    let mut iterations = 0;
    while iterations < KANTOROVICH_MAX_ITER {
        if inf_norm(&grad) <= tol {
            break;
        }
        iterations += 1;
        let lap = upwind_laplacian(mesh, rho, &phi, 1.0);
        let reduced = pin_first(&lap);
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let chol = SkylineCholesky::factor(&reduced)?;
        let mut step = solve_refined(&chol, &reduced, &rhs, 1e-12)?;
        step[0] = 0.0;

        let before = orientation(mesh, &phi);
        let f0 = objective(&phi);
        let slope: f64 = grad.iter().zip(&step).map(|(g, d)| g * d).sum();
        let mut alpha = 1.0;
        let mut trial: Vec<f64>;
        loop {
            trial = phi.iter().zip(&step).map(|(p, d)| p + alpha * d).collect();
            if objective(&trial) <= f0 + 1e-4 * alpha * slope || alpha < 1e-12 {
                break;
            }
            alpha *= 0.5;
        }
        phi = trial;
        grad = gradient(&phi);
        // A full step that keeps every upwind direction solved the exact linear system.
        if alpha == 1.0 && orientation(mesh, &phi) == before {
            break;
        }
    }
    if inf_norm(&grad) > 1e-8 * scale {
        return Err(WgfError::solver(
            "Kantorovich potential Newton iteration did not converge",
            iterations,
            inf_norm(&grad),
            f64::NAN,
        ));
    }
    let mean = mass_inner(mesh, &phi, &vec![1.0; n]) / area;
    phi.iter_mut().for_each(|p| *p -= mean);
    Ok(phi)
}

/// Replaces row and column 0 by the identity so the gauge is fixed by `x_0 = 0`.
fn pin_first(matrix: &CsrMatrix) -> CsrMatrix {
    let n = matrix.n();
    let mut b = TripletBuilder::with_capacity(n, matrix.nnz());
    b.push(0, 0, 1.0);
    for i in 1..n {
        for (j, v) in matrix.row(i) {
            if j != 0 {
                b.push(i, j, v);
            }
        }
    }
    b.build()
}

/// `Psi(rho; h) = 1/2 <h, phi>_T` with `phi` the Kantorovich potential.
pub fn psi(mesh: &Mesh, rho: &[f64], h: &[f64]) -> Result<f64> {
    let phi = kantorovich_potential(mesh, rho, h)?;
    let mass = mass_inner(mesh, rho, &vec![1.0; rho.len()]);
    let area = mesh.total_area();
    let mean_h = mass_inner(mesh, h, &vec![1.0; h.len()]) / area;
    debug_assert!(mean_h.abs() <= 1e-12 * mass / area);
    let centered: Vec<f64> = h.iter().map(|v| v - mean_h).collect();
    Ok(0.5 * mass_inner(mesh, &centered, &phi))
}

/// `G_K(phi) - f_K` with `G_K(phi) = phi_K + tau/(2 m_K) sum_sigma a_sigma ((phi_K - phi_L)^+)^2`.
pub fn hj_residual(mesh: &Mesh, phi: &[f64], f: &[f64], tau: f64) -> Vec<f64> {
    let mut r: Vec<f64> = phi.iter().zip(f).map(|(p, fk)| p - fk).collect();
    if tau == 0.0 {
        return r;
    }
    for face in mesh.faces() {
        let (k, l) = (face.left, face.right);
        let d = phi[k] - phi[l];
        let q = 0.5 * tau * face.transmissivity * d * d;
        if d > 0.0 {
            r[k] += q / mesh.measure(k);
        } else if d < 0.0 {
            r[l] += q / mesh.measure(l);
        }
    }
    r
}

fn hj_jacobian(mesh: &Mesh, phi: &[f64], tau: f64) -> CsrMatrix {
    let n = mesh.num_cells();
    let mut b = TripletBuilder::with_capacity(n, n + 4 * mesh.num_faces());
    for k in 0..n {
        b.push(k, k, 1.0);
    }
    for face in mesh.faces() {
        let (k, l) = (face.left, face.right);
        let d = phi[k] - phi[l];
        if d == 0.0 {
            // Keep the pattern structurally symmetric.
            b.push(k, l, 0.0);
            b.push(l, k, 0.0);
            continue;
        }
        let (up, down) = if d > 0.0 { (k, l) } else { (l, k) };
        let w = tau * face.transmissivity * d.abs() / mesh.measure(up);
        b.push(up, up, w);
        b.push(up, down, -w);
        b.push(down, up, 0.0);
    }
    b.build()
}

/// Solves `G(phi) = f` by damped Newton.
///
/// The returned potential lies in `[min f, max f]`; iterates are clipped to
/// that interval, which only removes rounding-level excursions.
pub fn solve_hj(mesh: &Mesh, f: &[f64], tau: f64) -> Result<Vec<f64>> {
    if f.len() != mesh.num_cells() {
        return Err(WgfError::InvalidInput("field length does not match the mesh".into()));
    }
    if f.iter().any(|v| !v.is_finite()) || !(tau >= 0.0) {
        return Err(WgfError::InvalidInput("solve_hj needs finite f and tau >= 0".into()));
    }
    let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let clip = |phi: &mut Vec<f64>| phi.iter_mut().for_each(|p| *p = p.clamp(lo, hi));
    let tol = 1e-13 * (1.0 + inf_norm(f));

    let mut phi = f.to_vec();
    let mut res = hj_residual(mesh, &phi, f, tau);
    let mut norm = inf_norm(&res);
    let mut iterations = 0;
    while norm > tol {
        if iterations == HJ_MAX_ITER {
            return Err(WgfError::solver("Hamilton-Jacobi Newton iteration did not converge", iterations, norm, tau));
        }
        iterations += 1;
        let jac = hj_jacobian(mesh, &phi, tau);
        let lu = SkylineLu::factor(&jac)?;
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let step = solve_refined(&lu, &jac, &rhs, 1e-12)?;
        let mut alpha = 1.0;
        let mut trial;
        let mut trial_res;
        let mut backtracks = 0;
        loop {
            trial = phi.iter().zip(&step).map(|(p, d)| p + alpha * d).collect::<Vec<_>>();
            clip(&mut trial);
            trial_res = hj_residual(mesh, &trial, f, tau);
            if inf_norm(&trial_res) < norm || backtracks == HJ_MAX_BACKTRACKS {
                break;
            }
            alpha *= 0.5;
            backtracks += 1;
        }
        let new_norm = inf_norm(&trial_res);
        if new_norm >= norm && norm <= 1e-10 * (1.0 + inf_norm(f)) {
            // Rounding floor reached.
            break;
        }
        phi = trial;
        res = trial_res;
        norm = new_norm;
    }
    Ok(phi)
}

/// `(rho_K - rho_prev_K) m_K + tau sum_sigma a_sigma rho_sigma (phi_K - phi_L)`.
pub fn continuity_residual(mesh: &Mesh, rho: &[f64], rho_prev: &[f64], phi: &[f64], tau: f64) -> Vec<f64> {
    let div = flux_divergence(mesh, rho, phi);
    mesh.cells().iter().enumerate().map(|(k, c)| (rho[k] - rho_prev[k]) * c.measure + tau * div[k]).collect()
}
