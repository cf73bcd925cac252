//! One step of the linearized JKO scheme and the time marching around it.
//!
//! A step solves the saddle-point system coupling a discrete Hamilton-Jacobi
//! equation for the potentials with the upwind continuity equation for the
//! densities:
//!
//! ```text
//! m_K phi_K + tau/2 sum_sigma a_sigma ((phi_K - phi_L)^+)^2 = dE/drho_K
//! (rho_K - rho_prev_K) m_K + tau sum_sigma a_sigma rho_sigma (phi_K - phi_L) = 0
//! ```
//!
//! Newton directions come from the Schur complement on the potentials.

use crate::dissipation::{flux_divergence, psi_star, upwind_laplacian};
use crate::energy::EnergyModel;
use crate::error::{Result, WgfError};
use crate::field::{DensityField, PotentialField};
use crate::mesh::Mesh;
use crate::sparse::{solve_refined, CsrMatrix, SkylineCholesky, TripletBuilder};

/// Lower bound imposed on Newton iterates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityFloor {
    /// Multiple of the mean density of each species.
    Relative(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    pub tol_linf: f64,
    pub max_iter: usize,
    pub density_floor: DensityFloor,
    pub tau_increase: f64,
    pub tau_decrease: f64,
    pub iter_fast_threshold: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Iterations without residual decrease that count as stagnation.
    pub stagnation_window: usize,
    /// Lower bound on energy Hessian eigenvalues inside the Newton matrix,
    /// relative to the largest one; keeps degenerate energies solvable.
    pub hessian_floor: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol_linf: 1e-11,
            max_iter: 30,
            density_floor: DensityFloor::Relative(1e-13),
            tau_increase: 1.2,
            tau_decrease: 0.5,
            iter_fast_threshold: 5,
            tau_min: 1e-10,
            tau_max: 1.0,
            stagnation_window: 3,
            hessian_floor: 1e-6,
        }
    }
}

impl NewtonConfig {
    /// Configuration that never changes the step size.
    pub fn fixed_step(tau: f64) -> Self {
        Self { tau_min: tau, tau_max: tau, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let floor_ok = match self.density_floor {
            DensityFloor::Relative(f) | DensityFloor::Absolute(f) => f > 0.0 && f.is_finite(),
        };
        let ok = self.tol_linf > 0.0
            && self.max_iter > 0
            && floor_ok
            && self.tau_decrease > 0.0
            && self.tau_decrease < 1.0
            && self.tau_increase > 1.0
            && self.tau_min > 0.0
            && self.tau_min <= self.tau_max
            && self.stagnation_window > 0
            && (0.0..1.0).contains(&self.hessian_floor);
        if ok {
            Ok(())
        } else {
            Err(WgfError::InvalidInput(format!("inconsistent Newton configuration {self:?}")))
        }
    }

    /// Absolute floor for each species of `rho`.
    pub fn floors(&self, mesh: &Mesh, rho: &DensityField) -> Vec<f64> {
        match self.density_floor {
            DensityFloor::Absolute(f) => vec![f; rho.species()],
            DensityFloor::Relative(f) => {
                let area = mesh.total_area();
                rho.masses(mesh).iter().map(|m| f * m / area).collect()
            }
        }
    }
}

/// Time interval and initial step of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub tau: f64,
    /// Grow the step after fast Newton solves.
    pub adaptive: bool,
}

impl TimeGrid {
    pub fn fixed(t_start: f64, t_end: f64, tau: f64) -> Self {
        Self { t_start, t_end, tau, adaptive: false }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_end >= self.t_start) || !(self.tau > 0.0) || !self.t_end.is_finite() {
            return Err(WgfError::InvalidInput(format!("invalid time grid {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LjkoState {
    pub rho: DensityField,
    pub phi: PotentialField,
    pub tau_used: f64,
    pub newton_iters: usize,
    pub residual_linf: f64,
}

/// One accepted time level of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub rho: DensityField,
    pub phi: PotentialField,
    /// Step that produced this level (0 for the initial state).
    pub tau: f64,
    pub newton_iters: usize,
    pub residual_linf: f64,
    pub energy: f64,
    /// `tau Psi*(rho^n; phi^n)`, which equals `Psi(rho^n; rho^{n-1} - rho^n) / tau`.
    pub dissipation: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.time).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.energy).collect()
    }

    pub fn last(&self) -> Option<&TrajectoryPoint> {
        self.points.last()
    }
}

/// Newton system at an iterate, in the block layout
///
/// ```text
/// [ J_pp  J_pr ] [d_phi]   [f_phi]
/// [ J_rp  J_rr ] [d_rho] = [f_rho]
/// ```
///
/// with `J_pp = -tau L_rho` (upwind weighted Laplacian), `J_pr = J_rp^T = M + A`
/// (the transport matrix), `J_rr` the energy Hessian, `f_phi` the continuity
/// residual and `f_rho = dE/drho - m phi - tau/2 sum a ((phi_K - phi_L)^+)^2`.
/// The iterate is updated as `phi += d_phi`, `rho -= d_rho`.
///
/// Unknowns are species-major; every block except `J_rr` is block diagonal
/// over species.
#[derive(Debug, Clone)]
pub struct NewtonSystem {
    pub species: usize,
    pub cells: usize,
    pub tau: f64,
    /// `tau L_rho`, so that `J_pp = -laplacian`.
    pub laplacian: CsrMatrix,
    /// `M + A = J_pr`.
    pub transport: CsrMatrix,
    /// Per-cell `S x S` blocks of `J_rr`.
    pub hessian: Vec<f64>,
    pub f_phi: Vec<f64>,
    pub f_rho: Vec<f64>,
    /// Potentials at the iterate, used to order the triangular transport solve.
    phi: Vec<f64>,
    measures: Vec<f64>,
}

/// Inverts a symmetric positive definite `1x1` or `2x2` block in closed form.
fn invert_block(block: &[f64], s: usize, out: &mut [f64]) -> Result<()> {
    match s {
        1 => {
            if !(block[0] > 0.0) {
                return Err(WgfError::solver("energy Hessian is not positive", 0, f64::NAN, f64::NAN));
            }
            out[0] = 1.0 / block[0];
        }
        2 => {
            let det = block[0] * block[3] - block[1] * block[2];
            if !(block[0] > 0.0 && det > 0.0) {
                return Err(WgfError::solver("energy Hessian block is not positive definite", 0, f64::NAN, f64::NAN));
            }
            out[0] = block[3] / det;
            out[1] = -block[1] / det;
            out[2] = -block[2] / det;
            out[3] = block[0] / det;
        }
        _ => return Err(WgfError::InvalidInput(format!("energies with {s} species are not supported"))),
    }
    Ok(())
}

/// Smallest and largest eigenvalue of a symmetric `1x1` or `2x2` block.
fn eigen_range(block: &[f64], s: usize) -> (f64, f64) {
    if s == 1 {
        return (block[0], block[0]);
    }
    let (a, b, d) = (block[0], 0.5 * (block[1] + block[2]), block[3]);
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean - radius, mean + radius)
}

/// Continuity residuals `(rho - rho_prev) m + tau div` for all species.
fn continuity_all(
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

/// `dE/drho - m phi - tau/2 sum a ((phi_K - phi_L)^+)^2` for all species.
fn hj_all(mesh: &Mesh, grad: &[f64], phi: &PotentialField, tau: f64) -> Vec<f64> {
    let n = mesh.num_cells();
    let mut out = grad.to_vec();
    for s in 0..phi.species() {
        let p = phi.component(s);
        let o = &mut out[s * n..(s + 1) * n];
        for k in 0..n {
            o[k] -= mesh.measure(k) * p[k];
        }
        for f in mesh.faces() {
            let d = p[f.left] - p[f.right];
            let q = 0.5 * tau * f.transmissivity * d * d;
            if d > 0.0 {
                o[f.left] -= q;
            } else if d < 0.0 {
                o[f.right] -= q;
            }
        }
    }
    out
}

/// Transport matrix `M + A` of one species, offset into the species-major layout.
fn push_transport(mesh: &Mesh, phi: &[f64], tau: f64, offset: usize, b: &mut TripletBuilder) {
    for (k, c) in mesh.cells().iter().enumerate() {
        b.push(offset + k, offset + k, c.measure);
    }
    for f in mesh.faces() {
        let (k, l) = (f.left, f.right);
        let d = phi[k] - phi[l];
        let w = tau * f.transmissivity * d.abs();
        let (up, down) = if d >= 0.0 { (k, l) } else { (l, k) };
        b.push(offset + up, offset + up, w);
        b.push(offset + down, offset + up, -w);
        b.push(offset + up, offset + down, 0.0);
    }
}

/// Assembles the Newton system of the step from `rho_prev` at the iterate `(phi, rho)`.
pub fn assemble_newton_system(
    mesh: &Mesh,
    energy: &dyn EnergyModel,
    phi: &PotentialField,
    rho: &DensityField,
    rho_prev: &DensityField,
    tau: f64,
) -> Result<NewtonSystem> {
    let (n, s) = (mesh.num_cells(), energy.species());
    if rho.species() != s || phi.species() != s || rho_prev.species() != s {
        return Err(WgfError::InvalidInput("species count mismatch between fields and energy".into()));
    }
    let grad = energy.gradient(mesh, rho)?;
    let hessian = energy.hessian_blocks(mesh, rho)?;

    let mut lap = TripletBuilder::with_capacity(n * s, s * (n + 4 * mesh.num_faces()));
    let mut transport = TripletBuilder::with_capacity(n * s, s * (n + 3 * mesh.num_faces()));
    for sp in 0..s {
        let offset = sp * n;
        let l = upwind_laplacian(mesh, rho.component(sp), phi.component(sp), tau);
        for i in 0..n {
            for (j, v) in l.row(i) {
                lap.push(offset + i, offset + j, v);
            }
        }
        push_transport(mesh, phi.component(sp), tau, offset, &mut transport);
    }
    Ok(NewtonSystem {
        species: s,
        cells: n,
        tau,
        laplacian: lap.build(),
        transport: transport.build(),
        hessian,
        f_phi: continuity_all(mesh, rho, rho_prev, phi, tau),
        f_rho: hj_all(mesh, &grad, phi, tau),
        phi: phi.values().to_vec(),
        measures: mesh.measures(),
    })
}

impl NewtonSystem {
    pub fn dim(&self) -> usize {
        self.species * self.cells
    }

    pub fn j_phi_phi(&self) -> CsrMatrix {
        self.laplacian.scaled(-1.0)
    }

    pub fn j_phi_rho(&self) -> &CsrMatrix {
        &self.transport
    }

    pub fn j_rho_phi(&self) -> CsrMatrix {
        self.transport.transpose()
    }

    /// `J_rr` as a sparse matrix.
    pub fn j_rho_rho(&self) -> CsrMatrix {
        let (n, s) = (self.cells, self.species);
        let mut b = TripletBuilder::with_capacity(n * s, n * s * s);
        for k in 0..n {
            let block = &self.hessian[k * s * s..(k + 1) * s * s];
            for i in 0..s {
                for j in 0..s {
                    b.push(i * n + k, j * n + k, block[i * s + j]);
                }
            }
        }
        b.build()
    }

    /// Inverse Hessian blocks. Eigenvalues below `floor` times the largest
    /// per-measure eigenvalue (times `m_K`) are raised to that bound.
    fn inverse_hessian(&self, floor: f64) -> Result<Vec<f64>> {
        let s = self.species;
        let blocks = || self.hessian.chunks_exact(s * s);
        let extremes: Vec<(f64, f64)> = blocks().map(|b| eigen_range(b, s)).collect();
        let top = extremes.iter().zip(&self.measures).fold(0.0f64, |acc, ((_, hi), m)| acc.max(hi / m));
        let mut inv = vec![0.0; self.hessian.len()];
        let mut shifted = vec![0.0; s * s];
        for (k, block) in blocks().enumerate() {
            let bound = floor * top * self.measures[k];
            shifted.copy_from_slice(block);
            let lo = extremes[k].0;
            if lo < bound {
                for i in 0..s {
                    shifted[i * s + i] += bound - lo;
                }
            }
            invert_block(&shifted, s, &mut inv[k * s * s..(k + 1) * s * s])?;
        }
        Ok(inv)
    }

    /// `J_rr^{-1} v`.
    fn apply_inverse_hessian(&self, inv: &[f64], v: &[f64]) -> Vec<f64> {
        let (n, s) = (self.cells, self.species);
        let mut out = vec![0.0; v.len()];
        for k in 0..n {
            let block = &inv[k * s * s..(k + 1) * s * s];
            for i in 0..s {
                out[i * n + k] = (0..s).map(|j| block[i * s + j] * v[j * n + k]).sum();
            }
        }
        out
    }

    /// Schur complement `J_pp - J_pr J_rr^{-1} J_rp` (symmetric negative definite).
    pub fn schur_matrix(&self) -> Result<CsrMatrix> {
        Ok(self.negated_schur(&self.inverse_hessian(0.0)?).scaled(-1.0))
    }

    /// `tau L + B J_rr^{-1} B^T`, assembled column by column of `B`.
    fn negated_schur(&self, inv: &[f64]) -> CsrMatrix {
        let (n, s) = (self.cells, self.species);
        let columns = self.transport.transpose();
        let mut b = TripletBuilder::with_capacity(n * s, self.laplacian.nnz() * (1 + s * s));
        for i in 0..n * s {
            for (j, v) in self.laplacian.row(i) {
                b.push(i, j, v);
            }
        }
        for k in 0..n {
            let block = &inv[k * s * s..(k + 1) * s * s];
            for si in 0..s {
                for sj in 0..s {
                    let w = block[si * s + sj];
                    if w == 0.0 {
                        continue;
                    }
                    for (r1, v1) in columns.row(si * n + k) {
                        for (r2, v2) in columns.row(sj * n + k) {
                            b.push(r1, r2, v1 * w * v2);
                        }
                    }
                }
            }
        }
        b.build()
    }

    /// Full block matrix, dense; for inspection and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut out = vec![vec![0.0; 2 * d]; 2 * d];
        let blocks = [
            (0, 0, self.j_phi_phi()),
            (0, d, self.transport.clone()),
            (d, 0, self.j_rho_phi()),
            (d, d, self.j_rho_rho()),
        ];
        for (r0, c0, m) in blocks {
            for i in 0..d {
                for (j, v) in m.row(i) {
                    out[r0 + i][c0 + j] += v;
                }
            }
        }
        out
    }

    pub fn rhs(&self) -> Vec<f64> {
        [self.f_phi.as_slice(), self.f_rho.as_slice()].concat()
    }

    /// ℓ∞ norm of both residuals per unit cell measure.
    pub fn residual_linf(&self) -> f64 {
        self.f_phi
            .iter()
            .zip(&self.f_rho)
            .enumerate()
            .fold(0.0, |acc, (i, (a, b))| acc.max(a.abs().max(b.abs()) / self.measures[i % self.cells]))
    }

    /// Solves `B x = r` species by species; `B` is lower triangular once
    /// cells are sorted by decreasing potential.
    fn solve_transport(&self, r: &[f64]) -> Vec<f64> {
        let n = self.cells;
        let mut x = vec![0.0; r.len()];
        for sp in 0..self.species {
            let offset = sp * n;
            let phi = &self.phi[offset..offset + n];
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]));
            for &k in &order {
                let row = offset + k;
                let mut acc = r[row];
                let mut diag = 0.0;
                for (j, v) in self.transport.row(row) {
                    if j == row {
                        diag = v;
                    } else {
                        acc -= v * x[j];
                    }
                }
                x[row] = acc / diag;
            }
        }
        x
    }
}

/// Newton direction through the Schur complement on the potentials.
///
/// `d_phi` solves `S d_phi = f_phi - J_pr J_rr^{-1} f_rho`. The density
/// direction is then taken from the continuity rows, `J_pr d_rho = f_phi -
/// J_pp d_phi`, which is algebraically the same as `J_rr^{-1}(f_rho - J_rp
/// d_phi)` but stays accurate when the Hessian is nearly singular and keeps
/// the updated densities exactly on the mass constraint.
pub fn schur_solve(system: &NewtonSystem) -> Result<(Vec<f64>, Vec<f64>)> {
    schur_solve_regularized(system, 0.0)
}

/// [`schur_solve`] with the Hessian bounded below by `hessian_floor` times
/// its largest eigenvalue (per unit measure) in the Schur complement. The
/// residuals are untouched, so Newton still converges to the same solution.
pub fn schur_solve_regularized(system: &NewtonSystem, hessian_floor: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let inv = system.inverse_hessian(hessian_floor)?;
    let neg_s = system.negated_schur(&inv);
    let hinv_f = system.apply_inverse_hessian(&inv, &system.f_rho);
    let b_hinv_f = system.transport.mul_vec(&hinv_f);
    let rhs: Vec<f64> = b_hinv_f.iter().zip(&system.f_phi).map(|(a, f)| a - f).collect();
    let chol = SkylineCholesky::factor(&neg_s)?;
    let d_phi = solve_refined(&chol, &neg_s, &rhs, 1e-12)?;
    let l_dphi = system.laplacian.mul_vec(&d_phi);
    let r: Vec<f64> = system.f_phi.iter().zip(&l_dphi).map(|(f, l)| f + l).collect();
    let d_rho = system.solve_transport(&r);
    Ok((d_phi, d_rho))
}

/// Outcome of a Newton solve at fixed step size.
pub(crate) enum NewtonOutcome<S> {
    Converged(S),
    Failed { message: String, iterations: usize, residual: f64 },
}

pub(crate) fn clamp_floor(rho: &mut DensityField, floors: &[f64]) {
    let n = rho.cells();
    for (i, v) in rho.values_mut().iter_mut().enumerate() {
        let f = floors[i / n];
        if !(*v >= f) {
            *v = f;
        }
    }
}

/// Tracks the residual history for the stagnation test.
pub(crate) struct Progress {
    best: f64,
    stalled: usize,
    window: usize,
}

impl Progress {
    pub(crate) fn new(window: usize) -> Self {
        Self { best: f64::INFINITY, stalled: 0, window }
    }

    /// Records a residual; true once `window` consecutive iterations failed to improve it.
    pub(crate) fn stagnated(&mut self, residual: f64) -> bool {
        if residual < 0.9 * self.best {
            self.best = residual;
            self.stalled = 0;
        } else {
            self.stalled += 1;
        }
        self.stalled >= self.window
    }
}

fn ljko_newton(
    mesh: &Mesh,
    energy: &dyn EnergyModel,
    rho_prev: &DensityField,
    phi0: &PotentialField,
    tau: f64,
    config: &NewtonConfig,
    floors: &[f64],
) -> Result<NewtonOutcome<LjkoState>> {
    let mut rho = rho_prev.clone();
    clamp_floor(&mut rho, floors);
    let mut phi = phi0.clone();
    let mut progress = Progress::new(config.stagnation_window);
    let mut iterations = 0;
    loop {
        let system = assemble_newton_system(mesh, energy, &phi, &rho, rho_prev, tau)?;
        let residual = system.residual_linf();
        log::debug!("ljko tau={tau:.6e} iter={iterations} residual={residual:.6e}");
        if !residual.is_finite() {
            return Ok(NewtonOutcome::Failed { message: "non-finite residual".into(), iterations, residual });
        }
        if iterations > 0 && residual <= config.tol_linf {
            return Ok(NewtonOutcome::Converged(LjkoState {
                rho,
                phi,
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
        let (d_phi, d_rho) = match schur_solve_regularized(&system, config.hessian_floor) {
            Ok(d) => d,
            Err(e) if e.is_solver_failure() => {
                return Ok(NewtonOutcome::Failed { message: e.to_string(), iterations, residual });
            }
            Err(e) => return Err(e),
        };
        if d_phi.iter().chain(&d_rho).any(|v| !v.is_finite()) {
            return Ok(NewtonOutcome::Failed { message: "non-finite Newton direction".into(), iterations, residual });
        }
        phi.values_mut().iter_mut().zip(&d_phi).for_each(|(p, d)| *p += d);
        rho.values_mut().iter_mut().zip(&d_rho).for_each(|(r, d)| *r -= d);
        clamp_floor(&mut rho, floors);
        iterations += 1;
    }
}

pub(crate) fn check_step_input(mesh: &Mesh, energy: &dyn EnergyModel, rho_prev: &DensityField, tau: f64) -> Result<()> {
    if rho_prev.cells() != mesh.num_cells() || rho_prev.species() != energy.species() {
        return Err(WgfError::InvalidInput("density does not match mesh and energy".into()));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(WgfError::InvalidInput(format!("time step must be positive, got {tau}")));
    }
    if rho_prev.masses(mesh).iter().any(|m| !(*m > 0.0)) {
        return Err(WgfError::InvalidInput("every species needs positive mass".into()));
    }
    Ok(())
}

/// Runs `attempt` at `tau`, shrinking the step after each failure while it stays above `tau_min`.
pub(crate) fn with_restarts<S>(
    tau: f64,
    config: &NewtonConfig,
    scheme: &str,
    mut attempt: impl FnMut(f64) -> Result<NewtonOutcome<S>>,
) -> Result<S> {
    let mut tau = tau;
    loop {
        match attempt(tau)? {
            NewtonOutcome::Converged(state) => return Ok(state),
            NewtonOutcome::Failed { message, iterations, residual } => {
                let next = tau * config.tau_decrease;
                if next < config.tau_min * (1.0 - 1e-12) {
                    return Err(WgfError::solver(
                        format!("{scheme} step failed: {message}"),
                        iterations,
                        residual,
                        tau,
                    ));
                }
                log::debug!("{scheme} restart: {message}; tau {tau:.6e} -> {next:.6e}");
                tau = next;
            }
        }
    }
}

/// One LJKO step from `rho_prev`; `phi_guess` seeds the potentials (zero when absent).
///
/// On Newton failure the step is retried with `tau * tau_decrease` as long as
/// the step stays above `tau_min`; the step actually taken is `tau_used`.
pub fn ljko_step(
    mesh: &Mesh,
    energy: &dyn EnergyModel,
    rho_prev: &DensityField,
    phi_guess: Option<&PotentialField>,
    tau: f64,
    config: &NewtonConfig,
) -> Result<LjkoState> {
    config.validate()?;
    check_step_input(mesh, energy, rho_prev, tau)?;
    let floors = config.floors(mesh, rho_prev);
    let zero = PotentialField::zeros(mesh.num_cells(), energy.species());
    let phi0 = phi_guess.unwrap_or(&zero);
    with_restarts(tau, config, "LJKO", |t| ljko_newton(mesh, energy, rho_prev, phi0, t, config, &floors))
}

/// `tau Psi*(rho; phi)` summed over species.
pub fn step_dissipation(mesh: &Mesh, rho: &DensityField, phi: &PotentialField, tau: f64) -> f64 {
    (0..rho.species()).map(|s| tau * psi_star(mesh, rho.component(s), phi.component(s))).sum()
}

/// Step-size policy shared by both schemes.
pub(crate) struct Stepper {
    t: f64,
    t_end: f64,
    tau: f64,
    adaptive: bool,
}

impl Stepper {
    pub(crate) fn new(time: &TimeGrid, config: &NewtonConfig) -> Result<Self> {
        time.validate()?;
        config.validate()?;
        let tau = if time.adaptive { time.tau.clamp(config.tau_min, config.tau_max) } else { time.tau };
        Ok(Self { t: time.t_start, t_end: time.t_end, tau, adaptive: time.adaptive })
    }

    /// Step to attempt next, or `None` once the end time is reached.
    pub(crate) fn next(&self) -> Option<f64> {
        let remaining = self.t_end - self.t;
        if remaining <= 1e-12 * self.t_end.abs().max(self.tau) {
            return None;
        }
        // Absorb a rounding-sized remainder into the last step.
        Some(if remaining <= self.tau * (1.0 + 1e-9) { remaining } else { self.tau })
    }

    pub(crate) fn accept(&mut self, attempted: f64, used: f64, iterations: usize, config: &NewtonConfig) -> f64 {
        let last =
            (self.t_end - self.t - attempted).abs() <= 1e-12 * self.t_end.abs().max(attempted) && used == attempted;
        self.t = if last { self.t_end } else { self.t + used };
        if self.adaptive {
            self.tau = if used < attempted { used } else { self.tau };
            if iterations <= config.iter_fast_threshold {
                self.tau = (self.tau * config.tau_increase).min(config.tau_max);
            }
        }
        self.t
    }
}

/// Marches the LJKO scheme from `rho0` over `time`.
pub fn run_flow(
    mesh: &Mesh,
    energy: &dyn EnergyModel,
    rho0: &DensityField,
    time: &TimeGrid,
    config: &NewtonConfig,
) -> Result<Trajectory> {
    let mut stepper = Stepper::new(time, config)?;
    let phi0 = PotentialField::zeros(mesh.num_cells(), energy.species());
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
        let state = ljko_step(mesh, energy, &prev.rho, Some(&prev.phi), tau, config)?;
        let t = stepper.accept(tau, state.tau_used, state.newton_iters, config);
        points.push(TrajectoryPoint {
            time: t,
            energy: energy.value(mesh, &state.rho)?,
            dissipation: step_dissipation(mesh, &state.rho, &state.phi, state.tau_used),
            tau: state.tau_used,
            newton_iters: state.newton_iters,
            residual_linf: state.residual_linf,
            rho: state.rho,
            phi: state.phi,
        });
    }
    Ok(Trajectory { points })
}
