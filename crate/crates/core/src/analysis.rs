//! Exact solutions, error norms, convergence tables and dissipation series.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::energy::{entropy_excess, EnergyModel, FokkerPlanckEnergy};
use crate::error::{Result, WgfError};
use crate::euler::run_euler_flow;
use crate::field::DensityField;
use crate::ljko::{run_flow, NewtonConfig, TimeGrid, Trajectory};
use crate::mesh::{Mesh, Point, Triangulation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Ljko,
    Euler,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Ljko => "ljko",
            Scheme::Euler => "euler",
        }
    }

    pub fn run(
        self,
        mesh: &Mesh,
        energy: &dyn EnergyModel,
        rho0: &DensityField,
        time: &TimeGrid,
        config: &NewtonConfig,
    ) -> Result<Trajectory> {
        match self {
            Scheme::Ljko => run_flow(mesh, energy, rho0, time, config),
            Scheme::Euler => run_euler_flow(mesh, energy, rho0, time, config),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = WgfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ljko" => Ok(Scheme::Ljko),
            "euler" => Ok(Scheme::Euler),
            other => Err(WgfError::InvalidInput(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Exact Fokker-Planck solution for `V = -g x` on the unit square.
pub fn fp_exact(x: f64, _y: f64, t: f64, g: f64) -> f64 {
    fp_transient(x, t, g) + fp_stationary(x, g)
}

fn fp_transient(x: f64, t: f64, g: f64) -> f64 {
    let alpha = PI * PI + 0.25 * g * g;
    (-alpha * t + 0.5 * g * x).exp() * (PI * (PI * x).cos() + 0.5 * g * (PI * x).sin())
}

/// Long-time limit of [`fp_exact`].
pub fn fp_stationary(x: f64, g: f64) -> f64 {
    PI * (g * (x - 0.5)).exp()
}

/// `int rho (log rho + V)` at the stationary state of [`fp_exact`].
pub fn fp_equilibrium_energy(g: f64) -> f64 {
    if g == 0.0 {
        return PI * PI.ln();
    }
    PI * (PI.ln() - 0.5 * g) * ((0.5 * g).exp() - (-0.5 * g).exp()) / g
}

// Gauss-Legendre nodes and weights on [-1, 1].
const GAUSS_NODES: [f64; 5] =
    [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Composite five-point Gauss-Legendre quadrature of `f` over `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let mid = a + (i as f64 + 0.5) * h;
            GAUSS_NODES.iter().zip(GAUSS_WEIGHTS).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// `E(rho(t)) - E(rho_inf)` for [`fp_exact`], by quadrature of the relative
/// entropy so that late times do not suffer from cancellation.
pub fn fp_continuous_dissipation(t: f64, g: f64) -> f64 {
    integrate(
        |x| {
            let r = fp_stationary(x, g);
            r * entropy_excess(fp_transient(x, t, g) / r)
        },
        0.0,
        1.0,
        64,
    )
}

/// Porous medium steady profile centered at `(0.5, 0.5)`.
pub fn barenblatt(x: f64, y: f64, m: f64) -> Result<f64> {
    if !(m > 1.0) {
        return Err(WgfError::InvalidInput(format!("porous medium exponent must exceed 1, got {m}")));
    }
    let r2 = (x - 0.5).powi(2) + (y - 0.5).powi(2);
    Ok(((m - 1.0) / (2.0 * m) * (1.0 - r2).max(0.0)).powf(1.0 / (m - 1.0)))
}

/// Samples `f` at the cell centers.
pub fn sample_density(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Result<DensityField> {
    DensityField::new(mesh.sample(f))
}

/// `(eps_Linf, eps_L1)` of a single-species trajectory against `exact(x, t)`.
///
/// The per-level error is `sum_K m_K |rho_K^n - exact(x_K, t^n)|`; the first
/// norm is its maximum over all levels, the second its `tau`-weighted sum over
/// the steps.
pub fn error_norms(trajectory: &Trajectory, exact: impl Fn(Point, f64) -> f64, mesh: &Mesh) -> (f64, f64) {
    let mut linf: f64 = 0.0;
    let mut l1 = 0.0;
    for (n, p) in trajectory.points.iter().enumerate() {
        let eps: f64 = mesh
            .cells()
            .iter()
            .zip(p.rho.component(0))
            .map(|(c, r)| c.measure * (r - exact(c.center, p.time)).abs())
            .sum();
        linf = linf.max(eps);
        if n > 0 {
            l1 += p.tau * eps;
        }
    }
    (linf, l1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub dt: f64,
    pub err_linf: f64,
    pub rate_linf: Option<f64>,
    pub err_l1: f64,
    pub rate_l1: Option<f64>,
}

pub const CONVERGENCE_HEADER: &str = "h,dt,err_linf,rate_linf,err_l1,rate_l1";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|r| format!("{r:.16e}")).unwrap_or_default()
}

impl ConvergenceRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{},{:.16e},{}",
            self.h,
            self.dt,
            self.err_linf,
            fmt_opt(self.rate_linf),
            self.err_l1,
            fmt_opt(self.rate_l1)
        )
    }
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv());
    }
    out
}

/// Fills in `log2` rates between consecutive rows.
pub fn with_rates(rows: &mut [ConvergenceRow]) {
    for i in 1..rows.len() {
        let (prev, cur) = (rows[i - 1].clone(), &mut rows[i]);
        cur.rate_linf = Some((prev.err_linf / cur.err_linf).log2());
        cur.rate_l1 = Some((prev.err_l1 / cur.err_l1).log2());
    }
}

/// Setup of a mesh and time refinement study for the Fokker-Planck problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub base: Triangulation,
    pub levels: usize,
    pub tau0: f64,
    pub t0: f64,
    pub t_end: f64,
    pub g: f64,
    /// Refine the mesh between levels; disabled only for diagnostics.
    pub refine: bool,
    pub newton: NewtonConfig,
}

impl ConvergenceStudy {
    pub fn new(base: Triangulation, levels: usize, tau0: f64, t0: f64, t_end: f64, g: f64) -> Self {
        Self { base, levels, tau0, t0, t_end, g, refine: true, newton: NewtonConfig::default() }
    }

    /// Mesh and step of `level`.
    pub fn level(&self, level: usize) -> Result<(Mesh, f64)> {
        if self.refine {
            let mesh = self.base.refine_n(level)?.build()?;
            Ok((mesh, self.tau0 / (1u64 << level) as f64))
        } else {
            Ok((self.base.build()?, self.tau0))
        }
    }

    fn run_level(&self, level: usize, scheme: Scheme) -> Result<ConvergenceRow> {
        let (mesh, tau) = self.level(level)?;
        let g = self.g;
        let energy = FokkerPlanckEnergy::new(&mesh, |p| -g * p[0]);
        let rho0 = sample_density(&mesh, |p| fp_exact(p[0], p[1], self.t0, g))?;
        let config = NewtonConfig { tau_min: tau, tau_max: tau, ..self.newton.clone() };
        let time = TimeGrid::fixed(self.t0, self.t_end, tau);
        let trajectory = scheme.run(&mesh, &energy, &rho0, &time, &config)?;
        let (err_linf, err_l1) = error_norms(&trajectory, |p, t| fp_exact(p[0], p[1], t, g), &mesh);
        log::info!("{} level {level}: h={:.4e} tau={tau:.4e} err_linf={err_linf:.4e}", scheme.name(), mesh.size());
        Ok(ConvergenceRow { h: mesh.size(), dt: tau, err_linf, rate_linf: None, err_l1, rate_l1: None })
    }

    /// Runs every level of `scheme`, on up to `jobs` threads.
    pub fn run(&self, scheme: Scheme, jobs: usize) -> Result<Vec<ConvergenceRow>> {
        if self.levels < 2 {
            return Err(WgfError::InvalidInput("a convergence study needs at least two levels".into()));
        }
        if !(self.t_end > self.t0) || !(self.tau0 > 0.0) {
            return Err(WgfError::InvalidInput("convergence study needs t_end > t0 and tau0 > 0".into()));
        }
        let results: Vec<Mutex<Option<Result<ConvergenceRow>>>> = (0..self.levels).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = jobs.clamp(1, self.levels);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    // Finest levels first: they dominate the run time.
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= self.levels {
                        break;
                    }
                    let level = self.levels - 1 - i;
                    let row = self.run_level(level, scheme);
                    *results[level].lock().unwrap() = Some(row);
                });
            }
        });
        let mut rows = results
            .into_iter()
            .map(|r| r.into_inner().unwrap().expect("every level is visited"))
            .collect::<Result<Vec<_>>>()?;
        with_rates(&mut rows);
        Ok(rows)
    }
}

/// Reference state for [`dissipation_series`].
#[derive(Debug, Clone, PartialEq)]
pub enum DissipationReference {
    /// Discrete minimizer of the same mass; differences are evaluated as
    /// Bregman divergences, which avoids cancellation near equilibrium.
    Equilibrium(DensityField),
    /// Plain energy value.
    Energy(f64),
}

/// `(t^n, E(rho^n) - E_ref)` along a trajectory.
pub fn dissipation_series(
    trajectory: &Trajectory,
    energy: &dyn EnergyModel,
    mesh: &Mesh,
    reference: &DissipationReference,
) -> Result<Vec<(f64, f64)>> {
    trajectory
        .points
        .iter()
        .map(|p| {
            let d = match reference {
                DissipationReference::Equilibrium(eq) => energy.bregman(mesh, &p.rho, eq)?,
                DissipationReference::Energy(e) => energy.value(mesh, &p.rho)? - e,
            };
            Ok((p.time, d))
        })
        .collect()
}

pub const DISSIPATION_HEADER: &str = "t,dissipation";

pub fn dissipation_csv(series: &[(f64, f64)]) -> String {
    let mut out = String::from(DISSIPATION_HEADER);
    out.push('\n');
    for (t, d) in series {
        let _ = writeln!(out, "{t:.16e},{d:.16e}");
    }
    out
}
