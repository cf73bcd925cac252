//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use wgf_core::analysis::{
    barenblatt, dissipation_series, fp_exact, sample_density, ConvergenceStudy, DissipationReference, Scheme,
};
use wgf_core::dissipation::{psi, solve_hj};
use wgf_core::energy::fp_equilibrium;
use wgf_core::euler::euler_step;
use wgf_core::ljko::assemble_newton_system;
use wgf_core::mesh::build_cartesian;
use wgf_core::*;

const MASS_TOL: f64 = 1e-12;
const EDI_SLACK: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-8;
const RATE_RANGE: (f64, f64) = (0.85, 1.15);
const DISSIPATION_AGREEMENT: f64 = 0.01;
const RESOLVABLE: f64 = 1e-10;
const EQUILIBRIUM_STEP_TOL: f64 = 1e-10;
const EQUILIBRIUM_LONG_TOL: f64 = 1e-6;
const SCHUR_SYMMETRY_TOL: f64 = 1e-12;
const SCHUR_DEFINITENESS: f64 = 1e-12;
const ROUNDING_SLACK: f64 = 1e-12;

type Series = Vec<(f64, f64)>;
type Check = fn() -> wgf_core::Result<Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }

    fn error(e: WgfError) -> Self {
        Self::new(false, format!("error: {e}"))
    }
}

fn report(id: &str, name: &str, outcome: &Outcome, elapsed: Duration) -> bool {
    let tag = if outcome.pass { "PASS" } else { "FAIL" };
    println!("{tag} {id:<3} {name:<34} {} ({:.2} s)", outcome.detail, elapsed.as_secs_f64());
    outcome.pass
}

fn within(limit: Duration, elapsed: Duration) -> bool {
    elapsed < limit
}

struct SuiteResult {
    conservation: Outcome,
    decay: Outcome,
}

fn suite() -> wgf_core::Result<SuiteResult> {
    let mut rng = StdRng::seed_from_u64(20240611);
    let mut worst_mass: f64 = 0.0;
    let mut min_rho = f64::INFINITY;
    let mut worst_edi = f64::NEG_INFINITY;
    let mut steps = 0;
    for i in 0..50 {
        let inst = common::random_instance(&mut rng, i);
        let m0 = inst.rho0.masses(&inst.mesh)[0];
        for scheme in [Scheme::Ljko, Scheme::Euler] {
            let time = TimeGrid::fixed(0.0, 4.0 * inst.tau, inst.tau);
            let config = NewtonConfig::fixed_step(inst.tau);
            let traj = scheme.run(&inst.mesh, inst.energy.as_ref(), &inst.rho0, &time, &config)?;
            for w in traj.points.windows(2) {
                let (prev, cur) = (&w[0], &w[1]);
                steps += 1;
                worst_mass = worst_mass.max((cur.rho.masses(&inst.mesh)[0] - m0).abs() / m0);
                min_rho = min_rho.min(cur.rho.min());
                let h: Vec<f64> = prev.rho.values().iter().zip(cur.rho.values()).map(|(a, b)| a - b).collect();
                let dissipated = psi(&inst.mesh, cur.rho.values(), &h)? / cur.tau;
                worst_edi = worst_edi.max(cur.energy + dissipated - prev.energy);
            }
        }
    }
    Ok(SuiteResult {
        conservation: Outcome::new(
            worst_mass <= MASS_TOL && min_rho >= 0.0,
            format!("{steps} steps, max rel mass drift {worst_mass:.2e}, min rho {min_rho:.2e}"),
        ),
        decay: Outcome::new(worst_edi <= EDI_SLACK, format!("max E^n + Psi/tau - E^(n-1) = {worst_edi:.2e}")),
    })
}

/// Objective of one step on two cells with equal measures, by direct minimization over the segment.
fn two_cell_oracle(m: f64, a: f64, tau: f64, v: [f64; 2], prev: [f64; 2]) -> f64 {
    let total = prev[0] + prev[1];
    let objective = |x: f64| {
        let y = total - x;
        let h = prev[0] - x;
        let up = if h > 0.0 { x } else { y };
        let entropy = |r: f64, vk: f64| if r > 0.0 { r * (r.ln() + vk) - r } else { 0.0 };
        m * m * h * h / (2.0 * a * up * tau) + m * (entropy(x, v[0]) + entropy(y, v[1]))
    };
    let n = 200_000;
    let dx = total / n as f64;
    let best = (1..n).min_by(|&i, &j| objective(i as f64 * dx).total_cmp(&objective(j as f64 * dx))).unwrap();
    let mut x = best as f64 * dx;
    for delta in [dx, 1e-6, 1e-7] {
        let (lo, mid, hi) = (objective(x - delta), objective(x), objective(x + delta));
        x -= 0.5 * delta * (hi - lo) / (hi - 2.0 * mid + lo);
    }
    x
}

fn oracle() -> wgf_core::Result<Outcome> {
    let mesh = build_cartesian(2, 1, Rect::unit())?;
    let (m, a) = (mesh.measure(0), mesh.faces()[0].transmissivity);
    let (tau, prev) = (0.05, [1.3, 0.7]);
    let energy = FokkerPlanckEnergy::new(&mesh, |p| p[0]);
    let v = [energy.potential()[0], energy.potential()[1]];
    let x = two_cell_oracle(m, a, tau, v, prev);
    let state =
        ljko_step(&mesh, &energy, &DensityField::new(prev.to_vec())?, None, tau, &NewtonConfig::fixed_step(tau))?;
    let err = (state.rho.at(0, 0) - x).abs().max((state.rho.at(0, 1) - (prev[0] + prev[1] - x)).abs());
    Ok(Outcome::new(err <= ORACLE_TOL, format!("|rho - argmin| = {err:.2e}")))
}

fn hj_operator() -> wgf_core::Result<Outcome> {
    let mut rng = StdRng::seed_from_u64(7);
    let meshes = [
        build_cartesian(4, 4, Rect::unit())?,
        build_cartesian(8, 8, Rect::unit())?,
        Triangulation::unit_square_acute().build()?,
    ];
    let (mut bounds_ok, mut worst_order) = (true, f64::NEG_INFINITY);
    for i in 0..100 {
        let mesh = &meshes[i % meshes.len()];
        let n = mesh.num_cells();
        let tau = rng.random_range(0.01..2.0);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> =
            f.iter().map(|v| if rng.random_bool(0.3) { *v } else { v + rng.random_range(0.0..0.5) }).collect();
        let (pf, pg) = (solve_hj(mesh, &f, tau)?, solve_hj(mesh, &g, tau)?);
        for (data, sol) in [(&f, &pf), (&g, &pg)] {
            let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            bounds_ok &= sol.iter().all(|p| (lo..=hi).contains(p));
        }
        worst_order = pf.iter().zip(&pg).map(|(a, b)| a - b).fold(worst_order, f64::max);
    }
    Ok(Outcome::new(
        bounds_ok && worst_order <= ROUNDING_SLACK,
        format!(
            "max principle {}, max (phi_f - phi_g) = {worst_order:.2e}",
            if bounds_ok { "exact" } else { "violated" }
        ),
    ))
}

fn rates() -> wgf_core::Result<Outcome> {
    let study = ConvergenceStudy::new(Triangulation::unit_square_acute(), 4, 0.05, 0.05, 0.25, 1.0);
    let mut pass = true;
    let mut detail = Vec::new();
    for scheme in [Scheme::Ljko, Scheme::Euler] {
        let rows = study.run(scheme, 1)?;
        let last: Vec<(f64, f64)> =
            rows[rows.len() - 2..].iter().map(|r| (r.rate_linf.unwrap(), r.rate_l1.unwrap())).collect();
        let inside = |r: f64| (RATE_RANGE.0..=RATE_RANGE.1).contains(&r);
        pass &= last.iter().all(|(a, b)| inside(*a) && inside(*b));
        detail.push(format!(
            "{} linf {:.3}/{:.3} l1 {:.3}/{:.3}",
            scheme.name(),
            last[0].0,
            last[1].0,
            last[0].1,
            last[1].1
        ));
    }
    Ok(Outcome::new(pass, detail.join(", ")))
}

fn dissipation_pair(mesh: &Mesh, tau: f64, t_end: f64) -> wgf_core::Result<(Series, Series, Vec<f64>)> {
    let g = 1.0;
    let energy = FokkerPlanckEnergy::new(mesh, |p| -g * p[0]);
    let rho0 = sample_density(mesh, |p| fp_exact(p[0], p[1], 0.0, g))?;
    let eq = fp_equilibrium(mesh, energy.potential(), rho0.masses(mesh)[0])?;
    let time = TimeGrid::fixed(0.0, t_end, tau);
    let config = NewtonConfig::fixed_step(tau);
    let a = run_flow(mesh, &energy, &rho0, &time, &config)?;
    let b = run_euler_flow(mesh, &energy, &rho0, &time, &config)?;
    let eq_max = eq.values().iter().copied().fold(0.0, f64::max);
    let deviation = a
        .points
        .iter()
        .map(|p| p.rho.values().iter().zip(eq.values()).map(|(r, e)| (r - e).abs()).fold(0.0, f64::max) / eq_max)
        .collect();
    let reference = DissipationReference::Equilibrium(eq);
    Ok((
        dissipation_series(&a, &energy, mesh, &reference)?,
        dissipation_series(&b, &energy, mesh, &reference)?,
        deviation,
    ))
}

fn dissipation_ordering() -> wgf_core::Result<Outcome> {
    let mesh = Triangulation::unit_square_acute().refine_n(1)?.build()?;
    let (a, b, _) = dissipation_pair(&mesh, 0.01, 3.0)?;
    let ordered = a.iter().zip(&b).all(|((_, x), (_, y))| x <= y);
    let (a, b, deviation) = dissipation_pair(&mesh, 1e-4, 3.0)?;
    let rel = |x: f64, y: f64| if y > 0.0 { (x - y).abs() / y } else { 0.0 };
    let mut resolved: f64 = 0.0;
    let mut full: f64 = 0.0;
    for (((_, x), (_, y)), d) in a.iter().zip(&b).zip(&deviation) {
        full = full.max(rel(*x, *y));
        if *d >= RESOLVABLE {
            resolved = resolved.max(rel(*x, *y));
        }
    }
    Ok(Outcome::new(
        ordered && resolved <= DISSIPATION_AGREEMENT,
        format!(
            "{} cells, tau=0.01 ordered: {ordered}, tau=1e-4 max rel gap {resolved:.3e} (full horizon {full:.3e})",
            mesh.num_cells()
        ),
    ))
}

fn equilibria() -> wgf_core::Result<Outcome> {
    let mesh = Triangulation::unit_square_acute().build()?;
    let energy = FokkerPlanckEnergy::new(&mesh, |p| -p[0] + 0.5 * p[1] * p[1]);
    let eq = fp_equilibrium(&mesh, energy.potential(), 1.0)?;
    let config = NewtonConfig::fixed_step(0.05);
    let ljko = ljko_step(&mesh, &energy, &eq, None, 0.05, &config)?.rho.l1_distance(&eq, &mesh);
    let euler = euler_step(&mesh, &energy, &eq, 0.05, &config)?.rho.l1_distance(&eq, &mesh);

    let grid = build_cartesian(4, 4, Rect::unit())?;
    let fp = FokkerPlanckEnergy::new(&grid, |p| -p[0]);
    let rho0 = sample_density(&grid, |p| fp_exact(p[0], p[1], 0.05, 1.0))?;
    let target = fp_equilibrium(&grid, fp.potential(), rho0.masses(&grid)[0])?;
    let time = TimeGrid { t_start: 0.0, t_end: 10.0, tau: 0.01, adaptive: true };
    let traj = run_flow(&grid, &fp, &rho0, &time, &NewtonConfig::default())?;
    let long = traj.last().unwrap().rho.l1_distance(&target, &grid);
    Ok(Outcome::new(
        ljko < EQUILIBRIUM_STEP_TOL && euler < EQUILIBRIUM_STEP_TOL && long < EQUILIBRIUM_LONG_TOL,
        format!("one step ljko {ljko:.2e} euler {euler:.2e}; t=10 on 16 cells {long:.2e}"),
    ))
}

fn lower_bound() -> wgf_core::Result<Outcome> {
    let mesh = Triangulation::unit_square_acute().build()?;
    let energy = FokkerPlanckEnergy::new(&mesh, |p| -p[0]);
    let rho0 = sample_density(&mesh, |p| fp_exact(p[0], p[1], 0.05, 1.0).max(0.1))?;
    let tau = 0.01;
    let traj =
        run_flow(&mesh, &energy, &rho0, &TimeGrid::fixed(0.0, 100.0 * tau, tau), &NewtonConfig::fixed_step(tau))?;
    let bound: Vec<f64> = traj
        .points
        .iter()
        .map(|p| p.rho.values().iter().zip(energy.potential()).map(|(r, v)| r.ln() + v).fold(f64::INFINITY, f64::min))
        .collect();
    let worst = bound.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    Ok(Outcome::new(
        traj.len() == 101 && worst <= ROUNDING_SLACK,
        format!(
            "{} steps, bound {:.4} -> {:.4}, max decrease {worst:.2e}",
            traj.len() - 1,
            bound[0],
            bound[bound.len() - 1]
        ),
    ))
}

fn schur_structure() -> wgf_core::Result<Outcome> {
    let mut rng = StdRng::seed_from_u64(11);
    let (mut worst_sym, mut worst_eig) = (0.0f64, f64::NEG_INFINITY);
    let mut pass = true;
    for n in [2, 4] {
        let mesh = build_cartesian(n, n, Rect::unit())?;
        let cells = mesh.num_cells();
        for i in 0..10 {
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let energy: Box<dyn EnergyModel> = if i % 2 == 0 {
                Box::new(FokkerPlanckEnergy::new(&mesh, |p| a * p[0] + b * p[1]))
            } else {
                Box::new(PorousMediumEnergy::new(&mesh, 2.0, |p| a * p[0] + b * p[1])?)
            };
            let mut positive = || DensityField::new((0..cells).map(|_| rng.random_range(0.1..2.0)).collect());
            let (rho, rho_prev) = (positive()?, positive()?);
            let phi = PotentialField::new((0..cells).map(|_| rng.random_range(-1.0..1.0)).collect())?;
            let tau = rng.random_range(0.01..0.5);
            let system = assemble_newton_system(&mesh, energy.as_ref(), &phi, &rho, &rho_prev, tau)?;
            let dense = system.schur_matrix()?.to_dense();
            let s = DMatrix::from_fn(cells, cells, |r, c| dense[r][c]);
            let norm = s.norm();
            let asym = (&s - s.transpose()).abs().max() / norm;
            let sym = (&s + s.transpose()) * 0.5;
            let top = sym.symmetric_eigen().eigenvalues.max() / norm;
            worst_sym = worst_sym.max(asym);
            worst_eig = worst_eig.max(top);
            pass &= asym <= SCHUR_SYMMETRY_TOL && top < -SCHUR_DEFINITENESS;
        }
    }
    Ok(Outcome::new(pass, format!("max |S - S^T|/|S| {worst_sym:.2e}, max eigenvalue/|S| {worst_eig:.2e}")))
}

fn porous_medium() -> wgf_core::Result<Outcome> {
    let m = 4.0;
    let mesh = build_cartesian(32, 32, Rect::unit())?;
    let energy = PorousMediumEnergy::new(&mesh, m, |p| 0.5 * ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)))?;
    let profile = sample_density(&mesh, |p| barenblatt(p[0], p[1], m).unwrap())?;
    let blob: Vec<f64> = mesh
        .centers()
        .iter()
        .map(|c| if (c[0] - 0.5).abs() < 0.07 && (c[1] - 0.5).abs() < 0.07 { 1.0 } else { 0.0 })
        .collect();
    let blob_mass: f64 = blob.iter().zip(mesh.measures()).map(|(b, m)| b * m).sum();
    let scale = profile.masses(&mesh)[0] / blob_mass;
    let rho0 = DensityField::new(blob.iter().map(|b| b * scale).collect())?;
    let time = TimeGrid { t_start: 0.0, t_end: 1.0, tau: 1e-3, adaptive: true };
    let config = NewtonConfig { tau_min: 1e-8, tau_max: 0.05, ..NewtonConfig::default() };
    let traj = run_flow(&mesh, &energy, &rho0, &time, &config)?;
    let support: Vec<usize> = traj.points[..6]
        .iter()
        .map(|p| {
            let top = p.rho.values().iter().copied().fold(0.0, f64::max);
            p.rho.values().iter().filter(|r| **r > 1e-9 * top).count()
        })
        .collect();
    let grows = support.windows(2).all(|w| w[1] > w[0]);
    let distance: Vec<f64> =
        traj.points.iter().filter(|p| p.time >= 0.01 - 1e-12).map(|p| p.rho.l1_distance(&profile, &mesh)).collect();
    let decreasing = distance.windows(2).all(|w| w[1] < w[0]);
    Ok(Outcome::new(
        grows && decreasing,
        format!(
            "support {support:?}, L1 to profile {:.2e} -> {:.2e} over {} levels, monotone: {decreasing}",
            distance[0],
            distance[distance.len() - 1],
            distance.len()
        ),
    ))
}

fn salinity() -> wgf_core::Result<Outcome> {
    let mesh = build_cartesian(16, 16, Rect::unit())?;
    let energy =
        SalinityEnergy::new(&mesh, 0.9, |p| 0.2 * (-((p[0] - 0.3).powi(2) + (p[1] - 0.6).powi(2)) / 0.05).exp())?;
    let layer = |left: bool| mesh.centers().iter().map(|c| if (c[0] < 0.5) == left { 0.3 } else { 0.05 }).collect();
    let rho0 = DensityField::from_species(vec![layer(true), layer(false)])?;
    let time = TimeGrid { t_start: 0.0, t_end: 10.0, tau: 1e-3, adaptive: true };
    let config = NewtonConfig { tau_min: 1e-8, tau_max: 0.1, ..NewtonConfig::default() };
    let traj = run_flow(&mesh, &energy, &rho0, &time, &config)?;
    let m0 = rho0.masses(&mesh);
    let drift = traj
        .points
        .iter()
        .flat_map(|p| p.rho.masses(&mesh).into_iter().zip(m0.clone()).map(|(m, r)| (m - r).abs() / r))
        .fold(0.0, f64::max);
    let rise = traj.points.windows(2).map(|w| w[1].energy - w[0].energy).fold(f64::NEG_INFINITY, f64::max);
    let reached = traj.last().unwrap().time == 10.0;
    Ok(Outcome::new(
        drift <= MASS_TOL && rise <= 0.0 && reached,
        format!("{} steps to t=10, max rel mass drift {drift:.2e}, max energy change {rise:.2e}", traj.len() - 1),
    ))
}

fn timed(f: impl FnOnce() -> wgf_core::Result<Outcome>) -> (Outcome, Duration) {
    let start = Instant::now();
    let outcome = f().unwrap_or_else(Outcome::error);
    (outcome, start.elapsed())
}

fn main() {
    let mut all = true;

    let start = Instant::now();
    let suite = suite();
    let elapsed = start.elapsed();
    match suite {
        Ok(s) => {
            let conservation =
                Outcome::new(s.conservation.pass && within(Duration::from_secs(30), elapsed), s.conservation.detail);
            all &= report("1", "conservation & positivity", &conservation, elapsed);
            all &= report("2", "energy decay", &s.decay, elapsed);
        }
        Err(e) => {
            let failed = Outcome::new(false, format!("error: {e}"));
            all &= report("1", "conservation & positivity", &failed, elapsed);
            all &= report("2", "energy decay", &failed, elapsed);
        }
    }

    let limits: [(&str, &str, Check, Option<u64>); 9] = [
        ("3", "two-cell oracle", oracle, Some(1)),
        ("4", "HJ max principle & monotonicity", hj_operator, None),
        ("5", "convergence rates", rates, Some(600)),
        ("6", "dissipation ordering", dissipation_ordering, Some(300)),
        ("7", "equilibria", equilibria, None),
        ("8", "FP lower bound", lower_bound, None),
        ("9", "Schur structure", schur_structure, None),
        ("10", "porous medium", porous_medium, None),
        ("11", "salinity smoke test", salinity, None),
    ];
    for (id, name, check, limit) in limits {
        let (mut outcome, elapsed) = timed(check);
        if let Some(secs) = limit {
            outcome.pass &= within(Duration::from_secs(secs), elapsed);
        }
        all &= report(id, name, &outcome, elapsed);
    }

    if !all {
        std::process::exit(1);
    }
}
