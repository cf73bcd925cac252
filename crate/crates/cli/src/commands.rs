use wgf_core::analysis::{
    convergence_csv, dissipation_csv, dissipation_series, fp_continuous_dissipation, fp_exact, sample_density,
    ConvergenceStudy, DissipationReference, Scheme,
};
use wgf_core::energy::fp_equilibrium;
use wgf_core::{FokkerPlanckEnergy, NewtonConfig, TimeGrid};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{side_by_side_csv, state_csv, summary_csv, write_atomic};

pub fn cmd_run(config: &RunConfig, scheme: Option<Scheme>) -> Result<(), CliError> {
    let scheme = config.scheme(scheme)?;
    let mesh = config.mesh()?;
    let energy = config.energy(&mesh)?;
    let rho0 = config.initial(&mesh, energy.as_ref())?;
    let newton = config.newton()?;
    log::info!("{} run on {} cells, t in [{}, {}]", scheme.name(), mesh.num_cells(), config.run.t0, config.run.t_end);
    let trajectory = scheme.run(&mesh, energy.as_ref(), &rho0, &config.time_grid(), &newton)?;
    let last = trajectory.last().expect("trajectory holds the initial state");
    log::info!("{} steps, final energy {:.6e}", trajectory.len() - 1, last.energy);
    let dir = config.output_dir();
    write_atomic(&dir.join("summary.csv"), &summary_csv(&trajectory, &mesh))?;
    write_atomic(&dir.join("final_state.csv"), &state_csv(&last.rho, &mesh))
}

pub fn cmd_convergence(config: &RunConfig, scheme: Option<Scheme>, jobs: usize) -> Result<(), CliError> {
    let c = &config.convergence;
    let mut study = ConvergenceStudy::new(config.study_base(c.base.as_deref())?, c.levels, c.tau0, c.t0, c.t_end, c.g);
    study.newton = config.newton()?;
    let schemes = scheme.map_or(vec![Scheme::Ljko, Scheme::Euler], |s| vec![s]);
    let dir = config.output_dir();
    let mut tables = Vec::new();
    for s in schemes {
        let rows = study.run(s, jobs)?;
        write_atomic(&dir.join(format!("convergence_{}.csv", s.name())), &convergence_csv(&rows))?;
        tables.push((s.name(), rows));
    }
    if tables.len() > 1 {
        write_atomic(&dir.join("convergence.csv"), &side_by_side_csv(&tables))?;
    }
    Ok(())
}

pub fn cmd_dissipation(config: &RunConfig) -> Result<(), CliError> {
    let d = &config.dissipation;
    let mesh = config.study_base(d.base.as_deref())?.refine_n(d.level)?.build()?;
    let g = d.g;
    let energy = FokkerPlanckEnergy::new(&mesh, |p| -g * p[0]);
    let rho0 = sample_density(&mesh, |p| fp_exact(p[0], p[1], 0.0, g))?;
    let reference =
        DissipationReference::Equilibrium(fp_equilibrium(&mesh, energy.potential(), rho0.masses(&mesh)[0])?);
    let time = TimeGrid::fixed(0.0, d.t_end, d.tau);
    let newton = NewtonConfig { tau_min: d.tau, tau_max: d.tau, ..config.newton()? };
    log::info!("dissipation study on {} cells, tau {}", mesh.num_cells(), d.tau);
    let dir = config.output_dir();
    let mut times = Vec::new();
    for scheme in [Scheme::Ljko, Scheme::Euler] {
        let trajectory = scheme.run(&mesh, &energy, &rho0, &time, &newton)?;
        let series = dissipation_series(&trajectory, &energy, &mesh, &reference)?;
        times = trajectory.times();
        write_atomic(&dir.join(format!("dissipation_{}.csv", scheme.name())), &dissipation_csv(&series))?;
    }
    let continuous: Vec<(f64, f64)> = times.iter().map(|&t| (t, fp_continuous_dissipation(t, g))).collect();
    write_atomic(&dir.join("dissipation_continuous.csv"), &dissipation_csv(&continuous))
}
