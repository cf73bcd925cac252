//! TOML run configuration.
//!
//! Every section is a flat table; variants are selected by a tag key
//! (`source`, `model`, `kind`). Relative mesh paths resolve against the
//! directory of the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use wgf_core::analysis::Scheme;
use wgf_core::analysis::{barenblatt, fp_exact, sample_density};
use wgf_core::energy::fp_equilibrium;
use wgf_core::mesh::build_cartesian;
use wgf_core::{
    DensityField, DensityFloor, EnergyModel, FokkerPlanckEnergy, Mesh, NewtonConfig, Point, PorousMediumEnergy, Rect,
    SalinityEnergy, TimeGrid, Triangulation, WgfError,
};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    pub mesh: Option<MeshSection>,
    pub energy: Option<EnergySection>,
    pub initial: Option<InitialSection>,
    #[serde(default)]
    pub newton: NewtonSection,
    #[serde(default)]
    pub convergence: ConvergenceSection,
    #[serde(default)]
    pub dissipation: DissipationSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "one")]
    pub t_end: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub adaptive: bool,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            scheme: default_scheme(),
            t0: 0.0,
            t_end: 1.0,
            tau: default_tau(),
            adaptive: false,
            output_dir: default_output(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSection {
    Cartesian { nx: usize, ny: usize },
    File { path: PathBuf },
    Refined { path: PathBuf, level: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergySection {
    /// `V = -g x + k/2 |x - c|^2`.
    FokkerPlanck {
        #[serde(default = "one")]
        g: f64,
        #[serde(default)]
        confinement: f64,
        #[serde(default = "half")]
        center_x: f64,
        #[serde(default = "half")]
        center_y: f64,
    },
    /// `V = k/2 |x - c|^2`.
    PorousMedium {
        m: f64,
        #[serde(default)]
        confinement: f64,
        #[serde(default = "half")]
        center_x: f64,
        #[serde(default = "half")]
        center_y: f64,
    },
    /// Gaussian bedrock `A exp(-|x - c|^2 / w)`.
    Salinity {
        nu: f64,
        #[serde(default)]
        bedrock_amplitude: f64,
        #[serde(default = "half")]
        bedrock_x: f64,
        #[serde(default = "half")]
        bedrock_y: f64,
        #[serde(default = "default_width")]
        bedrock_width: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSection {
    /// Exact Fokker-Planck profile at `run.t0`.
    FpExact,
    Equilibrium {
        mass: f64,
    },
    Uniform {
        value: f64,
    },
    /// Constant on the square `|x - c|_inf < half_width`, zero elsewhere.
    Blob {
        #[serde(default = "half")]
        center_x: f64,
        #[serde(default = "half")]
        center_y: f64,
        half_width: f64,
        mass: Option<f64>,
        /// Take the mass of the sampled Barenblatt profile instead of `mass`.
        #[serde(default)]
        match_barenblatt: bool,
    },
    /// Two species: `high` left of `split_x` and `low` right of it; the second species mirrored.
    Layers {
        #[serde(default = "half")]
        split_x: f64,
        high: f64,
        low: f64,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSection {
    pub tol_linf: Option<f64>,
    pub max_iter: Option<usize>,
    pub density_floor: Option<f64>,
    pub tau_increase: Option<f64>,
    pub tau_decrease: Option<f64>,
    pub iter_fast_threshold: Option<usize>,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
    pub stagnation_window: Option<usize>,
    pub hessian_floor: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    /// Triangulation file; the built-in acute unit square mesh when absent.
    pub base: Option<PathBuf>,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_tau0")]
    pub tau0: f64,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "one")]
    pub g: f64,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            base: None,
            levels: default_levels(),
            tau0: default_tau0(),
            t0: default_t0(),
            t_end: default_t_end(),
            g: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissipationSection {
    pub base: Option<PathBuf>,
    #[serde(default = "one_usize")]
    pub level: usize,
    #[serde(default = "default_dissipation_tau")]
    pub tau: f64,
    #[serde(default = "default_dissipation_t_end")]
    pub t_end: f64,
    #[serde(default = "one")]
    pub g: f64,
}

impl Default for DissipationSection {
    fn default() -> Self {
        Self { base: None, level: 1, tau: default_dissipation_tau(), t_end: default_dissipation_t_end(), g: 1.0 }
    }
}

fn default_scheme() -> String {
    "ljko".into()
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_tau() -> f64 {
    0.01
}
fn default_width() -> f64 {
    0.05
}
fn default_levels() -> usize {
    4
}
fn default_tau0() -> f64 {
    0.05
}
fn default_t0() -> f64 {
    0.05
}
fn default_t_end() -> f64 {
    0.25
}
fn default_dissipation_tau() -> f64 {
    0.01
}
fn default_dissipation_t_end() -> f64 {
    3.0
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn half() -> f64 {
    0.5
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let r = &self.run;
        self.scheme(None)?;
        if !(r.t_end >= r.t0) || !(r.tau > 0.0) {
            return Err(CliError::Config("[run] needs t_end >= t0 and tau > 0".into()));
        }
        let c = &self.convergence;
        if c.levels < 2 || !(c.tau0 > 0.0) || !(c.t_end > c.t0) {
            return Err(CliError::Config("[convergence] needs levels >= 2, tau0 > 0 and t_end > t0".into()));
        }
        let d = &self.dissipation;
        if !(d.tau > 0.0) || !(d.t_end > 0.0) {
            return Err(CliError::Config("[dissipation] needs tau > 0 and t_end > 0".into()));
        }
        self.newton()?;
        Ok(())
    }

    /// The command line choice wins over `[run] scheme`.
    pub fn scheme(&self, cli: Option<Scheme>) -> Result<Scheme, CliError> {
        match cli {
            Some(s) => Ok(s),
            None => self.run.scheme.parse().map_err(|e: WgfError| CliError::Config(e.to_string())),
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Output directory, relative to the working directory.
    pub fn output_dir(&self) -> PathBuf {
        self.run.output_dir.clone()
    }

    pub fn newton(&self) -> Result<NewtonConfig, CliError> {
        let n = &self.newton;
        let mut c = NewtonConfig::default();
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = n.$field { c.$field = v; })* };
        }
        set!(
            tol_linf,
            max_iter,
            tau_increase,
            tau_decrease,
            iter_fast_threshold,
            tau_min,
            tau_max,
            stagnation_window,
            hessian_floor
        );
        if let Some(f) = n.density_floor {
            c.density_floor = DensityFloor::Relative(f);
        }
        c.validate().map_err(|e| CliError::Config(format!("[newton] {e}")))?;
        Ok(c)
    }

    fn triangulation(&self, path: &Path) -> Result<Triangulation, CliError> {
        let full = self.resolve(path);
        let text = std::fs::read_to_string(&full)
            .map_err(|e| CliError::Config(format!("cannot read mesh {}: {e}", full.display())))?;
        Ok(Triangulation::parse(&text)?)
    }

    /// Base triangulation of a study: a file, or the built-in acute unit square mesh.
    pub fn study_base(&self, base: Option<&Path>) -> Result<Triangulation, CliError> {
        base.map_or_else(|| Ok(Triangulation::unit_square_acute()), |p| self.triangulation(p))
    }

    pub fn mesh(&self) -> Result<Mesh, CliError> {
        match self.mesh.as_ref().ok_or_else(|| CliError::Config("missing [mesh] section".into()))? {
            MeshSection::Cartesian { nx, ny } => Ok(build_cartesian(*nx, *ny, Rect::unit())?),
            MeshSection::File { path } => Ok(self.triangulation(path)?.build()?),
            MeshSection::Refined { path, level } => Ok(self.triangulation(path)?.refine_n(*level)?.build()?),
        }
    }

    fn energy_section(&self) -> Result<&EnergySection, CliError> {
        self.energy.as_ref().ok_or_else(|| CliError::Config("missing [energy] section".into()))
    }

    pub fn energy(&self, mesh: &Mesh) -> Result<Box<dyn EnergyModel>, CliError> {
        let harmonic = |k: f64, cx: f64, cy: f64| move |p: Point| 0.5 * k * ((p[0] - cx).powi(2) + (p[1] - cy).powi(2));
        Ok(match *self.energy_section()? {
            EnergySection::FokkerPlanck { g, confinement, center_x, center_y } => {
                let trap = harmonic(confinement, center_x, center_y);
                Box::new(FokkerPlanckEnergy::new(mesh, move |p| -g * p[0] + trap(p)))
            }
            EnergySection::PorousMedium { m, confinement, center_x, center_y } => {
                Box::new(PorousMediumEnergy::new(mesh, m, harmonic(confinement, center_x, center_y))?)
            }
            EnergySection::Salinity { nu, bedrock_amplitude, bedrock_x, bedrock_y, bedrock_width } => {
                if !(bedrock_width > 0.0) {
                    return Err(CliError::Config("[energy] bedrock_width must be positive".into()));
                }
                Box::new(SalinityEnergy::new(mesh, nu, move |p| {
                    bedrock_amplitude
                        * (-((p[0] - bedrock_x).powi(2) + (p[1] - bedrock_y).powi(2)) / bedrock_width).exp()
                })?)
            }
        })
    }

    pub fn initial(&self, mesh: &Mesh, energy: &dyn EnergyModel) -> Result<DensityField, CliError> {
        let initial = self.initial.as_ref().ok_or_else(|| CliError::Config("missing [initial] section".into()))?;
        let section = self.energy_section()?;
        let rho = match initial {
            InitialSection::FpExact => match section {
                EnergySection::FokkerPlanck { g, .. } => {
                    let (g, t0) = (*g, self.run.t0);
                    sample_density(mesh, |p| fp_exact(p[0], p[1], t0, g))?
                }
                _ => return Err(CliError::Config("initial kind fp_exact needs the fokker_planck model".into())),
            },
            InitialSection::Equilibrium { mass } => match section {
                EnergySection::FokkerPlanck { .. } => {
                    let potential = energy_potential(mesh, section);
                    fp_equilibrium(mesh, &potential, *mass)?
                }
                _ => return Err(CliError::Config("initial kind equilibrium needs the fokker_planck model".into())),
            },
            InitialSection::Uniform { value } => DensityField::from_parts(
                mesh.num_cells(),
                energy.species(),
                vec![*value; mesh.num_cells() * energy.species()],
            )?,
            InitialSection::Blob { center_x, center_y, half_width, mass, match_barenblatt } => {
                let mass = match (mass, match_barenblatt, section) {
                    (_, true, EnergySection::PorousMedium { m, .. }) => {
                        let m = *m;
                        let profile = sample_density(mesh, |p| barenblatt(p[0], p[1], m).unwrap_or(0.0))?;
                        profile.masses(mesh)[0]
                    }
                    (_, true, _) => {
                        return Err(CliError::Config("match_barenblatt needs the porous_medium model".into()))
                    }
                    (Some(m), false, _) => *m,
                    (None, false, _) => return Err(CliError::Config("blob needs mass or match_barenblatt".into())),
                };
                let inside: Vec<f64> = mesh
                    .centers()
                    .iter()
                    .map(|c| {
                        if (c[0] - center_x).abs() < *half_width && (c[1] - center_y).abs() < *half_width {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let covered: f64 = inside.iter().zip(mesh.measures()).map(|(a, m)| a * m).sum();
                if covered == 0.0 {
                    return Err(CliError::Config("blob contains no cell center".into()));
                }
                let single: Vec<f64> = inside.iter().map(|a| a * mass / covered).collect();
                DensityField::from_species(vec![single; energy.species()])?
            }
            InitialSection::Layers { split_x, high, low } => {
                if energy.species() != 2 {
                    return Err(CliError::Config("initial kind layers needs a two-species model".into()));
                }
                let layer = |left: bool| {
                    mesh.centers().iter().map(|c| if (c[0] < *split_x) == left { *high } else { *low }).collect()
                };
                DensityField::from_species(vec![layer(true), layer(false)])?
            }
        };
        if rho.species() != energy.species() {
            return Err(CliError::Config("initial data does not match the number of species".into()));
        }
        Ok(rho)
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid { t_start: self.run.t0, t_end: self.run.t_end, tau: self.run.tau, adaptive: self.run.adaptive }
    }
}

fn energy_potential(mesh: &Mesh, section: &EnergySection) -> Vec<f64> {
    match *section {
        EnergySection::FokkerPlanck { g, confinement, center_x, center_y } => {
            mesh.sample(|p| -g * p[0] + 0.5 * confinement * ((p[0] - center_x).powi(2) + (p[1] - center_y).powi(2)))
        }
        _ => vec![0.0; mesh.num_cells()],
    }
}
