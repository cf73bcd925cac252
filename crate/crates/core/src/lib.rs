//! Finite volume solvers for Wasserstein gradient flows on admissible meshes.
//!
//! The main scheme is a linearized JKO step with upwind mobility and
//! two-point fluxes ([`ljko`]); a backward Euler upwind scheme ([`euler`])
//! serves as a baseline.

pub mod analysis;
pub mod dissipation;
pub mod energy;
pub mod error;
pub mod euler;
pub mod field;
pub mod ljko;
pub mod mesh;
pub mod sparse;

pub use analysis::{ConvergenceRow, ConvergenceStudy, DissipationReference, Scheme};
pub use energy::{EnergyModel, FokkerPlanckEnergy, PorousMediumEnergy, SalinityEnergy};
pub use error::{Result, SolverDiagnostics, WgfError};
pub use euler::{euler_step, run_euler_flow, EulerState};
pub use field::{DensityField, PotentialField};
pub use ljko::{ljko_step, run_flow, DensityFloor, LjkoState, NewtonConfig, TimeGrid, Trajectory, TrajectoryPoint};
pub use mesh::{Mesh, MeshQualityReport, Point, Rect, Triangulation};
