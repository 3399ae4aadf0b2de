//! Numerics for the collision-induced breakage equation
//! `∂f/∂t = ∫∫ b(x,y,z) a(y,z) f(y) f(z) dz dy − ∫ a(x,y) f(x) f(y) dy`:
//! kernel and daughter catalogs, admissible weights, a sectional solver,
//! moment diagnostics and a stochastic particle oracle.

pub mod daughter;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod kernel;
pub mod particle;
pub mod quadrature;
pub mod sectional;
pub mod weight;

pub use daughter::{DaughterFamily, DaughterSpec, PConditionReport};
pub use density::InitialDensity;
pub use error::{Error, Result};
pub use diagnostics::{Check, DiagnosticsReport, TestFunction};
pub use kernel::{classify_regime, KernelFamily, KernelSpec, Regime};
pub use particle::{MCConfig, MCStats, ParticleSystem, VolumeNormalization};
pub use sectional::{solve, Grid, OperatorSet, SolverConfig, StateVector, Trajectory};
pub use weight::{ThetaSource, WeightFamily, WeightSpec};
