//! Cooperative UAV caching: channel statistics, rate factors, energy and
//! content placement.

pub mod analysis;
pub mod channel;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod optimizer;
pub mod placement;
pub mod quadrature;
pub mod simulator;

pub use analysis::{GammaKernel, GammaValue, InterferenceLimits, KernelCache, NetworkConfig, QuadratureSpec};
pub use channel::{EnvironmentParams, Link, LinkState, ShadowLimits, ShadowRule};
pub use energy::{DisplacementPlan, Direction, EnergyBreakdown, UavPlatform};
pub use error::{Error, Result};
pub use experiments::{RunConfig, RunMode, SweepOutcome, SweepRow, SweepVariable, ValidationReport};
pub use optimizer::{AltitudeGrid, EvalContext, NetworkEe, Solution, Strategy};
pub use placement::{Catalog, PlacementVector};
pub use simulator::{SimEstimate, SimSpec};
