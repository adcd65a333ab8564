//! Gibbs point-process modeling, MCMC replication, and bootstrap inference
//! for persistence diagrams.
//!
//! The pipeline goes: sample a manifold ([`cloud`]) -> kernel density
//! estimate on a grid ([`grid`]) -> superlevel-set cubical persistence
//! ([`cubical`]) -> project the diagram ([`diagram`]) -> fit a Gibbs model by
//! pseudolikelihood ([`gibbs`]) -> replicate via Metropolis-Hastings
//! ([`mcmc`]) -> separate topological signal from noise with percentile
//! bootstrap statistics ([`infer`]). Bottleneck/Wasserstein distances
//! ([`distance`]) drive the burn-in diagnostics, and [`pipeline`] wires the
//! stages into the experiment runner behind the `pdrep` CLI.

pub mod cloud;
pub mod cubical;
pub mod diagram;
pub mod distance;
pub mod error;
pub mod gibbs;
pub mod grid;
pub mod infer;
pub mod mcmc;
pub mod optim;
pub mod pipeline;
pub mod quad;
pub mod reference;

pub use cloud::{PointCloud, SamplerSpec, Shape};
pub use diagram::{DiagramPoint, PersistenceDiagram, Ppd};
pub use error::{Error, Result};
pub use gibbs::{FitReport, GibbsModel};
pub use grid::ScalarGrid;
pub use infer::{SignalReport, SignificanceSummary};
pub use mcmc::{McmcConfig, Replica};
