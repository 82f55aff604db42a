//! Depot location and capacitated vehicle routing through the k-median-forest objective.
//!
//! The crate is organised bottom-up:
//!
//! - [`metric`]: instances, depot sets, `Med`/`Flow` costs and metric validation.
//! - [`mst`]: Kruskal, contracted spanning trees `Tree(S)`, the optimal k-tree and shortcut tours.
//! - [`search`]: multi-swap local search over `Φ(S) = Σ q_u·d(u,S) + ρ·Tree(S)`.
//! - [`routing`]: unsplit capacitated routes from a depot set, with a `2·Flow + 2·Tree` cost certificate.
//! - [`pipeline`]: end-to-end k-LocVRP solvers (reduction and bicriteria).
//! - [`oracle`]: exhaustive solvers used to check every guarantee at desk scale.
//! - [`kit`]: instance generators and file formats (native JSON, TSPLIB CVRP).
//!
//! Data-parallel loops (swap scans, subset scans, restarts) go through [`exec::Parallelism`];
//! building without the default `parallel` feature makes every path sequential.

pub mod error;
pub mod exec;
pub mod kit;
pub mod metric;
pub mod mst;
pub mod oracle;
pub mod pipeline;
pub mod routing;
pub mod search;

pub use error::{Error, Result};
pub use exec::Parallelism;
pub use metric::{DepotSet, Instance, Metric, ObjectiveReport, ValidationReport, Which};
pub use mst::ContractedTree;
pub use pipeline::{SolveParams, SolveResult};
pub use routing::{RoutePlan, Trip};
pub use search::{Objective, SearchConfig, SearchTrace, SwapMove};
