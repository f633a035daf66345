//! Discrete-event simulator for asynchronous federated learning with
//! staleness-aware aggregation.
//!
//! The server applies each client update the moment it arrives. Because
//! clients train against snapshots that may be several versions old, every
//! update carries a staleness score: the distance the global model travelled
//! since the client's snapshot, normalized by the update's own length. The
//! aggregation learning rate shrinks as that score grows, so stale updates
//! are damped instead of dropped.
//!
//! Crate layout:
//! - [`params`]: dense parameter vectors with checked arithmetic.
//! - [`metrics`]: seven interchangeable distance functions over parameters.
//! - [`staleness`]: the staleness score, adaptive learning rate, and local
//!   epoch rules.
//! - [`model`]: logistic and one-hidden-layer classifiers with plain SGD.
//! - [`data`]: synthetic blob datasets, Dirichlet partitioning, IDX loading.
//! - [`sim`]: the event-driven server loop and run traces.
//! - [`config`] and [`runner`]: experiment configs, sweep execution, CSV
//!   output.

pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod params;
pub mod rng;
pub mod runner;
pub mod sim;
pub mod staleness;

pub use error::{Error, Result};
pub use params::ParamVector;

// Compile the guide's code blocks as doctests so the book cannot drift from
// the library.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(overview, "../../../book/src/overview.md");
    chapter!(metrics, "../../../book/src/metrics.md");
    chapter!(staleness, "../../../book/src/staleness.md");
    chapter!(simulation, "../../../book/src/simulation.md");
    chapter!(data, "../../../book/src/data.md");
    chapter!(experiments, "../../../book/src/experiments.md");
}
