//! Simulation and verification of the mixed Deffuant bounded-confidence model.
//!
//! Agents hold opinions in a bounded convex subset of R^d. At each step one
//! edge of the current social graph is drawn uniformly; if the two endpoint
//! opinions are within `epsilon` they move toward each other by a factor `mu`.
//!
//! * [`model`]: state, parameters, the update rule and the trajectory driver.
//! * [`graph`]: edge sets, social-graph schedules, profiles and components.
//! * [`geometry`]: opinion spaces, Chebyshev centers, the `Z_c` potential.
//! * [`invariants`]: observers checking the pairwise and potential
//!   inequalities, and the stopping times `tau_delta` / `T_delta`.
//! * [`montecarlo`]: trial ensembles, outcome classification and the
//!   consensus-probability lower bound.
//! * [`verify`]: named property suites over a seeded ensemble.

pub mod error;
pub mod exec;
pub mod geometry;
pub mod graph;
pub mod invariants;
pub mod model;
pub mod montecarlo;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{chebyshev_center, Ball, Distribution, OpinionSpace};
pub use graph::{EdgeSet, GraphSchedule};
pub use invariants::{Violation, SLACK_TOL, IDENTITY_TOL};
pub use model::{Dynamics, ModelParams, MuSchedule, Norm, Opinion, OpinionState, Recording, Trajectory};
pub use montecarlo::{ConsensusEstimate, EnsembleConfig, Verdict};
