//! Focusing nonlinear Schrödinger equation on the exterior of a convex obstacle.
//!
//! The crate is organised by stage of the pipeline: [`geometry`] builds the
//! truncated exterior grid, [`ground_state`] computes the radial soliton and
//! its constants, [`field`] holds complex fields and conserved functionals,
//! [`evolution`] advances them in time, [`virial`] evaluates the weighted
//! moments and their derivative identities, and [`criteria`] checks blow-up
//! hypotheses.

pub mod criteria;
pub mod error;
pub mod evolution;
pub mod field;
pub mod geometry;
pub mod ground_state;
pub mod linalg;
pub mod virial;

pub use num_complex::Complex64;

pub use criteria::{CriterionReport, Hypothesis, TheoremId};
pub use error::{Error, Result};
pub use evolution::{BlowupStatus, BlowupVerdict, DiagnosticsRow, DiagnosticsSeries, RunParams, Stepper};
pub use field::{ComplexField, InitialData, SymmetryClass};
pub use geometry::{BoundaryFace, ExteriorGrid, NodeClass, ObstacleKind, ObstacleSpec};
pub use ground_state::GroundStateProfile;
pub use virial::{IdentityRecord, VirialReport};
