//! Matrix-completion laboratory.
//!
//! Two recovery pipelines over a shared dense core: projected gradient
//! descent on the rank-constrained formulation, and the iterative dual
//! certificate construction for nuclear norm minimization — plus the
//! leave-one-out diagnostic ledgers and an executable check suite for the
//! supporting inequalities.

pub mod checks;
pub mod error;
pub mod groundtruth;
pub mod loodiag;
pub mod matcore;
pub mod sampling;
pub mod rng;
pub mod svp;
pub mod tangentcert;

pub use error::{Error, Result};
pub use matcore::Mat;
