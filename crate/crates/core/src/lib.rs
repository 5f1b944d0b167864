//! Regular-vine copulas and two-state Markov-switching R-vine models for
//! multivariate financial dependence.
//!
//! The crate is organized bottom-up:
//!
//! * [`copulas`]: bivariate families, h-functions, tail dependence and the
//!   role-aware quarter tail dependence.
//! * [`data`]: price ingestion, log returns and rank-based pseudo-observations.
//! * [`dependence`]: tie-aware empirical Kendall's tau.
//! * [`vine`]: R-vine structures, joint densities and simulation.
//! * [`vine_select`]: maximum-spanning-tree structure selection and sequential ML.
//! * [`rolling`]: rolling-window family analysis and regime classification.
//! * [`msrv`]: Hamilton filter, Kim smoother and stepwise EM for the
//!   two-regime model.
//! * [`cli`]: the batch command-line driver.

pub mod cli;
pub mod copulas;
pub mod data;
pub mod dependence;
mod error;
pub mod msrv;
pub mod optim;
mod quadrature;
pub mod rolling;
mod special;
pub mod vine;
pub mod vine_select;

pub use copulas::{
    quarter_tail_dependence, AssetRole, BivariateCopula, CopulaFamily, TailDependence,
};
pub use data::{PseudoObservations, ReturnPanel};
pub use dependence::{empirical_kendall_tau, TauEstimate};
pub use error::{Error, Result};
pub use msrv::{MsrVineModel, TransitionMatrix};
pub use rolling::{RegimeAssignment, RwaSeries};
pub use vine_select::FitReport;
pub use vine::{RVineModel, RVineStructure};
