//! Set-identified estimation of linearized dynamic equilibrium models that is
//! robust to misspecification of the friction mechanism.
//!
//! The pipeline: solve the frictionless benchmark by undetermined
//! coefficients ([`model`]), assemble the innovation-form state space and
//! filter the data ([`state_space`], [`kalman`]), stack moment equality and
//! inequality restrictions including qualitative-survey bounds ([`moments`]),
//! sample the quasi-posterior of the one-sided GMM criterion and extract the
//! identified set ([`mcmc`]), back out friction wedges with the chi-square
//! perturbation-weight program ([`qp`]), and test complete candidate models
//! with a block-bootstrap Wald statistic ([`wald`]).

pub mod error;
pub mod ident;
pub mod kalman;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod moments;
pub mod params;
pub mod qp;
pub mod state_space;
pub mod wald;
pub mod wedge;

pub use error::{Error, Result};
pub use params::{Bound, ParamVector};
