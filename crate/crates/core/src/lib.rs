//! Bayesian estimation of time-varying Lorenz curves from grouped income-share series.
//!
//! Each period's class income shares are modelled as a Dirichlet draw whose
//! cell parameters are the precision λ_t = n_t e^ψ times the increments of a
//! parametric Lorenz curve. The transformed curve parameters follow latent
//! AR(1) or random-walk processes, and the posterior is explored with a
//! Gibbs/Metropolis–Hastings sampler.
//!
//! The numeric kernels ([`special`], [`quadrature`], [`lorenz`], and the
//! densities in [`model`]) are generic over [`Scalar`]; the sampler and the
//! workflow modules work in `f64`. Aliases for the `f64` instantiations are
//! re-exported at the crate root.

pub mod baselines;
pub mod error;
pub mod io;
pub mod lorenz;
pub mod mcmc;
pub mod metrics;
pub mod model;
mod optim;
pub mod ppl;
pub mod quadrature;
pub mod scalar;
pub mod simulation;
pub mod special;

pub use error::{Error, Result};
pub use lorenz::LorenzFamily;
pub use model::{GroupedSeries, PriorSpec, ProcessKind};
pub use scalar::Scalar;

pub type Theta = lorenz::ThetaVector<f64>;
pub type Latent = lorenz::LatentVector<f64>;
pub type Rule = quadrature::QuadratureRule<f64>;
pub type CoordParams = model::CoordParams<f64>;
pub type LatentProcessSpec = model::LatentProcessSpec<f64>;
