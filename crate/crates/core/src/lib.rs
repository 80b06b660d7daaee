//! Pseudo-marginal Hamiltonian Monte Carlo for latent variable models whose
//! likelihood is only available through an importance-sampling estimate.

pub mod config;
pub mod convergence;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod io;
pub mod model;
pub mod real;
pub mod rng;
pub mod samplers;

pub use error::{Error, Result};
pub use real::Real;

/// Double-precision instantiations.
pub mod f64 {
    pub type ExperimentConfig = crate::config::ExperimentConfig;
    pub type Chain = crate::samplers::Chain<f64>;
    pub type ChainRecord = crate::samplers::ChainRecord<f64>;
    pub type SamplerConfig = crate::samplers::SamplerConfig<f64>;
    pub type IntegratorConfig = crate::dynamics::IntegratorConfig<f64>;
    pub type ExtendedState = crate::model::ExtendedState<f64>;
    pub type AnyModel = crate::model::AnyModel<f64>;
    pub type Dataset = crate::model::Dataset<f64>;
    pub type GaussianHierarchicalModel = crate::model::GaussianHierarchicalModel<f64>;
    pub type DiffractionModel = crate::model::DiffractionModel<f64>;
    pub type GlmmModel = crate::model::GlmmModel<f64>;
    pub type FlowExperimentConfig = crate::convergence::FlowExperimentConfig<f64>;
}
