//! Annealed importance sampling with an estimated likelihood.
//!
//! A population of parameter draws is moved from an easy initial density to
//! the posterior along a ladder of tempered densities. The likelihood is never
//! evaluated exactly; each point carries one unbiased estimate, which is reused
//! in every weight update and acceptance ratio until the point moves.
//!
//! Main entry points: [`sampler::aisel_run`], [`runner::run_batches`],
//! [`tuning::TuningEstimates`] and the models in [`models`].

pub mod ensemble;
pub mod error;
pub mod likelihood;
pub mod marglik;
pub mod models;
pub mod param;
pub mod particle_filter;
pub mod resample;
pub mod runner;
pub mod sampler;
pub mod schedule;
pub mod theory;
pub mod tuning;
pub mod weights;

pub use ensemble::{Ensemble, Particle};
pub use error::{AiselError, Result};
pub use likelihood::{EstimatorSettings, InitialDensity, LikelihoodEstimate, Model, VarianceMethod};
pub use param::{Layout, ParamVector, Support};
pub use resample::ResampleMethod;
pub use sampler::{aisel_run, NPolicy, RunOutput, RunReport, SamplerConfig};
pub use schedule::AnnealingSchedule;
