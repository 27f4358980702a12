//! Built-in models.

pub mod dist;
pub mod glmm;
pub mod sv;
pub mod toy;

pub use glmm::{glmm_initial_density, simulate_glmm, GlmmData, GlmmModel, GlmmObservation, GlmmProposal, GlmmSpec};
pub use sv::{SvModel, SvPrior};
pub use toy::{GaussianToy, NormalDensity};
