//! Hierarchical logistic model of recall accuracy, sampled with NUTS.

pub mod adapt;
pub mod diagnostics;
mod fit;
pub mod model;
pub mod nuts;

pub use diagnostics::{ess_bulk, hdi, rhat, ScalarDiagnostics};
pub use fit::{
    fit_model, fit_with_spec, EffectRow, EffectSummary, FitConfig, ModelFit, ParticipantEffects, PosteriorDraws,
    MAX_DIVERGENCE_FRACTION,
};
pub use model::{
    log_likelihood, log_posterior, HierarchicalModel, LatentState, ModelData, ModelSpec, Parameterization,
    EFFECT_NAMES, K,
};
pub use nuts::{sample, ChainOutput, ChainStats, LogDensity, NutsConfig};
