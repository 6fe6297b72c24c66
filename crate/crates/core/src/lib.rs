//! Probed serial-recall working-memory task, a hierarchical Bayesian model
//! of recall accuracy sampled with NUTS, and anomaly scoring for telling
//! human participants apart from LLM agents.
//!
//! The pipeline, end to end:
//!
//! 1. [`paradigm`] generates balanced trial plans and grades answers.
//! 2. [`agents`] produces [`store::SessionRecord`]s from simulators or a
//!    chat-completions endpoint.
//! 3. [`design`] turns sessions into centered covariate rows.
//! 4. [`inference`] fits the hierarchical logistic model.
//! 5. [`anomaly`] scores unseen participants and builds ROC curves.

pub mod agents;
pub mod anomaly;
pub mod design;
mod error;
pub mod inference;
pub mod math;
pub mod paradigm;
pub mod store;

pub use error::{Error, Result};
