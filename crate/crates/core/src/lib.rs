//! Risk evaluation and minimax-deviation strategies for recognition under
//! non-random interventions, on finite (discretized) models.

pub mod document;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod model;
pub mod optimizer;
pub mod risk;
pub mod simulate;
pub mod strategies;

pub use error::{Error, Result};
pub use model::{
    FiniteObject, LearningData, LossMatrix, ModelLabel, ScalingProfile, Strategy, Weights,
};
pub use optimizer::{Solution, SolveReport, SolverConfig};
pub use risk::{RiskCurve, RiskEngine};
