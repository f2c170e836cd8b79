//! Composition, evaluation, and search over LLM system prompts for
//! multilingual robustness.
//!
//! The numeric modules are generic over [`scalar::Real`]; the aliases below fix
//! the scalar to `f64`.

pub mod bench;
pub mod corpus;
pub mod eval;
pub mod gateway;
pub mod io;
pub mod metrics;
pub mod optimizer;
pub mod reward;
pub mod scalar;
pub mod stats;
pub mod synthetic;
pub mod trace;

pub type MetricVector = metrics::MetricVector<f64>;
pub type NormalizationContext = metrics::NormalizationContext<f64>;
pub type OverallScoreConfig = metrics::OverallScoreConfig<f64>;
pub type BehaviorVector = trace::BehaviorVector<f64>;
pub type RewardParams = reward::RewardParams<f64>;
