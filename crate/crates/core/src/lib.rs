//! Explainable AutoML for yield analysis on imbalanced manufacturing data.
//!
//! The pipeline runs ingest → impute → feature extraction → model-agnostic
//! feature selection → anomaly screening → loss-ablated classifier tuning,
//! and exports machine-readable explanations of every stage.

pub mod anomaly;
pub mod cast;
pub mod data_model;
pub mod error;
pub mod feature_factory;
pub mod hpo;
pub mod imputation;
pub mod learners;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = data_model::Dataset<f64>;
pub type Dataset32 = data_model::Dataset<f32>;
pub type FeatureMatrix = feature_factory::FeatureMatrix<f64>;
pub type FeatureMatrix32 = feature_factory::FeatureMatrix<f32>;
