pub mod dataset;
pub mod eval;
pub mod fixtures;
pub mod gbdt;
pub mod hcluster;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod shap;
pub mod stats;
pub mod synth;
