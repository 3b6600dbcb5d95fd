pub mod data;
pub mod encoders;
pub mod graph;
pub mod harness;
pub mod model;
pub(crate) mod nn;
pub mod predictor;
pub mod router;
pub mod tensor;
pub use nn::Aggregator;
