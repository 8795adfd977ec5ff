//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod adam;
pub mod checkpoint;
mod graph;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig, PlateauSchedule};
pub use checkpoint::{load_params, read_params, save_params, write_params};
pub use graph::{conv1d_forward, Conv1dSpec, Evaluation, Gradients, Graph, NodeId, Op, PadMode};
pub use params::ParamStore;
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
