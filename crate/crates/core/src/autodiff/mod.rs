//! Dense tensors, a reverse-mode tape, Adam, and parameter persistence.

mod adam;
mod graph;
mod persist;
mod tensor;

pub use adam::{AdamState, DEFAULT_LR};
pub use graph::{sigmoid, Graph, Var, LAYER_NORM_EPS};
pub use persist::{ParamFile, FORMAT_VERSION, MAGIC};
pub use tensor::Tensor;
