pub mod autodiff;
pub mod clustering;
pub mod data;
pub mod encoder;
pub mod error;
pub mod linalg;
pub mod pipeline;
pub mod reduce;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
