//! Multi-student mutual-learning knowledge distillation for low-light
//! single-object tracking, at desk scale.

pub mod autodiff;
pub mod bbox;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod imaging;
pub mod losses;
pub mod mutual;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod tracker;

pub use bbox::BBox;
pub use error::{Error, Result};
pub use tensor::Tensor;
