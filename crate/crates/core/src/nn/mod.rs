//! Minimal CNN engine: batched layers with explicit backward passes, Adam,
//! a linear learning-rate schedule and a binary checkpoint format.

pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod optim;
mod real;
mod tensor;

pub use layers::{Activation, Pool};
pub use model::{Model, ModelConfig, ModelParams};
pub use optim::{adam_step, lr_factor, AdamState, LinearSchedule, ScheduleUnit};
pub use real::{Precision, Real};
pub use tensor::Tensor;
