//! Joint sentence-level rationale extraction and classification, trained
//! with auxiliary objectives for faithfulness, data consistency and
//! confidence indication, plus the metrics that measure those properties.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for the common cases.

pub mod autodiff;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod model;
pub mod objectives;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use corpus::{Dataset, Instance, SyntheticSpec};
pub use encoder::{EncoderConfig, Vocab, WindowConfig};
pub use error::{Error, Result};
pub use evaluator::{EvalOptions, EvalReport};
pub use model::{DecodePolicy, JointModel, ModelConfig, ModelOutput};
pub use objectives::{ObjectiveConfig, Preset};
pub use scalar::Scalar;
pub use trainer::{SelectionMetric, TrainConfig, TrainOutcome};

pub type Model64 = JointModel<f64>;
pub type Model32 = JointModel<f32>;
pub type Output64 = ModelOutput<f64>;
pub type Output32 = ModelOutput<f32>;
pub type Matrix64 = tensor::Matrix<f64>;
pub type Matrix32 = tensor::Matrix<f32>;
pub type Tape64 = autodiff::Tape<f64>;
pub type Tape32 = autodiff::Tape<f32>;
