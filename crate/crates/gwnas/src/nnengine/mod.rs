//! From-scratch fp32 training and evaluation engine for the cell-based CNN
//! family, plus a deterministic surrogate evaluator for exercising budget
//! and search logic without training.

pub mod adam;
pub mod evaluator;
pub mod layers;
pub mod network;
pub mod surrogate;
pub mod tensor;
pub mod train;

#[cfg(test)]
mod naive;

pub use adam::Adam;
pub use evaluator::{CachedEvaluator, Evaluator, TrainingEvaluator};
pub use layers::{backward, cross_entropy, forward_eval, forward_train, ForwardPass};
pub use network::{from_gwnn_bytes, load_gwnn, save_gwnn, to_gwnn_bytes, LayerParams, Network};
pub use surrogate::{SurrogateEvaluator, SurrogateSpec};
pub use tensor::Tensor4;
pub use train::{final_train, quick_evaluate, EvalResult, FinalTrainOutcome, TrainConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Arch(#[from] crate::archmodel::ArchError),
    #[error(transparent)]
    Data(#[from] crate::dataio::DataError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("non-finite values produced by layer {layer}")]
    NonFinite { layer: usize },
    #[error("training needs at least two classes, dataset declares {num_classes}")]
    TooFewClasses { num_classes: usize },
    #[error("batch shape does not match the topology input")]
    BatchShapeMismatch,
    #[error("invalid training configuration: {0}")]
    BadTrainConfig(String),
    #[error("weight container: {0}")]
    Container(String),
}
