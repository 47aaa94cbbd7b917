//! Adversarial inpainter/detector networks for spotting visual irregularities.
//!
//! An inpainter learns to reconstruct normal content from heavily corrupted
//! inputs while a detector learns to tell real inputs from inpainted ones.
//! At test time, regions the inpainter changes and the detector flags are
//! reported as irregular.

pub mod data;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod mask;
pub mod models;
pub mod nn;
pub mod tensor;
pub mod training;

pub use data::{Dataset, Frame, FrameSequence, ModelInput, Sample, Split};
pub use detection::{Fusion, IrregularityMask, Thresholds};
pub use error::{AvidError, Result};
pub use evaluation::{EvalCurve, Level};
pub use mask::BinaryMask;
pub use models::{ArchConfig, Checkpoint, DetectorModel, InpainterModel, RegionGrid, ScoreGrid};
pub use tensor::Tensor;
pub use training::{LossForm, TrainConfig, TrainState};
