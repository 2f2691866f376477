pub mod arch;
pub mod checkpoint;
pub mod metrics;
pub mod predictor;
pub mod train;

pub use arch::{ArchSpec, HeadMode, LayerSpec, NUM_CLASSES};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use metrics::{accuracy_at_002, ConfusionMatrix, EvalRecord, MetricsReport};
pub use predictor::{QfModel, TrainingMeta};
pub use train::{evaluate, train, train_from_manifest, TrainConfig, TrainOutcome, ValidationSet};
