//! Optimisation, data, metrics and experiment drivers.

pub mod augment;
pub mod gradcheck;
pub mod loops;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod synth;
pub mod transfer;

pub use augment::{augment, AugmentConfig};
pub use gradcheck::{gradcheck, GradcheckConfig, GradcheckReport, ParamCheck};
pub use loops::{collate_clouds, evaluate, image_batch, predict_points, train, Dataset, TrainConfig};
pub use loss::{argmax_rows, cross_entropy, IGNORE_LABEL};
pub use metrics::{ConfusionMatrix, MetricReport};
pub use optim::{sgd_step, OptimizerConfig, Schedule, SgdState};
pub use transfer::{inflated_student, pretrain_2d, run_scratch, run_transfer, PretrainConfig, TransferConfig, TransferOutcome};
