//! MLM pretraining, task fine-tuning, masking policy and checkpoints.

mod checkpoint;
mod config;
mod finetune;
mod masking;
mod pretrain;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, SplitInfo, FORMAT_VERSION, MAGIC};
pub use config::{MaskSplit, TrainConfig};
pub use finetune::{finetune, finetune_gradients, FinetuneOutput, TaskExample};
pub use masking::{apply_mlm_masking, plan_masking, MaskDecision, MaskFate};
pub use pretrain::{encode_lines, mlm_gradients, pretrain, window_means, BatchGradients, PretrainOutput};
