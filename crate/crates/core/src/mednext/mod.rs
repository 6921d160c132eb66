//! MedNeXt-style segmenter: blocks, network, losses, training, inference,
//! ensembling and the MDL1 weight file.

pub mod block;
pub mod infer;
pub mod loss;
pub mod network;
pub mod train;
pub mod weights;

pub use block::{mednext_block_forward, Block, BlockConfig};
pub use infer::{ensemble, predict, window_origins};
pub use loss::{deep_supervision_weights, dice_ce_loss, downsample_target, focal_loss, FocalParams};
pub use network::{build_network, build_network_with, LossVariant, ParamKind, SegArch, SegModel};
pub use train::{fit, prepare_case, train_segmenter, CvReport, PreparedCase, TrainPlan};
pub use weights::{load_model, save_model};
