//! Spherical embeddings: a code-modulated encoder onto the unit sphere and a
//! decoder back to the surface, trained from surface samples.

mod losses;
mod pair;
mod train;

pub use losses::{decoder_hessians, loss_lmks, loss_rec, loss_reg};
pub(crate) use pair::{from_rows, to_rows};
pub use pair::{truncated_normal_code, ArchConfig, EmbeddingPair, NetKind, PairGrad, CODE_DIM};
pub use train::{train_joint, train_single, TrainConfig, TrainRecord, TrainResult, SCAN_CODE, TEMPLATE_CODE};
