//! Variational auto-decoder plumbing, a convolutional latent-to-map decoder
//! for scalp maps, latent fitting to guide strands, PCA, and a comparison of
//! linear and nonlinear shape spaces.

mod conv;
mod hairvad;
mod latent;
mod pca;
mod shapes;

pub use conv::{ConvDecoder, ConvTape, DecoderSpec};
pub use hairvad::{
    fit_latent, reconstruction_rmse, train_vad, HairDecoder, LatentFit, LatentFitConfig, VadRecord, VadTrainConfig,
    VadTrainResult, MAX_GUIDES,
};
pub use latent::{kl_monte_carlo, standard_noise, VadLatent, HAIR_LATENT_DIM};
pub use pca::{pca_fit, PcaBasis};
pub use shapes::{
    compare_linear_nonlinear, mesh_family, train_auto_decoder, AutoDecoder, AutoDecoderConfig, ComparisonReport,
    ComparisonRow, FamilyKind, FamilySpec, MeshFamily,
};

#[cfg(test)]
mod tests;
