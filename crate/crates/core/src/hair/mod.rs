//! Hair strands as orthonormal Legendre coefficients of their root-relative
//! offsets, scalp texture maps of strands, and an outside-the-sphere
//! reparameterization.

mod legendre;
mod scalp;
mod strand;
mod styles;

pub use legendre::{
    decode_points, encode_points, gauss_legendre, legendre_values, uniform_params, LegendreBasis, StrandCoeffs,
    DEFAULT_DEGREE,
};
pub use scalp::{
    bake_scalp_map, sample_scalp_map, BakeOptions, BakeStats, ScalpChart, ScalpMap, Texel, DEFAULT_RESOLUTION,
    SCALP_MAP_VERSION,
};
pub use strand::{
    decode_strand, encode_strand, from_tbn, load_strands, save_strands, to_tbn, FrameTag, RootFrame, SphereCoord,
    Strand, DEFAULT_CONTROL_POINTS, INSIDE_TOLERANCE,
};
pub use styles::{synthetic_hairstyle, HairStyle};
