//! Articulated head proxy driven by linear blend skinning over linear shape
//! and expression spaces, with 3D scan fitting and 2D landmark fitting.

mod bench;
mod fit;
mod model;

pub use bench::{synthetic_head_scan, HeadScan, HeadScanSpec};
pub use fit::{
    fit_2d, fit_3d, scan_to_mesh_error, Fit2dConfig, Fit2dResult, Fit3dConfig, Fit3dProblem, Fit3dResult, ScanToMesh,
    SurfaceTerm,
};
pub use model::{HeadParams, Joint, LandmarkRow, Posed, RiggedTemplate, RotationParam, TEMPLATE_VERSION};

#[cfg(test)]
mod tests;
