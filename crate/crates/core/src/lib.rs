pub mod diffnet;
pub mod embed;
pub mod error;
pub mod generative;
pub mod geometry;
pub mod hair;
pub mod headfit;
pub mod registration;
pub mod synth;
pub mod triangulation;

pub use error::{Error, Result};
