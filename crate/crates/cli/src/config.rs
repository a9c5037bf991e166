//! Per-command JSON configs. Every key listed here is required when a config
//! file is given; nested library option blocks fill omitted fields with their
//! defaults. Without `--config` the defaults below apply.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sphembed::embed::TrainConfig;
use sphembed::generative::{DecoderSpec, LatentFitConfig, VadTrainConfig};
use sphembed::hair::BakeOptions;
use sphembed::headfit::{Fit2dConfig, Fit3dConfig, HeadScanSpec, RotationParam};
use sphembed::synth::BenchmarkSpec;
use sphembed::triangulation::{LmOptions, RefineOptions};

use crate::error::CliError;

/// Reads `path` into `T`, reporting the key path of the first problem.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage {
        message: format!("cannot read config {}: {e}", path.display()),
        path: None,
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        CliError::Usage {
            message: format!("config {}: {}", path.display(), e.inner()),
            path: Some(key),
        }
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthScanConfig {
    pub benchmark: BenchmarkSpec,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainEmbedConfig {
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriangulateConfig {
    pub solver: LmOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    pub refine: RefineOptions,
    /// Code of the surface the landmarks are constrained to.
    pub code: String,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            refine: RefineOptions::default(),
            code: sphembed::embed::SCAN_CODE.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecConfig {
    pub degree: usize,
    /// Points per decoded strand.
    pub points: usize,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig { degree: 5, points: 32 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HairSynthConfig {
    /// Icosphere depth of the hemispherical scalp chart.
    pub chart_depth: u32,
    /// Strands are rooted at texel centers of a `resolution²` grid.
    pub resolution: usize,
    pub points: usize,
    pub styles: usize,
}

impl Default for HairSynthConfig {
    fn default() -> Self {
        HairSynthConfig {
            chart_depth: 4,
            resolution: 64,
            points: 32,
            styles: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BakeConfig {
    pub chart_depth: u32,
    pub degree: usize,
    pub bake: BakeOptions,
}

impl Default for BakeConfig {
    fn default() -> Self {
        BakeConfig {
            chart_depth: 4,
            degree: 5,
            bake: BakeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub chart_depth: u32,
    /// Output map resolution; `null` keeps the stored resolution.
    pub resolution: Option<usize>,
    pub points: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            chart_depth: 4,
            resolution: None,
            points: 32,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HairFitConfig {
    pub chart_depth: u32,
    pub fit: LatentFitConfig,
}

impl Default for HairFitConfig {
    fn default() -> Self {
        HairFitConfig {
            chart_depth: 4,
            fit: LatentFitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VadTrainFileConfig {
    pub decoder: DecoderSpec,
    pub train: VadTrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthHeadConfig {
    pub head: HeadScanSpec,
    pub cameras: usize,
    pub camera_distance: f64,
    pub focal: f64,
}

impl Default for SynthHeadConfig {
    fn default() -> Self {
        SynthHeadConfig {
            head: HeadScanSpec::default(),
            cameras: 4,
            camera_distance: 4.0,
            focal: 800.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fit3dFileConfig {
    pub fit: Fit3dConfig,
    pub rotation: RotationParam,
    /// Embedding code of the scan, used by the implicit surface term.
    pub code: String,
}

impl Default for Fit3dFileConfig {
    fn default() -> Self {
        Fit3dFileConfig {
            fit: Fit3dConfig::default(),
            rotation: RotationParam::SixD,
            code: sphembed::embed::SCAN_CODE.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fit2dFileConfig {
    pub fit: Fit2dConfig,
    pub rotation: RotationParam,
}

impl Default for Fit2dFileConfig {
    fn default() -> Self {
        Fit2dFileConfig {
            fit: Fit2dConfig::default(),
            rotation: RotationParam::SixD,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Scan samples for the scan-to-mesh metric.
    pub samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { samples: 20_000 }
    }
}
