use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sphembed::geometry::Vec3;
use sphembed::Error;

use crate::error::{CliError, CliResult};

/// Significant digits kept for floats in metrics files.
pub const METRIC_DIGITS: usize = 9;

/// Rounds every float in `v` to [`METRIC_DIGITS`] significant digits so the
/// printed JSON does not depend on the last bits of a computation.
pub fn round_floats(v: &Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            let r: f64 = format!("{x:.prec$e}", prec = METRIC_DIGITS - 1).parse().unwrap_or(x);
            serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.iter().map(|(k, v)| (k.clone(), round_floats(v))).collect()),
        other => other.clone(),
    }
}

pub struct RunDir {
    pub dir: PathBuf,
}

impl RunDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        Ok(RunDir { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let v = serde_json::to_value(value).map_err(Error::from)?;
        let text = serde_json::to_string_pretty(&v).map_err(Error::from)?;
        self.write_text(name, &(text + "\n"))
    }

    /// Writes `metrics.json` with rounded floats and returns the text.
    pub fn write_metrics(&self, metrics: &Value) -> CliResult<String> {
        let text = serde_json::to_string_pretty(&round_floats(metrics)).map_err(Error::from)? + "\n";
        self.write_text("metrics.json", &text)?;
        Ok(text)
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| {
        CliError::Runtime(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::Runtime(Error::Format(format!("{} at `{}`: {}", path.display(), e.path(), e.inner())))
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRow {
    x: f64,
    y: f64,
    z: f64,
}

/// Points as CSV with header `x,y,z`.
pub fn points_csv(points: &[Vec3]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(PointRow { x: p.x, y: p.y, z: p.z })
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))?)
}

pub fn read_points_csv(path: &Path) -> CliResult<Vec<Vec3>> {
    let text = read_text(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize::<PointRow>()
        .enumerate()
        .map(|(i, row)| {
            row.map(|p| Vec3::new(p.x, p.y, p.z)).map_err(|e| {
                CliError::Runtime(Error::Parse {
                    line: i + 2,
                    message: format!("{}: {e}", path.display()),
                })
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub bytes: u64,
}

impl InputRecord {
    pub fn of(path: &Path) -> CliResult<Self> {
        let meta = std::fs::metadata(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(InputRecord {
            path: path.display().to_string(),
            bytes: meta.len(),
        })
    }
}

/// Record of one command invocation, written as `manifest.json`.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub inputs: Vec<InputRecord>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub config: Value,
    pub outputs: Vec<String>,
}
