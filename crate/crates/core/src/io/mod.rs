//! JSON file formats shared by the command-line tools.
//!
//! Every document is checked by [`validate`] before it is decoded, so schema
//! problems surface as a list of JSON paths rather than a single serde
//! message. Output floats are rounded to 9 significant digits and written
//! as pretty JSON with a trailing newline; identical inputs give identical
//! bytes.

mod validate;

pub use validate::{detect_kind, validate, Violation};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::datagen::{FullViewAnnotation, GenParams, Skipped, UicSample};
use crate::error::{Error, Result};
use crate::losses::{LossBreakdown, LossWeights};
use crate::metrics::{ImageAnnotations, ImagePredictions, MetricsConfig, MetricsReport};
use crate::views::AnnotatedView;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const UIC_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FileKind {
    Annotations,
    Predictions,
    Uic,
    Match,
    Report,
}

impl FileKind {
    pub const ALL: [FileKind; 5] = [
        FileKind::Annotations,
        FileKind::Predictions,
        FileKind::Uic,
        FileKind::Match,
        FileKind::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FileKind::Annotations => "annotations",
            FileKind::Predictions => "predictions",
            FileKind::Uic => "uic",
            FileKind::Match => "match",
            FileKind::Report => "report",
        }
    }
}

impl fmt::Display for FileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FileKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        FileKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown file kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub views: Vec<AnnotatedView>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub images: Vec<AnnotationRecord>,
}

impl AnnotationFile {
    pub fn to_eval(&self) -> Vec<ImageAnnotations> {
        self.images
            .iter()
            .map(|r| ImageAnnotations {
                id: r.id.clone(),
                views: r.views.clone(),
            })
            .collect()
    }

    pub fn to_full_views(&self) -> Vec<FullViewAnnotation> {
        self.images
            .iter()
            .map(|r| FullViewAnnotation {
                image_id: r.id.clone(),
                width: r.width,
                height: r.height,
                views: r.views.clone(),
            })
            .collect()
    }

    pub fn from_full_views(corpus: &[FullViewAnnotation]) -> Self {
        Self {
            images: corpus
                .iter()
                .map(|f| AnnotationRecord {
                    id: f.image_id.clone(),
                    width: f.width,
                    height: f.height,
                    views: f.views.clone(),
                })
                .collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&AnnotationRecord> {
        self.images.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub images: Vec<ImagePredictions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UicHeader {
    pub format_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub params: GenParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UicFile {
    pub header: UicHeader,
    pub samples: Vec<UicSample>,
    pub skipped: Vec<Skipped>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub id: String,
    pub slots: usize,
    pub sigma: Vec<usize>,
    pub total_cost: f64,
    pub breakdown: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchFile {
    pub tool_version: String,
    pub weights: LossWeights,
    pub total_cost: f64,
    pub images: Vec<MatchRecord>,
}

/// SHA-256 digests of the evaluated files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigests {
    pub annotations: String,
    pub predictions: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub tool_version: String,
    pub config: MetricsConfig,
    /// Keyed `K/N@eps`.
    pub acc: BTreeMap<String, f64>,
    pub mean_iou: f64,
    pub mean_disp: f64,
    pub image_count: usize,
    pub inputs: InputDigests,
    /// Unix seconds, present only when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
}

impl ReportFile {
    pub fn new(report: &MetricsReport, config: &MetricsConfig, inputs: InputDigests) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            config: config.clone(),
            acc: report.acc.iter().map(|e| (e.key(), e.value)).collect(),
            mean_iou: report.mean_iou,
            mean_disp: report.mean_disp,
            image_count: report.image_count,
            inputs,
            generated_at: None,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses JSON text, reporting syntax errors with line and column.
pub fn parse_json(bytes: &[u8], source: &str) -> Result<Value> {
    serde_json::from_slice(bytes).map_err(|e| {
        Error::Schema(format!(
            "{source}: malformed JSON at line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    })
}

/// Checks `value` against `kind` and returns the violations as one error.
pub fn ensure_valid(value: &Value, kind: FileKind, source: &str) -> Result<()> {
    let violations = validate(value, kind);
    if violations.is_empty() {
        return Ok(());
    }
    let listed: Vec<String> = violations.iter().map(ToString::to_string).collect();
    Err(Error::Schema(format!(
        "{source} is not a valid {kind} file:\n  {}",
        listed.join("\n  ")
    )))
}

/// Parses, validates and decodes a document of the given kind.
pub fn decode<T: DeserializeOwned>(bytes: &[u8], kind: FileKind, source: &str) -> Result<T> {
    let value = parse_json(bytes, source)?;
    ensure_valid(&value, kind, source)?;
    serde_json::from_value(value).map_err(|e| Error::Schema(format!("{source}: {e}")))
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: FileKind) -> Result<T> {
    decode(&read_bytes(path)?, kind, &path.display().to_string())
}

/// Rounds `x` to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            if let Some(r) = serde_json::Number::from_f64(round_sig9(x)) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Deterministic pretty JSON with rounded floats and a trailing newline.
pub fn to_json_bytes<T: Serialize>(doc: &T) -> Result<Vec<u8>> {
    let mut value = serde_json::to_value(doc).map_err(|e| Error::Schema(e.to_string()))?;
    round_floats(&mut value);
    let mut out = serde_json::to_vec_pretty(&value).map_err(|e| Error::Schema(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}
