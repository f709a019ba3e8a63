//! Command-line front end.
//!
//! Exit codes: 0 success, 2 schema or usage error, 3 unknown image id,
//! 4 evaluation or solver failure, 5 dataset generation failure.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::datagen::{generate_dataset, GenParams, DEFAULT_MAX_ATTEMPTS};
use crate::error::{Error, Result};
use crate::io::{
    self, AnnotationFile, FileKind, InputDigests, MatchFile, MatchRecord, PredictionFile, ReportFile, UicFile,
    UicHeader, TOOL_VERSION, UIC_FORMAT_VERSION,
};
use crate::losses::{LossBreakdown, LossWeights};
use crate::metrics::{evaluate, ImagePredictions, MetricsConfig};
use crate::set_match::{composite_loss, optimal_assignment, pad_ground_truth};
use crate::tinynet::{self, ModelWeights, TinyNetConfig};

#[derive(Debug, Parser)]
#[command(name = "unic-kit", version, about = "Unbounded view-composition toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predictions against annotations.
    Eval(EvalArgs),
    /// Build unbounded-composition samples from full-image annotations.
    GenUic(GenUicArgs),
    /// Optimal prediction-to-view matching with per-image loss breakdowns.
    Match(MatchArgs),
    /// Run the seeded network on synthetic or supplied features.
    DemoForward(DemoForwardArgs),
    /// Check a file against its schema.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 5])]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10])]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.85, 0.90])]
    pub thresholds: Vec<f64>,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record the generation time in the report.
    #[arg(long)]
    pub stamp: bool,
}

#[derive(Debug, Args)]
pub struct GenUicArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.8])]
    pub scale_range: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.9])]
    pub visible_frac: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    pub max_attempts: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Annotation file.
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction file.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub lambda_iou: f64,
    #[arg(long, default_value_t = 2.0)]
    pub lambda_focal: f64,
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    /// Slots per image; defaults to each image's prediction count.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoForwardArgs {
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    #[arg(long, default_value_t = 384)]
    pub width: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Feature grid file (`C H W` header, little-endian f32 payload).
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub queries: usize,
    #[arg(long, default_value_t = 12)]
    pub pad_tokens: usize,
    #[arg(long, default_value = "demo")]
    pub image_id: String,
    /// Skip the sine positional embedding in the encoder.
    #[arg(long)]
    pub no_positional: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub file: PathBuf,
    /// annotations, predictions, uic, match or report; detected when absent.
    #[arg(long)]
    pub kind: Option<FileKind>,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Eval(a) => cmd_eval(a),
        Command::GenUic(a) => cmd_gen_uic(a),
        Command::Match(a) => cmd_match(a),
        Command::DemoForward(a) => cmd_demo_forward(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => io::write_bytes(path, bytes),
        None => std::io::stdout().write_all(bytes).map_err(|source| Error::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn load_with_bytes<T: serde::de::DeserializeOwned>(path: &Path, kind: FileKind) -> Result<(T, Vec<u8>)> {
    let bytes = io::read_bytes(path)?;
    let doc = io::decode(&bytes, kind, &path.display().to_string())?;
    Ok((doc, bytes))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (ann, ann_bytes): (AnnotationFile, _) = load_with_bytes(&a.annotations, FileKind::Annotations)?;
    let (pred, pred_bytes): (PredictionFile, _) = load_with_bytes(&a.predictions, FileKind::Predictions)?;
    let cfg = MetricsConfig {
        k_values: a.k.clone(),
        n_values: a.n.clone(),
        thresholds: a.thresholds.clone(),
    };
    let report = evaluate(&ann.to_eval(), &pred.images, &cfg)?;
    let mut file = ReportFile::new(
        &report,
        &cfg,
        InputDigests {
            annotations: io::sha256_hex(&ann_bytes),
            predictions: io::sha256_hex(&pred_bytes),
        },
    );
    if a.stamp {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        file.generated_at = Some(now);
    }
    emit(a.out.as_deref(), &io::to_json_bytes(&file)?)
}

fn pair(values: &[f64], flag: &str) -> Result<(f64, f64)> {
    match values {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err(Error::Config(format!("--{flag} expects `lo,hi`"))),
    }
}

pub fn cmd_gen_uic(a: &GenUicArgs) -> Result<()> {
    let params = GenParams {
        scale_range: pair(&a.scale_range, "scale-range")?,
        visible_frac: pair(&a.visible_frac, "visible-frac")?,
        max_attempts: a.max_attempts,
    };
    params.validate()?;
    let ann: AnnotationFile = io::load(&a.annotations, FileKind::Annotations)?;
    let (samples, skipped) = generate_dataset(&ann.to_full_views(), &params, a.seed)?;
    if samples.is_empty() {
        let reason = skipped
            .first()
            .map_or_else(|| "annotation file has no images".to_string(), |s| s.reason.clone());
        return Err(Error::Generation {
            image: skipped.first().map_or_else(String::new, |s| s.id.clone()),
            reason: format!(
                "no sample could be generated ({} images skipped): {reason}",
                skipped.len()
            ),
        });
    }
    for s in &skipped {
        eprintln!("skipped {}: {}", s.id, s.reason);
    }
    let file = UicFile {
        header: UicHeader {
            format_version: UIC_FORMAT_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            seed: a.seed,
            params,
        },
        samples,
        skipped,
    };
    emit(a.out.as_deref(), &io::to_json_bytes(&file)?)
}

pub fn match_images(
    gt: &AnnotationFile,
    preds: &[ImagePredictions],
    w: &LossWeights,
    n: Option<usize>,
) -> Result<MatchFile> {
    let by_id: HashMap<&str, _> = gt.images.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut ordered: Vec<&ImagePredictions> = preds.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let mut images = Vec::with_capacity(ordered.len());
    let mut total = LossBreakdown::default();
    for p in ordered {
        let record = by_id.get(p.id.as_str()).ok_or_else(|| Error::Reference(p.id.clone()))?;
        let slots_n = n.unwrap_or(p.views.len());
        if p.views.len() != slots_n {
            return Err(Error::shape(format!(
                "image `{}` has {} predictions but --n is {slots_n}",
                p.id,
                p.views.len()
            )));
        }
        let slots = pad_ground_truth(&record.views, slots_n)?;
        let assignment = optimal_assignment(&p.views, &slots, w)?;
        let breakdown = composite_loss(&p.views, &slots, &assignment, w, None)?;
        total.accumulate(&breakdown, w);
        images.push(MatchRecord {
            id: p.id.clone(),
            slots: slots_n,
            sigma: assignment.sigma,
            total_cost: assignment.total_cost,
            breakdown,
        });
    }
    Ok(MatchFile {
        tool_version: TOOL_VERSION.to_string(),
        weights: *w,
        total_cost: images.iter().map(|r| r.total_cost).sum(),
        images,
    })
}

pub fn cmd_match(a: &MatchArgs) -> Result<()> {
    let w = LossWeights::new(a.lambda_iou, a.lambda_focal, a.beta)?;
    let gt: AnnotationFile = io::load(&a.gt, FileKind::Annotations)?;
    let pred: PredictionFile = io::load(&a.pred, FileKind::Predictions)?;
    let file = match_images(&gt, &pred.images, &w, a.n)?;
    emit(a.out.as_deref(), &io::to_json_bytes(&file)?)
}

pub fn demo_predictions(a: &DemoForwardArgs) -> Result<PredictionFile> {
    let grid = match &a.features {
        Some(path) => tinynet::read_feature_file(path)?,
        None => tinynet::synth_features(a.height, a.width, a.seed)?,
    };
    let cfg = TinyNetConfig {
        in_channels: grid.channels(),
        queries: a.queries,
        pad_tokens: a.pad_tokens,
        ..TinyNetConfig::default()
    };
    let weights = ModelWeights::seeded(&cfg, a.seed)?;
    let out = tinynet::forward(&grid, &weights, !a.no_positional)?;
    Ok(PredictionFile {
        images: vec![ImagePredictions {
            id: a.image_id.clone(),
            views: out.predictions,
        }],
    })
}

pub fn cmd_demo_forward(a: &DemoForwardArgs) -> Result<()> {
    if a.features.is_none() {
        tinynet::grid_side(a.height)?;
        tinynet::grid_side(a.width)?;
    }
    let file = demo_predictions(a)?;
    emit(a.out.as_deref(), &io::to_json_bytes(&file)?)
}

pub fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let source = a.file.display().to_string();
    let value = io::parse_json(&io::read_bytes(&a.file)?, &source)?;
    let kind = match a.kind {
        Some(k) => k,
        None => io::detect_kind(&value)
            .ok_or_else(|| Error::Schema(format!("{source}: cannot tell which kind of file this is; pass --kind")))?,
    };
    io::ensure_valid(&value, kind, &source)?;
    println!("{source}: valid {kind} file");
    Ok(())
}
