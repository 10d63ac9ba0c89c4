//! Command-line surface: `run`, `eval`, `synth` and `overlay`.

// `!(x > y)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod eval;
mod overlay;
mod run;
mod synth;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use courtpose_core::data::{DataError, EpipolarFeature, PipelineConfig};
use courtpose_core::synth::SynthError;
use serde::Serialize;

pub use eval::cmd_eval;
pub use overlay::cmd_overlay;
pub use run::{cmd_run, RunManifest};
pub use synth::{cmd_synth, read_labels, LabelRecord};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Parse,
    Validation,
    Other,
}

/// A failure with its exit-code class.
#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn parse(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Parse, message: message.into() }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Validation, message: message.into() }
    }

    pub fn other(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Other, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Parse => EXIT_PARSE,
            ErrorKind::Validation => EXIT_VALIDATION,
            ErrorKind::Other => EXIT_OTHER,
        }
    }

    /// One-line JSON error record for stderr.
    pub fn record(&self) -> String {
        serde_json::json!({ "error": self.kind, "exit_code": self.exit_code(), "message": self.message }).to_string()
    }

    fn context(self, what: &str) -> Self {
        Self { message: format!("{what}: {}", self.message), ..self }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Parse { .. } | DataError::Io(_) => CliError::parse(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::validation(e.to_string())
    }
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::other(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::other(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::other(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureArg {
    Dense,
    Sparse,
    None,
}

impl From<FeatureArg> for EpipolarFeature {
    fn from(f: FeatureArg) -> Self {
        match f {
            FeatureArg::Dense => EpipolarFeature::DenseMesh,
            FeatureArg::Sparse => EpipolarFeature::SparseKeypoints,
            FeatureArg::None => EpipolarFeature::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Sportcenter,
    HumanM3,
}

/// Threshold sources shared by `run` and `eval`; flags win over the file.
#[derive(Debug, Clone, clap::Args)]
pub struct ConfigArgs {
    /// TOML pipeline configuration; unspecified keys take preset values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Threshold preset used when no config file is given
    #[arg(long, value_enum, default_value = "sportcenter")]
    pub preset: Preset,
    #[arg(long, value_enum)]
    pub epipolar_feature: Option<FeatureArg>,
    /// Skip the bounding-box reprojection filter
    #[arg(long)]
    pub no_reproj_filter: bool,
    #[arg(long)]
    pub mesh_stride: Option<usize>,
    /// Keep the two-view point whenever the weighted re-fit loses an inlier
    #[arg(long)]
    pub strict_refit: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let preset = match self.preset {
            Preset::Sportcenter => PipelineConfig::sportcenter(),
            Preset::HumanM3 => PipelineConfig::human_m3(),
        };
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
                let at = |e: courtpose_core::data::DataError| CliError::from(e).context(&path.display().to_string());
                // parse alone first so errors point at lines of the user's file
                PipelineConfig::from_toml(&text).map_err(at)?;
                let user: toml::Table = toml::from_str(&text).map_err(|e| CliError::parse(e.to_string()))?;
                let mut merged = toml::Table::try_from(&preset).map_err(|e| CliError::other(e.to_string()))?;
                merged.extend(user);
                merged.try_into().map_err(|e: toml::de::Error| CliError::parse(e.to_string()))?
            }
            None => preset,
        };
        if let Some(f) = self.epipolar_feature {
            config.epipolar_feature = f.into();
        }
        if self.no_reproj_filter {
            config.reprojection_filter_enabled = false;
        }
        if let Some(s) = self.mesh_stride {
            config.mesh_vertex_stride = s;
        }
        if self.strict_refit {
            config.strict_refit = true;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Parser)]
#[command(name = "courtpose", version, about = "Multi-view multi-person 3D pose reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct 3D poses from per-view detections
    Run {
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// Pose document (JSON lines, one frame per line)
        #[arg(long)]
        output: PathBuf,
        /// Run manifest; defaults to `<output>.manifest.json`
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        /// Frames processed concurrently
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Skip malformed frame records instead of aborting
        #[arg(long)]
        lenient: bool,
    },
    /// Score predictions against ground truth
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Joint mapping; identity over the predicted joints when absent
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a synthetic scene: calibration, detections, ground truth and labels
    Synth {
        /// Scene spec (TOML); defaults apply when absent
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Degradation spec (TOML); clean rendering when absent
        #[arg(long)]
        degradation: Option<PathBuf>,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reproject poses into every view as JSON and SVG
    Overlay {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Also draw, in every other view, epipolar lines of the joints seen from this view
        #[arg(long)]
        epipolar_from: Option<String>,
    },
}

/// Runs a parsed command; status lines go to stdout, warnings to stderr.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { calibration, detections, output, manifest, config, workers, lenient } => {
            let config = config.resolve()?;
            let manifest_path = manifest.unwrap_or_else(|| {
                let mut p = output.clone().into_os_string();
                p.push(".manifest.json");
                PathBuf::from(p)
            });
            let m = cmd_run(&calibration, &detections, &config, &output, &manifest_path, workers, lenient)?;
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} frames, {} poses; pairs {} -> {} -> {}",
                m.frames.len(),
                m.frames.iter().map(|f| f.poses).sum::<usize>(),
                m.totals.pairs_total,
                m.totals.pairs_after_a,
                m.totals.pairs_after_b
            );
            Ok(())
        }
        Command::Eval { predictions, ground_truth, mapping, report, config } => {
            let config = config.resolve()?;
            let r = cmd_eval(&predictions, &ground_truth, mapping.as_deref(), &report, config.fp_threshold_mm)?;
            println!("{}", courtpose_core::metrics::format_table_row(&r));
            Ok(())
        }
        Command::Synth { scene, degradation, output_dir, seed } => {
            let files = cmd_synth(scene.as_deref(), degradation.as_deref(), &output_dir, seed)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::Overlay { predictions, calibration, output, epipolar_from } => {
            let notes = cmd_overlay(&predictions, &calibration, &output, epipolar_from.as_deref())?;
            for n in notes {
                eprintln!("note: {n}");
            }
            Ok(())
        }
    }
}
