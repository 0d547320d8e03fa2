//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ridgenet_core::sparsify::Threshold;
use ridgenet_core::TargetName;

use crate::io::{LoadOptions, Orientation};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "RIDGENET_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "ridgenet-out";

#[derive(Debug, Parser)]
#[command(name = "ridgenet", version, about = "Ridge-penalized precision estimation and network analysis")]
pub struct Cli {
    /// Output directory [default: $RIDGENET_OUT_DIR, else ./ridgenet-out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ridge precision estimate at a fixed penalty.
    Estimate(EstimateArgs),
    /// Choose the penalty by K-fold cross-validation and estimate.
    Tune(TuneArgs),
    /// Condition-number plot over a penalty range.
    Cnplot(CnplotArgs),
    /// Sparsify a precision matrix into a network.
    Sparsify(SparsifyArgs),
    /// Node statistics and degree distribution of a sparsified network.
    Stats(PrecisionArgs),
    /// Decompose a marginal covariance into path contributions.
    Paths(PathsArgs),
    /// Girvan-Newman community detection.
    Communities(PrecisionArgs),
    /// Fused ridge estimates for several classes at fixed penalties.
    FusedEstimate(FusedEstimateArgs),
    /// Choose fused penalties by cross-validation and estimate.
    FusedTune(FusedTuneArgs),
    /// Edges present in exactly one of two networks.
    Diff(DiffArgs),
    /// Restrict two matrices to the union of their network supports.
    Union(UnionArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Estimate(_) => "estimate",
            Self::Tune(_) => "tune",
            Self::Cnplot(_) => "cnplot",
            Self::Sparsify(_) => "sparsify",
            Self::Stats(_) => "stats",
            Self::Paths(_) => "paths",
            Self::Communities(_) => "communities",
            Self::FusedEstimate(_) => "fused-estimate",
            Self::FusedTune(_) => "fused-tune",
            Self::Diff(_) => "diff",
            Self::Union(_) => "union",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Data file (CSV, or TSV by extension)
    #[arg(long)]
    pub input: PathBuf,

    /// `columns`: samples in rows; `rows`: features in rows
    #[arg(long, value_enum, default_value = "columns")]
    pub orientation: Orientation,

    /// Field delimiter, overriding the file extension
    #[arg(long)]
    pub delimiter: Option<char>,

    /// Column of class labels in the data file
    #[arg(long, conflicts_with = "class_map")]
    pub class_column: Option<String>,

    /// Two-column file mapping sample ids to classes
    #[arg(long)]
    pub class_map: Option<PathBuf>,
}

impl DataArgs {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            orientation: self.orientation,
            delimiter: self.delimiter.map(|c| c as u8),
            class_column: self.class_column.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Null,
    Dupv,
    Daie,
    Dvar,
}

impl From<Target> for TargetName {
    fn from(t: Target) -> Self {
        match t {
            Target::Null => TargetName::Null,
            Target::Dupv => TargetName::Dupv,
            Target::Daie => TargetName::Daie,
            Target::Dvar => TargetName::Dvar,
        }
    }
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Null => "null",
            Self::Dupv => "dupv",
            Self::Daie => "daie",
            Self::Dvar => "dvar",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "dupv")]
    pub target: Target,
    #[arg(long)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "dupv")]
    pub target: Target,
    /// Number of folds
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub lmin: f64,
    #[arg(long, default_value_t = 1e5)]
    pub lmax: f64,
    /// Seed of the fold assignment
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct CnplotArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "dupv")]
    pub target: Target,
    #[arg(long, default_value_t = 1e-5)]
    pub lmin: f64,
    #[arg(long, default_value_t = 1e5)]
    pub lmax: f64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Penalty to mark with a vertical line
    #[arg(long)]
    pub marker: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Lfdr,
    Absvalue,
    Top,
}

#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Minimum posterior probability of a true edge (lfdr)
    #[arg(long, required_if_eq("method", "lfdr"))]
    pub fdrcut: Option<f64>,
    /// Absolute partial-correlation cutoff (absvalue)
    #[arg(long, required_if_eq("method", "absvalue"))]
    pub cut: Option<f64>,
    /// Number of strongest edges to keep (top)
    #[arg(long, required_if_eq("method", "top"))]
    pub top: Option<usize>,
}

impl ThresholdArgs {
    pub fn threshold(&self) -> Option<Threshold> {
        Some(match self.method? {
            Method::Lfdr => Threshold::LocalFdr {
                fdr_cut: self.fdrcut.expect("required by clap"),
            },
            Method::Absvalue => Threshold::AbsValue {
                cut: self.cut.expect("required by clap"),
            },
            Method::Top => Threshold::Top {
                top: self.top.expect("required by clap"),
            },
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SparsifyArgs {
    /// Precision matrix CSV [default: <out>/precision.csv]
    #[arg(long)]
    pub precision: Option<PathBuf>,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PrecisionArgs {
    /// Sparsified precision matrix CSV [default: <out>/sparse_precision.csv]
    #[arg(long)]
    pub precision: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PathsArgs {
    /// Sparsified precision matrix CSV [default: <out>/sparse_precision.csv]
    #[arg(long)]
    pub precision: Option<PathBuf>,
    /// First endpoint: feature name or 1-based index
    #[arg(long)]
    pub from: String,
    /// Second endpoint: feature name or 1-based index
    #[arg(long)]
    pub to: String,
    /// Number of strongest paths to flag
    #[arg(long, default_value_t = 5)]
    pub nr_paths: usize,
    /// Longest path considered, in edges
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FusedEstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "dupv")]
    pub target: Target,
    /// Penalty specification JSON ({"template": [[..]], "values": {..}})
    #[arg(long, conflicts_with_all = ["ridge", "fusion"])]
    pub penalty: Option<PathBuf>,
    /// Shared ridge penalty
    #[arg(long, required_unless_present = "penalty")]
    pub ridge: Option<f64>,
    /// Shared fusion penalty
    #[arg(long, default_value_t = 0.0)]
    pub fusion: f64,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FusedTuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "dupv")]
    pub target: Target,
    /// Penalty template JSON ({"template": [[..]]}); default: one shared
    /// ridge and one shared fusion penalty
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DiffArgs {
    /// Network JSON as written by `sparsify`
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct UnionArgs {
    /// Matrix CSV (sparsified precision or partial correlations)
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}
