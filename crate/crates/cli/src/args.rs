use std::path::PathBuf;

use anyhow::{bail, ensure, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use wtc_core::accounting::WidthPolicy;
use wtc_core::reduce::{PruneSpec, QuantGrid, Rounding, ScaleChoice};
use wtc_core::report::ReportFormat;
use wtc_core::sweep::{AnalyzeConfig, DEFAULT_FC_WIDTHS};
use wtc_core::LayerKind;

#[derive(Parser, Debug)]
#[command(name = "wtc", version, about = "Prune, quantize, pack and size neural network weight tensors")]
pub struct Cli {
    /// Run every per-layer loop on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a container of planted-redundancy float32 tensors.
    Synth(SynthArgs),
    /// Magnitude-prune every float32 tensor.
    Prune(PruneArgs),
    /// Quantize every tensor onto a fixed-point grid.
    Quantize(QuantizeArgs),
    /// Prune, quantize and store every tensor in a packed format.
    Pack(PackArgs),
    /// Decode a container to raw float32/q16 tensors.
    Unpack(UnpackArgs),
    /// Per-layer sizes of every format and the compaction ratios.
    Analyze(AnalyzeArgs),
    /// SBSR size at every candidate block width.
    Sweep(SweepArgs),
    /// Sharing under truncation versus round-to-nearest.
    CompareRounding(CompareRoundingArgs),
    /// Element-wise versus vector-wise Huffman coding.
    CompareHuffman(AnalyzeArgs),
}

#[derive(Args, Debug, Clone)]
pub struct PruneFlags {
    /// Zero every weight whose magnitude is below this value.
    #[arg(long, conflicts_with = "target_sparsity")]
    pub threshold: Option<f32>,

    /// Zero the smallest-magnitude fraction of weights.
    #[arg(long)]
    pub target_sparsity: Option<f64>,
}

impl PruneFlags {
    pub fn spec(&self) -> Result<Option<PruneSpec>> {
        Ok(match (self.threshold, self.target_sparsity) {
            (Some(t), _) => Some(PruneSpec::threshold(t)?),
            (_, Some(s)) => Some(PruneSpec::target_sparsity(s)?),
            _ => None,
        })
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundingArg {
    Truncate,
    Nearest,
}

impl From<RoundingArg> for Rounding {
    fn from(r: RoundingArg) -> Self {
        match r {
            RoundingArg::Truncate => Rounding::Truncate,
            RoundingArg::Nearest => Rounding::Nearest,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct QuantFlags {
    /// Grid bit width.
    #[arg(long, default_value_t = 16)]
    pub bits: u32,

    #[arg(long, value_enum, default_value_t = RoundingArg::Truncate)]
    pub rounding: RoundingArg,

    /// Grid step: `auto` (max magnitude over the top index), `threshold`
    /// (the pruning threshold), or a positive number.
    #[arg(long, default_value = "auto", value_parser = parse_scale)]
    pub scale: ScaleChoice,
}

fn parse_scale(s: &str) -> Result<ScaleChoice, String> {
    s.parse()
}

impl QuantFlags {
    pub fn validate(&self) -> Result<()> {
        QuantGrid::new(self.bits, 1.0, self.rounding.into())?;
        if let ScaleChoice::Fixed(s) = self.scale {
            ensure!(s.is_finite() && s > 0.0, "--scale must be finite and positive, got {s}");
        }
        Ok(())
    }
}

#[derive(Args, Debug, Clone)]
pub struct LayoutFlags {
    /// Candidate block widths for fully connected layers.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FC_WIDTHS)]
    pub widths: Vec<usize>,

    #[arg(long, value_enum, default_value_t = PolicyArg::Fixed32)]
    pub width_policy: PolicyArg,

    /// Skip convolutional layers.
    #[arg(long)]
    pub fc_only: bool,
}

impl LayoutFlags {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.widths.is_empty(), "--widths needs at least one width");
        ensure!(self.widths.iter().all(|&w| w > 0), "--widths must all be positive");
        Ok(())
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyArg {
    Theoretical,
    Fixed32,
}

impl From<PolicyArg> for WidthPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Theoretical => WidthPolicy::Theoretical,
            PolicyArg::Fixed32 => WidthPolicy::Fixed32,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportArg {
    Csv,
    Json,
}

impl From<ReportArg> for ReportFormat {
    fn from(r: ReportArg) -> Self {
        match r {
            ReportArg::Csv => ReportFormat::Csv,
            ReportArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ReportFlags {
    #[arg(long, value_enum, default_value_t = ReportArg::Csv)]
    pub report: ReportArg,

    /// Report file; standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,

    /// Add the LeNet-5 layers conv1, conv2, ip1, ip2.
    #[arg(long)]
    pub lenet_shapes: bool,

    /// Extra layer as `name:kind:d0xd1x...`, kind `conv` or `fc`. Repeatable.
    #[arg(long = "layer", value_parser = parse_layer)]
    pub layers: Vec<LayerSpec>,

    /// Rows of the single planted matrix (without --lenet-shapes/--layer).
    #[arg(long, default_value_t = 64)]
    pub rows: usize,

    #[arg(long, default_value_t = 64)]
    pub cols: usize,

    /// Planted block width for fully connected layers.
    #[arg(long, default_value_t = 4)]
    pub block_width: usize,

    /// Distinct block patterns per layer.
    #[arg(long, default_value_t = 8)]
    pub unique: usize,

    /// Fraction of all-zero blocks.
    #[arg(long, default_value_t = 0.6)]
    pub sparsity: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Name of the single planted tensor.
    #[arg(long, default_value = "planted")]
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub shape: Vec<usize>,
}

fn parse_layer(s: &str) -> Result<LayerSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [name, kind, dims] = parts[..] else {
        return Err(format!("expected name:kind:shape, got `{s}`"));
    };
    let shape = dims
        .split('x')
        .map(|d| d.parse::<usize>().map_err(|e| format!("bad extent `{d}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LayerSpec {
        name: name.to_string(),
        kind: kind.parse()?,
        shape,
    })
}

#[derive(Args, Debug)]
pub struct PruneArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub prune: PruneFlags,
}

#[derive(Args, Debug)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub quant: QuantFlags,
    /// Threshold source for `--scale threshold`; nothing is pruned.
    #[command(flatten)]
    pub prune: PruneFlags,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatArg {
    Bsr,
    Sbsr,
    Ehuff,
    Vhuff,
}

#[derive(Args, Debug)]
pub struct PackArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum)]
    pub format: FormatArg,
    #[command(flatten)]
    pub prune: PruneFlags,
    #[command(flatten)]
    pub quant: QuantFlags,
    #[command(flatten)]
    pub layout: LayoutFlags,
}

#[derive(Args, Debug)]
pub struct UnpackArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub prune: PruneFlags,
    /// Run once per target sparsity (default 0.4,0.6,0.8) and concatenate.
    #[arg(
        long,
        value_delimiter = ',',
        num_args = 0..,
        default_missing_values = ["0.4", "0.6", "0.8"],
        conflicts_with_all = ["threshold", "target_sparsity"]
    )]
    pub sparsities: Option<Vec<f64>>,
    #[command(flatten)]
    pub quant: QuantFlags,
    #[command(flatten)]
    pub layout: LayoutFlags,
    #[command(flatten)]
    pub report: ReportFlags,
    /// Also write per-component accounting rows here.
    #[arg(long)]
    pub breakdown: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub prune: PruneFlags,
    #[arg(
        long,
        value_delimiter = ',',
        num_args = 0..,
        default_missing_values = ["0.4", "0.6", "0.8"],
        conflicts_with_all = ["threshold", "target_sparsity"]
    )]
    pub sparsities: Option<Vec<f64>>,
    #[command(flatten)]
    pub quant: QuantFlags,
    #[command(flatten)]
    pub layout: LayoutFlags,
    #[command(flatten)]
    pub report: ReportFlags,
}

#[derive(Args, Debug)]
pub struct CompareRoundingArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub prune: PruneFlags,
    #[command(flatten)]
    pub quant: QuantFlags,
    /// Block width for fully connected layers; conv layers use the kernel width.
    #[arg(long, default_value_t = 4)]
    pub width: usize,
    #[arg(long, value_enum, default_value_t = PolicyArg::Fixed32)]
    pub width_policy: PolicyArg,
    #[arg(long)]
    pub fc_only: bool,
    #[command(flatten)]
    pub report: ReportFlags,
}

/// Pipeline settings for one prune spec, validated before any file is read.
pub fn analyze_config(
    prune: Option<PruneSpec>,
    quant: &QuantFlags,
    layout: &LayoutFlags,
) -> Result<AnalyzeConfig> {
    quant.validate()?;
    layout.validate()?;
    Ok(AnalyzeConfig {
        prune,
        bits: quant.bits,
        rounding: quant.rounding.into(),
        scale: quant.scale,
        fc_widths: layout.widths.clone(),
        policy: layout.width_policy.into(),
        fc_only: layout.fc_only,
    })
}

/// One config per requested sparsity level, or a single config.
pub fn batch_configs(
    prune: &PruneFlags,
    sparsities: &Option<Vec<f64>>,
    quant: &QuantFlags,
    layout: &LayoutFlags,
) -> Result<Vec<AnalyzeConfig>> {
    match sparsities {
        Some(levels) => {
            if levels.is_empty() {
                bail!("--sparsities needs at least one level");
            }
            levels
                .iter()
                .map(|&s| analyze_config(Some(PruneSpec::target_sparsity(s)?), quant, layout))
                .collect()
        }
        None => Ok(vec![analyze_config(prune.spec()?, quant, layout)?]),
    }
}
