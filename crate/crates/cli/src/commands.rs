use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use wtc_core::container::{self, Encoding};
use wtc_core::reduce::{prune, quantize, PruneSpec, QuantGrid};
use wtc_core::report::{self, ReportFormat, ReportRow};
use wtc_core::sweep::{analyze_container, compare_rounding, sweep_container, LayerReport};
use wtc_core::synth::{lenet_preset, synth_layer, synth_planted};
use wtc_core::{DType, DenseTensor, Exec, LayerKind};

use crate::args::*;

fn load(path: &Path) -> Result<Vec<DenseTensor>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    container::read_container(&bytes).with_context(|| format!("loading {}", path.display()))
}

fn save(tensors: &[DenseTensor], path: &Path) -> Result<()> {
    emit(&container::write_container(tensors)?, Some(path))
}

fn emit(bytes: &[u8], path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn emit_rows<R: ReportRow>(rows: &[R], flags: &ReportFlags) -> Result<()> {
    let bytes = report::render(rows, ReportFormat::from(flags.report))?;
    emit(&bytes, flags.output.as_deref())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut tensors = Vec::new();
    if a.lenet_shapes {
        tensors = lenet_preset(a.block_width, a.unique, a.sparsity, a.seed)?;
    }
    for (i, l) in a.layers.iter().enumerate() {
        let seed = a.seed + (tensors.len() + i) as u64;
        let t = synth_layer(&l.name, &l.shape, l.kind, a.block_width, a.unique, a.sparsity, seed)
            .with_context(|| format!("layer `{}`", l.name))?;
        tensors.push(t);
    }
    if !a.lenet_shapes && a.layers.is_empty() {
        let t = synth_planted(a.rows, a.cols, a.block_width, a.unique, a.sparsity, a.seed)?;
        tensors.push(t.renamed(a.name.clone()));
    }
    save(&tensors, &a.output)
}

pub fn prune_cmd(a: &PruneArgs) -> Result<()> {
    let Some(spec) = a.prune.spec()? else {
        bail!("prune needs --threshold or --target-sparsity");
    };
    let out = load(&a.input)?
        .iter()
        .map(|t| prune(t, spec).with_context(|| format!("pruning `{}`", t.name())))
        .collect::<Result<Vec<_>>>()?;
    save(&out, &a.output)
}

pub fn quantize_cmd(a: &QuantizeArgs) -> Result<()> {
    a.quant.validate()?;
    let spec = a.prune.spec()?;
    let out = load(&a.input)?
        .iter()
        .map(|t| {
            let scale = a.quant.scale.resolve(t, spec, a.quant.bits)?;
            let grid = QuantGrid::new(a.quant.bits, scale, a.quant.rounding.into())?;
            quantize(t, &grid).map_err(anyhow::Error::from)
        })
        .collect::<Result<Vec<_>>>()?;
    save(&out, &a.output)
}

pub fn pack(a: &PackArgs) -> Result<()> {
    let cfg = analyze_config(a.prune.spec()?, &a.quant, &a.layout)?;
    let tensors = load(&a.input)?;
    let mut reduced = Vec::with_capacity(tensors.len());
    let mut encodings = Vec::with_capacity(tensors.len());
    for t in &tensors {
        let (q, _) = cfg.reduce(t).with_context(|| format!("reducing `{}`", t.name()))?;
        let width = cfg.width_for(t, &q.to_q16_matrix()?)?;
        encodings.push(match a.format {
            FormatArg::Bsr => Encoding::Bsr { block_w: width },
            FormatArg::Sbsr => Encoding::Sbsr { block_w: width },
            FormatArg::Ehuff => Encoding::ElemHuffman,
            FormatArg::Vhuff => Encoding::VecHuffman { width },
        });
        reduced.push(q);
    }
    let entries: Vec<_> = reduced.iter().zip(encodings).collect();
    emit(&container::write_container_with(&entries)?, Some(&a.output))
}

pub fn unpack(a: &UnpackArgs) -> Result<()> {
    save(&load(&a.input)?, &a.output)
}

fn run_analyze(a: &AnalyzeArgs, exec: Exec) -> Result<Vec<LayerReport>> {
    let configs = batch_configs(&a.prune, &a.sparsities, &a.quant, &a.layout)?;
    let tensors = load(&a.input)?;
    let mut reports = Vec::new();
    for cfg in &configs {
        reports.extend(analyze_container(&tensors, cfg, exec)?);
    }
    Ok(reports)
}

pub fn analyze(a: &AnalyzeArgs, exec: Exec) -> Result<()> {
    let reports = run_analyze(a, exec)?;
    if let Some(path) = &a.breakdown {
        let rows = report::accounting_rows(&reports);
        emit(&report::render(&rows, a.report.report.into())?, Some(path))?;
    }
    emit_rows(&report::summary_rows(&reports, a.layout.width_policy.into()), &a.report)
}

pub fn compare_huffman(a: &AnalyzeArgs, exec: Exec) -> Result<()> {
    let reports = run_analyze(a, exec)?;
    if let Some(path) = &a.breakdown {
        let rows = report::accounting_rows(&reports);
        emit(&report::render(&rows, a.report.report.into())?, Some(path))?;
    }
    emit_rows(&report::huffman_rows(&reports), &a.report)
}

pub fn sweep_cmd(a: &SweepArgs, exec: Exec) -> Result<()> {
    let configs = batch_configs(&a.prune, &a.sparsities, &a.quant, &a.layout)?;
    let tensors = load(&a.input)?;
    let mut results = Vec::new();
    for cfg in &configs {
        results.extend(sweep_container(&tensors, cfg, exec)?);
    }
    emit_rows(&report::sweep_rows(&results), &a.report)
}

pub fn compare_rounding_cmd(a: &CompareRoundingArgs, exec: Exec) -> Result<()> {
    a.quant.validate()?;
    if a.width == 0 {
        bail!("--width must be positive");
    }
    let spec: Option<PruneSpec> = a.prune.spec()?;
    let tensors = load(&a.input)?;
    let selected: Vec<&DenseTensor> = tensors
        .iter()
        .filter(|t| !a.fc_only || t.layer_kind() == LayerKind::FullyConnected)
        .filter(|t| {
            let float = t.dtype() == DType::F32;
            if !float {
                eprintln!("skipping `{}`: rounding comparison needs float32 weights", t.name());
            }
            float
        })
        .collect();
    let rows = wtc_core::par::try_map(exec, &selected, |t| {
        let scale = a.quant.scale.resolve(t, spec, a.quant.bits)?;
        let grid = QuantGrid::new(a.quant.bits, scale, a.quant.rounding.into())?;
        let pruned = match spec {
            Some(s) => prune(t, s)?,
            None => (*t).clone(),
        };
        let width = match t.layer_kind() {
            LayerKind::Convolutional => wtc_core::flatten_to_matrix(t)?.1,
            LayerKind::FullyConnected => a.width,
        };
        compare_rounding(&pruned, &grid, width, a.width_policy.into())
            .with_context(|| format!("layer `{}`", t.name()))
    })?;
    emit_rows(&report::rounding_rows(&rows), &a.report)
}
