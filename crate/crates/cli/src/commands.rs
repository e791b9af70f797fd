// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use anyhow::Context;
use nhtd::eval::{default_grid, grid_search, loocv, metrics, Confusion, GridPoint, Sample};
use nhtd::features::{apply_stats, featurize, standardize, FeatureStats};
use nhtd::gnn::train;
use nhtd::htgen::{gen_dataset, random_host, regenerate, write_dataset, HostSpec, Manifest};
use nhtd::netlist::{parse_graph_json, write_graph_json, LabelSpec};
use nhtd::{derive_seed, seeded_rng, CellLibrary, Label, ModelConfig, Netlist, TrainedModel};
use rand::Rng as _;
use serde_json::json;

use crate::args::*;
use crate::inputs::{self, Loaded};
use crate::manifest::{default_path, Recorder};
use crate::Failure;

type Outcome = Result<String, Failure>;

/// Seed stream for hosts drawn by `generate --random-hosts` / `--host-spec`.
const HOST_STREAM: u64 = 1 << 48;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Convert(a) => convert(a),
        Command::Featurize(a) => featurize_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Detect(a) => detect(a),
        Command::Eval(a) => eval(a),
        Command::Gridsearch(a) => gridsearch(a),
        Command::Generate(a) => generate(a),
    }
}

fn seed(common: &Common) -> u64 {
    common.seed.unwrap_or(0)
}

fn finish(rec: Recorder, common: &Common, output: &Path, is_dir: bool) -> Result<(), Failure> {
    let target = common.manifest.clone().unwrap_or_else(|| default_path(output, is_dir));
    rec.write(&target)?;
    Ok(())
}

fn labels_json(args: &LabelArgs) -> serde_json::Value {
    json!({
        "label_regex": args.label_regex,
        "label_list": args.label_list.as_ref().map(|p| p.display().to_string()),
    })
}

/// Resolves a model configuration: file (or defaults), then flag overrides,
/// then the seed.
fn model_config(args: &ModelArgs, common: &Common) -> Result<ModelConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = inputs::read(p)?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de).map_err(|e| anyhow::anyhow!("model config {}: {}: {}", p.display(), e.path(), e.inner()))?
        }
        None => ModelConfig::default(),
    };
    if let Some(v) = args.model {
        cfg.layer_kind = v;
    }
    if let Some(v) = args.layers {
        cfg.num_layers = v;
    }
    if let Some(v) = args.units {
        cfg.hidden_units = v;
    }
    if let Some(v) = args.batches {
        cfg.num_batches = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.patience {
        cfg.patience = v;
    }
    if let Some(v) = args.mode {
        cfg.feature_mode = v;
    }
    if let Some(v) = args.batch_context {
        cfg.batch_context = v;
    }
    if args.fixed_batches {
        cfg.resample_each_epoch = false;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn describe(n: &Netlist) -> String {
    format!("{} nodes ({} Trojan)", n.len(), n.trojan_count())
}

fn convert(a: ConvertArgs) -> Outcome {
    let lib = inputs::library(a.common.lib.as_deref())?;
    let labels = inputs::label_spec(&a.labels)?;
    let n = inputs::netlist(&a.input, &lib, labels.as_ref())?;
    inputs::write(&a.output, &write_graph_json(&n))?;
    let wires = n.wire_edges()?.len();
    let mut rec = Recorder::new("convert", seed(&a.common));
    rec.config = json!({ "labels": labels_json(&a.labels) });
    rec.inputs = std::iter::once(a.input.clone()).chain(a.labels.label_list.clone()).chain(a.common.lib.clone()).collect();
    rec.outputs = vec![a.output.clone()];
    finish(rec, &a.common, &a.output, false)?;
    Ok(format!("convert: {}: {}, {wires} wires -> {}", n.name, describe(&n), a.output.display()))
}

fn featurize_cmd(a: FeaturizeArgs) -> Outcome {
    let lib = inputs::library(a.common.lib.as_deref())?;
    let labels = inputs::label_spec(&a.labels)?;
    let n = inputs::netlist(&a.input, &lib, labels.as_ref())?;
    let f = featurize(&n, &lib, a.mode)?;
    let fm = if a.standardize { standardize(&f.features, true)? } else { f.features };
    inputs::write(&a.output, &fm.to_json())?;
    let mut rec = Recorder::new("featurize", seed(&a.common));
    rec.config = json!({ "mode": a.mode, "standardize": a.standardize, "labels": labels_json(&a.labels) });
    rec.inputs = std::iter::once(a.input.clone()).chain(a.labels.label_list.clone()).chain(a.common.lib.clone()).collect();
    rec.outputs = vec![a.output.clone()];
    finish(rec, &a.common, &a.output, false)?;
    let note = if f.probs.converged { String::new() } else { format!(", probabilities unconverged after {} sweeps", f.probs.sweeps) };
    Ok(format!("featurize: {}: {} x {} features{note} -> {}", n.name, fm.rows(), fm.dim(), a.output.display()))
}

fn load(inputs_: &[PathBuf], common: &Common, labels: &LabelArgs, cfg: &ModelConfig) -> Result<(CellLibrary, Vec<Loaded>), Failure> {
    let lib = inputs::library(common.lib.as_deref())?;
    let spec: Option<LabelSpec> = inputs::label_spec(labels)?;
    let loaded = inputs::load_all(inputs_, &lib, spec.as_ref(), cfg.feature_mode)?;
    Ok((lib, loaded))
}

fn read_set(loaded: &[Loaded], common: &Common, labels: &LabelArgs) -> Vec<PathBuf> {
    loaded
        .iter()
        .map(|l| l.path.clone())
        .chain(labels.label_list.clone())
        .chain(common.lib.clone())
        .collect()
}

fn model_inputs(model: &ModelArgs, mut files: Vec<PathBuf>) -> Vec<PathBuf> {
    files.extend(model.config.clone());
    files
}

fn train_cmd(a: TrainArgs) -> Outcome {
    let cfg = model_config(&a.model, &a.common)?;
    let (_, loaded) = load(&a.inputs, &a.common, &a.labels, &cfg)?;
    let raw: Vec<_> = loaded.iter().map(|l| &l.featurized.features).collect();
    let stats = FeatureStats::fit(&raw)?;
    let data = loaded
        .iter()
        .map(|l| Ok((l.featurized.graph.clone(), apply_stats(&l.featurized.features, &stats)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let (model, report) = train(&data, &cfg)?;
    inputs::write(&a.output, &model.to_json())?;
    let mut outputs = vec![a.output.clone()];
    if let Some(log) = &a.loss_log {
        let mut csv = String::from("epoch,loss\n");
        for (e, l) in report.losses.iter().enumerate() {
            csv.push_str(&format!("{},{l}\n", e + 1));
        }
        inputs::write(log, &csv)?;
        outputs.push(log.clone());
    }
    let mut rec = Recorder::new("train", cfg.seed);
    rec.config = json!({ "model": cfg, "labels": labels_json(&a.labels) });
    rec.inputs = model_inputs(&a.model, read_set(&loaded, &a.common, &a.labels));
    rec.outputs = outputs;
    finish(rec, &a.common, &a.output, false)?;
    let nodes: usize = loaded.iter().map(|l| l.netlist.len()).sum();
    let trojans: usize = loaded.iter().map(|l| l.netlist.trojan_count()).sum();
    let best = match (report.best_epoch, report.best_loss()) {
        (Some(e), Some(l)) => format!("best loss {l:.6} at epoch {}", e + 1),
        _ => "no epochs run".into(),
    };
    Ok(format!(
        "train: {} netlists, {nodes} nodes ({trojans} Trojan), {} epochs, {best} -> {}",
        loaded.len(),
        report.epochs_run(),
        a.output.display()
    ))
}

fn detect(a: DetectArgs) -> Outcome {
    let lib = inputs::library(a.common.lib.as_deref())?;
    let model = TrainedModel::from_json(&inputs::read(&a.checkpoint)?).with_context(|| format!("checkpoint {}", a.checkpoint.display()))?;
    let labels = inputs::label_spec(&a.labels)?;
    let n = inputs::netlist(&a.input, &lib, labels.as_ref())?;
    let f = featurize(&n, &lib, model.config.feature_mode)?;
    let det = model.detect(&f.graph, &f.features)?;
    let mut csv = String::from("id,prediction,p_trojan\n");
    for ((cell, label), p) in n.cells.iter().zip(&det.labels).zip(&det.probs) {
        let name = if *label == Label::Trojan { "trojan" } else { "normal" };
        csv.push_str(&format!("{},{name},{}\n", cell.id, p[1]));
    }
    inputs::write(&a.output, &csv)?;
    let mut rec = Recorder::new("detect", seed(&a.common));
    rec.config = json!({ "model": model.config, "assert_f1": a.assert_f1, "labels": labels_json(&a.labels) });
    rec.inputs = [a.input.clone(), a.checkpoint.clone()].into_iter().chain(a.labels.label_list.clone()).chain(a.common.lib.clone()).collect();
    rec.outputs = vec![a.output.clone()];
    finish(rec, &a.common, &a.output, false)?;

    let mut summary = format!("detect: {}: {} of {} nodes flagged Trojan", n.name, det.trojan_count(), n.len());
    let truth: Vec<Label> = n.cells.iter().map(|c| c.label).collect();
    let m = metrics(&Confusion::from_labels(&truth, &det.labels));
    if n.trojan_count() > 0 || a.assert_f1.is_some() {
        summary.push_str(&format!(
            "; recall {:.3} precision {:.3} F1 {:.3} accuracy {:.3}",
            m.recall, m.precision, m.f1, m.accuracy
        ));
    }
    summary.push_str(&format!(" -> {}", a.output.display()));
    check_f1(a.assert_f1, m.f1, summary)
}

fn check_f1(threshold: Option<f64>, f1: f64, summary: String) -> Outcome {
    match threshold {
        Some(t) if f1 < t => Err(Failure::Assertion(format!("F1 {f1:.3} below {t} ({summary})"))),
        _ => Ok(summary),
    }
}

fn samples(loaded: &[Loaded]) -> Vec<Sample> {
    loaded
        .iter()
        .map(|l| Sample {
            name: inputs::display_name(l),
            graph: l.featurized.graph.clone(),
            features: l.featurized.features.clone(),
        })
        .collect()
}

fn eval(a: EvalArgs) -> Outcome {
    let cfg = model_config(&a.model, &a.common)?;
    let (_, loaded) = load(&a.inputs, &a.common, &a.labels, &cfg)?;
    if loaded.len() < 2 {
        return Err(Failure::Usage(format!("leave-one-out needs at least 2 netlists, got {}", loaded.len())));
    }
    let result = loocv(&samples(&loaded), &cfg, a.jobs.max(1))?;
    inputs::write(&a.output, &result.report.render(a.format))?;
    let mut rec = Recorder::new("eval", cfg.seed);
    rec.config = json!({ "model": cfg, "format": format!("{:?}", a.format).to_lowercase(), "assert_f1": a.assert_f1, "labels": labels_json(&a.labels) });
    rec.inputs = model_inputs(&a.model, read_set(&loaded, &a.common, &a.labels));
    rec.outputs = vec![a.output.clone()];
    finish(rec, &a.common, &a.output, false)?;
    let avg = result.report.average;
    let summary = format!(
        "eval: {} folds, average recall {:.3} precision {:.3} F1 {:.3} accuracy {:.3} -> {}",
        result.folds.len(),
        avg.recall,
        avg.precision,
        avg.f1,
        avg.accuracy,
        a.output.display()
    );
    check_f1(a.assert_f1, avg.f1, summary)
}

fn parse_cells(cells: &[String]) -> Result<Vec<GridPoint>, Failure> {
    if cells.is_empty() {
        return Ok(default_grid());
    }
    cells
        .iter()
        .map(|c| {
            let parts: Vec<Result<usize, _>> = c.split(':').map(str::parse).collect();
            match parts[..] {
                [Ok(num_batches), Ok(num_layers), Ok(hidden_units)] if num_batches > 0 && num_layers > 0 && hidden_units > 0 => {
                    Ok(GridPoint { num_batches, num_layers, hidden_units })
                }
                _ => Err(Failure::Usage(format!("grid cell `{c}` is not batches:layers:units with positive values"))),
            }
        })
        .collect()
}

fn gridsearch(a: GridArgs) -> Outcome {
    let cfg = model_config(&a.model, &a.common)?;
    let grid = parse_cells(&a.cells)?;
    let (_, loaded) = load(&a.inputs, &a.common, &a.labels, &cfg)?;
    if loaded.len() < 2 {
        return Err(Failure::Usage(format!("leave-one-out needs at least 2 netlists, got {}", loaded.len())));
    }
    let result = grid_search(&samples(&loaded), &grid, &cfg, a.jobs.max(1))?;
    let table: Vec<_> = result
        .table
        .iter()
        .map(|(p, m)| {
            json!({
                "num_batches": p.num_batches,
                "num_layers": p.num_layers,
                "hidden_units": p.hidden_units,
                "recall": m.recall,
                "precision": m.precision,
                "f1": m.f1,
                "accuracy": m.accuracy,
            })
        })
        .collect();
    let doc = json!({ "best": result.best, "table": table });
    inputs::write(&a.output, &format!("{}\n", serde_json::to_string_pretty(&doc).context("serializing grid result")?))?;
    let mut outputs = vec![a.output.clone()];
    if let Some(p) = &a.best_config {
        inputs::write(p, &format!("{}\n", serde_json::to_string_pretty(&result.best).context("serializing config")?))?;
        outputs.push(p.clone());
    }
    let mut rec = Recorder::new("gridsearch", cfg.seed);
    rec.config = json!({ "model": cfg, "cells": grid.iter().map(|p| format!("{}:{}:{}", p.num_batches, p.num_layers, p.hidden_units)).collect::<Vec<_>>(), "labels": labels_json(&a.labels) });
    rec.inputs = model_inputs(&a.model, read_set(&loaded, &a.common, &a.labels));
    rec.outputs = outputs;
    finish(rec, &a.common, &a.output, false)?;
    let b = &result.best;
    Ok(format!(
        "gridsearch: {} cells x {} folds, selected batches {} layers {} units {} -> {}",
        grid.len(),
        loaded.len(),
        b.num_batches,
        b.num_layers,
        b.hidden_units,
        a.output.display()
    ))
}

fn check_host_spec(s: &HostSpec) -> Result<(), Failure> {
    if s.inputs == 0 || s.outputs == 0 || s.gates == 0 {
        return Err(Failure::Usage(format!("host spec `{}` needs at least one input, gate and output", s.name)));
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Outcome {
    let lib = inputs::library(a.common.lib.as_deref())?;
    let seed = seed(&a.common);
    let mut hosts: Vec<Netlist> = Vec::new();
    let mut read = Vec::new();
    if !a.hosts.is_empty() {
        for p in inputs::expand(&a.hosts)? {
            hosts.push(inputs::netlist(&p, &lib, None)?);
            read.push(p);
        }
    }
    let mut specs: Vec<HostSpec> = Vec::new();
    if let Some(p) = &a.host_spec {
        let list: Vec<HostSpec> = serde_json::from_str(&inputs::read(p)?).with_context(|| format!("host spec {}", p.display()))?;
        specs.extend(list);
        read.push(p.clone());
    }
    if let Some(n) = a.random_hosts {
        let mut r = seeded_rng(derive_seed(seed, HOST_STREAM - 1));
        for i in 0..n {
            specs.push(HostSpec {
                name: format!("rand{i}"),
                inputs: r.random_range(8..=32),
                gates: r.random_range(400..=1200),
                flops: r.random_range(0..=24),
                outputs: r.random_range(4..=16),
            });
        }
    }
    for (i, s) in specs.iter().enumerate() {
        check_host_spec(s)?;
        hosts.push(random_host(s, &lib, &mut seeded_rng(derive_seed(seed, HOST_STREAM + i as u64))));
    }
    if hosts.is_empty() {
        return Err(Failure::Usage("no hosts: pass --hosts, --host-spec or --random-hosts".into()));
    }
    // Generation sees hosts exactly as they are written to `hosts/`.
    let hosts = hosts.iter().map(|h| parse_graph_json(&write_graph_json(h))).collect::<Result<Vec<_>, _>>()?;
    let dataset = match &a.from_manifest {
        Some(p) => {
            let m = Manifest::from_json(&inputs::read(p)?).with_context(|| format!("dataset manifest {}", p.display()))?;
            read.push(p.clone());
            regenerate(&m, &hosts, &lib, a.jobs.max(1))?
        }
        None => {
            if a.per_host == 0 {
                return Err(Failure::Usage("--per-host must be at least 1".into()));
            }
            gen_dataset(&hosts, a.per_host, seed, &lib, a.jobs.max(1))?
        }
    };
    write_dataset(&dataset, &a.output)?;
    let mut outputs = vec![a.output.join("manifest.json")];
    outputs.extend(dataset.manifest.samples.iter().map(|e| a.output.join(&e.file)));
    for h in &hosts {
        let p = a.output.join("hosts").join(format!("{}.json", h.name));
        inputs::write(&p, &write_graph_json(h))?;
        outputs.push(p);
    }
    read.extend(a.common.lib.clone());
    let mut rec = Recorder::new("generate", seed);
    rec.config = json!({
        "per_host": dataset.manifest.samples_per_host,
        "hosts": dataset.manifest.hosts,
        "host_specs": specs,
        "from_manifest": a.from_manifest.is_some(),
    });
    rec.inputs = read;
    rec.outputs = outputs;
    finish(rec, &a.common, &a.output, true)?;
    Ok(format!(
        "generate: {} samples from {} hosts, {} Trojan nodes of {} -> {}",
        dataset.samples.len(),
        dataset.manifest.hosts.len(),
        dataset.manifest.total_trojan_nodes,
        dataset.manifest.total_nodes,
        a.output.display()
    ))
}
