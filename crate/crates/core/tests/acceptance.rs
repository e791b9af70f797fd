// SPDX-License-Identifier: Apache-2.0

//! Acceptance runner: one line per criterion, non-zero exit on any failure.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nhtd::eval::{default_grid, fmt3, metrics, select_best, Confusion, GridPoint, Metrics};
use nhtd::features::{featurize, standardize, static_probabilities, FeatureStats};
use nhtd::gnn::model::GraphIndex;
use nhtd::gnn::{forward, init_params, train, Matrix};
use nhtd::htgen::{gen_dataset, random_host, HostSpec};
use nhtd::netlist::{parse_graph_json, write_graph_json};
use nhtd::sampler::trojan_sampling;
use nhtd::{CellLibrary, FeatureMatrix, FeatureMode, Label, LayerKind, ModelConfig, Netlist, TrainedModel};
use rand::Rng as _;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_metric_fixtures() -> Outcome {
    let rows = common::metric_rows();
    ensure(rows.len() >= 10, || format!("only {} fixture rows", rows.len()))?;
    for r in &rows {
        let m = metrics(&Confusion::new(r.tp, r.tn, r.fp, r.r#fn));
        let got = [fmt3(m.recall), fmt3(m.precision), fmt3(m.f1), fmt3(m.accuracy)];
        ensure(got == r.printed, || format!("{} {}: got {got:?}, printed {:?}", r.group, r.netlist, r.printed))?;
    }
    let m = metrics(&Confusion::new(9, 290, 0, 4));
    let got = [fmt3(m.recall), fmt3(m.precision), fmt3(m.f1), fmt3(m.accuracy)];
    ensure(got == ["0.692", "1.000", "0.818", "0.987"], || format!("TP 9/FN 4/FP 0/TN 290 gave {got:?}"))?;
    Ok(format!("{} rows reproduce to 3 decimals", rows.len()))
}

fn c2_sampling() -> Outcome {
    let mut r = common::rng(2);
    let mut largest = 0;
    for trial in 0..1000 {
        let nn = if trial % 10 == 0 { 100_000 } else { r.random_range(0..=100_000) };
        let nt = r.random_range(0..=500);
        let m = r.random_range(1..=64);
        largest = largest.max(nn);
        let v_t: Vec<usize> = (0..nt).map(|i| 2 * i).collect();
        let v_n: Vec<usize> = (0..nn).map(|i| if i < nt { 2 * i + 1 } else { nt + i }).collect();
        let sets = trojan_sampling(&v_t, &v_n, m, &mut r).map_err(|e| e.to_string())?;
        ensure(sets.len() == m, || format!("trial {trial}: {} sets for m={m}", sets.len()))?;
        let mut trojan = vec![false; 2 * nt + nn + 1];
        for &v in &v_t {
            trojan[v] = true;
        }
        let cap = nn.div_ceil(m);
        let mut seen = vec![false; 2 * nt + nn + 1];
        let mut covered = 0;
        for s in &sets {
            let ts = s.iter().filter(|&&v| trojan[v]).count();
            ensure(ts == nt, || format!("trial {trial}: a batch holds {ts} of {nt} Trojan nodes"))?;
            let normals = s.len() - ts;
            ensure(normals <= cap, || format!("trial {trial}: batch of {normals} normals exceeds {cap}"))?;
            for &v in s.iter().filter(|&&v| !trojan[v]) {
                ensure(!seen[v], || format!("trial {trial}: node {v} in two batches"))?;
                seen[v] = true;
                covered += 1;
            }
        }
        ensure(covered == nn, || format!("trial {trial}: {covered} of {nn} normal nodes covered"))?;
    }
    Ok(format!("1000 trials, |V_n| up to {largest}, m up to 64"))
}

fn c3_gradients() -> Outcome {
    let mut r = common::rng(3);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for kind in [LayerKind::Gat, LayerKind::Mpnn, LayerKind::Gin] {
        for _ in 0..3 {
            let g = common::random_graph(10, 1.8, &mut r);
            let x = common::random_matrix(10, 5, 1.0, &mut r);
            let cfg = ModelConfig { layer_kind: kind, num_layers: 2, hidden_units: 4, ..Default::default() };
            let p = common::random_params(&cfg, 5, 0.5, &mut r);
            let nodes: Vec<usize> = (0..10).collect();
            let targets: Vec<[f64; 2]> =
                nodes.iter().map(|&v| if g.labels()[v] == Label::Trojan { [0.0, 1.0] } else { [1.0, 0.0] }).collect();
            for (name, err) in common::gradient_check(&cfg, &p, &g, &x, &nodes, &targets, None, &mut r) {
                ensure(err <= 1e-4, || format!("{kind:?} {name}: relative error {err:e}"))?;
                worst = worst.max(err);
            }
            checked += p.scalar_count();
        }
    }
    Ok(format!("{checked} scalars across GAT/MPNN/GIN, predictor and loss; worst relative error {worst:.2e}"))
}

fn c4_oracle() -> Outcome {
    let mut r = common::rng(4);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let n = r.random_range(2..40);
        let g = common::random_graph(n, r.random_range(0.5..3.0), &mut r);
        let x = common::random_matrix(n, 8, 1.0, &mut r);
        for kind in [LayerKind::Gat, LayerKind::Mpnn, LayerKind::Gin] {
            let cfg = ModelConfig { layer_kind: kind, num_layers: 3, hidden_units: 6, ..Default::default() };
            let p = common::random_params(&cfg, 8, 0.5, &mut r);
            let f = forward(&cfg, &p, &g, &x).map_err(|e| e.to_string())?;
            let o = common::oracle_forward(&cfg, &p, &g, &x);
            let emb = f.tape.value(f.embeddings);
            let probs = f.tape.value(f.probs);
            for v in 0..n {
                for (j, want) in o.embeddings[v].iter().enumerate() {
                    worst = worst.max((emb.get(v, j) - want).abs());
                }
                for k in 0..2 {
                    worst = worst.max((probs.get(v, k) - o.probs[v][k]).abs());
                }
            }
            ensure(worst <= 1e-9, || format!("trial {trial} {kind:?}: difference {worst:e}"))?;
        }
    }
    Ok(format!("50 graphs x 3 layer kinds, max abs difference {worst:.2e}"))
}

fn c5_probabilities() -> Outcome {
    let lib = CellLibrary::default();
    let mut r = common::rng(5);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let pis = r.random_range(1..=12);
        let n = common::fanout_free_circuit(pis, &mut r);
        let p = static_probabilities(&n, &lib).map_err(|e| e.to_string())?;
        for (v, want) in common::truth_table_p1(&n).into_iter().enumerate() {
            worst = worst.max((p.p1[v] - want).abs());
        }
        ensure(worst <= 1e-9, || format!("circuit {trial} ({pis} inputs): difference {worst:e}"))?;
    }
    let tree = common::and_tree8(&lib);
    let p = static_probabilities(&tree, &lib).map_err(|e| e.to_string())?;
    let root = tree.index_of("root").ok_or("tree has no root")?;
    ensure(p.p1[root] == 0.00390625, || format!("AND-tree root p1 = {}", p.p1[root]))?;
    Ok(format!("100 fanout-free circuits, max difference {worst:.2e}; AND tree root p1 = {}", p.p1[root]))
}

fn c6_attention() -> Outcome {
    let mut r = common::rng(6);
    let mut nodes = 0;
    let mut worst: f64 = 0.0;
    while nodes < 10_000 {
        let g = common::random_graph(500, r.random_range(0.5..4.0), &mut r);
        let x = common::random_matrix(500, 10, 1.0, &mut r);
        let cfg = ModelConfig { layer_kind: LayerKind::Gat, num_layers: 2, hidden_units: 16, ..Default::default() };
        let p = common::random_params(&cfg, 10, 1.0, &mut r);
        let f = forward(&cfg, &p, &g, &x).map_err(|e| e.to_string())?;
        let gi = GraphIndex::new(&g);
        for a in &f.attention {
            let mut sums = vec![0.0; 500];
            for (k, &v) in gi.att_dst.iter().enumerate() {
                sums[v] += f.tape.value(*a).get(k, 0);
            }
            worst = sums.iter().fold(worst, |w, s| w.max((s - 1.0).abs()));
            nodes += 500;
        }
    }
    ensure(worst <= 1e-9, || format!("attention sum off by {worst:e}"))?;
    Ok(format!("{nodes} node neighborhoods, max deviation {worst:.2e}"))
}

fn c7_twins() -> Outcome {
    let lib = CellLibrary::default();
    let (netlist, a, b) = common::twin_chain(&lib);
    let mut gaps = Vec::new();
    for mode in [FeatureMode::Baseline40, FeatureMode::Netlist46] {
        let f = featurize(&netlist, &lib, mode).map_err(|e| e.to_string())?;
        let z = standardize(&f.features, true).map_err(|e| e.to_string())?;
        let cfg = ModelConfig { feature_mode: mode, seed: 7, ..Default::default() };
        let p = init_params(&cfg, mode.dim());
        let x = Matrix::from_vec(z.rows(), z.dim(), z.values().to_vec());
        let fw = forward(&cfg, &p, &f.graph, &x).map_err(|e| e.to_string())?;
        let e = fw.tape.value(fw.embeddings);
        gaps.push((0..e.cols()).map(|j| (e.get(a, j) - e.get(b, j)).abs()).fold(0.0, f64::max));
    }
    ensure(gaps[0] <= 1e-12, || format!("Baseline40 twins differ by {:e}", gaps[0]))?;
    ensure(gaps[1] >= 1e-6, || format!("Netlist46 twins differ by only {:e}", gaps[1]))?;
    Ok(format!("Baseline40 gap {:.1e}, Netlist46 gap {:.3e}", gaps[0], gaps[1]))
}

fn c8_overfit() -> Outcome {
    let lib = CellLibrary::default();
    let toy = common::overfit_toy(&lib);
    ensure(toy.len() == 20, || format!("toy graph has {} nodes", toy.len()))?;
    let f = featurize(&toy, &lib, FeatureMode::Netlist46).map_err(|e| e.to_string())?;
    let z = standardize(&f.features, true).map_err(|e| e.to_string())?;
    let cfg = ModelConfig {
        layer_kind: LayerKind::Gat,
        num_layers: 2,
        hidden_units: 16,
        lr: 0.1,
        num_batches: 1,
        max_epochs: 500,
        patience: 500,
        seed: 8,
        ..Default::default()
    };
    let (model, report) = train(&[(f.graph.clone(), z)], &cfg).map_err(|e| e.to_string())?;
    let det = model.detect(&f.graph, &f.features).map_err(|e| e.to_string())?;
    let wrong = det.labels.iter().zip(f.graph.labels()).filter(|(a, b)| a != b).count();
    let loss = report.best_loss().unwrap_or(f64::INFINITY);
    let first = report.losses.iter().position(|&l| l < 1e-2);
    ensure(loss < 1e-2, || format!("best loss {loss:.3e} after {} epochs", report.epochs_run()))?;
    ensure(wrong == 0, || format!("{wrong} of 20 nodes mislabeled"))?;
    Ok(format!("loss {loss:.2e}, first below 1e-2 at epoch {}, 20/20 nodes correct", first.map_or(0, |e| e + 1)))
}

fn hosts(count: usize, seed: u64, lib: &CellLibrary) -> Vec<Netlist> {
    let mut r = common::rng(seed);
    (0..count)
        .map(|i| {
            let spec = HostSpec {
                name: format!("host{i}"),
                inputs: r.random_range(12..=24),
                gates: r.random_range(500..=900),
                flops: r.random_range(8..=24),
                outputs: r.random_range(8..=16),
            };
            random_host(&spec, lib, &mut r)
        })
        .collect()
}

fn c9_end_to_end() -> Outcome {
    let lib = CellLibrary::default();
    let hosts = hosts(5, 90, &lib);
    let train_set = gen_dataset(&hosts, 4, 91, &lib, 1).map_err(|e| e.to_string())?;
    let test_set = gen_dataset(&hosts, 4, 92, &lib, 1).map_err(|e| e.to_string())?;
    let featurized = |d: &nhtd::htgen::Dataset| -> Result<Vec<(nhtd::Eaug, FeatureMatrix)>, String> {
        d.samples
            .iter()
            .map(|s| featurize(&s.netlist, &lib, FeatureMode::Netlist46).map(|f| (f.graph, f.features)).map_err(|e| e.to_string()))
            .collect()
    };
    let raw_train = featurized(&train_set)?;
    let raw_test = featurized(&test_set)?;
    let stats = FeatureStats::fit(&raw_train.iter().map(|(_, f)| f).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    let train_data: Vec<(nhtd::Eaug, FeatureMatrix)> = raw_train
        .into_iter()
        .map(|(g, f)| nhtd::features::apply_stats(&f, &stats).map(|z| (g, z)).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let cfg = ModelConfig {
        layer_kind: LayerKind::Gat,
        num_layers: 2,
        hidden_units: 16,
        num_batches: 5,
        max_epochs: 300,
        seed: 9,
        ..Default::default()
    };
    let (model, report) = train(&train_data, &cfg).map_err(|e| e.to_string())?;
    let mut total = Confusion::new(0, 0, 0, 0);
    for (g, f) in &raw_test {
        let det = model.detect(g, f).map_err(|e| e.to_string())?;
        let c = Confusion::from_labels(g.labels(), &det.labels);
        total = Confusion::new(total.tp + c.tp, total.tn + c.tn, total.fp + c.fp, total.r#fn + c.r#fn);
    }
    let m = metrics(&total);
    let detail = format!(
        "{} train / {} test samples, {} epochs; test nodes TP {} FP {} FN {} TN {}: F1 {:.3} (recall {:.3}, precision {:.3})",
        train_set.samples.len(),
        test_set.samples.len(),
        report.epochs_run(),
        total.tp,
        total.fp,
        total.r#fn,
        total.tn,
        m.f1,
        m.recall,
        m.precision
    );
    ensure(m.f1 >= 0.80, || detail.clone())?;
    Ok(detail)
}

fn c10_stealth() -> Outcome {
    let lib = CellLibrary::default();
    let hosts = hosts(10, 100, &lib);
    let d = gen_dataset(&hosts, 10, 101, &lib, 1).map_err(|e| e.to_string())?;
    ensure(d.samples.len() == 100, || format!("{} samples", d.samples.len()))?;
    let mut worst: f64 = 0.0;
    for s in &d.samples {
        ensure(s.stealth.is_stealthy(), || format!("{}: dormant mismatch at {:?}", s.name(), s.stealth.mismatches))?;
        let frac = s.netlist.trojan_count() as f64 / s.netlist.len() as f64;
        ensure(frac < 0.05, || format!("{}: Trojan fraction {frac:.4}", s.name()))?;
        ensure(s.netlist.trojan_count() == s.spec.node_count(), || format!("{}: label count mismatch", s.name()))?;
        worst = worst.max(frac);
    }
    let exhaustive = d.samples.iter().filter(|s| s.stealth.exhaustive).count();
    Ok(format!("100 samples dormant-equivalent ({exhaustive} exhaustive), largest Trojan fraction {worst:.4}"))
}

fn c11_round_trips() -> Outcome {
    let lib = CellLibrary::default();
    let toy = common::overfit_toy(&lib);
    let text = write_graph_json(&toy);
    let back = parse_graph_json(&text).map_err(|e| e.to_string())?;
    ensure(write_graph_json(&back) == text, || "graph JSON changed on re-serialization".into())?;
    ensure(back == toy.canonical(), || "parsed graph differs from canonical form".into())?;

    let f = featurize(&toy, &lib, FeatureMode::Netlist46).map_err(|e| e.to_string())?;
    let fm_text = f.features.to_json();
    let fm_back = FeatureMatrix::from_json(&fm_text).map_err(|e| e.to_string())?;
    ensure(fm_back == f.features && fm_back.to_json() == fm_text, || "feature JSON round trip differs".into())?;

    let z = standardize(&f.features, true).map_err(|e| e.to_string())?;
    let cfg = ModelConfig { num_layers: 2, hidden_units: 8, num_batches: 2, max_epochs: 10, seed: 11, ..Default::default() };
    let (model, _) = train(&[(f.graph.clone(), z)], &cfg).map_err(|e| e.to_string())?;
    let ckpt = model.to_json();
    let one = TrainedModel::from_json(&ckpt).map_err(|e| e.to_string())?;
    let two = TrainedModel::from_json(&ckpt).map_err(|e| e.to_string())?;
    ensure(one.to_json() == ckpt, || "checkpoint changed on re-serialization".into())?;
    ensure(one.params == model.params, || "checkpoint weights differ".into())?;
    let d1 = one.detect(&f.graph, &f.features).map_err(|e| e.to_string())?;
    let d2 = two.detect(&f.graph, &f.features).map_err(|e| e.to_string())?;
    ensure(d1.probs == d2.probs && d1.labels == d2.labels, || "detect differs across loads".into())?;
    Ok(format!("graph, feature and checkpoint JSON byte-identical; detect identical across loads ({} bytes)", ckpt.len()))
}

fn c12_grid_rule() -> Outcome {
    let grid = default_grid();
    ensure(grid.len() == 28, || format!("default grid has {} cells", grid.len()))?;
    let distinct: BTreeSet<GridPoint> = grid.iter().copied().collect();
    ensure(distinct.len() == 28, || "default grid has duplicates".into())?;
    ensure(grid.windows(2).all(|w| w[0] < w[1]), || "default grid is not in lexicographic order".into())?;

    let m = |recall: f64, precision: f64, f1: f64| Metrics { recall, precision, f1, accuracy: 0.0 };
    let uniform = |r: f64, p: f64, f: f64| (0..28).map(|i| (i, m(r, p, f))).collect::<Vec<_>>();
    type Case = (&'static str, Vec<(usize, Metrics)>, usize);
    let mut cases: Vec<Case> = vec![
        ("recall+precision beat F1", vec![(0, m(0.9, 0.9, 0.5)), (1, m(0.8, 0.8, 0.9))], 0),
        ("recall+F1 beat precision", vec![(3, m(0.9, 0.5, 0.8)), (2, m(0.5, 0.9, 0.7))], 3),
        ("one metric each, F1 decides", vec![(5, m(0.9, 0.1, 0.5)), (4, m(0.1, 0.9, 0.6)), (6, m(0.5, 0.5, 0.7))], 6),
        ("tied recall is nobody's", vec![(1, m(0.9, 0.9, 0.7)), (0, m(0.9, 0.8, 0.8))], 0),
        ("identical rows, smallest point", vec![(7, m(0.5, 0.5, 0.5)), (3, m(0.5, 0.5, 0.5)), (5, m(0.5, 0.5, 0.5))], 3),
        ("F1 tie after split", vec![(9, m(0.9, 0.5, 0.7)), (8, m(0.5, 0.9, 0.7)), (10, m(0.6, 0.6, 0.6))], 8),
        ("single row", vec![(13, m(0.1, 0.2, 0.3))], 13),
        ("two metrics with worst F1", vec![(20, m(0.99, 0.99, 0.1)), (2, m(0.5, 0.5, 0.9))], 20),
        ("two metrics over smaller point", vec![(27, m(0.9, 0.9, 0.6)), (0, m(0.8, 0.8, 0.6))], 27),
        (
            "tiny margins, one metric each",
            vec![(4, m(0.8000001, 0.7, 0.7)), (3, m(0.8, 0.7000001, 0.7)), (5, m(0.79, 0.69, 0.7000001))],
            5,
        ),
        ("precision+F1", vec![(11, m(0.5, 0.95, 0.9)), (12, m(0.96, 0.5, 0.6))], 11),
        ("three-way recall tie", vec![(14, m(0.9, 0.5, 0.5)), (15, m(0.9, 0.6, 0.6)), (16, m(0.9, 0.4, 0.4))], 15),
        ("only F1 separates", vec![(0, m(0.5, 0.5, 0.5)), (1, m(0.5, 0.5, 0.5)), (25, m(0.5, 0.5, 0.6))], 25),
        ("all zero", vec![(18, m(0.0, 0.0, 0.0)), (17, m(0.0, 0.0, 0.0)), (19, m(0.0, 0.0, 0.0))], 17),
        ("F1-only winner", vec![(6, m(0.9, 0.1, 0.2)), (7, m(0.1, 0.9, 0.2)), (8, m(0.2, 0.2, 0.3))], 8),
        ("F1 tie with recall winner", vec![(22, m(0.9, 0.6, 0.7)), (21, m(0.6, 0.6, 0.7)), (23, m(0.5, 0.9, 0.6))], 21),
        ("sweep", vec![(26, m(0.9, 0.9, 0.9)), (0, m(0.8, 0.8, 0.8))], 26),
        ("two metrics, third tied", vec![(10, m(0.9, 0.9, 0.8)), (9, m(0.8, 0.8, 0.8))], 10),
    ];
    let mut full = uniform(0.5, 0.5, 0.5);
    full[17].1 = m(0.6, 0.6, 0.1);
    cases.push(("full grid, one two-metric cell", full, 17));
    let mut full = uniform(0.5, 0.5, 0.7);
    full[24].1 = m(0.6, 0.5, 0.7);
    full[2].1 = m(0.5, 0.6, 0.7);
    cases.push(("full grid, all F1 tied", full, 0));
    ensure(cases.len() == 20, || format!("{} cases", cases.len()))?;
    for (name, rows, want) in &cases {
        let table: Vec<(GridPoint, Metrics)> = rows.iter().map(|&(i, mm)| (grid[i], mm)).collect();
        let got = select_best(&table).map_err(|e| e.to_string())?;
        ensure(got == grid[*want], || format!("{name}: selected {got:?}, expected {:?}", grid[*want]))?;
    }
    Ok("20 constructed tables select the hand-derived winner; default grid has 28 cells".into())
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        (1, "metric fixtures", Duration::from_secs(1), c1_metric_fixtures),
        (2, "trojan sampling invariants", Duration::from_secs(10), c2_sampling),
        (3, "gradient correctness", Duration::from_secs(30), c3_gradients),
        (4, "layer oracle equivalence", Duration::from_secs(10), c4_oracle),
        (5, "static-probability oracle", Duration::from_secs(60), c5_probabilities),
        (6, "attention normalization", Duration::from_secs(5), c6_attention),
        (7, "twin-node separation", Duration::from_secs(5), c7_twins),
        (8, "overfit sanity", Duration::from_secs(60), c8_overfit),
        (9, "synthetic end-to-end", Duration::from_secs(300), c9_end_to_end),
        (10, "generator stealth", Duration::from_secs(120), c10_stealth),
        (11, "format round-trips", Duration::from_secs(5), c11_round_trips),
        (12, "grid-search rule", Duration::from_secs(1), c12_grid_rule),
    ];
    let only: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= limit => (true, d),
            Ok(d) => (false, format!("{d}; exceeded time limit")),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {id:>2} {} {name} [{:.2}s / {}s]: {detail}",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
