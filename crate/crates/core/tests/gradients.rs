// SPDX-License-Identifier: Apache-2.0

mod common;

use common::{gradient_check, random_graph, random_matrix, random_params, rng};
use nhtd::{Label, LayerKind, ModelConfig};
use rand::Rng as _;

const TOL: f64 = 1e-4;
const KINDS: [LayerKind; 3] = [LayerKind::Gat, LayerKind::Mpnn, LayerKind::Gin];

fn targets(g: &nhtd::Eaug, nodes: &[usize]) -> Vec<[f64; 2]> {
    nodes.iter().map(|&v| if g.labels()[v] == Label::Trojan { [0.0, 1.0] } else { [1.0, 0.0] }).collect()
}

fn assert_within(kind: LayerKind, worst: &std::collections::BTreeMap<String, f64>) {
    for (name, err) in worst {
        assert!(*err <= TOL, "{kind:?} {name}: relative error {err:e}");
    }
}

#[test]
fn every_scalar_matches_central_differences_at_small_size() {
    let mut r = rng(21);
    for kind in KINDS {
        for trial in 0..3 {
            let n = 6 + trial;
            let g = random_graph(n, 1.8, &mut r);
            let x = random_matrix(n, 4, 1.0, &mut r);
            let cfg = ModelConfig { layer_kind: kind, num_layers: 2, hidden_units: 3, ..Default::default() };
            let p = random_params(&cfg, 4, 0.5, &mut r);
            let nodes: Vec<usize> = (0..n).filter(|_| r.random_bool(0.7)).chain([0]).collect();
            let worst = gradient_check(&cfg, &p, &g, &x, &nodes, &targets(&g, &nodes), None, &mut r);
            assert_within(kind, &worst);
        }
    }
}

#[test]
fn sampled_scalars_match_central_differences_at_full_size() {
    let mut r = rng(22);
    for kind in KINDS {
        let n = 40;
        let g = random_graph(n, 2.0, &mut r);
        let x = random_matrix(n, 46, 1.0, &mut r);
        let cfg = ModelConfig { layer_kind: kind, ..Default::default() };
        let p = random_params(&cfg, 46, 0.25, &mut r);
        let nodes: Vec<usize> = (0..n).collect();
        let worst = gradient_check(&cfg, &p, &g, &x, &nodes, &targets(&g, &nodes), Some(12), &mut r);
        assert_eq!(worst.len(), p.len());
        assert_within(kind, &worst);
    }
}
