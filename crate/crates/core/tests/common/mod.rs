//! Shared fixtures and brute-force oracles for the integration and
//! acceptance tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use kgctx_core::cost::CostGraph;
use kgctx_core::grn::{GrnModel, ModelConfig, TokenVocab};
use kgctx_core::kg::{ConceptId, GraphBuilder, KnowledgeGraph};
use kgctx_core::paths::{BundleRecord, Direction, PathRecord, RelStep};
use rand::Rng;

/// Nodes `n0..n{n-1}` (all present even when isolated), relations `r0..`.
pub fn graph_from_edges(nodes: usize, edges: &[(usize, usize, usize)]) -> KnowledgeGraph {
    let mut b = GraphBuilder::new();
    for i in 0..nodes {
        b.add_node(&format!("n{i}"));
    }
    for &(u, r, v) in edges {
        b.add_edge(&format!("n{}", u % nodes), &format!("r{r}"), &format!("n{}", v % nodes));
    }
    b.build()
}

pub fn random_graph(rng: &mut impl Rng, max_nodes: usize, max_rels: usize, max_edges: usize) -> KnowledgeGraph {
    let n = rng.random_range(2..=max_nodes);
    let rels = rng.random_range(1..=max_rels);
    let m = rng.random_range(0..=max_edges);
    let edges: Vec<_> = (0..m)
        .map(|_| (rng.random_range(0..n), rng.random_range(0..rels), rng.random_range(0..n)))
        .collect();
    graph_from_edges(n, &edges)
}

/// `(neighbor, edge index)` steps out of `u`, including reversed in-edges
/// when `undirected`.
fn steps(g: &KnowledgeGraph, u: ConceptId, undirected: bool) -> Vec<(ConceptId, usize)> {
    let mut out: Vec<_> = g.edge_range(u).map(|i| (g.edge(i).dst, i)).collect();
    if undirected {
        for &i in g.in_edge_indices(u) {
            out.push((g.edge(i as usize).src, i as usize));
        }
    }
    out
}

/// Minimum cost over every simple path with at most `max_hops` edges,
/// found by exhaustive enumeration.
pub fn brute_force_min_cost(
    cg: &CostGraph<'_>,
    src: ConceptId,
    dst: ConceptId,
    undirected: bool,
    max_hops: usize,
) -> Option<f64> {
    fn dfs(
        cg: &CostGraph<'_>,
        u: ConceptId,
        dst: ConceptId,
        undirected: bool,
        hops_left: usize,
        cost: f64,
        visited: &mut Vec<bool>,
        best: &mut Option<f64>,
    ) {
        if u == dst {
            if best.is_none_or(|b| cost < b) {
                *best = Some(cost);
            }
            return;
        }
        if hops_left == 0 {
            return;
        }
        for (v, e) in steps(cg.graph(), u, undirected) {
            if visited[v.index()] {
                continue;
            }
            visited[v.index()] = true;
            dfs(cg, v, dst, undirected, hops_left - 1, cost + cg.cost(e), visited, best);
            visited[v.index()] = false;
        }
    }
    let mut visited = vec![false; cg.graph().node_count()];
    visited[src.index()] = true;
    let mut best = None;
    dfs(cg, src, dst, undirected, max_hops, 0.0, &mut visited, &mut best);
    best
}

pub fn bfs_hops(g: &KnowledgeGraph, src: ConceptId, dst: ConceptId, undirected: bool) -> Option<usize> {
    let mut dist = vec![usize::MAX; g.node_count()];
    dist[src.index()] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        if u == dst {
            return Some(dist[u.index()]);
        }
        for (v, _) in steps(g, u, undirected) {
            if dist[v.index()] == usize::MAX {
                dist[v.index()] = dist[u.index()] + 1;
                queue.push_back(v);
            }
        }
    }
    None
}

/// Worked-example edges (waves -> surf -> wave -> ocean) plus longer detours.
pub const WAVES_ASSERTIONS: &str = "\
/a/1\t/r/CausesDesire\t/c/en/waves\t/c/en/surf\t{}
/a/2\t/r/IsA\t/c/en/surf\t/c/en/wave\t{}
/a/3\t/r/PartOf\t/c/en/wave\t/c/en/ocean\t{}
/a/4\t/r/RelatedTo\t/c/en/waves\t/c/en/water\t{}
/a/5\t/r/RelatedTo\t/c/en/water\t/c/en/sea\t{}
/a/6\t/r/RelatedTo\t/c/en/sea\t/c/en/salt\t{}
/a/7\t/r/RelatedTo\t/c/en/salt\t/c/en/ocean\t{}
/a/8\t/r/RelatedTo\t/c/en/wind\t/c/en/winds\t{}
/a/9\t/r/CausesDesire\t/c/en/wind\t/c/en/caused\t{}
/a/10\t/r/RelatedTo\t/c/en/causes\t/c/en/caused\t{}
/a/11\t/r/AtLocation\t/c/en/wind\t/c/en/ocean\t{}
";

pub const WAVES_INSTANCES: &str = r#"{"id":"w1","premise":"Waves are caused by wind","hypothesis":"Winds causes most ocean waves","label":"entailment"}
{"id":"w2","premise":"The surf is rough","hypothesis":"Wind over the sea","label":"neutral"}
{"id":"w3","premise":"Salt water","hypothesis":"ocean","label":"contradiction"}
"#;

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        embedding_dim: 8,
        token_hidden: 8,
        pair_hidden: 8,
        ..ModelConfig::default()
    }
}

pub fn record(id: &str, label: &str, paths: &[&[&str]]) -> BundleRecord {
    BundleRecord {
        id: id.into(),
        label: label.into(),
        identical_pairs: 0,
        unreachable_pairs: 0,
        paths: paths
            .iter()
            .map(|rels| {
                let nodes: Vec<String> = (0..=rels.len()).map(|i| format!("c{i}")).collect();
                PathRecord {
                    src: nodes[0].clone(),
                    dst: nodes[rels.len()].clone(),
                    nodes,
                    rels: rels
                        .iter()
                        .map(|r| RelStep {
                            rel: r.to_string(),
                            dir: Direction::Forward,
                        })
                        .collect(),
                    cost: rels.len() as f64,
                    hops: rels.len(),
                }
            })
            .collect(),
        features: None,
    }
}

/// Label recoverable from a single cue relation among shared noise.
pub fn separable_bundles(n: usize) -> Vec<BundleRecord> {
    let cue = ["entails", "contradicts", "unrelated"];
    let labels = ["entailment", "contradiction", "neutral"];
    (0..n)
        .map(|i| {
            let c = i % 3;
            let noise = ["isa", "partof", "atlocation"][(i / 3) % 3];
            record(&i.to_string(), labels[c], &[&[noise, cue[c]], &[noise]])
        })
        .collect()
}

pub fn model_for(data: &[BundleRecord], config: ModelConfig, seed: u64) -> GrnModel {
    let vocab = TokenVocab::from_bundles(data, config.mode);
    GrnModel::new(config, vocab, seed).expect("valid config")
}

/// Worst relative error between analytic and central-difference gradients
/// over every parameter, with a `1e-6` floor on the denominator.
pub fn gradient_check(model: &mut GrnModel, data: &[BundleRecord], dropout: bool, seed: u64, step: f64) -> (f64, String) {
    let batch: Vec<_> = data.iter().map(|r| model.encode(r, true).unwrap()).collect();
    let (_, grads) = model.loss_and_grads(&batch, dropout, seed).unwrap();
    let d = model.config.embedding_dim;
    let mut analytic: Vec<Vec<f64>> = vec![vec![0.0; model.vocab.len() * d]];
    for (row, g) in &grads.embedding {
        analytic[0][row * d..(row + 1) * d].copy_from_slice(g.as_slice().unwrap());
    }
    analytic.extend(grads.dense_tensors().into_iter().map(|(_, t, _)| t.to_vec()));

    let names: Vec<String> = model.weights.tensors().into_iter().map(|(n, _, _)| n).collect();
    let mut worst = (0.0f64, String::new());
    for (ti, name) in names.iter().enumerate() {
        for i in 0..analytic[ti].len() {
            let nudge = |m: &mut GrnModel, delta: f64| m.weights.tensors_mut()[ti].1[i] += delta;
            nudge(model, step);
            let up = model.loss_and_grads(&batch, dropout, seed).unwrap().0;
            nudge(model, -2.0 * step);
            let down = model.loss_and_grads(&batch, dropout, seed).unwrap().0;
            nudge(model, step);
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[ti][i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if err > worst.0 {
                worst = (err, format!("{name}[{i}]"));
            }
        }
    }
    worst
}
