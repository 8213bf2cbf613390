use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use super::search::{Direction, Path, PathSearcher, SearchOptions};
use crate::concepts::{cartesian_pairs, extract_concepts, ConceptPair, EntailmentInstance, ExtractionConfig};
use crate::cost::CostGraph;
use crate::kg::KnowledgeGraph;
use crate::{seed, Error, Result};

/// Ordered per-pair shortest paths for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub instance_id: String,
    pub label: String,
    /// In pair order; unreachable pairs are omitted.
    pub paths: Vec<(ConceptPair, Path)>,
    pub identical_pairs: usize,
    pub unreachable_pairs: usize,
}

impl PathBundle {
    pub fn to_record(&self, graph: &KnowledgeGraph) -> BundleRecord {
        BundleRecord {
            id: self.instance_id.clone(),
            label: self.label.clone(),
            identical_pairs: self.identical_pairs,
            unreachable_pairs: self.unreachable_pairs,
            paths: self
                .paths
                .iter()
                .map(|(pair, path)| PathRecord::from_path(graph, pair, path))
                .collect(),
            features: None,
        }
    }
}

/// One line of the bundle JSONL format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleRecord {
    pub id: String,
    pub label: String,
    pub identical_pairs: usize,
    #[serde(default)]
    pub unreachable_pairs: usize,
    pub paths: Vec<PathRecord>,
    /// Optional fixed-width external feature vector fed to the classifier head.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub src: String,
    pub dst: String,
    pub nodes: Vec<String>,
    pub rels: Vec<RelStep>,
    #[serde(serialize_with = "nine_significant_digits")]
    pub cost: f64,
    pub hops: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelStep {
    pub rel: String,
    pub dir: Direction,
}

impl PathRecord {
    pub fn from_path(graph: &KnowledgeGraph, pair: &ConceptPair, path: &Path) -> Self {
        PathRecord {
            src: graph.concept_label(pair.src).to_string(),
            dst: graph.concept_label(pair.dst).to_string(),
            nodes: path
                .nodes
                .iter()
                .map(|&n| graph.concept_label(n).to_string())
                .collect(),
            rels: path
                .rels
                .iter()
                .map(|&(r, dir)| RelStep {
                    rel: graph.relation_label(r).to_string(),
                    dir,
                })
                .collect(),
            cost: path.total_cost,
            hops: path.hops(),
        }
    }
}

/// Rounds to 9 significant digits, then emits the shortest round-trip form.
pub fn round_significant(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn nine_significant_digits<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round_significant(*x))
}

/// Extracts concepts, pairs them and finds one cheapest path per pair.
pub fn contextualize_instance(
    instance: &EntailmentInstance,
    cg: &CostGraph<'_>,
    extraction: &ExtractionConfig,
    opts: &SearchOptions,
    seed: u64,
) -> Result<PathBundle> {
    let mut searcher = PathSearcher::new(cg);
    contextualize_with(&mut searcher, instance, cg, extraction, opts, seed)
}

fn contextualize_with(
    searcher: &mut PathSearcher<'_, '_>,
    instance: &EntailmentInstance,
    cg: &CostGraph<'_>,
    extraction: &ExtractionConfig,
    opts: &SearchOptions,
    seed: u64,
) -> Result<PathBundle> {
    let graph = cg.graph();
    let premise = extract_concepts(&instance.premise, graph, extraction);
    let hypothesis = extract_concepts(&instance.hypothesis, graph, extraction);
    let pairs = cartesian_pairs(&premise, &hypothesis);
    let mut bundle = PathBundle {
        instance_id: instance.id.clone(),
        label: instance.label.clone(),
        paths: Vec::with_capacity(pairs.pairs.len()),
        identical_pairs: pairs.identical,
        unreachable_pairs: 0,
    };
    for (i, pair) in pairs.pairs.iter().enumerate() {
        let pair_seed = seed::derive(seed, "pair", i as u64);
        match searcher.find(pair.src, pair.dst, opts, pair_seed)? {
            Some(path) => bundle.paths.push((*pair, path)),
            None => bundle.unreachable_pairs += 1,
        }
    }
    Ok(bundle)
}

/// Contextualizes every instance in parallel. Output order and content do
/// not depend on the number of worker threads: instance `i` is searched
/// with the sub-seed `derive(seed, "instance", i)`.
pub fn contextualize_all(
    instances: &[EntailmentInstance],
    cg: &CostGraph<'_>,
    extraction: &ExtractionConfig,
    opts: &SearchOptions,
    seed: u64,
) -> Result<Vec<PathBundle>> {
    instances
        .par_iter()
        .enumerate()
        .map_init(
            || PathSearcher::new(cg),
            |searcher, (i, inst)| {
                let inst_seed = seed::derive(seed, "instance", i as u64);
                contextualize_with(searcher, inst, cg, extraction, opts, inst_seed)
            },
        )
        .collect()
}

pub fn write_bundles<'a>(mut w: impl Write, records: impl IntoIterator<Item = &'a BundleRecord>) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads bundle JSONL; blank lines are ignored, any other parse failure is
/// an error naming the line.
pub fn read_bundles(r: impl BufRead) -> Result<Vec<BundleRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("bundle line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{build_cost_graph, CostKind};
    use crate::kg::GraphBuilder;

    #[test]
    fn rounding_keeps_nine_significant_digits() {
        assert_eq!(round_significant(2.0 / 3.0), 0.666666667);
        assert_eq!(round_significant(1.0), 1.0);
        assert_eq!(round_significant(0.0), 0.0);
        assert_eq!(round_significant(1.0 / 11f64.ln()), 0.417032391);
        assert_eq!(round_significant(123456789.123), 123456789.0);
    }

    #[test]
    fn record_json_shape() {
        let rec = BundleRecord {
            id: "x".into(),
            label: "neutral".into(),
            identical_pairs: 1,
            unreachable_pairs: 0,
            paths: vec![PathRecord {
                src: "a".into(),
                dst: "b".into(),
                nodes: vec!["a".into(), "b".into()],
                rels: vec![RelStep {
                    rel: "isa".into(),
                    dir: Direction::Backward,
                }],
                cost: 1.0 / 3.0,
                hops: 1,
            }],
            features: None,
        };
        let json = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            json,
            r#"{"id":"x","label":"neutral","identical_pairs":1,"unreachable_pairs":0,"paths":[{"src":"a","dst":"b","nodes":["a","b"],"rels":[{"rel":"isa","dir":"b"}],"cost":0.333333333,"hops":1}]}"#
        );
        let back: Vec<BundleRecord> = read_bundles(format!("{json}\n\n").as_bytes()).unwrap();
        assert_eq!(back[0].paths[0].cost, 0.333333333);
        assert!(read_bundles("{not json".as_bytes()).unwrap_err().to_string().contains("line 1"));
    }

    #[test]
    fn no_shared_concepts_gives_empty_bundle() {
        let mut b = GraphBuilder::new();
        b.add_edge("cat", "isa", "animal");
        let g = b.build();
        let cg = build_cost_graph(&g, CostKind::Dc);
        let inst = EntailmentInstance {
            id: "1".into(),
            premise: "nothing here".into(),
            hypothesis: "a cat".into(),
            label: "neutral".into(),
        };
        let bundle =
            contextualize_instance(&inst, &cg, &ExtractionConfig::default(), &SearchOptions::default(), 0)
                .unwrap();
        assert!(bundle.paths.is_empty());
        assert_eq!(bundle.unreachable_pairs, 0);
    }
}
