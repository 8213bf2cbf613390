use std::fmt;

use super::graph::{KnowledgeGraph, RelationId};

/// Co-occurrence of the two most frequent relations among multi-edge pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationCooccurrence {
    pub first: RelationId,
    pub second: RelationId,
    /// Fraction of multi-edge pairs carrying both relations.
    pub cooccurrence: f64,
    /// Among those, the fraction where the two are the only relations.
    pub exclusivity: f64,
}

/// Relation statistics over ordered `(src, dst)` pairs joined by at least two
/// distinct relations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MultiEdgeStats {
    pub multi_edge_pairs: usize,
    /// Participation fraction per relation, descending; ties by relation id.
    pub participation: Vec<(RelationId, f64)>,
    pub top_pair: Option<RelationCooccurrence>,
}

impl MultiEdgeStats {
    pub fn participation_of(&self, rel: RelationId) -> Option<f64> {
        self.participation
            .iter()
            .find(|(r, _)| *r == rel)
            .map(|&(_, f)| f)
    }

    pub fn is_empty(&self) -> bool {
        self.multi_edge_pairs == 0
    }

    pub fn display<'a>(&'a self, graph: &'a KnowledgeGraph) -> impl fmt::Display + 'a {
        DisplayStats { stats: self, graph }
    }
}

struct DisplayStats<'a> {
    stats: &'a MultiEdgeStats,
    graph: &'a KnowledgeGraph,
}

impl fmt::Display for DisplayStats<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "multi_edge_pairs={}", self.stats.multi_edge_pairs)?;
        for (rel, frac) in &self.stats.participation {
            writeln!(f, "participation.{}={:.4}", self.graph.relation_label(*rel), frac)?;
        }
        if let Some(top) = &self.stats.top_pair {
            writeln!(
                f,
                "top_pair={}+{}\ncooccurrence={:.4}\nexclusivity={:.4}",
                self.graph.relation_label(top.first),
                self.graph.relation_label(top.second),
                top.cooccurrence,
                top.exclusivity
            )?;
        }
        Ok(())
    }
}

pub fn multi_edge_relation_stats(graph: &KnowledgeGraph) -> MultiEdgeStats {
    let m = graph.relation_count();
    let mut participation = vec![0usize; m];
    // relation sets of every multi-edge pair, sorted and deduplicated
    let mut pair_sets: Vec<Vec<u32>> = Vec::new();
    let mut scratch: Vec<(u32, u32)> = Vec::new();

    for node in graph.concepts() {
        let out = graph.out_edges(node).expect("node from graph");
        if out.len() < 2 {
            continue;
        }
        scratch.clear();
        scratch.extend(out.iter().map(|e| (e.dst.0, e.rel.0)));
        scratch.sort_unstable();
        scratch.dedup();
        for group in scratch.chunk_by(|a, b| a.0 == b.0) {
            if group.len() < 2 {
                continue;
            }
            let rels: Vec<u32> = group.iter().map(|&(_, r)| r).collect();
            for &r in &rels {
                participation[r as usize] += 1;
            }
            pair_sets.push(rels);
        }
    }

    let total = pair_sets.len();
    if total == 0 {
        return MultiEdgeStats::default();
    }

    let mut ranked: Vec<(RelationId, usize)> = participation
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(r, &c)| (RelationId(r as u32), c))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let top_pair = (ranked.len() >= 2).then(|| {
        let (first, second) = (ranked[0].0, ranked[1].0);
        let both: Vec<&Vec<u32>> = pair_sets
            .iter()
            .filter(|s| s.contains(&first.0) && s.contains(&second.0))
            .collect();
        let exclusive = both.iter().filter(|s| s.len() == 2).count();
        RelationCooccurrence {
            first,
            second,
            cooccurrence: both.len() as f64 / total as f64,
            exclusivity: if both.is_empty() {
                0.0
            } else {
                exclusive as f64 / both.len() as f64
            },
        }
    });

    MultiEdgeStats {
        multi_edge_pairs: total,
        participation: ranked
            .into_iter()
            .map(|(r, c)| (r, c as f64 / total as f64))
            .collect(),
        top_pair,
    }
}
