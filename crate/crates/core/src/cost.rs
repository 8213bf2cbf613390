//! Cost-customized copies of a knowledge graph.
//!
//! A [`CostGraph`] shares the structure of its [`KnowledgeGraph`] and adds
//! one traversal cost per edge, stored in a parallel array aligned with the
//! global edge order. Three heuristics are available:
//!
//! * `dc`: every edge costs 1.0, so cheapest paths are fewest-hop paths.
//! * `rf`: an edge leaving node `n` with relation `r` costs the fraction of
//!   `n`'s outgoing edges that carry `r`. Rarer relations at a node are cheaper.
//! * `grf`: the `rf` cost divided by the relation's inverse node frequency
//!   `ln((|N| + 1) / n_r)`, where `n_r` counts nodes with at least one
//!   outgoing `r` edge. The `+ 1` keeps the value positive for relations that
//!   occur at every node.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::kg::{self, ConceptId, KnowledgeGraph, RelationId};
use crate::{Error, Result};

pub const COST_MAGIC: &[u8; 8] = b"KGCTXCST";
pub const COST_VERSION: u32 = 1;

/// Per-node tolerance on the relation-frequency normalization identity.
pub const RF_NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CostKind {
    /// Default cost.
    Dc,
    /// Relation frequency.
    Rf,
    /// Global relation frequency.
    Grf,
}

impl CostKind {
    pub const ALL: [CostKind; 3] = [CostKind::Dc, CostKind::Rf, CostKind::Grf];

    fn tag(self) -> u8 {
        match self {
            CostKind::Dc => 0,
            CostKind::Rf => 1,
            CostKind::Grf => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(CostKind::Dc),
            1 => Ok(CostKind::Rf),
            2 => Ok(CostKind::Grf),
            t => Err(Error::Format(format!("unknown cost kind tag {t}"))),
        }
    }
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(CostKind::Dc),
            "rf" => Ok(CostKind::Rf),
            "grf" => Ok(CostKind::Grf),
            _ => Err(Error::UnknownCostKind(s.to_string())),
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostKind::Dc => "dc",
            CostKind::Rf => "rf",
            CostKind::Grf => "grf",
        })
    }
}

/// Node frequency and inverse node frequency per relation.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalRelationStats {
    pub node_count: usize,
    /// Number of nodes with at least one outgoing edge of each relation.
    pub node_frequency: Vec<usize>,
    /// `ln((node_count + 1) / node_frequency)`; infinite for relations that
    /// label no edge.
    pub inf: Vec<f64>,
}

impl GlobalRelationStats {
    pub fn inf_of(&self, rel: RelationId) -> f64 {
        self.inf[rel.index()]
    }

    /// Multiplies every INF value by `factor`, e.g. to change the log base.
    pub fn rescaled(&self, factor: f64) -> Self {
        assert!(factor > 0.0 && factor.is_finite());
        GlobalRelationStats {
            node_count: self.node_count,
            node_frequency: self.node_frequency.clone(),
            inf: self.inf.iter().map(|v| v * factor).collect(),
        }
    }
}

pub fn inverse_node_frequency(graph: &KnowledgeGraph) -> GlobalRelationStats {
    let m = graph.relation_count();
    let mut node_frequency = vec![0usize; m];
    let mut last_seen = vec![u32::MAX; m];
    for node in graph.concepts() {
        for e in &graph.edges()[graph.edge_range(node)] {
            let r = e.rel.index();
            if last_seen[r] != node.0 {
                last_seen[r] = node.0;
                node_frequency[r] += 1;
            }
        }
    }
    let n = graph.node_count() as f64;
    let inf = node_frequency
        .iter()
        .map(|&nr| {
            if nr == 0 {
                f64::INFINITY
            } else {
                ((n + 1.0) / nr as f64).ln()
            }
        })
        .collect();
    GlobalRelationStats {
        node_count: graph.node_count(),
        node_frequency,
        inf,
    }
}

/// Calls `f(edge_index, rf_cost)` for every edge.
fn for_each_rf(graph: &KnowledgeGraph, mut f: impl FnMut(usize, f64)) {
    let mut counts = vec![0u32; graph.relation_count()];
    for node in graph.concepts() {
        let range = graph.edge_range(node);
        let degree = range.len() as f64;
        let edges = &graph.edges()[range.clone()];
        for e in edges {
            counts[e.rel.index()] += 1;
        }
        for (i, e) in range.zip(edges) {
            f(i, counts[e.rel.index()] as f64 / degree);
        }
        for e in edges {
            counts[e.rel.index()] = 0;
        }
    }
}

/// A knowledge graph with one non-negative cost per edge.
#[derive(Debug, Clone)]
pub struct CostGraph<'g> {
    graph: &'g KnowledgeGraph,
    kind: CostKind,
    costs: Vec<f64>,
}

/// Min/max/mean of a cost graph's edge costs (all zero for an edgeless graph).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSummary {
    pub edges: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl fmt::Display for CostSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "edges={} min={:.6} max={:.6} mean={:.6}",
            self.edges, self.min, self.max, self.mean
        )
    }
}

pub fn build_cost_graph(graph: &KnowledgeGraph, kind: CostKind) -> CostGraph<'_> {
    match kind {
        CostKind::Dc => CostGraph {
            graph,
            kind,
            costs: vec![1.0; graph.edge_count()],
        },
        CostKind::Rf => {
            let mut costs = vec![0.0; graph.edge_count()];
            for_each_rf(graph, |i, rf| costs[i] = rf);
            CostGraph { graph, kind, costs }
        }
        CostKind::Grf => CostGraph::grf_with_stats(graph, &inverse_node_frequency(graph)),
    }
}

impl<'g> CostGraph<'g> {
    /// GRF costs computed against explicit relation statistics.
    pub fn grf_with_stats(graph: &'g KnowledgeGraph, stats: &GlobalRelationStats) -> Self {
        assert_eq!(stats.inf.len(), graph.relation_count());
        let mut costs = vec![0.0; graph.edge_count()];
        for_each_rf(graph, |i, rf| {
            costs[i] = rf / stats.inf[graph.edge(i).rel.index()];
        });
        CostGraph {
            graph,
            kind: CostKind::Grf,
            costs,
        }
    }

    /// Wraps externally supplied costs. The length must match the edge count;
    /// values are checked by [`CostGraph::validate`], not here.
    pub fn from_costs(graph: &'g KnowledgeGraph, kind: CostKind, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != graph.edge_count() {
            return Err(Error::Shape(format!(
                "{} costs for {} edges",
                costs.len(),
                graph.edge_count()
            )));
        }
        Ok(CostGraph { graph, kind, costs })
    }

    pub fn graph(&self) -> &'g KnowledgeGraph {
        self.graph
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn cost(&self, edge: usize) -> f64 {
        self.costs[edge]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub(crate) fn cost_error(&self, edge: usize, reason: &'static str) -> Error {
        let e = self.graph.edge(edge);
        Error::InvalidCost {
            edge,
            src: self.graph.concept_label(e.src).to_string(),
            rel: self.graph.relation_label(e.rel).to_string(),
            dst: self.graph.concept_label(e.dst).to_string(),
            cost: self.costs[edge],
            reason,
        }
    }

    /// Checks that every cost is finite and non-negative and, for RF graphs,
    /// that each node's distinct-relation costs sum to one.
    pub fn validate(&self) -> Result<CostSummary> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for (i, &c) in self.costs.iter().enumerate() {
            if !c.is_finite() {
                return Err(self.cost_error(i, "cost is not finite"));
            }
            if c < 0.0 {
                return Err(self.cost_error(i, "cost is negative"));
            }
            min = min.min(c);
            max = max.max(c);
            sum += c;
        }
        if self.kind == CostKind::Rf {
            for node in self.graph.concepts() {
                if let Some(first) = self.rf_normalization_violation(node) {
                    return Err(self.cost_error(
                        first,
                        "relation-frequency costs at the source node do not sum to 1",
                    ));
                }
            }
        }
        let edges = self.costs.len();
        if edges == 0 {
            return Ok(CostSummary {
                edges,
                min: 0.0,
                max: 0.0,
                mean: 0.0,
            });
        }
        Ok(CostSummary {
            edges,
            min,
            max,
            mean: sum / edges as f64,
        })
    }

    /// Sum over distinct outgoing relations of `node` of that relation's cost.
    pub fn distinct_relation_cost_sum(&self, node: ConceptId) -> f64 {
        let mut seen: Vec<RelationId> = Vec::new();
        let mut total = 0.0;
        for i in self.graph.edge_range(node) {
            let rel = self.graph.edge(i).rel;
            if !seen.contains(&rel) {
                seen.push(rel);
                total += self.costs[i];
            }
        }
        total
    }

    fn rf_normalization_violation(&self, node: ConceptId) -> Option<usize> {
        let range = self.graph.edge_range(node);
        if range.is_empty() {
            return None;
        }
        let sum = self.distinct_relation_cost_sum(node);
        ((sum - 1.0).abs() > RF_NORMALIZATION_TOLERANCE).then_some(range.start)
    }

    /// Serializes as magic, version, graph fingerprint, kind tag, edge count
    /// and the cost array as little-endian `f64`.
    pub fn write(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(COST_MAGIC)?;
        w.write_all(&COST_VERSION.to_le_bytes())?;
        w.write_all(self.graph.fingerprint())?;
        w.write_all(&[self.kind.tag()])?;
        w.write_all(&(self.costs.len() as u64).to_le_bytes())?;
        for c in &self.costs {
            w.write_all(&c.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|source| Error::Open {
            path: path.to_path_buf(),
            source,
        })?;
        self.write(file)
    }

    /// Reads a cost file bound to `graph`; a fingerprint mismatch is an error.
    pub fn read(graph: &'g KnowledgeGraph, r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let truncated = |_| Error::Format("truncated cost file".into());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != COST_MAGIC {
            return Err(Error::Format("not a cost graph file (bad magic)".into()));
        }
        let version = kg::read_u32(&mut r).map_err(truncated)?;
        if version != COST_VERSION {
            return Err(Error::Format(format!("unsupported cost file version {version}")));
        }
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash).map_err(truncated)?;
        if &hash != graph.fingerprint() {
            return Err(Error::HashMismatch {
                expected: graph.fingerprint_hex(),
                found: kg::hex(&hash),
            });
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag).map_err(truncated)?;
        let kind = CostKind::from_tag(tag[0])?;
        let count = kg::read_u64(&mut r).map_err(truncated)? as usize;
        if count != graph.edge_count() {
            return Err(Error::Format(format!(
                "cost file has {count} entries, graph has {} edges",
                graph.edge_count()
            )));
        }
        let mut costs = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf).map_err(truncated)?;
            costs.push(f64::from_le_bytes(buf));
        }
        if r.read(&mut buf)? != 0 {
            return Err(Error::Format("trailing bytes after cost array".into()));
        }
        let cg = CostGraph { graph, kind, costs };
        cg.validate()?;
        Ok(cg)
    }

    pub fn load(graph: &'g KnowledgeGraph, path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Open {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read(graph, file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::GraphBuilder;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn parses_kind_names() {
        assert_eq!("dc".parse::<CostKind>().unwrap(), CostKind::Dc);
        assert_eq!("RF".parse::<CostKind>().unwrap(), CostKind::Rf);
        assert_eq!("grf".parse::<CostKind>().unwrap(), CostKind::Grf);
        assert!(matches!(
            "tfidf".parse::<CostKind>(),
            Err(Error::UnknownCostKind(_))
        ));
    }

    #[test]
    fn rf_worked_example() {
        // n1 has outgoing edges {e1, e2, e1}
        let mut b = GraphBuilder::new();
        b.add_edge("n1", "e1", "a");
        b.add_edge("n1", "e2", "b");
        b.add_edge("n1", "e1", "c");
        let g = b.build();
        let cg = build_cost_graph(&g, CostKind::Rf);
        assert_eq!(cg.costs(), [2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(format!("{:.2}", cg.cost(0)), "0.67");
        assert_eq!(format!("{:.2}", cg.cost(1)), "0.33");
        cg.validate().unwrap();
    }

    #[test]
    fn dc_is_constant() {
        let mut b = GraphBuilder::new();
        b.add_edge("a", "r", "b");
        b.add_edge("b", "s", "c");
        let g = b.build();
        let s = build_cost_graph(&g, CostKind::Dc).validate().unwrap();
        assert_eq!((s.min, s.max, s.mean), (1.0, 1.0, 1.0));
    }

    fn ten_node_single_edge() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        b.add_edge("a", "r", "b");
        for i in 0..8 {
            b.add_node(&format!("iso{i}"));
        }
        b.build()
    }

    #[test]
    fn grf_single_edge_example() {
        let g = ten_node_single_edge();
        assert_eq!(g.node_count(), 10);
        let stats = inverse_node_frequency(&g);
        assert_eq!(stats.node_frequency, [1]);
        assert!(close(stats.inf[0], 11f64.ln(), 1e-15));
        assert!(close(stats.inf[0], 2.3979, 1e-4));
        let cg = build_cost_graph(&g, CostKind::Grf);
        assert!(close(cg.cost(0), 0.4170, 1e-4));
        let s = cg.validate().unwrap();
        assert_eq!(s.min, s.max);
        assert!(close(s.min, 1.0 / 11f64.ln(), 1e-15));
    }

    #[test]
    fn inf_ubiquitous_relation_is_finite() {
        let mut b = GraphBuilder::new();
        for (s, d) in [("a", "b"), ("b", "c"), ("c", "d"), ("d", "a")] {
            b.add_edge(s, "r", d);
        }
        let stats = inverse_node_frequency(&b.build());
        assert_eq!(stats.node_frequency, [4]);
        assert!(close(stats.inf[0], (5.0f64 / 4.0).ln(), 1e-15));
        assert!(close(stats.inf[0], 0.2231, 1e-4));
    }

    #[test]
    fn inf_counts_nodes_not_edges() {
        let mut b = GraphBuilder::new();
        b.add_edge("cat", "isa", "animal");
        b.add_edge("cat", "relatedto", "dog");
        b.add_edge("dog", "isa", "animal");
        let g = b.build();
        let isa = g.relation_id("isa").unwrap();
        let stats = inverse_node_frequency(&g);
        assert_eq!(stats.node_frequency[isa.index()], 2);
        assert!(close(stats.inf_of(isa), 2f64.ln(), 1e-15));

        let mut b = GraphBuilder::new();
        b.add_edge("cat", "isa", "animal");
        b.add_edge("cat", "relatedto", "dog");
        b.add_edge("dog", "isa", "animal");
        b.add_edge("cat", "isa", "pet");
        let g2 = b.build();
        assert_eq!(inverse_node_frequency(&g2).node_frequency[isa.index()], 2);
    }

    #[test]
    fn empty_graph_gives_empty_cost_graphs() {
        let g = GraphBuilder::new().build();
        for kind in CostKind::ALL {
            let cg = build_cost_graph(&g, kind);
            assert!(cg.costs().is_empty());
            assert_eq!(cg.validate().unwrap().edges, 0);
        }
    }

    #[test]
    fn validate_names_offending_edge() {
        let mut b = GraphBuilder::new();
        b.add_edge("a", "r", "b");
        b.add_edge("b", "s", "c");
        let g = b.build();
        let cg = CostGraph::from_costs(&g, CostKind::Dc, vec![1.0, -0.5]).unwrap();
        let err = cg.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("b -[s]-> c"), "{msg}");
        assert!(msg.contains("negative"));

        let cg = CostGraph::from_costs(&g, CostKind::Dc, vec![f64::NAN, 1.0]).unwrap();
        assert!(cg.validate().unwrap_err().to_string().contains("finite"));

        let cg = CostGraph::from_costs(&g, CostKind::Rf, vec![0.5, 1.0]).unwrap();
        assert!(cg.validate().unwrap_err().to_string().contains("sum to 1"));

        assert!(CostGraph::from_costs(&g, CostKind::Dc, vec![1.0]).is_err());
    }

    #[test]
    fn cost_file_roundtrip_and_hash_binding() {
        let mut b = GraphBuilder::new();
        b.add_edge("a", "r", "b");
        b.add_edge("a", "s", "c");
        b.add_edge("c", "r", "a");
        let g = b.build();
        let cg = build_cost_graph(&g, CostKind::Grf);
        let mut bytes = Vec::new();
        cg.write(&mut bytes).unwrap();
        let back = CostGraph::read(&g, &bytes[..]).unwrap();
        assert_eq!(back.kind(), CostKind::Grf);
        assert_eq!(back.costs(), cg.costs());

        let mut b = GraphBuilder::new();
        b.add_edge("a", "r", "b");
        b.add_edge("a", "s", "c");
        b.add_edge("c", "r", "b");
        let other = b.build();
        assert!(matches!(
            CostGraph::read(&other, &bytes[..]),
            Err(Error::HashMismatch { .. })
        ));
        assert!(matches!(
            CostGraph::read(&g, &bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
    }
}
