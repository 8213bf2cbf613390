use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::Range;

use crate::{Error, Result};

/// Dense concept index, contiguous over `0..node_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptId(pub u32);

/// Dense relation index, contiguous over `0..relation_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

impl ConceptId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabeledEdge {
    pub src: ConceptId,
    pub rel: RelationId,
    pub dst: ConceptId,
}

/// Normalizes a surface form to vocabulary key form: trimmed, lowercased,
/// whitespace runs replaced by a single underscore.
pub fn normalize_surface(surface: &str) -> String {
    surface
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// Immutable directed labeled multigraph in CSR layout.
///
/// Outgoing edges of node `n` occupy `edges[offsets[n]..offsets[n + 1]]` in
/// build order. The global edge index is the key used by per-edge arrays
/// such as cost vectors. A reverse index (`in_edges`) lists, per node, the
/// global indices of edges pointing at it.
#[derive(Clone)]
pub struct KnowledgeGraph {
    pub(crate) nodes: Vec<String>,
    pub(crate) relations: Vec<String>,
    pub(crate) offsets: Vec<usize>,
    pub(crate) edges: Vec<LabeledEdge>,
    in_offsets: Vec<usize>,
    in_edges: Vec<u32>,
    vocab: HashMap<String, ConceptId>,
    relation_index: HashMap<String, RelationId>,
    fingerprint: [u8; 32],
}

impl fmt::Debug for KnowledgeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnowledgeGraph")
            .field("nodes", &self.nodes.len())
            .field("relations", &self.relations.len())
            .field("edges", &self.edges.len())
            .field("fingerprint", &self.fingerprint_hex())
            .finish()
    }
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.relations == other.relations
            && self.offsets == other.offsets
            && self.edges == other.edges
    }
}

impl KnowledgeGraph {
    /// Assembles a graph from already-validated CSR parts.
    pub(crate) fn from_parts(
        nodes: Vec<String>,
        relations: Vec<String>,
        offsets: Vec<usize>,
        edges: Vec<LabeledEdge>,
    ) -> Self {
        let n = nodes.len();
        let mut in_degree = vec![0usize; n + 1];
        for e in &edges {
            in_degree[e.dst.index() + 1] += 1;
        }
        for i in 0..n {
            in_degree[i + 1] += in_degree[i];
        }
        let in_offsets = in_degree;
        let mut cursor = in_offsets.clone();
        let mut in_edges = vec![0u32; edges.len()];
        for (idx, e) in edges.iter().enumerate() {
            let slot = &mut cursor[e.dst.index()];
            in_edges[*slot] = idx as u32;
            *slot += 1;
        }

        let vocab = nodes
            .iter()
            .enumerate()
            .map(|(i, label)| (label.clone(), ConceptId(i as u32)))
            .collect();
        let relation_index = relations
            .iter()
            .enumerate()
            .map(|(i, label)| (label.clone(), RelationId(i as u32)))
            .collect();

        let mut graph = KnowledgeGraph {
            nodes,
            relations,
            offsets,
            edges,
            in_offsets,
            in_edges,
            vocab,
            relation_index,
            fingerprint: [0; 32],
        };
        graph.fingerprint = super::snapshot::fingerprint(&graph);
        graph
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn concept_label(&self, id: ConceptId) -> &str {
        &self.nodes[id.index()]
    }

    pub fn relation_label(&self, id: RelationId) -> &str {
        &self.relations[id.index()]
    }

    pub fn concept_labels(&self) -> &[String] {
        &self.nodes
    }

    pub fn relation_labels(&self) -> &[String] {
        &self.relations
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relation_index.get(label).copied()
    }

    /// SHA-256 of the canonical snapshot encoding.
    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn fingerprint_hex(&self) -> String {
        hex(&self.fingerprint)
    }

    pub fn check_node(&self, node: ConceptId) -> Result<()> {
        if node.index() < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::InvalidNode(node.0))
        }
    }

    /// Looks up a surface form after normalization (case, inner whitespace).
    pub fn lookup_concept(&self, surface: &str) -> Option<ConceptId> {
        self.vocab.get(&normalize_surface(surface)).copied()
    }

    /// Looks up an already-normalized vocabulary key.
    pub fn lookup_key(&self, key: &str) -> Option<ConceptId> {
        self.vocab.get(key).copied()
    }

    /// Outgoing edges of `node` in build order.
    pub fn out_edges(&self, node: ConceptId) -> Result<&[LabeledEdge]> {
        self.check_node(node)?;
        Ok(&self.edges[self.edge_range(node)])
    }

    /// Global edge indices of the outgoing edges of `node`. Panics on an
    /// invalid id.
    pub fn edge_range(&self, node: ConceptId) -> Range<usize> {
        self.offsets[node.index()]..self.offsets[node.index() + 1]
    }

    pub fn out_degree(&self, node: ConceptId) -> usize {
        let r = self.edge_range(node);
        r.end - r.start
    }

    /// Global indices of edges whose destination is `node`.
    pub fn in_edge_indices(&self, node: ConceptId) -> &[u32] {
        &self.in_edges[self.in_offsets[node.index()]..self.in_offsets[node.index() + 1]]
    }

    pub fn edge(&self, index: usize) -> &LabeledEdge {
        &self.edges[index]
    }

    pub fn edges(&self) -> &[LabeledEdge] {
        &self.edges
    }

    /// Global index of the edge `src -[rel]-> dst`, if present.
    pub fn find_edge(&self, src: ConceptId, rel: RelationId, dst: ConceptId) -> Option<usize> {
        if src.index() >= self.nodes.len() {
            return None;
        }
        self.edge_range(src)
            .find(|&i| self.edges[i].rel == rel && self.edges[i].dst == dst)
    }

    pub fn concepts(&self) -> impl Iterator<Item = ConceptId> + '_ {
        (0..self.nodes.len() as u32).map(ConceptId)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Incremental graph construction. Concepts and relations receive ids in
/// order of first appearance; identical `(src, rel, dst)` triples collapse.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<String>,
    node_index: HashMap<String, ConceptId>,
    relations: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<LabeledEdge>,
    seen: HashSet<(u32, u32, u32)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns a concept; the label is normalized first.
    pub fn add_node(&mut self, label: &str) -> ConceptId {
        let key = normalize_surface(label);
        if let Some(&id) = self.node_index.get(&key) {
            return id;
        }
        let id = ConceptId(self.nodes.len() as u32);
        self.nodes.push(key.clone());
        self.node_index.insert(key, id);
        id
    }

    pub fn add_relation(&mut self, label: &str) -> RelationId {
        if let Some(&id) = self.relation_index.get(label) {
            return id;
        }
        let id = RelationId(self.relations.len() as u32);
        self.relations.push(label.to_string());
        self.relation_index.insert(label.to_string(), id);
        id
    }

    /// Adds an edge by label. Returns `false` if the triple was already present.
    pub fn add_edge(&mut self, src: &str, rel: &str, dst: &str) -> bool {
        let src = self.add_node(src);
        let rel = self.add_relation(rel);
        let dst = self.add_node(dst);
        self.add_edge_ids(src, rel, dst)
    }

    pub fn add_edge_ids(&mut self, src: ConceptId, rel: RelationId, dst: ConceptId) -> bool {
        assert!(src.index() < self.nodes.len() && dst.index() < self.nodes.len());
        assert!(rel.index() < self.relations.len());
        if !self.seen.insert((src.0, rel.0, dst.0)) {
            return false;
        }
        self.triples.push(LabeledEdge { src, rel, dst });
        true
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn build(self) -> KnowledgeGraph {
        let n = self.nodes.len();
        let mut offsets = vec![0usize; n + 1];
        for e in &self.triples {
            offsets[e.src.index() + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        // stable counting sort by source keeps per-node insertion order
        let mut cursor = offsets.clone();
        let mut edges = vec![
            LabeledEdge {
                src: ConceptId(0),
                rel: RelationId(0),
                dst: ConceptId(0)
            };
            self.triples.len()
        ];
        for e in self.triples {
            let slot = &mut cursor[e.src.index()];
            edges[*slot] = e;
            *slot += 1;
        }
        KnowledgeGraph::from_parts(self.nodes, self.relations, offsets, edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fixture() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        b.add_edge("cat", "isa", "animal");
        b.add_edge("cat", "relatedto", "dog");
        b.add_edge("dog", "isa", "animal");
        b.build()
    }

    #[test]
    fn fixture_counts() {
        let g = fixture();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.relation_count(), 2);
    }

    #[test]
    fn lookup_normalizes_case_and_spaces() {
        let mut b = GraphBuilder::new();
        b.add_node("ocean_waves");
        b.add_node("cat");
        let g = b.build();
        assert_eq!(g.lookup_concept("Cat"), Some(ConceptId(1)));
        assert_eq!(g.lookup_concept("ocean waves"), Some(ConceptId(0)));
        assert_eq!(g.lookup_concept("  Ocean   Waves "), Some(ConceptId(0)));
        assert_eq!(g.lookup_concept("unicorn_horn"), None);
    }

    #[test]
    fn out_edges_in_build_order() {
        let g = fixture();
        let cat = g.lookup_concept("cat").unwrap();
        let out = g.out_edges(cat).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(g.relation_label(out[0].rel), "isa");
        assert_eq!(g.concept_label(out[0].dst), "animal");
        assert_eq!(g.relation_label(out[1].rel), "relatedto");
        assert_eq!(g.concept_label(out[1].dst), "dog");

        let animal = g.lookup_concept("animal").unwrap();
        assert!(g.out_edges(animal).unwrap().is_empty());

        let total: usize = g.concepts().map(|c| g.out_edges(c).unwrap().len()).sum();
        assert_eq!(total, g.edge_count());
    }

    #[test]
    fn out_edges_rejects_invalid_id() {
        let g = fixture();
        assert!(matches!(g.out_edges(ConceptId(3)), Err(Error::InvalidNode(3))));
    }

    #[test]
    fn duplicates_collapse() {
        let mut b = GraphBuilder::new();
        assert!(b.add_edge("a", "r", "b"));
        assert!(!b.add_edge("a", "r", "b"));
        assert!(b.add_edge("a", "s", "b"));
        let g = b.build();
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn in_edges_mirror_out_edges() {
        let g = fixture();
        let animal = g.lookup_concept("animal").unwrap();
        let incoming: Vec<_> = g
            .in_edge_indices(animal)
            .iter()
            .map(|&i| g.concept_label(g.edge(i as usize).src).to_string())
            .collect();
        assert_eq!(incoming, ["cat", "dog"]);
    }

    #[test]
    fn find_edge_by_triple() {
        let g = fixture();
        let cat = g.lookup_concept("cat").unwrap();
        let dog = g.lookup_concept("dog").unwrap();
        let rel = g.relation_id("relatedto").unwrap();
        assert_eq!(g.find_edge(cat, rel, dog), Some(1));
        assert_eq!(g.find_edge(dog, rel, cat), None);
    }
}
