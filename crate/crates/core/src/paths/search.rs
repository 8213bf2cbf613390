use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cost::CostGraph;
use crate::kg::{ConceptId, KnowledgeGraph, RelationId};
use crate::{seed, Error, Result};

/// Traversal direction of one path step relative to the stored edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "f")]
    Forward,
    #[serde(rename = "b")]
    Backward,
}

/// A path `nodes[0] -rels[0]- nodes[1] ... nodes[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<ConceptId>,
    pub rels: Vec<(RelationId, Direction)>,
    pub total_cost: f64,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.rels.len()
    }

    /// Re-checks every step against the graph and the recomputed cost sum
    /// against `total_cost` (absolute tolerance 1e-9).
    pub fn verify(&self, cg: &CostGraph<'_>) -> Result<()> {
        let g = cg.graph();
        if self.nodes.len() != self.rels.len() + 1 {
            return Err(Error::Shape(format!(
                "path with {} nodes and {} relations",
                self.nodes.len(),
                self.rels.len()
            )));
        }
        let mut sum = 0.0;
        for (i, &(rel, dir)) in self.rels.iter().enumerate() {
            let (a, b) = (self.nodes[i], self.nodes[i + 1]);
            g.check_node(a)?;
            g.check_node(b)?;
            let edge = match dir {
                Direction::Forward => g.find_edge(a, rel, b),
                Direction::Backward => g.find_edge(b, rel, a),
            };
            let Some(edge) = edge else {
                return Err(Error::Shape(format!("step {i} of path is not an edge of the graph")));
            };
            sum += cg.cost(edge);
        }
        if (sum - self.total_cost).abs() > 1e-9 {
            return Err(Error::Shape(format!(
                "path cost {} does not match recomputed {}",
                self.total_cost, sum
            )));
        }
        Ok(())
    }
}

/// How `max_hops` interacts with the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HopLimit {
    /// Find the unconstrained cheapest path, drop it if it is too long.
    #[default]
    PostFilter,
    /// Cheapest path among those with at most `max_hops` edges.
    Constrained,
}

impl FromStr for HopLimit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "post-filter" | "filter" => Ok(HopLimit::PostFilter),
            "constrained" => Ok(HopLimit::Constrained),
            other => Err(Error::Config(format!(
                "unknown hop limit mode `{other}` (expected post-filter or constrained)"
            ))),
        }
    }
}

/// Choice among equally cheap paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Fewest hops, then the lexicographically smallest
    /// `(relation, node, direction)` step sequence.
    #[default]
    Deterministic,
    /// Fewest hops, then a seeded random choice at every step.
    Seeded,
}

impl FromStr for TieBreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic" | "lex" => Ok(TieBreak::Deterministic),
            "seeded" | "random" => Ok(TieBreak::Seeded),
            other => Err(Error::Config(format!(
                "unknown tie-break mode `{other}` (expected deterministic or seeded)"
            ))),
        }
    }
}

impl fmt::Display for HopLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HopLimit::PostFilter => "post-filter",
            HopLimit::Constrained => "constrained",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub max_hops: usize,
    /// Allow traversing edges against their direction at the same cost.
    pub undirected: bool,
    pub hop_limit: HopLimit,
    pub tie_break: TieBreak,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            max_hops: 3,
            undirected: true,
            hop_limit: HopLimit::PostFilter,
            tie_break: TieBreak::Deterministic,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Label {
    cost: f64,
    hops: u32,
    settled: bool,
    on_optimal: bool,
}

trait LabelStore {
    fn get(&self, state: u64) -> Option<&Label>;
    fn get_mut(&mut self, state: u64) -> Option<&mut Label>;
    fn insert(&mut self, state: u64, label: Label);
}

/// Dense labels reset in O(1) with a generation counter.
struct DenseLabels {
    labels: Vec<Label>,
    stamp: Vec<u32>,
    generation: u32,
}

impl DenseLabels {
    fn new(states: usize) -> Self {
        DenseLabels {
            labels: vec![
                Label {
                    cost: 0.0,
                    hops: 0,
                    settled: false,
                    on_optimal: false
                };
                states
            ],
            stamp: vec![0; states],
            generation: 0,
        }
    }

    fn reset(&mut self) {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.fill(0);
            self.generation = 1;
        }
    }
}

impl LabelStore for DenseLabels {
    fn get(&self, state: u64) -> Option<&Label> {
        let s = state as usize;
        (self.stamp[s] == self.generation).then(|| &self.labels[s])
    }

    fn get_mut(&mut self, state: u64) -> Option<&mut Label> {
        let s = state as usize;
        (self.stamp[s] == self.generation).then(|| &mut self.labels[s])
    }

    fn insert(&mut self, state: u64, label: Label) {
        let s = state as usize;
        self.stamp[s] = self.generation;
        self.labels[s] = label;
    }
}

impl LabelStore for HashMap<u64, Label> {
    fn get(&self, state: u64) -> Option<&Label> {
        HashMap::get(self, &state)
    }

    fn get_mut(&mut self, state: u64) -> Option<&mut Label> {
        HashMap::get_mut(self, &state)
    }

    fn insert(&mut self, state: u64, label: Label) {
        HashMap::insert(self, state, label);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    cost: f64,
    hops: u32,
    state: u64,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.hops.cmp(&self.hops))
            .then(other.state.cmp(&self.state))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One traversal step out of a node.
#[derive(Debug, Clone, Copy)]
struct Step {
    rel: RelationId,
    next: ConceptId,
    dir: Direction,
    edge: usize,
}

fn for_each_step(
    g: &KnowledgeGraph,
    node: ConceptId,
    undirected: bool,
    mut f: impl FnMut(Step) -> Result<()>,
) -> Result<()> {
    for edge in g.edge_range(node) {
        let e = g.edge(edge);
        f(Step {
            rel: e.rel,
            next: e.dst,
            dir: Direction::Forward,
            edge,
        })?;
    }
    if undirected {
        for &edge in g.in_edge_indices(node) {
            let e = g.edge(edge as usize);
            f(Step {
                rel: e.rel,
                next: e.src,
                dir: Direction::Backward,
                edge: edge as usize,
            })?;
        }
    }
    Ok(())
}

/// Steps that arrive at `node`, as `(predecessor, edge)` pairs.
fn for_each_arrival(g: &KnowledgeGraph, node: ConceptId, undirected: bool, mut f: impl FnMut(ConceptId, usize)) {
    for &edge in g.in_edge_indices(node) {
        f(g.edge(edge as usize).src, edge as usize);
    }
    if undirected {
        for edge in g.edge_range(node) {
            f(g.edge(edge).dst, edge);
        }
    }
}

/// Costs this close, relative to the larger, are treated as equal. Sums of
/// the same edge costs taken in a different order, or rescaled by a constant,
/// differ only by rounding, so without this the choice among exactly tied
/// optimal paths would depend on floating-point noise.
const TIE_TOLERANCE: f64 = 1e-12;

fn cost_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.max(b)
}

/// Reusable shortest-path engine over one cost graph. Holds a dense label
/// workspace so repeated queries on a large graph do not reallocate.
pub struct PathSearcher<'a, 'g> {
    cg: &'a CostGraph<'g>,
    dense: Option<DenseLabels>,
}

impl<'a, 'g> PathSearcher<'a, 'g> {
    pub fn new(cg: &'a CostGraph<'g>) -> Self {
        PathSearcher { cg, dense: None }
    }

    /// One minimum-cost path from `src` to `dst`, or `None` when `dst` is
    /// unreachable or every cheapest path exceeds the hop limit.
    pub fn find(
        &mut self,
        src: ConceptId,
        dst: ConceptId,
        opts: &SearchOptions,
        seed: u64,
    ) -> Result<Option<Path>> {
        let g = self.cg.graph();
        g.check_node(src)?;
        g.check_node(dst)?;
        if src == dst {
            return Err(Error::IdenticalEndpoints(src.0));
        }
        match opts.hop_limit {
            HopLimit::PostFilter => {
                let n = g.node_count();
                let labels = self.dense.get_or_insert_with(|| DenseLabels::new(n));
                labels.reset();
                let path = run(self.cg, labels, src, dst, opts, None, seed)?;
                Ok(path.filter(|p| p.hops() <= opts.max_hops))
            }
            HopLimit::Constrained => {
                let mut labels: HashMap<u64, Label> = HashMap::new();
                run(self.cg, &mut labels, src, dst, opts, Some(opts.max_hops as u32), seed)
            }
        }
    }
}

/// Convenience wrapper around a fresh [`PathSearcher`].
pub fn shortest_path(
    cg: &CostGraph<'_>,
    src: ConceptId,
    dst: ConceptId,
    opts: &SearchOptions,
    seed: u64,
) -> Result<Option<Path>> {
    PathSearcher::new(cg).find(src, dst, opts, seed)
}

/// Label-setting search on `(cost, hops)` keys followed by canonical path
/// reconstruction.
///
/// With `layer_cap = Some(k)` the state is `(node, hops)` with `hops <= k`;
/// otherwise the state is the node alone and `hops` is the fewest hops among
/// the cheapest paths.
fn run<S: LabelStore>(
    cg: &CostGraph<'_>,
    labels: &mut S,
    src: ConceptId,
    dst: ConceptId,
    opts: &SearchOptions,
    layer_cap: Option<u32>,
    seed: u64,
) -> Result<Option<Path>> {
    let g = cg.graph();
    let layers = layer_cap.map(|k| k as u64 + 1);
    let state_of = |node: ConceptId, hops: u32| match layers {
        Some(l) => node.0 as u64 * l + hops as u64,
        None => node.0 as u64,
    };
    let node_of = |state: u64| match layers {
        Some(l) => ConceptId((state / l) as u32),
        None => ConceptId(state as u32),
    };

    let start = state_of(src, 0);
    labels.insert(
        start,
        Label {
            cost: 0.0,
            hops: 0,
            settled: false,
            on_optimal: false,
        },
    );
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        cost: 0.0,
        hops: 0,
        state: start,
    });

    let mut target = None;
    while let Some(HeapEntry { cost, hops, state }) = heap.pop() {
        let label = labels.get_mut(state).expect("queued state has a label");
        if label.settled || label.cost != cost || label.hops != hops {
            continue;
        }
        label.settled = true;
        let node = node_of(state);
        if node == dst {
            target = Some(state);
            break;
        }
        if layer_cap.is_some_and(|cap| hops >= cap) {
            continue;
        }
        for_each_step(g, node, opts.undirected, |step| {
            let w = cg.cost(step.edge);
            if !w.is_finite() || w < 0.0 {
                return Err(cg.cost_error(step.edge, "negative or non-finite cost reached by search"));
            }
            let next = state_of(step.next, hops + 1);
            let cand = (cost + w, hops + 1);
            let better = match labels.get(next) {
                None => true,
                Some(l) => {
                    !l.settled
                        && if cost_eq(cand.0, l.cost) {
                            cand.1 < l.hops
                        } else {
                            cand.0 < l.cost
                        }
                }
            };
            if better {
                labels.insert(
                    next,
                    Label {
                        cost: cand.0,
                        hops: cand.1,
                        settled: false,
                        on_optimal: false,
                    },
                );
                heap.push(HeapEntry {
                    cost: cand.0,
                    hops: cand.1,
                    state: next,
                });
            }
            Ok(())
        })?;
    }
    let Some(target) = target else {
        return Ok(None);
    };

    // An arrival u -> v is tight when label(v) = label(u) + (w, 1). Every
    // tight chain ending at the target is an optimal path; mark their states.
    let tight = |labels: &S, from: u64, to: u64, w: f64| -> bool {
        match (labels.get(from), labels.get(to)) {
            (Some(a), Some(b)) => a.settled && cost_eq(a.cost + w, b.cost) && a.hops + 1 == b.hops,
            _ => false,
        }
    };
    let mut stack = vec![target];
    labels.get_mut(target).unwrap().on_optimal = true;
    while let Some(state) = stack.pop() {
        let node = node_of(state);
        let hops = labels.get(state).unwrap().hops;
        if hops == 0 {
            continue;
        }
        let mut preds = Vec::new();
        for_each_arrival(g, node, opts.undirected, |pred, edge| {
            let ps = state_of(pred, hops - 1);
            if tight(labels, ps, state, cg.cost(edge)) {
                preds.push(ps);
            }
        });
        for ps in preds {
            let l = labels.get_mut(ps).unwrap();
            if !l.on_optimal {
                l.on_optimal = true;
                stack.push(ps);
            }
        }
    }

    // walk forward from the source choosing among tight steps into marked states
    let mut rng = seed::rng(seed, "tie-break", 0);
    let mut state = start;
    let mut path = Path {
        nodes: vec![src],
        rels: Vec::new(),
        total_cost: labels.get(target).unwrap().cost,
    };
    while state != target {
        let node = node_of(state);
        let hops = labels.get(state).unwrap().hops;
        let mut options: Vec<(Step, u64)> = Vec::new();
        for_each_step(g, node, opts.undirected, |step| {
            let next = state_of(step.next, hops + 1);
            if labels.get(next).is_some_and(|l| l.on_optimal)
                && tight(labels, state, next, cg.cost(step.edge))
            {
                options.push((step, next));
            }
            Ok(())
        })?;
        options.sort_by_key(|(s, _)| (s.rel, s.next, s.dir));
        let pick = match opts.tie_break {
            TieBreak::Deterministic => 0,
            TieBreak::Seeded => rng.random_range(0..options.len()),
        };
        let (step, next) = options[pick];
        path.rels.push((step.rel, step.dir));
        path.nodes.push(step.next);
        state = next;
    }
    Ok(Some(path))
}
