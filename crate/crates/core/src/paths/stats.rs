use std::collections::{BTreeMap, HashSet};
use std::fmt;

use super::bundle::BundleRecord;

/// Contextual-subgraph size statistics over a set of bundles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BundleStats {
    pub instances: usize,
    /// Sum over instances of distinct entities on the union of its paths.
    pub total_entities: usize,
    pub total_relations: usize,
    pub paths: usize,
    /// Path count per hop length.
    pub hop_histogram: BTreeMap<usize, usize>,
    pub identical_pairs: usize,
    pub unreachable_pairs: usize,
}

impl BundleStats {
    pub fn avg_entities(&self) -> f64 {
        ratio(self.total_entities, self.instances)
    }

    pub fn avg_relations(&self) -> f64 {
        ratio(self.total_relations, self.instances)
    }

    /// Unreachable pairs over searched (non-identical) pairs.
    pub fn unreachable_rate(&self) -> f64 {
        ratio(self.unreachable_pairs, self.unreachable_pairs + self.paths)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl fmt::Display for BundleStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "instances={}", self.instances)?;
        writeln!(f, "paths={}", self.paths)?;
        writeln!(f, "avg_entities={:.4}", self.avg_entities())?;
        writeln!(f, "avg_relations={:.4}", self.avg_relations())?;
        writeln!(f, "identical_pairs={}", self.identical_pairs)?;
        writeln!(f, "unreachable_pairs={}", self.unreachable_pairs)?;
        writeln!(f, "unreachable_rate={:.4}", self.unreachable_rate())?;
        let hist: Vec<String> = self
            .hop_histogram
            .iter()
            .map(|(h, c)| format!("{h}:{c}"))
            .collect();
        write!(f, "hop_histogram={}", hist.join(","))
    }
}

pub fn bundle_stats<'a>(bundles: impl IntoIterator<Item = &'a BundleRecord>) -> BundleStats {
    let mut stats = BundleStats::default();
    for b in bundles {
        stats.instances += 1;
        stats.identical_pairs += b.identical_pairs;
        stats.unreachable_pairs += b.unreachable_pairs;
        let mut entities: HashSet<&str> = HashSet::new();
        let mut relations: HashSet<&str> = HashSet::new();
        for p in &b.paths {
            stats.paths += 1;
            *stats.hop_histogram.entry(p.hops).or_default() += 1;
            entities.extend(p.nodes.iter().map(String::as_str));
            relations.extend(p.rels.iter().map(|r| r.rel.as_str()));
        }
        stats.total_entities += entities.len();
        stats.total_relations += relations.len();
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{Direction, PathRecord, RelStep};

    fn path(nodes: &[&str], rels: &[&str]) -> PathRecord {
        PathRecord {
            src: nodes[0].into(),
            dst: nodes[nodes.len() - 1].into(),
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
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
    }

    #[test]
    fn empty_stream() {
        let s = bundle_stats(std::iter::empty());
        assert_eq!(s.instances, 0);
        assert_eq!(s.avg_entities(), 0.0);
        assert_eq!(s.avg_relations(), 0.0);
        assert!(s.hop_histogram.is_empty());
        assert_eq!(s.unreachable_rate(), 0.0);
    }

    #[test]
    fn union_counts_on_fixture() {
        let b = BundleRecord {
            id: "1".into(),
            label: "neutral".into(),
            identical_pairs: 0,
            unreachable_pairs: 1,
            paths: vec![path(&["a", "b"], &["r1"]), path(&["a", "c", "d"], &["r2", "r1"])],
            features: None,
        };
        let s = bundle_stats([&b]);
        assert_eq!(s.avg_entities(), 4.0);
        assert_eq!(s.avg_relations(), 2.0);
        assert_eq!(s.hop_histogram, BTreeMap::from([(1, 1), (2, 1)]));
        assert!((s.unreachable_rate() - 1.0 / 3.0).abs() < 1e-15);
    }
}
