//! Hypernym co-occurrence network.
//!
//! Hyponyms that are tagged together (on the same question or page) are
//! replaced by their known hypernyms; every pair of distinct hypernyms in a
//! group becomes an undirected edge.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CooccurrenceGraph {
    adjacency: BTreeMap<String, BTreeSet<String>>,
    max_degree: usize,
}

/// JSON export shape: `{"nodes": [...], "edges": [[u, v], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphExport {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

impl CooccurrenceGraph {
    pub fn build<S: AsRef<str>>(
        tag_sets: &[Vec<S>],
        hypernym_map: &BTreeMap<String, String>,
    ) -> CooccurrenceGraph {
        let mut g = CooccurrenceGraph::default();
        for set in tag_sets {
            let mapped: BTreeSet<&String> = set
                .iter()
                .filter_map(|t| hypernym_map.get(&t.as_ref().to_lowercase()))
                .collect();
            for h in &mapped {
                g.add_node(h);
            }
            let mapped: Vec<&String> = mapped.into_iter().collect();
            for (k, u) in mapped.iter().enumerate() {
                for v in &mapped[k + 1..] {
                    g.add_edge(u, v);
                }
            }
        }
        g.max_degree = g.adjacency.values().map(BTreeSet::len).max().unwrap_or(0);
        g
    }

    fn add_node(&mut self, node: &str) {
        self.adjacency.entry(node.to_string()).or_default();
    }

    fn add_edge(&mut self, u: &str, v: &str) {
        if u == v {
            return;
        }
        self.adjacency
            .entry(u.to_string())
            .or_default()
            .insert(v.to_string());
        self.adjacency
            .entry(v.to_string())
            .or_default()
            .insert(u.to_string());
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn contains(&self, node: &str) -> bool {
        self.adjacency.contains_key(node)
    }

    pub fn degree(&self, node: &str) -> usize {
        self.adjacency.get(node).map_or(0, BTreeSet::len)
    }

    pub fn has_edge(&self, u: &str, v: &str) -> bool {
        self.adjacency.get(u).is_some_and(|n| n.contains(v))
    }

    /// Degree normalized by the maximum degree; 0 for absent nodes and
    /// edgeless graphs. Lookup is case-insensitive.
    pub fn degree_centrality(&self, node: &str) -> f64 {
        if self.max_degree == 0 {
            return 0.0;
        }
        self.degree(&node.to_lowercase()) as f64 / self.max_degree as f64
    }

    pub fn export(&self) -> GraphExport {
        let nodes = self.adjacency.keys().cloned().collect();
        let mut edges = Vec::new();
        for (u, ns) in &self.adjacency {
            for v in ns.range::<String, _>((
                std::ops::Bound::Excluded(u.clone()),
                std::ops::Bound::Unbounded,
            )) {
                edges.push((u.clone(), v.clone()));
            }
        }
        GraphExport { nodes, edges }
    }

    pub fn import(export: &GraphExport) -> Result<CooccurrenceGraph> {
        let mut g = CooccurrenceGraph::default();
        for n in &export.nodes {
            g.add_node(n);
        }
        for (u, v) in &export.edges {
            if u == v {
                return Err(Error::Data(format!("self-loop on `{u}` in graph export")));
            }
            if !g.contains(u) || !g.contains(v) {
                return Err(Error::Data(format!("edge ({u}, {v}) references unknown node")));
            }
            g.add_edge(u, v);
        }
        g.max_degree = g.adjacency.values().map(BTreeSet::len).max().unwrap_or(0);
        Ok(g)
    }
}

/// Reads a tag-set file: one co-occurrence group per line, whitespace separated.
pub fn parse_tag_sets(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn same_hypernym_gives_no_self_loop() {
        let g = CooccurrenceGraph::build(
            &[vec!["sql", "python"]],
            &map(&[("sql", "language"), ("python", "language")]),
        );
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.degree_centrality("language"), 0.0);
    }

    #[test]
    fn distinct_hypernyms_are_linked() {
        let g = CooccurrenceGraph::build(
            &[vec!["sql", "mysql", "unknown"]],
            &map(&[("sql", "language"), ("mysql", "database")]),
        );
        assert!(g.has_edge("language", "database"));
        assert!(g.has_edge("database", "language"));
        assert_eq!(g.node_count(), 2);
        assert!(!g.contains("unknown"));
    }

    #[test]
    fn centrality_examples() {
        let m = map(&[("a", "a"), ("b", "b"), ("c", "c"), ("d", "d")]);
        let triangle = CooccurrenceGraph::build(&[vec!["a", "b", "c"]], &m);
        for n in ["a", "b", "c"] {
            assert_eq!(triangle.degree_centrality(n), 1.0);
        }
        let path = CooccurrenceGraph::build(&[vec!["a", "b"], vec!["b", "c"], vec!["d"]], &m);
        assert_eq!(path.degree_centrality("b"), 1.0);
        assert_eq!(path.degree_centrality("a"), 0.5);
        assert_eq!(path.degree_centrality("d"), 0.0);
        assert_eq!(path.degree_centrality("zzz"), 0.0);
        assert_eq!(CooccurrenceGraph::default().degree_centrality("a"), 0.0);
    }

    #[test]
    fn export_import_round_trip() {
        let m = map(&[("a", "x"), ("b", "y"), ("c", "z")]);
        let g = CooccurrenceGraph::build(&[vec!["a", "b"], vec!["b", "c"]], &m);
        let e = g.export();
        assert_eq!(e.edges, vec![("x".into(), "y".into()), ("y".into(), "z".into())]);
        assert_eq!(CooccurrenceGraph::import(&e).unwrap(), g);
        let bad = GraphExport {
            nodes: vec!["x".into()],
            edges: vec![("x".into(), "x".into())],
        };
        assert!(CooccurrenceGraph::import(&bad).is_err());
    }

    #[test]
    fn tag_set_file_parsing() {
        assert_eq!(
            parse_tag_sets("SQL mysql\n\n  python \n"),
            vec![vec!["sql".to_string(), "mysql".into()], vec!["python".into()]]
        );
    }

    proptest! {
        #[test]
        fn build_is_order_independent(
            sets in proptest::collection::vec(proptest::collection::vec(0u8..12, 0..5), 0..12),
            seed in any::<u64>(),
        ) {
            let m: BTreeMap<String, String> = (0..10u8).map(|i| (format!("t{i}"), format!("h{}", i % 6))).collect();
            let named: Vec<Vec<String>> = sets.iter().map(|s| s.iter().map(|i| format!("t{i}")).collect()).collect();
            let g = CooccurrenceGraph::build(&named, &m);
            let mut shuffled = named.clone();
            use rand::seq::SliceRandom;
            let mut rng = crate::rng::stream(seed, 0);
            shuffled.shuffle(&mut rng);
            for s in &mut shuffled { s.shuffle(&mut rng); s.reverse(); }
            prop_assert_eq!(&CooccurrenceGraph::build(&shuffled, &m), &g);
            for (u, ns) in &g.adjacency {
                prop_assert!(!ns.contains(u));
                for v in ns { prop_assert!(g.has_edge(v, u)); }
            }
        }
    }
}
