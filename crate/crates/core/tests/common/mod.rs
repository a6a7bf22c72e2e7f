#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use dtrnn::graph::DropCounts;
use dtrnn::{FeatureVector, Graph};
use proptest::prelude::*;

pub fn build_graph(n: usize, dim: usize, classes: usize, edges: Vec<(usize, usize)>, feats: Vec<Vec<u32>>) -> Graph {
    let mut seen = BTreeSet::new();
    let edges: Vec<_> = edges
        .into_iter()
        .map(|(a, b)| (a % n, b % n))
        .filter(|&(a, b)| a != b && seen.insert((a, b)))
        .collect();
    let features = (0..n)
        .map(|v| {
            let mut f: Vec<u32> = feats.get(v).cloned().unwrap_or_default();
            f.iter_mut().for_each(|j| *j %= dim as u32);
            f.sort_unstable();
            f.dedup();
            FeatureVector::new(f, dim).unwrap()
        })
        .collect();
    Graph::from_parts(
        features,
        (0..n).map(|v| v % classes).collect(),
        edges,
        (0..classes).map(|c| format!("class{c}")).collect(),
        (0..n).map(|v| format!("r{v}")).collect(),
        dim,
        DropCounts::default(),
    )
    .unwrap()
}

/// Directed graphs on up to `max_n` vertices, possibly with reciprocal edges.
pub fn arb_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (1..=max_n).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n), 0..=3 * n),
            prop::collection::vec(prop::collection::vec(0u32..8, 0..4), n),
            1usize..=4,
        )
            .prop_map(|(n, edges, feats, classes)| build_graph(n, 8, classes, edges, feats))
    })
}

/// Undirected hop distances from `src`, computed without the library.
pub fn bfs_distances(g: &Graph, src: usize) -> Vec<Option<usize>> {
    let n = g.n();
    let mut adj = vec![BTreeSet::new(); n];
    for &(a, b) in g.edges() {
        adj[a].insert(b);
        adj[b].insert(a);
    }
    let mut dist = vec![None; n];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if dist[w].is_none() {
                dist[w] = Some(dist[u].unwrap() + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

pub fn undirected_edge_set(g: &Graph) -> BTreeSet<(usize, usize)> {
    g.edges().iter().map(|&(a, b)| (a.min(b), a.max(b))).collect()
}
