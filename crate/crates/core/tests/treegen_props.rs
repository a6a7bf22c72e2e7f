mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{arb_graph, bfs_distances, undirected_edge_set};
use dtrnn::treegen::DEFAULT_MAX_COUNT;
use dtrnn::{generate_bfs_tree, generate_deep_tree, tree_stats, DeepTree, Graph};
use proptest::prelude::*;

fn shallowest_depths(t: &DeepTree) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for (node, depth) in t.nodes.iter().zip(t.depths()) {
        let e = out.entry(node.vertex).or_insert(depth);
        *e = (*e).min(depth);
    }
    out
}

fn assert_edges_real(g: &Graph, t: &DeepTree) -> Result<(), TestCaseError> {
    let edges = undirected_edge_set(g);
    for node in &t.nodes {
        for &c in &node.children {
            let w = t.nodes[c].vertex;
            let v = node.vertex;
            prop_assert!(edges.contains(&(v.min(w), v.max(w))), "tree edge {v}-{w} not in graph");
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn dtg_structure(g in arb_graph(30), cap in prop_oneof![Just(DEFAULT_MAX_COUNT), 1usize..60]) {
        for target in 0..g.n() {
            let t = generate_deep_tree(&g, target, cap).unwrap();
            prop_assert!(t.node_count() <= cap);
            prop_assert_eq!(t.root().vertex, target);
            assert_edges_real(&g, &t)?;

            let stats = tree_stats(&t);
            prop_assert_eq!(stats.appearances[&target], 1);
            for (&v, &count) in &stats.appearances {
                if v != target {
                    prop_assert!(count <= g.total_degree(v).unwrap());
                }
            }

            let dist = bfs_distances(&g, target);
            for (v, depth) in shallowest_depths(&t) {
                prop_assert_eq!(Some(depth), dist[v], "vertex {}", v);
            }

            // no undirected edge is walked twice
            let mut walked = BTreeSet::new();
            for node in &t.nodes {
                for &c in &node.children {
                    let (a, b) = (node.vertex, t.nodes[c].vertex);
                    prop_assert!(walked.insert((a.min(b), a.max(b))));
                }
            }
        }
    }

    #[test]
    fn uncapped_dtg_walks_every_component_edge_once(g in arb_graph(20)) {
        let target = 0;
        let t = generate_deep_tree(&g, target, usize::MAX).unwrap();
        let dist = bfs_distances(&g, target);
        let component_edges = undirected_edge_set(&g)
            .into_iter()
            .filter(|&(a, _)| dist[a].is_some())
            .count();
        prop_assert_eq!(t.node_count(), 1 + component_edges);
        let seen: BTreeSet<usize> = t.nodes.iter().map(|n| n.vertex).collect();
        let reachable: BTreeSet<usize> = (0..g.n()).filter(|&v| dist[v].is_some()).collect();
        prop_assert_eq!(seen, reachable);
    }

    #[test]
    fn dtg_is_deterministic(g in arb_graph(30), target in 0usize..30) {
        let target = target % g.n();
        let a = generate_deep_tree(&g, target, DEFAULT_MAX_COUNT).unwrap();
        let b = generate_deep_tree(&g, target, DEFAULT_MAX_COUNT).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn bfs2_visits_each_vertex_once_within_two_hops(g in arb_graph(30)) {
        for target in 0..g.n() {
            let t = generate_bfs_tree(&g, target).unwrap();
            assert_edges_real(&g, &t)?;
            let dist = bfs_distances(&g, target);
            let seen: Vec<usize> = t.nodes.iter().map(|n| n.vertex).collect();
            let unique: BTreeSet<usize> = seen.iter().copied().collect();
            prop_assert_eq!(unique.len(), seen.len());
            let within: BTreeSet<usize> = (0..g.n()).filter(|&v| dist[v].is_some_and(|d| d <= 2)).collect();
            prop_assert_eq!(unique, within);
            for (node, depth) in t.nodes.iter().zip(t.depths()) {
                prop_assert_eq!(Some(depth), dist[node.vertex]);
            }
        }
    }

    #[test]
    fn post_order_puts_children_first(g in arb_graph(30), target in 0usize..30) {
        let t = generate_deep_tree(&g, target % g.n(), DEFAULT_MAX_COUNT).unwrap();
        let order = t.post_order();
        prop_assert_eq!(order.len(), t.node_count());
        prop_assert_eq!(*order.last().unwrap(), 0);
        let mut pos = vec![0; order.len()];
        for (i, &k) in order.iter().enumerate() {
            pos[k] = i;
        }
        for node in &t.nodes {
            for &c in &node.children {
                prop_assert!(pos[c] < pos[node.tree_index]);
            }
        }
    }

    #[test]
    fn tree_json_round_trips(g in arb_graph(20), target in 0usize..20) {
        let t = generate_deep_tree(&g, target % g.n(), DEFAULT_MAX_COUNT).unwrap();
        let back: DeepTree = serde_json::from_str(&t.to_json()).unwrap();
        prop_assert_eq!(back, t);
    }
}
