//! Graph-to-tree conversion rooted at a classification target.
//!
//! Two constructions are provided: deep-tree generation, a breadth-ordered
//! expansion in which each undirected edge is traversed at most once (so a
//! vertex can reappear, up to its degree), and the depth-two breadth-first
//! tree in which each vertex appears once.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, VertexId};

/// Default node budget for deep-tree generation.
pub const DEFAULT_MAX_COUNT: usize = 30;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("max_count must be at least 1")]
    ZeroMaxCount,
    #[error("malformed tree: {0}")]
    Malformed(String),
    #[error("unknown tree method {0:?} (expected dtg or bfs)")]
    UnknownMethod(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeMethod {
    /// Deep-tree generation.
    Dtg,
    /// Breadth-first search truncated at depth two.
    Bfs2,
}

impl fmt::Display for TreeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TreeMethod::Dtg => "dtg",
            TreeMethod::Bfs2 => "bfs2",
        })
    }
}

impl FromStr for TreeMethod {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, TreeError> {
        match s.to_ascii_lowercase().as_str() {
            "dtg" | "deep" => Ok(TreeMethod::Dtg),
            "bfs" | "bfs2" => Ok(TreeMethod::Bfs2),
            _ => Err(TreeError::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub tree_index: usize,
    pub vertex: VertexId,
    pub children: Vec<usize>,
}

/// A rooted tree stored as an arena; `nodes[i].tree_index == i` and the root
/// is node 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeepTree {
    pub target: VertexId,
    pub method: TreeMethod,
    pub max_count: Option<usize>,
    pub nodes: Vec<TreeNode>,
}

impl DeepTree {
    /// Validates that `nodes` form a tree rooted at node 0 whose vertex is
    /// `target`.
    pub fn from_nodes(
        target: VertexId,
        method: TreeMethod,
        max_count: Option<usize>,
        nodes: Vec<TreeNode>,
    ) -> Result<Self, TreeError> {
        let tree = Self {
            target,
            method,
            max_count,
            nodes,
        };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<(), TreeError> {
        let bad = |m: String| Err(TreeError::Malformed(m));
        let Some(root) = self.nodes.first() else {
            return bad("no nodes".into());
        };
        if root.vertex != self.target {
            return bad(format!("root vertex {} != target {}", root.vertex, self.target));
        }
        let mut parent_seen = vec![false; self.nodes.len()];
        parent_seen[0] = true;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.tree_index != i {
                return bad(format!("node at position {i} has tree_index {}", node.tree_index));
            }
            for &c in &node.children {
                if c >= self.nodes.len() {
                    return bad(format!("child index {c} out of range"));
                }
                if std::mem::replace(&mut parent_seen[c], true) {
                    return bad(format!("node {c} has two parents or is the root"));
                }
            }
        }
        // every non-root has exactly one parent; reachability rules out cycles
        if self.post_order().len() != self.nodes.len() {
            return bad("unreachable nodes".into());
        }
        Ok(())
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Node indices with every child before its parent; the root is last.
    pub fn post_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(0usize, false)];
        while let Some((i, expanded)) = stack.pop() {
            if expanded {
                order.push(i);
                continue;
            }
            if order.len() + stack.len() > self.nodes.len() {
                break;
            }
            stack.push((i, true));
            for &c in self.nodes[i].children.iter().rev() {
                stack.push((c, false));
            }
        }
        order
    }

    /// Depth of every node (root = 0).
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            for &c in &self.nodes[i].children {
                depth[c] = depth[i] + 1;
                queue.push_back(c);
            }
        }
        depth
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tree serializes")
    }
}

struct Builder {
    nodes: Vec<TreeNode>,
}

impl Builder {
    fn new(root: VertexId) -> Self {
        Self {
            nodes: vec![TreeNode {
                tree_index: 0,
                vertex: root,
                children: Vec::new(),
            }],
        }
    }

    fn attach(&mut self, parent: usize, vertex: VertexId) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(TreeNode {
            tree_index: idx,
            vertex,
            children: Vec::new(),
        });
        self.nodes[parent].children.push(idx);
        idx
    }
}

/// Deep-tree generation.
///
/// Tree nodes are expanded in FIFO order. Expanding a node for vertex `v`
/// attaches, in ascending id order, every undirected neighbor `w` whose edge
/// `{v, w}` has not been traversed yet in this tree, and queues the new
/// node. Growth stops when the queue drains or the tree holds `max_count`
/// nodes.
pub fn generate_deep_tree(g: &Graph, target: VertexId, max_count: usize) -> Result<DeepTree, TreeError> {
    if max_count == 0 {
        return Err(TreeError::ZeroMaxCount);
    }
    g.undirected_neighbors(target)?;
    let mut tree = Builder::new(target);
    let mut traversed: HashSet<(VertexId, VertexId)> = HashSet::new();
    let mut queue = VecDeque::from([0usize]);

    'grow: while let Some(t) = queue.pop_front() {
        let v = tree.nodes[t].vertex;
        for w in g.undirected_neighbors(v)? {
            if tree.nodes.len() >= max_count {
                break 'grow;
            }
            if traversed.insert((v.min(w), v.max(w))) {
                queue.push_back(tree.attach(t, w));
            }
        }
    }

    Ok(DeepTree {
        target,
        method: TreeMethod::Dtg,
        max_count: Some(max_count),
        nodes: tree.nodes,
    })
}

/// Breadth-first tree over the undirected view, each vertex at most once,
/// truncated at depth two.
pub fn generate_bfs_tree(g: &Graph, target: VertexId) -> Result<DeepTree, TreeError> {
    const MAX_DEPTH: usize = 2;
    g.undirected_neighbors(target)?;
    let mut tree = Builder::new(target);
    let mut visited = HashSet::from([target]);
    let mut queue = VecDeque::from([(0usize, 0usize)]);
    while let Some((t, depth)) = queue.pop_front() {
        if depth == MAX_DEPTH {
            continue;
        }
        for w in g.undirected_neighbors(tree.nodes[t].vertex)? {
            if visited.insert(w) {
                queue.push_back((tree.attach(t, w), depth + 1));
            }
        }
    }
    Ok(DeepTree {
        target,
        method: TreeMethod::Bfs2,
        max_count: None,
        nodes: tree.nodes,
    })
}

pub fn generate_tree(
    g: &Graph,
    target: VertexId,
    method: TreeMethod,
    max_count: usize,
) -> Result<DeepTree, TreeError> {
    match method {
        TreeMethod::Dtg => generate_deep_tree(g, target, max_count),
        TreeMethod::Bfs2 => generate_bfs_tree(g, target),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeStats {
    pub node_count: usize,
    pub max_depth: usize,
    /// How often each graph vertex appears in the tree.
    pub appearances: BTreeMap<VertexId, usize>,
    /// Largest number of children at any node.
    pub max_branching: usize,
    /// `max_branching ^ max_depth`, the generation cost bound.
    pub complexity_bound: f64,
}

pub fn tree_stats(t: &DeepTree) -> TreeStats {
    let max_depth = t.depths().into_iter().max().unwrap_or(0);
    let mut appearances = BTreeMap::new();
    for node in &t.nodes {
        *appearances.entry(node.vertex).or_insert(0) += 1;
    }
    let max_branching = t.nodes.iter().map(|n| n.children.len()).max().unwrap_or(0);
    TreeStats {
        node_count: t.node_count(),
        max_depth,
        appearances,
        max_branching,
        complexity_bound: (max_branching as f64).powi(max_depth as i32),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{DropCounts, FeatureVector};

    pub(crate) fn undirected(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_parts(
            (0..n).map(|_| FeatureVector::new(vec![], 1).unwrap()).collect(),
            vec![0; n],
            edges.to_vec(),
            vec!["c".into()],
            (0..n).map(|i| i.to_string()).collect(),
            1,
            DropCounts::default(),
        )
        .unwrap()
    }

    /// (parent vertex, child vertex) pairs in arena order.
    fn shape(t: &DeepTree) -> Vec<(VertexId, VertexId)> {
        t.nodes
            .iter()
            .flat_map(|n| n.children.iter().map(move |&c| (n.vertex, t.nodes[c].vertex)))
            .collect()
    }

    fn fig2() -> Graph {
        // vertex ids equal the figure's subscripts; 0 and 3 are unused
        undirected(7, &[(4, 1), (1, 2), (2, 6), (5, 6)])
    }

    #[test]
    fn dtg_recovers_long_path() {
        let t = generate_deep_tree(&fig2(), 4, 20).unwrap();
        assert_eq!(shape(&t), vec![(4, 1), (1, 2), (2, 6), (6, 5)]);
        assert_eq!(t.depths(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn bfs_loses_long_path() {
        let t = generate_bfs_tree(&fig2(), 4).unwrap();
        assert_eq!(shape(&t), vec![(4, 1), (1, 2)]);
    }

    #[test]
    fn isolated_vertex_gives_single_node() {
        let g = undirected(3, &[(1, 2)]);
        for cap in [1, 5, 100] {
            assert_eq!(generate_deep_tree(&g, 0, cap).unwrap().node_count(), 1);
        }
        assert_eq!(generate_bfs_tree(&g, 0).unwrap().node_count(), 1);
    }

    #[test]
    fn triangle_trace() {
        // hand trace: pop 0 -> children 1,2 via {0,1},{0,2}; pop 1 -> child 2
        // via {1,2}; the two remaining nodes (vertex 2) find every edge used.
        let g = undirected(3, &[(0, 1), (1, 2), (2, 0)]);
        let t = generate_deep_tree(&g, 0, 10).unwrap();
        assert_eq!(shape(&t), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(t.node_count(), 4);
        let stats = tree_stats(&t);
        assert!(stats.appearances.values().all(|&c| c <= 2));
        assert_eq!(stats.appearances[&2], 2);

        let capped = generate_deep_tree(&g, 0, 3).unwrap();
        assert_eq!(shape(&capped), vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn reciprocal_edges_are_one_undirected_edge() {
        let g = undirected(2, &[(0, 1), (1, 0)]);
        let t = generate_deep_tree(&g, 0, 10).unwrap();
        assert_eq!(shape(&t), vec![(0, 1)]);
    }

    #[test]
    fn star_and_path_bfs() {
        let star = undirected(5, &[(0, 1), (2, 0), (0, 3), (4, 0)]);
        let t = generate_bfs_tree(&star, 0).unwrap();
        assert_eq!(shape(&t), vec![(0, 1), (0, 2), (0, 3), (0, 4)]);
        let s = tree_stats(&t);
        assert_eq!((s.max_branching, s.max_depth), (4, 1));

        let path = undirected(4, &[(0, 1), (1, 2), (2, 3)]);
        assert_eq!(shape(&generate_bfs_tree(&path, 0).unwrap()), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn single_node_stats() {
        let t = generate_deep_tree(&undirected(1, &[]), 0, 3).unwrap();
        let s = tree_stats(&t);
        assert_eq!((s.node_count, s.max_depth, s.max_branching), (1, 0, 0));
    }

    #[test]
    fn errors() {
        let g = undirected(2, &[(0, 1)]);
        assert!(matches!(generate_deep_tree(&g, 0, 0), Err(TreeError::ZeroMaxCount)));
        assert!(generate_deep_tree(&g, 2, 3).is_err());
        assert!(generate_bfs_tree(&g, 5).is_err());
        assert!("bogus".parse::<TreeMethod>().is_err());
        assert_eq!("BFS".parse::<TreeMethod>().unwrap(), TreeMethod::Bfs2);
    }

    #[test]
    fn from_nodes_rejects_non_trees() {
        let node = |i, v, c: Vec<usize>| TreeNode {
            tree_index: i,
            vertex: v,
            children: c,
        };
        assert!(DeepTree::from_nodes(0, TreeMethod::Dtg, None, vec![]).is_err());
        assert!(DeepTree::from_nodes(1, TreeMethod::Dtg, None, vec![node(0, 0, vec![])]).is_err());
        // shared child
        assert!(DeepTree::from_nodes(
            0,
            TreeMethod::Dtg,
            None,
            vec![node(0, 0, vec![1, 2]), node(1, 1, vec![2]), node(2, 2, vec![])]
        )
        .is_err());
        // cycle detached from root
        assert!(DeepTree::from_nodes(
            0,
            TreeMethod::Dtg,
            None,
            vec![node(0, 0, vec![]), node(1, 1, vec![2]), node(2, 2, vec![1])]
        )
        .is_err());
        let ok = DeepTree::from_nodes(
            0,
            TreeMethod::Dtg,
            None,
            vec![node(0, 0, vec![2, 1]), node(1, 1, vec![]), node(2, 2, vec![])],
        )
        .unwrap();
        assert_eq!(ok.post_order(), vec![2, 1, 0]);
    }
}
