//! Graph data model, citation-format ingestion and train/test splitting.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, Stream};

/// Dense vertex index in `0..n`.
pub type VertexId = usize;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: content file contains no vertices")]
    EmptyContent { path: String },
    #[error("vertex {vertex} out of range (n = {n})")]
    VertexOutOfRange { vertex: VertexId, n: usize },
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    BadRatio(f64),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("dataset json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Sparse 0/1 bag-of-words vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    indices: Vec<u32>,
    dim: usize,
}

impl FeatureVector {
    /// Builds a feature vector from the positions of its ones; indices are
    /// sorted and must be distinct and below `dim`.
    pub fn new(mut indices: Vec<u32>, dim: usize) -> Result<Self, GraphError> {
        indices.sort_unstable();
        for pair in indices.windows(2) {
            if pair[0] == pair[1] {
                return Err(GraphError::Invalid(format!(
                    "duplicate feature index {}",
                    pair[0]
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last as usize >= dim {
                return Err(GraphError::Invalid(format!(
                    "feature index {last} >= dimension {dim}"
                )));
            }
        }
        Ok(Self { indices, dim })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim];
        for &i in &self.indices {
            dense[i as usize] = 1.0;
        }
        dense
    }
}

/// Counts of input records discarded during ingestion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    /// Citation lines naming an id absent from the content file.
    pub dangling: usize,
    pub duplicate: usize,
    pub self_loop: usize,
}

/// Directed graph with per-vertex binary features and class labels.
///
/// Immutable after construction. Raw dataset identifiers are kept in a side
/// table so that `raw_ids[v]` is the original name of vertex `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    edges: Vec<(VertexId, VertexId)>,
    out_adj: Vec<Vec<VertexId>>,
    in_adj: Vec<Vec<VertexId>>,
    features: Vec<FeatureVector>,
    labels: Vec<usize>,
    num_classes: usize,
    vocab_dim: usize,
    label_names: Vec<String>,
    raw_ids: Vec<String>,
    drops: DropCounts,
}

impl Graph {
    /// Assembles a graph and checks every structural invariant. Edges must be
    /// free of self-loops and duplicates.
    pub fn from_parts(
        features: Vec<FeatureVector>,
        labels: Vec<usize>,
        edges: Vec<(VertexId, VertexId)>,
        label_names: Vec<String>,
        raw_ids: Vec<String>,
        vocab_dim: usize,
        drops: DropCounts,
    ) -> Result<Self, GraphError> {
        let n = features.len();
        if n == 0 {
            return Err(GraphError::Invalid("graph has no vertices".into()));
        }
        if labels.len() != n || raw_ids.len() != n {
            return Err(GraphError::Invalid(format!(
                "length mismatch: {n} feature vectors, {} labels, {} raw ids",
                labels.len(),
                raw_ids.len()
            )));
        }
        let num_classes = label_names.len();
        if num_classes == 0 {
            return Err(GraphError::Invalid("no class labels".into()));
        }
        if vocab_dim == 0 {
            return Err(GraphError::Invalid("vocab_dim must be positive".into()));
        }
        if let Some(f) = features.iter().find(|f| f.dim() != vocab_dim) {
            return Err(GraphError::Invalid(format!(
                "feature dimension {} != vocab_dim {vocab_dim}",
                f.dim()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(GraphError::Invalid(format!(
                "label {l} >= num_classes {num_classes}"
            )));
        }
        let mut seen_raw = HashMap::with_capacity(n);
        for (v, raw) in raw_ids.iter().enumerate() {
            if seen_raw.insert(raw.as_str(), v).is_some() {
                return Err(GraphError::Invalid(format!("duplicate raw id {raw:?}")));
            }
        }

        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for &(src, dst) in &edges {
            if src >= n || dst >= n {
                return Err(GraphError::VertexOutOfRange {
                    vertex: src.max(dst),
                    n,
                });
            }
            if src == dst {
                return Err(GraphError::Invalid(format!("self-loop on vertex {src}")));
            }
            if !seen.insert((src, dst)) {
                return Err(GraphError::Invalid(format!("duplicate edge ({src}, {dst})")));
            }
            out_adj[src].push(dst);
            in_adj[dst].push(src);
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_unstable();
        }

        Ok(Self {
            edges,
            out_adj,
            in_adj,
            features,
            labels,
            num_classes,
            vocab_dim,
            label_names,
            raw_ids,
            drops,
        })
    }

    pub fn n(&self) -> usize {
        self.features.len()
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn vocab_dim(&self) -> usize {
        self.vocab_dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn raw_ids(&self) -> &[String] {
        &self.raw_ids
    }

    pub fn drop_counts(&self) -> DropCounts {
        self.drops
    }

    pub fn out_neighbors(&self, v: VertexId) -> Result<&[VertexId], GraphError> {
        self.check(v)?;
        Ok(&self.out_adj[v])
    }

    pub fn in_neighbors(&self, v: VertexId) -> Result<&[VertexId], GraphError> {
        self.check(v)?;
        Ok(&self.in_adj[v])
    }

    pub fn features(&self, v: VertexId) -> Result<&FeatureVector, GraphError> {
        self.check(v)?;
        Ok(&self.features[v])
    }

    pub fn label(&self, v: VertexId) -> Result<usize, GraphError> {
        self.check(v)?;
        Ok(self.labels[v])
    }

    /// Looks up a vertex by its raw dataset identifier.
    pub fn vertex_by_raw_id(&self, raw: &str) -> Option<VertexId> {
        self.raw_ids.iter().position(|r| r == raw)
    }

    /// Sorted, deduplicated union of in- and out-neighbors.
    pub fn undirected_neighbors(&self, v: VertexId) -> Result<Vec<VertexId>, GraphError> {
        self.check(v)?;
        let (out, inn) = (&self.out_adj[v], &self.in_adj[v]);
        let mut merged = Vec::with_capacity(out.len() + inn.len());
        let (mut a, mut b) = (0, 0);
        while a < out.len() || b < inn.len() {
            let next = match (out.get(a), inn.get(b)) {
                (Some(&x), Some(&y)) if x == y => {
                    a += 1;
                    b += 1;
                    x
                }
                (Some(&x), Some(&y)) if x < y => {
                    a += 1;
                    x
                }
                (Some(_), Some(&y)) => {
                    b += 1;
                    y
                }
                (Some(&x), None) => {
                    a += 1;
                    x
                }
                (None, Some(&y)) => {
                    b += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            merged.push(next);
        }
        Ok(merged)
    }

    /// In-degree plus out-degree.
    pub fn total_degree(&self, v: VertexId) -> Result<usize, GraphError> {
        self.check(v)?;
        Ok(self.out_adj[v].len() + self.in_adj[v].len())
    }

    /// Subgraph induced by `keep` (listed in the order the new ids should
    /// take). Label names and vocabulary are preserved.
    pub fn induced_subgraph(&self, keep: &[VertexId]) -> Result<Graph, GraphError> {
        let mut remap = vec![usize::MAX; self.n()];
        for (new, &old) in keep.iter().enumerate() {
            self.check(old)?;
            if remap[old] != usize::MAX {
                return Err(GraphError::Invalid(format!("vertex {old} kept twice")));
            }
            remap[old] = new;
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(s, d)| remap[s] != usize::MAX && remap[d] != usize::MAX)
            .map(|&(s, d)| (remap[s], remap[d]))
            .collect();
        Graph::from_parts(
            keep.iter().map(|&v| self.features[v].clone()).collect(),
            keep.iter().map(|&v| self.labels[v]).collect(),
            edges,
            self.label_names.clone(),
            keep.iter().map(|&v| self.raw_ids[v].clone()).collect(),
            self.vocab_dim,
            DropCounts::default(),
        )
    }

    fn check(&self, v: VertexId) -> Result<(), GraphError> {
        if v < self.n() {
            Ok(())
        } else {
            Err(GraphError::VertexOutOfRange { vertex: v, n: self.n() })
        }
    }

    pub fn to_json(&self) -> Result<String, GraphError> {
        Ok(serde_json::to_string(&DatasetJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: DatasetJson = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save_json(&self, path: &Path) -> Result<(), GraphError> {
        fs::write(path, self.to_json()?).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_json(path: &Path) -> Result<Self, GraphError> {
        Self::from_json(&read(path)?)
    }
}

/// Canonical on-disk dataset document.
#[derive(Debug, Serialize, Deserialize)]
struct DatasetJson {
    n: usize,
    vocab_dim: usize,
    num_classes: usize,
    labels: Vec<usize>,
    features: Vec<Vec<u32>>,
    edges: Vec<[VertexId; 2]>,
    label_names: Vec<String>,
    raw_id_map: Vec<String>,
    drop_counts: DropCounts,
}

impl From<&Graph> for DatasetJson {
    fn from(g: &Graph) -> Self {
        Self {
            n: g.n(),
            vocab_dim: g.vocab_dim,
            num_classes: g.num_classes,
            labels: g.labels.clone(),
            features: g.features.iter().map(|f| f.indices.clone()).collect(),
            edges: g.edges.iter().map(|&(s, d)| [s, d]).collect(),
            label_names: g.label_names.clone(),
            raw_id_map: g.raw_ids.clone(),
            drop_counts: g.drops,
        }
    }
}

impl TryFrom<DatasetJson> for Graph {
    type Error = GraphError;

    fn try_from(doc: DatasetJson) -> Result<Self, GraphError> {
        if doc.features.len() != doc.n {
            return Err(GraphError::Invalid(format!(
                "n = {} but {} feature lists",
                doc.n,
                doc.features.len()
            )));
        }
        if doc.label_names.len() != doc.num_classes {
            return Err(GraphError::Invalid(format!(
                "num_classes = {} but {} label names",
                doc.num_classes,
                doc.label_names.len()
            )));
        }
        let features = doc
            .features
            .into_iter()
            .map(|idx| FeatureVector::new(idx, doc.vocab_dim))
            .collect::<Result<_, _>>()?;
        Graph::from_parts(
            features,
            doc.labels,
            doc.edges.into_iter().map(|[s, d]| (s, d)).collect(),
            doc.label_names,
            doc.raw_id_map,
            doc.vocab_dim,
            doc.drop_counts,
        )
    }
}

fn read(path: &Path) -> Result<String, GraphError> {
    fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a dataset in the `.content` / `.cites` layout.
///
/// Content lines are `<raw_id> <f_0> ... <f_{d-1}> <label>` with 0/1
/// features; cites lines are `<cited> <citing>` and become the directed edge
/// citing -> cited. Dangling, duplicate and self-loop citations are dropped
/// and counted.
pub fn load_citation_dataset(content_path: &Path, cites_path: &Path) -> Result<Graph, GraphError> {
    let content = read(content_path)?;
    let cites = read(cites_path)?;
    parse_citation_dataset(
        &content,
        &content_path.display().to_string(),
        &cites,
        &cites_path.display().to_string(),
    )
}

/// In-memory form of [`load_citation_dataset`]; the names are used in errors.
pub fn parse_citation_dataset(
    content: &str,
    content_name: &str,
    cites: &str,
    cites_name: &str,
) -> Result<Graph, GraphError> {
    let parse_err = |path: &str, line: usize, message: String| GraphError::Parse {
        path: path.to_string(),
        line,
        message,
    };

    let mut raw_ids = Vec::new();
    let mut index_of: HashMap<String, VertexId> = HashMap::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut vocab_dim = None;

    for (lineno, line) in content.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() < 3 {
            return Err(parse_err(
                content_name,
                lineno,
                format!("expected id, features and label, found {} fields", tokens.len()),
            ));
        }
        let dim = tokens.len() - 2;
        match vocab_dim {
            None => vocab_dim = Some(dim),
            Some(d) if d != dim => {
                return Err(parse_err(
                    content_name,
                    lineno,
                    format!("expected {} fields, found {}", d + 2, tokens.len()),
                ))
            }
            Some(_) => {}
        }
        let raw = tokens[0];
        if index_of.contains_key(raw) {
            return Err(parse_err(content_name, lineno, format!("duplicate vertex id {raw:?}")));
        }
        let mut active = Vec::new();
        for (j, tok) in tokens[1..=dim].iter().enumerate() {
            match *tok {
                "0" => {}
                "1" => active.push(j as u32),
                other => {
                    return Err(parse_err(
                        content_name,
                        lineno,
                        format!("non-binary feature token {other:?} at position {j}"),
                    ))
                }
            }
        }
        let label_str = tokens[dim + 1];
        let label = match label_names.iter().position(|l| l == label_str) {
            Some(l) => l,
            None => {
                label_names.push(label_str.to_string());
                label_names.len() - 1
            }
        };
        index_of.insert(raw.to_string(), raw_ids.len());
        raw_ids.push(raw.to_string());
        features.push(FeatureVector::new(active, dim)?);
        labels.push(label);
    }

    let Some(vocab_dim) = vocab_dim else {
        return Err(GraphError::EmptyContent {
            path: content_name.to_string(),
        });
    };

    let mut drops = DropCounts::default();
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for (lineno, line) in cites.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.len() {
            0 => continue,
            2 => {}
            k => {
                return Err(parse_err(
                    cites_name,
                    lineno,
                    format!("expected 2 fields, found {k}"),
                ))
            }
        }
        let (Some(&cited), Some(&citing)) = (index_of.get(tokens[0]), index_of.get(tokens[1]))
        else {
            drops.dangling += 1;
            continue;
        };
        if cited == citing {
            drops.self_loop += 1;
        } else if !seen.insert((citing, cited)) {
            drops.duplicate += 1;
        } else {
            edges.push((citing, cited));
        }
    }

    Graph::from_parts(features, labels, edges, label_names, raw_ids, vocab_dim, drops)
}

/// Disjoint train/test partition of the vertex set.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train_ids: Vec<VertexId>,
    pub test_ids: Vec<VertexId>,
    pub ratio: f64,
    pub seed: u64,
}

/// Shuffles `0..n` with the split stream of the seeded ChaCha8 generator and
/// takes the first `round(ratio * n)` ids for training. Both id lists are
/// returned in ascending order.
pub fn split(g: &Graph, ratio: f64, seed: u64) -> Result<DatasetSplit, GraphError> {
    split_n(g.n(), ratio, seed)
}

pub(crate) fn split_n(n: usize, ratio: f64, seed: u64) -> Result<DatasetSplit, GraphError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(GraphError::BadRatio(ratio));
    }
    let mut order: Vec<VertexId> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, Stream::Split));
    let n_train = (ratio * n as f64).round() as usize;
    let mut train_ids = order[..n_train].to_vec();
    let mut test_ids = order[n_train..].to_vec();
    train_ids.sort_unstable();
    test_ids.sort_unstable();
    Ok(DatasetSplit {
        train_ids,
        test_ids,
        ratio,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_parts(
            (0..n).map(|_| FeatureVector::new(vec![], 1).unwrap()).collect(),
            vec![0; n],
            edges.to_vec(),
            vec!["a".into()],
            (0..n).map(|i| i.to_string()).collect(),
            1,
            DropCounts::default(),
        )
        .unwrap()
    }

    #[test]
    fn three_vertex_parse_drops_self_loop() {
        let content = "a 1 0 x\nb 0 1 y\nc 1 1 x\n";
        let cites = "a b\nb c\na a\n";
        let g = parse_citation_dataset(content, "c", cites, "e").unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges().len(), 2);
        assert_eq!(g.drop_counts().self_loop, 1);
        // second column cites first column
        assert_eq!(g.edges(), &[(1, 0), (2, 1)]);
        assert_eq!(g.label_names(), &["x".to_string(), "y".to_string()]);
        assert_eq!(g.labels(), &[0, 1, 0]);
        assert_eq!(g.features(2).unwrap().indices(), &[0, 1]);
    }

    #[test]
    fn single_vertex_empty_cites() {
        let g = parse_citation_dataset("only 0 1 0 L\n", "c", "", "e").unwrap();
        assert_eq!(g.n(), 1);
        assert!(g.edges().is_empty());
        assert_eq!(g.vocab_dim(), 3);
    }

    #[test]
    fn dangling_and_duplicate_citations_counted() {
        let content = "a 1 x\nb 0 x\n";
        let cites = "a b\na b\nb zz\nqq a\n";
        let g = parse_citation_dataset(content, "c", cites, "e").unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(
            g.drop_counts(),
            DropCounts {
                dangling: 2,
                duplicate: 1,
                self_loop: 0
            }
        );
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let content = "a 1 0 x\nb 0 1 y\nc 1 x\n";
        match parse_citation_dataset(content, "c", "", "e") {
            Err(GraphError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_citation_dataset("a 1 2 x\n", "c", "", "e") {
            Err(GraphError::Parse { line: 1, message, .. }) => assert!(message.contains("non-binary")),
            other => panic!("unexpected {other:?}"),
        }
        match parse_citation_dataset("a 1 x\n", "c", "a b c\n", "e") {
            Err(GraphError::Parse { path, line: 1, .. }) => assert_eq!(path, "e"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_content_is_an_error() {
        assert!(matches!(
            parse_citation_dataset("\n\n", "c", "", "e"),
            Err(GraphError::EmptyContent { .. })
        ));
    }

    #[test]
    fn undirected_neighbors_examples() {
        assert_eq!(toy(3, &[(0, 1), (2, 0)]).undirected_neighbors(0).unwrap(), vec![1, 2]);
        assert_eq!(toy(2, &[(0, 1), (1, 0)]).undirected_neighbors(0).unwrap(), vec![1]);
        assert!(toy(1, &[]).undirected_neighbors(0).unwrap().is_empty());
        assert!(toy(1, &[]).undirected_neighbors(1).is_err());
    }

    #[test]
    fn total_degree_examples() {
        assert_eq!(toy(3, &[(0, 1), (2, 0)]).total_degree(0).unwrap(), 2);
        assert_eq!(toy(3, &[(0, 1), (0, 2), (1, 0)]).total_degree(0).unwrap(), 3);
        assert_eq!(toy(2, &[]).total_degree(1).unwrap(), 0);
        assert!(toy(2, &[]).total_degree(2).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = split_n(10, 0.7, 42).unwrap();
        assert_eq!((s.train_ids.len(), s.test_ids.len()), (7, 3));
        assert_eq!(s, split_n(10, 0.7, 42).unwrap());
        assert_eq!(split_n(2708, 0.9, 1).unwrap().train_ids.len(), 2437);
        assert!(split_n(10, 0.0, 1).is_err());
        assert!(split_n(10, 1.0, 1).is_err());
        assert!(split_n(10, f64::NAN, 1).is_err());
    }

    #[test]
    fn induced_subgraph_keeps_internal_edges() {
        let g = toy(4, &[(0, 1), (1, 2), (2, 3)]);
        let sub = g.induced_subgraph(&[2, 1, 3]).unwrap();
        assert_eq!(sub.n(), 3);
        assert_eq!(sub.edges(), &[(1, 0), (0, 2)]);
        assert_eq!(sub.raw_ids(), &["2", "1", "3"]);
    }

    #[test]
    fn from_parts_rejects_bad_input() {
        let f = || FeatureVector::new(vec![], 1).unwrap();
        let names = vec!["a".to_string()];
        let ids = vec!["0".to_string(), "1".to_string()];
        assert!(Graph::from_parts(vec![f(), f()], vec![0, 1], vec![], names.clone(), ids.clone(), 1, DropCounts::default()).is_err());
        assert!(Graph::from_parts(vec![f(), f()], vec![0, 0], vec![(0, 0)], names.clone(), ids.clone(), 1, DropCounts::default()).is_err());
        assert!(Graph::from_parts(vec![f(), f()], vec![0, 0], vec![(0, 1), (0, 1)], names, ids, 1, DropCounts::default()).is_err());
        assert!(FeatureVector::new(vec![3], 3).is_err());
        assert!(FeatureVector::new(vec![1, 1], 3).is_err());
    }
}
