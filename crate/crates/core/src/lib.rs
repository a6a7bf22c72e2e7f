//! Vertex classification with deep trees and a Child-Sum Tree-LSTM.
//!
//! Pipeline: [`graph`] ingests a citation-style dataset, [`treegen`] turns
//! every vertex's neighborhood into a tree rooted at that vertex, [`model`]
//! runs the Tree-LSTM over the tree and classifies the root, and [`trainer`]
//! runs the split / train / evaluate protocol and exports CSV.

pub mod checkpoint;
pub mod fixtures;
pub mod gradcheck;
pub mod graph;
pub mod kernel;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod synthetic;
pub mod trainer;
pub mod treegen;

pub use graph::{load_citation_dataset, split, DatasetSplit, FeatureVector, Graph, GraphError, VertexId};
pub use model::{backward_tree, forward_tree, predict, ModelParams};
pub use trainer::{benchmark, train, ExperimentRecord, Method, TrainConfig};
pub use treegen::{generate_bfs_tree, generate_deep_tree, tree_stats, DeepTree, TreeMethod};
