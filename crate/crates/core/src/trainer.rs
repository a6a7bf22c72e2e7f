//! Training loop, experiment protocol and result export.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{split, DatasetSplit, Graph, GraphError, VertexId};
use crate::metrics::{macro_f1, micro_f1, MetricError};
use crate::model::{backward_tree, forward_tree, ModelError, ModelParams, DEFAULT_HIDDEN_DIM};
use crate::rng::{stream_rng, Rng, Stream};
use crate::treegen::{generate_tree, DeepTree, TreeError, TreeMethod, DEFAULT_MAX_COUNT};

pub const DEFAULT_EPOCHS: usize = 10;
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;
pub const DEFAULT_GRAD_CLIP: f64 = 5.0;
pub const DEFAULT_TRAIN_RATIO: f64 = 0.7;
/// Training proportions swept by default, 70% to 90%.
pub const DEFAULT_RATIOS: [f64; 5] = [0.7, 0.75, 0.8, 0.85, 0.9];

pub const CSV_HEADER: [&str; 11] = [
    "method",
    "dataset",
    "train_ratio",
    "seed",
    "epoch",
    "train_loss",
    "macro_f1",
    "micro_f1",
    "treegen_s",
    "train_s",
    "eval_s",
];

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("training split has {0} distinct class(es); at least 2 are required")]
    TooFewClasses(usize),
    #[error("test split is empty")]
    EmptyTestSet,
    #[error("non-finite loss {loss} at epoch {epoch}, vertex {vertex}")]
    NonFiniteLoss { epoch: usize, vertex: VertexId, loss: f64 },
    #[error("unknown method {0:?} (expected dtrnn, dtrnn-att, glstm or agrnn)")]
    UnknownMethod(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Tree construction and pooling combination being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Deep trees, max pooling.
    Dtrnn,
    /// Deep trees, attention pooling.
    DtrnnAtt,
    /// Depth-two BFS trees, max pooling.
    Glstm,
    /// Depth-two BFS trees, attention pooling.
    Agrnn,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dtrnn, Method::DtrnnAtt, Method::Glstm, Method::Agrnn];

    pub fn tree_method(self) -> TreeMethod {
        match self {
            Method::Dtrnn | Method::DtrnnAtt => TreeMethod::Dtg,
            Method::Glstm | Method::Agrnn => TreeMethod::Bfs2,
        }
    }

    pub fn attention(self) -> bool {
        matches!(self, Method::DtrnnAtt | Method::Agrnn)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dtrnn => "dtrnn",
            Method::DtrnnAtt => "dtrnn-att",
            Method::Glstm => "glstm",
            Method::Agrnn => "agrnn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, TrainError> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| TrainError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub train_ratio: f64,
    pub seed: u64,
    /// Node budget for deep trees.
    pub max_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Dtrnn,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            grad_clip: DEFAULT_GRAD_CLIP,
            train_ratio: DEFAULT_TRAIN_RATIO,
            seed: 0,
            max_count: DEFAULT_MAX_COUNT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be at least 1");
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return bad("train_ratio must lie strictly between 0 and 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return bad("grad_clip must be positive");
        }
        if self.max_count == 0 {
            return bad("max_count must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub train_s: f64,
    pub eval_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub dataset: String,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub best_macro_f1: f64,
    pub best_micro_f1: f64,
    pub treegen_s: f64,
    pub train_s: f64,
    pub eval_s: f64,
}

impl ExperimentRecord {
    pub fn final_epoch(&self) -> &EpochRecord {
        self.epochs.last().expect("at least one epoch")
    }

    /// True when every field except the wall-clock measurements agrees.
    pub fn same_results(&self, other: &Self) -> bool {
        self.dataset == other.dataset
            && self.config == other.config
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                (a.epoch, a.train_loss, a.macro_f1, a.micro_f1) == (b.epoch, b.train_loss, b.macro_f1, b.micro_f1)
            })
    }
}

/// One tree per vertex, indexed by vertex id.
pub fn build_trees(g: &Graph, method: TreeMethod, max_count: usize) -> Result<Vec<DeepTree>, TreeError> {
    (0..g.n()).map(|v| generate_tree(g, v, method, max_count)).collect()
}

/// Per-vertex SGD over a fixed set of trees.
pub struct Trainer<'a> {
    graph: &'a Graph,
    trees: &'a [DeepTree],
    config: TrainConfig,
    params: ModelParams,
    order_rng: Rng,
    epochs_done: usize,
}

impl<'a> Trainer<'a> {
    /// Initializes parameters from the config seed.
    pub fn new(graph: &'a Graph, trees: &'a [DeepTree], config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        if trees.len() != graph.n() {
            return Err(TrainError::Config(format!(
                "{} trees for {} vertices",
                trees.len(),
                graph.n()
            )));
        }
        let params = ModelParams::init(
            graph.vocab_dim(),
            config.hidden_dim,
            graph.num_classes(),
            config.method.attention(),
            &mut stream_rng(config.seed, Stream::Init),
        );
        Ok(Self {
            graph,
            trees,
            order_rng: stream_rng(config.seed, Stream::EpochOrder),
            config,
            params,
            epochs_done: 0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    /// One pass over `ids` in a freshly shuffled order; returns the mean loss.
    pub fn train_epoch(&mut self, ids: &[VertexId]) -> Result<f64, TrainError> {
        let mut order = ids.to_vec();
        order.shuffle(&mut self.order_rng);
        let attention = self.config.method.attention();
        let mut total = 0.0;
        for &v in &order {
            let trace = forward_tree(&self.params, &self.trees[v], self.graph, attention)?;
            let (loss, mut grads) = backward_tree(&self.params, &trace, self.graph.label(v)?)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch: self.epochs_done + 1,
                    vertex: v,
                    loss,
                });
            }
            total += loss;
            grads.clip_global_norm(self.config.grad_clip);
            grads.apply_sgd(&mut self.params, self.config.learning_rate);
        }
        self.epochs_done += 1;
        Ok(if order.is_empty() { 0.0 } else { total / order.len() as f64 })
    }

    pub fn predict(&self, ids: &[VertexId]) -> Result<Vec<usize>, TrainError> {
        let attention = self.config.method.attention();
        ids.iter()
            .map(|&v| Ok(forward_tree(&self.params, &self.trees[v], self.graph, attention)?.predict()))
            .collect()
    }

    /// `(macro_f1, micro_f1)` on `ids`.
    pub fn evaluate(&self, ids: &[VertexId]) -> Result<(f64, f64), TrainError> {
        let preds = self.predict(ids)?;
        let labels: Vec<usize> = ids.iter().map(|&v| self.graph.labels()[v]).collect();
        let k = self.graph.num_classes();
        Ok((macro_f1(&preds, &labels, k)?, micro_f1(&preds, &labels, k)?))
    }
}

fn distinct_classes(g: &Graph, ids: &[VertexId]) -> usize {
    let mut seen = vec![false; g.num_classes()];
    ids.iter().for_each(|&v| seen[g.labels()[v]] = true);
    seen.into_iter().filter(|&s| s).count()
}

/// Full protocol for one configuration: split, build trees, train, and
/// evaluate on the test split after every epoch.
pub fn train(g: &Graph, config: &TrainConfig, dataset: &str) -> Result<(ModelParams, ExperimentRecord), TrainError> {
    config.validate()?;
    let split = split(g, config.train_ratio, config.seed)?;
    train_on_split(g, config, dataset, &split)
}

pub fn train_on_split(
    g: &Graph,
    config: &TrainConfig,
    dataset: &str,
    split: &DatasetSplit,
) -> Result<(ModelParams, ExperimentRecord), TrainError> {
    config.validate()?;
    let classes = distinct_classes(g, &split.train_ids);
    if classes < 2 {
        return Err(TrainError::TooFewClasses(classes));
    }
    if split.test_ids.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }

    let clock = Instant::now();
    let trees = build_trees(g, config.method.tree_method(), config.max_count)?;
    let treegen_s = clock.elapsed().as_secs_f64();

    let mut trainer = Trainer::new(g, &trees, config.clone())?;
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let clock = Instant::now();
        let train_loss = trainer.train_epoch(&split.train_ids)?;
        let train_s = clock.elapsed().as_secs_f64();
        let clock = Instant::now();
        let (macro_f1, micro_f1) = trainer.evaluate(&split.test_ids)?;
        let eval_s = clock.elapsed().as_secs_f64();
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            macro_f1,
            micro_f1,
            train_s,
            eval_s,
        });
    }

    let record = ExperimentRecord {
        dataset: dataset.to_string(),
        config: config.clone(),
        best_macro_f1: epochs.iter().map(|e| e.macro_f1).fold(0.0, f64::max),
        best_micro_f1: epochs.iter().map(|e| e.micro_f1).fold(0.0, f64::max),
        treegen_s,
        train_s: epochs.iter().map(|e| e.train_s).sum(),
        eval_s: epochs.iter().map(|e| e.eval_s).sum(),
        epochs,
    };
    Ok((trainer.into_params(), record))
}

/// Every `(seed, ratio, method)` combination, in that nesting order.
pub fn benchmark(
    g: &Graph,
    dataset: &str,
    methods: &[Method],
    ratios: &[f64],
    seeds: &[u64],
    base: &TrainConfig,
) -> Result<Vec<ExperimentRecord>, TrainError> {
    benchmark_with_progress(g, dataset, methods, ratios, seeds, base, |_| {})
}

pub fn benchmark_with_progress(
    g: &Graph,
    dataset: &str,
    methods: &[Method],
    ratios: &[f64],
    seeds: &[u64],
    base: &TrainConfig,
    mut progress: impl FnMut(&ExperimentRecord),
) -> Result<Vec<ExperimentRecord>, TrainError> {
    if methods.is_empty() || ratios.is_empty() || seeds.is_empty() {
        return Err(TrainError::Config("methods, ratios and seeds must be non-empty".into()));
    }
    if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(TrainError::Config(format!("ratio {r} outside (0, 1)")));
    }
    let mut records = Vec::with_capacity(methods.len() * ratios.len() * seeds.len());
    for &seed in seeds {
        for &train_ratio in ratios {
            for &method in methods {
                let config = TrainConfig {
                    method,
                    train_ratio,
                    seed,
                    ..base.clone()
                };
                let (_, record) = train(g, &config, dataset)?;
                progress(&record);
                records.push(record);
            }
        }
    }
    Ok(records)
}

/// Whether wall-clock columns carry measurements or are zeroed so that
/// output is byte-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    Measured,
    Zeroed,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    method: &'a str,
    dataset: &'a str,
    train_ratio: f64,
    seed: u64,
    epoch: usize,
    train_loss: f64,
    macro_f1: f64,
    micro_f1: f64,
    treegen_s: f64,
    train_s: f64,
    eval_s: f64,
}

fn csv_writer<W: Write>(out: W) -> Result<csv::Writer<W>, TrainError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    Ok(w)
}

/// One row per epoch of every record.
pub fn write_epoch_csv<W: Write>(records: &[ExperimentRecord], out: W, timing: Timing) -> Result<(), TrainError> {
    let mut w = csv_writer(out)?;
    let t = |s: f64| if timing == Timing::Measured { s } else { 0.0 };
    for r in records {
        for e in &r.epochs {
            w.serialize(CsvRow {
                method: r.config.method.as_str(),
                dataset: &r.dataset,
                train_ratio: r.config.train_ratio,
                seed: r.config.seed,
                epoch: e.epoch,
                train_loss: e.train_loss,
                macro_f1: e.macro_f1,
                micro_f1: e.micro_f1,
                treegen_s: t(r.treegen_s),
                train_s: t(e.train_s),
                eval_s: t(e.eval_s),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per record: final-epoch scores and whole-run phase times.
pub fn write_summary_csv<W: Write>(records: &[ExperimentRecord], out: W, timing: Timing) -> Result<(), TrainError> {
    let mut w = csv_writer(out)?;
    let t = |s: f64| if timing == Timing::Measured { s } else { 0.0 };
    for r in records {
        let last = r.final_epoch();
        w.serialize(CsvRow {
            method: r.config.method.as_str(),
            dataset: &r.dataset,
            train_ratio: r.config.train_ratio,
            seed: r.config.seed,
            epoch: last.epoch,
            train_loss: last.train_loss,
            macro_f1: last.macro_f1,
            micro_f1: last.micro_f1,
            treegen_s: t(r.treegen_s),
            train_s: t(r.train_s),
            eval_s: t(r.eval_s),
        })?;
    }
    w.flush()?;
    Ok(())
}
