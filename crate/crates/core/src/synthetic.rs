//! Seeded generator of citation-style datasets in the `.content` / `.cites`
//! text layout.
//!
//! Used as a stand-in when the public Cora / WebKB files are not on disk.
//! The generator reproduces a dataset's cardinalities (vertices, citation
//! lines, vocabulary, classes) and plants two signals:
//!
//! * words: each class owns a contiguous block of the vocabulary, and each
//!   word of a document comes from its class block with probability
//!   `topic_fraction`, otherwise uniformly from the whole vocabulary;
//! * links: a citation's cited endpoint is in the citing vertex's class with
//!   probability `homophily`, in the "partner" class `(c + 1) mod k` with
//!   probability `partner`, otherwise anywhere. Cited endpoints are chosen
//!   with Pareto(2.5) popularity weights, giving heavy-tailed degrees.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng as _;

use crate::graph::{parse_citation_dataset, Graph, GraphError};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub name: String,
    pub n: usize,
    pub citations: usize,
    pub vocab_dim: usize,
    pub num_classes: usize,
    pub words_per_vertex: usize,
    pub topic_fraction: f64,
    pub homophily: f64,
    pub partner: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Cora's published sizes: 2708 papers, 5429 citations, 1433 words,
    /// 7 classes. Strongly homophilous.
    pub fn cora_like(seed: u64) -> Self {
        Self {
            name: "cora-synthetic".into(),
            n: 2708,
            citations: 5429,
            vocab_dim: 1433,
            num_classes: 7,
            words_per_vertex: 18,
            topic_fraction: 0.2,
            homophily: 0.8,
            partner: 0.0,
            seed,
        }
    }

    /// WebKB's published sizes as distributed with 1703-word features and 5
    /// classes: 877 pages, 1608 links. Weak same-class linking, with most
    /// structure between paired classes.
    pub fn webkb_like(seed: u64) -> Self {
        Self {
            name: "webkb-synthetic".into(),
            n: 877,
            citations: 1608,
            vocab_dim: 1703,
            num_classes: 5,
            words_per_vertex: 30,
            topic_fraction: 0.15,
            homophily: 0.3,
            partner: 0.4,
            seed,
        }
    }
}

/// Text of the two dataset files.
#[derive(Debug, Clone)]
pub struct DatasetFiles {
    pub content: String,
    pub cites: String,
}

pub fn generate_files(spec: &SyntheticSpec) -> DatasetFiles {
    assert!(spec.num_classes >= 1 && spec.n >= spec.num_classes && spec.vocab_dim >= spec.num_classes);
    let max_pairs = spec.n * (spec.n - 1) / 2;
    assert!(spec.citations <= max_pairs / 2, "too many citations for {} vertices", spec.n);
    let mut rng = stream_rng(spec.seed, Stream::Synthetic);
    let k = spec.num_classes;

    // balanced-ish labels in shuffled order
    let labels: Vec<usize> = (0..spec.n).map(|_| rng.gen_range(0..k)).collect();
    let block = spec.vocab_dim / k;

    let mut content = String::new();
    for (v, &label) in labels.iter().enumerate() {
        let mut words = vec![false; spec.vocab_dim];
        let mut placed = 0;
        while placed < spec.words_per_vertex.min(spec.vocab_dim) {
            let w = if rng.gen_bool(spec.topic_fraction) {
                label * block + rng.gen_range(0..block)
            } else {
                rng.gen_range(0..spec.vocab_dim)
            };
            if !words[w] {
                words[w] = true;
                placed += 1;
            }
        }
        write!(content, "p{v}").unwrap();
        for present in words {
            content.push_str(if present { " 1" } else { " 0" });
        }
        writeln!(content, " class{label}").unwrap();
    }

    let popularity: Vec<f64> = (0..spec.n)
        .map(|_| (1.0 - rng.gen::<f64>()).powf(-1.0 / 2.5))
        .collect();
    let members: Vec<Vec<usize>> = (0..k)
        .map(|c| (0..spec.n).filter(|&v| labels[v] == c).collect())
        .collect();
    let pickers: Vec<Option<WeightedIndex<f64>>> = members
        .iter()
        .map(|m| WeightedIndex::new(m.iter().map(|&v| popularity[v])).ok())
        .collect();
    let anyone = WeightedIndex::new(&popularity).expect("positive weights");

    let mut seen = HashSet::new();
    let mut cites = String::new();
    while seen.len() < spec.citations {
        let citing = rng.gen_range(0..spec.n);
        let roll: f64 = rng.gen();
        let class = if roll < spec.homophily {
            Some(labels[citing])
        } else if roll < spec.homophily + spec.partner {
            Some((labels[citing] + 1) % k)
        } else {
            None
        };
        let cited = match class.and_then(|c| pickers[c].as_ref().map(|p| (c, p))) {
            Some((c, picker)) => members[c][picker.sample(&mut rng)],
            None => anyone.sample(&mut rng),
        };
        if cited == citing || !seen.insert((citing.min(cited), citing.max(cited))) {
            continue;
        }
        writeln!(cites, "p{cited} p{citing}").unwrap();
    }

    DatasetFiles { content, cites }
}

pub fn generate(spec: &SyntheticSpec) -> Result<Graph, GraphError> {
    let files = generate_files(spec);
    parse_citation_dataset(&files.content, &spec.name, &files.cites, &spec.name)
}
