//! Finite-difference audit of [`backward_tree`] on small random instances.
//!
//! The numeric side only ever calls [`forward_tree`]; it never touches the
//! backward pass it is checking.

use rand::Rng as _;
use serde::Serialize;

use crate::graph::{DropCounts, FeatureVector, Graph};
use crate::kernel::{finite_diff_grad, relative_error};
use crate::model::{backward_tree, forward_tree, ModelError, ModelParams};
use crate::rng::{stream_rng, Rng, Stream};
use crate::treegen::{DeepTree, TreeMethod, TreeNode};

/// Denominator floor for relative errors: coordinates whose true gradient is
/// below this are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Instances per pooling mode; both plain and attention pooling are run.
    pub instances: usize,
    pub seed: u64,
    pub max_nodes: usize,
    pub max_hidden: usize,
    pub max_classes: usize,
    pub step: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            instances: 50,
            seed: 0,
            max_nodes: 7,
            max_hidden: 4,
            max_classes: 3,
            step: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Worst {
    pub instance: usize,
    pub attention: bool,
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub instances: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub worst: Option<Worst>,
}

/// A random `(graph, tree, params, label)` problem.
pub struct Instance {
    pub graph: Graph,
    pub tree: DeepTree,
    pub params: ModelParams,
    pub label: usize,
    pub attention: bool,
}

/// Random tree over a handful of vertices; vertices may repeat, as they do in
/// deep trees.
pub fn random_instance(rng: &mut Rng, cfg: &GradCheckConfig, attention: bool) -> Instance {
    let input_dim = rng.gen_range(2..=6);
    let hidden = rng.gen_range(1..=cfg.max_hidden);
    let classes = rng.gen_range(2..=cfg.max_classes.max(2));
    let n_vertices = rng.gen_range(1..=4);
    let features = (0..n_vertices)
        .map(|_| {
            let active = (0..input_dim as u32).filter(|_| rng.gen_bool(0.5)).collect();
            FeatureVector::new(active, input_dim).expect("valid indices")
        })
        .collect();
    let graph = Graph::from_parts(
        features,
        vec![0; n_vertices],
        vec![],
        (0..classes).map(|c| format!("c{c}")).collect(),
        (0..n_vertices).map(|v| format!("v{v}")).collect(),
        input_dim,
        DropCounts::default(),
    )
    .expect("valid graph");

    let n_nodes = rng.gen_range(1..=cfg.max_nodes);
    let mut nodes: Vec<TreeNode> = (0..n_nodes)
        .map(|i| TreeNode {
            tree_index: i,
            vertex: if i == 0 { 0 } else { rng.gen_range(0..n_vertices) },
            children: Vec::new(),
        })
        .collect();
    for i in 1..n_nodes {
        let parent = rng.gen_range(0..i);
        nodes[parent].children.push(i);
    }
    let tree = DeepTree::from_nodes(0, TreeMethod::Dtg, None, nodes).expect("valid tree");
    let params = ModelParams::random_uniform(input_dim, hidden, classes, attention, 1.0, rng);
    let label = rng.gen_range(0..classes);
    Instance {
        graph,
        tree,
        params,
        label,
        attention,
    }
}

/// Largest coordinate-wise relative error for one instance, with the
/// offending flat index.
pub fn check_instance(inst: &Instance, step: f64) -> Result<(f64, usize, f64, f64), ModelError> {
    let trace = forward_tree(&inst.params, &inst.tree, &inst.graph, inst.attention)?;
    let (_, grads) = backward_tree(&inst.params, &trace, inst.label)?;
    let analytic = grads.to_flat(&inst.params);

    let objective = |flat: &[f64]| {
        let p = inst.params.with_flat(flat);
        forward_tree(&p, &inst.tree, &inst.graph, inst.attention)
            .and_then(|t| t.loss(inst.label))
            .unwrap_or(f64::NAN)
    };
    let numeric = finite_diff_grad(objective, &inst.params.flatten(), step)?;

    let mut worst = (0.0, 0, 0.0, 0.0);
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = relative_error(a, n, REL_ERROR_FLOOR);
        if err > worst.0 {
            worst = (err, i, a, n);
        }
    }
    Ok(worst)
}

fn param_name(params: &ModelParams, mut index: usize) -> (String, usize) {
    for (name, t) in params.tensors() {
        if index < t.len() {
            return (name, index);
        }
        index -= t.len();
    }
    ("?".into(), index)
}

pub fn run(cfg: &GradCheckConfig) -> Result<GradCheckReport, ModelError> {
    let mut rng = stream_rng(cfg.seed, Stream::GradCheck);
    let mut report = GradCheckReport {
        instances: 0,
        coordinates: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for instance in 0..cfg.instances {
        for attention in [false, true] {
            let inst = random_instance(&mut rng, cfg, attention);
            let (err, index, analytic, numeric) = check_instance(&inst, cfg.step)?;
            report.instances += 1;
            report.coordinates += inst.params.num_params();
            if err > report.max_rel_error || report.worst.is_none() {
                let (param, index) = param_name(&inst.params, index);
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some(Worst {
                    instance,
                    attention,
                    param,
                    index,
                    analytic,
                    numeric,
                });
            }
        }
    }
    Ok(report)
}
