//! JSON checkpoints of trained parameters.
//!
//! Floats are written in shortest round-trip decimal form (at most 17
//! significant digits) and parsed with correct rounding, so a save/load
//! cycle reproduces every `f64` bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::Matrix;
use crate::model::{ModelParams, GATES};
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Tensor {
    Matrix(Vec<Vec<f64>>),
    Vector(Vec<f64>),
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDoc {
    hidden_dim: usize,
    input_dim: usize,
    num_classes: usize,
    seed: u64,
    method: String,
    attention: bool,
    max_count: usize,
    tensors: BTreeMap<String, Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, CheckpointError> {
        let p = &self.params;
        let mut tensors = BTreeMap::new();
        for g in GATES {
            let gi = g as usize;
            tensors.insert(format!("W_{}", g.name()), Tensor::Matrix(p.w_x[gi].transpose().to_rows()));
            tensors.insert(format!("U_{}", g.name()), Tensor::Matrix(p.u_h[gi].to_rows()));
            tensors.insert(format!("b_{}", g.name()), Tensor::Vector(p.bias[gi].clone()));
        }
        tensors.insert("W_s".into(), Tensor::Matrix(p.w_s.to_rows()));
        tensors.insert("b_s".into(), Tensor::Vector(p.b_s.clone()));
        if let Some(att) = &p.w_att {
            tensors.insert("W_att".into(), Tensor::Matrix(att.to_rows()));
        }
        let doc = CheckpointDoc {
            hidden_dim: p.hidden_dim(),
            input_dim: p.input_dim(),
            num_classes: p.num_classes(),
            seed: self.config.seed,
            method: self.config.method.to_string(),
            attention: p.has_attention(),
            max_count: self.config.max_count,
            tensors,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    /// Restores parameters and the config fields a checkpoint records; the
    /// remaining optimizer settings take their defaults.
    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let mut doc: CheckpointDoc = serde_json::from_str(text)?;
        let invalid = |m: String| CheckpointError::Invalid(m);
        let mut take_matrix = |name: &str| -> Result<Matrix, CheckpointError> {
            match doc.tensors.remove(name) {
                Some(Tensor::Matrix(rows)) => Matrix::from_rows(&rows).map_err(|e| invalid(format!("{name}: {e}"))),
                _ => Err(invalid(format!("missing matrix {name}"))),
            }
        };
        let w_x = [take_matrix("W_f")?, take_matrix("W_i")?, take_matrix("W_o")?, take_matrix("W_u")?]
            .map(|w| w.transpose());
        let u_h = [take_matrix("U_f")?, take_matrix("U_i")?, take_matrix("U_o")?, take_matrix("U_u")?];
        let w_s = take_matrix("W_s")?;
        let w_att = if doc.attention { Some(take_matrix("W_att")?) } else { None };
        let mut take_vector = |name: &str| -> Result<Vec<f64>, CheckpointError> {
            match doc.tensors.remove(name) {
                Some(Tensor::Vector(v)) => Ok(v),
                _ => Err(invalid(format!("missing vector {name}"))),
            }
        };
        let bias = [take_vector("b_f")?, take_vector("b_i")?, take_vector("b_o")?, take_vector("b_u")?];
        let b_s = take_vector("b_s")?;
        let params = ModelParams {
            w_x,
            u_h,
            bias,
            w_s,
            b_s,
            w_att,
        };
        params.validate().map_err(|e| invalid(e.to_string()))?;
        if (params.hidden_dim(), params.input_dim(), params.num_classes()) != (doc.hidden_dim, doc.input_dim, doc.num_classes) {
            return Err(invalid("declared dimensions disagree with tensors".into()));
        }
        let method = doc.method.parse().map_err(|e: crate::trainer::TrainError| invalid(e.to_string()))?;
        Ok(Self {
            config: TrainConfig {
                method,
                hidden_dim: doc.hidden_dim,
                seed: doc.seed,
                max_count: doc.max_count,
                ..TrainConfig::default()
            },
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_json()?).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}
