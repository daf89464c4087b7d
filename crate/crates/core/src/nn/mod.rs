//! Small dense networks: the feasibility classifier and the two-head
//! state-predictor / target-adjustment network.

mod features;
mod metrics;
mod mlp;
mod train;

pub use features::{
    classify_feasible, feature_len, predict_next_state, predict_residual, predict_transitions,
    transition_features, Feasibility, Residual, TransitionPrediction, RESIDUAL_HEAD, STATE_HEAD,
};
pub use metrics::{accuracy, roc_auc};
pub use mlp::{Activation, Gradients, Head, Loss, MlpModel, Normalizer};
pub use train::{train, EpochMetrics, TrainConfig, TrainReport, TrainingSet};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("model has no head named {0:?}")]
    MissingHead(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Robot(#[from] crate::robot::RobotError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Row-major batch of equally sized vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Batch {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Batch, NnError> {
        if data.len() != rows * cols {
            return Err(NnError::Shape(format!(
                "{} values for a {rows}x{cols} batch",
                data.len()
            )));
        }
        Ok(Batch { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Batch {
        Batch {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Batch, NnError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(NnError::Shape(format!("ragged rows: {} vs {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Batch {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}
