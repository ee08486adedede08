//! Minimal deterministic neural-network kernel shared by the autoencoder,
//! the LSTM forecaster and the convolutional scalar map.
//!
//! Everything is f64, single-threaded and bit-reproducible given the run
//! seed: parameter initialization, per-epoch batch shuffles and optimizer
//! state all derive from explicit seeds, and parameters are visited in a
//! fixed name order.

mod adam;
mod conv;
mod dense;
mod gradcheck;
mod io;
mod loss;
mod lstm;

pub use adam::{adam_step, AdamState};
pub use conv::Conv2d;
pub use dense::{dense_apply, Dense, DenseCache, Mlp};
pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use io::{load_param_store, write_param_store};
pub use loss::mse_loss;
pub use lstm::{lstm_step, LstmCache, LstmCell};

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Elementwise activation functions used across the stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Linear,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Self::Tanh => z.tanh(),
            Self::Linear => z,
            Self::Relu => z.max(0.0),
        }
    }

    /// Derivative as a function of the pre-activation.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Self::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Self::Linear => 1.0,
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Optimization hyperparameters shared by every trainable model.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    pub seed: u64,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Early stopping: epochs without a `min_delta` improvement of the
    /// validation loss before training halts.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_min_delta")]
    pub min_delta: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_validation_fraction() -> f64 {
    0.2
}
fn default_patience() -> usize {
    50
}
fn default_min_delta() -> f64 {
    1e-6
}

impl TrainConfig {
    pub fn new(learning_rate: f64, batch_size: usize, epochs: usize, seed: u64) -> Self {
        Self {
            learning_rate,
            batch_size,
            epochs,
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            seed,
            validation_fraction: default_validation_fraction(),
            patience: default_patience(),
            min_delta: default_min_delta(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::InvalidArgument("Adam betas must lie in (0, 1)".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidArgument("validation fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Named flat parameter access. Parameter order is fixed by the
/// implementation, which makes optimizer state, persistence and gradient
/// bookkeeping line up deterministically.
pub trait ParamModel {
    /// Read-only view: (name, shape, flat data) in canonical order.
    fn params(&self) -> Vec<(String, Vec<usize>, &[f64])>;
    /// Mutable flat views in the same canonical order.
    fn params_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, _, d)| d.len()).sum()
    }

    fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params().into_iter().map(|(_, _, d)| d.to_vec()).collect()
    }

    fn restore(&mut self, snap: &[Vec<f64>]) {
        for ((_, dst), src) in self.params_mut().into_iter().zip(snap) {
            dst.copy_from_slice(src);
        }
    }

    fn to_store(&self, seed: u64, init_scheme: &str) -> ParamStore {
        ParamStore {
            entries: self
                .params()
                .into_iter()
                .map(|(n, s, d)| (n, s, d.to_vec()))
                .collect(),
            seed,
            init_scheme: init_scheme.to_string(),
        }
    }

    fn load_store(&mut self, store: &ParamStore) -> Result<()> {
        let shapes: Vec<(String, Vec<usize>)> =
            self.params().into_iter().map(|(n, s, _)| (n, s)).collect();
        if shapes.len() != store.entries.len() {
            return Err(Error::InvalidArgument(format!(
                "parameter store holds {} tensors, model expects {}",
                store.entries.len(),
                shapes.len()
            )));
        }
        for ((name, shape), (sname, sshape, _)) in shapes.iter().zip(&store.entries) {
            if name != sname || shape != sshape {
                return Err(Error::InvalidArgument(format!(
                    "tensor mismatch: model has {name:?} {shape:?}, store has {sname:?} {sshape:?}"
                )));
            }
        }
        for ((_, dst), (_, _, src)) in self.params_mut().into_iter().zip(&store.entries) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }
}

/// Named tensor bag: the persistence representation of model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    /// (name, shape, row-major data); shapes are fixed at construction.
    pub entries: Vec<(String, Vec<usize>, Vec<f64>)>,
    /// Seed the parameters were initialized from.
    pub seed: u64,
    pub init_scheme: String,
}

impl ParamStore {
    pub fn get(&self, name: &str) -> Option<(&[usize], &[f64])> {
        self.entries
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, d)| (s.as_slice(), d.as_slice()))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, shape, data) in &self.entries {
            let expect: usize = shape.iter().product();
            if data.len() != expect {
                return Err(Error::InvalidData(format!(
                    "tensor {name} has {} values but shape {shape:?}",
                    data.len()
                )));
            }
            if !data.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidData(format!("tensor {name} holds non-finite values")));
            }
        }
        Ok(())
    }
}

/// Named gradient accumulator, keyed like [`ParamModel::params`].
#[derive(Debug, Clone, Default)]
pub struct GradStore {
    map: std::collections::BTreeMap<String, Vec<f64>>,
}

impl GradStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accumulate(&mut self, name: &str, grad: &[f64]) {
        match self.map.get_mut(name) {
            Some(acc) => {
                debug_assert_eq!(acc.len(), grad.len());
                for (a, g) in acc.iter_mut().zip(grad) {
                    *a += g;
                }
            }
            None => {
                self.map.insert(name.to_string(), grad.to_vec());
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.map.get(name).map(|v| v.as_slice())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.map.values_mut() {
            for g in v.iter_mut() {
                *g *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.map.values().all(|v| v.iter().all(|g| g.is_finite()))
    }
}

/// Glorot (fan-average) uniform initialization: `U(+-sqrt(6/(fan_in+fan_out)))`.
pub fn glorot_uniform(rng: &mut ChaCha20Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Deterministic per-epoch batch order: a seeded Fisher-Yates shuffle of the
/// sample indices, chunked into batches.
pub fn shuffled_batches(
    n_samples: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<usize>> {
    let mut rng = seeded_rng(crate::derive_seed(seed, &format!("batch-order-{epoch}")));
    let mut idx: Vec<usize> = (0..n_samples).collect();
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

/// Validation-plateau early stopping with parameter snapshotting.
pub struct EarlyStopping {
    pub best_loss: f64,
    pub best_epoch: usize,
    patience: usize,
    min_delta: f64,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self { best_loss: f64::INFINITY, best_epoch: 0, patience, min_delta }
    }

    /// Feed one epoch's validation loss; returns `(improved, should_stop)`.
    pub fn update(&mut self, epoch: usize, val_loss: f64) -> (bool, bool) {
        let improved = val_loss < self.best_loss - self.min_delta;
        if improved {
            self.best_loss = val_loss;
            self.best_epoch = epoch;
        }
        let stop = self.patience > 0 && epoch >= self.best_epoch + self.patience;
        (improved, stop)
    }
}

/// Per-epoch loss history of a training run.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
    pub stopped_early: bool,
    pub best_epoch: usize,
}

/// Column-major design helper: gather `columns` of `data` into a fresh matrix
/// `[rows, columns.len()]`.
pub(crate) fn gather_columns(data: &Array2<f64>, columns: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((data.nrows(), columns.len()));
    for (j, &c) in columns.iter().enumerate() {
        out.column_mut(j).assign(&data.column(c));
    }
    out
}
