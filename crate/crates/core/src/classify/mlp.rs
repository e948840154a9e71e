use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{classifier_loss_grad, softmax, softmax_cross_entropy, Adam, AdamConfig, Network};
use crate::error::{Error, Result};
use crate::features::StandardizationStats;

pub const MLP_FORMAT: &str = "IGGY-MLP-1";

/// Rows at or above this count train with mini-batches instead of full batch.
pub const FULL_BATCH_LIMIT: usize = 10_000;
const MIN_ROWS_FOR_VALIDATION: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub adam: AdamConfig,
    /// α in `α/(2n)·Σ‖W‖²`
    pub l2: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// minimum loss decrease that resets the patience counter
    pub tol: f64,
    pub validation_fraction: f64,
    /// `None`: full batch below [`FULL_BATCH_LIMIT`] rows, else 32.
    pub batch_size: Option<usize>,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![256],
            adam: AdamConfig::default(),
            l2: 2.0,
            max_epochs: 500,
            patience: 10,
            tol: 1e-4,
            validation_fraction: 0.1,
            batch_size: None,
            standardize: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub best_epoch: usize,
    /// penalized training loss per epoch
    pub train_loss: Vec<f64>,
    /// validation cross-entropy per epoch; empty without a validation split
    pub val_loss: Vec<f64>,
    pub final_train_loss: f64,
    pub final_val_loss: Option<f64>,
    pub early_stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub format: String,
    /// hash of the feature spec the model was trained on
    pub spec_hash: Option<String>,
    pub feature_names: Vec<String>,
    pub standardization: Option<StandardizationStats>,
    pub network: Network,
    pub config: MlpConfig,
}

pub(crate) fn labels_to_classes(y: &[bool]) -> Result<Vec<usize>> {
    let pos = y.iter().filter(|v| **v).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::invalid("training labels contain a single class"));
    }
    Ok(y.iter().map(|v| usize::from(*v)).collect())
}

pub(crate) fn check_finite(x: &Array2<f64>, what: &str) -> Result<()> {
    if let Some(((r, c), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "{what} has non-finite value {v} at row {r}, column {c}"
        )));
    }
    Ok(())
}

/// Seeded stratified hold-out: about `fraction` of each class, none when
/// the data set is tiny.
pub(crate) fn validation_split(
    y: &[usize],
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let all: Vec<usize> = (0..y.len()).collect();
    if fraction <= 0.0 || y.len() < MIN_ROWS_FOR_VALIDATION {
        return (all, Vec::new());
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..2 {
        let mut idx: Vec<usize> = all.iter().copied().filter(|i| y[*i] == class).collect();
        idx.shuffle(rng);
        let k = ((idx.len() as f64 * fraction).round() as usize).min(idx.len().saturating_sub(1));
        val.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

pub(crate) struct LoopOptions {
    pub max_epochs: usize,
    pub patience: usize,
    pub tol: f64,
    pub batch_size: Option<usize>,
}

impl From<&MlpConfig> for LoopOptions {
    fn from(c: &MlpConfig) -> Self {
        LoopOptions {
            max_epochs: c.max_epochs,
            patience: c.patience,
            tol: c.tol,
            batch_size: c.batch_size,
        }
    }
}

/// Epoch loop shared by every network trainer.
///
/// `step` updates the state on one batch and returns its loss; `eval`
/// returns unpenalized cross-entropy on a row set. With a validation set the
/// best-scoring state is restored at the end.
pub(crate) fn run_epochs<S: Clone>(
    state: &mut S,
    train: &[usize],
    val: &[usize],
    opts: &LoopOptions,
    rng: &mut ChaCha8Rng,
    mut step: impl FnMut(&mut S, &[usize]) -> Result<f64>,
    eval: impl Fn(&S, &[usize]) -> f64,
) -> Result<TrainReport> {
    let batch = opts
        .batch_size
        .unwrap_or(if train.len() < FULL_BATCH_LIMIT {
            train.len()
        } else {
            32
        })
        .max(1);
    let mut order = train.to_vec();
    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_state: Option<S> = None;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut early_stopped = false;

    for epoch in 1..=opts.max_epochs.max(1) {
        if batch < order.len() {
            order.shuffle(rng);
        }
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            total += step(state, chunk)? * chunk.len() as f64;
        }
        let epoch_loss = total / order.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "training loss diverged at epoch {epoch}"
            )));
        }
        train_loss.push(epoch_loss);
        let monitored = if val.is_empty() {
            epoch_loss
        } else {
            let v = eval(state, val);
            val_loss.push(v);
            v
        };
        if monitored < best - opts.tol {
            best = monitored;
            best_epoch = epoch;
            stale = 0;
            if !val.is_empty() {
                best_state = Some(state.clone());
            }
        } else {
            stale += 1;
            if stale >= opts.patience {
                early_stopped = true;
                break;
            }
        }
    }
    if let Some(s) = best_state {
        *state = s;
    }
    Ok(TrainReport {
        epochs: train_loss.len(),
        best_epoch,
        final_train_loss: eval(state, train),
        final_val_loss: (!val.is_empty()).then(|| eval(state, val)),
        train_loss,
        val_loss,
        early_stopped,
    })
}

pub(crate) fn take_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

#[derive(Clone)]
struct MlpState {
    net: Network,
    adam: Adam,
}

/// Trains the MLP classifier. Input columns are standardized first unless
/// disabled in the config.
pub fn train_mlp(
    x: &Array2<f64>,
    y: &[bool],
    config: &MlpConfig,
) -> Result<(MlpModel, TrainReport)> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let classes = labels_to_classes(y)?;
    check_finite(x, "training matrix")?;
    let (xs, standardization) = if config.standardize {
        let stats = StandardizationStats::fit(x);
        (stats.apply(x)?, Some(stats))
    } else {
        (x.clone(), None)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sizes = vec![x.ncols()];
    sizes.extend(&config.hidden);
    sizes.push(2);
    let net = Network::new(&sizes, false, &mut rng)?;
    let (train, val) = validation_split(&classes, config.validation_fraction, &mut rng);

    let adam = Adam::new(&net, config.adam);
    let mut state = MlpState { net, adam };
    let l2 = config.l2;
    let report = run_epochs(
        &mut state,
        &train,
        &val,
        &config.into(),
        &mut rng,
        |s, rows| {
            let xb = take_rows(&xs, rows);
            let yb: Vec<usize> = rows.iter().map(|i| classes[*i]).collect();
            let (loss, grads) = classifier_loss_grad(&s.net, &xb, &yb, l2);
            s.adam.step(&mut s.net, &grads);
            Ok(loss)
        },
        |s, rows| {
            let xb = take_rows(&xs, rows);
            let yb: Vec<usize> = rows.iter().map(|i| classes[*i]).collect();
            softmax_cross_entropy(s.net.forward(&xb).output(), &yb).0
        },
    )?;
    state.net.check_shapes()?;
    Ok((
        MlpModel {
            format: MLP_FORMAT.to_string(),
            spec_hash: None,
            feature_names: Vec::new(),
            standardization,
            network: state.net,
            config: config.clone(),
        },
        report,
    ))
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    /// Class probabilities, one row per input row.
    pub fn predict_proba_rows(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model expects {} columns, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        check_finite(x, "prediction matrix")?;
        let xs = match &self.standardization {
            Some(s) => s.apply(x)?,
            None => x.clone(),
        };
        Ok(softmax(self.network.forward(&xs).output()))
    }

    /// Probability of class 1 per row.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        Ok(self.predict_proba_rows(x)?.column(1).to_owned())
    }
}
