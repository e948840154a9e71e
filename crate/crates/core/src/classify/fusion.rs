use ndarray::{s, Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{
    check_finite, labels_to_classes, run_epochs, take_rows, validation_split, LoopOptions,
    TrainReport,
};
use super::nn::{
    check_gradient, grads_to_flat, hstack, sample_coords, softmax, softmax_cross_entropy, Adam,
    AdamConfig, Dense, GradCheck, Network,
};
use crate::error::{Error, Result};
use crate::features::StandardizationStats;

pub const FUSION_FORMAT: &str = "IGGY-FUSION-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// widths of the feature branch after its input layer
    pub branch: Vec<usize>,
    /// hidden widths of the head
    pub head_hidden: Vec<usize>,
    pub adam: AdamConfig,
    pub l2: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub tol: f64,
    pub validation_fraction: f64,
    pub batch_size: Option<usize>,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            branch: vec![512, 512],
            head_hidden: vec![1024],
            adam: AdamConfig::default(),
            l2: 1e-4,
            max_epochs: 200,
            patience: 10,
            tol: 1e-4,
            validation_fraction: 0.1,
            batch_size: None,
            standardize: true,
            seed: 0,
        }
    }
}

/// Feature-branch MLP whose output is concatenated with a fixed embedding
/// and fed to a classification head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub format: String,
    pub spec_hash: Option<String>,
    pub feature_names: Vec<String>,
    pub embedding_dim: usize,
    pub standardization: Option<StandardizationStats>,
    pub branch: Network,
    pub head: Network,
    pub config: FusionConfig,
}

/// Untrained branch and head for the given widths.
pub fn build_fusion_networks(
    n_features: usize,
    embedding_dim: usize,
    config: &FusionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Network, Network)> {
    if config.branch.is_empty() {
        return Err(Error::invalid(
            "fusion feature branch needs at least one layer",
        ));
    }
    let mut bs = vec![n_features];
    bs.extend(&config.branch);
    let branch = Network::new(&bs, true, rng)?;
    let mut hs = vec![branch.output_dim() + embedding_dim];
    hs.extend(&config.head_hidden);
    hs.push(2);
    let head = Network::new(&hs, false, rng)?;
    Ok((branch, head))
}

pub struct FusionGrad {
    pub loss: f64,
    pub branch: Vec<Dense>,
    pub head: Vec<Dense>,
}

/// Penalized cross-entropy of the fused network and its gradients.
pub fn fusion_loss_grad(
    branch: &Network,
    head: &Network,
    x: &Array2<f64>,
    e: &Array2<f64>,
    y: &[usize],
    l2: f64,
) -> FusionGrad {
    let bt = branch.forward(x);
    let joined = hstack(bt.output(), e);
    let ht = head.forward(&joined);
    let (ce, d_logits) = softmax_cross_entropy(ht.output(), y);
    let (mut head_g, d_joined) = head.backward(&ht, d_logits);
    let width = branch.output_dim();
    let d_branch = d_joined.slice(s![.., ..width]).to_owned();
    let (mut branch_g, _) = branch.backward(&bt, d_branch);
    let n = x.nrows().max(1) as f64;
    let mut loss = ce;
    if l2 > 0.0 {
        loss += l2 / (2.0 * n) * (branch.weight_sq_norm() + head.weight_sq_norm());
        for (g, l) in branch_g
            .iter_mut()
            .zip(&branch.layers)
            .chain(head_g.iter_mut().zip(&head.layers))
        {
            g.w.scaled_add(l2 / n, &l.w);
        }
    }
    FusionGrad {
        loss,
        branch: branch_g,
        head: head_g,
    }
}

/// ReLU sign pattern of both networks, for gradient checks.
pub fn fusion_relu_pattern(
    branch: &Network,
    head: &Network,
    x: &Array2<f64>,
    e: &Array2<f64>,
) -> Vec<bool> {
    let bt = branch.forward(x);
    let ht = head.forward(&hstack(bt.output(), e));
    let mut p = bt.relu_pattern(true);
    p.extend(ht.relu_pattern(false));
    p
}

fn fused_logits(branch: &Network, head: &Network, x: &Array2<f64>, e: &Array2<f64>) -> Array2<f64> {
    let bt = branch.forward(x);
    head.forward(&hstack(bt.output(), e)).output().clone()
}

#[derive(Clone)]
struct FusionState {
    branch: Network,
    head: Network,
    branch_adam: Adam,
    head_adam: Adam,
}

/// Trains branch and head jointly; embeddings are fixed inputs.
pub fn train_fusion(
    x: &Array2<f64>,
    e: &Array2<f64>,
    y: &[bool],
    config: &FusionConfig,
) -> Result<(FusionModel, TrainReport)> {
    if x.nrows() != y.len() || e.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} feature rows, {} embedding rows, {} labels",
            x.nrows(),
            e.nrows(),
            y.len()
        )));
    }
    if e.ncols() == 0 {
        return Err(Error::Shape("embeddings have zero width".into()));
    }
    let classes = labels_to_classes(y)?;
    check_finite(x, "feature matrix")?;
    check_finite(e, "embedding matrix")?;
    let (xs, standardization) = if config.standardize {
        let stats = StandardizationStats::fit(x);
        (stats.apply(x)?, Some(stats))
    } else {
        (x.clone(), None)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (branch, head) = build_fusion_networks(x.ncols(), e.ncols(), config, &mut rng)?;
    let (train, val) = validation_split(&classes, config.validation_fraction, &mut rng);
    let mut state = FusionState {
        branch_adam: Adam::new(&branch, config.adam),
        head_adam: Adam::new(&head, config.adam),
        branch,
        head,
    };
    let opts = LoopOptions {
        max_epochs: config.max_epochs,
        patience: config.patience,
        tol: config.tol,
        batch_size: config.batch_size,
    };
    let labels_of = |rows: &[usize]| -> Vec<usize> { rows.iter().map(|i| classes[*i]).collect() };
    let report = run_epochs(
        &mut state,
        &train,
        &val,
        &opts,
        &mut rng,
        |s, rows| {
            let g = fusion_loss_grad(
                &s.branch,
                &s.head,
                &take_rows(&xs, rows),
                &take_rows(e, rows),
                &labels_of(rows),
                config.l2,
            );
            s.branch_adam.step(&mut s.branch, &g.branch);
            s.head_adam.step(&mut s.head, &g.head);
            Ok(g.loss)
        },
        |s, rows| {
            let logits = fused_logits(
                &s.branch,
                &s.head,
                &take_rows(&xs, rows),
                &take_rows(e, rows),
            );
            softmax_cross_entropy(&logits, &labels_of(rows)).0
        },
    )?;
    state.branch.check_shapes()?;
    state.head.check_shapes()?;
    Ok((
        FusionModel {
            format: FUSION_FORMAT.to_string(),
            spec_hash: None,
            feature_names: Vec::new(),
            embedding_dim: e.ncols(),
            standardization,
            branch: state.branch,
            head: state.head,
            config: config.clone(),
        },
        report,
    ))
}

impl FusionModel {
    pub fn head_input_width(&self) -> usize {
        self.head.input_dim()
    }

    pub fn predict_proba_rows(&self, x: &Array2<f64>, e: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.branch.input_dim() || e.ncols() != self.embedding_dim {
            return Err(Error::Shape(format!(
                "model expects {} feature and {} embedding columns, got {} and {}",
                self.branch.input_dim(),
                self.embedding_dim,
                x.ncols(),
                e.ncols()
            )));
        }
        if x.nrows() != e.nrows() {
            return Err(Error::Shape("feature and embedding rows differ".into()));
        }
        check_finite(x, "feature matrix")?;
        check_finite(e, "embedding matrix")?;
        let xs = match &self.standardization {
            Some(s) => s.apply(x)?,
            None => x.clone(),
        };
        Ok(softmax(&fused_logits(&self.branch, &self.head, &xs, e)))
    }

    pub fn predict_proba(&self, x: &Array2<f64>, e: &Array2<f64>) -> Result<Array1<f64>> {
        Ok(self.predict_proba_rows(x, e)?.column(1).to_owned())
    }
}

/// Gradient check of freshly initialized fusion networks on `points`
/// random feature/embedding rows.
pub fn fusion_gradient_check(
    n_features: usize,
    embedding_dim: usize,
    config: &FusionConfig,
    points: usize,
    h: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheck> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (branch, head) = build_fusion_networks(n_features, embedding_dim, config, &mut rng)?;
    let x = Array2::from_shape_simple_fn((points, n_features), || rng.gen_range(-2.0..2.0));
    let e = Array2::from_shape_simple_fn((points, embedding_dim), || rng.gen_range(-1.0..1.0));
    let y: Vec<usize> = (0..points).map(|_| rng.gen_range(0..2)).collect();
    let g = fusion_loss_grad(&branch, &head, &x, &e, &y, config.l2);
    let mut analytic = grads_to_flat(&g.branch);
    analytic.extend(grads_to_flat(&g.head));
    let mut theta = branch.to_flat();
    let split = theta.len();
    theta.extend(head.to_flat());
    let coords = sample_coords(theta.len(), max_coords, &mut rng);
    let (mut pb, mut ph) = (branch.clone(), head.clone());
    Ok(check_gradient(&theta, &analytic, &coords, h, |t| {
        pb.set_flat(&t[..split]);
        ph.set_flat(&t[split..]);
        let loss = fusion_loss_grad(&pb, &ph, &x, &e, &y, config.l2).loss;
        (loss, fusion_relu_pattern(&pb, &ph, &x, &e))
    }))
}
