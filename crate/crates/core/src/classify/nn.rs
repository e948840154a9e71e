//! Dense ReLU networks, softmax cross-entropy and Adam.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// fan_in × fan_out
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    /// He-style uniform init: U(−√(6/fan_in), √(6/fan_in)), zero bias.
    pub fn he_uniform(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / fan_in.max(1) as f64).sqrt();
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-limit..limit));
        Dense {
            w,
            b: Array1::zeros(fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }
}

/// Stack of dense layers with ReLU between them. The last layer is linear
/// unless `relu_output` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Dense>,
    pub relu_output: bool,
}

/// Pre-activations and activations of every layer; `acts[0]` is the input.
pub struct Trace {
    pub pre: Vec<Array2<f64>>,
    pub acts: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().unwrap_or_else(|| unreachable!())
    }

    /// Sign pattern of every ReLU pre-activation, for kink detection.
    pub fn relu_pattern(&self, relu_output: bool) -> Vec<bool> {
        let n = self.pre.len();
        let mut out = Vec::new();
        for (l, z) in self.pre.iter().enumerate() {
            if l + 1 < n || relu_output {
                out.extend(z.iter().map(|v| *v > 0.0));
            }
        }
        out
    }
}

impl Network {
    pub fn new(sizes: &[usize], relu_output: bool, rng: &mut ChaCha8Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|p| Dense::he_uniform(p[0], p[1], rng))
            .collect();
        Ok(Network {
            layers,
            relu_output,
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].w.nrows()];
        s.extend(self.layers.iter().map(|l| l.w.ncols()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.w.ncols()).unwrap_or(0)
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[0].w.ncols() != pair[1].w.nrows() {
                return Err(Error::Shape("consecutive layer widths disagree".into()));
            }
        }
        for l in &self.layers {
            if l.b.len() != l.w.ncols() {
                return Err(Error::Shape("bias width disagrees with weights".into()));
            }
            if l.w.iter().chain(l.b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numeric("network parameters are not finite".into()));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &Array2<f64>) -> Trace {
        let n = self.layers.len();
        let mut pre = Vec::with_capacity(n);
        let mut acts = Vec::with_capacity(n + 1);
        acts.push(x.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = acts[l].dot(&layer.w) + &layer.b;
            let a = if l + 1 < n || self.relu_output {
                z.mapv(|v| v.max(0.0))
            } else {
                z.clone()
            };
            pre.push(z);
            acts.push(a);
        }
        Trace { pre, acts }
    }

    /// Gradients of every layer given d(loss)/d(output); also returns d(loss)/d(input).
    pub fn backward(&self, trace: &Trace, d_out: Array2<f64>) -> (Vec<Dense>, Array2<f64>) {
        let n = self.layers.len();
        let mut grads: Vec<Dense> = Vec::with_capacity(n);
        let mut d_a = d_out;
        for l in (0..n).rev() {
            let d_z = if l + 1 < n || self.relu_output {
                let mut d = d_a;
                d.zip_mut_with(&trace.pre[l], |g, z| {
                    if *z <= 0.0 {
                        *g = 0.0
                    }
                });
                d
            } else {
                d_a
            };
            let gw = trace.acts[l].t().dot(&d_z);
            let gb = d_z.sum_axis(Axis(0));
            d_a = d_z.dot(&self.layers[l].w.t());
            grads.push(Dense { w: gw, b: gb });
        }
        grads.reverse();
        (grads, d_a)
    }

    pub fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut i = 0;
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = flat[i];
                i += 1;
            }
        }
    }
}

pub fn grads_to_flat(grads: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend(g.w.iter());
        out.extend(g.b.iter());
    }
    out
}

/// Row-wise softmax, shifted by the row max.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Mean cross-entropy of softmax(logits) against class indices, with its logit gradient.
pub fn softmax_cross_entropy(logits: &Array2<f64>, y: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows().max(1) as f64;
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (i, &c) in y.iter().enumerate() {
        let row = logits.row(i);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[c];
        grad[[i, c]] -= 1.0;
    }
    grad.mapv_inplace(|v| v / n);
    (loss / n, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam state for one network.
#[derive(Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
}

impl Adam {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        let zeros: Vec<Dense> = net
            .layers
            .iter()
            .map(|l| Dense::zeros(l.w.nrows(), l.w.ncols()))
            .collect();
        Adam {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Network, grads: &[Dense]) {
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let step = lr * c2.sqrt() / c1;
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            update(
                &mut layer.w,
                &g.w,
                &mut m.w,
                &mut v.w,
                beta1,
                beta2,
                step,
                eps,
            );
            update(
                &mut layer.b,
                &g.b,
                &mut m.b,
                &mut v.b,
                beta1,
                beta2,
                step,
                eps,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update<D: ndarray::Dimension>(
    p: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    beta1: f64,
    beta2: f64,
    step: f64,
    eps: f64,
) {
    ndarray::Zip::from(p)
        .and(g)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        });
}

/// Mean cross-entropy plus the weight penalty `l2/(2n)·Σ‖W‖²` (n = batch rows).
pub fn classifier_loss_grad(
    net: &Network,
    x: &Array2<f64>,
    y: &[usize],
    l2: f64,
) -> (f64, Vec<Dense>) {
    let trace = net.forward(x);
    let (ce, d_logits) = softmax_cross_entropy(trace.output(), y);
    let (mut grads, _) = net.backward(&trace, d_logits);
    let n = x.nrows().max(1) as f64;
    let mut loss = ce;
    if l2 > 0.0 {
        loss += l2 / (2.0 * n) * net.weight_sq_norm();
        for (g, l) in grads.iter_mut().zip(&net.layers) {
            g.w.scaled_add(l2 / n, &l.w);
        }
    }
    (loss, grads)
}

/// Denominator floor for [`relative_error`]. Central differences at
/// h = 1e-5 carry ~1e-11 of rounding error, so components smaller than
/// this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Relative error |a − b| / max(|a|, |b|, GRAD_FLOOR).
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

/// Result of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// coordinates whose ±h probe crossed a ReLU kink
    pub skipped_kinks: usize,
}

/// Central-difference check of `analytic` against `loss` at `theta`.
///
/// `loss` returns the objective and the ReLU sign pattern; probes whose
/// patterns differ between +h and −h straddle a kink and are skipped.
pub fn check_gradient<F>(
    theta: &[f64],
    analytic: &[f64],
    coords: &[usize],
    h: f64,
    mut loss: F,
) -> GradCheck
where
    F: FnMut(&[f64]) -> (f64, Vec<bool>),
{
    let mut probe = theta.to_vec();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    for &i in coords {
        probe[i] = theta[i] + h;
        let (lp, pp) = loss(&probe);
        probe[i] = theta[i] - h;
        let (lm, pm) = loss(&probe);
        probe[i] = theta[i];
        if pp != pm {
            skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
        checked += 1;
    }
    GradCheck {
        max_rel_error: worst,
        checked,
        skipped_kinks: skipped,
    }
}

/// Picks up to `max` coordinate indices out of `n`, all of them when `n ≤ max`.
pub fn sample_coords(n: usize, max: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut idx = rand::seq::index::sample(rng, n, max).into_vec();
    idx.sort_unstable();
    idx
}

/// Gradient check of a freshly initialized classifier network of the given
/// sizes on `points` random inputs.
pub fn mlp_gradient_check(
    sizes: &[usize],
    points: usize,
    l2: f64,
    h: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheck> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network::new(sizes, false, &mut rng)?;
    let x = Array2::from_shape_simple_fn((points, sizes[0]), || rng.gen_range(-2.0..2.0));
    let y: Vec<usize> = (0..points).map(|_| rng.gen_range(0..2)).collect();
    let (_, grads) = classifier_loss_grad(&net, &x, &y, l2);
    let analytic = grads_to_flat(&grads);
    let theta = net.to_flat();
    let coords = sample_coords(theta.len(), max_coords, &mut rng);
    let mut probe = net.clone();
    Ok(check_gradient(&theta, &analytic, &coords, h, |t| {
        probe.set_flat(t);
        let (loss, _) = classifier_loss_grad(&probe, &x, &y, l2);
        (loss, probe.forward(&x).relu_pattern(false))
    }))
}

/// Column-concatenation of two row-aligned matrices.
pub fn hstack(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
    out.slice_mut(s![.., ..a.ncols()]).assign(a);
    out.slice_mut(s![.., a.ncols()..]).assign(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Array2<f64>, Vec<usize>) {
        let x = Array2::from_shape_simple_fn((n, d), || rng.gen_range(-2.0..2.0));
        let y = (0..n).map(|_| rng.gen_range(0..2)).collect();
        (x, y)
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let l = Array2::from_shape_vec((2, 3), vec![1000.0, 0.0, -1000.0, 0.1, 0.2, 0.3]).unwrap();
        let p = softmax(&l);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_check_small_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for l2 in [0.0, 2.0] {
            let net = Network::new(&[4, 7, 3, 2], false, &mut rng).unwrap();
            let (x, y) = random_batch(&mut rng, 5, 4);
            let (_, grads) = classifier_loss_grad(&net, &x, &y, l2);
            let analytic = grads_to_flat(&grads);
            let theta = net.to_flat();
            let coords: Vec<usize> = (0..theta.len()).collect();
            let mut probe_net = net.clone();
            let res = check_gradient(&theta, &analytic, &coords, 1e-5, |t| {
                probe_net.set_flat(t);
                let trace = probe_net.forward(&x);
                let (loss, _) = classifier_loss_grad(&probe_net, &x, &y, l2);
                (loss, trace.relu_pattern(false))
            });
            assert!(res.max_rel_error < 1e-4, "{res:?}");
            assert!(res.checked > theta.len() / 2);

            // a 0.1% error in one weight's gradient must be caught
            let mut wrong = analytic.clone();
            let big = (0..wrong.len())
                .max_by(|a, b| wrong[*a].abs().total_cmp(&wrong[*b].abs()))
                .unwrap();
            wrong[big] *= 1.001;
            let bad = check_gradient(&theta, &wrong, &coords, 1e-5, |t| {
                probe_net.set_flat(t);
                let (loss, _) = classifier_loss_grad(&probe_net, &x, &y, l2);
                (loss, probe_net.forward(&x).relu_pattern(false))
            });
            assert!(bad.max_rel_error > 5e-4, "{bad:?}");
        }
    }

    #[test]
    fn relu_output_backprop_matches_numeric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Network::new(&[3, 5, 4], true, &mut rng).unwrap();
        let (x, _) = random_batch(&mut rng, 4, 3);
        let target = Array2::from_shape_simple_fn((4, 4), || rng.gen_range(-1.0..1.0));
        // loss = Σ output ⊙ target, so d(loss)/d(output) = target
        let trace = net.forward(&x);
        let (grads, d_in) = net.backward(&trace, target.clone());
        let analytic = grads_to_flat(&grads);
        let theta = net.to_flat();
        let coords: Vec<usize> = (0..theta.len()).collect();
        let mut probe = net.clone();
        let res = check_gradient(&theta, &analytic, &coords, 1e-5, |t| {
            probe.set_flat(t);
            let tr = probe.forward(&x);
            ((tr.output() * &target).sum(), tr.relu_pattern(true))
        });
        assert!(res.max_rel_error < 1e-4, "{res:?}");
        // input gradient
        let h = 1e-6;
        let mut xp = x.clone();
        xp[[1, 2]] += h;
        let mut xm = x.clone();
        xm[[1, 2]] -= h;
        let num = ((net.forward(&xp).output() * &target).sum()
            - (net.forward(&xm).output() * &target).sum())
            / (2.0 * h);
        assert!(relative_error(d_in[[1, 2]], num) < 1e-5);
    }

    #[test]
    fn adam_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = Network::new(&[2, 16, 2], false, &mut rng).unwrap();
        let (x, y) = random_batch(&mut rng, 32, 2);
        let (first, _) = classifier_loss_grad(&net, &x, &y, 0.0);
        let mut adam = Adam::new(
            &net,
            AdamConfig {
                lr: 0.01,
                ..Default::default()
            },
        );
        for _ in 0..200 {
            let (_, g) = classifier_loss_grad(&net, &x, &y, 0.0);
            adam.step(&mut net, &g);
        }
        let (last, _) = classifier_loss_grad(&net, &x, &y, 0.0);
        assert!(last < first);
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::new(&[3, 4, 2], false, &mut rng).unwrap();
        let mut other = Network::new(&[3, 4, 2], false, &mut rng).unwrap();
        other.set_flat(&net.to_flat());
        assert_eq!(other, net);
        assert_eq!(net.n_params(), 3 * 4 + 4 + 4 * 2 + 2);
        assert_eq!(net.sizes(), [3, 4, 2]);
    }

    #[test]
    fn hstack_columns() {
        let a = Array2::from_shape_vec((2, 1), vec![1.0, 2.0]).unwrap();
        let b = Array2::from_shape_vec((2, 2), vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = hstack(&a, &b);
        assert_eq!(c.row(1).to_vec(), [2.0, 5.0, 6.0]);
    }
}
