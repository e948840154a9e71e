//! L2-regularized logistic regression on sparse rows, solved with L-BFGS.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sparse row: (feature index, value), indices unique.
pub type SparseRow = Vec<(u32, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticConfig {
    /// Inverse regularization strength, liblinear style: ½‖w‖² + C·Σ loss.
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            c: 1.0,
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticModel {
    pub fn score(&self, row: &[(u32, f64)]) -> f64 {
        self.bias
            + row
                .iter()
                .map(|&(j, v)| self.weights.get(j as usize).copied().unwrap_or(0.0) * v)
                .sum::<f64>()
    }

    pub fn prob(&self, row: &[(u32, f64)]) -> f64 {
        sigmoid(self.score(row))
    }
}

/// Objective scaled by 1/(C·n): mean log-loss + ‖w‖²/(2Cn). Bias is unpenalized.
struct Problem<'a> {
    rows: &'a [SparseRow],
    y: &'a [bool],
    dim: usize,
    lambda: f64,
}

impl Problem<'_> {
    /// Returns the objective and writes its gradient; `theta` = [w.., b].
    fn eval(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.rows.len() as f64;
        let (w, b) = theta.split_at(self.dim);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (row, &yi) in self.rows.iter().zip(self.y) {
            let z = b[0] + row.iter().map(|&(j, v)| w[j as usize] * v).sum::<f64>();
            let t = if yi { 1.0 } else { 0.0 };
            // -[t ln σ(z) + (1-t) ln(1-σ(z))] = softplus(z) - t z
            loss += softplus(z) - t * z;
            let d = sigmoid(z) - t;
            for &(j, v) in row {
                grad[j as usize] += d * v;
            }
            grad[self.dim] += d;
        }
        loss /= n;
        grad.iter_mut().for_each(|g| *g /= n);
        let mut reg = 0.0;
        for j in 0..self.dim {
            reg += w[j] * w[j];
            grad[j] += self.lambda * w[j];
        }
        loss + 0.5 * self.lambda * reg
    }
}

pub fn fit_logistic(
    rows: &[SparseRow],
    y: &[bool],
    dim: usize,
    config: &LogisticConfig,
) -> Result<LogisticModel> {
    if rows.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            rows.len(),
            y.len()
        )));
    }
    if rows.is_empty() {
        return Err(Error::invalid("no training rows"));
    }
    if !y.iter().any(|&v| v) || y.iter().all(|&v| v) {
        return Err(Error::invalid("logistic regression needs both classes"));
    }
    if !(config.c.is_finite() && config.c > 0.0) {
        return Err(Error::invalid("C must be positive"));
    }
    for row in rows {
        for &(j, v) in row {
            if j as usize >= dim {
                return Err(Error::Shape(format!(
                    "feature index {j} >= dimension {dim}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Numeric("non-finite feature value".into()));
            }
        }
    }
    let problem = Problem {
        rows,
        y,
        dim,
        lambda: 1.0 / (config.c * rows.len() as f64),
    };
    let theta = lbfgs(
        |t, g| problem.eval(t, g),
        vec![0.0; dim + 1],
        config.max_iter,
        config.tol,
    )?;
    let bias = theta[dim];
    let mut weights = theta;
    weights.truncate(dim);
    Ok(LogisticModel { weights, bias })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with backtracking Armijo line search.
pub fn lbfgs<F>(mut f: F, mut x: Vec<f64>, max_iter: usize, tol: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    const MEMORY: usize = 10;
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() {
        return Err(Error::Numeric(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    for _ in 0..max_iter {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= tol * fx.abs().max(1.0) {
            break;
        }
        // two-loop recursion for the search direction
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, yv) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(yv, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push((a, rho));
        }
        if let (Some(s), Some(yv)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, yv) / dot(yv, yv);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        } else {
            let scale = 1.0 / gnorm.max(1.0);
            q.iter_mut().for_each(|qi| *qi *= scale);
        }
        for ((s, yv), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // not a descent direction: restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v / gnorm.max(1.0)).collect();
            slope = dot(&g, &dir);
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            x_new
                .iter_mut()
                .zip(&x)
                .zip(&dir)
                .for_each(|((xn, xi), di)| *xn = xi + step * di);
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                if dot(&s, &yv) > 1e-12 {
                    if s_hist.len() == MEMORY {
                        s_hist.remove(0);
                        y_hist.remove(0);
                    }
                    s_hist.push(s);
                    y_hist.push(yv);
                }
                let improvement = fx - f_new;
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                fx = f_new;
                accepted = true;
                if improvement <= tol * fx.abs().max(1.0) * 1e-3 {
                    return Ok(x);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("L-BFGS diverged".into()));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lbfgs_minimizes_quadratic() {
        let target = [3.0, -2.0, 0.5];
        let x = lbfgs(
            |x, g| {
                let mut f = 0.0;
                for i in 0..3 {
                    let d = x[i] - target[i];
                    f += (i + 1) as f64 * d * d;
                    g[i] = 2.0 * (i + 1) as f64 * d;
                }
                f
            },
            vec![0.0; 3],
            200,
            1e-12,
        )
        .unwrap();
        for (a, b) in x.iter().zip(target) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn lbfgs_rosenbrock() {
        let x = lbfgs(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            vec![-1.2, 1.0],
            2000,
            1e-14,
        )
        .unwrap();
        assert!(
            (x[0] - 1.0).abs() < 1e-4 && (x[1] - 1.0).abs() < 1e-4,
            "{x:?}"
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<SparseRow> = (0..20)
            .map(|_| {
                let mut row = Vec::new();
                for j in 0..4u32 {
                    if rng.gen_bool(0.6) {
                        row.push((j, rng.gen_range(-2.0..2.0)));
                    }
                }
                row
            })
            .collect();
        let y: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
        let p = Problem {
            rows: &rows,
            y: &y,
            dim: 4,
            lambda: 0.1,
        };
        let theta: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut g = vec![0.0; 5];
        p.eval(&theta, &mut g);
        let mut scratch = vec![0.0; 5];
        for i in 0..5 {
            let h = 1e-6;
            let mut tp = theta.clone();
            tp[i] += h;
            let mut tm = theta.clone();
            tm[i] -= h;
            let num = (p.eval(&tp, &mut scratch) - p.eval(&tm, &mut scratch)) / (2.0 * h);
            assert!((num - g[i]).abs() < 1e-7, "{i}: {num} vs {}", g[i]);
        }
    }

    #[test]
    fn separates_linear_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..200 {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            rows.push(vec![(0, a), (1, b)]);
            y.push(a + 0.5 * b > 0.1);
        }
        let m = fit_logistic(
            &rows,
            &y,
            2,
            &LogisticConfig {
                c: 100.0,
                ..Default::default()
            },
        )
        .unwrap();
        let acc = rows
            .iter()
            .zip(&y)
            .filter(|(r, &t)| (m.prob(r) > 0.5) == t)
            .count();
        assert!(acc >= 195, "{acc}");
    }

    #[test]
    fn single_class_rejected() {
        let rows = vec![vec![(0, 1.0)], vec![(0, 2.0)]];
        assert!(fit_logistic(&rows, &[true, true], 1, &LogisticConfig::default()).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!((softplus(-800.0)).abs() < 1e-300);
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
    }
}
