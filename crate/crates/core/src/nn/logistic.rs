use serde::{Deserialize, Serialize};

use super::{argmax, cross_entropy, softmax};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    /// L2 penalty on the weights (not the biases).
    pub l2: f64,
    /// Stop once the full gradient norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { l2: 1e-2, tol: 1e-6, max_iter: 20_000 }
    }
}

/// Multinomial logistic regression fitted by full-batch gradient descent.
///
/// Objective: `mean_i CE(W x_i + b, y_i) + l2/2 * |W|^2`. Each step starts
/// from the Barzilai-Borwein step length and backtracks until the Armijo
/// condition holds, so the objective decreases monotonically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub n_features: usize,
    pub n_classes: usize,
    /// `n_classes x n_features`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticRegression {
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        Self::logits_with(&self.weights, &self.bias, self.n_features, x)
    }

    fn logits_with(w: &[f64], b: &[f64], d: usize, x: &[f64]) -> Vec<f64> {
        b.iter()
            .enumerate()
            .map(|(k, bk)| bk + w[k * d..(k + 1) * d].iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    pub fn fit(xs: &[Vec<f64>], ys: &[usize], n_classes: usize, config: &LogisticConfig) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::Precondition("logistic regression needs equal, non-empty inputs".into()));
        }
        let d = xs[0].len();
        if let Some(bad) = xs.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
        }
        if let Some(&y) = ys.iter().find(|&&y| y >= n_classes) {
            return Err(Error::Precondition(format!("label {y} outside {n_classes} classes")));
        }
        let n_w = n_classes * d;
        let objective = |theta: &[f64]| -> (f64, Vec<f64>) {
            let (w, b) = theta.split_at(n_w);
            let mut grad = vec![0.0; theta.len()];
            let mut loss = 0.0;
            let inv_n = 1.0 / xs.len() as f64;
            for (x, &y) in xs.iter().zip(ys) {
                let logits = Self::logits_with(w, b, d, x);
                loss += cross_entropy(&logits, y) * inv_n;
                let mut g = softmax(&logits);
                g[y] -= 1.0;
                for (k, gk) in g.iter().enumerate() {
                    let gk = gk * inv_n;
                    if gk == 0.0 {
                        continue;
                    }
                    grad[n_w + k] += gk;
                    for (gi, xi) in grad[k * d..(k + 1) * d].iter_mut().zip(x) {
                        *gi += gk * xi;
                    }
                }
            }
            for i in 0..n_w {
                loss += 0.5 * config.l2 * w[i] * w[i];
                grad[i] += config.l2 * w[i];
            }
            (loss, grad)
        };

        let mut theta = vec![0.0; n_w + n_classes];
        let (mut f, mut g) = objective(&theta);
        let mut step = 1.0;
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < config.max_iter {
            let gnorm2: f64 = g.iter().map(|v| v * v).sum();
            if gnorm2.sqrt() < config.tol {
                converged = true;
                break;
            }
            if let Some((pt, pg)) = &prev {
                let s: Vec<f64> = theta.iter().zip(pt).map(|(a, b)| a - b).collect();
                let yv: Vec<f64> = g.iter().zip(pg).map(|(a, b)| a - b).collect();
                let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
                let ss: f64 = s.iter().map(|a| a * a).sum();
                if sy > 1e-300 {
                    step = (ss / sy).clamp(1e-10, 1e10);
                }
            }
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - step * gi).collect();
                let (fc, gc) = objective(&cand);
                if fc <= f - 1e-4 * step * gnorm2 {
                    prev = Some((std::mem::replace(&mut theta, cand), std::mem::replace(&mut g, gc)));
                    f = fc;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            iterations += 1;
            if !accepted {
                // no representable decrease left
                converged = gnorm2.sqrt() < config.tol.sqrt();
                break;
            }
        }
        let bias = theta.split_off(n_w);
        Ok(LogisticRegression { n_features: d, n_classes, weights: theta, bias, iterations, converged })
    }
}
