use serde::{Deserialize, Serialize};

use super::{cross_entropy, glorot, softmax};
use crate::rng::Rng;

/// One hidden ReLU layer followed by a linear output layer.
///
/// Parameters are stored flat: `w1 (h x d) | b1 (h) | w2 (c x h) | b2 (c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
    pub params: Vec<f64>,
}

struct Layout {
    b1: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

impl Mlp {
    fn layout(d: usize, h: usize, c: usize) -> Layout {
        let b1 = h * d;
        let w2 = b1 + h;
        let b2 = w2 + c * h;
        Layout { b1, w2, b2, end: b2 + c }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, n_classes: usize) -> Self {
        let n = Self::layout(input_dim, hidden_dim, n_classes).end;
        Mlp { input_dim, hidden_dim, n_classes, params: vec![0.0; n] }
    }

    pub fn init(input_dim: usize, hidden_dim: usize, n_classes: usize, rng: &mut Rng) -> Self {
        let mut m = Self::zeros(input_dim, hidden_dim, n_classes);
        let l = Self::layout(input_dim, hidden_dim, n_classes);
        m.params[..l.b1].copy_from_slice(&glorot(rng, input_dim, hidden_dim));
        m.params[l.w2..l.b2].copy_from_slice(&glorot(rng, hidden_dim, n_classes));
        m
    }

    /// True for weight matrices, false for biases.
    pub fn decay_mask(&self) -> Vec<bool> {
        let l = Self::layout(self.input_dim, self.hidden_dim, self.n_classes);
        (0..l.end).map(|i| i < l.b1 || (l.w2..l.b2).contains(&i)).collect()
    }

    fn hidden(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let (d, h) = (self.input_dim, self.hidden_dim);
        let l = Self::layout(d, h, self.n_classes);
        (0..h)
            .map(|j| {
                let row = &params[j * d..(j + 1) * d];
                params[l.b1 + j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    fn output(&self, params: &[f64], act: &[f64]) -> Vec<f64> {
        let (h, c) = (self.hidden_dim, self.n_classes);
        let l = Self::layout(self.input_dim, h, c);
        (0..c)
            .map(|k| {
                let row = &params[l.w2 + k * h..l.w2 + (k + 1) * h];
                params[l.b2 + k] + row.iter().zip(act).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let act: Vec<f64> = self.hidden(&self.params, x).into_iter().map(|z| z.max(0.0)).collect();
        self.output(&self.params, &act)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Class-weighted mean cross-entropy: `sum_i w[y_i] * CE_i / sum_i w[y_i]`.
    pub fn loss(&self, xs: &[&[f64]], ys: &[usize], class_weights: &[f64]) -> f64 {
        Self::loss_with(self, &self.params, xs, ys, class_weights)
    }

    fn loss_with(&self, params: &[f64], xs: &[&[f64]], ys: &[usize], w: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut norm = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let act: Vec<f64> = self.hidden(params, x).into_iter().map(|z| z.max(0.0)).collect();
            total += w[y] * cross_entropy(&self.output(params, &act), y);
            norm += w[y];
        }
        if norm > 0.0 {
            total / norm
        } else {
            0.0
        }
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, xs: &[&[f64]], ys: &[usize], class_weights: &[f64]) -> (f64, Vec<f64>) {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.n_classes);
        let l = Self::layout(d, h, c);
        let p = &self.params;
        let mut grad = vec![0.0; l.end];
        let norm: f64 = ys.iter().map(|&y| class_weights[y]).sum();
        if norm <= 0.0 {
            return (0.0, grad);
        }
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let z1 = self.hidden(p, x);
            let act: Vec<f64> = z1.iter().map(|z| z.max(0.0)).collect();
            let logits = self.output(p, &act);
            let wy = class_weights[y] / norm;
            total += wy * cross_entropy(&logits, y);
            let mut dlogits = softmax(&logits);
            dlogits[y] -= 1.0;
            dlogits.iter_mut().for_each(|g| *g *= wy);

            let mut dact = vec![0.0; h];
            for k in 0..c {
                let g = dlogits[k];
                grad[l.b2 + k] += g;
                let row = l.w2 + k * h;
                for j in 0..h {
                    grad[row + j] += g * act[j];
                    dact[j] += g * p[row + j];
                }
            }
            for j in 0..h {
                if z1[j] <= 0.0 {
                    continue;
                }
                let g = dact[j];
                grad[l.b1 + j] += g;
                let row = j * d;
                for (i, xi) in x.iter().enumerate() {
                    grad[row + i] += g * xi;
                }
            }
        }
        (total, grad)
    }

    /// Loss at an arbitrary parameter vector (used by gradient checks).
    pub fn loss_at(&self, params: &[f64], xs: &[&[f64]], ys: &[usize], class_weights: &[f64]) -> f64 {
        self.loss_with(params, xs, ys, class_weights)
    }
}
