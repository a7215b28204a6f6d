//! Small dense-network numerics shared by the relation head, the frame
//! fusion head and the logistic-regression models. Everything is f64 and
//! single-threaded so runs are bit-reproducible under a seed.

pub mod logistic;
pub mod mlp;

pub use logistic::{LogisticConfig, LogisticRegression};
pub use mlp::Mlp;

use rand::Rng as _;

use crate::rng::Rng;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[target]` computed via log-sum-exp.
pub fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}

/// Index of the largest value; the earliest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Glorot-uniform initialisation for a `fan_out x fan_in` weight block.
pub fn glorot(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect()
}

/// Per-class loss weights: inverse class frequency scaled to mean 1.
/// Classes absent from `counts` get weight 0.
pub fn inverse_frequency_weights(counts: &[usize]) -> Vec<f64> {
    let raw: Vec<f64> = counts.iter().map(|&n| if n == 0 { 0.0 } else { 1.0 / n as f64 }).collect();
    let present = raw.iter().filter(|w| **w > 0.0).count().max(1);
    let mean = raw.iter().sum::<f64>() / present as f64;
    raw.into_iter().map(|w| if mean > 0.0 { w / mean } else { 0.0 }).collect()
}

/// AdamW: Adam moments with weight decay applied directly to the weights.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(n_params: usize, weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One update. `decay_mask[i]` selects which parameters are decayed
    /// (biases and normalisation gains usually are not).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, decay_mask: &[bool]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            if decay_mask[i] {
                params[i] -= lr * self.weight_decay * params[i];
            }
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Linear warm-up to the base rate, then linear decay to zero.
#[derive(Debug, Clone, Copy)]
pub struct LinearWarmupDecay {
    pub total_steps: usize,
    pub warmup_steps: usize,
}

impl LinearWarmupDecay {
    pub fn new(total_steps: usize, warmup_fraction: f64) -> Self {
        let warmup_steps = (total_steps as f64 * warmup_fraction).round() as usize;
        LinearWarmupDecay { total_steps: total_steps.max(1), warmup_steps }
    }

    /// Multiplier for the update with 0-based index `step`.
    pub fn factor(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            (step + 1) as f64 / self.warmup_steps as f64
        } else {
            let remaining = self.total_steps.saturating_sub(step) as f64;
            let span = (self.total_steps - self.warmup_steps).max(1) as f64;
            (remaining / span).max(0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_shift_invariance() {
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[101.0, 102.0, 103.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_matches_log_softmax() {
        let logits = [0.3, -1.2, 2.0];
        let p = softmax(&logits);
        assert!((cross_entropy(&logits, 1) + p[1].ln()).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn inverse_weights_have_mean_one() {
        let w = inverse_frequency_weights(&[52_556, 35_827, 212_555]);
        assert!((w.iter().sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
        assert!(w[1] > w[0] && w[0] > w[2]);
    }

    #[test]
    fn schedule_warms_up_then_decays() {
        let s = LinearWarmupDecay::new(100, 0.1);
        assert!((s.factor(0) - 0.1).abs() < 1e-12);
        assert!((s.factor(9) - 1.0).abs() < 1e-12);
        assert!((s.factor(10) - 1.0).abs() < 1e-12);
        assert!(s.factor(55) < s.factor(20));
        assert!(s.factor(99) > 0.0);
    }

    #[test]
    fn adamw_descends_a_quadratic() {
        let mut p = vec![5.0, -3.0];
        let mut opt = AdamW::new(2, 0.0);
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut p, &g, 0.05, &[true, true]);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2), "{p:?}");
    }
}
