//! Fusion head over a document embedding and its cluster features:
//! `Linear(in, h) -> LayerNorm -> ReLU -> Dropout -> Linear(h, C)`.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{macro_metrics, mean_std, MeanStd, Metrics};
use crate::nn::{argmax, cross_entropy, glorot, softmax, AdamW};
use crate::relation_model::stratified_holdout;
use crate::rng::{self, Rng};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralHeadConfig {
    pub hidden_dim: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub val_fraction: f64,
    pub patience: usize,
    pub seeds: Vec<u64>,
}

impl Default for NeuralHeadConfig {
    fn default() -> Self {
        NeuralHeadConfig {
            hidden_dim: 64,
            dropout: 0.3,
            batch_size: 32,
            max_epochs: 25,
            learning_rate: 2e-5,
            val_fraction: 0.1,
            patience: 3,
            seeds: vec![7, 14, 21, 28, 35],
        }
    }
}

impl NeuralHeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.batch_size == 0 || self.max_epochs == 0 || self.learning_rate <= 0.0 {
            return Err(Error::Precondition("neural head hyperparameters must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Precondition("dropout must lie in [0, 1) and val_fraction in (0, 1)".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Precondition("at least one seed is required".into()));
        }
        Ok(())
    }
}

/// Head parameters, flat: `w1 | b1 | gain | shift | w2 | b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionHead {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
    pub params: Vec<f64>,
}

struct Offsets {
    b1: usize,
    gain: usize,
    shift: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

struct Trace {
    zhat: Vec<f64>,
    inv_std: f64,
    pre: Vec<f64>,
    act: Vec<f64>,
    logits: Vec<f64>,
}

impl FusionHead {
    fn offsets(&self) -> Offsets {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.n_classes);
        let b1 = h * d;
        let gain = b1 + h;
        let shift = gain + h;
        let w2 = shift + h;
        let b2 = w2 + c * h;
        Offsets { b1, gain, shift, w2, b2, end: b2 + c }
    }

    pub fn init(input_dim: usize, hidden_dim: usize, n_classes: usize, rng: &mut Rng) -> Self {
        let mut head = FusionHead { input_dim, hidden_dim, n_classes, params: Vec::new() };
        let o = head.offsets();
        let mut p = vec![0.0; o.end];
        p[..o.b1].copy_from_slice(&glorot(rng, input_dim, hidden_dim));
        p[o.gain..o.shift].iter_mut().for_each(|g| *g = 1.0);
        p[o.w2..o.b2].copy_from_slice(&glorot(rng, hidden_dim, n_classes));
        head.params = p;
        head
    }

    fn decay_mask(&self) -> Vec<bool> {
        vec![false; self.params.len()]
    }

    /// `mask` holds inverted-dropout multipliers, or `None` at inference.
    fn forward(&self, params: &[f64], x: &[f64], mask: Option<&[f64]>) -> Trace {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.n_classes);
        let o = self.offsets();
        let z: Vec<f64> = (0..h)
            .map(|j| params[o.b1 + j] + params[j * d..(j + 1) * d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        let mu = z.iter().sum::<f64>() / h as f64;
        let var = z.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / h as f64;
        let inv_std = 1.0 / (var + LN_EPS).sqrt();
        let zhat: Vec<f64> = z.iter().map(|v| (v - mu) * inv_std).collect();
        let pre: Vec<f64> = (0..h).map(|j| params[o.gain + j] * zhat[j] + params[o.shift + j]).collect();
        let act: Vec<f64> = pre.iter().enumerate().map(|(j, v)| v.max(0.0) * mask.map_or(1.0, |m| m[j])).collect();
        let logits = (0..c)
            .map(|k| {
                params[o.b2 + k]
                    + params[o.w2 + k * h..o.w2 + (k + 1) * h].iter().zip(&act).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect();
        Trace { zhat, inv_std, pre, act, logits }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.forward(&self.params, x, None).logits)
    }

    fn loss_at(&self, params: &[f64], xs: &[&[f64]], ys: &[usize], masks: Option<&[Vec<f64>]>) -> f64 {
        let n = xs.len().max(1) as f64;
        xs.iter()
            .zip(ys)
            .enumerate()
            .map(|(i, (x, &y))| cross_entropy(&self.forward(params, x, masks.map(|m| m[i].as_slice())).logits, y))
            .sum::<f64>()
            / n
    }

    pub fn loss(&self, xs: &[&[f64]], ys: &[usize]) -> f64 {
        self.loss_at(&self.params, xs, ys, None)
    }

    fn loss_and_grad(&self, xs: &[&[f64]], ys: &[usize], masks: Option<&[Vec<f64>]>) -> (f64, Vec<f64>) {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.n_classes);
        let o = self.offsets();
        let p = &self.params;
        let mut g = vec![0.0; o.end];
        let n = xs.len().max(1) as f64;
        let mut loss = 0.0;
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            let mask = masks.map(|m| m[i].as_slice());
            let t = self.forward(p, x, mask);
            loss += cross_entropy(&t.logits, y) / n;
            let mut dl = softmax(&t.logits);
            dl[y] -= 1.0;
            dl.iter_mut().for_each(|v| *v /= n);
            let mut dact = vec![0.0; h];
            for k in 0..c {
                g[o.b2 + k] += dl[k];
                for j in 0..h {
                    g[o.w2 + k * h + j] += dl[k] * t.act[j];
                    dact[j] += dl[k] * p[o.w2 + k * h + j];
                }
            }
            let dpre: Vec<f64> =
                (0..h).map(|j| if t.pre[j] > 0.0 { dact[j] * mask.map_or(1.0, |m| m[j]) } else { 0.0 }).collect();
            let mut dzhat = vec![0.0; h];
            for j in 0..h {
                g[o.gain + j] += dpre[j] * t.zhat[j];
                g[o.shift + j] += dpre[j];
                dzhat[j] = dpre[j] * p[o.gain + j];
            }
            let mean_dz = dzhat.iter().sum::<f64>() / h as f64;
            let mean_dz_zhat = dzhat.iter().zip(&t.zhat).map(|(a, b)| a * b).sum::<f64>() / h as f64;
            for j in 0..h {
                let dz = t.inv_std * (dzhat[j] - mean_dz - t.zhat[j] * mean_dz_zhat);
                g[o.b1 + j] += dz;
                for (gi, xi) in g[j * d..(j + 1) * d].iter_mut().zip(x.iter()) {
                    *gi += dz * xi;
                }
            }
        }
        (loss, g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInput {
    /// Document embedding concatenated with standardized cluster features.
    Fusion,
    /// Document embedding alone.
    EmbeddingOnly,
}

/// Training and test rows for the head. `features` may be empty for
/// embedding-only runs.
#[derive(Debug, Clone, Default)]
pub struct HeadData {
    pub train_embeddings: Vec<Vec<f64>>,
    pub train_features: Vec<Vec<f64>>,
    pub train_labels: Vec<usize>,
    pub test_embeddings: Vec<Vec<f64>>,
    pub test_features: Vec<Vec<f64>>,
    pub test_labels: Vec<usize>,
}

fn rows(emb: &[Vec<f64>], feats: &[Vec<f64>], input: HeadInput) -> Result<Vec<Vec<f64>>> {
    if input == HeadInput::Fusion && emb.len() != feats.len() {
        return Err(Error::Precondition(format!("{} embeddings for {} feature rows", emb.len(), feats.len())));
    }
    let out: Vec<Vec<f64>> = emb
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut r = e.clone();
            if input == HeadInput::Fusion {
                r.extend_from_slice(&feats[i]);
            }
            r
        })
        .collect();
    let d = out.first().map_or(0, Vec::len);
    if let Some(bad) = out.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralReport {
    pub input: HeadInput,
    pub per_seed: Vec<Metrics>,
    pub best_epochs: Vec<usize>,
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
}

fn train_one(
    xs: &[Vec<f64>],
    ys: &[usize],
    n_classes: usize,
    seed: u64,
    config: &NeuralHeadConfig,
) -> Result<(FusionHead, usize)> {
    let (train_idx, val_idx) = stratified_holdout(ys, n_classes, config.val_fraction, rng::derive(seed, 1));
    let mut r = rng::seeded(rng::derive(seed, 2));
    let mut head = FusionHead::init(xs[0].len(), config.hidden_dim, n_classes, &mut r);
    let mut opt = AdamW::new(head.params.len(), 0.0);
    let mask = head.decay_mask();
    let gather = |idx: &[usize]| -> (Vec<&[f64]>, Vec<usize>) {
        (idx.iter().map(|&i| xs[i].as_slice()).collect(), idx.iter().map(|&i| ys[i]).collect())
    };
    let (vx, vy) = gather(if val_idx.is_empty() { &train_idx } else { &val_idx });
    let keep = 1.0 - config.dropout;
    let mut best = (f64::INFINITY, 0usize, head.params.clone());
    let mut order = train_idx.clone();
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut r);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (bx, by) = gather(batch);
            let masks: Vec<Vec<f64>> = (0..bx.len())
                .map(|_| {
                    (0..config.hidden_dim).map(|_| if r.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect()
                })
                .collect();
            let (loss, grad) = head.loss_and_grad(&bx, &by, (config.dropout > 0.0).then_some(masks.as_slice()));
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b, loss });
            }
            opt.step(&mut head.params, &grad, config.learning_rate, &mask);
        }
        let vl = head.loss(&vx, &vy);
        if vl < best.0 {
            best = (vl, epoch, head.params.clone());
        } else if epoch - best.1 >= config.patience {
            break;
        }
    }
    head.params = best.2;
    Ok((head, best.1))
}

/// Trains one head per configured seed and reports test metrics.
pub fn train_neural_head(
    data: &HeadData,
    n_classes: usize,
    input: HeadInput,
    config: &NeuralHeadConfig,
) -> Result<NeuralReport> {
    config.validate()?;
    let train = rows(&data.train_embeddings, &data.train_features, input)?;
    let test = rows(&data.test_embeddings, &data.test_features, input)?;
    if train.is_empty() || train.len() != data.train_labels.len() || test.len() != data.test_labels.len() {
        return Err(Error::Precondition("neural head inputs and labels disagree in length".into()));
    }
    if let Some(t) = test.first() {
        if t.len() != train[0].len() {
            return Err(Error::DimensionMismatch { expected: train[0].len(), got: t.len() });
        }
    }
    let mut per_seed = Vec::new();
    let mut best_epochs = Vec::new();
    for &seed in &config.seeds {
        let (head, best) = train_one(&train, &data.train_labels, n_classes, seed, config)?;
        let preds: Vec<usize> = test.iter().map(|x| argmax(&head.predict_proba(x))).collect();
        per_seed.push(macro_metrics(&preds, &data.test_labels, n_classes)?);
        best_epochs.push(best);
    }
    let acc: Vec<f64> = per_seed.iter().map(|m| m.accuracy).collect();
    let f1: Vec<f64> = per_seed.iter().map(|m| m.macro_f1).collect();
    Ok(NeuralReport { input, accuracy: mean_std(&acc), macro_f1: mean_std(&f1), per_seed, best_epochs })
}
