use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{macro_metrics, Metrics};
use crate::kg_distill::RelationLabel;
use crate::nn::{argmax, inverse_frequency_weights, AdamW, LinearWarmupDecay, Mlp};
use crate::rng;
use crate::store::{self, Tensor, TensorFile};

pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub max_tokens: usize,
    pub patience: usize,
    /// Explicit per-class loss weights; inverse class frequency (mean 1)
    /// when absent.
    pub class_weights: Option<BTreeMap<RelationLabel, f64>>,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub validation_fraction: f64,
    /// Contexts per provider request during featurization.
    pub embed_batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden_dim: 100,
            learning_rate: 2e-5,
            max_epochs: 100,
            batch_size: 8,
            max_tokens: 256,
            patience: 3,
            class_weights: None,
            warmup_fraction: 0.1,
            weight_decay: 0.01,
            validation_fraction: 0.1,
            embed_batch_size: 32,
            seed: 42,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.hidden_dim > 0
            && self.learning_rate > 0.0
            && self.max_epochs > 0
            && self.batch_size > 0
            && self.max_tokens > 0
            && self.patience > 0;
        if !positive {
            return Err(Error::Precondition("classifier hyperparameters must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Precondition("patience exceeds max_epochs".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) || !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Precondition("warmup and validation fractions must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        store::sha256_hex(serde_json::to_vec(self).unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: RelationLabel,
    pub probabilities: [f64; N_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationClassifier {
    pub mlp: Mlp,
    /// Dimension `D` of each of the five feature blocks.
    pub embed_dim: usize,
    pub max_tokens: usize,
    pub config_hash: String,
}

impl RelationClassifier {
    pub fn zeros(embed_dim: usize, hidden_dim: usize) -> Self {
        RelationClassifier {
            mlp: Mlp::zeros(embed_dim * 5, hidden_dim, N_CLASSES),
            embed_dim,
            max_tokens: ClassifierConfig::default().max_tokens,
            config_hash: String::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let p = self.mlp.predict_proba(x);
        let probabilities = [p[0], p[1], p[2]];
        Ok(Prediction { label: RelationLabel::ALL[argmax(&p)], probabilities })
    }

    pub fn to_tensor_file(&self) -> TensorFile {
        let (d, h, c) = (self.mlp.input_dim, self.mlp.hidden_dim, self.mlp.n_classes);
        let p = &self.mlp.params;
        let (b1, w2, b2) = (h * d, h * d + h, h * d + h + c * h);
        let mut file = TensorFile::new(serde_json::json!({
            "kind": "relation_classifier",
            "input_dim": d,
            "hidden_dim": h,
            "embed_dim": self.embed_dim,
            "max_tokens": self.max_tokens,
            "classes": RelationLabel::ALL.iter().map(|l| l.name()).collect::<Vec<_>>(),
            "config_hash": self.config_hash,
        }));
        file.push(Tensor::new("w1", vec![h, d], p[..b1].to_vec()))
            .push(Tensor::new("b1", vec![h], p[b1..w2].to_vec()))
            .push(Tensor::new("w2", vec![c, h], p[w2..b2].to_vec()))
            .push(Tensor::new("b2", vec![c], p[b2..].to_vec()));
        file
    }

    pub fn from_tensor_file(file: &TensorFile) -> Result<Self> {
        let meta = &file.meta;
        if meta["kind"] != "relation_classifier" {
            return Err(Error::TensorFormat("not a relation classifier checkpoint".into()));
        }
        let field =
            |k: &str| meta[k].as_u64().map(|v| v as usize).ok_or_else(|| Error::TensorFormat(format!("missing `{k}`")));
        let (d, h) = (field("input_dim")?, field("hidden_dim")?);
        let mut mlp = Mlp::zeros(d, h, N_CLASSES);
        let mut params = Vec::with_capacity(mlp.params.len());
        for name in ["w1", "b1", "w2", "b2"] {
            params.extend_from_slice(&file.get(name)?.data);
        }
        if params.len() != mlp.params.len() {
            return Err(Error::TensorFormat("parameter count does not match dimensions".into()));
        }
        mlp.params = params;
        Ok(RelationClassifier {
            mlp,
            embed_dim: field("embed_dim")?,
            max_tokens: field("max_tokens")?,
            config_hash: meta["config_hash"].as_str().unwrap_or_default().to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_tensor_file().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensor_file(&TensorFile::read(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 0-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub class_weights: Vec<f64>,
    /// Metrics of the kept model on the validation split.
    pub validation: Metrics,
}

/// Stratified holdout: per class, `round(n_c * fraction)` examples go to the
/// second list. Returns `(train, holdout)` indices.
pub fn stratified_holdout(ys: &[usize], n_classes: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut r = rng::seeded(seed);
    let mut train = Vec::new();
    let mut hold = Vec::new();
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..ys.len()).filter(|&i| ys[i] == c).collect();
        idx.shuffle(&mut r);
        let k = ((idx.len() as f64) * fraction).round() as usize;
        let k = k.min(idx.len().saturating_sub(1));
        hold.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    if hold.is_empty() && fraction > 0.0 && train.len() > 1 {
        hold.push(train.pop().unwrap_or_default());
    }
    train.sort_unstable();
    hold.sort_unstable();
    (train, hold)
}

fn class_weights(config: &ClassifierConfig, ys: &[usize]) -> Vec<f64> {
    match &config.class_weights {
        Some(map) => RelationLabel::ALL.iter().map(|l| map.get(l).copied().unwrap_or(1.0)).collect(),
        None => {
            let mut counts = vec![0usize; N_CLASSES];
            ys.iter().for_each(|&y| counts[y] += 1);
            inverse_frequency_weights(&counts)
        }
    }
}

/// Trains the head on precomputed feature rows (length `5 * D`).
pub fn train_on_features(
    xs: &[Vec<f64>],
    ys: &[RelationLabel],
    config: &ClassifierConfig,
) -> Result<(RelationClassifier, TrainReport)> {
    config.validate()?;
    if xs.len() != ys.len() {
        return Err(Error::Precondition("feature and label counts differ".into()));
    }
    let y: Vec<usize> = ys.iter().map(|l| l.index()).collect();
    for l in RelationLabel::ALL {
        if !ys.contains(&l) {
            return Err(Error::Precondition(format!("class {} has no examples", l.name())));
        }
    }
    let dim = xs[0].len();
    if dim == 0 || !dim.is_multiple_of(5) {
        return Err(Error::DimensionMismatch { expected: 5 * (dim / 5).max(1), got: dim });
    }
    if let Some(bad) = xs.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }

    let (train_idx, val_idx) =
        stratified_holdout(&y, N_CLASSES, config.validation_fraction, rng::derive(config.seed, 1));
    let weights = class_weights(config, &y);
    let mut init_rng = rng::seeded(rng::derive(config.seed, 2));
    let mut shuffle_rng = rng::seeded(rng::derive(config.seed, 3));
    let mut mlp = Mlp::init(dim, config.hidden_dim, N_CLASSES, &mut init_rng);
    let mask = mlp.decay_mask();
    let mut opt = AdamW::new(mlp.params.len(), config.weight_decay);
    let batches_per_epoch = train_idx.len().div_ceil(config.batch_size);
    let schedule = LinearWarmupDecay::new(config.max_epochs * batches_per_epoch, config.warmup_fraction);

    let gather = |idx: &[usize]| -> (Vec<&[f64]>, Vec<usize>) {
        (idx.iter().map(|&i| xs[i].as_slice()).collect(), idx.iter().map(|&i| y[i]).collect())
    };
    let (val_x, val_y) = gather(if val_idx.is_empty() { &train_idx } else { &val_idx });

    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();
    let mut best = (f64::INFINITY, 0usize, mlp.params.clone());
    let mut order = train_idx.clone();
    let mut step = 0usize;
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (bx, by) = gather(batch);
            let (loss, grad) = mlp.loss_and_grad(&bx, &by, &weights);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b, loss });
            }
            sum += loss;
            opt.step(&mut mlp.params, &grad, config.learning_rate * schedule.factor(step), &mask);
            step += 1;
        }
        train_loss.push(sum / batches_per_epoch.max(1) as f64);
        let vl = mlp.loss(&val_x, &val_y, &weights);
        if !vl.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: usize::MAX, loss: vl });
        }
        val_loss.push(vl);
        log::debug!("epoch {epoch}: train {:.6} val {vl:.6}", train_loss[epoch]);
        if vl < best.0 {
            best = (vl, epoch, mlp.params.clone());
        } else if epoch - best.1 >= config.patience {
            break;
        }
    }
    mlp.params = best.2;
    let model =
        RelationClassifier { mlp, embed_dim: dim / 5, max_tokens: config.max_tokens, config_hash: config.hash() };
    let preds: Vec<usize> = val_x.iter().map(|x| argmax(&model.mlp.logits(x))).collect();
    let validation = macro_metrics(&preds, &val_y, N_CLASSES)?;
    let report = TrainReport {
        epochs_run: val_loss.len(),
        train_loss,
        val_loss,
        best_epoch: best.1,
        class_weights: weights,
        validation,
    };
    Ok((model, report))
}
