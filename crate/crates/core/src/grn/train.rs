use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{EncodedBundle, Gradients, GrnModel, GrnWeights};
use crate::paths::BundleRecord;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Global L2 norm the gradient is clipped to before each update.
    pub clip_norm: f64,
    pub max_epochs: usize,
    /// Epochs without improvement of the monitored accuracy before stopping.
    pub patience: usize,
    pub seed: u64,
    pub freeze_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 64,
            clip_norm: 5.0,
            max_epochs: 150,
            patience: 20,
            seed: 0,
            freeze_embeddings: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config(format!("clip norm must be positive, got {}", self.clip_norm)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches (dropout on).
    pub train_loss: f64,
    pub dev_acc: Option<f64>,
    /// Only filled when no dev set is given; it is then the stopping monitor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_acc: Option<f64>,
}

/// Adam with bias correction. Moments are kept densely for every tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(weights: &GrnWeights, learning_rate: f64) -> Self {
        let zeros: Vec<Vec<f64>> = weights.tensors().iter().map(|(_, t, _)| vec![0.0; t.len()]).collect();
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, weights: &mut GrnWeights, grads: &Gradients, update_embedding: bool) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let (lr, b1, b2, eps) = (self.learning_rate, self.beta1, self.beta2, self.eps);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        };

        let d = weights.embedding.ncols();
        let mut params = weights.tensors_mut().into_iter();
        let (_, emb) = params.next().expect("embedding tensor first");
        if update_embedding {
            let (m, v) = (&mut self.m[0], &mut self.v[0]);
            for (i, p) in emb.iter_mut().enumerate() {
                let g = grads.embedding.get(&(i / d)).map_or(0.0, |row| row[i % d]);
                update(p, &mut m[i], &mut v[i], g);
            }
        }
        for (k, ((_, p), (_, g, _))) in params.zip(grads.dense_tensors()).enumerate() {
            let (m, v) = (&mut self.m[k + 1], &mut self.v[k + 1]);
            for i in 0..p.len() {
                update(&mut p[i], &mut m[i], &mut v[i], g[i]);
            }
        }
    }
}

fn encode_all(model: &GrnModel, bundles: &[BundleRecord]) -> Result<Vec<EncodedBundle>> {
    bundles.par_iter().map(|b| model.encode(b, true)).collect()
}

fn accuracy_of(model: &GrnModel, data: &[EncodedBundle]) -> f64 {
    let correct = data
        .par_iter()
        .filter(|ex| Some(model.predict(ex)) == ex.label)
        .count();
    correct as f64 / data.len().max(1) as f64
}

/// Trains a copy of `model` and returns the parameters with the best
/// monitored accuracy together with the per-epoch history. The monitor is
/// dev accuracy, or training accuracy when no dev set is given.
pub fn train(
    model: &GrnModel,
    train_set: &[BundleRecord],
    dev_set: Option<&[BundleRecord]>,
    config: &TrainConfig,
) -> Result<(GrnModel, Vec<EpochRecord>)> {
    train_with(model, train_set, dev_set, config, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    model: &GrnModel,
    train_set: &[BundleRecord],
    dev_set: Option<&[BundleRecord]>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(GrnModel, Vec<EpochRecord>)> {
    if train_set.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    config.validate()?;
    model.check_finite()?;
    let train_data = encode_all(model, train_set)?;
    let dev_data = dev_set.map(|d| encode_all(model, d)).transpose()?;

    let mut current = model.clone();
    let mut best = model.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut history = Vec::new();
    let mut adam = Adam::new(&current.weights, config.learning_rate);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(config.seed, "shuffle", epoch as u64));
        let epoch_seed = seed::derive(config.seed, "epoch", epoch as u64);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(idx.iter().map(|&i| train_data[i].clone()));
            let (loss, mut grads) =
                current.loss_and_grads(&batch, true, seed::derive(epoch_seed, "batch", b as u64))?;
            let norm = grads.norm();
            if norm > config.clip_norm {
                grads.scale(config.clip_norm / norm);
            }
            adam.step(&mut current.weights, &grads, !config.freeze_embeddings);
            loss_sum += loss * idx.len() as f64;
        }
        current.check_finite()?;

        let (dev_acc, train_acc, monitored) = match &dev_data {
            Some(dev) if !dev.is_empty() => {
                let a = accuracy_of(&current, dev);
                (Some(a), None, a)
            }
            _ => {
                let a = accuracy_of(&current, &train_data);
                (None, Some(a), a)
            }
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_data.len() as f64,
            dev_acc,
            train_acc,
        };
        on_epoch(&record);
        history.push(record);

        if monitored > best_acc {
            best_acc = monitored;
            best = current.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok((best, history))
}

/// Accuracy and confusion counts. `confusion[gold][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub labels: Vec<String>,
    pub count: usize,
    pub correct: usize,
    /// `None` for an empty set.
    pub accuracy: Option<f64>,
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<String>,
}

/// Argmax evaluation with dropout off.
pub fn evaluate(model: &GrnModel, bundles: &[BundleRecord]) -> Result<Evaluation> {
    let data = encode_all(model, bundles)?;
    let predicted: Vec<usize> = data.par_iter().map(|ex| model.predict(ex)).collect();
    let labels = &model.config.labels;
    let k = labels.len();
    let mut confusion = vec![vec![0; k]; k];
    let mut correct = 0;
    for (ex, &p) in data.iter().zip(&predicted) {
        let gold = ex.label.expect("encoded with labels required");
        confusion[gold][p] += 1;
        correct += usize::from(gold == p);
    }
    Ok(Evaluation {
        labels: labels.as_slice().to_vec(),
        count: data.len(),
        correct,
        accuracy: (!data.is_empty()).then(|| correct as f64 / data.len() as f64),
        confusion,
        predictions: predicted.iter().map(|&p| labels.name(p).to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grn::model::tests::{record, tiny_config};
    use crate::grn::{PathTokenMode, TokenVocab};

    /// Label recoverable from one relation token among shared noise.
    fn separable(n: usize) -> Vec<BundleRecord> {
        let cue = ["entails", "contradicts", "unrelated"];
        let labels = ["entailment", "contradiction", "neutral"];
        (0..n)
            .map(|i| {
                let c = i % 3;
                let noise = ["isa", "partof", "atlocation"][(i / 3) % 3];
                record(&i.to_string(), labels[c], &[&[noise, cue[c]], &[noise]])
            })
            .collect()
    }

    fn fresh(data: &[BundleRecord], seed: u64) -> GrnModel {
        let vocab = TokenVocab::from_bundles(data, PathTokenMode::Relations);
        GrnModel::new(tiny_config(), vocab, seed).unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 8,
            max_epochs: 150,
            patience: 20,
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let data = separable(6);
        let m = fresh(&data, 1);
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let (out, history) = train(&m, &data, None, &cfg).unwrap();
        assert_eq!(out, m);
        assert!(history.is_empty());
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let m = fresh(&separable(3), 1);
        assert!(matches!(train(&m, &[], None, &quick()), Err(Error::EmptyTrainingSet)));
    }

    #[test]
    fn overfits_separable_fixture() {
        let data = separable(20);
        let m = fresh(&data, 2);
        let (trained, history) = train(&m, &data, None, &quick()).unwrap();
        let eval = evaluate(&trained, &data).unwrap();
        assert_eq!(eval.accuracy, Some(1.0), "history: {history:?}");
        assert!(history.len() <= 150);
        let mut best = f64::INFINITY;
        for h in &history {
            assert!(h.train_loss >= 0.0);
            best = best.min(h.train_loss);
        }
        assert!(best < history[0].train_loss);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(12);
        let cfg = TrainConfig {
            max_epochs: 5,
            ..quick()
        };
        let (a, ha) = train(&fresh(&data, 3), &data, Some(&data), &cfg).unwrap();
        let (b, hb) = train(&fresh(&data, 3), &data, Some(&data), &cfg).unwrap();
        assert_eq!(ha, hb);
        for ((_, x, _), (_, y, _)) in a.weights.tensors().into_iter().zip(b.weights.tensors()) {
            assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn frozen_embeddings_stay_put() {
        let data = separable(6);
        let m = fresh(&data, 5);
        let cfg = TrainConfig {
            max_epochs: 3,
            freeze_embeddings: true,
            ..quick()
        };
        let (out, _) = train(&m, &data, None, &cfg).unwrap();
        assert_eq!(out.weights.embedding, m.weights.embedding);
        assert_ne!(out.weights.head, m.weights.head);
    }

    #[test]
    fn evaluation_counts() {
        let data = separable(9);
        let m = fresh(&data, 6);
        let e = evaluate(&m, &[]).unwrap();
        assert_eq!((e.count, e.accuracy), (0, None));
        let e = evaluate(&m, &data).unwrap();
        assert_eq!(e.count, 9);
        assert_eq!(e.confusion.iter().flatten().sum::<usize>(), 9);
        let diag: usize = (0..3).map(|i| e.confusion[i][i]).sum();
        assert_eq!(diag, e.correct);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
    }
}
