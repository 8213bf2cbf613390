use std::collections::BTreeMap;

use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gru::{BiGruCache, BiGruWeights};
use super::vocab::{TokenVocab, NO_PATH};
use super::{tokenize_path, PathTokenMode};
use crate::concepts::LabelSet;
use crate::paths::BundleRecord;
use crate::{seed, Error, Result};

/// Examples per gradient-accumulation chunk. Chunks run in parallel and are
/// summed in index order, so results do not depend on the thread count.
const CHUNK: usize = 8;

/// Architecture and input handling. Everything needed to rebuild the
/// parameter shapes lives here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub mode: PathTokenMode,
    pub labels: LabelSet,
    pub embedding_dim: usize,
    pub token_hidden: usize,
    pub pair_hidden: usize,
    pub ffn_hidden: usize,
    /// Width of the optional external feature vector appended to the
    /// pair-level encoding. Zero disables it.
    pub external_features: usize,
    pub hidden_dropout: f64,
    pub output_dropout: f64,
    pub max_tokens: usize,
    pub max_paths: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: PathTokenMode::Relations,
            labels: LabelSet::default(),
            embedding_dim: 300,
            token_hidden: 300,
            pair_hidden: 300,
            ffn_hidden: 200,
            external_features: 0,
            hidden_dropout: 0.2,
            output_dropout: 0.0,
            max_tokens: 64,
            max_paths: 256,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embedding_dim", self.embedding_dim),
            ("token_hidden", self.token_hidden),
            ("pair_hidden", self.pair_hidden),
            ("ffn_hidden", self.ffn_hidden),
            ("max_tokens", self.max_tokens),
            ("max_paths", self.max_paths),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, p) in [("hidden_dropout", self.hidden_dropout), ("output_dropout", self.output_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {p}")));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    fn head_input(&self) -> usize {
        2 * self.pair_hidden + self.external_features
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl HeadWeights {
    fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        HeadWeights {
            w1: Array2::zeros((hidden, input)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((classes, hidden)),
            b2: Array1::zeros(classes),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)` per layer.
    fn random(input: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        let mut h = Self::zeros(input, hidden, classes);
        let fill = |it: &mut dyn Iterator<Item = &mut f64>, fan_in: usize, rng: &mut dyn rand::RngCore| {
            let b = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-b, b).expect("valid bounds");
            for v in it {
                *v = dist.sample(rng);
            }
        };
        fill(&mut h.w1.iter_mut().chain(h.b1.iter_mut()), input, rng);
        fill(&mut h.w2.iter_mut().chain(h.b2.iter_mut()), hidden, rng);
        h
    }

    fn tensors<'a>(&'a self, out: &mut Vec<(String, &'a [f64], Vec<usize>)>) {
        out.push(("head.w1".into(), self.w1.as_slice().unwrap(), self.w1.shape().to_vec()));
        out.push(("head.b1".into(), self.b1.as_slice().unwrap(), vec![self.b1.len()]));
        out.push(("head.w2".into(), self.w2.as_slice().unwrap(), self.w2.shape().to_vec()));
        out.push(("head.b2".into(), self.b2.as_slice().unwrap(), vec![self.b2.len()]));
    }

    fn tensors_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push(("head.w1".into(), self.w1.as_slice_mut().unwrap()));
        out.push(("head.b1".into(), self.b1.as_slice_mut().unwrap()));
        out.push(("head.w2".into(), self.w2.as_slice_mut().unwrap()));
        out.push(("head.b2".into(), self.b2.as_slice_mut().unwrap()));
    }
}

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct GrnWeights {
    /// `vocab x d`
    pub embedding: Array2<f64>,
    pub token: BiGruWeights,
    pub pair: BiGruWeights,
    pub head: HeadWeights,
}

impl GrnWeights {
    pub fn zeros(config: &ModelConfig, vocab_size: usize) -> Self {
        GrnWeights {
            embedding: Array2::zeros((vocab_size, config.embedding_dim)),
            token: BiGruWeights::zeros(config.embedding_dim, config.token_hidden),
            pair: BiGruWeights::zeros(2 * config.token_hidden, config.pair_hidden),
            head: HeadWeights::zeros(config.head_input(), config.ffn_hidden, config.num_classes()),
        }
    }

    pub fn random(config: &ModelConfig, vocab_size: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed, "init", 0);
        let mut embedding = Array2::zeros((vocab_size, config.embedding_dim));
        fill_embedding_rows(&mut embedding, &mut rng);
        GrnWeights {
            embedding,
            token: BiGruWeights::random(config.embedding_dim, config.token_hidden, &mut rng),
            pair: BiGruWeights::random(2 * config.token_hidden, config.pair_hidden, &mut rng),
            head: HeadWeights::random(config.head_input(), config.ffn_hidden, config.num_classes(), &mut rng),
        }
    }

    /// `(name, data, shape)` for every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64], Vec<usize>)> {
        let mut out = vec![(
            "embedding".to_string(),
            self.embedding.as_slice().unwrap(),
            self.embedding.shape().to_vec(),
        )];
        self.token.tensors("token", &mut out);
        self.pair.tensors("pair", &mut out);
        self.head.tensors(&mut out);
        out
    }

    /// Same order as [`GrnWeights::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = vec![("embedding".to_string(), self.embedding.as_slice_mut().unwrap())];
        self.token.tensors_mut("token", &mut out);
        self.pair.tensors_mut("pair", &mut out);
        self.head.tensors_mut(&mut out);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t, _)| t.len()).sum()
    }
}

/// Embedding rows are drawn from a normal with standard deviation 0.01.
pub(crate) fn fill_embedding_rows(m: &mut Array2<f64>, rng: &mut ChaCha8Rng) {
    let normal = Normal::new(0.0, 0.01).expect("valid std");
    for v in m.iter_mut() {
        *v = normal.sample(rng);
    }
}

/// Gradients with the same layout as [`GrnWeights`]; embedding rows are
/// sparse because a batch touches few tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: BTreeMap<usize, Array1<f64>>,
    pub token: BiGruWeights,
    pub pair: BiGruWeights,
    pub head: HeadWeights,
}

impl Gradients {
    pub fn zeros(config: &ModelConfig) -> Self {
        let z = GrnWeights::zeros(config, 0);
        Gradients {
            embedding: BTreeMap::new(),
            token: z.token,
            pair: z.pair,
            head: z.head,
        }
    }

    /// Dense tensors in [`GrnWeights::tensors`] order, without the embedding.
    pub fn dense_tensors(&self) -> Vec<(String, &[f64], Vec<usize>)> {
        let mut out = Vec::new();
        self.token.tensors("token", &mut out);
        self.pair.tensors("pair", &mut out);
        self.head.tensors(&mut out);
        out
    }

    fn dense_tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        self.token.tensors_mut("token", &mut out);
        self.pair.tensors_mut("pair", &mut out);
        self.head.tensors_mut(&mut out);
        out
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (row, g) in &other.embedding {
            match self.embedding.get_mut(row) {
                Some(acc) => *acc += g,
                None => {
                    self.embedding.insert(*row, g.clone());
                }
            }
        }
        let theirs = other.dense_tensors();
        for ((_, mine), (_, theirs, _)) in self.dense_tensors_mut().into_iter().zip(theirs) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.embedding.values_mut() {
            *g *= factor;
        }
        for (_, t) in self.dense_tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn norm(&self) -> f64 {
        let emb: f64 = self.embedding.values().map(|g| g.dot(g)).sum();
        let dense: f64 = self
            .dense_tensors()
            .iter()
            .map(|(_, t, _)| t.iter().map(|v| v * v).sum::<f64>())
            .sum();
        (emb + dense).sqrt()
    }

    /// Errors naming the first tensor holding a NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        for (row, g) in &self.embedding {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of embedding row {row}")));
            }
        }
        for (name, t, _) in self.dense_tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        Ok(())
    }
}

/// A bundle mapped to vocabulary rows, with caps applied.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBundle {
    /// Never empty; a bundle without paths becomes one no-path token.
    pub paths: Vec<Vec<usize>>,
    pub label: Option<usize>,
    pub features: Option<Array1<f64>>,
}

struct ForwardCache {
    tokens: Vec<(Vec<usize>, BiGruCache)>,
    pair: BiGruCache,
    u: Array1<f64>,
    a1: Array1<f64>,
    mask1: Option<Array1<f64>>,
    d1: Array1<f64>,
    mask2: Option<Array1<f64>>,
}

/// Inverted dropout mask, or `None` when inactive.
fn dropout_mask(len: usize, p: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Array1<f64>> {
    let rng = rng?;
    if p == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(Array1::from_iter((0..len).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })))
}

fn add_outer(acc: &mut Array2<f64>, col: &Array1<f64>, row: &Array1<f64>) {
    let c = col.view().insert_axis(Axis(1));
    let r = row.view().insert_axis(Axis(0));
    general_mat_mul(1.0, &c, &r, 1.0, acc);
}

pub(crate) fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e = logits.mapv(|v| (v - max).exp());
    let sum = e.sum();
    e / sum
}

fn log_softmax_at(logits: &Array1<f64>, k: usize) -> f64 {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    logits[k] - lse
}

/// Classifier with its vocabulary and configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct GrnModel {
    pub config: ModelConfig,
    pub vocab: TokenVocab,
    pub weights: GrnWeights,
    /// Hex digest of the training data, recorded in checkpoints.
    pub data_hash: Option<String>,
}

impl GrnModel {
    /// Seeded random initialization.
    pub fn new(config: ModelConfig, vocab: TokenVocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let weights = GrnWeights::random(&config, vocab.len(), seed);
        Ok(GrnModel {
            config,
            vocab,
            weights,
            data_hash: None,
        })
    }

    pub fn zeros(config: ModelConfig, vocab: TokenVocab) -> Result<Self> {
        config.validate()?;
        let weights = GrnWeights::zeros(&config, vocab.len());
        Ok(GrnModel {
            config,
            vocab,
            weights,
            data_hash: None,
        })
    }

    /// Token rows for one bundle. The label is resolved when present in the
    /// label set; `require_label` turns an unknown label into an error.
    pub fn encode(&self, bundle: &BundleRecord, require_label: bool) -> Result<EncodedBundle> {
        let cfg = &self.config;
        let mut paths: Vec<Vec<usize>> = bundle
            .paths
            .iter()
            .take(cfg.max_paths)
            .map(|p| {
                tokenize_path(p, cfg.mode)
                    .into_iter()
                    .take(cfg.max_tokens)
                    .map(|t| self.vocab.id(t))
                    .collect::<Vec<_>>()
            })
            .filter(|t| !t.is_empty())
            .collect();
        if paths.is_empty() {
            paths.push(vec![NO_PATH]);
        }
        let label = match cfg.labels.index_of(&bundle.label) {
            Ok(i) => Some(i),
            Err(e) if require_label => return Err(e),
            Err(_) => None,
        };
        let features = if cfg.external_features == 0 {
            None
        } else {
            match &bundle.features {
                Some(f) if f.len() == cfg.external_features => Some(Array1::from(f.clone())),
                Some(f) => {
                    return Err(Error::Shape(format!(
                        "bundle `{}` has {} external features, model expects {}",
                        bundle.id,
                        f.len(),
                        cfg.external_features
                    )))
                }
                None => {
                    return Err(Error::Shape(format!(
                        "bundle `{}` has no external features, model expects {}",
                        bundle.id, cfg.external_features
                    )))
                }
            }
        };
        Ok(EncodedBundle { paths, label, features })
    }

    fn embed(&self, tokens: &[usize]) -> Vec<ArrayView1<'_, f64>> {
        tokens.iter().map(|&t| self.weights.embedding.row(t)).collect()
    }

    /// Path vector of width `2 * token_hidden`. Unknown rows are not
    /// possible here: tokens come from [`GrnModel::encode`].
    pub fn encode_path(&self, tokens: &[usize]) -> Array1<f64> {
        self.weights.token.encode(&self.embed(tokens)).0
    }

    fn forward(&self, ex: &EncodedBundle, mut rng: Option<&mut ChaCha8Rng>) -> (Array1<f64>, ForwardCache) {
        let w = &self.weights;
        let mut tokens = Vec::with_capacity(ex.paths.len());
        let mut hs = Vec::with_capacity(ex.paths.len());
        for p in &ex.paths {
            let (h, cache) = w.token.encode(&self.embed(p));
            hs.push(h);
            tokens.push((p.clone(), cache));
        }
        let views: Vec<_> = hs.iter().map(|h| h.view()).collect();
        let (z, pair) = w.pair.encode(&views);
        let u = match &ex.features {
            Some(f) => concatenate![Axis(0), z, *f],
            None => z,
        };
        let a1 = w.head.w1.dot(&u) + &w.head.b1;
        let mut d1 = a1.mapv(|v| v.max(0.0));
        let mask1 = dropout_mask(d1.len(), self.config.hidden_dropout, rng.as_deref_mut());
        if let Some(m) = &mask1 {
            d1 *= m;
        }
        let mut logits = w.head.w2.dot(&d1) + &w.head.b2;
        let mask2 = dropout_mask(logits.len(), self.config.output_dropout, rng);
        if let Some(m) = &mask2 {
            logits *= m;
        }
        let cache = ForwardCache {
            tokens,
            pair,
            u,
            a1,
            mask1,
            d1,
            mask2,
        };
        (logits, cache)
    }

    fn backward(&self, cache: &ForwardCache, dlogits: Array1<f64>, g: &mut Gradients) {
        let w = &self.weights;
        let mut dl = dlogits;
        if let Some(m) = &cache.mask2 {
            dl *= m;
        }
        add_outer(&mut g.head.w2, &dl, &cache.d1);
        g.head.b2 += &dl;
        let mut da1 = w.head.w2.t().dot(&dl);
        if let Some(m) = &cache.mask1 {
            da1 *= m;
        }
        da1.zip_mut_with(&cache.a1, |d, &a| {
            if a <= 0.0 {
                *d = 0.0
            }
        });
        add_outer(&mut g.head.w1, &da1, &cache.u);
        g.head.b1 += &da1;
        let du = w.head.w1.t().dot(&da1);
        let dz = du.slice(s![..2 * self.config.pair_hidden]).to_owned();
        let dhs = w.pair.encode_backward(&cache.pair, &dz, &mut g.pair);
        for ((tokens, tc), dh) in cache.tokens.iter().zip(&dhs) {
            let dxs = w.token.encode_backward(tc, dh, &mut g.token);
            for (&t, dx) in tokens.iter().zip(dxs) {
                match g.embedding.get_mut(&t) {
                    Some(acc) => *acc += &dx,
                    None => {
                        g.embedding.insert(t, dx);
                    }
                }
            }
        }
    }

    /// Class scores with dropout off.
    pub fn encode_bundle(&self, ex: &EncodedBundle) -> Array1<f64> {
        self.forward(ex, None).0
    }

    pub fn probabilities(&self, ex: &EncodedBundle) -> Array1<f64> {
        softmax(&self.encode_bundle(ex))
    }

    /// Argmax class; ties go to the lower index.
    pub fn predict(&self, ex: &EncodedBundle) -> usize {
        let logits = self.encode_bundle(ex);
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        best
    }

    /// Mean cross-entropy over `batch` and its gradient for every parameter.
    /// With `dropout` on, example `i` draws its masks from
    /// `derive(seed, "dropout", i)`.
    pub fn loss_and_grads(&self, batch: &[EncodedBundle], dropout: bool, seed: u64) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Ok((0.0, Gradients::zeros(&self.config)));
        }
        for ex in batch {
            if ex.label.is_none() {
                return Err(Error::Config("training example without a known label".into()));
            }
        }
        let n = batch.len() as f64;
        let chunks: Vec<(f64, Gradients)> = batch
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut g = Gradients::zeros(&self.config);
                let mut loss = 0.0;
                for (k, ex) in chunk.iter().enumerate() {
                    let index = (c * CHUNK + k) as u64;
                    let mut rng = dropout.then(|| seed::rng(seed, "dropout", index));
                    let (logits, cache) = self.forward(ex, rng.as_mut());
                    let y = ex.label.expect("checked above");
                    loss -= log_softmax_at(&logits, y);
                    let mut d = softmax(&logits);
                    d[y] -= 1.0;
                    d /= n;
                    self.backward(&cache, d, &mut g);
                }
                (loss, g)
            })
            .collect();
        let mut iter = chunks.into_iter();
        let (mut loss, mut grads) = iter.next().expect("non-empty batch");
        for (l, g) in iter {
            loss += l;
            grads.add_assign(&g);
        }
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        grads.check_finite()?;
        Ok((loss, grads))
    }

    /// Errors naming the first parameter tensor holding a NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        for (name, t, _) in self.weights.tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter {name}")));
            }
        }
        Ok(())
    }
}
