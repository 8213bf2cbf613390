//! GRU cells with hand-written reverse-mode gradients.
//!
//! Gate layout follows the common `[reset, update, candidate]` stacking:
//!
//! ```text
//! r  = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
//! z  = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
//! n  = tanh(W_in x + b_in + r * (W_hn h + b_hn))
//! h' = (1 - z) * n + z * h
//! ```

use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights {
    /// `3H x D`
    pub w_ih: Array2<f64>,
    /// `3H x H`
    pub w_hh: Array2<f64>,
    pub b_ih: Array1<f64>,
    pub b_hh: Array1<f64>,
}

impl GruWeights {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruWeights {
            w_ih: Array2::zeros((3 * hidden, input)),
            w_hh: Array2::zeros((3 * hidden, hidden)),
            b_ih: Array1::zeros(3 * hidden),
            b_hh: Array1::zeros(3 * hidden),
        }
    }

    /// Uniform in `±1/sqrt(H)` for every weight and bias.
    pub fn random(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
        let mut w = Self::zeros(input, hidden);
        for v in w
            .w_ih
            .iter_mut()
            .chain(w.w_hh.iter_mut())
            .chain(w.b_ih.iter_mut())
            .chain(w.b_hh.iter_mut())
        {
            *v = dist.sample(rng);
        }
        w
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hh.ncols()
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64], Vec<usize>)>) {
        out.push((format!("{prefix}.w_ih"), slice(&self.w_ih), self.w_ih.shape().to_vec()));
        out.push((format!("{prefix}.w_hh"), slice(&self.w_hh), self.w_hh.shape().to_vec()));
        out.push((format!("{prefix}.b_ih"), self.b_ih.as_slice().unwrap(), vec![self.b_ih.len()]));
        out.push((format!("{prefix}.b_hh"), self.b_hh.as_slice().unwrap(), vec![self.b_hh.len()]));
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((format!("{prefix}.w_ih"), self.w_ih.as_slice_mut().unwrap()));
        out.push((format!("{prefix}.w_hh"), self.w_hh.as_slice_mut().unwrap()));
        out.push((format!("{prefix}.b_ih"), self.b_ih.as_slice_mut().unwrap()));
        out.push((format!("{prefix}.b_hh"), self.b_hh.as_slice_mut().unwrap()));
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Activations of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    r: Array1<f64>,
    z: Array1<f64>,
    n: Array1<f64>,
    /// `W_hn h + b_hn`
    hn: Array1<f64>,
}

pub fn step(w: &GruWeights, x: ArrayView1<f64>, h: &Array1<f64>) -> (Array1<f64>, StepCache) {
    let hd = w.hidden_dim();
    let gi = w.w_ih.dot(&x) + &w.b_ih;
    let gh = w.w_hh.dot(h) + &w.b_hh;
    let r = (&gi.slice(s![..hd]) + &gh.slice(s![..hd])).mapv(sigmoid);
    let z = (&gi.slice(s![hd..2 * hd]) + &gh.slice(s![hd..2 * hd])).mapv(sigmoid);
    let hn = gh.slice(s![2 * hd..]).to_owned();
    let n = (&gi.slice(s![2 * hd..]) + &(&r * &hn)).mapv(f64::tanh);
    let h_next = &(1.0 - &z) * &n + &(&z * h);
    let cache = StepCache {
        x: x.to_owned(),
        h_prev: h.clone(),
        r,
        z,
        n,
        hn,
    };
    (h_next, cache)
}

fn add_outer(acc: &mut Array2<f64>, col: &Array1<f64>, row: &Array1<f64>) {
    let c = col.view().insert_axis(Axis(1));
    let r = row.view().insert_axis(Axis(0));
    general_mat_mul(1.0, &c, &r, 1.0, acc);
}

/// Backpropagates `dh` through one step. Accumulates weight gradients into
/// `grad` and returns `(dx, dh_prev)`.
pub fn step_backward(
    w: &GruWeights,
    cache: &StepCache,
    dh: &Array1<f64>,
    grad: &mut GruWeights,
) -> (Array1<f64>, Array1<f64>) {
    let StepCache { x, h_prev, r, z, n, hn } = cache;
    let dn = dh * &(1.0 - z);
    let dz = dh * &(h_prev - n);
    let mut dh_prev = dh * z;
    let da_n = &dn * &(1.0 - &(n * n));
    let dr = &da_n * hn;
    let dhn = &da_n * r;
    let da_z = &dz * &(z * &(1.0 - z));
    let da_r = &dr * &(r * &(1.0 - r));

    let dgi = concatenate![Axis(0), da_r, da_z, da_n];
    let dgh = concatenate![Axis(0), da_r, da_z, dhn];

    add_outer(&mut grad.w_ih, &dgi, x);
    grad.b_ih += &dgi;
    add_outer(&mut grad.w_hh, &dgh, h_prev);
    grad.b_hh += &dgh;

    let dx = w.w_ih.t().dot(&dgi);
    dh_prev += &w.w_hh.t().dot(&dgh);
    (dx, dh_prev)
}

/// Runs a GRU from a zero state over `xs`, returning the final state.
pub fn run(w: &GruWeights, xs: &[ArrayView1<f64>]) -> (Array1<f64>, Vec<StepCache>) {
    let mut h = Array1::zeros(w.hidden_dim());
    let mut caches = Vec::with_capacity(xs.len());
    for x in xs {
        let (next, cache) = step(w, *x, &h);
        caches.push(cache);
        h = next;
    }
    (h, caches)
}

/// Gradient of a sequence run given the gradient of its final state.
/// Returns per-input gradients in input order.
pub fn run_backward(
    w: &GruWeights,
    caches: &[StepCache],
    d_final: Array1<f64>,
    grad: &mut GruWeights,
) -> Vec<Array1<f64>> {
    let mut dxs = vec![Array1::zeros(w.input_dim()); caches.len()];
    let mut dh = d_final;
    for (t, cache) in caches.iter().enumerate().rev() {
        let (dx, dh_prev) = step_backward(w, cache, &dh, grad);
        dxs[t] = dx;
        dh = dh_prev;
    }
    dxs
}

/// Forward and backward GRUs with separate parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGruWeights {
    pub fwd: GruWeights,
    pub bwd: GruWeights,
}

pub struct BiGruCache {
    fwd: Vec<StepCache>,
    bwd: Vec<StepCache>,
}

impl BiGruWeights {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        BiGruWeights {
            fwd: GruWeights::zeros(input, hidden),
            bwd: GruWeights::zeros(input, hidden),
        }
    }

    pub fn random(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let fwd = GruWeights::random(input, hidden, rng);
        let bwd = GruWeights::random(input, hidden, rng);
        BiGruWeights { fwd, bwd }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden_dim()
    }

    /// `[forward final state, backward final state]`, where the backward
    /// GRU reads the sequence right to left.
    pub fn encode(&self, xs: &[ArrayView1<f64>]) -> (Array1<f64>, BiGruCache) {
        let (hf, fwd) = run(&self.fwd, xs);
        let reversed: Vec<_> = xs.iter().rev().copied().collect();
        let (hb, bwd) = run(&self.bwd, &reversed);
        (concatenate![Axis(0), hf, hb], BiGruCache { fwd, bwd })
    }

    pub fn encode_backward(
        &self,
        cache: &BiGruCache,
        d_out: &Array1<f64>,
        grad: &mut BiGruWeights,
    ) -> Vec<Array1<f64>> {
        let h = self.fwd.hidden_dim();
        let mut dxs = run_backward(&self.fwd, &cache.fwd, d_out.slice(s![..h]).to_owned(), &mut grad.fwd);
        let dxs_rev = run_backward(&self.bwd, &cache.bwd, d_out.slice(s![h..]).to_owned(), &mut grad.bwd);
        for (dx, d) in dxs.iter_mut().zip(dxs_rev.iter().rev()) {
            *dx += d;
        }
        dxs
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64], Vec<usize>)>) {
        self.fwd.tensors(&format!("{prefix}.fwd"), out);
        self.bwd.tensors(&format!("{prefix}.bwd"), out);
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.fwd.tensors_mut(&format!("{prefix}.fwd"), out);
        self.bwd.tensors_mut(&format!("{prefix}.bwd"), out);
    }
}
