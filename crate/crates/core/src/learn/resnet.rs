//! Small 1-D residual convolutional network with manual backpropagation.
//!
//! Each block is `conv → ReLU → conv`, summed with an identity skip (or a
//! bias-free 1×1 projection when the channel count changes), then ReLU.
//! Global average pooling feeds a linear softmax head. There is no batch
//! normalization, so the loss is an ordinary function of the parameters.

use ndarray::{ArrayView1, ArrayView3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::softmax;
use super::{argmax, class_count, Classifier};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResNetHyper {
    pub n_blocks: usize,
    pub filters: usize,
    /// Odd kernel width; convolutions use same-padding.
    pub kernel: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Worker threads for per-sample gradients. Results do not depend on it.
    pub threads: usize,
}

impl Default for ResNetHyper {
    fn default() -> Self {
        Self {
            n_blocks: 3,
            filters: 16,
            kernel: 5,
            epochs: 8,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct BlockLayout {
    cin: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    proj: Option<usize>,
}

/// Offsets of every parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub channels: usize,
    pub length: usize,
    pub filters: usize,
    pub kernel: usize,
    pub n_classes: usize,
    blocks: Vec<BlockLayout>,
    head_w: usize,
    head_b: usize,
    n_params: usize,
}

impl Architecture {
    pub fn new(channels: usize, length: usize, n_blocks: usize, filters: usize, kernel: usize, n_classes: usize) -> Result<Self> {
        if channels == 0 || length == 0 || n_blocks == 0 || filters == 0 || n_classes < 2 {
            return Err(Error::argument("network dimensions must be positive with at least two classes"));
        }
        if kernel % 2 == 0 {
            return Err(Error::argument(format!("kernel width {kernel} must be odd")));
        }
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let mut blocks = Vec::with_capacity(n_blocks);
        let mut cin = channels;
        for _ in 0..n_blocks {
            let w1 = take(filters * cin * kernel);
            let b1 = take(filters);
            let w2 = take(filters * filters * kernel);
            let b2 = take(filters);
            let proj = (cin != filters).then(|| take(filters * cin));
            blocks.push(BlockLayout { cin, w1, b1, w2, b2, proj });
            cin = filters;
        }
        let head_w = take(n_classes * filters);
        let head_b = take(n_classes);
        Ok(Self {
            channels,
            length,
            filters,
            kernel,
            n_classes,
            blocks,
            head_w,
            head_b,
            n_params: off,
        })
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.length
    }

    /// He-normal weights, zero biases.
    pub fn init<T: Scalar>(&self, seed: u64) -> Vec<T> {
        let mut rng = rng::named_stream(seed, "resnet:init");
        let mut p = vec![T::zero(); self.n_params];
        let mut fill = |p: &mut [T], fan_in: usize| {
            let sd = (2.0 / fan_in as f64).sqrt();
            for v in p {
                *v = T::lit(sd * rng.sample::<f64, _>(StandardNormal));
            }
        };
        let (f, k) = (self.filters, self.kernel);
        for b in &self.blocks {
            fill(&mut p[b.w1..b.w1 + f * b.cin * k], b.cin * k);
            fill(&mut p[b.w2..b.w2 + f * f * k], f * k);
            if let Some(o) = b.proj {
                fill(&mut p[o..o + f * b.cin], b.cin);
            }
        }
        fill(&mut p[self.head_w..self.head_w + self.n_classes * f], f);
        p
    }
}

fn offset_range(o: isize, l: usize) -> (usize, usize) {
    let lo = (-o).max(0) as usize;
    let hi = (l as isize - o).clamp(0, l as isize) as usize;
    (lo, hi.max(lo))
}

/// Same-padded convolution of `inp` (cin × l) into `out` (f × l).
fn conv_forward<T: Scalar>(inp: &[T], cin: usize, l: usize, w: &[T], b: &[T], f: usize, k: usize, out: &mut [T]) {
    let pad = (k / 2) as isize;
    for fo in 0..f {
        let row = &mut out[fo * l..(fo + 1) * l];
        row.fill(b[fo]);
        for c in 0..cin {
            let src = &inp[c * l..(c + 1) * l];
            for kk in 0..k {
                let wv = w[(fo * cin + c) * k + kk];
                let o = kk as isize - pad;
                let (lo, hi) = offset_range(o, l);
                for t in lo..hi {
                    row[t] += wv * src[(t as isize + o) as usize];
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    inp: &[T],
    cin: usize,
    l: usize,
    w: &[T],
    f: usize,
    k: usize,
    dz: &[T],
    dw: &mut [T],
    db: &mut [T],
    mut dinp: Option<&mut [T]>,
) {
    let pad = (k / 2) as isize;
    for fo in 0..f {
        let g = &dz[fo * l..(fo + 1) * l];
        db[fo] += g.iter().copied().sum::<T>();
        for c in 0..cin {
            let src = &inp[c * l..(c + 1) * l];
            for kk in 0..k {
                let idx = (fo * cin + c) * k + kk;
                let o = kk as isize - pad;
                let (lo, hi) = offset_range(o, l);
                let mut acc = T::zero();
                for t in lo..hi {
                    acc += g[t] * src[(t as isize + o) as usize];
                }
                dw[idx] += acc;
                if let Some(d) = dinp.as_deref_mut() {
                    let wv = w[idx];
                    let drow = &mut d[c * l..(c + 1) * l];
                    for t in lo..hi {
                        drow[(t as isize + o) as usize] += wv * g[t];
                    }
                }
            }
        }
    }
}

struct BlockCache<T> {
    input: Vec<T>,
    z1: Vec<T>,
    a1: Vec<T>,
    pre: Vec<T>,
}

struct Forward<T> {
    blocks: Vec<BlockCache<T>>,
    pooled: Vec<T>,
    probs: Vec<T>,
}

fn forward<T: Scalar>(arch: &Architecture, p: &[T], x: &[T], keep: bool) -> Forward<T> {
    let (f, k, l) = (arch.filters, arch.kernel, arch.length);
    let mut cur = x.to_vec();
    let mut caches = Vec::with_capacity(if keep { arch.blocks.len() } else { 0 });
    for b in &arch.blocks {
        let mut z1 = vec![T::zero(); f * l];
        conv_forward(&cur, b.cin, l, &p[b.w1..], &p[b.b1..], f, k, &mut z1);
        let a1: Vec<T> = z1.iter().map(|v| v.max(T::zero())).collect();
        let mut pre = vec![T::zero(); f * l];
        conv_forward(&a1, f, l, &p[b.w2..], &p[b.b2..], f, k, &mut pre);
        match b.proj {
            Some(o) => {
                for fo in 0..f {
                    for c in 0..b.cin {
                        let pw = p[o + fo * b.cin + c];
                        for t in 0..l {
                            pre[fo * l + t] += pw * cur[c * l + t];
                        }
                    }
                }
            }
            None => {
                for (d, s) in pre.iter_mut().zip(&cur) {
                    *d += *s;
                }
            }
        }
        let out: Vec<T> = pre.iter().map(|v| v.max(T::zero())).collect();
        if keep {
            caches.push(BlockCache { input: cur, z1, a1, pre });
        }
        cur = out;
    }
    let inv_l = T::one() / T::of_usize(l);
    let pooled: Vec<T> = (0..f).map(|fo| cur[fo * l..(fo + 1) * l].iter().copied().sum::<T>() * inv_l).collect();
    let logits: Vec<T> = (0..arch.n_classes)
        .map(|j| {
            let w = &p[arch.head_w + j * f..arch.head_w + (j + 1) * f];
            p[arch.head_b + j] + w.iter().zip(&pooled).map(|(a, b)| *a * *b).sum::<T>()
        })
        .collect();
    let probs = softmax(ArrayView1::from(&logits[..])).to_vec();
    Forward {
        blocks: caches,
        pooled,
        probs,
    }
}

/// Cross-entropy of one sample; its gradient is accumulated into `grad`.
fn backward<T: Scalar>(arch: &Architecture, p: &[T], x: &[T], y: usize, grad: &mut [T]) -> T {
    let (f, k, l) = (arch.filters, arch.kernel, arch.length);
    let fw = forward(arch, p, x, true);
    let loss = -fw.probs[y].max(T::min_positive_value()).ln();
    let mut dlogit = fw.probs.clone();
    dlogit[y] -= T::one();
    let mut dpooled = vec![T::zero(); f];
    for j in 0..arch.n_classes {
        grad[arch.head_b + j] += dlogit[j];
        for fo in 0..f {
            grad[arch.head_w + j * f + fo] += dlogit[j] * fw.pooled[fo];
            dpooled[fo] += p[arch.head_w + j * f + fo] * dlogit[j];
        }
    }
    let inv_l = T::one() / T::of_usize(l);
    let mut dout: Vec<T> = (0..f * l).map(|i| dpooled[i / l] * inv_l).collect();
    for (b, c) in arch.blocks.iter().zip(&fw.blocks).rev() {
        let dpre: Vec<T> = dout
            .iter()
            .zip(&c.pre)
            .map(|(d, z)| if *z > T::zero() { *d } else { T::zero() })
            .collect();
        let mut da1 = vec![T::zero(); f * l];
        let mut db2 = vec![T::zero(); f];
        let dw2 = &mut grad[b.w2..b.w2 + f * f * k];
        conv_backward(&c.a1, f, l, &p[b.w2..], f, k, &dpre, dw2, &mut db2, Some(&mut da1));
        for (g, d) in grad[b.b2..b.b2 + f].iter_mut().zip(&db2) {
            *g += *d;
        }
        let dz1: Vec<T> = da1
            .iter()
            .zip(&c.z1)
            .map(|(d, z)| if *z > T::zero() { *d } else { T::zero() })
            .collect();
        let mut dx = vec![T::zero(); b.cin * l];
        let mut dw1 = vec![T::zero(); f * b.cin * k];
        let mut db1 = vec![T::zero(); f];
        conv_backward(&c.input, b.cin, l, &p[b.w1..], f, k, &dz1, &mut dw1, &mut db1, Some(&mut dx));
        for (g, d) in grad[b.w1..b.w1 + dw1.len()].iter_mut().zip(&dw1) {
            *g += *d;
        }
        for (g, d) in grad[b.b1..b.b1 + f].iter_mut().zip(&db1) {
            *g += *d;
        }
        match b.proj {
            Some(o) => {
                for fo in 0..f {
                    for ci in 0..b.cin {
                        let mut acc = T::zero();
                        let pw = p[o + fo * b.cin + ci];
                        for t in 0..l {
                            acc += dpre[fo * l + t] * c.input[ci * l + t];
                            dx[ci * l + t] += pw * dpre[fo * l + t];
                        }
                        grad[o + fo * b.cin + ci] += acc;
                    }
                }
            }
            None => {
                for (d, s) in dx.iter_mut().zip(&dpre) {
                    *d += *s;
                }
            }
        }
        dout = dx;
    }
    loss
}

/// Mean cross-entropy over `x` (n × channels × length, already
/// standardized) and its gradient with respect to `params`.
pub fn loss_and_grad<T: Scalar>(arch: &Architecture, params: &[T], x: ArrayView3<'_, T>, y: &[usize]) -> (T, Vec<T>) {
    let mut grad = vec![T::zero(); arch.n_params];
    let mut loss = T::zero();
    for (i, sample) in x.outer_iter().enumerate() {
        let flat: Vec<T> = sample.iter().copied().collect();
        loss += backward(arch, params, &flat, y[i], &mut grad);
    }
    let n = T::of_usize(x.shape()[0].max(1));
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResNet1dModel<T> {
    pub arch: Architecture,
    pub params: Vec<T>,
    pub channel_mean: Vec<T>,
    pub channel_std: Vec<T>,
    pub hyper: ResNetHyper,
    /// Mean training loss after each epoch.
    pub loss_history: Vec<f64>,
}

impl<T: Scalar> ResNet1dModel<T> {
    /// Per-channel z-score with the stored training statistics. `x` is one
    /// window flattened channel-major.
    pub fn standardize(&self, x: &[T]) -> Vec<T> {
        let l = self.arch.length;
        x.iter()
            .enumerate()
            .map(|(i, v)| (*v - self.channel_mean[i / l]) / self.channel_std[i / l])
            .collect()
    }

    pub fn probabilities_standardized(&self, z: &[T]) -> Vec<T> {
        assert_eq!(z.len(), self.arch.input_len(), "window shape does not match the network");
        forward(&self.arch, &self.params, z, false).probs
    }

    pub fn probabilities(&self, x: &[T]) -> Vec<T> {
        self.probabilities_standardized(&self.standardize(x))
    }

    /// Checked prediction over an `n × channels × length` batch.
    pub fn predict_windows(&self, x: ArrayView3<'_, T>) -> Result<Vec<usize>> {
        check_shape(&self.arch, x)?;
        Ok(x.outer_iter()
            .map(|w| {
                let flat: Vec<T> = w.iter().copied().collect();
                argmax(&self.probabilities(&flat))
            })
            .collect())
    }
}

impl<T: Scalar> Classifier<T> for ResNet1dModel<T> {
    fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    /// `x` is a channel-major flattened window; panics on a length mismatch.
    fn predict_one(&self, x: ArrayView1<'_, T>) -> usize {
        let flat: Vec<T> = x.iter().copied().collect();
        argmax(&self.probabilities(&flat))
    }
}

fn check_shape<T>(arch: &Architecture, x: ArrayView3<'_, T>) -> Result<()> {
    let s = x.shape();
    if s[1] != arch.channels || s[2] != arch.length {
        return Err(Error::argument(format!(
            "window shape {}×{} does not match network input {}×{}",
            s[1], s[2], arch.channels, arch.length
        )));
    }
    Ok(())
}

fn channel_stats<T: Scalar>(x: ArrayView3<'_, T>) -> (Vec<T>, Vec<T>) {
    let c = x.shape()[1];
    let mut mean = Vec::with_capacity(c);
    let mut std = Vec::with_capacity(c);
    for ch in 0..c {
        let v = x.index_axis(ndarray::Axis(1), ch);
        let n = T::of_usize(v.len().max(1));
        let m = v.iter().copied().sum::<T>() / n;
        let var = v.iter().map(|a| (*a - m) * (*a - m)).sum::<T>() / n;
        let s = var.sqrt();
        mean.push(m);
        std.push(if s > T::epsilon() { s } else { T::one() });
    }
    (mean, std)
}

/// Mini-batch SGD with momentum on `x` (n × channels × length).
pub fn fit_resnet1d<T: Scalar>(x: ArrayView3<'_, T>, y: &[usize], hyper: &ResNetHyper) -> Result<ResNet1dModel<T>> {
    let s = x.shape();
    let n_classes = class_count(y, s[0])?;
    if s[1] == 0 || s[2] == 0 {
        return Err(Error::argument("windows must have at least one channel and one sample"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument("windows contain non-finite values"));
    }
    if hyper.batch_size == 0 || hyper.learning_rate <= 0.0 || !(0.0..1.0).contains(&hyper.momentum) {
        return Err(Error::argument("batch size, learning rate or momentum out of range"));
    }
    let arch = Architecture::new(s[1], s[2], hyper.n_blocks, hyper.filters, hyper.kernel, n_classes)?;
    let (channel_mean, channel_std) = channel_stats(x);
    let mut model = ResNet1dModel {
        params: arch.init(hyper.seed),
        arch,
        channel_mean,
        channel_std,
        hyper: *hyper,
        loss_history: Vec::with_capacity(hyper.epochs),
    };
    let inputs: Vec<Vec<T>> = x
        .outer_iter()
        .map(|w| model.standardize(&w.iter().copied().collect::<Vec<T>>()))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(hyper.threads.max(1))
        .build()
        .map_err(|e| Error::Fit(format!("thread pool: {e}")))?;
    let lr = T::lit(hyper.learning_rate);
    let mu = T::lit(hyper.momentum);
    let mut velocity = vec![T::zero(); model.arch.n_params];
    let mut order: Vec<usize> = (0..s[0]).collect();
    for epoch in 0..hyper.epochs {
        let mut rng = rng::stream(hyper.seed, 1 + epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            let (arch, params) = (&model.arch, &model.params);
            let per_sample = |&i: &usize| {
                let mut g = vec![T::zero(); arch.n_params];
                let l = backward(arch, params, &inputs[i], y[i], &mut g);
                (l, g)
            };
            let results: Vec<(T, Vec<T>)> = if hyper.threads > 1 {
                pool.install(|| batch.par_iter().map(per_sample).collect())
            } else {
                batch.iter().map(per_sample).collect()
            };
            let inv = T::one() / T::of_usize(batch.len());
            let mut grad = vec![T::zero(); model.arch.n_params];
            for (l, g) in &results {
                epoch_loss += l.as_f64();
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += *b;
                }
            }
            for ((p, v), g) in model.params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = mu * *v - lr * *g * inv;
                *p += *v;
            }
        }
        model.loss_history.push(epoch_loss / s[0] as f64);
    }
    if model.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Fit("network training diverged".into()));
    }
    Ok(model)
}
