//! Forward and backward passes for the fixed layer set.
//!
//! Convolutions are 3x3, stride 1, zero "same" padding. Pooling is 2x2
//! stride 2 with floor semantics on odd sizes. Batch norm normalizes per
//! channel over batch and space with epsilon 1e-3 and momentum 0.99 on the
//! running statistics. All reductions run in a fixed order (accumulating in
//! f64 where it matters) so results are bit-reproducible.

use crate::archmodel::LayerKind;

use super::network::{LayerParams, Network};
use super::tensor::Tensor4;
use super::EngineError;

pub const BN_EPSILON: f32 = 1e-3;
pub const BN_MOMENTUM: f32 = 0.99;

/// Per-layer state captured by a training-mode forward pass, enough to run
/// backward.
#[derive(Debug)]
pub struct ForwardPass {
    /// Output of each layer, aligned with `topology.layers`.
    pub activations: Vec<Tensor4>,
    /// For each max-pool layer: flat input index of the chosen maximum per
    /// output element.
    pool_argmax: Vec<Option<Vec<u32>>>,
    /// For each batch-norm layer: normalized activations and per-channel
    /// 1/std of the batch statistics.
    bn_xhat: Vec<Option<Vec<f32>>>,
    bn_inv_std: Vec<Option<Vec<f32>>>,
}

impl ForwardPass {
    /// Class probabilities (the softmax output).
    pub fn probabilities(&self) -> &Tensor4 {
        self.activations.last().expect("topology is never empty")
    }
}

fn rescale_forward(x: &Tensor4, min: f32, max: f32) -> Tensor4 {
    let range = max - min;
    let scale = if range > 0.0 { 1.0 / range } else { 0.0 };
    let mut out = x.clone();
    for v in &mut out.data {
        *v = (*v - min) * scale;
    }
    out
}

fn conv3x3_forward(x: &Tensor4, w: &[f32], bias: &[f32], out_ch: usize) -> Tensor4 {
    let (bsz, h, width, in_ch) = (x.batch, x.height, x.width, x.channels);
    let mut out = Tensor4::zeros(bsz, h, width, out_ch);
    for b in 0..bsz {
        for y in 0..h {
            for xx in 0..width {
                let out_base = out.index(b, y, xx, 0);
                let acc = &mut out.data[out_base..out_base + out_ch];
                acc.copy_from_slice(bias);
                for ky in 0..3usize {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..3usize {
                        let ix = xx as isize + kx as isize - 1;
                        if ix < 0 || ix >= width as isize {
                            continue;
                        }
                        let in_base = x.index(b, iy as usize, ix as usize, 0);
                        let tap = (ky * 3 + kx) * in_ch;
                        for ci in 0..in_ch {
                            let xv = x.data[in_base + ci];
                            if xv == 0.0 {
                                continue;
                            }
                            let wrow = &w[(tap + ci) * out_ch..(tap + ci + 1) * out_ch];
                            for (a, &wv) in acc.iter_mut().zip(wrow.iter()) {
                                *a += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

struct ConvGrads {
    dw: Vec<f32>,
    db: Vec<f32>,
    dx: Option<Tensor4>,
}

fn conv3x3_backward(x: &Tensor4, w: &[f32], dy: &Tensor4, need_dx: bool) -> ConvGrads {
    let (bsz, h, width, in_ch) = (x.batch, x.height, x.width, x.channels);
    let out_ch = dy.channels;
    let mut dw = vec![0f32; 9 * in_ch * out_ch];
    let mut db = vec![0f32; out_ch];
    let mut dx = if need_dx {
        Some(Tensor4::zeros(bsz, h, width, in_ch))
    } else {
        None
    };
    for b in 0..bsz {
        for y in 0..h {
            for xx in 0..width {
                let dy_base = dy.index(b, y, xx, 0);
                let g = &dy.data[dy_base..dy_base + out_ch];
                for (co, &gv) in g.iter().enumerate() {
                    db[co] += gv;
                }
                for ky in 0..3usize {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..3usize {
                        let ix = xx as isize + kx as isize - 1;
                        if ix < 0 || ix >= width as isize {
                            continue;
                        }
                        let in_base = x.index(b, iy as usize, ix as usize, 0);
                        let tap = (ky * 3 + kx) * in_ch;
                        for ci in 0..in_ch {
                            let xv = x.data[in_base + ci];
                            let wrow = &w[(tap + ci) * out_ch..(tap + ci + 1) * out_ch];
                            let dwrow = &mut dw[(tap + ci) * out_ch..(tap + ci + 1) * out_ch];
                            let mut dxv = 0f32;
                            for co in 0..out_ch {
                                let gv = g[co];
                                dwrow[co] += xv * gv;
                                dxv += wrow[co] * gv;
                            }
                            if let Some(dx) = dx.as_mut() {
                                dx.data[in_base + ci] += dxv;
                            }
                        }
                    }
                }
            }
        }
    }
    ConvGrads { dw, db, dx }
}

fn maxpool_forward(x: &Tensor4) -> (Tensor4, Vec<u32>) {
    let (bsz, h, width, ch) = (x.batch, x.height, x.width, x.channels);
    let (oh, ow) = (h / 2, width / 2);
    let mut out = Tensor4::zeros(bsz, oh, ow, ch);
    let mut argmax = vec![0u32; out.data.len()];
    for b in 0..bsz {
        for y in 0..oh {
            for xx in 0..ow {
                for c in 0..ch {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for wy in 0..2 {
                        for wx in 0..2 {
                            let idx = x.index(b, 2 * y + wy, 2 * xx + wx, c);
                            let v = x.data[idx];
                            // Ties keep the first window element scanned.
                            if v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    let o = out.index(b, y, xx, c);
                    out.data[o] = best;
                    argmax[o] = best_idx as u32;
                }
            }
        }
    }
    (out, argmax)
}

fn maxpool_backward(x: &Tensor4, argmax: &[u32], dy: &Tensor4) -> Tensor4 {
    let mut dx = Tensor4::zeros(x.batch, x.height, x.width, x.channels);
    for (o, &src) in argmax.iter().enumerate() {
        dx.data[src as usize] += dy.data[o];
    }
    dx
}

struct BnForward {
    out: Tensor4,
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
    batch_mean: Vec<f32>,
    batch_var: Vec<f32>,
}

/// Training-mode batch norm: normalize with batch statistics. The caller
/// folds the returned batch statistics into the running ones.
fn batchnorm_forward_train(x: &Tensor4, gamma: &[f32], beta: &[f32]) -> BnForward {
    let ch = x.channels;
    let n = (x.batch * x.height * x.width) as f64;
    let mut mean = vec![0f64; ch];
    let mut var = vec![0f64; ch];
    for (i, &v) in x.data.iter().enumerate() {
        mean[i % ch] += v as f64;
    }
    for m in &mut mean {
        *m /= n;
    }
    for (i, &v) in x.data.iter().enumerate() {
        let d = v as f64 - mean[i % ch];
        var[i % ch] += d * d;
    }
    for v in &mut var {
        *v /= n;
    }

    let inv_std: Vec<f32> = var
        .iter()
        .map(|&v| 1.0 / (v as f32 + BN_EPSILON).sqrt())
        .collect();
    let mut xhat = vec![0f32; x.data.len()];
    let mut out = x.clone();
    for (i, &v) in x.data.iter().enumerate() {
        let c = i % ch;
        let h = (v - mean[c] as f32) * inv_std[c];
        xhat[i] = h;
        out.data[i] = gamma[c] * h + beta[c];
    }
    BnForward {
        out,
        xhat,
        inv_std,
        batch_mean: mean.iter().map(|&v| v as f32).collect(),
        batch_var: var.iter().map(|&v| v as f32).collect(),
    }
}

fn batchnorm_forward_eval(
    x: &Tensor4,
    gamma: &[f32],
    beta: &[f32],
    running_mean: &[f32],
    running_var: &[f32],
) -> Tensor4 {
    let ch = x.channels;
    let mut out = x.clone();
    let scale: Vec<f32> = (0..ch)
        .map(|c| gamma[c] / (running_var[c] + BN_EPSILON).sqrt())
        .collect();
    for (i, v) in out.data.iter_mut().enumerate() {
        let c = i % ch;
        *v = (*v - running_mean[c]) * scale[c] + beta[c];
    }
    out
}

struct BnGrads {
    dgamma: Vec<f32>,
    dbeta: Vec<f32>,
    dx: Tensor4,
}

fn batchnorm_backward(dy: &Tensor4, gamma: &[f32], xhat: &[f32], inv_std: &[f32]) -> BnGrads {
    let ch = dy.channels;
    let n = (dy.batch * dy.height * dy.width) as f64;
    let mut dbeta = vec![0f64; ch];
    let mut dgamma = vec![0f64; ch];
    for (i, &g) in dy.data.iter().enumerate() {
        let c = i % ch;
        dbeta[c] += g as f64;
        dgamma[c] += g as f64 * xhat[i] as f64;
    }
    let mut dx = Tensor4::zeros(dy.batch, dy.height, dy.width, ch);
    for (i, &g) in dy.data.iter().enumerate() {
        let c = i % ch;
        let term = g as f64 - dbeta[c] / n - xhat[i] as f64 * dgamma[c] / n;
        dx.data[i] = (gamma[c] as f64 * inv_std[c] as f64 * term) as f32;
    }
    BnGrads {
        dgamma: dgamma.iter().map(|&v| v as f32).collect(),
        dbeta: dbeta.iter().map(|&v| v as f32).collect(),
        dx,
    }
}

fn relu_forward(x: &Tensor4) -> Tensor4 {
    let mut out = x.clone();
    for v in &mut out.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

fn relu_backward(out: &Tensor4, dy: &Tensor4) -> Tensor4 {
    let mut dx = dy.clone();
    for (g, &o) in dx.data.iter_mut().zip(out.data.iter()) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
    dx
}

fn gap_forward(x: &Tensor4) -> Tensor4 {
    let ch = x.channels;
    let area = (x.height * x.width) as f64;
    let mut out = Tensor4::zeros(x.batch, 1, 1, ch);
    for b in 0..x.batch {
        let mut acc = vec![0f64; ch];
        for (i, &v) in x.sample(b).iter().enumerate() {
            acc[i % ch] += v as f64;
        }
        for c in 0..ch {
            out.data[b * ch + c] = (acc[c] / area) as f32;
        }
    }
    out
}

fn gap_backward(x: &Tensor4, dy: &Tensor4) -> Tensor4 {
    let ch = x.channels;
    let inv_area = 1.0 / (x.height * x.width) as f32;
    let mut dx = Tensor4::zeros(x.batch, x.height, x.width, ch);
    for b in 0..x.batch {
        let stride = dx.elements_per_sample();
        for i in 0..stride {
            dx.data[b * stride + i] = dy.data[b * ch + i % ch] * inv_area;
        }
    }
    dx
}

fn dense_forward(x: &Tensor4, w: &[f32], bias: &[f32], out_ch: usize) -> Tensor4 {
    let in_ch = x.channels;
    let mut out = Tensor4::zeros(x.batch, 1, 1, out_ch);
    for b in 0..x.batch {
        let xi = &x.data[b * in_ch..(b + 1) * in_ch];
        let yo = &mut out.data[b * out_ch..(b + 1) * out_ch];
        yo.copy_from_slice(bias);
        for (i, &xv) in xi.iter().enumerate() {
            let wrow = &w[i * out_ch..(i + 1) * out_ch];
            for (y, &wv) in yo.iter_mut().zip(wrow.iter()) {
                *y += xv * wv;
            }
        }
    }
    out
}

struct DenseGrads {
    dw: Vec<f32>,
    db: Vec<f32>,
    dx: Tensor4,
}

fn dense_backward(x: &Tensor4, w: &[f32], dy: &Tensor4) -> DenseGrads {
    let in_ch = x.channels;
    let out_ch = dy.channels;
    let mut dw = vec![0f32; in_ch * out_ch];
    let mut db = vec![0f32; out_ch];
    let mut dx = Tensor4::zeros(x.batch, 1, 1, in_ch);
    for b in 0..x.batch {
        let xi = &x.data[b * in_ch..(b + 1) * in_ch];
        let g = &dy.data[b * out_ch..(b + 1) * out_ch];
        for (o, &gv) in g.iter().enumerate() {
            db[o] += gv;
        }
        for (i, &xv) in xi.iter().enumerate() {
            let wrow = &w[i * out_ch..(i + 1) * out_ch];
            let dwrow = &mut dw[i * out_ch..(i + 1) * out_ch];
            let mut acc = 0f32;
            for (o, &gv) in g.iter().enumerate() {
                dwrow[o] += xv * gv;
                acc += wrow[o] * gv;
            }
            dx.data[b * in_ch + i] = acc;
        }
    }
    DenseGrads { dw, db, dx }
}

fn softmax_forward(x: &Tensor4) -> Tensor4 {
    let ch = x.channels;
    let mut out = x.clone();
    for row in out.data.chunks_exact_mut(ch) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0f64;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v as f64;
        }
        let inv = (1.0 / sum) as f32;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    out
}

/// Training-mode forward pass over the whole topology; batch-norm running
/// statistics are updated in place.
pub fn forward_train(net: &mut Network, batch: &Tensor4) -> Result<ForwardPass, EngineError> {
    let (pass, updates) = forward_inner(net, batch, true)?;
    net.bn_steps += 1;
    // Cumulative average while warming up, 0.99 EMA afterwards; this is the
    // zero-debiased estimator, unbiased even after a handful of steps.
    let new_weight = (1.0 / net.bn_steps as f32).max(1.0 - BN_MOMENTUM);
    for (i, mean, var) in updates {
        if let LayerParams::BatchNorm {
            running_mean,
            running_var,
            ..
        } = &mut net.params[i]
        {
            for c in 0..mean.len() {
                running_mean[c] = (1.0 - new_weight) * running_mean[c] + new_weight * mean[c];
                running_var[c] = (1.0 - new_weight) * running_var[c] + new_weight * var[c];
            }
        }
    }
    Ok(pass)
}

/// Inference-mode forward pass: batch norm uses running statistics; only
/// the class probabilities are returned.
pub fn forward_eval(net: &Network, batch: &Tensor4) -> Result<Tensor4, EngineError> {
    let (pass, _) = forward_inner(net, batch, false)?;
    Ok(pass.activations.into_iter().last().expect("nonempty"))
}

type BnStatUpdates = Vec<(usize, Vec<f32>, Vec<f32>)>;

fn forward_inner(
    net: &Network,
    batch: &Tensor4,
    training: bool,
) -> Result<(ForwardPass, BnStatUpdates), EngineError> {
    let input_shape = net.topology.input_shape();
    if batch.height != input_shape.height
        || batch.width != input_shape.width
        || batch.channels != input_shape.channels
    {
        return Err(EngineError::BatchShapeMismatch);
    }
    let layer_count = net.topology.layers.len();
    let mut pass = ForwardPass {
        activations: Vec::with_capacity(layer_count),
        pool_argmax: vec![None; layer_count],
        bn_xhat: vec![None; layer_count],
        bn_inv_std: vec![None; layer_count],
    };
    let mut bn_updates: BnStatUpdates = Vec::new();
    let mut current = batch;
    let mut owned: Tensor4;

    for (i, layer) in net.topology.layers.iter().enumerate() {
        owned = match (&layer.kind, &net.params[i]) {
            (LayerKind::Rescale, _) => rescale_forward(current, net.rescale_min, net.rescale_max),
            (LayerKind::Conv3x3, LayerParams::Conv { w, b }) => {
                conv3x3_forward(current, w, b, layer.out_channels)
            }
            (LayerKind::MaxPool2x2, _) => {
                let (out, argmax) = maxpool_forward(current);
                pass.pool_argmax[i] = Some(argmax);
                out
            }
            (
                LayerKind::BatchNorm,
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                },
            ) => {
                if training {
                    let bn = batchnorm_forward_train(current, gamma, beta);
                    pass.bn_xhat[i] = Some(bn.xhat);
                    pass.bn_inv_std[i] = Some(bn.inv_std);
                    bn_updates.push((i, bn.batch_mean, bn.batch_var));
                    bn.out
                } else {
                    batchnorm_forward_eval(current, gamma, beta, running_mean, running_var)
                }
            }
            (LayerKind::Relu, _) => relu_forward(current),
            (LayerKind::GlobalAvgPool, _) => gap_forward(current),
            (LayerKind::Dense, LayerParams::Dense { w, b }) => {
                dense_forward(current, w, b, layer.out_channels)
            }
            (LayerKind::Softmax, _) => softmax_forward(current),
            _ => unreachable!("parameters aligned with topology"),
        };
        if !owned.all_finite() {
            return Err(EngineError::NonFinite { layer: i });
        }
        pass.activations.push(owned);
        current = pass.activations.last().expect("just pushed");
    }
    Ok((pass, bn_updates))
}

/// Mean categorical cross-entropy of softmax outputs against integer labels.
pub fn cross_entropy(probs: &Tensor4, labels: &[u32]) -> f64 {
    let ch = probs.channels;
    let mut loss = 0f64;
    for (b, &label) in labels.iter().enumerate() {
        let p = probs.data[b * ch + label as usize].max(1e-12);
        loss -= (p as f64).ln();
    }
    loss / labels.len() as f64
}

/// Backpropagation through the whole topology. Returns per-layer parameter
/// gradients aligned with `net.params`. The loss is categorical
/// cross-entropy over the softmax output, so backward starts from the
/// combined softmax + cross-entropy gradient (probs - onehot) / batch.
pub fn backward(
    net: &Network,
    batch: &Tensor4,
    pass: &ForwardPass,
    labels: &[u32],
) -> Vec<LayerParams> {
    let mut grads = net.zero_grads();
    let layers = &net.topology.layers;
    let probs = pass.probabilities();
    let classes = probs.channels;
    let scale = 1.0 / labels.len() as f32;

    // Gradient w.r.t. the dense layer output (softmax input).
    let mut grad = Tensor4::zeros(probs.batch, 1, 1, classes);
    for (b, &label) in labels.iter().enumerate() {
        for c in 0..classes {
            let y = if c as u32 == label { 1.0 } else { 0.0 };
            grad.data[b * classes + c] = (probs.data[b * classes + c] - y) * scale;
        }
    }

    // Walk backwards, skipping the softmax layer (already folded in).
    for i in (0..layers.len() - 1).rev() {
        let layer = &layers[i];
        let input: &Tensor4 = if i == 0 {
            batch
        } else {
            &pass.activations[i - 1]
        };
        // The gradient w.r.t. the first convolution's input is never used;
        // skipping it saves a full correlation pass.
        let need_dx = i > 1;
        grad = match (&layer.kind, &net.params[i]) {
            (LayerKind::Dense, LayerParams::Dense { w, .. }) => {
                let d = dense_backward(input, w, &grad);
                if let LayerParams::Dense { w: gw, b: gb } = &mut grads[i] {
                    *gw = d.dw;
                    *gb = d.db;
                }
                d.dx
            }
            (LayerKind::GlobalAvgPool, _) => gap_backward(input, &grad),
            (LayerKind::Relu, _) => relu_backward(&pass.activations[i], &grad),
            (LayerKind::BatchNorm, LayerParams::BatchNorm { gamma, .. }) => {
                let d = batchnorm_backward(
                    &grad,
                    gamma,
                    pass.bn_xhat[i].as_ref().expect("train-mode cache"),
                    pass.bn_inv_std[i].as_ref().expect("train-mode cache"),
                );
                if let LayerParams::BatchNorm {
                    gamma: gg,
                    beta: gb,
                    ..
                } = &mut grads[i]
                {
                    *gg = d.dgamma;
                    *gb = d.dbeta;
                }
                d.dx
            }
            (LayerKind::MaxPool2x2, _) => {
                maxpool_backward(input, pass.pool_argmax[i].as_ref().expect("cache"), &grad)
            }
            (LayerKind::Conv3x3, LayerParams::Conv { w, .. }) => {
                let d = conv3x3_backward(input, w, &grad, need_dx);
                if let LayerParams::Conv { w: gw, b: gb } = &mut grads[i] {
                    *gw = d.dw;
                    *gb = d.db;
                }
                match d.dx {
                    Some(dx) => dx,
                    // First conv: nothing upstream needs a gradient.
                    None => break,
                }
            }
            (LayerKind::Rescale, _) => break,
            _ => unreachable!("parameters aligned with topology"),
        };
    }
    grads
}
