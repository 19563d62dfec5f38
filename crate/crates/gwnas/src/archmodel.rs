//! The (k, c) architecture family and its expansion into a concrete layer
//! topology.
//!
//! Every candidate network is a stack of four cell types: a pre-processing
//! cell (a fixed affine rescale), a base cell (one 3x3 convolution with `k`
//! kernels), `c` building cells (max-pool, 3x3 convolution, batch norm,
//! ReLU), and a classifier cell (global average pooling, a dense layer with
//! one neuron per class, softmax). Convolutions are stride-1 with "same"
//! zero padding, so only pooling changes the spatial size.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ArchError {
    #[error("k must be at least 1")]
    ZeroKernels,
    #[error("input shape dimensions must all be at least 1")]
    EmptyShape,
    #[error("num_classes must be at least 1")]
    ZeroClasses,
    #[error("c = {c} exceeds the pooling limit {max} for this input shape")]
    PoolingLimit { c: u32, max: u32 },
}

/// A point in the search plane: `k` kernels in the base cell, `c` building
/// cells stacked on top of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Architecture {
    pub k: u32,
    pub c: u32,
}

impl Architecture {
    pub fn new(k: u32, c: u32) -> Result<Self, ArchError> {
        if k == 0 {
            return Err(ArchError::ZeroKernels);
        }
        Ok(Architecture { k, c })
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.k, self.c)
    }
}

/// Input tensor shape, height x width x channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl InputShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self, ArchError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(ArchError::EmptyShape);
        }
        Ok(InputShape {
            height,
            width,
            channels,
        })
    }

    pub fn elements(&self) -> usize {
        self.height * self.width * self.channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Rescale,
    Conv3x3,
    MaxPool2x2,
    BatchNorm,
    Relu,
    GlobalAvgPool,
    Dense,
    Softmax,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Rescale => "rescale",
            LayerKind::Conv3x3 => "conv3x3",
            LayerKind::MaxPool2x2 => "maxpool2x2",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Relu => "relu",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::Dense => "dense",
            LayerKind::Softmax => "softmax",
        }
    }
}

/// One layer of an expanded topology. Shapes chain: the output shape of
/// layer i is the input shape of layer i + 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl LayerSpec {
    pub fn input_elements(&self) -> usize {
        self.in_height * self.in_width * self.in_channels
    }

    pub fn output_elements(&self) -> usize {
        self.out_height * self.out_width * self.out_channels
    }

    /// Deployed parameter count: convolution and dense weights plus biases.
    /// Batch norm folds into the preceding convolution at deployment time,
    /// so it reports zero here.
    pub fn deploy_params(&self) -> usize {
        match self.kind {
            LayerKind::Conv3x3 => 9 * self.in_channels * self.out_channels + self.out_channels,
            LayerKind::Dense => self.in_channels * self.out_channels + self.out_channels,
            _ => 0,
        }
    }

    /// Parameters the trainer must keep per layer: conv/dense weights and
    /// biases, plus four per-channel values for batch norm (scale, shift,
    /// running mean, running variance).
    pub fn train_params(&self) -> usize {
        match self.kind {
            LayerKind::BatchNorm => 4 * self.out_channels,
            _ => self.deploy_params(),
        }
    }
}

/// An expanded architecture: an ordered layer list ending in a classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

impl Topology {
    pub fn input_shape(&self) -> InputShape {
        let first = &self.layers[0];
        InputShape {
            height: first.in_height,
            width: first.in_width,
            channels: first.in_channels,
        }
    }

    pub fn deploy_param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::deploy_params).sum()
    }

    pub fn train_param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::train_params).sum()
    }

    /// Sum of per-layer output elements for a single sample; the unit the
    /// training-memory estimate is built on.
    pub fn activation_elements(&self) -> usize {
        self.layers.iter().map(LayerSpec::output_elements).sum()
    }

    /// One text record per layer, used by the CLI topology export.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "topology layers={} num_classes={}\n",
            self.layers.len(),
            self.num_classes
        ));
        for layer in &self.layers {
            out.push_str(&format!(
                "{:<16} in={}x{}x{} out={}x{}x{}\n",
                layer.kind.name(),
                layer.in_height,
                layer.in_width,
                layer.in_channels,
                layer.out_height,
                layer.out_width,
                layer.out_channels,
            ));
        }
        out
    }
}

/// Kernel counts n_0 .. n_c for the convolutions of an architecture.
///
/// n_0 = k, and each building cell grows the count by a geometrically
/// shrinking increment: n_i = n_{i-1} + floor(2^(1-i) * n_{i-1}). The
/// increment is floored, so counts stay integral and eventually saturate.
pub fn kernel_counts(k: u32, c: u32) -> Result<Vec<usize>, ArchError> {
    if k == 0 {
        return Err(ArchError::ZeroKernels);
    }
    let mut counts = Vec::with_capacity(c as usize + 1);
    let mut n = k as usize;
    counts.push(n);
    for i in 1..=c {
        // 2^(1-i) * n == n >> (i-1) for i >= 1; shifts past the word size
        // mean the increment is long since zero.
        let shift = i - 1;
        let increment = if shift >= usize::BITS { 0 } else { n >> shift };
        n += increment;
        counts.push(n);
    }
    Ok(counts)
}

/// Largest number of building cells the input resolution admits: each cell
/// halves the spatial size (floor), and the feature map must stay at least
/// 1x1.
pub fn max_cells(shape: InputShape) -> u32 {
    let mut m = shape.height.min(shape.width);
    let mut c = 0;
    while m >= 2 {
        m /= 2;
        c += 1;
    }
    c
}

/// Expands a search-plane point into the concrete layer topology.
pub fn expand(
    arch: Architecture,
    shape: InputShape,
    num_classes: usize,
) -> Result<Topology, ArchError> {
    if num_classes == 0 {
        return Err(ArchError::ZeroClasses);
    }
    let limit = max_cells(shape);
    if arch.c > limit {
        return Err(ArchError::PoolingLimit {
            c: arch.c,
            max: limit,
        });
    }
    let counts = kernel_counts(arch.k, arch.c)?;

    let mut layers = Vec::with_capacity(4 * arch.c as usize + 5);
    let (mut h, mut w) = (shape.height, shape.width);
    let mut ch = shape.channels;

    let mut push = |kind, in_ch, out_ch, in_h, in_w, out_h, out_w| {
        layers.push(LayerSpec {
            kind,
            in_channels: in_ch,
            out_channels: out_ch,
            in_height: in_h,
            in_width: in_w,
            out_height: out_h,
            out_width: out_w,
        });
    };

    push(LayerKind::Rescale, ch, ch, h, w, h, w);
    push(LayerKind::Conv3x3, ch, counts[0], h, w, h, w);
    ch = counts[0];

    for i in 1..=arch.c as usize {
        let (ph, pw) = (h / 2, w / 2);
        push(LayerKind::MaxPool2x2, ch, ch, h, w, ph, pw);
        (h, w) = (ph, pw);
        push(LayerKind::Conv3x3, ch, counts[i], h, w, h, w);
        ch = counts[i];
        push(LayerKind::BatchNorm, ch, ch, h, w, h, w);
        push(LayerKind::Relu, ch, ch, h, w, h, w);
    }

    push(LayerKind::GlobalAvgPool, ch, ch, h, w, 1, 1);
    push(LayerKind::Dense, ch, num_classes, 1, 1, 1, 1);
    push(LayerKind::Softmax, num_classes, num_classes, 1, 1, 1, 1);

    Ok(Topology {
        layers,
        num_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(h: usize, w: usize, c: usize) -> InputShape {
        InputShape::new(h, w, c).unwrap()
    }

    fn arch(k: u32, c: u32) -> Architecture {
        Architecture::new(k, c).unwrap()
    }

    #[test]
    fn kernel_counts_grow_by_floored_increments() {
        assert_eq!(kernel_counts(8, 3).unwrap(), vec![8, 16, 24, 30]);
        assert_eq!(kernel_counts(1, 0).unwrap(), vec![1]);
        assert_eq!(kernel_counts(5, 5).unwrap(), vec![5, 10, 15, 18, 20, 21]);
        assert_eq!(kernel_counts(3, 4).unwrap(), vec![3, 6, 9, 11, 12]);
    }

    #[test]
    fn kernel_counts_reject_zero_k() {
        assert_eq!(kernel_counts(0, 3), Err(ArchError::ZeroKernels));
    }

    #[test]
    fn kernel_counts_non_decreasing_and_correct_length() {
        for k in 1..=40u32 {
            for c in 0..=12u32 {
                let counts = kernel_counts(k, c).unwrap();
                assert_eq!(counts.len(), c as usize + 1);
                for pair in counts.windows(2) {
                    assert!(pair[1] >= pair[0]);
                }
            }
        }
    }

    #[test]
    fn kernel_counts_saturate() {
        // Once the floored increment hits zero it stays zero; very deep
        // stacks must neither grow further nor overflow the shift.
        let counts = kernel_counts(7, 200).unwrap();
        let tail = counts[counts.len() - 1];
        assert_eq!(counts[100], tail);
        assert!(tail < 7 * 8); // bounded by k * prod(1 + 2^(1-i)) < k * e^2
    }

    #[test]
    fn max_cells_examples() {
        assert_eq!(max_cells(shape(50, 50, 3)), 5);
        assert_eq!(max_cells(shape(1, 1, 1)), 0);
        assert_eq!(max_cells(shape(32, 32, 3)), 5);
        assert_eq!(max_cells(shape(16, 16, 1)), 4);
        // Rectangular inputs pool down to the smaller side.
        assert_eq!(max_cells(shape(64, 2, 1)), 1);
    }

    #[test]
    fn expand_minimal_architecture() {
        let topo = expand(arch(1, 0), shape(8, 8, 1), 2).unwrap();
        let kinds: Vec<LayerKind> = topo.layers.iter().map(|l| l.kind).collect();
        assert_eq!(
            kinds,
            vec![
                LayerKind::Rescale,
                LayerKind::Conv3x3,
                LayerKind::GlobalAvgPool,
                LayerKind::Dense,
                LayerKind::Softmax,
            ]
        );
        assert_eq!(topo.layers[1].out_channels, 1);
        assert_eq!(topo.layers[3].out_channels, 2);
    }

    #[test]
    fn expand_traces_the_shape_chain() {
        let topo = expand(arch(3, 4), shape(50, 50, 3), 2).unwrap();
        // Rescale + base conv + 4 * (pool, conv, bn, relu) + gap + dense + softmax.
        assert_eq!(topo.layers.len(), 21);
        let conv_channels: Vec<usize> = topo
            .layers
            .iter()
            .filter(|l| l.kind == LayerKind::Conv3x3)
            .map(|l| l.out_channels)
            .collect();
        assert_eq!(conv_channels, vec![3, 6, 9, 11, 12]);
        // 50 -> 25 -> 12 -> 6 -> 3 before global average pooling.
        let gap = topo
            .layers
            .iter()
            .find(|l| l.kind == LayerKind::GlobalAvgPool)
            .unwrap();
        assert_eq!((gap.in_height, gap.in_width), (3, 3));
        // Every layer's input shape equals its predecessor's output shape.
        for pair in topo.layers.windows(2) {
            assert_eq!(pair[0].out_height, pair[1].in_height);
            assert_eq!(pair[0].out_width, pair[1].in_width);
            assert_eq!(pair[0].out_channels, pair[1].in_channels);
        }
    }

    #[test]
    fn expand_dense_parameters() {
        let topo = expand(arch(8, 3), shape(50, 50, 3), 2).unwrap();
        let conv_channels: Vec<usize> = topo
            .layers
            .iter()
            .filter(|l| l.kind == LayerKind::Conv3x3)
            .map(|l| l.out_channels)
            .collect();
        assert_eq!(conv_channels, vec![8, 16, 24, 30]);
        let dense = topo
            .layers
            .iter()
            .find(|l| l.kind == LayerKind::Dense)
            .unwrap();
        assert_eq!(dense.deploy_params(), 30 * 2 + 2);
    }

    #[test]
    fn expand_rejects_excess_cells() {
        let err = expand(arch(3, 6), shape(50, 50, 3), 2).unwrap_err();
        assert_eq!(err, ArchError::PoolingLimit { c: 6, max: 5 });
    }

    #[test]
    fn expand_never_reaches_zero_spatial_size() {
        for k in [1u32, 4, 9] {
            for (h, w) in [(50, 50), (32, 32), (17, 9), (2, 2)] {
                let s = shape(h, w, 3);
                for c in 0..=max_cells(s) {
                    let topo = expand(arch(k, c), s, 2).unwrap();
                    for layer in &topo.layers {
                        assert!(layer.out_height >= 1 && layer.out_width >= 1);
                    }
                }
            }
        }
    }

    #[test]
    fn parameter_count_is_strictly_monotone() {
        let s = shape(50, 50, 3);
        for c in 0..=3u32 {
            for k in 1..=12u32 {
                let lo = expand(arch(k, c), s, 2).unwrap().deploy_param_count();
                let hi = expand(arch(k + 1, c), s, 2).unwrap().deploy_param_count();
                assert!(hi > lo, "params must grow with k at c={c}");
            }
        }
        for k in 1..=12u32 {
            for c in 0..=4u32 {
                let lo = expand(arch(k, c), s, 2).unwrap().deploy_param_count();
                let hi = expand(arch(k, c + 1), s, 2).unwrap().deploy_param_count();
                assert!(hi > lo, "params must grow with c at k={k}");
            }
        }
    }

    #[test]
    fn topology_text_lists_every_layer() {
        let topo = expand(arch(2, 1), shape(8, 8, 1), 2).unwrap();
        let text = topo.to_text();
        assert!(text.starts_with("topology layers=9 num_classes=2\n"));
        assert_eq!(text.lines().count(), 10);
        assert!(text.contains("maxpool2x2"));
        assert!(text.contains("in=8x8x1"));
    }
}
