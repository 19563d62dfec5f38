//! Analytical resource estimators for a candidate architecture.
//!
//! Deployment cost is modeled the way MCU toolchains see it: 8-bit weights
//! with batch norm folded into the preceding convolution (flash), peak
//! pairwise activation residency at one byte per element (RAM), and
//! multiply-accumulate instructions per inference (MAC). Training cost on
//! the gateway is modeled in fp32: weights, gradients and two optimizer
//! moments per parameter, plus forward and backward activations per batch
//! element. All estimators are pure functions of the expanded topology.

use serde::{Deserialize, Serialize};

use crate::archmodel::{expand, ArchError, Architecture, InputShape, LayerKind, Topology};

/// Calibration constants for runtime arena and model metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadConfig {
    /// Inference-time working memory that exists regardless of the model.
    pub ram_overhead_bytes: u64,
    /// Model container metadata on top of the raw weights.
    pub flash_overhead_bytes: u64,
    /// Bytes per stored weight (1 = int8 post-training quantization).
    pub weight_bytes: u64,
    /// Bytes per stored bias.
    pub bias_bytes: u64,
}

impl Default for OverheadConfig {
    fn default() -> Self {
        OverheadConfig {
            ram_overhead_bytes: 4096,
            flash_overhead_bytes: 8192,
            weight_bytes: 1,
            bias_bytes: 1,
        }
    }
}

impl OverheadConfig {
    pub fn zero() -> Self {
        OverheadConfig {
            ram_overhead_bytes: 0,
            flash_overhead_bytes: 0,
            weight_bytes: 1,
            bias_bytes: 1,
        }
    }
}

/// Resource estimates for one architecture on the deployment target and the
/// training gateway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceProfile {
    /// Peak inference activation memory, bytes.
    pub ram_bytes: u64,
    /// int8 model image size, bytes.
    pub flash_bytes: u64,
    /// Multiply-accumulate instructions per inference.
    pub macs: u64,
    /// Peak training working set on the gateway, bytes.
    pub train_mem_bytes: u64,
}

/// Multiply-accumulate instructions for one inference: convolutions
/// contribute out_h * out_w * 9 * in_ch * out_ch, the dense layer in * out;
/// pooling, batch norm, ReLU and rescaling contribute none.
pub fn estimate_macs(topology: &Topology) -> u64 {
    topology
        .layers
        .iter()
        .map(|l| match l.kind {
            LayerKind::Conv3x3 => {
                (l.out_height * l.out_width * 9 * l.in_channels * l.out_channels) as u64
            }
            LayerKind::Dense => (l.in_channels * l.out_channels) as u64,
            _ => 0,
        })
        .sum()
}

/// Flash image size: quantized weights and biases plus container metadata.
/// Batch norm is folded into the preceding convolution and costs nothing.
pub fn estimate_flash(topology: &Topology, cfg: &OverheadConfig) -> u64 {
    let mut weights = 0u64;
    let mut biases = 0u64;
    for l in &topology.layers {
        match l.kind {
            LayerKind::Conv3x3 => {
                weights += (9 * l.in_channels * l.out_channels) as u64;
                biases += l.out_channels as u64;
            }
            LayerKind::Dense => {
                weights += (l.in_channels * l.out_channels) as u64;
                biases += l.out_channels as u64;
            }
            _ => {}
        }
    }
    weights * cfg.weight_bytes + biases * cfg.bias_bytes + cfg.flash_overhead_bytes
}

/// Peak inference RAM: the largest (input + output) activation residency of
/// any single layer at one byte per element, plus the runtime arena.
pub fn estimate_ram(topology: &Topology, cfg: &OverheadConfig) -> u64 {
    let peak = topology
        .layers
        .iter()
        .map(|l| (l.input_elements() + l.output_elements()) as u64)
        .max()
        .unwrap_or(0);
    peak + cfg.ram_overhead_bytes
}

/// Peak gateway training memory: fp32 weights, gradients and two Adam
/// moments (16 bytes per parameter, with batch norm counting four values
/// per channel), plus fp32 forward and backward activations (8 bytes per
/// activation element per batch sample).
pub fn estimate_train_mem(topology: &Topology, batch_size: usize) -> u64 {
    let params = topology.train_param_count() as u64;
    let activations = topology.activation_elements() as u64;
    16 * params + 8 * batch_size as u64 * activations
}

/// Bundles the four estimators on the expanded topology.
pub fn profile(
    arch: Architecture,
    shape: InputShape,
    num_classes: usize,
    batch_size: usize,
    cfg: &OverheadConfig,
) -> Result<ResourceProfile, ArchError> {
    let topology = expand(arch, shape, num_classes)?;
    Ok(ResourceProfile {
        ram_bytes: estimate_ram(&topology, cfg),
        flash_bytes: estimate_flash(&topology, cfg),
        macs: estimate_macs(&topology),
        train_mem_bytes: estimate_train_mem(&topology, batch_size),
    })
}
