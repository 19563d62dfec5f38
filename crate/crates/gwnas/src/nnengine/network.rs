//! Network parameters, initialization, and the flat weight container.

use std::io::Write;
use std::path::Path;

use crate::archmodel::{LayerKind, Topology};
use crate::rng::Rng;

use super::EngineError;

/// Trainable state of one layer. Mirrors `Topology.layers` index-for-index;
/// layers without parameters hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    None,
    /// Weights indexed `[((ky*3 + kx) * in + ci) * out + co]`, biases `[co]`.
    Conv {
        w: Vec<f32>,
        b: Vec<f32>,
    },
    BatchNorm {
        gamma: Vec<f32>,
        beta: Vec<f32>,
        running_mean: Vec<f32>,
        running_var: Vec<f32>,
    },
    /// Weights indexed `[i * out + o]`.
    Dense {
        w: Vec<f32>,
        b: Vec<f32>,
    },
}

/// A concrete model: topology, the pre-processing cell's affine constants,
/// and per-layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub topology: Topology,
    /// Dataset-global value range baked into the rescale layer.
    pub rescale_min: f32,
    pub rescale_max: f32,
    pub params: Vec<LayerParams>,
    /// Training steps seen so far; drives the batch-norm running-statistic
    /// warmup (cumulative average early, 0.99 EMA once warm) so inference
    /// statistics are unbiased even after very short trainings.
    pub bn_steps: u64,
}

impl Network {
    /// Glorot-uniform initialization for conv and dense weights, zero
    /// biases, identity batch norm. Deterministic for a given seed.
    pub fn init(topology: Topology, value_range: (f32, f32), seed: u64) -> Self {
        let mut rng = Rng::new(seed ^ 0x1217_babe);
        let params = topology
            .layers
            .iter()
            .map(|l| match l.kind {
                LayerKind::Conv3x3 => {
                    let fan_in = (9 * l.in_channels) as f32;
                    let fan_out = (9 * l.out_channels) as f32;
                    let limit = (6.0 / (fan_in + fan_out)).sqrt();
                    let w = (0..9 * l.in_channels * l.out_channels)
                        .map(|_| rng.range_f32(-limit, limit))
                        .collect();
                    LayerParams::Conv {
                        w,
                        b: vec![0.0; l.out_channels],
                    }
                }
                LayerKind::Dense => {
                    let limit = (6.0 / (l.in_channels as f32 + l.out_channels as f32)).sqrt();
                    let w = (0..l.in_channels * l.out_channels)
                        .map(|_| rng.range_f32(-limit, limit))
                        .collect();
                    LayerParams::Dense {
                        w,
                        b: vec![0.0; l.out_channels],
                    }
                }
                LayerKind::BatchNorm => LayerParams::BatchNorm {
                    gamma: vec![1.0; l.out_channels],
                    beta: vec![0.0; l.out_channels],
                    running_mean: vec![0.0; l.out_channels],
                    running_var: vec![1.0; l.out_channels],
                },
                _ => LayerParams::None,
            })
            .collect();
        Network {
            topology,
            rescale_min: value_range.0,
            rescale_max: value_range.1,
            params,
            bn_steps: 0,
        }
    }

    /// Gradient holders shaped like the trainable tensors (batch norm
    /// running statistics carry no gradient and stay empty).
    pub fn zero_grads(&self) -> Vec<LayerParams> {
        self.params
            .iter()
            .map(|p| match p {
                LayerParams::None => LayerParams::None,
                LayerParams::Conv { w, b } => LayerParams::Conv {
                    w: vec![0.0; w.len()],
                    b: vec![0.0; b.len()],
                },
                LayerParams::Dense { w, b } => LayerParams::Dense {
                    w: vec![0.0; w.len()],
                    b: vec![0.0; b.len()],
                },
                LayerParams::BatchNorm { gamma, beta, .. } => LayerParams::BatchNorm {
                    gamma: vec![0.0; gamma.len()],
                    beta: vec![0.0; beta.len()],
                    running_mean: vec![],
                    running_var: vec![],
                },
            })
            .collect()
    }
}

/// Applies `f` to each matching pair of trainable tensors in `a` and `b`.
pub fn for_each_trainable_pair(
    a: &mut [LayerParams],
    b: &[LayerParams],
    mut f: impl FnMut(&mut [f32], &[f32]),
) {
    for (pa, pb) in a.iter_mut().zip(b.iter()) {
        match (pa, pb) {
            (LayerParams::Conv { w: wa, b: ba }, LayerParams::Conv { w: wb, b: bb })
            | (LayerParams::Dense { w: wa, b: ba }, LayerParams::Dense { w: wb, b: bb }) => {
                f(wa, wb);
                f(ba, bb);
            }
            (
                LayerParams::BatchNorm {
                    gamma: ga,
                    beta: ba,
                    ..
                },
                LayerParams::BatchNorm {
                    gamma: gb,
                    beta: bb,
                    ..
                },
            ) => {
                f(ga, gb);
                f(ba, bb);
            }
            (LayerParams::None, LayerParams::None) => {}
            _ => panic!("parameter structures diverged"),
        }
    }
}

// --- GWNN weight container ---------------------------------------------------
//
// magic "GWNN", u32 version, then per tensor: u32 name length, UTF-8 name,
// u32 rank, u32 dims, fp32 payload. Little-endian throughout.

const GWNN_MAGIC: &[u8; 4] = b"GWNN";
const GWNN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

fn named_tensors(net: &Network) -> Vec<NamedTensor> {
    let mut out = vec![NamedTensor {
        name: "rescale.range".into(),
        dims: vec![2],
        data: vec![net.rescale_min, net.rescale_max],
    }];
    for (i, (layer, params)) in net
        .topology
        .layers
        .iter()
        .zip(net.params.iter())
        .enumerate()
    {
        let mut push = |suffix: &str, dims: Vec<usize>, data: &[f32]| {
            out.push(NamedTensor {
                name: format!("layer{i}.{suffix}"),
                dims,
                data: data.to_vec(),
            });
        };
        match params {
            LayerParams::Conv { w, b } => {
                push(
                    "conv.weight",
                    vec![3, 3, layer.in_channels, layer.out_channels],
                    w,
                );
                push("conv.bias", vec![layer.out_channels], b);
            }
            LayerParams::Dense { w, b } => {
                push(
                    "dense.weight",
                    vec![layer.in_channels, layer.out_channels],
                    w,
                );
                push("dense.bias", vec![layer.out_channels], b);
            }
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => {
                push("bn.gamma", vec![layer.out_channels], gamma);
                push("bn.beta", vec![layer.out_channels], beta);
                push("bn.running_mean", vec![layer.out_channels], running_mean);
                push("bn.running_var", vec![layer.out_channels], running_var);
            }
            LayerParams::None => {}
        }
    }
    out
}

pub fn to_gwnn_bytes(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(GWNN_MAGIC);
    out.extend_from_slice(&GWNN_VERSION.to_le_bytes());
    for t in named_tensors(net) {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for d in &t.dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_gwnn_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>, EngineError> {
    let mut cursor = 0usize;
    let need = |n: usize, cursor: &mut usize| -> Result<&[u8], EngineError> {
        if *cursor + n > bytes.len() {
            return Err(EngineError::Container(format!(
                "truncated container: wanted {} bytes at offset {}",
                n, cursor
            )));
        }
        let s = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(s)
    };
    let magic = need(4, &mut cursor)?;
    if magic != GWNN_MAGIC {
        return Err(EngineError::Container(format!("bad magic {magic:?}")));
    }
    let ver = u32::from_le_bytes(need(4, &mut cursor)?.try_into().unwrap());
    if ver != GWNN_VERSION {
        return Err(EngineError::Container(format!("unsupported version {ver}")));
    }
    let mut tensors = Vec::new();
    while cursor < bytes.len() {
        let name_len = u32::from_le_bytes(need(4, &mut cursor)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(need(name_len, &mut cursor)?.to_vec())
            .map_err(|e| EngineError::Container(format!("tensor name not UTF-8: {e}")))?;
        let rank = u32::from_le_bytes(need(4, &mut cursor)?.try_into().unwrap()) as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u32::from_le_bytes(need(4, &mut cursor)?.try_into().unwrap()) as usize);
        }
        let count: usize = dims.iter().product();
        let data = need(count * 4, &mut cursor)?
            .chunks_exact(4)
            .map(|q| f32::from_le_bytes(q.try_into().unwrap()))
            .collect();
        tensors.push(NamedTensor { name, dims, data });
    }
    Ok(tensors)
}

/// Rebuilds a network from a container, validating every tensor against the
/// given topology.
pub fn from_gwnn_bytes(topology: Topology, bytes: &[u8]) -> Result<Network, EngineError> {
    let tensors = read_gwnn_tensors(bytes)?;
    let mut net = Network::init(topology, (0.0, 1.0), 0);
    let expected = named_tensors(&net);
    if tensors.len() != expected.len() {
        return Err(EngineError::Container(format!(
            "expected {} tensors, found {}",
            expected.len(),
            tensors.len()
        )));
    }
    for (want, got) in expected.iter().zip(tensors.iter()) {
        if want.name != got.name || want.dims != got.dims {
            return Err(EngineError::Container(format!(
                "tensor mismatch: expected {} {:?}, found {} {:?}",
                want.name, want.dims, got.name, got.dims
            )));
        }
    }
    let mut by_name: std::collections::HashMap<&str, &NamedTensor> =
        tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    let range = by_name.remove("rescale.range").expect("validated above");
    net.rescale_min = range.data[0];
    net.rescale_max = range.data[1];
    for (i, params) in net.params.iter_mut().enumerate() {
        let mut take = |suffix: &str| -> Vec<f32> {
            by_name
                .remove(format!("layer{i}.{suffix}").as_str())
                .expect("validated above")
                .data
                .clone()
        };
        match params {
            LayerParams::Conv { w, b } => {
                *w = take("conv.weight");
                *b = take("conv.bias");
            }
            LayerParams::Dense { w, b } => {
                *w = take("dense.weight");
                *b = take("dense.bias");
            }
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => {
                *gamma = take("bn.gamma");
                *beta = take("bn.beta");
                *running_mean = take("bn.running_mean");
                *running_var = take("bn.running_var");
            }
            LayerParams::None => {}
        }
    }
    Ok(net)
}

pub fn save_gwnn<P: AsRef<Path>>(net: &Network, path: P) -> Result<(), EngineError> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&to_gwnn_bytes(net))?;
    Ok(())
}

pub fn load_gwnn<P: AsRef<Path>>(topology: Topology, path: P) -> Result<Network, EngineError> {
    let bytes = std::fs::read(path)?;
    from_gwnn_bytes(topology, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archmodel::{expand, Architecture, InputShape};

    fn sample_network() -> Network {
        let topo = expand(
            Architecture::new(2, 1).unwrap(),
            InputShape::new(8, 8, 1).unwrap(),
            3,
        )
        .unwrap();
        Network::init(topo, (0.0, 255.0), 42)
    }

    #[test]
    fn init_is_deterministic() {
        let a = sample_network();
        let b = sample_network();
        assert_eq!(a, b);
        let c = {
            let topo = a.topology.clone();
            Network::init(topo, (0.0, 255.0), 43)
        };
        assert_ne!(a, c);
    }

    #[test]
    fn gwnn_round_trip() {
        let net = sample_network();
        let bytes = to_gwnn_bytes(&net);
        assert_eq!(&bytes[..4], b"GWNN");
        let back = from_gwnn_bytes(net.topology.clone(), &bytes).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn gwnn_rejects_corruption() {
        let net = sample_network();
        let mut bytes = to_gwnn_bytes(&net);
        bytes[0] = b'X';
        assert!(from_gwnn_bytes(net.topology.clone(), &bytes).is_err());

        let mut truncated = to_gwnn_bytes(&net);
        truncated.truncate(truncated.len() - 3);
        assert!(from_gwnn_bytes(net.topology.clone(), &truncated).is_err());
    }
}
