//! Adam optimizer over the per-layer parameter structure.

use super::network::{for_each_trainable_pair, LayerParams, Network};

pub struct Adam {
    m: Vec<LayerParams>,
    v: Vec<LayerParams>,
    t: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(net: &Network, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            m: net.zero_grads(),
            v: net.zero_grads(),
            t: 0,
            learning_rate,
            beta1,
            beta2,
            epsilon,
        }
    }

    /// One update step. Gradients must be shaped like the network's
    /// trainable tensors (as returned by `backward`).
    pub fn step(&mut self, params: &mut [LayerParams], grads: &[LayerParams]) {
        self.t += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let bias1 = 1.0 - b1.powi(self.t as i32);
        let bias2 = 1.0 - b2.powi(self.t as i32);
        let lr = self.learning_rate;
        let eps = self.epsilon;

        for_each_trainable_pair(&mut self.m, grads, |m, g| {
            for (mv, &gv) in m.iter_mut().zip(g.iter()) {
                *mv = (b1 * *mv as f64 + (1.0 - b1) * gv as f64) as f32;
            }
        });
        for_each_trainable_pair(&mut self.v, grads, |v, g| {
            for (vv, &gv) in v.iter_mut().zip(g.iter()) {
                *vv = (b2 * *vv as f64 + (1.0 - b2) * (gv as f64) * (gv as f64)) as f32;
            }
        });

        // Walk params together with (m, v); the structures all mirror the
        // topology, so plain index math keeps the borrows simple.
        for i in 0..params.len() {
            let (pm, pv) = (&self.m[i], &self.v[i]);
            let update = |p: &mut Vec<f32>, m: &Vec<f32>, v: &Vec<f32>| {
                for j in 0..p.len() {
                    let mhat = m[j] as f64 / bias1;
                    let vhat = v[j] as f64 / bias2;
                    p[j] = (p[j] as f64 - lr * mhat / (vhat.sqrt() + eps)) as f32;
                }
            };
            match (&mut params[i], pm, pv) {
                (
                    LayerParams::Conv { w, b },
                    LayerParams::Conv { w: mw, b: mb },
                    LayerParams::Conv { w: vw, b: vb },
                )
                | (
                    LayerParams::Dense { w, b },
                    LayerParams::Dense { w: mw, b: mb },
                    LayerParams::Dense { w: vw, b: vb },
                ) => {
                    update(w, mw, vw);
                    update(b, mb, vb);
                }
                (
                    LayerParams::BatchNorm { gamma, beta, .. },
                    LayerParams::BatchNorm {
                        gamma: mg,
                        beta: mb,
                        ..
                    },
                    LayerParams::BatchNorm {
                        gamma: vg,
                        beta: vb,
                        ..
                    },
                ) => {
                    update(gamma, mg, vg);
                    update(beta, mb, vb);
                }
                (LayerParams::None, _, _) => {}
                _ => panic!("parameter structures diverged"),
            }
        }
    }
}
