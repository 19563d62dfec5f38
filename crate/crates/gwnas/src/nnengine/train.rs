//! Candidate evaluation (quick training) and final training.
//!
//! A quick evaluation trains for a few epochs on the training side of a
//! seeded split and scores the candidate by the maximum validation accuracy
//! seen across epochs. Final training runs the full schedule with optional
//! augmentation and validation-based checkpointing. Both poll the budget
//! ledger at batch boundaries and abort cleanly, returning the best result
//! so far, when the stop flag is up.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::archmodel::{expand, Architecture, LayerKind, Topology};
use crate::budget::BudgetLedger;
use crate::dataio::{augment_batch, split, AugmentFlags, Dataset};
use crate::rng::Rng;

use super::adam::Adam;
use super::layers::{backward, forward_eval, forward_train};
use super::network::Network;
use super::tensor::Tensor4;
use super::EngineError;

/// Hyper-parameters for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub val_split: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub augment: bool,
    /// Random rotations on top of horizontal flips (images only).
    pub augment_rotation: bool,
    pub checkpoint_on_val: bool,
}

impl TrainConfig {
    /// Quick-evaluation schedule for image data: three epochs, 30%
    /// validation split, batch 16, learning rate 1e-3.
    pub fn quick_images() -> Self {
        TrainConfig {
            epochs: 3,
            val_split: 0.3,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-7,
            augment: false,
            augment_rotation: false,
            checkpoint_on_val: false,
        }
    }

    /// Quick-evaluation schedule for time series: fifty epochs.
    pub fn quick_timeseries() -> Self {
        TrainConfig {
            epochs: 50,
            ..Self::quick_images()
        }
    }

    /// Final-training schedule for image data: one hundred epochs, 10%
    /// validation split, batch 128, learning rate 1e-2, flip and rotation
    /// augmentation, validation-based checkpointing.
    pub fn final_images() -> Self {
        TrainConfig {
            epochs: 100,
            val_split: 0.1,
            batch_size: 128,
            learning_rate: 1e-2,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-7,
            augment: true,
            augment_rotation: true,
            checkpoint_on_val: true,
        }
    }

    /// Final-training schedule for time series: five hundred epochs, flips
    /// only (rotating a reshaped signal map is not meaningful).
    pub fn final_timeseries() -> Self {
        TrainConfig {
            epochs: 500,
            augment_rotation: false,
            ..Self::final_images()
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.epochs == 0 {
            return Err(EngineError::BadTrainConfig("epochs must be >= 1".into()));
        }
        if !(self.val_split > 0.0 && self.val_split < 1.0) {
            return Err(EngineError::BadTrainConfig(format!(
                "val_split {} must lie strictly between 0 and 1",
                self.val_split
            )));
        }
        if self.batch_size == 0 {
            return Err(EngineError::BadTrainConfig(
                "batch_size must be >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(EngineError::BadTrainConfig(
                "learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of a quick evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Maximum validation accuracy observed across epochs, in [0, 1].
    pub val_accuracy: f64,
    /// Wall time of the evaluation (surrogates report their configured fake
    /// duration instead).
    pub train_seconds: f64,
    /// Peak training working set, from the engine's own allocation
    /// accounting.
    pub peak_mem_bytes: u64,
}

/// Final training output: the checkpointed network plus metrics.
#[derive(Debug)]
pub struct FinalTrainOutcome {
    pub network: Network,
    pub best_val_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub train_seconds: f64,
    pub epochs_run: usize,
}

pub(crate) fn gather_batch(ds: &Dataset, indices: &[usize]) -> (Tensor4, Vec<u32>) {
    let stride = ds.shape.elements();
    let mut data = Vec::with_capacity(indices.len() * stride);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        data.extend_from_slice(&ds.samples[i].data);
        labels.push(ds.samples[i].label);
    }
    (
        Tensor4::from_data(
            indices.len(),
            ds.shape.height,
            ds.shape.width,
            ds.shape.channels,
            data,
        ),
        labels,
    )
}

/// Classification accuracy in inference mode. Ties in the probability row
/// resolve to the lowest class index.
pub fn accuracy(net: &Network, ds: &Dataset, batch_size: usize) -> Result<f64, EngineError> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    let indices: Vec<usize> = (0..ds.len()).collect();
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size.max(1)) {
        let (batch, labels) = gather_batch(ds, chunk);
        let probs = forward_eval(net, &batch)?;
        let classes = probs.channels;
        for (b, &label) in labels.iter().enumerate() {
            let row = &probs.data[b * classes..(b + 1) * classes];
            let mut best = 0usize;
            for (c, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = c;
                }
            }
            if best as u32 == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// Peak training memory from the engine's actual allocation scheme:
/// parameters with gradients and two Adam moments, cached forward
/// activations (plus batch-norm normalized copies), and the two transient
/// gradient buffers alive at once during backward. Always at or below the
/// analytic estimate in `costmodel::estimate_train_mem`.
pub fn measured_train_mem_bytes(topology: &Topology, batch: usize) -> u64 {
    let mut param_bytes = 0u64;
    for l in &topology.layers {
        match l.kind {
            LayerKind::Conv3x3 | LayerKind::Dense => {
                // weight + grad + two moments, fp32
                param_bytes += 16 * l.deploy_params() as u64;
            }
            LayerKind::BatchNorm => {
                // gamma/beta trainable, running stats plain storage
                param_bytes += 16 * (2 * l.out_channels) as u64;
                param_bytes += 4 * (2 * l.out_channels) as u64;
            }
            _ => {}
        }
    }
    let b = batch as u64;
    let mut activation_bytes = 0u64;
    for l in &topology.layers {
        activation_bytes += 4 * b * l.output_elements() as u64;
        if l.kind == LayerKind::BatchNorm {
            // normalized copy cached for backward + per-channel inv_std
            activation_bytes += 4 * b * l.output_elements() as u64;
            activation_bytes += 4 * l.out_channels as u64;
        }
    }
    // Backward holds the gradient of one layer's output and input at a time;
    // the first convolution (index 1) skips its input gradient.
    let mut transient = 0u64;
    for (i, l) in topology.layers.iter().enumerate() {
        let pair = if i > 1 {
            l.output_elements() + l.input_elements()
        } else {
            l.output_elements()
        };
        transient = transient.max(4 * b * pair as u64);
    }
    param_bytes + activation_bytes + transient
}

struct TrainLoop<'a> {
    net: Network,
    adam: Adam,
    cfg: &'a TrainConfig,
    ledger: Option<&'a BudgetLedger>,
    aborted: bool,
}

impl<'a> TrainLoop<'a> {
    fn new(
        topology: Topology,
        ds: &Dataset,
        cfg: &'a TrainConfig,
        ledger: Option<&'a BudgetLedger>,
    ) -> Self {
        let net = Network::init(topology, (ds.value_min, ds.value_max), cfg.seed);
        let adam = Adam::new(
            &net,
            cfg.learning_rate,
            cfg.adam_beta1,
            cfg.adam_beta2,
            cfg.adam_eps,
        );
        TrainLoop {
            net,
            adam,
            cfg,
            ledger,
            aborted: false,
        }
    }

    /// Runs one epoch; returns false when the watchdog fired mid-epoch.
    fn epoch(&mut self, train: &Dataset, epoch: usize) -> Result<bool, EngineError> {
        let mut order: Vec<usize> = (0..train.len()).collect();
        Rng::new(self.cfg.seed)
            .fork(0x0e90c4 ^ epoch as u64)
            .shuffle(&mut order);
        for (step, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            if let Some(ledger) = self.ledger {
                if ledger.stop_requested() {
                    self.aborted = true;
                    return Ok(false);
                }
            }
            let (mut batch, labels) = gather_batch(train, chunk);
            if self.cfg.augment {
                augment_batch(
                    &mut batch.data,
                    chunk.len(),
                    batch.height,
                    batch.width,
                    batch.channels,
                    AugmentFlags {
                        flip: true,
                        rotate: self.cfg.augment_rotation,
                    },
                    self.cfg.seed ^ ((epoch as u64) << 24 | step as u64),
                )?;
            }
            let pass = forward_train(&mut self.net, &batch)?;
            let grads = backward(&self.net, &batch, &pass, &labels);
            self.adam.step(&mut self.net.params, &grads);
        }
        Ok(true)
    }
}

/// Trains `arch` briefly and reports the maximum validation accuracy, the
/// score the search optimizes. Deterministic given the seed; aborts cleanly
/// at a batch boundary when the ledger's stop flag is set.
pub fn quick_evaluate(
    arch: Architecture,
    dataset: &Dataset,
    cfg: &TrainConfig,
    ledger: Option<&BudgetLedger>,
) -> Result<EvalResult, EngineError> {
    cfg.validate()?;
    if dataset.num_classes < 2 {
        return Err(EngineError::TooFewClasses {
            num_classes: dataset.num_classes,
        });
    }
    let started = Instant::now();
    let topology = expand(arch, dataset.shape, dataset.num_classes)?;
    let peak_mem_bytes = measured_train_mem_bytes(&topology, cfg.batch_size);
    let (train, val) = split(dataset, cfg.val_split, cfg.seed)?;

    let mut run = TrainLoop::new(topology, dataset, cfg, ledger);
    let mut best = None::<f64>;
    for epoch in 0..cfg.epochs {
        let completed = run.epoch(&train, epoch)?;
        if !completed {
            break;
        }
        let acc = accuracy(&run.net, &val, cfg.batch_size)?;
        best = Some(best.map_or(acc, |b: f64| b.max(acc)));
    }
    // Watchdog fired before the first epoch finished: score what we have.
    let val_accuracy = match best {
        Some(acc) => acc,
        None => accuracy(&run.net, &val, cfg.batch_size)?,
    };
    Ok(EvalResult {
        val_accuracy,
        train_seconds: started.elapsed().as_secs_f64(),
        peak_mem_bytes,
    })
}

/// Trains `arch` on the full schedule, checkpointing on validation accuracy
/// when configured, and reports test-set accuracy when a test set is given.
pub fn final_train(
    arch: Architecture,
    dataset: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    ledger: Option<&BudgetLedger>,
) -> Result<FinalTrainOutcome, EngineError> {
    cfg.validate()?;
    if dataset.num_classes < 2 {
        return Err(EngineError::TooFewClasses {
            num_classes: dataset.num_classes,
        });
    }
    let started = Instant::now();
    let topology = expand(arch, dataset.shape, dataset.num_classes)?;
    let (train, val) = split(dataset, cfg.val_split, cfg.seed)?;

    let mut run = TrainLoop::new(topology, dataset, cfg, ledger);
    let mut best_val = f64::NEG_INFINITY;
    let mut snapshot = None;
    let mut epochs_run = 0usize;
    for epoch in 0..cfg.epochs {
        let completed = run.epoch(&train, epoch)?;
        if !completed {
            break;
        }
        epochs_run += 1;
        let acc = accuracy(&run.net, &val, cfg.batch_size)?;
        if acc > best_val {
            best_val = acc;
            if cfg.checkpoint_on_val {
                snapshot = Some(run.net.clone());
            }
        }
    }
    let network = match snapshot {
        Some(best) => best,
        None => run.net,
    };
    if best_val == f64::NEG_INFINITY {
        best_val = accuracy(&network, &val, cfg.batch_size)?;
    }
    let test_accuracy = match test {
        Some(t) => Some(accuracy(&network, t, cfg.batch_size)?),
        None => None,
    };
    Ok(FinalTrainOutcome {
        network,
        best_val_accuracy: best_val,
        test_accuracy,
        train_seconds: started.elapsed().as_secs_f64(),
        epochs_run,
    })
}
