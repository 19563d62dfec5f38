//! Run configuration: one JSON file plus a handful of flag overrides.
//!
//! Presets cover the supported deployment targets and gateway boards, so a
//! full run needs little more than a dataset descriptor and budgets.
//! Validation reports the offending field path.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::costmodel::OverheadConfig;
use crate::nnengine::{SurrogateSpec, TrainConfig};
use crate::spacegen::{gateway_preset, mcu_preset, ConstraintSet, CropMode};

#[derive(Debug)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error at {}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    /// One of the MCU preset names, e.g. "l412kbu3".
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub ram_kib: Option<u64>,
    #[serde(default)]
    pub flash_kib: Option<u64>,
    /// Optional MAC bound in millions; absent means unbounded.
    #[serde(default)]
    pub mac_millions: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySection {
    /// One of the gateway preset names, e.g. "rpi-zero2".
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub mem_mib: Option<u64>,
    #[serde(default)]
    pub power_watts: Option<f64>,
    /// Absent means unbounded.
    #[serde(default)]
    pub time_budget_seconds: Option<f64>,
    #[serde(default)]
    pub energy_budget_wh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSection {
    Synthetic {
        generator: String,
        samples: usize,
        height: usize,
        width: usize,
        #[serde(default = "one")]
        channels: usize,
        #[serde(default)]
        seed: u64,
    },
    Cifar10 {
        paths: Vec<String>,
    },
    Gwt1 {
        path: String,
    },
    TimeseriesCsv {
        path: String,
        window: usize,
        reshape: [usize; 2],
    },
}

fn one() -> usize {
    1
}

impl DatasetSection {
    pub fn is_timeseries(&self) -> bool {
        matches!(self, DatasetSection::TimeseriesCsv { .. })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub val_split: Option<f64>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub augment: Option<bool>,
    #[serde(default)]
    pub augment_rotation: Option<bool>,
}

impl TrainSection {
    fn apply(&self, mut base: TrainConfig, seed: u64) -> TrainConfig {
        if let Some(v) = self.epochs {
            base.epochs = v;
        }
        if let Some(v) = self.val_split {
            base.val_split = v;
        }
        if let Some(v) = self.batch_size {
            base.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            base.learning_rate = v;
        }
        if let Some(v) = self.augment {
            base.augment = v;
        }
        if let Some(v) = self.augment_rotation {
            base.augment_rotation = v;
        }
        base.seed = seed;
        base
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    #[default]
    Real,
    Surrogate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSection {
    #[serde(default = "default_fake_seconds")]
    pub fake_seconds: f64,
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default = "default_surrogate_score")]
    pub default_score: f64,
    /// Explicit surface entries [k, c, score]; when absent, the built-in
    /// walkthrough surface is used.
    #[serde(default)]
    pub surface: Option<Vec<(u32, u32, f64)>>,
}

fn default_fake_seconds() -> f64 {
    1.0
}

fn default_surrogate_score() -> f64 {
    0.5
}

impl Default for SurrogateSection {
    fn default() -> Self {
        SurrogateSection {
            fake_seconds: default_fake_seconds(),
            noise_amplitude: 0.0,
            default_score: default_surrogate_score(),
            surface: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverheadSection {
    #[serde(default)]
    pub ram_overhead_bytes: Option<u64>,
    #[serde(default)]
    pub flash_overhead_bytes: Option<u64>,
    #[serde(default)]
    pub weight_bytes: Option<u64>,
    #[serde(default)]
    pub bias_bytes: Option<u64>,
}

/// The on-disk configuration document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    pub target: TargetSection,
    #[serde(default)]
    pub gateway: GatewaySection,
    pub dataset: DatasetSection,
    /// Fraction of the training split used during the search; defaults to
    /// 0.1 for very large datasets (100k+ samples) and 1.0 otherwise.
    #[serde(default)]
    pub search_fraction: Option<f64>,
    #[serde(default)]
    pub quick: TrainSection,
    #[serde(default, rename = "final")]
    pub final_schedule: TrainSection,
    #[serde(default)]
    pub evaluator: EvaluatorKind,
    #[serde(default)]
    pub surrogate: SurrogateSection,
    #[serde(default)]
    pub overheads: OverheadSection,
    /// Train the winning architecture on the full schedule after the search.
    #[serde(default)]
    pub final_train: bool,
    #[serde(default)]
    pub crop_mode: CropMode,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| err("<document>", e.to_string()))
    }

    /// Validates and resolves presets into concrete values.
    pub fn resolve(&self) -> Result<ResolvedConfig, ConfigError> {
        let (ram_kib, flash_kib) = match (
            &self.target.preset,
            self.target.ram_kib,
            self.target.flash_kib,
        ) {
            (Some(name), None, None) => {
                let p = mcu_preset(name).ok_or_else(|| {
                    err(
                        "target.preset",
                        format!(
                            "unknown preset {name:?}; known: {}",
                            crate::spacegen::MCU_PRESETS
                                .iter()
                                .map(|p| p.name)
                                .collect::<Vec<_>>()
                                .join(", ")
                        ),
                    )
                })?;
                (p.ram_kib, p.flash_kib)
            }
            (None, Some(ram), Some(flash)) => (ram, flash),
            _ => {
                return Err(err(
                    "target",
                    "give either preset, or both ram_kib and flash_kib",
                ))
            }
        };
        if ram_kib == 0 {
            return Err(err("target.ram_kib", "must be positive"));
        }
        if flash_kib == 0 {
            return Err(err("target.flash_kib", "must be positive"));
        }
        let xi_mac = match self.target.mac_millions {
            None => u64::MAX,
            Some(m) if m > 0.0 => (m * 1e6) as u64,
            Some(_) => return Err(err("target.mac_millions", "must be positive")),
        };

        let gw = self.gateway.preset.as_ref().map(|name| {
            gateway_preset(name).ok_or_else(|| {
                err(
                    "gateway.preset",
                    format!(
                        "unknown preset {name:?}; known: {}",
                        crate::spacegen::GATEWAY_PRESETS
                            .iter()
                            .map(|p| p.name)
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                )
            })
        });
        let gw = match gw {
            Some(Ok(p)) => Some(p),
            Some(Err(e)) => return Err(e),
            None => None,
        };
        let xi_mem_bytes = match (self.gateway.mem_mib, gw) {
            (Some(mib), _) => mib * 1024 * 1024,
            (None, Some(p)) => p.ram_bytes,
            (None, None) => return Err(err("gateway", "give mem_mib or a preset")),
        };
        if xi_mem_bytes == 0 {
            return Err(err("gateway.mem_mib", "must be positive"));
        }
        let w_bar_watts = match (self.gateway.power_watts, gw) {
            (Some(w), _) => w,
            (None, Some(p)) => p.power_watts,
            (None, None) => return Err(err("gateway", "give power_watts or a preset")),
        };
        if !(w_bar_watts > 0.0) {
            return Err(err("gateway.power_watts", "must be positive"));
        }
        let budget = |v: Option<f64>, path: &str| -> Result<f64, ConfigError> {
            match v {
                None => Ok(f64::INFINITY),
                Some(x) if x > 0.0 => Ok(x),
                Some(_) => Err(err(path, "must be positive")),
            }
        };
        let xi_time_seconds = budget(
            self.gateway.time_budget_seconds,
            "gateway.time_budget_seconds",
        )?;
        let xi_energy_wh = budget(self.gateway.energy_budget_wh, "gateway.energy_budget_wh")?;

        if let Some(f) = self.search_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(err("search_fraction", "must lie in (0, 1]"));
            }
        }

        match &self.dataset {
            DatasetSection::Synthetic {
                samples,
                height,
                width,
                channels,
                ..
            } => {
                if *samples == 0 {
                    return Err(err("dataset.samples", "must be positive"));
                }
                if *height == 0 || *width == 0 || *channels == 0 {
                    return Err(err("dataset", "height, width, channels must be positive"));
                }
            }
            DatasetSection::Cifar10 { paths } => {
                if paths.is_empty() {
                    return Err(err("dataset.paths", "at least one batch file"));
                }
            }
            DatasetSection::TimeseriesCsv {
                window, reshape, ..
            } => {
                if *window != reshape[0] * reshape[1] {
                    return Err(err(
                        "dataset.window",
                        format!("must equal reshape product {}x{}", reshape[0], reshape[1]),
                    ));
                }
            }
            DatasetSection::Gwt1 { .. } => {}
        }

        let timeseries = self.dataset.is_timeseries();
        let quick_base = if timeseries {
            TrainConfig::quick_timeseries()
        } else {
            TrainConfig::quick_images()
        };
        let final_base = if timeseries {
            TrainConfig::final_timeseries()
        } else {
            TrainConfig::final_images()
        };
        let quick = self.quick.apply(quick_base, self.seed);
        let final_schedule = self.final_schedule.apply(final_base, self.seed);
        let check = |cfg: &TrainConfig, path: &str| -> Result<(), ConfigError> {
            cfg.validate().map_err(|e| err(path, e.to_string()))
        };
        check(&quick, "quick")?;
        check(&final_schedule, "final")?;
        if timeseries && final_schedule.augment_rotation {
            return Err(err(
                "final.augment_rotation",
                "rotation is not defined for windowed time series",
            ));
        }

        let d = OverheadConfig::default();
        let overheads = OverheadConfig {
            ram_overhead_bytes: self
                .overheads
                .ram_overhead_bytes
                .unwrap_or(d.ram_overhead_bytes),
            flash_overhead_bytes: self
                .overheads
                .flash_overhead_bytes
                .unwrap_or(d.flash_overhead_bytes),
            weight_bytes: self.overheads.weight_bytes.unwrap_or(d.weight_bytes),
            bias_bytes: self.overheads.bias_bytes.unwrap_or(d.bias_bytes),
        };

        if !(self.surrogate.fake_seconds > 0.0) {
            return Err(err("surrogate.fake_seconds", "must be positive"));
        }
        let surrogate = SurrogateSpec {
            surface: match &self.surrogate.surface {
                Some(entries) => entries.iter().map(|&(k, c, s)| ((k, c), s)).collect(),
                None => SurrogateSpec::walkthrough().surface,
            },
            default_score: self.surrogate.default_score,
            noise_amplitude: self.surrogate.noise_amplitude,
            fake_seconds: self.surrogate.fake_seconds,
            fake_peak_mem_bytes: 0,
            seed: self.seed,
        };

        Ok(ResolvedConfig {
            seed: self.seed,
            output_dir: self.output_dir.clone().map(PathBuf::from),
            constraints: ConstraintSet {
                xi_ram_bytes: ram_kib * 1024,
                xi_flash_bytes: flash_kib * 1024,
                xi_mac,
                xi_mem_bytes,
                xi_time_seconds,
                xi_energy_wh,
                w_bar_watts,
            },
            overheads,
            dataset: self.dataset.clone(),
            search_fraction: self.search_fraction,
            quick,
            final_schedule,
            evaluator: self.evaluator,
            surrogate,
            final_train: self.final_train,
            crop_mode: self.crop_mode,
        })
    }
}

/// Fully validated configuration with presets and defaults applied.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub constraints: ConstraintSet,
    pub overheads: OverheadConfig,
    pub dataset: DatasetSection,
    pub search_fraction: Option<f64>,
    pub quick: TrainConfig,
    pub final_schedule: TrainConfig,
    pub evaluator: EvaluatorKind,
    pub surrogate: SurrogateSpec,
    pub final_train: bool,
    pub crop_mode: CropMode,
}

impl ResolvedConfig {
    /// The search fraction to apply given the dataset size: explicit value,
    /// else 0.1 for 100k-sample-class datasets, else the whole set.
    pub fn effective_search_fraction(&self, dataset_len: usize) -> f64 {
        match self.search_fraction {
            Some(f) => f,
            None if dataset_len >= 100_000 => 0.1,
            None => 1.0,
        }
    }
}

/// A paper-faithful starter configuration: the largest supported MCU target,
/// the smallest gateway, real evaluations on a synthetic dataset.
pub fn example_config() -> RunConfig {
    RunConfig {
        seed: 42,
        output_dir: None,
        target: TargetSection {
            preset: Some("l412kbu3".into()),
            ..Default::default()
        },
        gateway: GatewaySection {
            preset: Some("rpi-zero2".into()),
            time_budget_seconds: Some(600.0),
            energy_budget_wh: None,
            ..Default::default()
        },
        dataset: DatasetSection::Synthetic {
            generator: "separable-blobs".into(),
            samples: 500,
            height: 16,
            width: 16,
            channels: 1,
            seed: 0,
        },
        search_fraction: None,
        quick: TrainSection::default(),
        final_schedule: TrainSection::default(),
        evaluator: EvaluatorKind::Real,
        surrogate: SurrogateSection::default(),
        overheads: OverheadSection::default(),
        final_train: true,
        crop_mode: CropMode::Exact,
    }
}

/// Keys accepted as `--set key=value` overrides, mostly to keep the CLI
/// surface honest about what it can change without a config edit.
pub fn override_keys() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("seed", "integer"),
        ("evaluator", "real | surrogate"),
        ("time-budget-s", "float seconds"),
        ("energy-budget-wh", "float watt-hours"),
        ("search-fraction", "float in (0, 1]"),
        ("final-train", "true | false"),
        ("crop-mode", "exact | literal"),
    ])
}

/// Applies one `key=value` override onto the raw config.
pub fn apply_override(cfg: &mut RunConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "seed" => {
            cfg.seed = value
                .parse()
                .map_err(|_| err("--set seed", "expected an integer"))?;
        }
        "evaluator" => {
            cfg.evaluator = match value {
                "real" => EvaluatorKind::Real,
                "surrogate" => EvaluatorKind::Surrogate,
                _ => return Err(err("--set evaluator", "expected real or surrogate")),
            };
        }
        "time-budget-s" => {
            cfg.gateway.time_budget_seconds = Some(
                value
                    .parse()
                    .map_err(|_| err("--set time-budget-s", "expected a float"))?,
            );
        }
        "energy-budget-wh" => {
            cfg.gateway.energy_budget_wh = Some(
                value
                    .parse()
                    .map_err(|_| err("--set energy-budget-wh", "expected a float"))?,
            );
        }
        "search-fraction" => {
            cfg.search_fraction = Some(
                value
                    .parse()
                    .map_err(|_| err("--set search-fraction", "expected a float"))?,
            );
        }
        "final-train" => {
            cfg.final_train = match value {
                "true" => true,
                "false" => false,
                _ => return Err(err("--set final-train", "expected true or false")),
            };
        }
        "crop-mode" => {
            cfg.crop_mode = match value {
                "exact" => CropMode::Exact,
                "literal" => CropMode::Literal,
                _ => return Err(err("--set crop-mode", "expected exact or literal")),
            };
        }
        other => {
            return Err(err(
                "--set",
                format!(
                    "unknown key {other:?}; known: {}",
                    override_keys()
                        .keys()
                        .copied()
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            ))
        }
    }
    Ok(())
}
