//! Search-space generation and budget-driven cropping.
//!
//! The extensive space holds every architecture that fits the edge target
//! (RAM, flash, MAC) and can be trained within the gateway's memory bound.
//! Enumeration is k-major: for each k starting at 1, building cells are
//! added until the first infeasible (k, c); the outer loop stops at the
//! first k whose (k, 0) is infeasible. Cropping then keeps the longest
//! enumeration-order prefix whose estimated total evaluation cost fits the
//! time and energy budgets, using a single per-candidate upper bound t
//! measured on the largest member.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archmodel::{expand, max_cells, Architecture, InputShape};
use crate::costmodel::{profile, OverheadConfig};
use crate::nnengine::{EngineError, Evaluator};

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("constraint {field} must be positive")]
    NonPositiveBound { field: &'static str },
    #[error("cannot calibrate an empty search space")]
    EmptySpace,
    #[error("space is not calibrated (per-evaluation time bound missing)")]
    Uncalibrated,
    #[error(
        "calibration evaluation of {arch} used {peak} bytes, over the gateway bound {bound}; \
         the memory model and the training runtime disagree"
    )]
    CalibrationMemory {
        arch: Architecture,
        peak: u64,
        bound: u64,
    },
    #[error(transparent)]
    Eval(#[from] EngineError),
}

/// Edge-side and gateway-side resource bounds.
///
/// Integer bounds use `u64::MAX` for "unbounded", the float budgets use
/// `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub xi_ram_bytes: u64,
    pub xi_flash_bytes: u64,
    pub xi_mac: u64,
    pub xi_mem_bytes: u64,
    pub xi_time_seconds: f64,
    pub xi_energy_wh: f64,
    /// Peak power draw of the gateway while searching, watts.
    pub w_bar_watts: f64,
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<(), SpaceError> {
        let positive_int = |v: u64, field: &'static str| {
            if v == 0 {
                Err(SpaceError::NonPositiveBound { field })
            } else {
                Ok(())
            }
        };
        positive_int(self.xi_ram_bytes, "xi_ram_bytes")?;
        positive_int(self.xi_flash_bytes, "xi_flash_bytes")?;
        positive_int(self.xi_mac, "xi_mac")?;
        positive_int(self.xi_mem_bytes, "xi_mem_bytes")?;
        let positive = |v: f64, field: &'static str| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(SpaceError::NonPositiveBound { field })
            }
        };
        positive(self.xi_time_seconds, "xi_time_seconds")?;
        positive(self.xi_energy_wh, "xi_energy_wh")?;
        positive(self.w_bar_watts, "w_bar_watts")?;
        Ok(())
    }
}

/// An ordered set of admissible architectures plus the calibrated
/// per-evaluation cost bounds (zero until calibrated).
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    members: Vec<Architecture>,
    index: HashMap<(u32, u32), usize>,
    pub t_bar_seconds: f64,
    pub e_bar_wh: f64,
    pub shape: InputShape,
    pub num_classes: usize,
    pub batch_size: usize,
}

impl SearchSpace {
    /// Builds a space from an explicit member list (fixtures and tests).
    pub fn from_members(
        members: Vec<Architecture>,
        shape: InputShape,
        num_classes: usize,
        batch_size: usize,
    ) -> Self {
        let index = members
            .iter()
            .enumerate()
            .map(|(i, a)| ((a.k, a.c), i))
            .collect();
        SearchSpace {
            members,
            index,
            t_bar_seconds: 0.0,
            e_bar_wh: 0.0,
            shape,
            num_classes,
            batch_size,
        }
    }

    pub fn members(&self) -> &[Architecture] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, k: u32, c: u32) -> bool {
        self.index.contains_key(&(k, c))
    }

    /// The member with the most parameters to update during training; ties
    /// resolve to the later one in enumeration order, which keeps the
    /// calibration bound on the slower-to-train side.
    pub fn max_train_param_member(&self) -> Option<Architecture> {
        let mut best: Option<(usize, Architecture)> = None;
        for &arch in &self.members {
            let params = expand(arch, self.shape, self.num_classes)
                .map(|t| t.train_param_count())
                .unwrap_or(0);
            match best {
                Some((b, _)) if params < b => {}
                _ => best = Some((params, arch)),
            }
        }
        best.map(|(_, a)| a)
    }

    fn with_members(&self, members: Vec<Architecture>) -> SearchSpace {
        let index = members
            .iter()
            .enumerate()
            .map(|(i, a)| ((a.k, a.c), i))
            .collect();
        SearchSpace {
            members,
            index,
            ..self.clone()
        }
    }
}

/// Eq.-style feasibility: all four resource estimates within their bounds
/// and the building-cell count within the pooling limit. Pure comparison;
/// bound validation happens at configuration time.
pub fn is_feasible(
    arch: Architecture,
    constraints: &ConstraintSet,
    shape: InputShape,
    num_classes: usize,
    batch_size: usize,
    cfg: &OverheadConfig,
) -> bool {
    if arch.c > max_cells(shape) {
        return false;
    }
    match profile(arch, shape, num_classes, batch_size, cfg) {
        Ok(p) => {
            p.ram_bytes <= constraints.xi_ram_bytes
                && p.flash_bytes <= constraints.xi_flash_bytes
                && p.macs <= constraints.xi_mac
                && p.train_mem_bytes <= constraints.xi_mem_bytes
        }
        Err(_) => false,
    }
}

/// Builds the extensive search space: k-major enumeration, inner loop until
/// the first infeasible (k, c), outer loop until (k, 0) is infeasible.
/// Returns an empty space when even (1, 0) does not fit.
pub fn build_extensive_space(
    constraints: &ConstraintSet,
    shape: InputShape,
    num_classes: usize,
    batch_size: usize,
    cfg: &OverheadConfig,
) -> SearchSpace {
    let mut members = Vec::new();
    let mut k = 1u32;
    loop {
        let mut c = 0u32;
        while is_feasible(
            Architecture { k, c },
            constraints,
            shape,
            num_classes,
            batch_size,
            cfg,
        ) {
            members.push(Architecture { k, c });
            c += 1;
        }
        if c == 0 {
            break; // (k, 0) infeasible: stopping criterion
        }
        k += 1;
    }
    SearchSpace::from_members(members, shape, num_classes, batch_size)
}

/// Measures the per-evaluation upper bounds: one quick evaluation of the
/// maximum-parameter member gives the time bound, and the energy bound is
/// that time at the gateway's peak power. Stores the bounds in the space
/// and returns them.
///
/// The measured time is only an upper bound if the host is otherwise idle;
/// do not run other load concurrently with calibration.
pub fn calibrate_bounds(
    space: &mut SearchSpace,
    evaluator: &mut dyn Evaluator,
    w_bar_watts: f64,
    xi_mem_bytes: u64,
) -> Result<(f64, f64), SpaceError> {
    let largest = space
        .max_train_param_member()
        .ok_or(SpaceError::EmptySpace)?;
    let result = evaluator.evaluate(largest)?;
    if result.peak_mem_bytes > xi_mem_bytes {
        return Err(SpaceError::CalibrationMemory {
            arch: largest,
            peak: result.peak_mem_bytes,
            bound: xi_mem_bytes,
        });
    }
    let t_bar = result.train_seconds;
    let e_bar = t_bar * w_bar_watts / 3600.0;
    space.t_bar_seconds = t_bar;
    space.e_bar_wh = e_bar;
    Ok((t_bar, e_bar))
}

/// How the cropping check treats the budget boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropMode {
    /// Post-insertion check: the kept prefix's estimated cost never exceeds
    /// the budget.
    #[default]
    Exact,
    /// Pre-insertion check, which can overshoot the budget by exactly one
    /// evaluation. Matches the original formulation; kept for comparison.
    Literal,
}

/// Crops the space to the longest enumeration-order prefix whose estimated
/// cost fits both budgets: |S| = min(|S_full|, floor(time/t), floor(energy/e))
/// in `Exact` mode.
pub fn crop_space(
    space: &SearchSpace,
    constraints: &ConstraintSet,
    mode: CropMode,
) -> Result<SearchSpace, SpaceError> {
    if space.t_bar_seconds <= 0.0 {
        return Err(SpaceError::Uncalibrated);
    }
    let t = space.t_bar_seconds;
    let e = space.e_bar_wh;
    let all = space.len();

    let by_budget = |budget: f64, per_eval: f64| -> usize {
        if budget.is_infinite() || per_eval <= 0.0 {
            return all;
        }
        let q = budget / per_eval;
        if q >= all as f64 {
            all
        } else if q < 0.0 {
            0
        } else {
            q.floor() as usize
        }
    };

    let keep = match mode {
        CropMode::Exact => all
            .min(by_budget(constraints.xi_time_seconds, t))
            .min(by_budget(constraints.xi_energy_wh, e)),
        CropMode::Literal => {
            let mut n = 0usize;
            while n < all {
                let cost_t = n as f64 * t;
                let cost_e = n as f64 * e;
                if cost_t <= constraints.xi_time_seconds && cost_e <= constraints.xi_energy_wh {
                    n += 1;
                } else {
                    break;
                }
            }
            n
        }
    };
    Ok(space.with_members(space.members[..keep].to_vec()))
}

/// Deployment targets with their RAM/flash capacities (KiB) and CoreMark
/// scores. The MAC bound is not derivable from a CoreMark score, so presets
/// leave it unbounded and the user may tighten it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McuPreset {
    pub name: &'static str,
    pub ram_kib: u64,
    pub flash_kib: u64,
    pub coremark: u32,
}

pub const MCU_PRESETS: [McuPreset; 3] = [
    McuPreset {
        name: "l010rbt6",
        ram_kib: 20,
        flash_kib: 128,
        coremark: 75,
    },
    McuPreset {
        name: "u083rct6",
        ram_kib: 32,
        flash_kib: 256,
        coremark: 134,
    },
    McuPreset {
        name: "l412kbu3",
        ram_kib: 40,
        flash_kib: 128,
        coremark: 273,
    },
];

pub fn mcu_preset(name: &str) -> Option<&'static McuPreset> {
    let lower = name.to_ascii_lowercase();
    MCU_PRESETS.iter().find(|p| p.name == lower)
}

/// Single-board computers that typically play the gateway role, with RAM
/// and measured peak power draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatewayPreset {
    pub name: &'static str,
    pub ram_bytes: u64,
    pub power_watts: f64,
}

pub const GATEWAY_PRESETS: [GatewayPreset; 3] = [
    GatewayPreset {
        name: "rpi-zero2",
        ram_bytes: 512 * 1024 * 1024,
        power_watts: 2.8,
    },
    GatewayPreset {
        name: "rpi3",
        ram_bytes: 1024 * 1024 * 1024,
        power_watts: 4.3,
    },
    GatewayPreset {
        name: "rpi4",
        ram_bytes: 4 * 1024 * 1024 * 1024,
        power_watts: 5.6,
    },
];

pub fn gateway_preset(name: &str) -> Option<&'static GatewayPreset> {
    let lower = name.to_ascii_lowercase();
    GATEWAY_PRESETS.iter().find(|p| p.name == lower)
}
