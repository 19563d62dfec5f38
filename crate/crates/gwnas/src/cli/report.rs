//! Machine-readable and human-readable run reports.
//!
//! The JSON form is the stable interface consumed by tooling and tests;
//! numeric fields round-trip bit-exactly through serde_json. Wall-clock
//! fields are grouped so reproducibility checks can mask them.

use serde::{Deserialize, Serialize};

use crate::archmodel::Architecture;
use crate::costmodel::ResourceProfile;
use crate::searchcore::{SearchTrace, StopReason};
use crate::spacegen::SearchSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSummary {
    pub extensive_size: usize,
    pub cropped_size: usize,
    /// |cropped| / |extensive| in percent.
    pub crop_percent: f64,
    pub t_bar_seconds: f64,
    pub e_bar_wh: f64,
}

impl SpaceSummary {
    pub fn new(extensive: &SearchSpace, cropped: &SearchSpace) -> Self {
        let crop_percent = if extensive.is_empty() {
            0.0
        } else {
            cropped.len() as f64 / extensive.len() as f64 * 100.0
        };
        SpaceSummary {
            extensive_size: extensive.len(),
            cropped_size: cropped.len(),
            crop_percent,
            t_bar_seconds: cropped.t_bar_seconds,
            e_bar_wh: cropped.e_bar_wh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub evaluations: usize,
    pub distinct_evaluations: usize,
    /// Distinct evaluations / |cropped space| in percent.
    pub explored_percent: f64,
    pub confirmations: Vec<(u32, u32, f64)>,
    pub outer_k_sequence: Vec<u32>,
    pub stop_reason: StopReason,
}

impl SearchSummary {
    pub fn new(trace: &SearchTrace, space_size: usize) -> Self {
        let distinct = trace.distinct_evaluations();
        SearchSummary {
            evaluations: trace.evaluations.len(),
            distinct_evaluations: distinct,
            explored_percent: if space_size == 0 {
                0.0
            } else {
                distinct as f64 / space_size as f64 * 100.0
            },
            confirmations: trace
                .confirmations
                .iter()
                .map(|c| (c.arch.k, c.arch.c, c.score))
                .collect(),
            outer_k_sequence: trace.outer_k_sequence.clone(),
            stop_reason: trace.stop_reason,
        }
    }
}

/// Wall-clock cost of the run; the only fields that differ between two runs
/// with identical seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub elapsed_seconds: f64,
    pub estimated_energy_wh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalTrainSummary {
    pub best_val_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub epochs_run: usize,
}

/// Full report of a search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub chosen_k: u32,
    pub chosen_c: u32,
    pub chosen_score: f64,
    pub profile: ResourceProfile,
    pub space: SpaceSummary,
    pub search: SearchSummary,
    pub cost: CostSummary,
    pub seed: u64,
    pub final_train: Option<FinalTrainSummary>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Zeroes every wall-clock field; what remains must be byte-identical
    /// across runs with the same seed and configuration.
    pub fn mask_wall_clock(&mut self) {
        self.cost.elapsed_seconds = 0.0;
        self.cost.estimated_energy_wh = 0.0;
        // Real evaluations also measure per-candidate wall time, which feeds
        // the calibrated bounds.
        self.space.t_bar_seconds = 0.0;
        self.space.e_bar_wh = 0.0;
    }

    pub fn to_human(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "chosen architecture   ({}, {})  score {:.4}\n",
            self.chosen_k, self.chosen_c, self.chosen_score
        ));
        out.push_str(&format!(
            "resources             ram {:.1} KiB  flash {:.1} KiB  mac {:.2} MM  train-mem {:.1} KiB\n",
            self.profile.ram_bytes as f64 / 1024.0,
            self.profile.flash_bytes as f64 / 1024.0,
            self.profile.macs as f64 / 1e6,
            self.profile.train_mem_bytes as f64 / 1024.0,
        ));
        out.push_str(&format!(
            "search space          {} extensive -> {} after crop ({:.0}%)\n",
            self.space.extensive_size, self.space.cropped_size, self.space.crop_percent
        ));
        out.push_str(&format!(
            "per-candidate bounds  t {:.3} s  e {:.6} Wh\n",
            self.space.t_bar_seconds, self.space.e_bar_wh
        ));
        out.push_str(&format!(
            "search                {} evaluations ({} distinct, {:.0}% explored), stop: {:?}\n",
            self.search.evaluations,
            self.search.distinct_evaluations,
            self.search.explored_percent,
            self.search.stop_reason
        ));
        out.push_str(&format!(
            "outer k sequence      {:?}\n",
            self.search.outer_k_sequence
        ));
        for (k, c, score) in &self.search.confirmations {
            out.push_str(&format!("  confirmed ({k}, {c}) at {score:.4}\n"));
        }
        out.push_str(&format!(
            "cost                  {:.1} s elapsed, {:.4} Wh estimated\n",
            self.cost.elapsed_seconds, self.cost.estimated_energy_wh
        ));
        if let Some(ft) = &self.final_train {
            out.push_str(&format!(
                "final training        val {:.4}{} over {} epochs\n",
                ft.best_val_accuracy,
                ft.test_accuracy
                    .map_or(String::new(), |t| format!("  test {t:.4}")),
                ft.epochs_run
            ));
        }
        out
    }
}

/// Report of a space inspection (no search).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceListing {
    pub members: Vec<(u32, u32)>,
    pub cropped_members: Vec<(u32, u32)>,
    pub summary: SpaceSummary,
}

impl SpaceListing {
    pub fn new(extensive: &SearchSpace, cropped: &SearchSpace) -> Self {
        SpaceListing {
            members: extensive.members().iter().map(|a| (a.k, a.c)).collect(),
            cropped_members: cropped.members().iter().map(|a| (a.k, a.c)).collect(),
            summary: SpaceSummary::new(extensive, cropped),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("listing serializes")
    }

    pub fn to_human(&self) -> String {
        let fmt_members = |members: &[(u32, u32)]| {
            members
                .iter()
                .map(|(k, c)| format!("({k},{c})"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        format!
            (
            "extensive space ({}): {}\ncropped space ({}, {:.0}%): {}\nper-candidate bounds: t {:.3} s, e {:.6} Wh\n",
            self.summary.extensive_size,
            fmt_members(&self.members),
            self.summary.cropped_size,
            self.summary.crop_percent,
            fmt_members(&self.cropped_members),
            self.summary.t_bar_seconds,
            self.summary.e_bar_wh,
        )
    }
}

/// Pretty profile printout shared by `estimate` and `search`.
pub fn profile_table(arch: Architecture, profile: &ResourceProfile) -> String {
    format!(
        "architecture ({}, {})\n  ram        {:>12} B  ({:.1} KiB)\n  flash      {:>12} B  ({:.1} KiB)\n  mac        {:>12}    ({:.2} MM)\n  train mem  {:>12} B  ({:.1} KiB)\n",
        arch.k,
        arch.c,
        profile.ram_bytes,
        profile.ram_bytes as f64 / 1024.0,
        profile.flash_bytes,
        profile.flash_bytes as f64 / 1024.0,
        profile.macs,
        profile.macs as f64 / 1e6,
        profile.train_mem_bytes,
        profile.train_mem_bytes as f64 / 1024.0,
    )
}
