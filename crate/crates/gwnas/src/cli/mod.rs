//! Operator entry point: subcommands, the end-to-end pipeline, structured
//! reports, and architecture export.
//!
//! Subcommands: `space`, `search`, `estimate`, `train`, `calibrate`.
//! Exit codes: 0 success (including budget-stopped searches), 2 config
//! error, 3 data error, 4 no feasible architecture. Outputs are written
//! only under the chosen output directory (`--out`, the `GWNAS_OUT_DIR`
//! environment variable, or `output_dir` in the config, in that order).

pub mod config;
pub mod report;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::archmodel::{expand, Architecture, InputShape};
use crate::budget::{spawn_monitor, BudgetLedger, MonotonicClock};
use crate::costmodel::{profile, OverheadConfig};
use crate::dataio::{
    load_cifar10_binary, load_raw_tensor, load_timeseries_csv, make_synthetic, subsample,
    DataError, Dataset, SyntheticSpec,
};
use crate::nnengine::{
    final_train, save_gwnn, CachedEvaluator, EngineError, Evaluator, Network, SurrogateEvaluator,
    TrainingEvaluator,
};
use crate::searchcore::{run_search, SearchError, SearchTrace, StopReason};
use crate::spacegen::{
    build_extensive_space, calibrate_bounds, crop_space, SearchSpace, SpaceError,
};

use config::{
    apply_override, ConfigError, DatasetSection, EvaluatorKind, ResolvedConfig, RunConfig,
};
use report::{
    profile_table, CostSummary, FinalTrainSummary, Report, SearchSummary, SpaceListing,
    SpaceSummary,
};

pub const OUTPUT_DIR_ENV: &str = "GWNAS_OUT_DIR";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(ConfigError),
    Data(DataError),
    NoFeasibleArchitecture,
    Internal(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Data(e) => write!(f, "data error: {e}"),
            CliError::NoFeasibleArchitecture => {
                write!(f, "no feasible architecture for the given constraints")
            }
            CliError::Internal(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e)
    }
}

impl From<SpaceError> for CliError {
    fn from(e: SpaceError) -> Self {
        match e {
            SpaceError::EmptySpace => CliError::NoFeasibleArchitecture,
            SpaceError::CalibrationMemory { .. } | SpaceError::NonPositiveBound { .. } => {
                CliError::Config(ConfigError {
                    path: "gateway".into(),
                    message: e.to_string(),
                })
            }
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::EmptySpace | SearchError::StartNotInSpace => {
                CliError::NoFeasibleArchitecture
            }
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Data(d) => CliError::Data(d),
            other => CliError::Internal(other.to_string()),
        }
    }
}

pub fn exit_code(e: &CliError) -> i32 {
    match e {
        CliError::Usage(_) | CliError::Config(_) => 2,
        CliError::Data(_) => 3,
        CliError::NoFeasibleArchitecture => 4,
        CliError::Internal(_) => 1,
    }
}

/// Loads the dataset a config section points at.
pub fn load_dataset(section: &DatasetSection) -> Result<Dataset, CliError> {
    match section {
        DatasetSection::Synthetic {
            generator,
            samples,
            height,
            width,
            channels,
            seed,
        } => Ok(make_synthetic(&SyntheticSpec {
            generator: generator.clone(),
            samples: *samples,
            height: *height,
            width: *width,
            channels: *channels,
            seed: *seed,
        })?),
        DatasetSection::Cifar10 { paths } => Ok(load_cifar10_binary(paths)?),
        DatasetSection::Gwt1 { path } => Ok(load_raw_tensor(path)?),
        DatasetSection::TimeseriesCsv {
            path,
            window,
            reshape,
        } => {
            let load = load_timeseries_csv(path, *window, (reshape[0], reshape[1]))?;
            if load.dropped_windows > 0 {
                eprintln!(
                    "note: dropped {} window(s) straddling label changes",
                    load.dropped_windows
                );
            }
            Ok(load.dataset)
        }
    }
}

fn make_evaluator<'d>(
    resolved: &ResolvedConfig,
    search_data: &'d Dataset,
    ledger: &Arc<BudgetLedger>,
) -> CachedEvaluator<Box<dyn Evaluator + 'd>> {
    let inner: Box<dyn Evaluator + 'd> = match resolved.evaluator {
        EvaluatorKind::Real => Box::new(TrainingEvaluator {
            dataset: search_data,
            cfg: resolved.quick.clone(),
            ledger: Some(Arc::clone(ledger)),
        }),
        EvaluatorKind::Surrogate => Box::new(SurrogateEvaluator::new(resolved.surrogate.clone())),
    };
    CachedEvaluator::new(inner)
}

/// Everything a `search` run produces.
#[derive(Debug)]
pub struct SearchRun {
    pub report: Report,
    pub trace: SearchTrace,
    pub topology_text: String,
    /// Present when the configuration asked for final training.
    pub network: Option<Network>,
}

/// The end-to-end pipeline: load data, build the extensive space, calibrate
/// the per-candidate bounds, crop to the budgets, search under the watchdog,
/// and optionally train the winner on the full schedule.
///
/// Budget exhaustion is a successful run with the stop reason recorded. A
/// cropped space too small for even one evaluation yields the smallest
/// feasible architecture with zero evaluations.
pub fn execute_search(
    resolved: &ResolvedConfig,
    test_set: Option<&Dataset>,
) -> Result<SearchRun, CliError> {
    let dataset = load_dataset(&resolved.dataset)?;
    let constraints = resolved.constraints;
    constraints.validate().map_err(CliError::from)?;

    let ledger = Arc::new(BudgetLedger::start(
        Arc::new(MonotonicClock::new()),
        constraints.w_bar_watts,
        constraints.xi_time_seconds,
        constraints.xi_energy_wh,
    ));
    let monitor = spawn_monitor(Arc::clone(&ledger), std::time::Duration::from_millis(100));

    let mut extensive = build_extensive_space(
        &constraints,
        dataset.shape,
        dataset.num_classes,
        resolved.quick.batch_size,
        &resolved.overheads,
    );
    if extensive.is_empty() {
        return Err(CliError::NoFeasibleArchitecture);
    }

    let fraction = resolved.effective_search_fraction(dataset.len());
    let search_data = subsample(&dataset, fraction, resolved.seed);
    let mut evaluator = make_evaluator(resolved, &search_data, &ledger);

    calibrate_bounds(
        &mut extensive,
        &mut evaluator,
        constraints.w_bar_watts,
        constraints.xi_mem_bytes,
    )?;
    let cropped = crop_space(&extensive, &constraints, resolved.crop_mode)?;

    let (best, best_score, trace) = if cropped.is_empty() {
        // Even a single evaluation exceeds a budget: report the smallest
        // feasible architecture without searching.
        let reason = if constraints.xi_time_seconds / extensive.t_bar_seconds < 1.0 {
            StopReason::TimeBudget
        } else {
            StopReason::EnergyBudget
        };
        let start = extensive.members()[0];
        (
            start,
            0.0,
            SearchTrace {
                evaluations: vec![],
                confirmations: vec![],
                stop_reason: reason,
                outer_k_sequence: vec![],
            },
        )
    } else {
        let outcome = run_search(&cropped, &mut evaluator, Some(&ledger))?;
        (outcome.best, outcome.best_score, outcome.trace)
    };
    drop(monitor);

    let chosen_profile = profile(
        best,
        dataset.shape,
        dataset.num_classes,
        resolved.quick.batch_size,
        &resolved.overheads,
    )
    .map_err(|e| CliError::Internal(e.to_string()))?;
    let topology = expand(best, dataset.shape, dataset.num_classes)
        .map_err(|e| CliError::Internal(e.to_string()))?;

    // Final training runs on the full training data, outside the search
    // budget (the budgets bound the search itself).
    let (network, final_summary) = if resolved.final_train {
        let outcome = final_train(best, &dataset, test_set, &resolved.final_schedule, None)?;
        let summary = FinalTrainSummary {
            best_val_accuracy: outcome.best_val_accuracy,
            test_accuracy: outcome.test_accuracy,
            epochs_run: outcome.epochs_run,
        };
        (Some(outcome.network), Some(summary))
    } else {
        (None, None)
    };

    let (elapsed_seconds, estimated_energy_wh) = ledger.elapsed_and_energy();
    let report = Report {
        chosen_k: best.k,
        chosen_c: best.c,
        chosen_score: best_score,
        profile: chosen_profile,
        space: SpaceSummary::new(&extensive, &cropped),
        search: SearchSummary::new(&trace, cropped.len()),
        cost: CostSummary {
            elapsed_seconds,
            estimated_energy_wh,
        },
        seed: resolved.seed,
        final_train: final_summary,
    };
    Ok(SearchRun {
        report,
        topology_text: topology.to_text(),
        trace,
        network,
    })
}

/// Builds, calibrates, and crops the space without searching.
pub fn inspect_space(resolved: &ResolvedConfig) -> Result<(SearchSpace, SearchSpace), CliError> {
    let dataset = load_dataset(&resolved.dataset)?;
    let constraints = resolved.constraints;
    constraints.validate().map_err(CliError::from)?;
    let mut extensive = build_extensive_space(
        &constraints,
        dataset.shape,
        dataset.num_classes,
        resolved.quick.batch_size,
        &resolved.overheads,
    );
    if extensive.is_empty() {
        return Err(CliError::NoFeasibleArchitecture);
    }
    let ledger = Arc::new(BudgetLedger::start(
        Arc::new(MonotonicClock::new()),
        constraints.w_bar_watts,
        f64::INFINITY,
        f64::INFINITY,
    ));
    let fraction = resolved.effective_search_fraction(dataset.len());
    let search_data = subsample(&dataset, fraction, resolved.seed);
    let mut evaluator = make_evaluator(resolved, &search_data, &ledger);
    calibrate_bounds(
        &mut extensive,
        &mut evaluator,
        constraints.w_bar_watts,
        constraints.xi_mem_bytes,
    )?;
    let cropped = crop_space(&extensive, &constraints, resolved.crop_mode)?;
    Ok((extensive, cropped))
}

// --- argument plumbing -------------------------------------------------------

struct Args {
    config_path: Option<String>,
    out_dir: Option<String>,
    arch: Option<(u32, u32)>,
    shape: Option<(usize, usize, usize)>,
    classes: Option<usize>,
    batch: usize,
    overrides: Vec<(String, String)>,
}

fn parse_args(args: &[String]) -> Result<Args, CliError> {
    let mut parsed = Args {
        config_path: None,
        out_dir: None,
        arch: None,
        shape: None,
        classes: None,
        batch: 16,
        overrides: Vec::new(),
    };
    let mut i = 0;
    let usage = |flag: &str| CliError::Usage(format!("{flag} expects a value"));
    while i < args.len() {
        let flag = args[i].as_str();
        let mut value = || -> Result<String, CliError> {
            i += 1;
            args.get(i).cloned().ok_or_else(|| usage(flag))
        };
        match flag {
            "--config" => parsed.config_path = Some(value()?),
            "--out" => parsed.out_dir = Some(value()?),
            "--arch" => {
                let v = value()?;
                let (k, c) = v
                    .split_once(',')
                    .ok_or_else(|| CliError::Usage("--arch expects K,C".into()))?;
                parsed.arch = Some((
                    k.trim()
                        .parse()
                        .map_err(|_| CliError::Usage("--arch expects K,C".into()))?,
                    c.trim()
                        .parse()
                        .map_err(|_| CliError::Usage("--arch expects K,C".into()))?,
                ));
            }
            "--shape" => {
                let v = value()?;
                let dims: Vec<usize> = v
                    .split('x')
                    .map(|d| d.trim().parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| CliError::Usage("--shape expects HxWxC".into()))?;
                if dims.len() != 3 {
                    return Err(CliError::Usage("--shape expects HxWxC".into()));
                }
                parsed.shape = Some((dims[0], dims[1], dims[2]));
            }
            "--classes" => {
                parsed.classes = Some(
                    value()?
                        .parse()
                        .map_err(|_| CliError::Usage("--classes expects an integer".into()))?,
                );
            }
            "--batch" => {
                parsed.batch = value()?
                    .parse()
                    .map_err(|_| CliError::Usage("--batch expects an integer".into()))?;
            }
            "--set" => {
                let v = value()?;
                let (key, val) = v
                    .split_once('=')
                    .ok_or_else(|| CliError::Usage("--set expects key=value".into()))?;
                parsed.overrides.push((key.to_string(), val.to_string()));
            }
            other => {
                return Err(CliError::Usage(format!("unknown flag {other:?}")));
            }
        }
        i += 1;
    }
    Ok(parsed)
}

fn load_config(parsed: &Args) -> Result<(RunConfig, ResolvedConfig), CliError> {
    let path = parsed
        .config_path
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config <file> is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(ConfigError {
            path: path.clone(),
            message: e.to_string(),
        })
    })?;
    let mut cfg = RunConfig::from_json(&text)?;
    for (key, value) in &parsed.overrides {
        apply_override(&mut cfg, key, value)?;
    }
    let resolved = cfg.resolve()?;
    Ok((cfg, resolved))
}

fn output_dir(parsed: &Args, resolved: Option<&ResolvedConfig>) -> PathBuf {
    if let Some(dir) = &parsed.out_dir {
        return PathBuf::from(dir);
    }
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    if let Some(dir) = resolved.and_then(|r| r.output_dir.clone()) {
        return dir;
    }
    PathBuf::from("gwnas-out")
}

fn write_output(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(dir.join(name), content))
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", dir.join(name).display())))
}

// --- subcommands -------------------------------------------------------------

fn cmd_estimate(parsed: &Args) -> Result<(), CliError> {
    let (k, c) = parsed
        .arch
        .ok_or_else(|| CliError::Usage("estimate needs --arch K,C".into()))?;
    let (h, w, ch) = parsed
        .shape
        .ok_or_else(|| CliError::Usage("estimate needs --shape HxWxC".into()))?;
    let classes = parsed
        .classes
        .ok_or_else(|| CliError::Usage("estimate needs --classes N".into()))?;
    let overheads = match &parsed.config_path {
        Some(_) => load_config(parsed)?.1.overheads,
        None => OverheadConfig::default(),
    };
    let to_config_error = |e: crate::archmodel::ArchError| {
        CliError::Config(ConfigError {
            path: "--arch/--shape".into(),
            message: e.to_string(),
        })
    };
    let arch = Architecture::new(k, c).map_err(to_config_error)?;
    let shape = InputShape::new(h, w, ch).map_err(to_config_error)?;
    let topology = expand(arch, shape, classes).map_err(to_config_error)?;
    let p = profile(arch, shape, classes, parsed.batch, &overheads).map_err(to_config_error)?;
    print!("{}", profile_table(arch, &p));
    println!();
    print!("{}", topology.to_text());
    Ok(())
}

fn cmd_space(parsed: &Args) -> Result<(), CliError> {
    let (_, resolved) = load_config(parsed)?;
    let (extensive, cropped) = inspect_space(&resolved)?;
    let listing = SpaceListing::new(&extensive, &cropped);
    let dir = output_dir(parsed, Some(&resolved));
    write_output(&dir, "space.json", &listing.to_json())?;
    print!("{}", listing.to_human());
    println!("written: {}", dir.join("space.json").display());
    Ok(())
}

fn cmd_calibrate(parsed: &Args) -> Result<(), CliError> {
    let (_, resolved) = load_config(parsed)?;
    let (extensive, _) = inspect_space(&resolved)?;
    let largest = extensive
        .max_train_param_member()
        .ok_or(CliError::NoFeasibleArchitecture)?;
    let doc = serde_json::json!({
        "architecture": [largest.k, largest.c],
        "t_bar_seconds": extensive.t_bar_seconds,
        "e_bar_wh": extensive.e_bar_wh,
    });
    let dir = output_dir(parsed, Some(&resolved));
    write_output(
        &dir,
        "calibrate.json",
        &serde_json::to_string_pretty(&doc).unwrap(),
    )?;
    println!(
        "calibrated on ({}, {}): t = {:.3} s per evaluation, e = {:.6} Wh",
        largest.k, largest.c, extensive.t_bar_seconds, extensive.e_bar_wh
    );
    Ok(())
}

fn cmd_search(parsed: &Args) -> Result<(), CliError> {
    let (_, resolved) = load_config(parsed)?;
    let run = execute_search(&resolved, None)?;
    let dir = output_dir(parsed, Some(&resolved));
    write_output(&dir, "report.json", &run.report.to_json())?;
    write_output(&dir, "report.txt", &run.report.to_human())?;
    write_output(
        &dir,
        "trace.json",
        &serde_json::to_string_pretty(&run.trace).unwrap(),
    )?;
    write_output(&dir, "topology.txt", &run.topology_text)?;
    if let Some(net) = &run.network {
        save_gwnn(net, dir.join("weights.gwnn")).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    print!("{}", run.report.to_human());
    println!("written: {}", dir.display());
    Ok(())
}

fn cmd_train(parsed: &Args) -> Result<(), CliError> {
    let (_, resolved) = load_config(parsed)?;
    let (k, c) = parsed
        .arch
        .ok_or_else(|| CliError::Usage("train needs --arch K,C".into()))?;
    let arch = Architecture::new(k, c).map_err(|e| {
        CliError::Config(ConfigError {
            path: "--arch".into(),
            message: e.to_string(),
        })
    })?;
    let dataset = load_dataset(&resolved.dataset)?;
    let outcome = final_train(arch, &dataset, None, &resolved.final_schedule, None)?;
    let topology = expand(arch, dataset.shape, dataset.num_classes).map_err(|e| {
        CliError::Config(ConfigError {
            path: "--arch".into(),
            message: e.to_string(),
        })
    })?;
    let dir = output_dir(parsed, Some(&resolved));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))?;
    save_gwnn(&outcome.network, dir.join("weights.gwnn")).map_err(|e| match e {
        EngineError::Io(io) => CliError::Internal(format!("cannot write weights: {io}")),
        other => CliError::Internal(other.to_string()),
    })?;
    write_output(&dir, "topology.txt", &topology.to_text())?;
    let doc = serde_json::json!({
        "architecture": [arch.k, arch.c],
        "best_val_accuracy": outcome.best_val_accuracy,
        "epochs_run": outcome.epochs_run,
        "train_seconds": outcome.train_seconds,
    });
    write_output(
        &dir,
        "train.json",
        &serde_json::to_string_pretty(&doc).unwrap(),
    )?;
    println!(
        "trained ({}, {}): best validation accuracy {:.4} over {} epochs",
        arch.k, arch.c, outcome.best_val_accuracy, outcome.epochs_run
    );
    println!("written: {}", dir.display());
    Ok(())
}

const HELP: &str = "\
gwnas - budget-aware neural architecture search for MCU sensor nodes

usage: gwnas <command> [flags]

commands:
  estimate   resource profile and layer table for one architecture
             --arch K,C --shape HxWxC --classes N [--batch N] [--config FILE]
  space      build, calibrate, and crop the search space (no search)
             --config FILE [--out DIR] [--set key=value ...]
  calibrate  measure the per-evaluation time/energy bounds
             --config FILE [--set key=value ...]
  search     run the full pipeline under the time/energy watchdog
             --config FILE [--out DIR] [--set key=value ...]
  train      train one architecture on the final schedule, export weights
             --config FILE --arch K,C [--out DIR] [--set key=value ...]

overrides (--set): seed, evaluator, time-budget-s, energy-budget-wh,
                   search-fraction, final-train, crop-mode

exit codes: 0 success (budget-stopped searches included),
            2 configuration error, 3 data error, 4 no feasible architecture

environment: GWNAS_OUT_DIR overrides the config's output directory;
             the --out flag overrides both.
";

/// Top-level dispatcher. Returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    let Some(command) = args.first().map(String::as_str) else {
        eprint!("{HELP}");
        return 2;
    };
    if command == "--help" || command == "-h" || command == "help" {
        print!("{HELP}");
        return 0;
    }
    let parsed = match parse_args(&args[1..]) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}");
            return exit_code(&e);
        }
    };
    let result = match command {
        "estimate" => cmd_estimate(&parsed),
        "space" => cmd_space(&parsed),
        "calibrate" => cmd_calibrate(&parsed),
        "search" => cmd_search(&parsed),
        "train" => cmd_train(&parsed),
        other => Err(CliError::Usage(format!(
            "unknown command {other:?}; try --help"
        ))),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            exit_code(&e)
        }
    }
}
