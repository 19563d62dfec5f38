//! The full pipeline with real quick training: generate a separable
//! synthetic dataset, build and crop the space for a small MCU target,
//! search with three-epoch evaluations, then train the winner.
//!
//!     cargo run --release --example search_real

use gwnas::cli::config::{example_config, DatasetSection, EvaluatorKind};
use gwnas::cli::execute_search;
use gwnas::dataio::{make_synthetic, SyntheticSpec};

fn main() {
    let mut cfg = example_config();
    cfg.seed = 42;
    cfg.target.preset = Some("l010rbt6".into());
    cfg.gateway.preset = None;
    cfg.gateway.mem_mib = Some(1); // keep the candidate pool desk-sized
    cfg.gateway.power_watts = Some(2.8);
    cfg.gateway.time_budget_seconds = Some(300.0);
    cfg.dataset = DatasetSection::Synthetic {
        generator: "separable-blobs".into(),
        samples: 500,
        height: 16,
        width: 16,
        channels: 1,
        seed: 0,
    };
    cfg.evaluator = EvaluatorKind::Real;
    cfg.final_train = true;
    let resolved = cfg.resolve().unwrap();

    let test_set = make_synthetic(&SyntheticSpec {
        generator: "separable-blobs".into(),
        samples: 200,
        height: 16,
        width: 16,
        channels: 1,
        seed: 999,
    })
    .unwrap();

    println!("searching (each evaluation trains for three epochs) ...");
    let run = execute_search(&resolved, Some(&test_set)).unwrap();
    print!("\n{}", run.report.to_human());
}
