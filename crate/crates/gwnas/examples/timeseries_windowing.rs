//! Window a labeled 1-D signal into square 2-D maps and quick-evaluate an
//! architecture on them — the path used for vibration-style sensor data.
//!
//!     cargo run --release --example timeseries_windowing

use std::fmt::Write as _;

use gwnas::archmodel::Architecture;
use gwnas::dataio::load_timeseries_csv;
use gwnas::nnengine::{quick_evaluate, TrainConfig};

fn main() {
    // Two synthetic machine conditions: a slow sine and a faster, rougher
    // one, 64 samples per window, reshaped to 8x8 maps.
    let window = 64;
    let mut csv = String::new();
    for segment in 0..60 {
        let label = segment % 2;
        for i in 0..window {
            let t = i as f64 / 8.0;
            let value = if label == 0 {
                (t * 1.1).sin()
            } else {
                (t * 3.7).sin() + 0.3 * (t * 9.1).sin()
            };
            writeln!(csv, "{value},{label}").unwrap();
        }
    }
    let path = std::env::temp_dir().join("gwnas-example-signal.csv");
    std::fs::write(&path, csv).unwrap();

    let load = load_timeseries_csv(&path, window, (8, 8)).unwrap();
    println!(
        "windowed {} samples into {} maps of {}x{} ({} dropped), {} classes",
        60 * window,
        load.dataset.len(),
        load.dataset.shape.height,
        load.dataset.shape.width,
        load.dropped_windows,
        load.dataset.num_classes,
    );

    // Time-series candidates are scored after longer quick training.
    let cfg = TrainConfig {
        epochs: 25,
        ..TrainConfig::quick_timeseries()
    };
    let arch = Architecture::new(4, 2).unwrap();
    let result = quick_evaluate(arch, &load.dataset, &cfg, None).unwrap();
    println!(
        "quick evaluation of {arch}: validation accuracy {:.4} in {:.2} s",
        result.val_accuracy, result.train_seconds
    );
    std::fs::remove_file(&path).ok();
}
