//! Final-train one architecture, export the weights to the flat GWNN
//! container, reload them, and verify the reloaded model scores
//! identically.
//!
//!     cargo run --release --example train_and_export

use gwnas::archmodel::{expand, Architecture};
use gwnas::dataio::{make_synthetic, split, SyntheticSpec};
use gwnas::nnengine::{final_train, from_gwnn_bytes, to_gwnn_bytes, train::accuracy, TrainConfig};

fn main() {
    let dataset = make_synthetic(&SyntheticSpec {
        generator: "checker".into(),
        samples: 300,
        height: 16,
        width: 16,
        channels: 1,
        seed: 11,
    })
    .unwrap();
    let (train_data, held_out) = split(&dataset, 0.2, 7).unwrap();

    let arch = Architecture::new(2, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 16,
        augment: false,
        ..TrainConfig::final_images()
    };
    println!(
        "training {arch} on {} checkerboard samples ...",
        train_data.len()
    );
    let outcome = final_train(arch, &train_data, Some(&held_out), &cfg, None).unwrap();
    println!(
        "best validation accuracy {:.4}, held-out accuracy {:.4}",
        outcome.best_val_accuracy,
        outcome.test_accuracy.unwrap()
    );

    let bytes = to_gwnn_bytes(&outcome.network);
    println!(
        "exported container: {} bytes, magic {:?}",
        bytes.len(),
        &bytes[..4]
    );

    let topology = expand(arch, dataset.shape, dataset.num_classes).unwrap();
    let reloaded = from_gwnn_bytes(topology, &bytes).unwrap();
    let replayed = accuracy(&reloaded, &held_out, cfg.batch_size).unwrap();
    println!("reloaded model held-out accuracy {replayed:.4}");
    assert_eq!(replayed, outcome.test_accuracy.unwrap());
}
