//! Expand (k, c) points into layer topologies and estimate their resource
//! footprints.
//!
//!     cargo run --example estimate

use gwnas::archmodel::{expand, max_cells, Architecture, InputShape};
use gwnas::costmodel::{profile, OverheadConfig};

fn main() {
    let shape = InputShape::new(50, 50, 3).unwrap();
    let overheads = OverheadConfig::default();

    println!("input 50x50x3, up to {} building cells\n", max_cells(shape));

    for (k, c) in [(3u32, 4u32), (5, 5), (8, 3)] {
        let arch = Architecture::new(k, c).unwrap();
        let p = profile(arch, shape, 2, 16, &overheads).unwrap();
        println!(
            "({k}, {c}): ram {:>6.1} KiB   flash {:>6.1} KiB   mac {:>5.2} MM   train {:>8.1} KiB",
            p.ram_bytes as f64 / 1024.0,
            p.flash_bytes as f64 / 1024.0,
            p.macs as f64 / 1e6,
            p.train_mem_bytes as f64 / 1024.0,
        );
    }

    let arch = Architecture::new(8, 3).unwrap();
    let topology = expand(arch, shape, 2).unwrap();
    println!("\nlayer table for (8, 3):\n{}", topology.to_text());
}
