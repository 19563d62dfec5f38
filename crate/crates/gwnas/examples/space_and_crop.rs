//! Build the extensive search space for an MCU target, calibrate the
//! per-candidate cost bounds with a surrogate, and crop it to a series of
//! shrinking budgets.
//!
//!     cargo run --example space_and_crop

use gwnas::archmodel::InputShape;
use gwnas::costmodel::OverheadConfig;
use gwnas::nnengine::{SurrogateEvaluator, SurrogateSpec};
use gwnas::spacegen::{
    build_extensive_space, calibrate_bounds, crop_space, mcu_preset, ConstraintSet, CropMode,
};

fn main() {
    let mcu = mcu_preset("l412kbu3").unwrap();
    let mut constraints = ConstraintSet {
        xi_ram_bytes: mcu.ram_kib * 1024,
        xi_flash_bytes: mcu.flash_kib * 1024,
        xi_mac: u64::MAX,
        xi_mem_bytes: 512 * 1024 * 1024,
        xi_time_seconds: f64::INFINITY,
        xi_energy_wh: f64::INFINITY,
        w_bar_watts: 2.8,
    };
    let shape = InputShape::new(50, 50, 3).unwrap();

    let mut space = build_extensive_space(&constraints, shape, 2, 16, &OverheadConfig::default());
    println!(
        "extensive space for {}: {} candidates, k up to {}",
        mcu.name,
        space.len(),
        space.members().iter().map(|a| a.k).max().unwrap()
    );

    // A surrogate stands in for training: 60 s per evaluation.
    let mut evaluator = SurrogateEvaluator::new(SurrogateSpec {
        fake_seconds: 60.0,
        ..SurrogateSpec::walkthrough()
    });
    let (t_bar, e_bar) = calibrate_bounds(&mut space, &mut evaluator, 2.8, u64::MAX).unwrap();
    println!("calibrated bounds: t = {t_bar} s, e = {e_bar:.6} Wh per candidate\n");

    let full_time = space.len() as f64 * t_bar;
    for fraction in [1.0, 2.0 / 3.0, 1.0 / 3.0, 0.1] {
        constraints.xi_time_seconds = full_time * fraction;
        constraints.xi_energy_wh = full_time * fraction * 2.8 / 3600.0;
        let cropped = crop_space(&space, &constraints, CropMode::Exact).unwrap();
        println!(
            "budget {:>6.0} s ({:>3.0}%): keep {:>3} of {} candidates ({:.0}%)",
            constraints.xi_time_seconds,
            fraction * 100.0,
            cropped.len(),
            space.len(),
            cropped.len() as f64 / space.len() as f64 * 100.0
        );
    }
}
