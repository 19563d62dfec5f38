//! Watchdog behavior under tight budgets, demonstrated with an injected
//! clock: the same search stops on the time budget, the energy budget, or
//! runs to natural termination, and always returns a valid architecture.
//!
//!     cargo run --example budget_stop

use gwnas::archmodel::InputShape;
use gwnas::budget::{BudgetLedger, Clock, FakeClock};
use gwnas::nnengine::{SurrogateEvaluator, SurrogateSpec};
use gwnas::searchcore::run_search;
use gwnas::spacegen::SearchSpace;

fn main() {
    let power_watts = 2.8;
    let seconds_per_eval = 2.0;

    let cases = [
        ("9 s time budget", 9.0, f64::INFINITY),
        (
            "12 evaluations of energy",
            f64::INFINITY,
            12.0 * seconds_per_eval * power_watts / 3600.0,
        ),
        ("unbounded", f64::INFINITY, f64::INFINITY),
    ];

    for (label, time_s, energy_wh) in cases {
        let clock = FakeClock::new();
        let ledger = BudgetLedger::start(clock.clone(), power_watts, time_s, energy_wh);
        let space = SearchSpace::from_members(
            SurrogateSpec::walkthrough_members(),
            InputShape::new(50, 50, 3).unwrap(),
            2,
            16,
        );
        let spec = SurrogateSpec {
            fake_seconds: seconds_per_eval,
            ..SurrogateSpec::walkthrough()
        };
        let mut evaluator = SurrogateEvaluator::with_clock(spec, clock.clone());
        let outcome = run_search(&space, &mut evaluator, Some(&ledger)).unwrap();
        let (elapsed, energy) = ledger.elapsed_and_energy();
        println!(
            "{label:<26} -> {} at {:.2}, stop {:?}, {} evaluations, {:.0} s / {:.4} Wh consumed",
            outcome.best,
            outcome.best_score,
            outcome.trace.stop_reason,
            outcome.trace.evaluations.len(),
            elapsed,
            energy,
        );
        // The watchdog fires at evaluation boundaries, so the overshoot is
        // bounded by a single evaluation.
        assert!(clock.now_seconds() <= time_s + seconds_per_eval || time_s.is_infinite());
    }
}
