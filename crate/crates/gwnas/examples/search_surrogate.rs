//! Run the bi-level search on a scripted accuracy surface and print every
//! move the strategy makes.
//!
//!     cargo run --example search_surrogate

use gwnas::archmodel::InputShape;
use gwnas::nnengine::{SurrogateEvaluator, SurrogateSpec};
use gwnas::searchcore::run_search;
use gwnas::spacegen::SearchSpace;

fn main() {
    let space = SearchSpace::from_members(
        SurrogateSpec::walkthrough_members(),
        InputShape::new(50, 50, 3).unwrap(),
        2,
        16,
    );
    let mut evaluator = SurrogateEvaluator::new(SurrogateSpec::walkthrough());
    let outcome = run_search(&space, &mut evaluator, None).unwrap();

    println!(
        "outer loop visited k = {:?}\n",
        outcome.trace.outer_k_sequence
    );
    for e in &outcome.trace.evaluations {
        let confirmed = outcome.trace.confirmations.iter().any(|c| c.arch == e.arch);
        println!(
            "  evaluated {}  score {:.2}{}",
            e.arch,
            e.score,
            if confirmed { "   <- confirmed" } else { "" }
        );
    }
    println!(
        "\nresult: {} at {:.2}, stop: {:?}, explored {}/{} candidates",
        outcome.best,
        outcome.best_score,
        outcome.trace.stop_reason,
        outcome.trace.distinct_evaluations(),
        space.len()
    );
}
