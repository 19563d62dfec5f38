//! Derivative-free bi-level search over the (k, c) plane.
//!
//! The inner level scans building-cell counts at a fixed kernel count k,
//! keeping the best-scoring c (ties go to the smaller network). The outer
//! level proposes new kernel counts by adding a variable increment
//! floor(2^-beta * k) to the last confirmed k: the increment doubles k while
//! candidates keep improving, and decays once one is rejected, until it
//! reaches zero and the last confirmed candidate is returned. A candidate is
//! confirmed only on strict improvement, so equal scores keep the smaller
//! solution. The search is greedy: the returned architecture maximizes the
//! score over everything it evaluated, which need not be the whole space.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archmodel::Architecture;
use crate::budget::{BudgetBreach, BudgetLedger};
use crate::nnengine::{EngineError, Evaluator};
use crate::spacegen::SearchSpace;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("cannot search an empty space")]
    EmptySpace,
    #[error("the starting point (1, 0) is not in the search space")]
    StartNotInSpace,
    #[error("inner scan requires ({k}, 0) to be in the search space")]
    RowNotInSpace { k: u32 },
    #[error(transparent)]
    Eval(#[from] EngineError),
}

/// Why the search ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Natural termination: the outer-loop increment reached zero.
    IncrementZero,
    /// The watchdog latched the time budget.
    TimeBudget,
    /// The watchdog latched the energy budget.
    EnergyBudget,
    /// Natural termination after every member of the space was evaluated.
    SpaceExhausted,
}

impl From<BudgetBreach> for StopReason {
    fn from(b: BudgetBreach) -> Self {
        match b {
            BudgetBreach::TimeBudget => StopReason::TimeBudget,
            BudgetBreach::EnergyBudget => StopReason::EnergyBudget,
        }
    }
}

/// One scored candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub arch: Architecture,
    pub score: f64,
    /// Duration of this evaluation.
    pub wall_seconds: f64,
    /// Energy estimate for this evaluation at the gateway's peak power.
    pub energy_wh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confirmation {
    pub arch: Architecture,
    pub score: f64,
}

/// Full record of a search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub evaluations: Vec<Evaluation>,
    pub confirmations: Vec<Confirmation>,
    pub stop_reason: StopReason,
    /// Kernel counts proposed by the outer loop, in visiting order.
    pub outer_k_sequence: Vec<u32>,
}

impl SearchTrace {
    pub fn distinct_evaluations(&self) -> usize {
        let mut seen: Vec<(u32, u32)> = self
            .evaluations
            .iter()
            .map(|e| (e.arch.k, e.arch.c))
            .collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    pub fn best_evaluation(&self) -> Option<&Evaluation> {
        self.evaluations
            .iter()
            .max_by(|a, b| a.score.partial_cmp(&b.score).expect("scores are finite"))
    }
}

/// Mutable state of the outer loop, exposed for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub confirmed_k: u32,
    pub confirmed_c: u32,
    pub beta: u32,
    /// Latches to 1 at the first rejection and never resets.
    pub gamma: u8,
    pub best_score: f64,
}

/// Search result: the last confirmed candidate and the full trace.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: Architecture,
    pub best_score: f64,
    pub trace: SearchTrace,
    pub state: SearchState,
}

/// Result of scanning one k-row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub c_star: u32,
    pub score: f64,
    pub evaluations: Vec<Evaluation>,
    /// Set when the watchdog fired mid-scan; evaluations hold the partial
    /// results gathered before the stop.
    pub interrupted: Option<StopReason>,
}

fn record(
    evaluator: &mut dyn Evaluator,
    ledger: Option<&BudgetLedger>,
    arch: Architecture,
) -> Result<Evaluation, SearchError> {
    let result = evaluator.evaluate(arch)?;
    let wall = result.train_seconds;
    let energy = ledger.map_or(0.0, |l| wall * l.power_watts() / 3600.0);
    Ok(Evaluation {
        arch,
        score: result.val_accuracy,
        wall_seconds: wall,
        energy_wh: energy,
    })
}

/// Scans building-cell counts at fixed `k_bar` in ascending order, starting
/// from c = 0, over every (k_bar, c) in the space. Returns the best c with
/// ties broken toward smaller values. Polls the ledger before each
/// evaluation and stops early when it latches.
pub fn inner_scan(
    k_bar: u32,
    space: &SearchSpace,
    evaluator: &mut dyn Evaluator,
    ledger: Option<&BudgetLedger>,
) -> Result<ScanRow, SearchError> {
    if !space.contains(k_bar, 0) {
        return Err(SearchError::RowNotInSpace { k: k_bar });
    }
    let mut row = ScanRow {
        c_star: 0,
        score: f64::NEG_INFINITY,
        evaluations: Vec::new(),
        interrupted: None,
    };
    let mut c = 0u32;
    while space.contains(k_bar, c) {
        if let Some(breach) = ledger.and_then(|l| l.should_stop()) {
            row.interrupted = Some(breach.into());
            break;
        }
        let eval = record(evaluator, ledger, Architecture { k: k_bar, c })?;
        if eval.score > row.score {
            row.score = eval.score;
            row.c_star = c;
        }
        row.evaluations.push(eval);
        c += 1;
    }
    // A scan interrupted before its first evaluation carries no score.
    if row.evaluations.is_empty() {
        row.score = f64::NEG_INFINITY;
    }
    Ok(row)
}

/// Runs the full bi-level search over a (cropped) space. The space must
/// contain the starting point (1, 0). Returns the last confirmed candidate;
/// if the watchdog fires before any evaluation completes, that is (1, 0)
/// with a zero score.
pub fn run_search(
    space: &SearchSpace,
    evaluator: &mut dyn Evaluator,
    ledger: Option<&BudgetLedger>,
) -> Result<SearchOutcome, SearchError> {
    if space.is_empty() {
        return Err(SearchError::EmptySpace);
    }
    if !space.contains(1, 0) {
        return Err(SearchError::StartNotInSpace);
    }

    let mut state = SearchState {
        confirmed_k: 1,
        confirmed_c: 0,
        beta: 0,
        gamma: 0,
        best_score: f64::NEG_INFINITY,
    };
    let mut trace = SearchTrace {
        evaluations: Vec::new(),
        confirmations: Vec::new(),
        stop_reason: StopReason::IncrementZero,
        outer_k_sequence: Vec::new(),
    };

    let mut k_bar = 1u32;
    let mut first_row = true;
    loop {
        // Outer-loop poll: a breach between scans also ends the search.
        if let Some(breach) = ledger.and_then(|l| l.should_stop()) {
            trace.stop_reason = breach.into();
            break;
        }

        let mut improved = false;
        if space.contains(k_bar, 0) {
            trace.outer_k_sequence.push(k_bar);
            let row = inner_scan(k_bar, space, evaluator, ledger)?;

            // The first row establishes the (1, 0) baseline as the initial
            // confirmed candidate before its own best-c comparison.
            if first_row {
                if let Some(base) = row.evaluations.first() {
                    state.best_score = base.score;
                    trace.confirmations.push(Confirmation {
                        arch: base.arch,
                        score: base.score,
                    });
                }
                first_row = false;
            }

            let row_score = row.score;
            let row_c = row.c_star;
            let had_evals = !row.evaluations.is_empty();
            trace.evaluations.extend(row.evaluations);

            if had_evals && row_score > state.best_score {
                state.confirmed_k = k_bar;
                state.confirmed_c = row_c;
                state.best_score = row_score;
                trace.confirmations.push(Confirmation {
                    arch: Architecture { k: k_bar, c: row_c },
                    score: row_score,
                });
                improved = true;
            }

            if let Some(reason) = row.interrupted {
                trace.stop_reason = reason;
                break;
            }
        }
        // A proposal outside the (cropped) space counts as a non-improvement.

        if !improved {
            state.gamma = 1;
        }
        state.beta += state.gamma as u32;
        let increment = if state.beta >= 32 {
            0
        } else {
            state.confirmed_k >> state.beta
        };
        if increment == 0 {
            trace.stop_reason = if trace.distinct_evaluations() == space.len() {
                StopReason::SpaceExhausted
            } else {
                StopReason::IncrementZero
            };
            break;
        }
        k_bar = state.confirmed_k + increment;
    }

    let best = Architecture {
        k: state.confirmed_k,
        c: state.confirmed_c,
    };
    let best_score = if state.best_score.is_finite() {
        state.best_score
    } else {
        0.0
    };
    Ok(SearchOutcome {
        best,
        best_score,
        trace,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archmodel::InputShape;
    use crate::budget::{Clock, FakeClock};
    use crate::nnengine::{SurrogateEvaluator, SurrogateSpec};

    fn arch(k: u32, c: u32) -> Architecture {
        Architecture::new(k, c).unwrap()
    }

    fn space_of(members: Vec<Architecture>) -> SearchSpace {
        SearchSpace::from_members(members, InputShape::new(50, 50, 3).unwrap(), 2, 16)
    }

    fn walkthrough_space() -> SearchSpace {
        space_of(SurrogateSpec::walkthrough_members())
    }

    #[test]
    fn inner_scan_returns_the_argmax_c() {
        let space = space_of(vec![arch(1, 0), arch(1, 1), arch(1, 2)]);
        let mut eval = SurrogateEvaluator::new(SurrogateSpec::from_table(
            &[(1, 0, 0.50), (1, 1, 0.60), (1, 2, 0.70)],
            1.0,
        ));
        let row = inner_scan(1, &space, &mut eval, None).unwrap();
        assert_eq!((row.c_star, row.score), (2, 0.70));
        assert_eq!(row.evaluations.len(), 3);
    }

    #[test]
    fn inner_scan_breaks_ties_toward_smaller_networks() {
        let space = space_of(vec![arch(2, 0), arch(2, 1), arch(2, 2)]);
        let mut eval = SurrogateEvaluator::new(SurrogateSpec::from_table(
            &[(2, 0, 0.5), (2, 1, 0.5), (2, 2, 0.5)],
            1.0,
        ));
        let row = inner_scan(2, &space, &mut eval, None).unwrap();
        assert_eq!(row.c_star, 0);
    }

    #[test]
    fn inner_scan_on_a_single_point_row() {
        let space = space_of(vec![arch(3, 0)]);
        let mut eval = SurrogateEvaluator::new(SurrogateSpec::from_table(&[(3, 0, 0.42)], 1.0));
        let row = inner_scan(3, &space, &mut eval, None).unwrap();
        assert_eq!((row.c_star, row.score), (0, 0.42));
    }

    #[test]
    fn inner_scan_requires_the_row_base() {
        let space = space_of(vec![arch(1, 0)]);
        let mut eval = SurrogateEvaluator::new(SurrogateSpec::walkthrough());
        assert!(matches!(
            inner_scan(5, &space, &mut eval, None),
            Err(SearchError::RowNotInSpace { k: 5 })
        ));
    }

    #[test]
    fn walkthrough_visits_the_expected_kernel_sequence() {
        let space = walkthrough_space();
        let mut eval = SurrogateEvaluator::new(SurrogateSpec::walkthrough());
        let outcome = run_search(&space, &mut eval, None).unwrap();
        assert_eq!(outcome.trace.outer_k_sequence, vec![1, 2, 4, 8, 6, 7]);
        assert_eq!(outcome.best, arch(7, 3));
        assert_eq!(outcome.best_score, 0.78);
        assert_eq!(outcome.trace.stop_reason, StopReason::IncrementZero);
        // Confirmations: the baseline plus five strict improvements.
        let confirmed: Vec<(u32, u32)> = outcome
            .trace
            .confirmations
            .iter()
            .map(|c| (c.arch.k, c.arch.c))
            .collect();
        assert_eq!(
            confirmed,
            vec![(1, 0), (1, 2), (2, 3), (4, 4), (6, 5), (7, 3)]
        );
    }

    #[test]
    fn constant_surface_returns_the_smallest_architecture() {
        let space = walkthrough_space();
        let mut table = SurrogateSpec::walkthrough();
        for v in table.surface.values_mut() {
            *v = 0.5;
        }
        let mut eval = SurrogateEvaluator::new(table);
        let outcome = run_search(&space, &mut eval, None).unwrap();
        assert_eq!(outcome.best, arch(1, 0));
        assert_eq!(outcome.best_score, 0.5);
    }

    #[test]
    fn returned_score_is_the_evaluated_maximum() {
        // Peak placed inside the space at a k the doubling pattern reaches.
        let space = walkthrough_space();
        let mut eval = SurrogateEvaluator::new(SurrogateSpec::walkthrough());
        let outcome = run_search(&space, &mut eval, None).unwrap();
        let max = outcome.trace.best_evaluation().unwrap().score;
        assert_eq!(outcome.best_score, max);
        assert!(outcome.trace.distinct_evaluations() <= space.len());
    }

    #[test]
    fn proposals_outside_a_cropped_space_are_non_improvements() {
        // Prefix crop: only k = 1 rows survive; the proposal k = 2 falls
        // outside and the increment decays to zero.
        let space = space_of(vec![arch(1, 0), arch(1, 1)]);
        let mut eval =
            SurrogateEvaluator::new(SurrogateSpec::from_table(&[(1, 0, 0.5), (1, 1, 0.7)], 1.0));
        let outcome = run_search(&space, &mut eval, None).unwrap();
        assert_eq!(outcome.best, arch(1, 1));
        assert_eq!(outcome.trace.outer_k_sequence, vec![1]);
        assert_eq!(outcome.trace.stop_reason, StopReason::SpaceExhausted);
    }

    #[test]
    fn determinism_fixed_seed_fixed_trace() {
        let space = walkthrough_space();
        let mut spec = SurrogateSpec::walkthrough();
        spec.noise_amplitude = 0.01;
        spec.seed = 9;
        let a = run_search(&space, &mut SurrogateEvaluator::new(spec.clone()), None).unwrap();
        let b = run_search(&space, &mut SurrogateEvaluator::new(spec), None).unwrap();
        assert_eq!(
            serde_json::to_string(&a.trace).unwrap(),
            serde_json::to_string(&b.trace).unwrap()
        );
    }

    #[test]
    fn watchdog_before_any_evaluation_returns_the_start_point() {
        let space = walkthrough_space();
        let clock = FakeClock::new();
        let ledger = BudgetLedger::start(clock.clone(), 2.8, 5.0, f64::INFINITY);
        clock.advance(10.0);
        let mut eval = SurrogateEvaluator::new(SurrogateSpec::walkthrough());
        let outcome = run_search(&space, &mut eval, Some(&ledger)).unwrap();
        assert_eq!(outcome.best, arch(1, 0));
        assert_eq!(outcome.best_score, 0.0);
        assert_eq!(outcome.trace.stop_reason, StopReason::TimeBudget);
        assert!(outcome.trace.evaluations.is_empty());
    }

    #[test]
    fn watchdog_mid_scan_keeps_partial_results() {
        let space = walkthrough_space();
        let clock = FakeClock::new();
        // Nine evaluations of 1 s fit an 8.5 s budget only partially: the
        // stop lands inside the second row.
        let ledger = BudgetLedger::start(clock.clone(), 2.8, 8.5, f64::INFINITY);
        let spec = SurrogateSpec {
            fake_seconds: 1.0,
            ..SurrogateSpec::walkthrough()
        };
        let mut eval = SurrogateEvaluator::with_clock(spec, clock.clone());
        let outcome = run_search(&space, &mut eval, Some(&ledger)).unwrap();
        assert_eq!(outcome.trace.stop_reason, StopReason::TimeBudget);
        assert_eq!(outcome.trace.evaluations.len(), 9);
        // The best confirmed candidate is still the evaluated argmax.
        let max = outcome.trace.best_evaluation().unwrap().score;
        assert_eq!(outcome.best_score, max);
        // Overshoot is bounded by one evaluation.
        assert!(clock.now_seconds() <= 8.5 + 1.0);
    }

    /// Random staircase spaces and random score tables; checks every search
    /// invariant the strategy promises.
    #[test]
    fn search_invariants_over_random_surfaces() {
        let mut rng = crate::rng::Rng::new(0x5ea_c4);
        for trial in 0..250 {
            // Non-increasing per-k c limits give an enumeration-closed space.
            let k_max = 1 + rng.below(12) as u32;
            let mut c_limit = rng.below(6) as i64;
            let mut members = Vec::new();
            let mut table = Vec::new();
            for k in 1..=k_max {
                if c_limit < 0 {
                    break;
                }
                for c in 0..=c_limit as u32 {
                    members.push(arch(k, c));
                    // Half the trials quantize scores to provoke ties.
                    let mut score = rng.next_f64();
                    if trial % 2 == 0 {
                        score = (score * 10.0).floor() / 10.0;
                    }
                    table.push((k, c, score));
                }
                c_limit -= rng.below(2) as i64;
            }
            if members.is_empty() || !members.contains(&arch(1, 0)) {
                continue;
            }
            let space = space_of(members);
            let spec = SurrogateSpec::from_table(&table, 1.0);
            let mut eval = SurrogateEvaluator::new(spec);
            let outcome = run_search(&space, &mut eval, None).unwrap();

            // Returned score equals the maximum over everything evaluated.
            let max = outcome.trace.best_evaluation().unwrap().score;
            assert_eq!(outcome.best_score, max, "trial {trial}");

            // Confirmed scores strictly increase.
            for pair in outcome.trace.confirmations.windows(2) {
                assert!(pair[1].score > pair[0].score, "trial {trial}");
            }

            // Every evaluation is a member; distinct count bounded by |S|.
            for e in &outcome.trace.evaluations {
                assert!(space.contains(e.arch.k, e.arch.c), "trial {trial}");
            }
            assert!(outcome.trace.distinct_evaluations() <= space.len());

            // The returned candidate is a member and was evaluated.
            assert!(space.contains(outcome.best.k, outcome.best.c));
        }
    }

    #[test]
    fn outer_loop_terminates_quickly_after_the_first_rejection() {
        let mut rng = crate::rng::Rng::new(0xde_ca7);
        for trial in 0..200 {
            let k_max = 1 + rng.below(40) as u32;
            let c_max = rng.below(4) as u32;
            let mut members = Vec::new();
            let mut table = Vec::new();
            for k in 1..=k_max {
                for c in 0..=c_max {
                    members.push(arch(k, c));
                    table.push((k, c, rng.next_f64()));
                }
            }
            let space = space_of(members);
            let mut eval = SurrogateEvaluator::new(SurrogateSpec::from_table(&table, 1.0));
            let outcome = run_search(&space, &mut eval, None).unwrap();

            // Count outer iterations after the first non-improvement; the
            // increment halves from there, so the tail is logarithmic in
            // the final confirmed k.
            let seq = &outcome.trace.outer_k_sequence;
            let confirmed: Vec<(u32, u32)> = outcome
                .trace
                .confirmations
                .iter()
                .map(|c| (c.arch.k, c.arch.c))
                .collect();
            let mut first_reject = None;
            let mut conf_idx = 1; // skip the (1, 0) baseline
            for (i, &k) in seq.iter().enumerate() {
                if conf_idx < confirmed.len() && confirmed[conf_idx].0 == k {
                    conf_idx += 1;
                } else if first_reject.is_none() {
                    first_reject = Some(i);
                }
            }
            if let Some(at) = first_reject {
                let tail = seq.len() - at;
                let bound = (outcome.best.k as f64).log2().ceil() as usize + 1;
                assert!(
                    tail <= bound,
                    "trial {trial}: tail {tail} exceeds bound {bound} (seq {seq:?})"
                );
            }
        }
    }
}
