//! The evaluation interface the search strategy drives, with memoization.

use std::collections::HashMap;
use std::sync::Arc;

use crate::archmodel::Architecture;
use crate::budget::BudgetLedger;
use crate::dataio::Dataset;

use super::train::{quick_evaluate, EvalResult, TrainConfig};
use super::EngineError;

/// Scores one architecture. Implementations must be deterministic for a
/// fixed seed.
pub trait Evaluator {
    fn evaluate(&mut self, arch: Architecture) -> Result<EvalResult, EngineError>;
    /// The seed the evaluation stream is keyed by (part of the cache key).
    fn seed(&self) -> u64;
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate(&mut self, arch: Architecture) -> Result<EvalResult, EngineError> {
        (**self).evaluate(arch)
    }

    fn seed(&self) -> u64 {
        (**self).seed()
    }
}

/// Real evaluator: quick-trains each candidate on the given dataset.
pub struct TrainingEvaluator<'d> {
    pub dataset: &'d Dataset,
    pub cfg: TrainConfig,
    pub ledger: Option<Arc<BudgetLedger>>,
}

impl Evaluator for TrainingEvaluator<'_> {
    fn evaluate(&mut self, arch: Architecture) -> Result<EvalResult, EngineError> {
        quick_evaluate(arch, self.dataset, &self.cfg, self.ledger.as_deref())
    }

    fn seed(&self) -> u64 {
        self.cfg.seed
    }
}

/// Memoizing wrapper: the first call per (k, c, seed) trains, repeats return
/// the stored result without touching the inner evaluator.
pub struct CachedEvaluator<E> {
    inner: E,
    enabled: bool,
    cache: HashMap<(u32, u32, u64), EvalResult>,
    /// Total evaluate() requests seen.
    pub requests: usize,
    /// Requests that reached the inner evaluator.
    pub inner_calls: usize,
}

impl<E: Evaluator> CachedEvaluator<E> {
    pub fn new(inner: E) -> Self {
        Self::with_enabled(inner, true)
    }

    pub fn with_enabled(inner: E, enabled: bool) -> Self {
        CachedEvaluator {
            inner,
            enabled,
            cache: HashMap::new(),
            requests: 0,
            inner_calls: 0,
        }
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    pub fn into_inner(self) -> E {
        self.inner
    }
}

impl<E: Evaluator> Evaluator for CachedEvaluator<E> {
    fn evaluate(&mut self, arch: Architecture) -> Result<EvalResult, EngineError> {
        self.requests += 1;
        let key = (arch.k, arch.c, self.inner.seed());
        if self.enabled {
            if let Some(hit) = self.cache.get(&key) {
                return Ok(hit.clone());
            }
        }
        self.inner_calls += 1;
        let result = self.inner.evaluate(arch)?;
        if self.enabled {
            self.cache.insert(key, result.clone());
        }
        Ok(result)
    }

    fn seed(&self) -> u64 {
        self.inner.seed()
    }
}
