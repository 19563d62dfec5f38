//! Execution-time and energy-budget monitor.
//!
//! Energy is modeled, not measured: the gateway is assumed to draw its peak
//! power `w` for the whole run, so the estimate is elapsed * w / 3600 Wh.
//! This is the same model the space-cropping step uses for its per-candidate
//! energy bound, which keeps cropping and runtime monitoring consistent.
//!
//! The ledger is shared between the monitor context and the search context.
//! The stop flag latches on the first breach and never resets within a run;
//! the search polls it at candidate and batch boundaries.

use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Monotonic time source; injectable so budget behavior is testable in
/// milliseconds with a scripted clock.
pub trait Clock: Send + Sync {
    /// Seconds since an arbitrary fixed origin; never decreases.
    fn now_seconds(&self) -> f64;
}

/// Wall clock backed by `Instant`.
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock {
            origin: Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_seconds(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Scripted clock for tests: time moves only when `advance` is called.
pub struct FakeClock {
    // f64 seconds stored as bits so advancing is lock-free.
    now_bits: AtomicU64,
}

impl FakeClock {
    pub fn new() -> Arc<Self> {
        Arc::new(FakeClock {
            now_bits: AtomicU64::new(0f64.to_bits()),
        })
    }

    pub fn advance(&self, seconds: f64) {
        assert!(seconds >= 0.0, "a monotonic clock cannot go backwards");
        let mut current = self.now_bits.load(Ordering::SeqCst);
        loop {
            let next = (f64::from_bits(current) + seconds).to_bits();
            match self
                .now_bits
                .compare_exchange(current, next, Ordering::SeqCst, Ordering::SeqCst)
            {
                Ok(_) => return,
                Err(observed) => current = observed,
            }
        }
    }
}

impl Clock for FakeClock {
    fn now_seconds(&self) -> f64 {
        f64::from_bits(self.now_bits.load(Ordering::SeqCst))
    }
}

/// Which budget was exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetBreach {
    TimeBudget,
    EnergyBudget,
}

const LATCH_NONE: u8 = 0;
const LATCH_TIME: u8 = 1;
const LATCH_ENERGY: u8 = 2;

/// Shared time/energy accounting for one run.
pub struct BudgetLedger {
    clock: Arc<dyn Clock>,
    started_at: f64,
    power_watts: f64,
    time_budget_s: f64,
    energy_budget_wh: f64,
    latch: AtomicU8,
}

impl BudgetLedger {
    /// Starts the ledger now. Budgets may be `f64::INFINITY` for unbounded.
    pub fn start(
        clock: Arc<dyn Clock>,
        power_watts: f64,
        time_budget_s: f64,
        energy_budget_wh: f64,
    ) -> Self {
        let started_at = clock.now_seconds();
        BudgetLedger {
            clock,
            started_at,
            power_watts,
            time_budget_s,
            energy_budget_wh,
            latch: AtomicU8::new(LATCH_NONE),
        }
    }

    pub fn power_watts(&self) -> f64 {
        self.power_watts
    }

    pub fn time_budget_seconds(&self) -> f64 {
        self.time_budget_s
    }

    pub fn energy_budget_wh(&self) -> f64 {
        self.energy_budget_wh
    }

    /// Elapsed wall time and the corresponding energy estimate.
    pub fn elapsed_and_energy(&self) -> (f64, f64) {
        let elapsed = (self.clock.now_seconds() - self.started_at).max(0.0);
        (elapsed, elapsed * self.power_watts / 3600.0)
    }

    /// Polls the budgets. Returns the breached budget, checking time first
    /// when both are exceeded at the same poll. The answer latches: once a
    /// breach is reported, every later call reports the same breach.
    pub fn should_stop(&self) -> Option<BudgetBreach> {
        match self.latch.load(Ordering::SeqCst) {
            LATCH_TIME => return Some(BudgetBreach::TimeBudget),
            LATCH_ENERGY => return Some(BudgetBreach::EnergyBudget),
            _ => {}
        }
        let (elapsed, energy) = self.elapsed_and_energy();
        let breach = if elapsed >= self.time_budget_s {
            LATCH_TIME
        } else if energy >= self.energy_budget_wh {
            LATCH_ENERGY
        } else {
            return None;
        };
        // First writer wins; a concurrent poll may have latched the other
        // budget a moment earlier.
        let _ = self
            .latch
            .compare_exchange(LATCH_NONE, breach, Ordering::SeqCst, Ordering::SeqCst);
        match self.latch.load(Ordering::SeqCst) {
            LATCH_TIME => Some(BudgetBreach::TimeBudget),
            LATCH_ENERGY => Some(BudgetBreach::EnergyBudget),
            _ => None,
        }
    }

    pub fn stop_requested(&self) -> bool {
        self.should_stop().is_some()
    }
}

/// Background watchdog that polls a ledger until it latches or the handle is
/// dropped. The search polls the ledger itself as well; the thread only
/// keeps the accounting warm while an evaluation runs.
pub struct MonitorHandle {
    stop: Arc<std::sync::atomic::AtomicBool>,
    thread: Option<std::thread::JoinHandle<()>>,
}

pub fn spawn_monitor(
    ledger: Arc<BudgetLedger>,
    poll_interval: std::time::Duration,
) -> MonitorHandle {
    let stop = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let stop_flag = Arc::clone(&stop);
    let thread = std::thread::spawn(move || {
        while !stop_flag.load(Ordering::SeqCst) {
            if ledger.should_stop().is_some() {
                break;
            }
            std::thread::sleep(poll_interval);
        }
    });
    MonitorHandle {
        stop,
        thread: Some(thread),
    }
}

impl Drop for MonitorHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
