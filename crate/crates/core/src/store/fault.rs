use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use super::{Result, StoreError};

/// Deterministic crash injection for recovery testing.
///
/// Every durable step inside `put_blob` and `commit` counts as one step. When
/// the counter reaches `crash_at_step` the operation fails with
/// [`StoreError::InjectedCrash`], optionally after writing a torn prefix of the
/// pending bytes, and the handle refuses all further work. Reopening the
/// directory then exercises recovery exactly as after a process kill.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultPlan {
    pub crash_at_step: u64,
    pub tear_writes: bool,
}

impl FaultPlan {
    pub fn crash_at(step: u64) -> Self {
        FaultPlan {
            crash_at_step: step,
            tear_writes: true,
        }
    }

    /// A plan that never fires; useful for counting steps.
    pub fn count_only() -> Self {
        FaultPlan {
            crash_at_step: u64::MAX,
            tear_writes: false,
        }
    }
}

#[derive(Debug)]
pub(crate) struct FaultInjector {
    plan: Option<FaultPlan>,
    steps: AtomicU64,
    crashed: AtomicBool,
}

impl FaultInjector {
    pub(crate) fn new(plan: Option<FaultPlan>) -> Self {
        FaultInjector {
            plan,
            steps: AtomicU64::new(0),
            crashed: AtomicBool::new(false),
        }
    }

    pub(crate) fn check_alive(&self) -> Result<()> {
        if self.crashed.load(Ordering::SeqCst) {
            Err(StoreError::Crashed)
        } else {
            Ok(())
        }
    }

    pub(crate) fn step(&self) -> Result<()> {
        self.step_with(|| {})
    }

    /// Count a step; if it is the crash step, run `tear` first.
    pub(crate) fn step_with(&self, tear: impl FnOnce()) -> Result<()> {
        self.check_alive()?;
        let Some(plan) = &self.plan else {
            return Ok(());
        };
        let n = self.steps.fetch_add(1, Ordering::SeqCst) + 1;
        if n == plan.crash_at_step {
            if plan.tear_writes {
                tear();
            }
            self.crashed.store(true, Ordering::SeqCst);
            return Err(StoreError::InjectedCrash(n));
        }
        Ok(())
    }

    pub(crate) fn steps_taken(&self) -> u64 {
        self.steps.load(Ordering::SeqCst)
    }
}
