//! Per-thread call counters for structural assertions in tests.
//!
//! Counters are thread-local so concurrently running tests do not see each
//! other's calls. They only count calls made on the current thread.

use std::cell::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Counter {
    Kron,
    ImplicitStep,
    BlockDiagAssemble,
}

thread_local! {
    static COUNTS: [Cell<u64>; 3] = const { [Cell::new(0), Cell::new(0), Cell::new(0)] };
}

fn slot(c: Counter) -> usize {
    match c {
        Counter::Kron => 0,
        Counter::ImplicitStep => 1,
        Counter::BlockDiagAssemble => 2,
    }
}

pub(crate) fn bump(c: Counter) {
    COUNTS.with(|cs| {
        let cell = &cs[slot(c)];
        cell.set(cell.get() + 1);
    });
}

/// Number of calls recorded for `c` on this thread since the last reset.
pub fn count(c: Counter) -> u64 {
    COUNTS.with(|cs| cs[slot(c)].get())
}

pub fn reset() {
    COUNTS.with(|cs| cs.iter().for_each(|c| c.set(0)));
}
