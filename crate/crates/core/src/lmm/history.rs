use std::collections::VecDeque;

/// Most recent accepted states and their derivatives, newest first.
pub const HISTORY_CAPACITY: usize = 4;

/// Multistep memory. `state(0)`/`fval(0)` are `x_n`/`f_n`, `state(1)` is
/// `x_{n-1}` and so on. Entries are always pushed in time-aligned pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepHistory {
    states: VecDeque<Vec<f64>>,
    fvals: VecDeque<Vec<f64>>,
}

impl StepHistory {
    pub fn new(x0: Vec<f64>, f0: Vec<f64>) -> Self {
        let mut h = Self::default();
        h.push(x0, f0);
        h
    }

    pub fn push(&mut self, x: Vec<f64>, f: Vec<f64>) {
        debug_assert_eq!(x.len(), f.len());
        self.states.push_front(x);
        self.fvals.push_front(f);
        self.states.truncate(HISTORY_CAPACITY);
        self.fvals.truncate(HISTORY_CAPACITY);
    }

    pub fn filled(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.states.front().map_or(0, Vec::len)
    }

    pub fn state(&self, lag: usize) -> &[f64] {
        &self.states[lag]
    }

    pub fn fval(&self, lag: usize) -> &[f64] {
        &self.fvals[lag]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newest_first_and_bounded() {
        let mut h = StepHistory::new(vec![0.0], vec![10.0]);
        for k in 1..7 {
            h.push(vec![k as f64], vec![10.0 + k as f64]);
        }
        assert_eq!(h.filled(), HISTORY_CAPACITY);
        assert_eq!(h.state(0), &[6.0]);
        assert_eq!(h.fval(0), &[16.0]);
        assert_eq!(h.state(3), &[3.0]);
        assert_eq!(h.fval(3), &[13.0]);
    }
}
