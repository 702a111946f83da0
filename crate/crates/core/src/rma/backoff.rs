//! Bounded exponential backoff for contended lock words.
//!
//! Waits double from 1 us up to a 256 us ceiling. Waiting yields the
//! timeslice instead of spinning so that on oversubscribed machines the
//! lock holder gets scheduled; on an idle multicore box a yield returns
//! almost immediately and the loop degrades to a timed spin.

use std::time::{Duration, Instant};

const START_MICROS: u64 = 1;
const MAX_SHIFT: u32 = 8; // 1 us << 8 == 256 us ceiling

pub(crate) struct Backoff {
    attempt: u32,
}

impl Backoff {
    pub(crate) fn new() -> Self {
        Backoff { attempt: 0 }
    }

    /// Block for the current delay step, then escalate.
    pub(crate) fn wait(&mut self) {
        let delay = Duration::from_micros(START_MICROS << self.attempt.min(MAX_SHIFT));
        self.attempt = self.attempt.saturating_add(1);
        let start = Instant::now();
        while start.elapsed() < delay {
            std::thread::yield_now();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_escalates_and_saturates() {
        let mut b = Backoff::new();
        // Nine waits walk the full schedule (1..=256 us); the tenth must not
        // overflow the shift.
        let start = Instant::now();
        for _ in 0..10 {
            b.wait();
        }
        // Sum of the schedule is ~767 us; allow generous scheduling slack
        // but prove the waits are real.
        assert!(start.elapsed() >= Duration::from_micros(700));
    }
}
