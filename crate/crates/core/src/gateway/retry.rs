use std::time::Duration;

use serde::{Deserialize, Serialize};

/// At most `max_attempts` tries; the delay before retry `i` (0-based) is
/// `base_delay * 2^i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Outcome of a single attempt.
pub(crate) enum Attempt<T, E> {
    Done(T),
    Retry(E),
    Fail(E),
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay.saturating_mul(1u32.checked_shl(retry).unwrap_or(u32::MAX))
    }

    /// Runs `op` until it succeeds, fails permanently, or attempts run out.
    /// Returns the last error together with the number of attempts made.
    pub(crate) fn run<T, E>(
        &self,
        mut op: impl FnMut() -> Attempt<T, E>,
        mut sleep: impl FnMut(Duration),
    ) -> Result<T, (E, u32)> {
        let max = self.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op() {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(e) => return Err((e, attempt)),
                Attempt::Retry(e) if attempt >= max => return Err((e, attempt)),
                Attempt::Retry(_) => {
                    let d = self.delay(attempt - 1);
                    log::debug!("attempt {attempt} failed, retrying in {d:?}");
                    sleep(d);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(n: u32) -> RetryPolicy {
        RetryPolicy {
            max_attempts: n,
            base_delay: Duration::from_millis(10),
        }
    }

    #[test]
    fn delays_double() {
        let p = policy(5);
        let ds: Vec<_> = (0..4).map(|i| p.delay(i).as_millis()).collect();
        assert_eq!(ds, [10, 20, 40, 80]);
    }

    #[test]
    fn succeeds_after_failures() {
        for fails in 0..4u32 {
            let mut calls = 0;
            let mut slept = Vec::new();
            let r = policy(4).run(
                || {
                    calls += 1;
                    if calls <= fails {
                        Attempt::Retry("boom")
                    } else {
                        Attempt::Done(calls)
                    }
                },
                |d| slept.push(d.as_millis()),
            );
            assert_eq!(r, Ok(fails + 1));
            let expected: Vec<u128> = (0..fails).map(|i| 10u128 << i).collect();
            assert_eq!(slept, expected);
        }
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let mut calls = 0;
        let r: Result<(), _> = policy(3).run(
            || {
                calls += 1;
                Attempt::Retry("boom")
            },
            |_| {},
        );
        assert_eq!(r, Err(("boom", 3)));
        assert_eq!(calls, 3);
    }

    #[test]
    fn permanent_failure_stops_immediately() {
        let mut calls = 0;
        let r: Result<(), _> = policy(5).run(
            || {
                calls += 1;
                Attempt::Fail("bad request")
            },
            |_| panic!("no sleep expected"),
        );
        assert_eq!(r, Err(("bad request", 1)));
    }
}
