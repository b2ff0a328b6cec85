//! Shared retry policy for outbound HTTP calls.

use std::thread;
use std::time::Duration;

/// Retry an operation with exponential backoff. `attempts` is the total
/// number of tries; the delay doubles after each failure starting from
/// `base_delay`. Non-retryable errors short-circuit immediately.
pub(crate) fn retry_with_backoff<T, E>(
    attempts: u32,
    base_delay: Duration,
    mut op: impl FnMut() -> Result<T, Retry<E>>,
) -> Result<T, E> {
    let mut delay = base_delay;
    let mut tries = 0;
    loop {
        tries += 1;
        match op() {
            Ok(value) => return Ok(value),
            Err(Retry::Fatal(e)) => return Err(e),
            Err(Retry::Transient(e)) => {
                if tries >= attempts.max(1) {
                    return Err(e);
                }
                thread::sleep(delay);
                delay = delay.saturating_mul(2);
            }
        }
    }
}

/// Whether a failure is worth retrying.
pub(crate) enum Retry<E> {
    Transient(E),
    Fatal(E),
}
