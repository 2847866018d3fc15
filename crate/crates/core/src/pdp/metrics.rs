use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::Serialize;

use crate::policy::Outcome;

/// Histogram bucket upper bounds: 256 ns doubling up to ~1.07 s, plus an
/// overflow bucket.
const BUCKETS: usize = 24;
const FIRST_BOUND_LOG2: u32 = 8;

#[derive(Debug)]
pub struct Metrics {
    permit: AtomicU64,
    deny: AtomicU64,
    errors: AtomicU64,
    latency: [AtomicU64; BUCKETS + 1],
}

impl Default for Metrics {
    fn default() -> Self {
        Self {
            permit: AtomicU64::new(0),
            deny: AtomicU64::new(0),
            errors: AtomicU64::new(0),
            latency: std::array::from_fn(|_| AtomicU64::new(0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Bucket {
    /// Inclusive upper bound; `None` for the overflow bucket.
    pub le_ns: Option<u64>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MetricsSnapshot {
    pub permit: u64,
    pub deny: u64,
    pub errors: u64,
    pub eval_latency: Vec<Bucket>,
}

impl Metrics {
    pub fn record(&self, outcome: Outcome, eval: Duration) {
        match outcome {
            Outcome::Permit => &self.permit,
            Outcome::Deny => &self.deny,
        }
        .fetch_add(1, Ordering::Relaxed);
        let ns = eval.as_nanos().min(u64::MAX as u128) as u64;
        let idx = (0..BUCKETS)
            .find(|&i| ns <= 1u64 << (FIRST_BOUND_LOG2 + i as u32))
            .unwrap_or(BUCKETS);
        self.latency[idx].fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_error(&self) {
        self.errors.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        MetricsSnapshot {
            permit: self.permit.load(Ordering::Relaxed),
            deny: self.deny.load(Ordering::Relaxed),
            errors: self.errors.load(Ordering::Relaxed),
            eval_latency: self
                .latency
                .iter()
                .enumerate()
                .map(|(i, c)| Bucket {
                    le_ns: (i < BUCKETS).then(|| 1u64 << (FIRST_BOUND_LOG2 + i as u32)),
                    count: c.load(Ordering::Relaxed),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets() {
        let m = Metrics::default();
        m.record(Outcome::Permit, Duration::from_nanos(100));
        m.record(Outcome::Permit, Duration::from_nanos(300));
        m.record(Outcome::Deny, Duration::from_secs(5));
        let s = m.snapshot();
        assert_eq!((s.permit, s.deny), (2, 1));
        assert_eq!(s.eval_latency[0].count, 1);
        assert_eq!(
            s.eval_latency[1],
            Bucket {
                le_ns: Some(512),
                count: 1
            }
        );
        assert_eq!(s.eval_latency.last().unwrap().count, 1);
        assert_eq!(s.eval_latency.last().unwrap().le_ns, None);
    }
}
