//! Per-provider request rate limiting.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Token bucket keyed by provider name. `admit` blocks the calling thread
/// until a request slot is available, serializing admission per provider.
pub struct RateLimiter {
    requests_per_minute: u32,
    buckets: Mutex<HashMap<String, Bucket>>,
}

struct Bucket {
    tokens: f64,
    last_refill: Instant,
}

impl RateLimiter {
    pub fn new(requests_per_minute: u32) -> Self {
        assert!(requests_per_minute > 0);
        RateLimiter {
            requests_per_minute,
            buckets: Mutex::new(HashMap::new()),
        }
    }

    /// Block until the provider's bucket has a token, then consume it.
    pub fn admit(&self, provider: &str) {
        loop {
            let wait = {
                let mut buckets = self.buckets.lock().unwrap();
                let bucket = buckets.entry(provider.to_string()).or_insert(Bucket {
                    tokens: self.requests_per_minute as f64,
                    last_refill: Instant::now(),
                });
                let refill_rate = self.requests_per_minute as f64 / 60.0;
                let elapsed = bucket.last_refill.elapsed().as_secs_f64();
                bucket.tokens = (bucket.tokens + elapsed * refill_rate)
                    .min(self.requests_per_minute as f64);
                bucket.last_refill = Instant::now();
                if bucket.tokens >= 1.0 {
                    bucket.tokens -= 1.0;
                    None
                } else {
                    Some(Duration::from_secs_f64((1.0 - bucket.tokens) / refill_rate))
                }
            };
            match wait {
                None => return,
                Some(d) => std::thread::sleep(d.min(Duration::from_millis(250))),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_within_capacity_does_not_block() {
        let limiter = RateLimiter::new(600);
        let start = Instant::now();
        for _ in 0..10 {
            limiter.admit("prov");
        }
        assert!(start.elapsed() < Duration::from_millis(200));
    }

    #[test]
    fn providers_have_independent_buckets() {
        let limiter = RateLimiter::new(60);
        for i in 0..30 {
            limiter.admit(&format!("prov-{i}"));
        }
    }
}
