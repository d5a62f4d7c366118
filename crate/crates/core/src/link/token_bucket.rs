/// Pacing quantum of the shaper: the burst holds this much time worth of bytes.
pub const BUCKET_INTERVAL_S: f64 = 0.010;

/// Byte-credit bucket driven by an explicit clock (seconds).
///
/// Credit accrues continuously at `rate` bytes/s and is capped at `burst`,
/// so over any window `w` within one rate the bucket releases at most
/// `rate × w + burst` bytes.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    rate: f64,
    burst: f64,
    tokens: f64,
    last: f64,
}

impl TokenBucket {
    /// `rate_bytes_per_s` must be positive. The bucket starts full.
    pub fn new(rate_bytes_per_s: f64, now: f64) -> Self {
        let burst = burst_for(rate_bytes_per_s);
        Self {
            rate: rate_bytes_per_s,
            burst,
            tokens: burst,
            last: now,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn burst(&self) -> f64 {
        self.burst
    }

    /// Largest grant a single take can ask for: half the burst, so a waiter
    /// that oversleeps by up to half an interval loses no credit.
    pub fn max_grant(&self) -> usize {
        ((self.burst / 2.0).floor() as usize).max(1)
    }

    fn refill(&mut self, now: f64) {
        if now > self.last {
            self.tokens = (self.tokens + self.rate * (now - self.last)).min(self.burst);
            self.last = now;
        }
    }

    /// Switches to a new rate; accrued credit is kept up to the new burst.
    pub fn set_rate(&mut self, rate_bytes_per_s: f64, now: f64) {
        self.refill(now);
        self.rate = rate_bytes_per_s;
        self.burst = burst_for(rate_bytes_per_s);
        self.tokens = self.tokens.min(self.burst);
    }

    /// Takes `n` bytes of credit, or returns how long to wait before it
    /// would be available. `n` is clamped to [`max_grant`](Self::max_grant).
    pub fn try_take(&mut self, n: usize, now: f64) -> Result<usize, f64> {
        self.refill(now);
        let n = n.min(self.max_grant());
        let want = n as f64;
        if self.tokens >= want {
            self.tokens -= want;
            Ok(n)
        } else {
            Err((want - self.tokens) / self.rate)
        }
    }
}

fn burst_for(rate: f64) -> f64 {
    (rate * BUCKET_INTERVAL_S).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn waits_report_shortfall() {
        let mut b = TokenBucket::new(1000.0, 0.0);
        assert_eq!(b.burst(), 10.0);
        assert_eq!(b.try_take(5, 0.0), Ok(5));
        assert_eq!(b.try_take(5, 0.0), Ok(5));
        let wait = b.try_take(5, 0.0).unwrap_err();
        assert!((wait - 0.005).abs() < 1e-12);
        assert_eq!(b.try_take(5, 0.005), Ok(5));
    }

    #[test]
    fn grants_are_clamped_to_half_burst() {
        let mut b = TokenBucket::new(250_000.0, 0.0);
        assert_eq!(b.try_take(1_000_000, 0.0), Ok(1250));
    }

    #[test]
    fn rate_change_caps_credit() {
        let mut b = TokenBucket::new(100_000.0, 0.0);
        b.set_rate(10_000.0, 1.0);
        assert_eq!(b.burst(), 100.0);
        assert_eq!(b.try_take(50, 1.0), Ok(50));
        assert_eq!(b.try_take(50, 1.0), Ok(50));
        assert!(b.try_take(1, 1.0).is_err());
    }

    proptest! {
        // Greedy sender against the bucket: released bytes never exceed
        // rate × window + burst for any window.
        #[test]
        fn window_bound(rate in 1_000.0f64..1_000_000.0, steps in proptest::collection::vec(0.0001f64..0.02, 50..400)) {
            let mut b = TokenBucket::new(rate, 0.0);
            let mut now = 0.0;
            let mut log: Vec<(f64, usize)> = Vec::new();
            for dt in steps {
                now += dt;
                while let Ok(n) = b.try_take(usize::MAX, now) {
                    log.push((now, n));
                }
            }
            for (i, &(t0, _)) in log.iter().enumerate() {
                let mut sent = 0usize;
                for &(t, n) in &log[i..] {
                    sent += n;
                    let window = t - t0;
                    prop_assert!(sent as f64 <= rate * window + b.burst() + 1e-6,
                        "sent {} in {}s", sent, window);
                }
            }
        }
    }
}
