/// Linear warmup to `peak`, then linear decay to zero at `total` steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSchedule {
    pub peak: f64,
    pub warmup: u64,
    pub total: u64,
}

impl LinearSchedule {
    /// Learning rate for the 0-based step `step`.
    pub fn lr(&self, step: u64) -> f64 {
        let warmup = self.warmup.min(self.total);
        if step < warmup {
            return self.peak * (step + 1) as f64 / warmup as f64;
        }
        let remaining = self.total.saturating_sub(warmup);
        if remaining == 0 {
            return 0.0;
        }
        let done = (step - warmup) as f64 / remaining as f64;
        self.peak * (1.0 - done).max(0.0)
    }
}
