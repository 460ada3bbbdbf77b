//! Wynn's epsilon algorithm, kept one anti-diagonal at a time.
//!
//! After `n` partial sums `S_0 … S_{n-1}` the stored diagonal is
//! `ε_k^{(n-1-k)}` for `k = 0 … n-1`. A new sum extends it with the rhombus
//! rule `ε_{k+1}^{(m)} = ε_{k-1}^{(m+1)} + 1 / (ε_k^{(m+1)} - ε_k^{(m)})`.
//! Only even columns carry limit estimates.

#[derive(Debug, Clone, Default)]
pub struct EpsilonTable {
    diagonal: Vec<f64>,
    pushed: usize,
    last_broken: bool,
}

impl EpsilonTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of partial sums seen so far.
    pub fn len(&self) -> usize {
        self.pushed
    }

    pub fn is_empty(&self) -> bool {
        self.pushed == 0
    }

    /// Whether the most recent diagonal had to be cut short because two
    /// neighbouring entries coincided (or overflowed).
    pub fn last_broken(&self) -> bool {
        self.last_broken
    }

    /// Adds the next partial sum and returns the current best estimate,
    /// the deepest even-column entry of the new diagonal.
    pub fn push(&mut self, partial_sum: f64) -> f64 {
        let mut next = Vec::with_capacity(self.diagonal.len() + 1);
        next.push(partial_sum);
        self.last_broken = false;
        for k in 0..self.diagonal.len() {
            let delta = next[k] - self.diagonal[k];
            if delta == 0.0 || !delta.is_finite() {
                self.last_broken = true;
                break;
            }
            let before = if k == 0 { 0.0 } else { self.diagonal[k - 1] };
            let entry = before + delta.recip();
            if !entry.is_finite() {
                self.last_broken = true;
                break;
            }
            next.push(entry);
        }
        self.diagonal = next;
        self.pushed += 1;
        self.estimate()
    }

    pub fn estimate(&self) -> f64 {
        match self.diagonal.len() {
            0 => f64::NAN,
            n => self.diagonal[(n - 1) & !1],
        }
    }
}
