use serde::Serialize;

use crate::approximant::knots_for_limit;
use crate::{Error, Result};

/// Window multiplier `n(δ)`: `⌈δ^(-α)⌉` with `α ∈ (0, 1/4)`, or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    exponent: f64,
    fixed: Option<usize>,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { exponent: 0.2, fixed: None }
    }
}

impl Schedule {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent < 0.25) {
            return Err(Error::Schedule(format!("exponent {exponent} must lie in (0, 1/4)")));
        }
        Ok(Self { exponent, fixed: None })
    }

    /// Same `n` for every δ; used for single-δ diagnostics.
    pub fn fixed(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Schedule("n(δ) must be at least 1".into()));
        }
        Ok(Self { exponent: Self::default().exponent, fixed: Some(n) })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn is_fixed(&self) -> bool {
        self.fixed.is_some()
    }

    pub fn n(&self, delta: f64) -> usize {
        self.fixed.unwrap_or_else(|| knots_for_limit(delta, self.exponent))
    }

    /// `δ̃ = n(δ) δ`.
    pub fn window(&self, delta: f64) -> f64 {
        self.n(delta) as f64 * delta
    }

    /// Checks a δ grid: strictly decreasing, `n(δ)` non-decreasing, and the
    /// envelope `δ^(1-4α)` of `n(δ)⁴δ` strictly decreasing. Returns `n(δ)⁴δ`
    /// per δ.
    ///
    /// The rounded values `n(δ)⁴δ` themselves oscillate under the ceiling (at
    /// α = 1/5 they run 1, 0.5, 1.27, 0.63, 1 over δ = 2⁻⁴..2⁻⁸), so the
    /// decrease is asserted on the envelope.
    pub fn validate(&self, deltas: &[f64]) -> Result<Vec<f64>> {
        if deltas.is_empty() {
            return Err(Error::Schedule("empty δ grid".into()));
        }
        for w in deltas.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::Schedule(format!("δ grid must be strictly decreasing ({} then {})", w[0], w[1])));
            }
            if self.n(w[1]) < self.n(w[0]) {
                return Err(Error::Schedule(format!("n(δ) decreases from δ = {} to δ = {}", w[0], w[1])));
            }
            if self.fixed.is_none() {
                let envelope = |d: f64| d.powf(1.0 - 4.0 * self.exponent);
                if !(envelope(w[1]) < envelope(w[0])) {
                    return Err(Error::Schedule(format!("n(δ)⁴δ envelope fails to decrease at δ = {}", w[1])));
                }
            } else {
                let quartic = |d: f64| (self.n(d) as f64).powi(4) * d;
                if !(quartic(w[1]) < quartic(w[0])) {
                    return Err(Error::Schedule(format!("n(δ)⁴δ fails to decrease at δ = {}", w[1])));
                }
            }
        }
        Ok(deltas.iter().map(|&d| (self.n(d) as f64).powi(4) * d).collect())
    }
}
