// SPDX-License-Identifier: MIT OR Apache-2.0

//! Streaming effect-size statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Welford's online mean/variance accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WelfordAccumulator {
    pub count: u64,
    pub mean: f64,
    /// Sum of squared deviations from the running mean.
    pub m2: f64,
}

impl WelfordAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. parallel combination.
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let (na, nb, n) = (self.count as f64, other.count as f64, count as f64);
        let delta = other.mean - self.mean;
        Self { count, mean: self.mean + delta * nb / n, m2: self.m2 + other.m2 + delta * delta * na * nb / n }
    }

    /// Sample variance `m2 / (n - 1)`; `None` below two samples.
    pub fn variance(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / (self.count - 1) as f64)
    }
}

impl FromIterator<f64> for WelfordAccumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        iter.into_iter().for_each(|x| acc.update(x));
        acc
    }
}

/// Standardized mean difference `(mean_ablated − mean_clean) / s_pooled`.
///
/// With zero pooled spread the result is `0` for equal means and a signed
/// infinity otherwise, so deterministic shifts always clear a finite threshold.
pub fn cohens_d(clean: &WelfordAccumulator, ablated: &WelfordAccumulator) -> Result<f64> {
    for acc in [clean, ablated] {
        if acc.count < 2 {
            return Err(Error::InsufficientData { needed: 2, got: acc.count });
        }
    }
    let (n1, n2) = (clean.count as f64, ablated.count as f64);
    let pooled_var = (clean.m2 + ablated.m2) / (n1 + n2 - 2.0);
    let diff = ablated.mean - clean.mean;
    let s = pooled_var.max(0.0).sqrt();
    if s == 0.0 {
        return Ok(if diff == 0.0 { 0.0 } else { f64::INFINITY.copysign(diff) });
    }
    Ok(diff / s)
}

/// Tally of per-cell effect signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SignTally {
    pub negative: u32,
    pub positive: u32,
    pub zero: u32,
}

impl SignTally {
    pub fn push(&mut self, delta: f64) {
        if delta < 0.0 {
            self.negative += 1;
        } else if delta > 0.0 {
            self.positive += 1;
        } else {
            self.zero += 1;
        }
    }

    pub fn total(&self) -> u32 {
        self.negative + self.positive + self.zero
    }

    /// Fraction of cells agreeing with the majority sign. Zero deltas never
    /// agree; a tie picks the negative side.
    pub fn consistency(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        f64::from(self.negative.max(self.positive)) / f64::from(total)
    }
}

/// Majority-sign consistency of per-cell deltas.
pub fn consistency(per_cell_deltas: &[f64]) -> Result<f64> {
    if per_cell_deltas.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut tally = SignTally::default();
    per_cell_deltas.iter().for_each(|&d| tally.push(d));
    Ok(tally.consistency())
}

/// Median of the finite values; `None` when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_small() {
        let acc: WelfordAccumulator = [1.0, 2.0, 3.0, 4.0].into_iter().collect();
        assert_eq!(acc.count, 4);
        assert!((acc.mean - 2.5).abs() < 1e-15);
        assert!((acc.variance().unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!(WelfordAccumulator::new().variance().is_none());
    }

    #[test]
    fn merge_with_empty() {
        let a: WelfordAccumulator = [1.0, 5.0].into_iter().collect();
        assert_eq!(a.merge(&WelfordAccumulator::new()), a);
        assert_eq!(WelfordAccumulator::new().merge(&a), a);
    }

    #[test]
    fn cohens_d_examples() {
        let clean: WelfordAccumulator = [1.0, 2.0, 3.0].into_iter().collect();
        let ablated: WelfordAccumulator = [2.0, 3.0, 4.0].into_iter().collect();
        assert!((cohens_d(&clean, &ablated).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cohens_d(&clean, &clean).unwrap(), 0.0);
    }

    #[test]
    fn cohens_d_zero_variance_sentinels() {
        let a: WelfordAccumulator = [2.0, 2.0].into_iter().collect();
        let b: WelfordAccumulator = [1.0, 1.0].into_iter().collect();
        assert_eq!(cohens_d(&a, &b).unwrap(), f64::NEG_INFINITY);
        assert_eq!(cohens_d(&b, &a).unwrap(), f64::INFINITY);
        assert_eq!(cohens_d(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn cohens_d_needs_two() {
        let one: WelfordAccumulator = [1.0].into_iter().collect();
        let two: WelfordAccumulator = [1.0, 2.0].into_iter().collect();
        assert!(matches!(cohens_d(&one, &two), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn consistency_examples() {
        assert_eq!(consistency(&[1.0, 2.0, 0.5]).unwrap(), 1.0);
        let mut d = vec![-1.0; 7];
        d.extend([1.0; 3]);
        assert_eq!(consistency(&d).unwrap(), 0.7);
        assert_eq!(consistency(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(consistency(&[-1.0, 1.0, 0.0, 0.0]).unwrap(), 0.25);
        assert!(consistency(&[]).is_err());
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median([3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median([4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median([f64::NAN]), None);
    }
}
