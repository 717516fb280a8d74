//! Small summary-statistics helpers used by the simulation harness.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn sum(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<CompensatedSum>().value()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    sum(xs) / xs.len() as f64
}

/// Sample variance with the `n − 1` denominator.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let ss: CompensatedSum = xs.iter().map(|x| (x - m) * (x - m)).collect();
    ss.value() / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Linear-interpolation percentile (`q` in [0, 1]) of an unsorted sample.
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(xs: &[f64]) -> f64 {
    percentile(xs, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum PairedTTest {
    Ok { mean: f64, t: f64, p_value: f64, df: f64 },
    /// All differences equal, so the statistic is undefined.
    Degenerate { mean: f64 },
}

impl PairedTTest {
    pub fn p_value(&self) -> Option<f64> {
        match self {
            Self::Ok { p_value, .. } => Some(*p_value),
            Self::Degenerate { .. } => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Ok { mean, .. } | Self::Degenerate { mean } => *mean,
        }
    }
}

/// One-sample t-test of the differences against zero, two-sided.
pub fn paired_t_test(differences: &[f64]) -> Result<PairedTTest> {
    if differences.len() < 2 {
        return Err(Error::domain("paired t-test needs at least two observations"));
    }
    let m = mean(differences);
    let var = variance(differences);
    if var <= 0.0 || !var.is_finite() {
        return Ok(PairedTTest::Degenerate { mean: m });
    }
    let df = (differences.len() - 1) as f64;
    let t = m / (var / differences.len() as f64).sqrt();
    let p_value = beta_reg(0.5 * df, 0.5, df / (df + t * t));
    Ok(PairedTTest::Ok { mean: m, t, p_value, df })
}
