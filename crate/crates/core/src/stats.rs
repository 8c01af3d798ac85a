//! Small statistical toolkit: point estimates with standard errors, Wilson
//! intervals, ratio estimates by the delta method and batch means.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub count: u64,
    pub method: String,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64, count: u64, method: impl Into<String>) -> Self {
        debug_assert!(stderr >= 0.0);
        Self {
            value,
            stderr,
            count,
            method: method.into(),
        }
    }

    /// Distance to `target` in units of the standard error. Zero error gives
    /// 0 on an exact hit and infinity otherwise.
    pub fn sigmas_from(&self, target: f64) -> f64 {
        let diff = (self.value - target).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.stderr
        }
    }

    pub fn within_sigmas(&self, target: f64, k: f64) -> bool {
        self.sigmas_from(target) <= k
    }

    /// Equal-weight average of independent estimates.
    pub fn pool(parts: &[Estimate], method: impl Into<String>) -> Result<Estimate> {
        if parts.is_empty() {
            return Err(Error::InsufficientSample("nothing to pool".into()));
        }
        let r = parts.len() as f64;
        let value = parts.iter().map(|e| e.value).sum::<f64>() / r;
        let var = parts.iter().map(|e| e.stderr * e.stderr).sum::<f64>() / (r * r);
        Ok(Estimate::new(
            value,
            var.sqrt(),
            parts.iter().map(|e| e.count).sum(),
            method,
        ))
    }
}

/// `|a - b|` over their combined standard error.
pub fn combined_sigmas(a: &Estimate, b: &Estimate) -> f64 {
    let diff = (a.value - b.value).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / (a.stderr * a.stderr + b.stderr * b.stderr).sqrt()
}

/// Upper tail of the standard normal.
pub fn normal_sf(z: f64) -> f64 {
    let n = Normal::standard();
    1.0 - n.cdf(z)
}

/// Binomial proportion with its plug-in standard error.
pub fn proportion(successes: u64, n: u64) -> Estimate {
    let p = if n == 0 {
        0.0
    } else {
        successes as f64 / n as f64
    };
    let se = if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    };
    Estimate::new(p, se, n, "proportion")
}

/// Wilson score interval at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if successes == n {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

/// Two-sample proportion comparison with the pooled standard error.
/// Returns `|p1 - p2| / se`, or 0 when both samples agree exactly.
pub fn two_proportion_sigmas(x1: u64, n1: u64, x2: u64, n2: u64) -> f64 {
    let p1 = x1 as f64 / n1 as f64;
    let p2 = x2 as f64 / n2 as f64;
    let diff = (p1 - p2).abs();
    if diff == 0.0 {
        return 0.0;
    }
    let pooled = (x1 + x2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    diff / se
}

/// Exact integer moments of a paired sample `(a_i, b_i)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PairSums {
    pub n: u64,
    pub sum_a: i128,
    pub sum_b: i128,
    pub sum_aa: i128,
    pub sum_bb: i128,
    pub sum_ab: i128,
}

impl PairSums {
    #[inline]
    pub fn add(&mut self, a: i64, b: i64) {
        let (a, b) = (i128::from(a), i128::from(b));
        self.n += 1;
        self.sum_a += a;
        self.sum_b += b;
        self.sum_aa += a * a;
        self.sum_bb += b * b;
        self.sum_ab += a * b;
    }

    pub fn merge(&mut self, other: &PairSums) {
        self.n += other.n;
        self.sum_a += other.sum_a;
        self.sum_b += other.sum_b;
        self.sum_aa += other.sum_aa;
        self.sum_bb += other.sum_bb;
        self.sum_ab += other.sum_ab;
    }

    /// Mean of `a` with the usual standard error.
    pub fn mean_a(&self, method: &str) -> Result<Estimate> {
        if self.n < 2 {
            return Err(Error::InsufficientSample(format!(
                "{} observations",
                self.n
            )));
        }
        let n = self.n as f64;
        let mean = self.sum_a as f64 / n;
        // Centred second moment computed in exact integer arithmetic.
        let centred = self.sum_aa * i128::from(self.n) - self.sum_a * self.sum_a;
        let var = centred as f64 / (n * (n - 1.0));
        Ok(Estimate::new(
            mean,
            (var.max(0.0) / n).sqrt(),
            self.n,
            method,
        ))
    }

    /// Ratio of means `sum_a / sum_b` with delta-method standard error.
    pub fn ratio(&self, method: &str) -> Result<Estimate> {
        if self.n < 2 {
            return Err(Error::InsufficientSample(format!(
                "{} observations",
                self.n
            )));
        }
        if self.sum_b == 0 {
            return Err(Error::InsufficientSample("zero denominator".into()));
        }
        let n = self.n as f64;
        let r = self.sum_a as f64 / self.sum_b as f64;
        let mb = self.sum_b as f64 / n;
        let nn = i128::from(self.n);
        let cov_aa = (self.sum_aa * nn - self.sum_a * self.sum_a) as f64 / (n * (n - 1.0));
        let cov_bb = (self.sum_bb * nn - self.sum_b * self.sum_b) as f64 / (n * (n - 1.0));
        let cov_ab = (self.sum_ab * nn - self.sum_a * self.sum_b) as f64 / (n * (n - 1.0));
        let var = (cov_aa - 2.0 * r * cov_ab + r * r * cov_bb) / (mb * mb * n);
        Ok(Estimate::new(r, var.max(0.0).sqrt(), self.n, method))
    }
}

/// Mean and standard error of batch means.
pub fn batch_means(batches: &[f64], method: &str) -> Result<Estimate> {
    if batches.len() < 2 {
        return Err(Error::InsufficientSample(format!(
            "{} batches",
            batches.len()
        )));
    }
    let b = batches.len() as f64;
    let mean = batches.iter().sum::<f64>() / b;
    let var = batches.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1.0);
    Ok(Estimate::new(
        mean,
        (var / b).sqrt(),
        batches.len() as u64,
        method,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_brackets_the_proportion() {
        let (lo, hi) = wilson_interval(30, 100, Z95);
        assert!(lo < 0.3 && 0.3 < hi);
        // Reference values for 30/100 at 95%.
        assert!((lo - 0.2189).abs() < 1e-3 && (hi - 0.3958).abs() < 1e-3);
        let (lo0, hi0) = wilson_interval(0, 50, Z95);
        assert_eq!(lo0, 0.0);
        assert!(hi0 > 0.0 && hi0 < 0.1);
    }

    #[test]
    fn ratio_of_constant_pairs_is_exact() {
        let mut s = PairSums::default();
        for _ in 0..10 {
            s.add(1, 1);
        }
        let r = s.ratio("r").unwrap();
        assert_eq!((r.value, r.stderr), (1.0, 0.0));
    }

    #[test]
    fn ratio_matches_direct_formula() {
        let pairs = [(3, 5), (1, 1), (4, 7), (2, 3), (0, 1), (5, 9)];
        let mut s = PairSums::default();
        for &(a, b) in &pairs {
            s.add(a, b);
        }
        let n = pairs.len() as f64;
        let ma = pairs.iter().map(|p| p.0 as f64).sum::<f64>() / n;
        let mb = pairs.iter().map(|p| p.1 as f64).sum::<f64>() / n;
        let r = ma / mb;
        let resid: f64 = pairs
            .iter()
            .map(|&(a, b)| (a as f64 - r * b as f64).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        let se = (resid / n).sqrt() / mb;
        let est = s.ratio("r").unwrap();
        assert!((est.value - r).abs() < 1e-14);
        assert!((est.stderr - se).abs() < 1e-12);
    }

    #[test]
    fn mean_and_batches() {
        let mut s = PairSums::default();
        for x in [1, 2, 3, 4] {
            s.add(x, 0);
        }
        let m = s.mean_a("m").unwrap();
        assert_eq!(m.value, 2.5);
        assert!((m.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-14);
        let b = batch_means(&[1.0, 1.0, 1.0], "b").unwrap();
        assert_eq!((b.value, b.stderr), (1.0, 0.0));
        assert!(batch_means(&[1.0], "b").is_err());
    }

    #[test]
    fn normal_tail() {
        assert!((normal_sf(0.0) - 0.5).abs() < 1e-12);
        assert!((normal_sf(2.326_347_874) - 0.01).abs() < 1e-6);
    }

    #[test]
    fn two_sample_sigmas() {
        assert_eq!(two_proportion_sigmas(0, 10, 0, 20), 0.0);
        assert!(two_proportion_sigmas(50, 100, 60, 100) < 2.0);
        assert!(two_proportion_sigmas(10, 1000, 100, 1000) > 4.0);
    }
}
