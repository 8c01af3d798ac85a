//! Offspring law of a leafless Galton-Watson tree.
//!
//! Only finitely supported laws on `{1, 2, ...}` are represented. The derived
//! moments (mean, inverse mean, minimal degree) are computed once at
//! construction.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::bounds;
use crate::error::{Error, Result};

/// Relative slack under which input weights are silently renormalized.
const RENORMALIZE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OffspringDistribution {
    atoms: Vec<(u32, f64)>,
    cdf: Vec<f64>,
    mean: f64,
    inverse_mean: f64,
    min_degree: u32,
}

impl OffspringDistribution {
    /// Builds a validated law from `(k, weight)` pairs.
    ///
    /// Weights are renormalized when they sum to 1 within `1e-9`; any larger
    /// deviation is rejected, as are leaves (`k <= 0`), nonpositive weights and
    /// repeated atoms.
    pub fn new(pairs: &[(i64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let mut atoms = Vec::with_capacity(pairs.len());
        for &(k, weight) in pairs {
            if k <= 0 {
                return Err(Error::LeafAtom(k));
            }
            if !(weight > 0.0) || !weight.is_finite() {
                return Err(Error::NonPositiveWeight { k, weight });
            }
            let k = u32::try_from(k).map_err(|_| Error::DistributionSpec {
                spec: k.to_string(),
                reason: "offspring count too large".into(),
            })?;
            atoms.push((k, weight));
        }
        atoms.sort_by_key(|&(k, _)| k);
        if let Some(w) = atoms.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateAtom(i64::from(w[0].0)));
        }

        let total: f64 = atoms.iter().map(|&(_, w)| w).sum();
        if (total - 1.0).abs() >= RENORMALIZE_TOLERANCE {
            return Err(Error::WeightSum(total));
        }
        for atom in &mut atoms {
            atom.1 /= total;
        }

        let mut acc = 0.0;
        let mut cdf: Vec<f64> = atoms
            .iter()
            .map(|&(_, w)| {
                acc += w;
                acc
            })
            .collect();
        // The last cumulative weight must cover every u in [0, 1).
        *cdf.last_mut().expect("nonempty") = 1.0;

        let mean = atoms.iter().map(|&(k, w)| f64::from(k) * w).sum();
        let inverse_mean = atoms.iter().map(|&(k, w)| w / f64::from(k)).sum();
        let min_degree = atoms[0].0;

        Ok(Self {
            atoms,
            cdf,
            mean,
            inverse_mean,
            min_degree,
        })
    }

    /// Point mass at `k`.
    pub fn constant(k: u32) -> Result<Self> {
        Self::new(&[(i64::from(k), 1.0)])
    }

    /// Uniform law on `{lo, ..., hi}`.
    pub fn uniform(lo: u32, hi: u32) -> Result<Self> {
        let n = f64::from(hi.saturating_sub(lo) + 1);
        let pairs: Vec<(i64, f64)> = (lo..=hi).map(|k| (i64::from(k), 1.0 / n)).collect();
        Self::new(&pairs)
    }

    pub fn atoms(&self) -> &[(u32, f64)] {
        &self.atoms
    }

    pub fn pmf(&self, k: u32) -> f64 {
        self.atoms
            .binary_search_by_key(&k, |&(a, _)| a)
            .map(|i| self.atoms[i].1)
            .unwrap_or(0.0)
    }

    /// `E[Z]`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `E[1/Z]`.
    pub fn inverse_mean(&self) -> f64 {
        self.inverse_mean
    }

    /// Smallest offspring count with positive probability.
    pub fn min_degree(&self) -> u32 {
        self.min_degree
    }

    pub fn max_degree(&self) -> u32 {
        self.atoms.last().expect("nonempty").0
    }

    pub fn is_point_mass(&self) -> bool {
        self.atoms.len() == 1
    }

    /// `E[eps_Z]`, the average probability that the two coupled walks split
    /// at a freshly discovered vertex.
    pub fn expected_epsilon(&self, beta: f64, eps: f64) -> f64 {
        self.atoms
            .iter()
            .map(|&(k, w)| w * bounds::pqeps(k, beta, eps).eps)
            .sum()
    }

    /// Draws one offspring count by inverse-CDF search. Always consumes
    /// exactly one uniform from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u);
        self.atoms[idx.min(self.atoms.len() - 1)].0
    }
}

impl fmt::Display for OffspringDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_point_mass() {
            return write!(f, "const:{}", self.atoms[0].0);
        }
        for (i, (k, w)) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}:{w}")?;
        }
        Ok(())
    }
}

/// Parses `"k1:w1,k2:w2,..."`, the point-mass shorthand `"const:k"` or the
/// equal-weight shorthand `"uniform:k1,k2,..."`.
impl FromStr for OffspringDistribution {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let bad = |reason: &str| Error::DistributionSpec {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let trimmed = spec.trim();
        if let Some(k) = trimmed.strip_prefix("const:") {
            let k: i64 = k.trim().parse().map_err(|_| bad("expected const:<k>"))?;
            return Self::new(&[(k, 1.0)]);
        }
        if let Some(ks) = trimmed.strip_prefix("uniform:") {
            let ks = ks
                .split(',')
                .map(|k| k.trim().parse::<i64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("expected uniform:<k1>,<k2>,..."))?;
            let w = 1.0 / ks.len() as f64;
            let pairs: Vec<_> = ks.into_iter().map(|k| (k, w)).collect();
            return Self::new(&pairs);
        }
        let mut pairs = Vec::new();
        for item in trimmed.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, w) = item
                .split_once(':')
                .ok_or_else(|| bad("expected k:w pairs"))?;
            let k: i64 = k
                .trim()
                .parse()
                .map_err(|_| bad("offspring count is not an integer"))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| bad("weight is not a number"))?;
            pairs.push((k, w));
        }
        Self::new(&pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_atom_moments() {
        let d = OffspringDistribution::new(&[(2, 1.0)]).unwrap();
        assert_eq!(d.mean(), 2.0);
        assert_eq!(d.inverse_mean(), 0.5);
        assert_eq!(d.min_degree(), 2);
    }

    #[test]
    fn two_point_moments() {
        let d = OffspringDistribution::new(&[(2, 0.5), (1, 0.5)]).unwrap();
        assert_eq!(d.mean(), 1.5);
        assert_eq!(d.inverse_mean(), 0.75);
        assert_eq!(d.min_degree(), 1);
        assert_eq!(d.atoms(), &[(1, 0.5), (2, 0.5)]);
    }

    #[test]
    fn rejects_invalid_input() {
        assert_eq!(
            OffspringDistribution::new(&[(0, 1.0)]),
            Err(Error::LeafAtom(0))
        );
        assert!(matches!(
            OffspringDistribution::new(&[(1, 0.5), (2, 0.0), (3, 0.5)]),
            Err(Error::NonPositiveWeight { k: 2, .. })
        ));
        assert_eq!(
            OffspringDistribution::new(&[(1, 0.5), (1, 0.5)]),
            Err(Error::DuplicateAtom(1))
        );
        assert_eq!(
            OffspringDistribution::new(&[]),
            Err(Error::EmptyDistribution)
        );
        assert!(matches!(
            OffspringDistribution::new(&[(1, 0.5), (2, 0.4)]),
            Err(Error::WeightSum(_))
        ));
    }

    #[test]
    fn renormalizes_small_deviation() {
        let d = OffspringDistribution::new(&[(1, 0.5 + 1e-11), (3, 0.5)]).unwrap();
        let total: f64 = d.atoms().iter().map(|a| a.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parses_text_specs() {
        let d: OffspringDistribution = "1:0.5,2:0.5".parse().unwrap();
        assert_eq!(d.mean(), 1.5);
        let c: OffspringDistribution = "const:3".parse().unwrap();
        assert_eq!(c.min_degree(), 3);
        assert_eq!(c.to_string(), "const:3");
        assert!("const:0".parse::<OffspringDistribution>().is_err());
        let u: OffspringDistribution = "uniform:1,2,3".parse().unwrap();
        assert_eq!(u.mean(), 2.0);
        assert!("uniform:1,x".parse::<OffspringDistribution>().is_err());
        assert!("1-0.5".parse::<OffspringDistribution>().is_err());
        let round: OffspringDistribution = d.to_string().parse().unwrap();
        assert_eq!(round, d);
    }

    #[test]
    fn expected_epsilon_hand_values() {
        let ray = OffspringDistribution::constant(1).unwrap();
        assert!((ray.expected_epsilon(1.0, 1.0) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(ray.expected_epsilon(3.0, 0.0), 0.0);
        let u12 = OffspringDistribution::uniform(1, 2).unwrap();
        assert!((u12.expected_epsilon(1.0, 1.0) - 3.0 / 20.0).abs() < 1e-15);
    }

    #[test]
    fn expected_epsilon_large_beta_asymptote() {
        for dist in [
            OffspringDistribution::constant(2).unwrap(),
            OffspringDistribution::uniform(1, 3).unwrap(),
        ] {
            let beta = 1e4;
            let scaled = dist.expected_epsilon(beta, 1.0) * beta * beta;
            let rel = (scaled - dist.inverse_mean()).abs() / dist.inverse_mean();
            assert!(rel < 0.01, "rel = {rel}");
        }
    }

    #[test]
    fn sampling_point_mass_and_determinism() {
        let d = OffspringDistribution::constant(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert!((0..100).all(|_| d.sample(&mut rng) == 3));

        let u = OffspringDistribution::uniform(1, 4).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|_| u.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn sampling_frequency() {
        let d = OffspringDistribution::uniform(1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let ones = (0..n).filter(|_| d.sample(&mut rng) == 1).count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.002, "freq = {freq}");
    }
}
