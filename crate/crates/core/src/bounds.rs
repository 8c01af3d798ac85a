//! Closed-form quantities for the monotonicity argument.
//!
//! Everything here is a pure function of `(beta, eps, d)` and the offspring
//! law. The "effective bias" `d * beta` replaces `beta` wherever the minimal
//! degree `d` of the tree is exploited.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;

/// `15 (27/4)^2`, the limit of `beta * C(beta)` for the closed-form variant.
pub const C_ASYMPTOTIC_CONSTANT: f64 = 15.0 * (27.0 / 4.0) * (27.0 / 4.0);

/// Transition weights at a vertex with `i` children.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pqe {
    /// Probability of each child move under bias `beta`.
    pub p: f64,
    /// Probability of the parent move under bias `beta`.
    pub q: f64,
    /// `q` under `beta` minus `q` under `beta + eps`.
    pub eps: f64,
}

pub fn pqeps(i: u32, beta: f64, eps: f64) -> Pqe {
    let k = f64::from(i);
    let denom = k * beta + 1.0;
    // q_i(beta) - q_i(beta + eps) written without cancellation.
    let split = k * eps / (denom * (k * (beta + eps) + 1.0));
    Pqe {
        p: beta / denom,
        q: 1.0 / denom,
        eps: split,
    }
}

/// Paper-form escape weight `(b/(b+1)) * ((b-1)/(b+1))` with `b = d * beta`.
pub fn p_inf(beta: f64, d: u32) -> Result<f64> {
    let b = f64::from(d) * beta;
    if !(b >= 1.0) {
        return Err(Error::NotTransient(b));
    }
    Ok(b / (b + 1.0) * ((b - 1.0) / (b + 1.0)))
}

/// Exact probability that time 0 is a regeneration time of the
/// `beta`-biased walk on the integers.
///
/// Strict: first step up, then never return to 0, i.e. `(beta-1)/(beta+1)`.
/// Nonstrict: never go below 0, i.e. `(beta-1)/beta`.
pub fn zero_regeneration_probability(beta: f64, strict: bool) -> f64 {
    if beta <= 1.0 {
        return 0.0;
    }
    if strict {
        (beta - 1.0) / (beta + 1.0)
    } else {
        (beta - 1.0) / beta
    }
}

/// `27 q_1 / 4` at effective bias `b`.
pub fn tail_base(b: f64) -> f64 {
    27.0 / (4.0 * (b + 1.0))
}

/// `2 E[1/Z] / beta^2`.
pub fn predicted_rate(dist: &OffspringDistribution, beta: f64) -> f64 {
    2.0 * dist.inverse_mean() / (beta * beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaBounds {
    /// `p_1^4 E[eps_Z]`, lower bound on the single-return decoupling mass.
    pub single_return_lower: f64,
    /// `q_1^{-1} p_inf^{-1} E[eps_Z] k (3k+1) P[|B| = k]`.
    pub multi_return_upper: f64,
    /// `(27 q_1 / 4)^k`.
    pub tail: f64,
}

/// Evaluates the three lemma bounds at bias `beta` (unit degree).
///
/// When `prob_b_k` is `None` the analytic tail replaces `P[|B| = k]`.
pub fn lemma_bounds(
    dist: &OffspringDistribution,
    beta: f64,
    eps: f64,
    k: u32,
    prob_b_k: Option<f64>,
) -> Result<LemmaBounds> {
    let one = pqeps(1, beta, eps);
    let e_eps = dist.expected_epsilon(beta, eps);
    let pinf = p_inf(beta, 1)?;
    let tail = tail_base(beta).powi(k as i32);
    let prob = prob_b_k.unwrap_or(tail);
    let kf = f64::from(k);
    let multi_return_upper = if e_eps == 0.0 {
        0.0
    } else {
        e_eps / (one.q * pinf) * kf * (3.0 * kf + 1.0) * prob
    };
    Ok(LemmaBounds {
        single_return_lower: one.p.powi(4) * e_eps,
        multi_return_upper,
        tail,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CVariant {
    /// The closed form `15 x^2 (1-x)^-4`, evaluated verbatim.
    Paper,
    /// The series `sum_{k>=2} (3k+1) k (k-2) x^k`, summed numerically.
    Direct,
}

/// `sum_{k>=2} (3k+1) k (k-2) x^k` by direct summation, to relative `1e-12`.
pub fn window_series(x: f64) -> Result<f64> {
    if !(x < 1.0) {
        return Err(Error::DivergentTail(x));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    let mut power = x * x;
    let mut k = 2u64;
    loop {
        let kf = k as f64;
        let term = (3.0 * kf + 1.0) * kf * (kf - 2.0) * power;
        sum += term;
        // Once consecutive terms shrink, the remainder is dominated by a
        // geometric series with the current ratio.
        if k > 3 {
            let ratio = x * ((kf + 1.0) / kf).powi(3);
            if ratio < 1.0 && term * ratio / (1.0 - ratio) <= 1e-13 * sum {
                break;
            }
        }
        power *= x;
        k += 1;
        if k > 50_000_000 {
            return Err(Error::DivergentTail(x));
        }
    }
    Ok(sum)
}

/// The aggregate bound `C(beta)`; below 1 it certifies `v(beta+eps) > v(beta)`.
pub fn c_of_beta(beta: f64, d: u32, variant: CVariant) -> Result<f64> {
    let b = f64::from(d) * beta;
    if !(b > 1.0) {
        return Err(Error::NotTransient(b));
    }
    let x = tail_base(b);
    if x >= 1.0 {
        return Err(Error::DivergentTail(x));
    }
    let q1 = 1.0 / (b + 1.0);
    let p1 = b / (b + 1.0);
    let pinf = p_inf(beta, d)?;
    let series = match variant {
        CVariant::Paper => 15.0 * x * x / (1.0 - x).powi(4),
        CVariant::Direct => window_series(x)?,
    };
    Ok(series / (p1.powi(4) * pinf * q1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Threshold {
    pub d: u32,
    pub variant: CVariant,
    /// Smallest `beta` (to bisection width) with `C(beta) < 1`.
    pub beta: f64,
    /// `C` just above and just below the crossing.
    pub c_above: f64,
    pub c_below: f64,
    /// `C(beta + 1e-6) < 1 <= C(beta - 1e-6)`.
    pub certified: bool,
    /// `C` decreasing on a local grid around the crossing.
    pub locally_decreasing: bool,
}

fn c_or_infinite(beta: f64, d: u32, variant: CVariant) -> f64 {
    c_of_beta(beta, d, variant).unwrap_or(f64::INFINITY)
}

/// Bisection for the smallest `beta` at which `C(beta) < 1`.
pub fn threshold_search(d: u32, variant: CVariant) -> Result<Threshold> {
    if d == 0 {
        return Err(Error::InvalidBias(
            "minimal degree must be at least 1".into(),
        ));
    }
    let df = f64::from(d);
    // Below x = 1 the series diverges, so C is infinite there.
    let mut lo = (27.0 / 4.0 - 1.0) / df;
    let mut hi = lo * 2.0;
    while c_or_infinite(hi, d, variant) >= 1.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if c_or_infinite(mid, d, variant) < 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let c_above = c_or_infinite(hi + 1e-6, d, variant);
    let c_below = c_or_infinite(hi - 1e-6, d, variant);
    let grid: Vec<f64> = (-10..=10)
        .map(|j| c_or_infinite(hi * (1.0 + 1e-3 * f64::from(j)), d, variant))
        .collect();
    Ok(Threshold {
        d,
        variant,
        beta: hi,
        c_above,
        c_below,
        certified: c_above < 1.0 && c_below >= 1.0,
        locally_decreasing: grid.windows(2).all(|w| w[1] < w[0]),
    })
}

/// Every closed-form quantity at one `(beta, eps, d)` point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub beta: f64,
    pub eps: f64,
    pub d: u32,
    pub p1: f64,
    pub q1: f64,
    pub p_inf: f64,
    pub expected_eps: f64,
    pub single_return_lower: f64,
    /// `q_1^{-1} p_inf^{-1} E[eps_Z]`.
    pub multi_return_coefficient: f64,
    /// `multi_return_coefficient * k (3k+1) x^k` for `k = 2..=6`.
    pub multi_return_upper: Vec<f64>,
    pub tail_base: f64,
    pub tail_valid: bool,
    pub series_paper: Option<f64>,
    pub series_direct: Option<f64>,
    pub c_paper: Option<f64>,
    pub c_direct: Option<f64>,
    pub predicted_rate: f64,
}

impl BoundReport {
    pub fn compute(dist: &OffspringDistribution, beta: f64, eps: f64, d: u32) -> Result<Self> {
        let b = f64::from(d) * beta;
        if !(b > 1.0) {
            return Err(Error::NotTransient(b));
        }
        let q1 = 1.0 / (b + 1.0);
        let p1 = b / (b + 1.0);
        let pinf = p_inf(beta, d)?;
        let expected_eps = dist.expected_epsilon(beta, eps);
        let x = tail_base(b);
        let tail_valid = x < 1.0;
        let coefficient = expected_eps / (q1 * pinf);
        let multi_return_upper = (2..=6)
            .map(|k: i32| {
                let kf = f64::from(k);
                coefficient * kf * (3.0 * kf + 1.0) * x.powi(k)
            })
            .collect();
        Ok(Self {
            beta,
            eps,
            d,
            p1,
            q1,
            p_inf: pinf,
            expected_eps,
            single_return_lower: p1.powi(4) * expected_eps,
            multi_return_coefficient: coefficient,
            multi_return_upper,
            tail_base: x,
            tail_valid,
            series_paper: tail_valid.then(|| 15.0 * x * x / (1.0 - x).powi(4)),
            series_direct: window_series(x).ok(),
            c_paper: c_of_beta(beta, d, CVariant::Paper).ok(),
            c_direct: c_of_beta(beta, d, CVariant::Direct).ok(),
            predicted_rate: predicted_rate(dist, beta),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn pqeps_hand_values() {
        let a = pqeps(1, 1.0, 0.0);
        assert_eq!((a.p, a.q), (0.5, 0.5));
        let b = pqeps(1, 3.0, 0.0);
        assert_eq!((b.p, b.q), (0.75, 0.25));
        let c = pqeps(2, 2.0, 2.0);
        assert!(close(c.eps, 1.0 / 5.0 - 1.0 / 9.0, 1e-15));
        assert!(close(c.eps, 4.0 / 45.0, 1e-15));
    }

    #[test]
    fn p_inf_values() {
        assert_eq!(p_inf(1.0, 1).unwrap(), 0.0);
        assert!(close(p_inf(2.0, 1).unwrap(), 2.0 / 9.0, 1e-15));
        assert!(close(p_inf(1.0, 2).unwrap(), 2.0 / 9.0, 1e-15));
        assert_eq!(p_inf(0.5, 1), Err(Error::NotTransient(0.5)));
    }

    #[test]
    fn lemma_bound_values() {
        let z2 = OffspringDistribution::constant(2).unwrap();
        let lb = lemma_bounds(&z2, 2.0, 2.0, 2, None).unwrap();
        assert!(close(lb.single_return_lower, 64.0 / 3645.0, 1e-14));
        let lb10 = lemma_bounds(&z2, 10.0, 1.0, 2, None).unwrap();
        assert!(close(lb10.tail, (27.0f64 / 44.0).powi(2), 1e-14));
        assert!((lb10.tail - 0.37655).abs() < 1e-5);
        let zero = lemma_bounds(&z2, 10.0, 0.0, 3, Some(0.2)).unwrap();
        assert_eq!(
            (zero.single_return_lower, zero.multi_return_upper),
            (0.0, 0.0)
        );
    }

    #[test]
    fn window_series_matches_generating_function() {
        // sum k^j x^k closed forms, j = 1, 2, 3.
        for &x in &[1e-4, 0.01, 0.2, 27.0 / 44.0, 0.9] {
            let s1 = x / (1.0f64 - x).powi(2);
            let s2 = x * (1.0 + x) / (1.0f64 - x).powi(3);
            let s3 = x * (1.0 + 4.0 * x + x * x) / (1.0f64 - x).powi(4);
            // (3k+1) k (k-2) = 3k^3 - 5k^2 - 2k; the k = 1 term equals -4x.
            let closed = 3.0 * s3 - 5.0 * s2 - 2.0 * s1 + 4.0 * x;
            let direct = window_series(x).unwrap();
            assert!(close(direct, closed, 1e-10), "x={x}: {direct} vs {closed}");
        }
        assert!(window_series(1.0).is_err());
    }

    #[test]
    fn c_of_beta_paper_claims() {
        assert!(c_of_beta(717.0, 1, CVariant::Paper).unwrap() < 1.0);
        let scaled = 1e6 * c_of_beta(1e6, 1, CVariant::Paper).unwrap();
        assert!((scaled / C_ASYMPTOTIC_CONSTANT - 1.0).abs() < 0.005);
        assert!((C_ASYMPTOTIC_CONSTANT - 683.4375).abs() < 1e-12);
        assert_eq!(
            c_of_beta(1.0, 1, CVariant::Paper),
            Err(Error::NotTransient(1.0))
        );
        assert!(matches!(
            c_of_beta(5.0, 1, CVariant::Direct),
            Err(Error::DivergentTail(_))
        ));
    }

    #[test]
    fn direct_dominated_on_grid() {
        let mut beta = 10.0;
        while beta <= 1e4 {
            let p = c_of_beta(beta, 1, CVariant::Paper).unwrap();
            let d = c_of_beta(beta, 1, CVariant::Direct).unwrap();
            assert!(d < p, "beta={beta}");
            beta *= 1.25;
        }
    }

    #[test]
    fn direct_exceeds_paper_for_small_effective_bias() {
        // Near x = 1 the cubic series outgrows 15 x^2 (1-x)^-4.
        let p = c_of_beta(7.0, 1, CVariant::Paper).unwrap();
        let d = c_of_beta(7.0, 1, CVariant::Direct).unwrap();
        assert!(d > p);
    }

    #[test]
    fn thresholds() {
        let paper = threshold_search(1, CVariant::Paper).unwrap();
        assert!(paper.beta <= 717.0);
        assert!(paper.certified && paper.locally_decreasing);
        let direct = threshold_search(1, CVariant::Direct).unwrap();
        assert!(direct.beta < paper.beta);
        assert!(direct.certified);
        for d in 2..=4 {
            let t = threshold_search(d, CVariant::Paper).unwrap();
            assert!((t.beta * f64::from(d) - paper.beta).abs() < 1e-6);
            assert!(t.beta <= 717.0 / f64::from(d));
        }
    }

    #[test]
    fn rate_values() {
        let z2 = OffspringDistribution::constant(2).unwrap();
        assert!(close(predicted_rate(&z2, 100.0), 1e-4, 1e-14));
        let z1 = OffspringDistribution::constant(1).unwrap();
        assert!(close(predicted_rate(&z1, 10.0), 0.02, 1e-14));
        assert!(close(
            predicted_rate(&z1, 10.0),
            2.0 * predicted_rate(&z2, 10.0),
            1e-14
        ));
    }

    #[test]
    fn report_d_substitution() {
        let z = OffspringDistribution::constant(2).unwrap();
        let r = BoundReport::compute(&z, 2.0, 1.0, 2).unwrap();
        // The report evaluates the escape weight at b = d * beta = 4.
        assert!(close(r.p_inf, 12.0 / 25.0, 1e-15));
        assert!(close(r.q1 + r.p1, 1.0, 1e-15));
        assert!(!r.tail_valid && r.c_paper.is_none());
        let r717 =
            BoundReport::compute(&OffspringDistribution::constant(1).unwrap(), 717.0, 1.0, 1)
                .unwrap();
        assert!(r717.c_paper.unwrap() < 1.0);
        assert!(r717.c_direct.unwrap() < r717.c_paper.unwrap());
    }
}
