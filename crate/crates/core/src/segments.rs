//! Segment classification and the estimators built on segment statistics.
//!
//! Each segment is either coupled (the depth gap between the two tree walks
//! never moves inside it) or decoupled with `k` backward steps of `Y`. The
//! per-segment summaries are folded into a [`SegmentTally`] of exact integer
//! sums, so replicas merge without rounding and in any order.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::bounds::{pqeps, zero_regeneration_probability};
use crate::coupling::{BiasParams, CoupledTrajectory, Walk};
use crate::error::{Error, Result};
use crate::regen::{RegenMode, Segment};
use crate::stats::{
    batch_means, normal_sf, two_proportion_sigmas, wilson_interval, Estimate, PairSums, Z95,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SegmentClass {
    Coupled,
    /// Decoupled with this many backward steps of `Y`.
    Decoupled(u32),
}

/// Pathwise facts that must hold on every segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StructuralChecks {
    /// Each tree walk's depth increment dominates the `Y` increment.
    pub domination: bool,
    /// Gap increments vanish on forward steps of `Y` and lie in {-2, 0, 2}.
    pub gap_increments: bool,
    /// The gap jumps by exactly +2 at the decoupling step.
    pub delta_jump: bool,
    /// The decoupling step is a backward step of `Y`.
    pub delta_in_b: bool,
    /// `U` at the decoupling step lies below `eps_k` of the shared vertex.
    pub delta_threshold: bool,
    /// Coupled: equal gains. Decoupled(k): gap at least `4 - 2k`, and
    /// exactly 2 when `k = 1`.
    pub gap_floor: bool,
}

impl StructuralChecks {
    pub fn all(&self) -> bool {
        self.domination
            && self.gap_increments
            && self.delta_jump
            && self.delta_in_b
            && self.delta_threshold
            && self.gap_floor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentSummary {
    pub class: SegmentClass,
    /// Number of backward steps of `Y` inside the segment.
    pub b_count: u32,
    /// 1-based position of the decoupling step inside the segment.
    pub delta_offset: Option<u64>,
    pub gain_beta: i64,
    pub gain_beta_eps: i64,
    pub length: u64,
    pub checks: StructuralChecks,
}

impl SegmentSummary {
    pub fn gap(&self) -> i64 {
        self.gain_beta_eps - self.gain_beta
    }

    pub fn gain(&self, walk: Walk) -> i64 {
        match walk {
            Walk::Beta => self.gain_beta,
            Walk::BetaEps => self.gain_beta_eps,
        }
    }
}

pub fn classify(segment: &Segment<'_>, params: BiasParams) -> SegmentSummary {
    let mut b_count = 0u32;
    let mut delta: Option<(u64, i64, f64, u32, u32)> = None;
    let mut domination = true;
    let mut gap_increments = true;

    for (i, step) in segment.steps.iter().enumerate() {
        let dy = step.y_increment();
        if step.y_down {
            b_count += 1;
        }
        if step.beta.mv.depth_change() < dy || step.beta_eps.mv.depth_change() < dy {
            domination = false;
        }
        let inc = step.gap_increment();
        let inc_ok = if step.y_down {
            matches!(inc, -2 | 0 | 2)
        } else {
            inc == 0
        };
        gap_increments &= inc_ok;
        if delta.is_none() && inc != 0 {
            delta = Some((
                i as u64 + 1,
                inc,
                step.u,
                step.beta.children,
                step.beta_eps.children,
            ));
        }
    }

    let gap = segment.gain_beta_eps - segment.gain_beta;
    let (class, delta_offset, delta_jump, delta_in_b, delta_threshold, gap_floor) = match delta {
        None => (SegmentClass::Coupled, None, true, true, true, gap == 0),
        Some((offset, inc, u, k_beta, k_beta_eps)) => {
            let q1 = params.q1();
            let split = pqeps(k_beta, params.beta, params.eps).eps;
            (
                SegmentClass::Decoupled(b_count),
                Some(offset),
                inc == 2,
                u <= q1,
                k_beta == k_beta_eps && u < split,
                gap >= 4 - 2 * i64::from(b_count) && (b_count != 1 || gap == 2),
            )
        }
    };

    SegmentSummary {
        class,
        b_count,
        delta_offset,
        gain_beta: segment.gain_beta,
        gain_beta_eps: segment.gain_beta_eps,
        length: segment.len(),
        checks: StructuralChecks {
            domination,
            gap_increments,
            delta_jump,
            delta_in_b,
            delta_threshold,
            gap_floor,
        },
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ViolationCounts {
    pub domination: u64,
    pub gap_increments: u64,
    pub delta_jump: u64,
    pub delta_in_b: u64,
    pub delta_threshold: u64,
    pub gap_floor: u64,
}

impl ViolationCounts {
    fn record(&mut self, c: &StructuralChecks) {
        self.domination += u64::from(!c.domination);
        self.gap_increments += u64::from(!c.gap_increments);
        self.delta_jump += u64::from(!c.delta_jump);
        self.delta_in_b += u64::from(!c.delta_in_b);
        self.delta_threshold += u64::from(!c.delta_threshold);
        self.gap_floor += u64::from(!c.gap_floor);
    }

    fn merge(&mut self, o: &ViolationCounts) {
        self.domination += o.domination;
        self.gap_increments += o.gap_increments;
        self.delta_jump += o.delta_jump;
        self.delta_in_b += o.delta_in_b;
        self.delta_threshold += o.delta_threshold;
        self.gap_floor += o.gap_floor;
    }

    pub fn total(&self) -> u64 {
        self.domination
            + self.gap_increments
            + self.delta_jump
            + self.delta_in_b
            + self.delta_threshold
            + self.gap_floor
    }

    pub fn named(&self) -> [(&'static str, u64); 6] {
        [
            ("domination", self.domination),
            ("gap_increments", self.gap_increments),
            ("delta_jump", self.delta_jump),
            ("delta_in_b", self.delta_in_b),
            ("delta_threshold", self.delta_threshold),
            ("gap_floor", self.gap_floor),
        ]
    }
}

/// Mergeable integer sums over a collection of segment summaries.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SegmentTally {
    /// `(gain_beta, length)`.
    pub beta: PairSums,
    /// `(gain_beta_eps, length)`.
    pub beta_eps: PairSums,
    /// `(gap, length)`.
    pub gap: PairSums,
    pub coupled: u64,
    pub decoupled: BTreeMap<u32, u64>,
    pub b_counts: BTreeMap<u32, u64>,
    /// Joint counts of `(|B|, length)`.
    pub length_by_b: BTreeMap<(u32, u64), u64>,
    pub violations: ViolationCounts,
}

impl SegmentTally {
    pub fn from_summaries<'a>(summaries: impl IntoIterator<Item = &'a SegmentSummary>) -> Self {
        let mut t = Self::default();
        for s in summaries {
            t.add(s);
        }
        t
    }

    pub fn add(&mut self, s: &SegmentSummary) {
        let len = s.length as i64;
        self.beta.add(s.gain_beta, len);
        self.beta_eps.add(s.gain_beta_eps, len);
        self.gap.add(s.gap(), len);
        match s.class {
            SegmentClass::Coupled => self.coupled += 1,
            SegmentClass::Decoupled(k) => *self.decoupled.entry(k).or_default() += 1,
        }
        *self.b_counts.entry(s.b_count).or_default() += 1;
        *self.length_by_b.entry((s.b_count, s.length)).or_default() += 1;
        self.violations.record(&s.checks);
    }

    pub fn merge(&mut self, other: &SegmentTally) {
        self.beta.merge(&other.beta);
        self.beta_eps.merge(&other.beta_eps);
        self.gap.merge(&other.gap);
        self.coupled += other.coupled;
        for (&k, &c) in &other.decoupled {
            *self.decoupled.entry(k).or_default() += c;
        }
        for (&k, &c) in &other.b_counts {
            *self.b_counts.entry(k).or_default() += c;
        }
        for (&k, &c) in &other.length_by_b {
            *self.length_by_b.entry(k).or_default() += c;
        }
        self.violations.merge(&other.violations);
    }

    pub fn segments(&self) -> u64 {
        self.beta.n
    }

    pub fn decoupled_count(&self, k: u32) -> u64 {
        self.decoupled.get(&k).copied().unwrap_or(0)
    }

    pub fn b_count(&self, k: u32) -> u64 {
        self.b_counts.get(&k).copied().unwrap_or(0)
    }

    /// Segments with `length > w |B| + 1`.
    pub fn window_exceptions(&self, w: u64) -> u64 {
        self.length_by_b
            .iter()
            .filter(|(&(b, len), _)| len > w * u64::from(b) + 1)
            .map(|(_, &c)| c)
            .sum()
    }

    pub fn max_length_by_b(&self) -> BTreeMap<u32, u64> {
        let mut out = BTreeMap::new();
        for &(b, len) in self.length_by_b.keys() {
            let e = out.entry(b).or_insert(0);
            *e = (*e).max(len);
        }
        out
    }

    /// Mean segment length.
    pub fn mean_length(&self) -> Result<Estimate> {
        let mut swapped = PairSums {
            n: self.beta.n,
            sum_a: self.beta.sum_b,
            sum_aa: self.beta.sum_bb,
            ..PairSums::default()
        };
        swapped.sum_b = 0;
        swapped.mean_a("mean segment length")
    }

    /// Frequency of a class as a proportion estimate.
    pub fn class_probability(&self, class: SegmentClass) -> Estimate {
        let hits = match class {
            SegmentClass::Coupled => self.coupled,
            SegmentClass::Decoupled(k) => self.decoupled_count(k),
        };
        crate::stats::proportion(hits, self.segments())
    }

    /// `2 (P[D_1] - sum_{k>=2} (k-2) P[D_k])`, the lower bound on the mean gap,
    /// estimated from the same segments.
    pub fn gap_lower_bound(&self) -> Estimate {
        let n = self.segments();
        // Per-segment contribution: 2 on D_1, -2(k-2) on D_k, 0 elsewhere.
        let mut sums = PairSums {
            n,
            ..PairSums::default()
        };
        for (&k, &c) in &self.decoupled {
            let w = if k == 1 { 2 } else { -2 * (i128::from(k) - 2) };
            sums.sum_a += w * i128::from(c);
            sums.sum_aa += w * w * i128::from(c);
        }
        sums.mean_a("gap lower bound")
            .unwrap_or_else(|_| Estimate::new(0.0, 0.0, n, "gap lower bound"))
    }
}

/// Regeneration-ratio speed `E[gain] / E[length]` for one walk.
pub fn speed_regen(tally: &SegmentTally, walk: Walk) -> Result<Estimate> {
    if tally.segments() < 2 {
        return Err(Error::InsufficientSample(format!(
            "{} segments",
            tally.segments()
        )));
    }
    match walk {
        Walk::Beta => tally.beta.ratio("regeneration ratio"),
        Walk::BetaEps => tally.beta_eps.ratio("regeneration ratio"),
    }
}

/// `v(beta+eps) - v(beta)` as `E[gap] / E[length]`.
pub fn speed_gap(tally: &SegmentTally) -> Result<Estimate> {
    if tally.segments() < 2 {
        return Err(Error::InsufficientSample(format!(
            "{} segments",
            tally.segments()
        )));
    }
    if tally.gap.sum_a == 0 && tally.gap.sum_aa == 0 {
        return Ok(Estimate::new(0.0, 0.0, tally.segments(), "gap ratio"));
    }
    tally.gap.ratio("gap ratio")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapEstimate {
    pub estimate: Estimate,
    pub z: f64,
    /// One-sided p-value against a nonpositive mean gap.
    pub p_value: f64,
}

pub fn gap_estimator(tally: &SegmentTally) -> Result<GapEstimate> {
    let estimate = tally.gap.mean_a("mean depth gap per segment")?;
    let (z, p_value) = if estimate.stderr > 0.0 {
        let z = estimate.value / estimate.stderr;
        (z, normal_sf(z))
    } else if estimate.value > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (0.0, 1.0)
    };
    Ok(GapEstimate {
        estimate,
        z,
        p_value,
    })
}

/// Records walker depths at evenly spaced batch boundaries of a run of known
/// length.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicRecorder {
    batch_len: u64,
    batches: usize,
    total_steps: u64,
    boundaries: [Vec<u64>; 2],
    last: [u64; 2],
    time: u64,
}

pub const ERGODIC_BATCHES: usize = 20;
pub const MIN_ERGODIC_STEPS: u64 = 1_000;

impl ErgodicRecorder {
    pub fn new(total_steps: u64, batches: usize) -> Result<Self> {
        if total_steps < MIN_ERGODIC_STEPS {
            return Err(Error::InsufficientSample(format!(
                "ergodic average needs at least {MIN_ERGODIC_STEPS} steps, got {total_steps}"
            )));
        }
        let batches = batches.max(ERGODIC_BATCHES);
        Ok(Self {
            batch_len: total_steps / batches as u64,
            batches,
            total_steps,
            boundaries: [vec![0], vec![0]],
            last: [0, 0],
            time: 0,
        })
    }

    #[inline]
    pub fn observe(&mut self, depth_beta: u64, depth_beta_eps: u64) {
        self.time += 1;
        self.last = [depth_beta, depth_beta_eps];
        if self.time.is_multiple_of(self.batch_len) && self.boundaries[0].len() <= self.batches {
            self.boundaries[0].push(depth_beta);
            self.boundaries[1].push(depth_beta_eps);
        }
    }

    pub fn estimate(&self, walk: Walk) -> Result<Estimate> {
        if self.time < self.total_steps {
            return Err(Error::InsufficientSample(format!(
                "observed {} of {} steps",
                self.time, self.total_steps
            )));
        }
        let idx = match walk {
            Walk::Beta => 0,
            Walk::BetaEps => 1,
        };
        let b = &self.boundaries[idx];
        let per_batch: Vec<f64> = b
            .windows(2)
            .map(|w| (w[1] as f64 - w[0] as f64) / self.batch_len as f64)
            .collect();
        let bm = batch_means(&per_batch, "ergodic average")?;
        Ok(Estimate::new(
            self.last[idx] as f64 / self.time as f64,
            bm.stderr,
            self.time,
            "ergodic average, batch means",
        ))
    }
}

/// `depth_n / n` with a batch-means standard error over 20 batches.
pub fn speed_ergodic(trajectory: &CoupledTrajectory, walk: Walk) -> Result<Estimate> {
    let mut rec = ErgodicRecorder::new(trajectory.len() as u64, ERGODIC_BATCHES)?;
    for s in &trajectory.steps {
        rec.observe(s.beta.depth, s.beta_eps.depth);
    }
    rec.estimate(walk)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbRow {
    pub name: String,
    pub hits: u64,
    pub n: u64,
    pub value: f64,
    pub stderr: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// Analytic upper bound on the row's mass, when one applies.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbTable {
    pub n: u64,
    pub rows: Vec<ProbRow>,
}

impl ProbTable {
    pub fn row(&self, name: &str) -> Option<&ProbRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

pub const MIN_TABLE_SAMPLE: u64 = 100;

/// Frequencies of `C`, `D_k` and `|B| = k` with Wilson 95% intervals, plus
/// remainder rows bounding the unobserved tail.
pub fn prob_table(tally: &SegmentTally, beta: f64, mode: RegenMode) -> Result<ProbTable> {
    let n = tally.segments();
    if n < MIN_TABLE_SAMPLE {
        return Err(Error::InsufficientSample(format!(
            "{n} segments, need {MIN_TABLE_SAMPLE}"
        )));
    }
    let row = |name: String, hits: u64, bound: Option<f64>| {
        let est = crate::stats::proportion(hits, n);
        let (lo, hi) = wilson_interval(hits, n, Z95);
        ProbRow {
            name,
            hits,
            n,
            value: est.value,
            stderr: est.stderr,
            wilson_lo: lo,
            wilson_hi: hi,
            bound,
        }
    };
    let mut rows = vec![row("C".into(), tally.coupled, None)];
    for (&k, &c) in &tally.decoupled {
        rows.push(row(format!("D_{k}"), c, None));
    }
    for (&k, &c) in &tally.b_counts {
        rows.push(row(format!("B={k}"), c, None));
    }
    let kmax = tally.b_counts.keys().copied().max().unwrap_or(0);
    let x = crate::bounds::tail_base(beta);
    let escape = zero_regeneration_probability(beta, mode == RegenMode::Strict);
    let remainder = (x < 1.0 && escape > 0.0).then(|| x.powi(kmax as i32 + 1) / (1.0 - x) / escape);
    rows.push(row(format!("B>{kmax}"), 0, remainder));
    rows.push(row(format!("D>{kmax}"), 0, remainder));
    Ok(ProbTable { n, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellComparison {
    pub name: String,
    pub left: f64,
    pub right: f64,
    pub sigmas: f64,
}

/// Smallest pooled expected count per sample for a cell to be compared on
/// its own; sparser cells are lumped into one tail cell per family.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

/// Cell-wise two-proportion comparison of two samples of the same law.
pub fn compare_tallies(left: &SegmentTally, right: &SegmentTally) -> Vec<CellComparison> {
    let (n1, n2) = (left.segments(), right.segments());
    let dense = |a: u64, b: u64| {
        let pooled = (a + b) as f64 / (n1 + n2) as f64;
        pooled * n1.min(n2) as f64 >= MIN_EXPECTED_COUNT
    };
    let mut cells: Vec<(String, u64, u64)> = vec![("C".into(), left.coupled, right.coupled)];
    let mut family = |prefix: &str, l: &BTreeMap<u32, u64>, r: &BTreeMap<u32, u64>| {
        let ks: std::collections::BTreeSet<u32> = l.keys().chain(r.keys()).copied().collect();
        let count = |m: &BTreeMap<u32, u64>, k: u32| m.get(&k).copied().unwrap_or(0);
        let mut tail: Option<(u32, u64, u64)> = None;
        for k in ks {
            let (a, b) = (count(l, k), count(r, k));
            match tail.as_mut() {
                Some(t) => {
                    t.1 += a;
                    t.2 += b;
                }
                None if dense(a, b) => cells.push((format!("{prefix}{k}"), a, b)),
                None => tail = Some((k, a, b)),
            }
        }
        if let Some((k, a, b)) = tail {
            cells.push((format!("{prefix}{k}+"), a, b));
        }
    };
    family("D_", &left.decoupled, &right.decoupled);
    family("B=", &left.b_counts, &right.b_counts);
    cells
        .into_iter()
        .map(|(name, a, b)| CellComparison {
            name,
            left: a as f64 / n1 as f64,
            right: b as f64 / n2 as f64,
            sigmas: two_proportion_sigmas(a, n1, b, n2),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{Move, StepRecord, WalkerStep};

    fn step(u: f64, q1: f64, y: i64, a: (Move, u64, u32), b: (Move, u64, u32)) -> StepRecord {
        let ws = |(mv, depth, children): (Move, u64, u32)| WalkerStep {
            children,
            from_root: false,
            mv,
            depth,
            discovered: false,
        };
        StepRecord {
            u,
            y_down: u <= q1,
            y,
            beta: ws(a),
            beta_eps: ws(b),
            offspring: None,
        }
    }

    #[test]
    fn single_forward_step_is_coupled() {
        let params = BiasParams::new(2.0, 1.0).unwrap();
        let s = [step(
            0.9,
            params.q1(),
            1,
            (Move::Child(1), 1, 1),
            (Move::Child(1), 1, 1),
        )];
        let seg = Segment::new(0, (0, 0), &s);
        let sum = classify(&seg, params);
        assert_eq!(sum.class, SegmentClass::Coupled);
        assert_eq!((sum.b_count, sum.length), (0, 1));
        assert!(sum.checks.all());
    }

    #[test]
    fn single_return_scenario() {
        // fwd, fwd, split-back, fwd, fwd on the ray with beta = 10, eps = 1.
        let params = BiasParams::new(10.0, 1.0).unwrap();
        let q1 = params.q1();
        let c = Move::Child(1);
        let s = [
            step(0.9, q1, 1, (c, 1, 1), (c, 1, 1)),
            step(0.9, q1, 2, (c, 2, 1), (c, 2, 1)),
            step(0.001, q1, 1, (Move::Parent, 1, 1), (c, 3, 1)),
            step(0.9, q1, 2, (c, 2, 1), (c, 4, 1)),
            step(0.9, q1, 3, (c, 3, 1), (c, 5, 1)),
        ];
        let seg = Segment::new(0, (0, 0), &s);
        let sum = classify(&seg, params);
        assert_eq!(sum.class, SegmentClass::Decoupled(1));
        assert_eq!(sum.delta_offset, Some(3));
        assert_eq!(sum.gap(), 2);
        assert!(sum.checks.all(), "{:?}", sum.checks);
    }

    #[test]
    fn broken_domination_is_flagged() {
        let params = BiasParams::new(2.0, 1.0).unwrap();
        let s = [step(
            0.9,
            params.q1(),
            1,
            (Move::Parent, 0, 1),
            (Move::Parent, 0, 1),
        )];
        let sum = classify(&Segment::new(0, (1, 1), &s), params);
        assert!(!sum.checks.domination);
    }

    #[test]
    fn trivial_speed_and_gap() {
        let params = BiasParams::new(2.0, 0.0).unwrap();
        let s = [step(
            0.9,
            params.q1(),
            1,
            (Move::Child(1), 1, 1),
            (Move::Child(1), 1, 1),
        )];
        let sum = classify(&Segment::new(0, (0, 0), &s), params);
        let tally = SegmentTally::from_summaries(&vec![sum; 50]);
        let v = speed_regen(&tally, Walk::Beta).unwrap();
        assert_eq!((v.value, v.stderr), (1.0, 0.0));
        let g = gap_estimator(&tally).unwrap();
        assert_eq!(
            (g.estimate.value, g.estimate.stderr, g.p_value),
            (0.0, 0.0, 1.0)
        );
        assert_eq!(speed_gap(&tally).unwrap().value, 0.0);
        let l = tally.mean_length().unwrap();
        assert_eq!((l.value, l.stderr), (1.0, 0.0));
    }

    #[test]
    fn ergodic_stub_path() {
        let mut rec = ErgodicRecorder::new(2_000, ERGODIC_BATCHES).unwrap();
        for t in 1..=2_000u64 {
            rec.observe(t, t);
        }
        let e = rec.estimate(Walk::Beta).unwrap();
        assert_eq!((e.value, e.stderr), (1.0, 0.0));
        assert!(ErgodicRecorder::new(999, 20).is_err());
    }

    #[test]
    fn table_needs_sample() {
        assert!(prob_table(&SegmentTally::default(), 5.0, RegenMode::Strict).is_err());
    }
}
