//! Regeneration times of the integer walk `Y`.
//!
//! A time `n0` is a (strict) regeneration time when `Y_{n0}` is a fresh
//! running maximum and the path never comes back to that level afterwards.
//! The nonstrict variant only forbids going below it. On a finite path a
//! candidate at level `L` is confirmed once the running maximum has reached
//! `L + M + 1`, where `M` is the confirmation margin; candidates closer to the
//! top are undecided.
//!
//! [`detect_regens`] works on a whole path. [`RegenTracker`] is the online
//! equivalent used by the samplers: it confirms candidates as soon as the
//! margin is reached and counts later violations of confirmed times.

use std::collections::VecDeque;

use serde::Serialize;

use crate::coupling::{CoupledTrajectory, StepRecord, Walk};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RegenMode {
    /// Future stays strictly above the level.
    #[default]
    Strict,
    /// Future stays at or above the level.
    Nonstrict,
}

impl RegenMode {
    pub fn is_strict(self) -> bool {
        self == RegenMode::Strict
    }

    /// Does a later value `y` break a regeneration at `level`?
    #[inline]
    pub fn breaks(self, y: i64, level: i64) -> bool {
        match self {
            RegenMode::Strict => y <= level,
            RegenMode::Nonstrict => y < level,
        }
    }
}

impl std::str::FromStr for RegenMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "strict" => Ok(RegenMode::Strict),
            "nonstrict" => Ok(RegenMode::Nonstrict),
            other => Err(format!("unknown regeneration mode {other:?}")),
        }
    }
}

impl std::fmt::Display for RegenMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RegenMode::Strict => "strict",
            RegenMode::Nonstrict => "nonstrict",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegenConfig {
    pub mode: RegenMode,
    pub margin: u32,
}

impl RegenConfig {
    pub fn new(mode: RegenMode, margin: u32) -> Self {
        assert!(margin >= 1, "confirmation margin must be at least 1");
        Self { mode, margin }
    }

    /// Strict mode with the smallest margin `M` such that `beta^-M <= 1e-9`.
    pub fn for_beta(beta: f64) -> Self {
        Self::new(RegenMode::Strict, default_margin(beta))
    }

    pub fn with_mode(self, mode: RegenMode) -> Self {
        Self { mode, ..self }
    }

    #[inline]
    fn confirms(&self, level: i64, record: i64) -> bool {
        record - level > i64::from(self.margin)
    }
}

pub fn default_margin(beta: f64) -> u32 {
    assert!(beta > 1.0, "regeneration needs an upward drift");
    let mut m = 1u32;
    while beta.powi(-(m as i32)) > 1e-9 {
        m += 1;
    }
    m
}

/// Confirmed regeneration times of `y_path` (which starts at `Y_0`).
pub fn detect_regens(y_path: &[i64], config: &RegenConfig) -> Vec<u64> {
    let n = y_path.len();
    if n == 0 {
        return Vec::new();
    }
    let record = *y_path.iter().max().expect("nonempty");
    // future_min[i] = min of y_path[i+1..], +inf past the end.
    let mut future_min = vec![i64::MAX; n];
    for i in (0..n - 1).rev() {
        future_min[i] = future_min[i + 1].min(y_path[i + 1]);
    }
    let mut out = Vec::new();
    let mut past_max = i64::MIN;
    for (i, &y) in y_path.iter().enumerate() {
        let fresh = y > past_max;
        past_max = past_max.max(y);
        if !fresh || !config.confirms(y, record) {
            continue;
        }
        if !config.mode.breaks(future_min[i], y) {
            out.push(i as u64);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ZeroSr {
    Holds,
    Fails,
    Undecided,
}

/// Whether time 0 is a confirmed regeneration time of `y_path`.
pub fn check_zero_sr(y_path: &[i64], config: &RegenConfig) -> ZeroSr {
    let Some(&y0) = y_path.first() else {
        return ZeroSr::Undecided;
    };
    if y_path[1..].iter().any(|&y| config.mode.breaks(y, y0)) {
        return ZeroSr::Fails;
    }
    let record = *y_path.iter().max().expect("nonempty");
    if config.confirms(y0, record) {
        ZeroSr::Holds
    } else {
        ZeroSr::Undecided
    }
}

/// A confirmed regeneration time reported by [`RegenTracker`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confirmed<T> {
    pub time: u64,
    pub level: i64,
    pub payload: T,
}

/// Online regeneration detection over a growing path.
///
/// Each fresh maximum becomes a candidate carrying a payload (for instance
/// the walker positions at that time). Candidates die when the path breaks
/// them and are confirmed when the record clears them by the margin.
#[derive(Debug, Clone)]
pub struct RegenTracker<T> {
    config: RegenConfig,
    time: u64,
    y: i64,
    record: i64,
    candidates: VecDeque<Confirmed<T>>,
    latest_confirmed: Option<i64>,
    latest_invalidated: bool,
    invalidations: u64,
    rejected_origin: bool,
}

impl<T: Copy> RegenTracker<T> {
    /// Tracker at time 0, `Y_0 = 0`, with time 0 as the first candidate.
    pub fn new(config: RegenConfig, origin: T) -> Self {
        let mut candidates = VecDeque::new();
        candidates.push_back(Confirmed {
            time: 0,
            level: 0,
            payload: origin,
        });
        Self {
            config,
            time: 0,
            y: 0,
            record: 0,
            candidates,
            latest_confirmed: None,
            latest_invalidated: false,
            invalidations: 0,
            rejected_origin: false,
        }
    }

    pub fn config(&self) -> &RegenConfig {
        &self.config
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn y(&self) -> i64 {
        self.y
    }

    /// Number of confirmed times later broken by the path.
    pub fn invalidations(&self) -> u64 {
        self.invalidations
    }

    /// Time 0 has been ruled out as a regeneration time.
    pub fn origin_rejected(&self) -> bool {
        self.rejected_origin
    }

    /// Feeds `Y` after one more step and returns newly confirmed times, in
    /// increasing order. `payload` is attached if the new value is a fresh
    /// maximum.
    pub fn push(&mut self, y: i64, payload: T, confirmed: &mut Vec<Confirmed<T>>) {
        debug_assert!((y - self.y).abs() == 1, "nearest-neighbour path");
        self.time += 1;
        let mode = self.config.mode;
        if y < self.y {
            while let Some(last) = self.candidates.back() {
                if !mode.breaks(y, last.level) {
                    break;
                }
                if last.time == 0 {
                    self.rejected_origin = true;
                }
                self.candidates.pop_back();
            }
            if let Some(level) = self.latest_confirmed {
                if !self.latest_invalidated && mode.breaks(y, level) {
                    self.latest_invalidated = true;
                    self.invalidations += 1;
                }
            }
        }
        self.y = y;
        if y > self.record {
            self.record = y;
            self.candidates.push_back(Confirmed {
                time: self.time,
                level: y,
                payload,
            });
        }
        while let Some(front) = self.candidates.front() {
            if !self.config.confirms(front.level, self.record) {
                break;
            }
            let c = self.candidates.pop_front().expect("front exists");
            self.latest_confirmed = Some(c.level);
            self.latest_invalidated = false;
            confirmed.push(c);
        }
    }
}

/// One inter-regeneration block of a coupled run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<'a> {
    pub start: u64,
    pub end: u64,
    /// Step records for times `start+1 ..= end`.
    pub steps: &'a [StepRecord],
    pub gain_beta: i64,
    pub gain_beta_eps: i64,
}

impl<'a> Segment<'a> {
    /// Builds a segment from its steps and the walker depths at `start`.
    pub fn new(start: u64, start_depths: (u64, u64), steps: &'a [StepRecord]) -> Self {
        let last = steps.last().expect("segment has at least one step");
        Self {
            start,
            end: start + steps.len() as u64,
            steps,
            gain_beta: last.beta.depth as i64 - start_depths.0 as i64,
            gain_beta_eps: last.beta_eps.depth as i64 - start_depths.1 as i64,
        }
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn gain(&self, walk: Walk) -> i64 {
        match walk {
            Walk::Beta => self.gain_beta,
            Walk::BetaEps => self.gain_beta_eps,
        }
    }
}

/// Cuts a recorded trajectory at consecutive confirmed regeneration times.
/// The block before the first one and the undecided tail are dropped.
pub fn split_segments<'a>(trajectory: &'a CoupledTrajectory, regens: &[u64]) -> Vec<Segment<'a>> {
    let depth_at = |t: u64| -> (u64, u64) {
        if t == 0 {
            (0, 0)
        } else {
            let s = &trajectory.steps[(t - 1) as usize];
            (s.beta.depth, s.beta_eps.depth)
        }
    };
    regens
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            Segment::new(a, depth_at(a), &trajectory.steps[a as usize..b as usize])
        })
        .collect()
}
