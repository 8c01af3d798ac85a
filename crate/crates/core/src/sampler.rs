//! Streaming segment samplers.
//!
//! [`SegmentSampler`] runs one long coupled walk and hands out the segments
//! between consecutive confirmed regeneration times as they are confirmed,
//! keeping only the steps of the open segment and pruning the lazy trees
//! behind old cut points. [`RejectionSampler`] runs independent short walks
//! from the root to sample the law conditioned on time 0 being a
//! regeneration time.

use crate::coupling::{BiasParams, CoupledWalk, StepRecord, DEFAULT_TREE_CAPACITY};
use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;
use crate::regen::{Confirmed, RegenConfig, RegenTracker, Segment};
use crate::rng::RandomnessStream;
use crate::segments::{classify, ErgodicRecorder, SegmentSummary};
use crate::tree::{LazyTree, VertexId};

/// Live vertices per tree above which the sampler prunes behind old cuts.
pub const DEFAULT_PRUNE_THRESHOLD: usize = 1 << 16;

type Cut = (VertexId, VertexId);

pub struct SegmentSampler {
    walk: CoupledWalk,
    stream: RandomnessStream,
    tracker: RegenTracker<Cut>,
    buffer: Vec<StepRecord>,
    buffer_start: u64,
    start_depths: (u64, u64),
    opened: bool,
    older_cut: Option<Cut>,
    latest_cut: Option<Cut>,
    confirmed: Vec<Confirmed<Cut>>,
    prune_threshold: usize,
    ergodic: Option<ErgodicRecorder>,
    segments: u64,
}

impl SegmentSampler {
    /// Requires a transient bias, `beta > 1`.
    pub fn new(
        dist: &OffspringDistribution,
        params: BiasParams,
        regen: RegenConfig,
        seed: u64,
    ) -> Result<Self> {
        if params.beta <= 1.0 {
            return Err(Error::NotTransient(params.beta));
        }
        let mut stream = RandomnessStream::new(seed);
        let walk = CoupledWalk::with_capacity(dist, params, &mut stream, DEFAULT_TREE_CAPACITY);
        Ok(Self {
            walk,
            stream,
            tracker: RegenTracker::new(regen, (LazyTree::ROOT, LazyTree::ROOT)),
            buffer: Vec::new(),
            buffer_start: 0,
            start_depths: (0, 0),
            opened: false,
            older_cut: None,
            latest_cut: None,
            confirmed: Vec::new(),
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
            ergodic: None,
            segments: 0,
        })
    }

    pub fn with_prune_threshold(mut self, threshold: usize) -> Self {
        self.prune_threshold = threshold.max(1);
        self
    }

    /// Also records batch-boundary depths for an ergodic speed estimate over
    /// the first `total_steps` steps.
    pub fn with_ergodic(mut self, total_steps: u64, batches: usize) -> Result<Self> {
        self.ergodic = Some(ErgodicRecorder::new(total_steps, batches)?);
        Ok(self)
    }

    pub fn ergodic(&self) -> Option<&ErgodicRecorder> {
        self.ergodic.as_ref()
    }

    pub fn walk(&self) -> &CoupledWalk {
        &self.walk
    }

    pub fn time(&self) -> u64 {
        self.walk.state().time
    }

    pub fn segments_emitted(&self) -> u64 {
        self.segments
    }

    pub fn invalidations(&self) -> u64 {
        self.tracker.invalidations()
    }

    /// One step; calls `on_segment` for every segment closed by it.
    pub fn step<F: FnMut(&Segment<'_>)>(&mut self, on_segment: &mut F) -> Result<()> {
        let rec = self.walk.step(&mut self.stream)?;
        self.buffer.push(rec);
        if let Some(e) = self.ergodic.as_mut() {
            e.observe(rec.beta.depth, rec.beta_eps.depth);
        }
        let st = self.walk.state();
        let here = (st.walker_beta.vertex, st.walker_beta_eps.vertex);
        self.tracker.push(rec.y, here, &mut self.confirmed);
        if self.confirmed.is_empty() {
            return Ok(());
        }
        let confirmed = std::mem::take(&mut self.confirmed);
        for c in &confirmed {
            let cut = (c.time - self.buffer_start) as usize;
            let depths = if cut == 0 {
                self.start_depths
            } else {
                let s = &self.buffer[cut - 1];
                (s.beta.depth, s.beta_eps.depth)
            };
            if self.opened && cut > 0 {
                let seg = Segment::new(self.buffer_start, self.start_depths, &self.buffer[..cut]);
                on_segment(&seg);
                self.segments += 1;
            }
            self.buffer.drain(..cut);
            self.buffer_start = c.time;
            self.start_depths = depths;
            self.opened = true;
            self.older_cut = self.latest_cut.replace(c.payload);
        }
        self.confirmed = confirmed;
        self.confirmed.clear();
        if self.walk.live_vertices() > self.prune_threshold {
            if let Some((a, b)) = self.older_cut {
                self.walk.prune(a, b);
            }
        }
        Ok(())
    }

    pub fn run_steps<F: FnMut(&Segment<'_>)>(&mut self, n: u64, on_segment: &mut F) -> Result<()> {
        for _ in 0..n {
            self.step(on_segment)?;
        }
        Ok(())
    }

    /// Runs until `n` more segments have been emitted.
    pub fn run_segments<F: FnMut(&Segment<'_>)>(
        &mut self,
        n: u64,
        on_segment: &mut F,
    ) -> Result<()> {
        let target = self.segments + n;
        while self.segments < target {
            self.step(on_segment)?;
        }
        Ok(())
    }

    /// Runs until `n` more segments and returns their summaries.
    pub fn collect_summaries(&mut self, n: u64) -> Result<Vec<SegmentSummary>> {
        let params = self.walk.params();
        let mut out = Vec::with_capacity(n as usize);
        self.run_segments(n, &mut |s| out.push(classify(s, params)))?;
        Ok(out)
    }
}

/// Outcome of one walk from the root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    /// Time 0 is a regeneration time.
    pub zero_sr: bool,
    /// First positive confirmed regeneration time.
    pub tau1: u64,
    /// Summary of the block `[0, tau1]`.
    pub summary: SegmentSummary,
}

impl Trial {
    /// `|B|` under the unconditioned law, where `tau1 = 0` whenever time 0
    /// is itself a regeneration time.
    pub fn unconditioned_b(&self) -> u32 {
        if self.zero_sr {
            0
        } else {
            self.summary.b_count
        }
    }
}

/// Independent walks from the root, all drawing from one continuing stream.
pub struct RejectionSampler {
    dist: OffspringDistribution,
    params: BiasParams,
    regen: RegenConfig,
    stream: RandomnessStream,
    records: Vec<StepRecord>,
    confirmed: Vec<Confirmed<()>>,
}

impl RejectionSampler {
    pub fn new(
        dist: &OffspringDistribution,
        params: BiasParams,
        regen: RegenConfig,
        seed: u64,
    ) -> Result<Self> {
        if params.beta <= 1.0 {
            return Err(Error::NotTransient(params.beta));
        }
        Ok(Self {
            dist: dist.clone(),
            params,
            regen,
            stream: RandomnessStream::new(seed),
            records: Vec::new(),
            confirmed: Vec::new(),
        })
    }

    /// Runs a fresh coupled walk until its first positive regeneration time
    /// is confirmed.
    pub fn trial(&mut self) -> Result<Trial> {
        let mut walk = CoupledWalk::with_capacity(
            &self.dist,
            self.params,
            &mut self.stream,
            DEFAULT_TREE_CAPACITY,
        );
        let mut tracker = RegenTracker::new(self.regen, ());
        self.records.clear();
        let mut zero_sr = false;
        loop {
            let rec = walk.step(&mut self.stream)?;
            self.records.push(rec);
            tracker.push(rec.y, (), &mut self.confirmed);
            for c in self.confirmed.drain(..) {
                if c.time == 0 {
                    zero_sr = true;
                    continue;
                }
                let seg = Segment::new(0, (0, 0), &self.records[..c.time as usize]);
                let summary = classify(&seg, self.params);
                return Ok(Trial {
                    zero_sr,
                    tau1: c.time,
                    summary,
                });
            }
        }
    }

    /// Decides only whether time 0 is a regeneration time, from the `Y` walk
    /// alone.
    pub fn zero_sr_trial(&mut self) -> bool {
        let q1 = self.params.q1();
        let (mode, margin) = (self.regen.mode, self.regen.margin);
        let mut y = 0i64;
        loop {
            y += if self.stream.next_uniform() <= q1 {
                -1
            } else {
                1
            };
            if mode.breaks(y, 0) {
                return false;
            }
            if y > i64::from(margin) {
                return true;
            }
        }
    }
}
