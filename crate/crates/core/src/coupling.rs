//! Three walks driven by one uniform stream.
//!
//! A single uniform `U_n` per step moves the integer walk `Y` (down iff
//! `U_n <= q_1(beta)`), the `beta`-biased tree walk and the
//! `(beta+eps)`-biased tree walk. Each tree walk owns a lazily grown tree;
//! the trees are tied together only through the shared offspring stream,
//! which is consumed once per step at which a new vertex is discovered.
//!
//! At a vertex with `k` children the unit interval is cut as follows:
//!
//! | range                          | `beta` walk | `beta+eps` walk |
//! |--------------------------------|-------------|-----------------|
//! | `[(j-1) e/k, j e/k)`           | parent      | child `j`       |
//! | `[e, q]`                       | parent      | parent          |
//! | `(1 - i p, 1 - (i-1) p]`       | child `i`   | child `i`       |
//!
//! with `p = p_k(beta)`, `q = q_k(beta)` and `e = q_k(beta) - q_k(beta+eps)`.
//! At a root with `m` children, both walks pick child `i` when `U_n` falls in
//! `[(i-1)/m, i/m)`.

use serde::Serialize;

use crate::bounds::{pqeps, Pqe};
use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;
use crate::rng::RandomnessStream;
use crate::tree::{LazyTree, VertexId};

/// Live vertices per tree before a run reports a capacity error.
pub const DEFAULT_TREE_CAPACITY: usize = 1 << 26;

/// Longest trajectory [`run_trajectory`] will record in memory.
pub const MAX_RECORDED_STEPS: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasParams {
    pub beta: f64,
    pub eps: f64,
}

impl BiasParams {
    pub fn new(beta: f64, eps: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidBias(format!(
                "beta must be positive, got {beta}"
            )));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidBias(format!(
                "eps must be nonnegative, got {eps}"
            )));
        }
        Ok(Self { beta, eps })
    }

    /// Simulation-grade parameters: the integer walk must drift upward.
    pub fn transient(beta: f64, eps: f64) -> Result<Self> {
        let params = Self::new(beta, eps)?;
        if beta <= 1.0 {
            return Err(Error::NotTransient(beta));
        }
        Ok(params)
    }

    /// `q_1(beta)`, the down-step threshold of `Y`.
    pub fn q1(&self) -> f64 {
        1.0 / (self.beta + 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Move {
    Parent,
    /// 1-based child index.
    Child(u32),
}

impl Move {
    #[inline]
    pub fn depth_change(self) -> i64 {
        match self {
            Move::Parent => -1,
            Move::Child(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Walk {
    Beta,
    BetaEps,
}

/// A half-open or closed subinterval of `[0, 1]`; only its bounds are stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn len(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0.0
    }
}

/// Interval measures seen by one walk.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub parent: f64,
    pub children: Vec<f64>,
}

impl Marginals {
    pub fn total(&self) -> f64 {
        self.parent + self.children.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingPartition {
    pub children: u32,
    /// `p_k(beta)`, the length of each shared child interval.
    pub p: f64,
    /// `q_k(beta)`.
    pub q: f64,
    /// `eps_k(beta)`, the length of the decoupling region.
    pub split: f64,
}

impl CouplingPartition {
    pub fn new(k: u32, params: BiasParams) -> Self {
        assert!(k >= 1, "leafless vertex");
        let Pqe { p, q, eps } = pqeps(k, params.beta, params.eps);
        Self {
            children: k,
            p,
            q,
            split: eps,
        }
    }

    pub fn beta_parent(&self) -> Interval {
        Interval {
            lo: 0.0,
            hi: self.q,
        }
    }

    pub fn beta_eps_parent(&self) -> Interval {
        Interval {
            lo: self.split,
            hi: self.q,
        }
    }

    /// Shared interval of child `i`, `(1 - i p, 1 - (i-1) p]`.
    pub fn child_interval(&self, i: u32) -> Interval {
        let i = f64::from(i);
        Interval {
            lo: 1.0 - i * self.p,
            hi: 1.0 - (i - 1.0) * self.p,
        }
    }

    /// Decoupling interval sending only the `beta+eps` walk to child `j`.
    pub fn split_interval(&self, j: u32) -> Interval {
        let w = self.split / f64::from(self.children);
        Interval {
            lo: f64::from(j - 1) * w,
            hi: f64::from(j) * w,
        }
    }

    pub fn beta_marginals(&self) -> Marginals {
        Marginals {
            parent: self.beta_parent().len(),
            children: (1..=self.children)
                .map(|i| self.child_interval(i).len())
                .collect(),
        }
    }

    pub fn beta_eps_marginals(&self) -> Marginals {
        Marginals {
            parent: self.beta_eps_parent().len(),
            children: (1..=self.children)
                .map(|i| self.child_interval(i).len() + self.split_interval(i).len())
                .collect(),
        }
    }

    #[inline]
    fn shared_child(&self, u: f64) -> Move {
        let i = ((1.0 - u) / self.p).ceil() as u32;
        Move::Child(i.clamp(1, self.children))
    }

    #[inline]
    pub fn route_beta(&self, u: f64) -> Move {
        if u <= self.q {
            Move::Parent
        } else {
            self.shared_child(u)
        }
    }

    #[inline]
    pub fn route_beta_eps(&self, u: f64) -> Move {
        if u < self.split {
            let j = (u / self.split * f64::from(self.children)).floor() as u32 + 1;
            Move::Child(j.min(self.children))
        } else if u <= self.q {
            // U = q_k has measure zero; it is sent to the parent like [e, q).
            Move::Parent
        } else {
            self.shared_child(u)
        }
    }

    #[inline]
    pub fn route(&self, walk: Walk, u: f64) -> Move {
        match walk {
            Walk::Beta => self.route_beta(u),
            Walk::BetaEps => self.route_beta_eps(u),
        }
    }
}

/// Root rule: child `i` on `[(i-1)/m, i/m)`.
#[inline]
pub fn route_root(u: f64, m: u32) -> Move {
    let i = (u * f64::from(m)).floor() as u32 + 1;
    Move::Child(i.min(m))
}

/// One walker's move within a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WalkerStep {
    /// Child count of the vertex the walker left.
    pub children: u32,
    pub from_root: bool,
    pub mv: Move,
    /// Depth after the move.
    pub depth: u64,
    pub discovered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub u: f64,
    pub y_down: bool,
    /// `Y` after the step.
    pub y: i64,
    pub beta: WalkerStep,
    pub beta_eps: WalkerStep,
    /// Offspring draw consumed at this step, if any walker discovered a vertex.
    pub offspring: Option<u32>,
}

impl StepRecord {
    #[inline]
    pub fn y_increment(&self) -> i64 {
        if self.y_down {
            -1
        } else {
            1
        }
    }

    #[inline]
    pub fn walker(&self, walk: Walk) -> &WalkerStep {
        match walk {
            Walk::Beta => &self.beta,
            Walk::BetaEps => &self.beta_eps,
        }
    }

    /// Change of `depth(beta+eps) - depth(beta)` over this step.
    #[inline]
    pub fn gap_increment(&self) -> i64 {
        self.beta_eps.mv.depth_change() - self.beta.mv.depth_change()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WalkerPosition {
    pub vertex: VertexId,
    pub depth: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoupledState {
    pub time: u64,
    pub walker_beta: WalkerPosition,
    pub walker_beta_eps: WalkerPosition,
    pub y: i64,
    pub decoupled: bool,
    /// First time the walkers occupied different vertices.
    pub delta: Option<u64>,
}

impl CoupledState {
    pub fn position(&self, walk: Walk) -> WalkerPosition {
        match walk {
            Walk::Beta => self.walker_beta,
            Walk::BetaEps => self.walker_beta_eps,
        }
    }

    pub fn depth_gap(&self) -> i64 {
        self.walker_beta_eps.depth as i64 - self.walker_beta.depth as i64
    }
}

/// The coupled walks together with their two lazy trees.
#[derive(Debug, Clone)]
pub struct CoupledWalk {
    dist: OffspringDistribution,
    params: BiasParams,
    q1: f64,
    partitions: Vec<CouplingPartition>,
    trees: [LazyTree; 2],
    state: CoupledState,
}

impl CoupledWalk {
    /// Starts both walkers at the root; the root takes the first offspring draw.
    pub fn new(
        dist: &OffspringDistribution,
        params: BiasParams,
        stream: &mut RandomnessStream,
    ) -> Self {
        Self::with_capacity(dist, params, stream, DEFAULT_TREE_CAPACITY)
    }

    pub fn with_capacity(
        dist: &OffspringDistribution,
        params: BiasParams,
        stream: &mut RandomnessStream,
        capacity: usize,
    ) -> Self {
        let root_children = stream.next_offspring(dist);
        let partitions = (0..=dist.max_degree())
            .map(|k| CouplingPartition::new(k.max(1), params))
            .collect();
        let tree = LazyTree::with_root(root_children, capacity);
        let origin = WalkerPosition {
            vertex: LazyTree::ROOT,
            depth: 0,
        };
        Self {
            dist: dist.clone(),
            params,
            q1: params.q1(),
            partitions,
            trees: [tree.clone(), tree],
            state: CoupledState {
                time: 0,
                walker_beta: origin,
                walker_beta_eps: origin,
                y: 0,
                decoupled: false,
                delta: None,
            },
        }
    }

    pub fn state(&self) -> &CoupledState {
        &self.state
    }

    pub fn params(&self) -> BiasParams {
        self.params
    }

    pub fn distribution(&self) -> &OffspringDistribution {
        &self.dist
    }

    pub fn tree(&self, walk: Walk) -> &LazyTree {
        &self.trees[walk_index(walk)]
    }

    /// Child count of the vertex a walker currently occupies.
    pub fn current_children(&self, walk: Walk) -> u32 {
        let pos = self.state.position(walk);
        self.tree(walk)
            .children(pos.vertex)
            .expect("occupied vertex is live")
    }

    /// Advances all three walks with a fresh uniform from `stream`.
    pub fn step(&mut self, stream: &mut RandomnessStream) -> Result<StepRecord> {
        let u = stream.next_uniform();
        self.step_with_uniform(u, stream)
    }

    /// Advances all three walks with the supplied uniform `u`.
    pub fn step_with_uniform(
        &mut self,
        u: f64,
        stream: &mut RandomnessStream,
    ) -> Result<StepRecord> {
        let time = self.state.time + 1;
        let mut draw = None;
        let beta = self.move_walker(Walk::Beta, u, stream, &mut draw, time)?;
        let beta_eps = self.move_walker(Walk::BetaEps, u, stream, &mut draw, time)?;

        let y_down = u <= self.q1;
        let state = &mut self.state;
        state.time = time;
        state.y += if y_down { -1 } else { 1 };
        if !state.decoupled && state.walker_beta.vertex != state.walker_beta_eps.vertex {
            state.decoupled = true;
            state.delta = Some(time);
        }
        Ok(StepRecord {
            u,
            y_down,
            y: state.y,
            beta,
            beta_eps,
            offspring: draw,
        })
    }

    fn move_walker(
        &mut self,
        walk: Walk,
        u: f64,
        stream: &mut RandomnessStream,
        draw: &mut Option<u32>,
        time: u64,
    ) -> Result<WalkerStep> {
        let idx = walk_index(walk);
        let Self {
            dist,
            partitions,
            trees,
            state,
            ..
        } = self;
        let tree = &mut trees[idx];
        let pos = match walk {
            Walk::Beta => &mut state.walker_beta,
            Walk::BetaEps => &mut state.walker_beta_eps,
        };
        let children = tree.children(pos.vertex).ok_or(Error::PrunedAccess(time))?;
        let from_root = pos.depth == 0;
        let mv = if from_root {
            route_root(u, children)
        } else {
            partitions[children as usize].route(walk, u)
        };
        let discovered = match mv {
            Move::Parent => {
                let parent = tree
                    .parent(pos.vertex)
                    .filter(|&p| tree.is_live(p))
                    .ok_or(Error::PrunedAccess(time))?;
                pos.vertex = parent;
                pos.depth -= 1;
                false
            }
            Move::Child(i) => {
                let (child, fresh) = tree.child_or_insert(pos.vertex, i, || {
                    *draw.get_or_insert_with(|| stream.next_offspring(dist))
                })?;
                pos.vertex = child;
                pos.depth += 1;
                fresh
            }
        };
        Ok(WalkerStep {
            children,
            from_root,
            mv,
            depth: pos.depth,
            discovered,
        })
    }

    /// Drops tree vertices discovered before the given cut vertices.
    pub fn prune(&mut self, cut_beta: VertexId, cut_beta_eps: VertexId) {
        self.trees[0].prune_below(cut_beta);
        self.trees[1].prune_below(cut_beta_eps);
    }

    pub fn live_vertices(&self) -> usize {
        self.trees[0]
            .live_vertices()
            .max(self.trees[1].live_vertices())
    }
}

#[inline]
fn walk_index(walk: Walk) -> usize {
    match walk {
        Walk::Beta => 0,
        Walk::BetaEps => 1,
    }
}

/// A fully recorded run of the coupled walks from the root.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTrajectory {
    pub params: BiasParams,
    pub seed: u64,
    pub root_children: u32,
    pub steps: Vec<StepRecord>,
    pub final_state: CoupledState,
}

impl CoupledTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `Y_0 = 0, Y_1, ..., Y_n`.
    pub fn y_path(&self) -> Vec<i64> {
        std::iter::once(0)
            .chain(self.steps.iter().map(|s| s.y))
            .collect()
    }

    /// Depths at times `0..=n`.
    pub fn depth_path(&self, walk: Walk) -> Vec<u64> {
        std::iter::once(0)
            .chain(self.steps.iter().map(|s| s.walker(walk).depth))
            .collect()
    }

    pub fn decoupling_time(&self) -> Option<u64> {
        self.final_state.delta
    }
}

/// Runs the coupled walks for `n_steps` and keeps every step record.
pub fn run_trajectory(
    dist: &OffspringDistribution,
    params: BiasParams,
    n_steps: u64,
    seed: u64,
) -> Result<CoupledTrajectory> {
    if n_steps == 0 {
        return Err(Error::InsufficientSample(
            "trajectory needs at least one step".into(),
        ));
    }
    if n_steps > MAX_RECORDED_STEPS {
        return Err(Error::Capacity(format!(
            "{n_steps} recorded steps exceed the in-memory limit of {MAX_RECORDED_STEPS}"
        )));
    }
    let mut stream = RandomnessStream::new(seed);
    let capacity = usize::try_from(n_steps + 1).unwrap_or(usize::MAX);
    let mut walk = CoupledWalk::with_capacity(dist, params, &mut stream, capacity);
    let root_children = walk.current_children(Walk::Beta);
    let mut steps = Vec::with_capacity(n_steps as usize);
    for _ in 0..n_steps {
        steps.push(walk.step(&mut stream)?);
    }
    Ok(CoupledTrajectory {
        params,
        seed,
        root_children,
        steps,
        final_state: *walk.state(),
    })
}
