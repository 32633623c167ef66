//! Greedy ICL maximization over node labels, time labels and the number of
//! clusters on each axis.
//!
//! Each restart draws `k_max` node clusters and `d_max` time clusters
//! uniformly at random, then cycles node sweep, time sweep, node merges and
//! time merges until a whole cycle accepts nothing. Clusters only ever
//! disappear (by merge or by their last member leaving), never split.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::icl::{self, Axis, Hyperparameters, IclValue, ModelState, RateEstimate};
use crate::tensor::{BlockStats, InteractionTensor, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Initial number of node clusters (clamped to N).
    pub k_max: usize,
    /// Initial number of time clusters (clamped to U).
    pub d_max: usize,
    pub max_sweeps: usize,
    pub improvement_epsilon: f64,
    pub num_restarts: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k_max: 10,
            d_max: 10,
            max_sweeps: 100,
            improvement_epsilon: 1e-10,
            num_restarts: 5,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 || self.d_max == 0 || self.num_restarts == 0 || self.max_sweeps == 0 {
            return Err(Error::Contract(
                "k_max, d_max, num_restarts and max_sweeps must all be positive".into(),
            ));
        }
        if self.improvement_epsilon.is_nan() || self.improvement_epsilon < 0.0 {
            return Err(Error::Contract("improvement_epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    NodeMove,
    TimeMove,
    NodeMerge,
    TimeMerge,
}

/// One accepted step of the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub sweep: usize,
    pub kind: MoveKind,
    pub delta: f64,
    pub icl_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub node_partition: Partition,
    pub time_partition: Partition,
    pub k: usize,
    pub d: usize,
    pub icl: IclValue,
    pub rates: RateEstimate,
    pub stats: BlockStats,
    pub trace: Vec<TraceStep>,
    pub sweeps: usize,
    pub restart_id: usize,
}

impl FitResult {
    /// Pooled intensity `sum S / (delta * sum R)` of each time cluster.
    pub fn time_cluster_intensity(&self, h: &Hyperparameters) -> Vec<f64> {
        (0..self.d)
            .map(|t| {
                let (mut s, mut r) = (0u64, 0u64);
                for a in 0..self.k {
                    for b in 0..self.k {
                        if self.stats.is_free_block(a, b) {
                            s += self.stats.s(a, b, t);
                            r += self.stats.r(a, b, t);
                        }
                    }
                }
                if r == 0 {
                    0.0
                } else {
                    s as f64 / (h.delta * r as f64)
                }
            })
            .collect()
    }
}

/// Single-writer search loop over one [`ModelState`].
pub struct Search<'t> {
    state: ModelState<'t>,
    rng: ChaCha8Rng,
    eps: f64,
    current: f64,
    sweep: usize,
    trace: Vec<TraceStep>,
}

impl<'t> Search<'t> {
    pub fn new(state: ModelState<'t>, rng: ChaCha8Rng, eps: f64) -> Self {
        let current = state.icl().total;
        Self {
            state,
            rng,
            eps,
            current,
            sweep: 0,
            trace: Vec::new(),
        }
    }

    pub fn state(&self) -> &ModelState<'t> {
        &self.state
    }

    pub fn trace(&self) -> &[TraceStep] {
        &self.trace
    }

    /// Running ICL: initial value plus accepted deltas.
    pub fn current_icl(&self) -> f64 {
        self.current
    }

    fn record(&mut self, kind: MoveKind, delta: f64) {
        self.current += delta;
        self.trace.push(TraceStep {
            sweep: self.sweep,
            kind,
            delta,
            icl_after: self.current,
        });
    }

    /// One pass over all nodes in shuffled order, applying each node's best
    /// reassignment when it improves the ICL. A node alone in its cluster is
    /// evaluated as a merge of that cluster into the target.
    pub fn node_sweep(&mut self) -> Result<bool> {
        let mut order: Vec<usize> = (0..self.state.nodes().len()).collect();
        order.shuffle(&mut self.rng);
        let mut improved = false;
        for node in order {
            let k = self.state.nodes().num_clusters();
            if k == 1 {
                break;
            }
            let source = self.state.nodes().label(node);
            let singleton = self.state.nodes().size(source) == 1;
            let profile = (!singleton).then(|| self.state.node_profile(node));
            let mut best: Option<(usize, f64)> = None;
            for target in (0..k).filter(|&t| t != source) {
                let delta = match &profile {
                    Some(p) => self.state.delta_node_move_with(p, target),
                    None => self.state.delta_merge(Axis::Node, target, source)?,
                };
                if best.is_none_or(|(_, b)| delta > b) {
                    best = Some((target, delta));
                }
            }
            if let Some((target, delta)) = best {
                if delta > self.eps {
                    if singleton {
                        self.state.apply_merge(Axis::Node, target, source)?;
                        self.record(MoveKind::NodeMerge, delta);
                    } else {
                        self.state.apply_node_move(node, target)?;
                        self.record(MoveKind::NodeMove, delta);
                    }
                    improved = true;
                }
            }
        }
        Ok(improved)
    }

    /// Mirror of [`Self::node_sweep`] over time bins.
    pub fn time_sweep(&mut self) -> Result<bool> {
        let mut order: Vec<usize> = (0..self.state.times().len()).collect();
        order.shuffle(&mut self.rng);
        let mut improved = false;
        for bin in order {
            let d = self.state.times().num_clusters();
            if d == 1 {
                break;
            }
            let source = self.state.times().label(bin);
            let singleton = self.state.times().size(source) == 1;
            let profile = (!singleton).then(|| self.state.time_profile(bin));
            let mut best: Option<(usize, f64)> = None;
            for target in (0..d).filter(|&t| t != source) {
                let delta = match &profile {
                    Some(p) => self.state.delta_time_move_with(p, target),
                    None => self.state.delta_merge(Axis::Time, target, source)?,
                };
                if best.is_none_or(|(_, b)| delta > b) {
                    best = Some((target, delta));
                }
            }
            if let Some((target, delta)) = best {
                if delta > self.eps {
                    if singleton {
                        self.state.apply_merge(Axis::Time, target, source)?;
                        self.record(MoveKind::TimeMerge, delta);
                    } else {
                        self.state.apply_time_move(bin, target)?;
                        self.record(MoveKind::TimeMove, delta);
                    }
                    improved = true;
                }
            }
        }
        Ok(improved)
    }

    /// Repeatedly applies the best improving merge of two clusters on `axis`.
    pub fn merge_phase(&mut self, axis: Axis) -> Result<bool> {
        let kind = match axis {
            Axis::Node => MoveKind::NodeMerge,
            Axis::Time => MoveKind::TimeMerge,
        };
        let mut improved = false;
        loop {
            let count = match axis {
                Axis::Node => self.state.nodes().num_clusters(),
                Axis::Time => self.state.times().num_clusters(),
            };
            let mut best: Option<(usize, usize, f64)> = None;
            for keep in 0..count {
                for absorbed in keep + 1..count {
                    let delta = self.state.delta_merge(axis, keep, absorbed)?;
                    if best.is_none_or(|(_, _, b)| delta > b) {
                        best = Some((keep, absorbed, delta));
                    }
                }
            }
            match best {
                Some((keep, absorbed, delta)) if delta > self.eps => {
                    self.state.apply_merge(axis, keep, absorbed)?;
                    self.record(kind, delta);
                    improved = true;
                }
                _ => return Ok(improved),
            }
        }
    }

    /// Runs full cycles until one accepts nothing or `max_sweeps` is hit.
    /// Returns the number of cycles run.
    pub fn run(&mut self, max_sweeps: usize) -> Result<usize> {
        while self.sweep < max_sweeps {
            self.sweep += 1;
            let mut improved = self.node_sweep()?;
            improved |= self.time_sweep()?;
            improved |= self.merge_phase(Axis::Node)?;
            improved |= self.merge_phase(Axis::Time)?;
            if !improved {
                break;
            }
        }
        Ok(self.sweep)
    }

    /// Revalidates the running ICL from scratch and packages the result.
    pub fn finish(self, restart_id: usize) -> Result<FitResult> {
        let sweeps = self.sweep;
        let running = self.current;
        let h = *self.state.hyperparameters();
        let tensor = self.state.tensor();
        let (c, y, _) = self.state.into_parts();
        // Revalidate from scratch so incremental drift can never be reported.
        let stats = BlockStats::compute(tensor, &c, &y)?;
        let value = icl::icl_from_stats(&stats, &c, &y, &h);
        if (value.total - running).abs() > 1e-6 * running.abs().max(1.0) {
            return Err(Error::Contract(format!(
                "incremental ICL {running} drifted from full evaluation {}",
                value.total
            )));
        }
        Ok(FitResult {
            k: c.num_clusters(),
            d: y.num_clusters(),
            rates: icl::posterior_rates(&stats, &h),
            node_partition: c,
            time_partition: y,
            icl: value,
            stats,
            trace: self.trace,
            sweeps,
            restart_id,
        })
    }
}

/// Uniform random labels over `k` clusters with every cluster non-empty.
pub fn random_partition<R: Rng>(n: usize, k: usize, rng: &mut R) -> Result<Partition> {
    let k = k.clamp(1, n.max(1));
    let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let donors: Vec<usize> = (0..n).filter(|&i| sizes[labels[i]] >= 2).collect();
        let i = donors[rng.random_range(0..donors.len())];
        sizes[labels[i]] -= 1;
        labels[i] = empty;
        sizes[empty] = 1;
    }
    Partition::new(labels)
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Greedy search started from the given labels.
pub fn fit_from(
    tensor: &InteractionTensor,
    h: &Hyperparameters,
    c: Partition,
    y: Partition,
    cfg: &SearchConfig,
    restart_id: usize,
) -> Result<FitResult> {
    let state = ModelState::new(tensor, *h, c, y)?;
    let mut search = Search::new(state, restart_rng(cfg.seed, restart_id), cfg.improvement_epsilon);
    search.run(cfg.max_sweeps)?;
    search.finish(restart_id)
}

fn single_restart(
    tensor: &InteractionTensor,
    h: &Hyperparameters,
    cfg: &SearchConfig,
    restart_id: usize,
) -> Result<FitResult> {
    let mut rng = restart_rng(cfg.seed, restart_id);
    let c = random_partition(tensor.num_nodes(), cfg.k_max, &mut rng)?;
    let y = random_partition(tensor.num_bins(), cfg.d_max, &mut rng)?;
    let state = ModelState::new(tensor, *h, c, y)?;
    let mut search = Search::new(state, rng, cfg.improvement_epsilon);
    search.run(cfg.max_sweeps)?;
    search.finish(restart_id)
}

/// Best of `num_restarts` independent greedy searches by final ICL; ties go
/// to the lowest restart id. Restarts run on the rayon pool.
pub fn greedy_fit(tensor: &InteractionTensor, h: &Hyperparameters, cfg: &SearchConfig) -> Result<FitResult> {
    h.validate()?;
    cfg.validate()?;
    let fits: Vec<FitResult> = (0..cfg.num_restarts)
        .into_par_iter()
        .map(|r| single_restart(tensor, h, cfg, r))
        .collect::<Result<_>>()?;
    let mut best: Option<FitResult> = None;
    for fit in fits {
        if best.as_ref().is_none_or(|b| fit.icl.total > b.icl.total) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}
