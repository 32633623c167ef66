//! Exact integrated classification likelihood under Gamma-Poisson and
//! Dirichlet-multinomial conjugacy, plus incremental deltas for single-label
//! moves and cluster merges.
//!
//! For a partition pair `(c, y)` with block statistics `S`, `R`:
//!
//! ```text
//! ICL = sum_{free blocks} [ a ln b - lnG(a) + S ln(delta) + lnG(S + a) - (S + a) ln(delta R + b) ]
//!       - sum_cells ln(n!)
//!       + lnG(alpha K) - K lnG(alpha) + sum_k lnG(|A_k| + alpha) - lnG(N + alpha K)
//!       + lnG(gamma D) - D lnG(gamma) + sum_d lnG(|C_d| + gamma) - lnG(U + gamma D)
//! ```
//!
//! Every Gamma function is evaluated in log space.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::tensor::{BlockStats, InteractionTensor, Mode, Partition};

/// Conjugate prior parameters and bin width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Gamma shape for block rates.
    pub a: f64,
    /// Gamma rate for block rates.
    pub b: f64,
    /// Dirichlet concentration over node clusters.
    pub alpha: f64,
    /// Dirichlet concentration over time clusters.
    pub gamma: f64,
    /// Bin width.
    pub delta: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            alpha: 1.0,
            gamma: 1.0,
            delta: 1.0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a", self.a),
            ("b", self.b),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Contract(format!(
                    "hyperparameter {name} must be finite and > 0 (got {v})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IclValue {
    pub total: f64,
    /// Integrated emission term `log nu(N | c, y, K, D)`.
    pub emission_term: f64,
    /// Integrated label term `log nu(c, y | K, D)`.
    pub label_term: f64,
}

impl IclValue {
    fn new(emission_term: f64, label_term: f64) -> Self {
        Self {
            total: emission_term + label_term,
            emission_term,
            label_term,
        }
    }
}

/// Posterior mean block rates `(S + a) / (delta R + b)`, shape `K x K x D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    k: usize,
    d: usize,
    rates: Vec<f64>,
}

impl RateEstimate {
    pub fn get(&self, k: usize, g: usize, d: usize) -> f64 {
        self.rates[(k * self.k + g) * self.d + d]
    }

    pub fn num_node_clusters(&self) -> usize {
        self.k
    }

    pub fn num_time_clusters(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rates
    }
}

/// Per-block integrated Poisson-Gamma marginal, with the constants hoisted.
#[derive(Debug, Clone, Copy)]
struct BlockTerm {
    a: f64,
    b: f64,
    delta: f64,
    ln_delta: f64,
    prior_const: f64,
}

impl BlockTerm {
    fn new(h: &Hyperparameters) -> Self {
        Self {
            a: h.a,
            b: h.b,
            delta: h.delta,
            ln_delta: h.delta.ln(),
            prior_const: h.a * h.b.ln() - ln_gamma(h.a),
        }
    }

    #[inline]
    fn eval(&self, s: u64, r: u64) -> f64 {
        let s = s as f64;
        self.prior_const + s * self.ln_delta + ln_gamma(s + self.a)
            - (s + self.a) * (self.delta * r as f64 + self.b).ln()
    }
}

/// Integrated emission log-likelihood, summed over blocks in lexicographic
/// `(k, g, d)` order.
pub fn log_emission(stats: &BlockStats, h: &Hyperparameters) -> f64 {
    let term = BlockTerm::new(h);
    let (kk, dd) = (stats.num_node_clusters(), stats.num_time_clusters());
    let mut sum = 0.0;
    for k in 0..kk {
        for g in 0..kk {
            if !stats.is_free_block(k, g) {
                continue;
            }
            for d in 0..dd {
                sum += term.eval(stats.s(k, g, d), stats.r(k, g, d));
            }
        }
    }
    sum - stats.log_fact_const()
}

fn dirichlet_term(sizes: &[usize], conc: f64) -> f64 {
    let k = sizes.len() as f64;
    let n: usize = sizes.iter().sum();
    let mut sum = ln_gamma(conc * k) - k * ln_gamma(conc) - ln_gamma(n as f64 + conc * k);
    for &s in sizes {
        sum += ln_gamma(s as f64 + conc);
    }
    sum
}

/// Integrated label log-prior for the given cluster sizes.
pub fn log_label_prior(node_sizes: &[usize], time_sizes: &[usize], h: &Hyperparameters) -> f64 {
    dirichlet_term(node_sizes, h.alpha) + dirichlet_term(time_sizes, h.gamma)
}

/// Full ICL from scratch.
pub fn icl(tensor: &InteractionTensor, c: &Partition, y: &Partition, h: &Hyperparameters) -> Result<IclValue> {
    h.validate()?;
    let stats = BlockStats::compute(tensor, c, y)?;
    Ok(icl_from_stats(&stats, c, y, h))
}

pub fn icl_from_stats(stats: &BlockStats, c: &Partition, y: &Partition, h: &Hyperparameters) -> IclValue {
    IclValue::new(log_emission(stats, h), log_label_prior(c.sizes(), y.sizes(), h))
}

pub fn posterior_rates(stats: &BlockStats, h: &Hyperparameters) -> RateEstimate {
    let (k, d) = (stats.num_node_clusters(), stats.num_time_clusters());
    let mut rates = Vec::with_capacity(k * k * d);
    for a in 0..k {
        for b in 0..k {
            let (ca, cb) = stats.mode().block(a, b);
            for t in 0..d {
                let s = stats.s(ca, cb, t) as f64;
                let r = stats.r(ca, cb, t) as f64;
                rates.push((s + h.a) / (h.delta * r + h.b));
            }
        }
    }
    RateEstimate { k, d, rates }
}

/// Which label vector a merge or move acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Node,
    Time,
}

/// Counts incident to one node, bucketed by the other endpoint's cluster and
/// the time cluster. Undirected tensors only use `out`.
#[derive(Debug, Clone)]
pub struct NodeProfile {
    node: usize,
    out: Vec<i64>,
    inn: Vec<i64>,
    selfc: Vec<i64>,
}

/// Counts of one bin, bucketed by canonical node-cluster block.
#[derive(Debug, Clone)]
pub struct TimeProfile {
    bin: usize,
    slice: Vec<i64>,
}

/// A partition pair with its cached block statistics, supporting cheap
/// delta-ICL evaluation and committed updates.
#[derive(Debug, Clone)]
pub struct ModelState<'t> {
    tensor: &'t InteractionTensor,
    h: Hyperparameters,
    term: BlockTerm,
    c: Partition,
    y: Partition,
    stats: BlockStats,
}

impl<'t> ModelState<'t> {
    pub fn new(tensor: &'t InteractionTensor, h: Hyperparameters, c: Partition, y: Partition) -> Result<Self> {
        h.validate()?;
        let stats = BlockStats::compute(tensor, &c, &y)?;
        Ok(Self {
            tensor,
            term: BlockTerm::new(&h),
            h,
            c,
            y,
            stats,
        })
    }

    pub fn tensor(&self) -> &'t InteractionTensor {
        self.tensor
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.h
    }

    pub fn nodes(&self) -> &Partition {
        &self.c
    }

    pub fn times(&self) -> &Partition {
        &self.y
    }

    pub fn stats(&self) -> &BlockStats {
        &self.stats
    }

    pub fn into_parts(self) -> (Partition, Partition, BlockStats) {
        (self.c, self.y, self.stats)
    }

    /// ICL evaluated from the cached statistics.
    pub fn icl(&self) -> IclValue {
        icl_from_stats(&self.stats, &self.c, &self.y, &self.h)
    }

    #[inline]
    fn volume(&self, nk: usize, ng: usize, same: bool, nd: usize) -> u64 {
        self.tensor.mode().pair_count(nk, ng, same) * nd as u64
    }

    pub fn node_profile(&self, node: usize) -> NodeProfile {
        let (k, d) = (self.c.num_clusters(), self.y.num_clusters());
        let mut p = NodeProfile {
            node,
            out: vec![0; k * d],
            inn: vec![0; k * d],
            selfc: vec![0; d],
        };
        let directed = self.tensor.mode() == Mode::Directed;
        for e in self.tensor.node_entries(node) {
            let t = self.y.label(e.bin);
            let n = e.count as i64;
            if e.source == node && e.target == node {
                p.selfc[t] += n;
            } else if e.source == node {
                p.out[self.c.label(e.target) * d + t] += n;
            } else if directed {
                p.inn[self.c.label(e.source) * d + t] += n;
            } else {
                p.out[self.c.label(e.source) * d + t] += n;
            }
        }
        p
    }

    pub fn time_profile(&self, bin: usize) -> TimeProfile {
        let k = self.c.num_clusters();
        let mut slice = vec![0i64; k * k];
        let mode = self.tensor.mode();
        for e in self.tensor.bin_entries(bin) {
            let (a, b) = mode.block(self.c.label(e.source), self.c.label(e.target));
            slice[a * k + b] += e.count as i64;
        }
        TimeProfile { bin, slice }
    }

    /// `ICL(after) - ICL(before)` for moving `node` to `target`.
    pub fn delta_node_move(&self, node: usize, target: usize) -> Result<f64> {
        crate::tensor::check_move(&self.c, node, target)?;
        Ok(self.delta_node_move_with(&self.node_profile(node), target))
    }

    /// Node-move delta from a precomputed profile. The move must be legal.
    pub fn delta_node_move_with(&self, p: &NodeProfile, target: usize) -> f64 {
        let (s, t) = (self.c.label(p.node), target);
        debug_assert!(s != t && self.c.size(s) > 1);
        let kk = self.c.num_clusters();
        let dd = self.y.num_clusters();
        let sizes = self.c.sizes();
        let new_size = |x: usize| {
            if x == s {
                sizes[x] - 1
            } else if x == t {
                sizes[x] + 1
            } else {
                sizes[x]
            }
        };
        let mut delta = 0.0;
        let mut block = |a: usize, b: usize| {
            for d in 0..dd {
                let s_old = self.stats.s(a, b, d);
                let s_new = match self.tensor.mode() {
                    Mode::Directed => {
                        let shift = |x: usize| {
                            let mut v = 0i64;
                            if a == x {
                                v += p.out[b * dd + d];
                            }
                            if b == x {
                                v += p.inn[a * dd + d];
                            }
                            if a == x && b == x {
                                v += p.selfc[d];
                            }
                            v
                        };
                        s_old as i64 + shift(t) - shift(s)
                    }
                    Mode::Undirected => {
                        let shift = |x: usize| {
                            if a == x && b == x {
                                p.out[x * dd + d]
                            } else if a == x {
                                p.out[b * dd + d]
                            } else if b == x {
                                p.out[a * dd + d]
                            } else {
                                0
                            }
                        };
                        s_old as i64 + shift(t) - shift(s)
                    }
                };
                let nd = self.y.size(d);
                let r_new = self.volume(new_size(a), new_size(b), a == b, nd);
                delta += self.term.eval(s_new as u64, r_new) - self.term.eval(s_old, self.stats.r(a, b, d));
            }
        };
        match self.tensor.mode() {
            Mode::Directed => {
                for x in [s, t] {
                    for g in 0..kk {
                        block(x, g);
                    }
                }
                for g in (0..kk).filter(|&g| g != s && g != t) {
                    block(g, s);
                    block(g, t);
                }
            }
            Mode::Undirected => {
                for x in [s, t] {
                    for g in 0..kk {
                        if x == t && g == s {
                            continue;
                        }
                        let (a, b) = Mode::Undirected.block(x, g);
                        block(a, b);
                    }
                }
            }
        }
        let alpha = self.h.alpha;
        delta += ln_gamma((sizes[s] - 1) as f64 + alpha) - ln_gamma(sizes[s] as f64 + alpha)
            + ln_gamma((sizes[t] + 1) as f64 + alpha)
            - ln_gamma(sizes[t] as f64 + alpha);
        delta
    }

    /// `ICL(after) - ICL(before)` for moving `bin` to time cluster `target`.
    pub fn delta_time_move(&self, bin: usize, target: usize) -> Result<f64> {
        crate::tensor::check_move(&self.y, bin, target)?;
        Ok(self.delta_time_move_with(&self.time_profile(bin), target))
    }

    pub fn delta_time_move_with(&self, p: &TimeProfile, target: usize) -> f64 {
        let (s, t) = (self.y.label(p.bin), target);
        debug_assert!(s != t && self.y.size(s) > 1);
        let kk = self.c.num_clusters();
        let mut delta = 0.0;
        for a in 0..kk {
            for b in 0..kk {
                if !self.stats.is_free_block(a, b) {
                    continue;
                }
                let moved = p.slice[a * kk + b];
                for (d, sign, size) in [(s, -1i64, self.y.size(s) - 1), (t, 1i64, self.y.size(t) + 1)] {
                    let s_old = self.stats.s(a, b, d);
                    let s_new = (s_old as i64 + sign * moved) as u64;
                    let r_new = self.volume(self.c.size(a), self.c.size(b), a == b, size);
                    delta += self.term.eval(s_new, r_new) - self.term.eval(s_old, self.stats.r(a, b, d));
                }
            }
        }
        let gamma = self.h.gamma;
        delta += ln_gamma((self.y.size(s) - 1) as f64 + gamma) - ln_gamma(self.y.size(s) as f64 + gamma)
            + ln_gamma((self.y.size(t) + 1) as f64 + gamma)
            - ln_gamma(self.y.size(t) as f64 + gamma);
        delta
    }

    /// `ICL(after) - ICL(before)` for folding cluster `absorbed` into `keep`.
    pub fn delta_merge(&self, axis: Axis, keep: usize, absorbed: usize) -> Result<f64> {
        let count = match axis {
            Axis::Node => self.c.num_clusters(),
            Axis::Time => self.y.num_clusters(),
        };
        if keep == absorbed || keep >= count || absorbed >= count {
            return Err(Error::Contract(format!(
                "invalid {axis:?} merge of cluster {absorbed} into {keep} (count {count})"
            )));
        }
        Ok(match axis {
            Axis::Node => self.delta_node_merge(keep, absorbed),
            Axis::Time => self.delta_time_merge(keep, absorbed),
        })
    }

    fn delta_node_merge(&self, j: usize, l: usize) -> f64 {
        let kk = self.c.num_clusters();
        let dd = self.y.num_clusters();
        let mode = self.tensor.mode();
        let sizes = self.c.sizes();
        let merged = sizes[j] + sizes[l];
        let st = &self.stats;
        let s_at = |a: usize, b: usize, d: usize| {
            let (a, b) = mode.block(a, b);
            st.s(a, b, d)
        };

        let mut before = 0.0;
        for a in 0..kk {
            for b in 0..kk {
                let touches = a == j || a == l || b == j || b == l;
                if !touches || !st.is_free_block(a, b) {
                    continue;
                }
                for d in 0..dd {
                    before += self.term.eval(st.s(a, b, d), st.r(a, b, d));
                }
            }
        }

        let mut after = 0.0;
        for d in 0..dd {
            let nd = self.y.size(d);
            let diag = match mode {
                Mode::Directed => s_at(j, j, d) + s_at(j, l, d) + s_at(l, j, d) + s_at(l, l, d),
                Mode::Undirected => s_at(j, j, d) + s_at(l, l, d) + s_at(j, l, d),
            };
            after += self.term.eval(diag, self.volume(merged, merged, true, nd));
            for g in (0..kk).filter(|&g| g != j && g != l) {
                let r = self.volume(merged, sizes[g], false, nd);
                after += self.term.eval(s_at(j, g, d) + s_at(l, g, d), r);
                if mode == Mode::Directed {
                    after += self.term.eval(s_at(g, j, d) + s_at(g, l, d), r);
                }
            }
        }

        let alpha = self.h.alpha;
        let n = self.c.len() as f64;
        let (k_old, k_new) = (kk as f64, (kk - 1) as f64);
        let prior = ln_gamma(alpha * k_new) - ln_gamma(alpha * k_old) + ln_gamma(alpha) - ln_gamma(n + alpha * k_new)
            + ln_gamma(n + alpha * k_old)
            + ln_gamma(merged as f64 + alpha)
            - ln_gamma(sizes[j] as f64 + alpha)
            - ln_gamma(sizes[l] as f64 + alpha);
        after - before + prior
    }

    fn delta_time_merge(&self, j: usize, l: usize) -> f64 {
        let kk = self.c.num_clusters();
        let dd = self.y.num_clusters();
        let st = &self.stats;
        let merged = self.y.size(j) + self.y.size(l);
        let mut delta = 0.0;
        for a in 0..kk {
            for b in 0..kk {
                if !st.is_free_block(a, b) {
                    continue;
                }
                let r = self.volume(self.c.size(a), self.c.size(b), a == b, merged);
                delta += self.term.eval(st.s(a, b, j) + st.s(a, b, l), r)
                    - self.term.eval(st.s(a, b, j), st.r(a, b, j))
                    - self.term.eval(st.s(a, b, l), st.r(a, b, l));
            }
        }
        let gamma = self.h.gamma;
        let u = self.y.len() as f64;
        let (d_old, d_new) = (dd as f64, (dd - 1) as f64);
        delta + ln_gamma(gamma * d_new) - ln_gamma(gamma * d_old) + ln_gamma(gamma) - ln_gamma(u + gamma * d_new)
            + ln_gamma(u + gamma * d_old)
            + ln_gamma(merged as f64 + gamma)
            - ln_gamma(self.y.size(j) as f64 + gamma)
            - ln_gamma(self.y.size(l) as f64 + gamma)
    }

    pub fn apply_node_move(&mut self, node: usize, target: usize) -> Result<()> {
        self.stats
            .apply_node_move(self.tensor, &self.c, &self.y, node, target)?;
        self.c.move_item(node, target)
    }

    pub fn apply_time_move(&mut self, bin: usize, target: usize) -> Result<()> {
        self.stats.apply_time_move(self.tensor, &self.c, &self.y, bin, target)?;
        self.y.move_item(bin, target)
    }

    /// Folds `absorbed` into `keep`; returns the merged cluster's new index.
    pub fn apply_merge(&mut self, axis: Axis, keep: usize, absorbed: usize) -> Result<usize> {
        match axis {
            Axis::Node => {
                self.stats = self.stats.after_node_merge(&self.c, &self.y, keep, absorbed)?;
                self.c.merge(keep, absorbed)
            }
            Axis::Time => {
                self.stats = self.stats.after_time_merge(&self.c, &self.y, keep, absorbed)?;
                self.y.merge(keep, absorbed)
            }
        }
    }
}
