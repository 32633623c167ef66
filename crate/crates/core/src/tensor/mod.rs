//! Event data model, the sparse `N x N x U` interaction tensor, label
//! partitions and block sufficient statistics.

mod partition;
mod stats;

pub use partition::{NodePartition, Partition, TimePartition};
pub(crate) use stats::check_move;
pub use stats::BlockStats;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// How node pairs are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Ordered pairs, self-loops allowed: every `(i, j, u)` is its own cell.
    #[default]
    Directed,
    /// Unordered pairs `i < j`, no self-loops.
    Undirected,
}

impl Mode {
    /// Canonical block key for the cluster pair `(k, g)`.
    #[inline]
    pub fn block(self, k: usize, g: usize) -> (usize, usize) {
        match self {
            Mode::Directed => (k, g),
            Mode::Undirected if k <= g => (k, g),
            Mode::Undirected => (g, k),
        }
    }

    /// Number of node pairs between clusters of sizes `nk` and `ng`.
    /// `same` marks a diagonal block (`k == g`).
    #[inline]
    pub fn pair_count(self, nk: usize, ng: usize, same: bool) -> u64 {
        let (nk, ng) = (nk as u64, ng as u64);
        match self {
            Mode::Undirected if same => nk * nk.saturating_sub(1) / 2,
            _ => nk * ng,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Directed => f.write_str("directed"),
            Mode::Undirected => f.write_str("undirected"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "directed" => Ok(Mode::Directed),
            "undirected" => Ok(Mode::Undirected),
            other => Err(Error::Contract(format!(
                "unknown tensor mode `{other}` (expected `directed` or `undirected`)"
            ))),
        }
    }
}

/// Number of interactions between two nodes inside one time bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub source: usize,
    pub target: usize,
    pub bin: usize,
    pub count: u64,
}

impl EventRecord {
    pub fn new(source: usize, target: usize, bin: usize, count: u64) -> Self {
        Self {
            source,
            target,
            bin,
            count,
        }
    }
}

/// A stored non-zero cell of the tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry {
    pub source: usize,
    pub target: usize,
    pub bin: usize,
    pub count: u64,
}

/// Sparse interaction counts over `(source, target, bin)`.
///
/// Entries are kept sorted by key. In undirected mode every key satisfies
/// `source < target`. Per-node and per-bin incidence lists make single-label
/// moves proportional to the degree of the moved element.
#[derive(Debug, Clone)]
pub struct InteractionTensor {
    num_nodes: usize,
    num_bins: usize,
    mode: Mode,
    entries: Vec<Entry>,
    node_index: Vec<Vec<usize>>,
    bin_index: Vec<Vec<usize>>,
    total_count: u64,
    log_fact_const: f64,
}

/// Equality over shape, mode and stored cells; the indexes are derived.
impl PartialEq for InteractionTensor {
    fn eq(&self, other: &Self) -> bool {
        self.num_nodes == other.num_nodes
            && self.num_bins == other.num_bins
            && self.mode == other.mode
            && self.entries == other.entries
    }
}

impl InteractionTensor {
    /// Builds a tensor from raw records, summing duplicate keys.
    ///
    /// Undirected mode canonicalizes `(a, b)` to `(min, max)` before summing and
    /// rejects self-loops. Zero-count records are dropped.
    pub fn from_records(records: &[EventRecord], num_nodes: usize, num_bins: usize, mode: Mode) -> Result<Self> {
        if num_nodes == 0 || num_bins == 0 {
            return Err(Error::Contract(format!(
                "tensor needs at least one node and one bin (got N={num_nodes}, U={num_bins})"
            )));
        }
        let mut cells: BTreeMap<(usize, usize, usize), u64> = BTreeMap::new();
        for (index, r) in records.iter().enumerate() {
            if r.source >= num_nodes || r.target >= num_nodes || r.bin >= num_bins {
                return Err(Error::Bounds {
                    index,
                    detail: format!(
                        "({}, {}, {}) with N={num_nodes}, U={num_bins}",
                        r.source, r.target, r.bin
                    ),
                });
            }
            if mode == Mode::Undirected && r.source == r.target {
                return Err(Error::SelfLoop { index, node: r.source });
            }
            if r.count == 0 {
                continue;
            }
            let (s, t) = mode.block(r.source, r.target);
            *cells.entry((s, t, r.bin)).or_insert(0) += r.count;
        }

        let entries: Vec<Entry> = cells
            .into_iter()
            .map(|((source, target, bin), count)| Entry {
                source,
                target,
                bin,
                count,
            })
            .collect();

        let mut node_index = vec![Vec::new(); num_nodes];
        let mut bin_index = vec![Vec::new(); num_bins];
        let mut total_count = 0u64;
        let mut lf_cache: HashMap<u64, f64> = HashMap::new();
        let mut log_fact_const = 0.0;
        for (e_id, e) in entries.iter().enumerate() {
            node_index[e.source].push(e_id);
            if e.target != e.source {
                node_index[e.target].push(e_id);
            }
            bin_index[e.bin].push(e_id);
            total_count += e.count;
            log_fact_const += *lf_cache
                .entry(e.count)
                .or_insert_with(|| ln_gamma(e.count as f64 + 1.0));
        }

        Ok(Self {
            num_nodes,
            num_bins,
            mode,
            entries,
            node_index,
            bin_index,
            total_count,
            log_fact_const,
        })
    }

    /// All-zero tensor.
    pub fn empty(num_nodes: usize, num_bins: usize, mode: Mode) -> Result<Self> {
        Self::from_records(&[], num_nodes, num_bins, mode)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    /// `sum ln(n!)` over stored cells; label-invariant.
    pub fn log_fact_const(&self) -> f64 {
        self.log_fact_const
    }

    /// Entries incident to `node` (a self-loop is listed once).
    pub fn node_entries(&self, node: usize) -> impl Iterator<Item = &Entry> + '_ {
        self.node_index[node].iter().map(move |&e| &self.entries[e])
    }

    pub fn bin_entries(&self, bin: usize) -> impl Iterator<Item = &Entry> + '_ {
        self.bin_index[bin].iter().map(move |&e| &self.entries[e])
    }

    pub fn node_degree(&self, node: usize) -> usize {
        self.node_index[node].len()
    }

    /// Count stored at `(source, target, bin)`, canonicalized for undirected mode.
    pub fn get(&self, source: usize, target: usize, bin: usize) -> u64 {
        let (s, t) = self.mode.block(source, target);
        self.entries
            .binary_search_by(|e| (e.source, e.target, e.bin).cmp(&(s, t, bin)))
            .map(|i| self.entries[i].count)
            .unwrap_or(0)
    }

    /// Total interactions per bin.
    pub fn bin_totals(&self) -> Vec<u64> {
        (0..self.num_bins)
            .map(|u| self.bin_entries(u).map(|e| e.count).sum())
            .collect()
    }

    /// Stored cells as records.
    pub fn records(&self) -> Vec<EventRecord> {
        self.entries
            .iter()
            .map(|e| EventRecord::new(e.source, e.target, e.bin, e.count))
            .collect()
    }
}

/// Builds an [`InteractionTensor`]; see [`InteractionTensor::from_records`].
pub fn build_tensor(
    records: &[EventRecord],
    num_nodes: usize,
    num_bins: usize,
    mode: Mode,
) -> Result<InteractionTensor> {
    InteractionTensor::from_records(records, num_nodes, num_bins, mode)
}
