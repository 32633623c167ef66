use serde::{Deserialize, Serialize};

use super::{InteractionTensor, Mode, Partition};
use crate::error::{Error, Result};

/// Block sufficient statistics for a `(c, y)` partition pair.
///
/// `s(k, g, d)` is the interaction count summed over the cells of block
/// `(k, g, d)` and `r(k, g, d)` the number of those cells. In undirected mode
/// counts live on the canonical half `k <= g` (the other half is zero) while
/// `r` is stored symmetrically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    k: usize,
    d: usize,
    mode: Mode,
    s: Vec<u64>,
    r: Vec<u64>,
    log_fact_const: f64,
}

impl BlockStats {
    /// Full computation in `O(nnz + K^2 D)`.
    pub fn compute(tensor: &InteractionTensor, c: &Partition, y: &Partition) -> Result<Self> {
        check_dims(tensor, c, y)?;
        let (k, d) = (c.num_clusters(), y.num_clusters());
        let mode = tensor.mode();
        let mut stats = Self {
            k,
            d,
            mode,
            s: vec![0; k * k * d],
            r: vec![0; k * k * d],
            log_fact_const: tensor.log_fact_const(),
        };
        for e in tensor.entries() {
            let (a, b) = mode.block(c.label(e.source), c.label(e.target));
            let idx = stats.idx(a, b, y.label(e.bin));
            stats.s[idx] += e.count;
        }
        for a in 0..k {
            for b in 0..k {
                for t in 0..d {
                    stats.set_volume(a, b, t, c.sizes(), y.sizes());
                }
            }
        }
        Ok(stats)
    }

    #[inline]
    fn idx(&self, k: usize, g: usize, d: usize) -> usize {
        (k * self.k + g) * self.d + d
    }

    #[inline]
    fn set_volume(&mut self, k: usize, g: usize, d: usize, node_sizes: &[usize], time_sizes: &[usize]) {
        let idx = self.idx(k, g, d);
        self.r[idx] = self.mode.pair_count(node_sizes[k], node_sizes[g], k == g) * time_sizes[d] as u64;
    }

    pub fn num_node_clusters(&self) -> usize {
        self.k
    }

    pub fn num_time_clusters(&self) -> usize {
        self.d
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    #[inline]
    pub fn s(&self, k: usize, g: usize, d: usize) -> u64 {
        self.s[self.idx(k, g, d)]
    }

    #[inline]
    pub fn r(&self, k: usize, g: usize, d: usize) -> u64 {
        self.r[self.idx(k, g, d)]
    }

    pub fn log_fact_const(&self) -> f64 {
        self.log_fact_const
    }

    pub fn total_count(&self) -> u64 {
        self.s.iter().sum()
    }

    /// Whether `(k, g)` is a block that carries its own parameter: all
    /// pairs when directed, `k <= g` when undirected.
    #[inline]
    pub fn is_free_block(&self, k: usize, g: usize) -> bool {
        self.mode == Mode::Directed || k <= g
    }

    /// Statistics after moving `node` to cluster `target`, computed
    /// incrementally from the node's incident cells.
    pub fn after_node_move(
        &self,
        tensor: &InteractionTensor,
        c: &Partition,
        y: &Partition,
        node: usize,
        target: usize,
    ) -> Result<Self> {
        let mut next = self.clone();
        next.apply_node_move(tensor, c, y, node, target)?;
        Ok(next)
    }

    /// Statistics after moving `bin` to time cluster `target`.
    pub fn after_time_move(
        &self,
        tensor: &InteractionTensor,
        c: &Partition,
        y: &Partition,
        bin: usize,
        target: usize,
    ) -> Result<Self> {
        let mut next = self.clone();
        next.apply_time_move(tensor, c, y, bin, target)?;
        Ok(next)
    }

    /// In-place form of [`Self::after_node_move`]; `c` is the pre-move partition.
    pub fn apply_node_move(
        &mut self,
        tensor: &InteractionTensor,
        c: &Partition,
        y: &Partition,
        node: usize,
        target: usize,
    ) -> Result<()> {
        self.check_shape(c, y)?;
        let source = check_move(c, node, target)?;
        let relabel = |i: usize| if i == node { target } else { c.label(i) };
        for e in tensor.node_entries(node) {
            let d = y.label(e.bin);
            let (a, b) = self.mode.block(c.label(e.source), c.label(e.target));
            let old = self.idx(a, b, d);
            self.s[old] -= e.count;
            let (a, b) = self.mode.block(relabel(e.source), relabel(e.target));
            let new = self.idx(a, b, d);
            self.s[new] += e.count;
        }
        let mut sizes = c.sizes().to_vec();
        sizes[source] -= 1;
        sizes[target] += 1;
        for x in [source, target] {
            for g in 0..self.k {
                for t in 0..self.d {
                    self.set_volume(x, g, t, &sizes, y.sizes());
                    self.set_volume(g, x, t, &sizes, y.sizes());
                }
            }
        }
        Ok(())
    }

    /// In-place form of [`Self::after_time_move`]; `y` is the pre-move partition.
    pub fn apply_time_move(
        &mut self,
        tensor: &InteractionTensor,
        c: &Partition,
        y: &Partition,
        bin: usize,
        target: usize,
    ) -> Result<()> {
        self.check_shape(c, y)?;
        let source = check_move(y, bin, target)?;
        for e in tensor.bin_entries(bin) {
            let (a, b) = self.mode.block(c.label(e.source), c.label(e.target));
            let old = self.idx(a, b, source);
            let new = self.idx(a, b, target);
            self.s[old] -= e.count;
            self.s[new] += e.count;
        }
        let mut sizes = y.sizes().to_vec();
        sizes[source] -= 1;
        sizes[target] += 1;
        for a in 0..self.k {
            for b in 0..self.k {
                for t in [source, target] {
                    self.set_volume(a, b, t, c.sizes(), &sizes);
                }
            }
        }
        Ok(())
    }

    /// Statistics after folding node cluster `absorbed` into `keep`, in the
    /// relabelled index space produced by [`Partition::merge`].
    pub fn after_node_merge(&self, c: &Partition, y: &Partition, keep: usize, absorbed: usize) -> Result<Self> {
        self.check_shape(c, y)?;
        check_merge(self.k, keep, absorbed)?;
        let map = merge_map(self.k, keep, absorbed);
        let k2 = self.k - 1;
        let mut sizes = vec![0usize; k2];
        for (x, &n) in c.sizes().iter().enumerate() {
            sizes[map[x]] += n;
        }
        let mut next = Self {
            k: k2,
            d: self.d,
            mode: self.mode,
            s: vec![0; k2 * k2 * self.d],
            r: vec![0; k2 * k2 * self.d],
            log_fact_const: self.log_fact_const,
        };
        for a in 0..self.k {
            for b in 0..self.k {
                let (na, nb) = self.mode.block(map[a], map[b]);
                for t in 0..self.d {
                    let idx = next.idx(na, nb, t);
                    next.s[idx] += self.s(a, b, t);
                }
            }
        }
        for a in 0..k2 {
            for b in 0..k2 {
                for t in 0..self.d {
                    next.set_volume(a, b, t, &sizes, y.sizes());
                }
            }
        }
        Ok(next)
    }

    /// Statistics after folding time cluster `absorbed` into `keep`.
    pub fn after_time_merge(&self, c: &Partition, y: &Partition, keep: usize, absorbed: usize) -> Result<Self> {
        self.check_shape(c, y)?;
        check_merge(self.d, keep, absorbed)?;
        let map = merge_map(self.d, keep, absorbed);
        let d2 = self.d - 1;
        let mut sizes = vec![0usize; d2];
        for (x, &n) in y.sizes().iter().enumerate() {
            sizes[map[x]] += n;
        }
        let mut next = Self {
            k: self.k,
            d: d2,
            mode: self.mode,
            s: vec![0; self.k * self.k * d2],
            r: vec![0; self.k * self.k * d2],
            log_fact_const: self.log_fact_const,
        };
        for a in 0..self.k {
            for b in 0..self.k {
                for (t, &to) in map.iter().enumerate() {
                    let idx = next.idx(a, b, to);
                    next.s[idx] += self.s(a, b, t);
                }
                for t in 0..d2 {
                    next.set_volume(a, b, t, c.sizes(), &sizes);
                }
            }
        }
        Ok(next)
    }

    fn check_shape(&self, c: &Partition, y: &Partition) -> Result<()> {
        if c.num_clusters() != self.k || y.num_clusters() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "stats are {}x{} blocks but partitions have K={}, D={}",
                self.k,
                self.d,
                c.num_clusters(),
                y.num_clusters()
            )));
        }
        Ok(())
    }
}

/// Old-label to new-label map for a merge.
pub(crate) fn merge_map(k: usize, keep: usize, absorbed: usize) -> Vec<usize> {
    (0..k)
        .map(|x| {
            let x = if x == absorbed { keep } else { x };
            if x > absorbed {
                x - 1
            } else {
                x
            }
        })
        .collect()
}

fn check_merge(k: usize, keep: usize, absorbed: usize) -> Result<()> {
    if keep == absorbed || keep >= k || absorbed >= k {
        return Err(Error::Contract(format!(
            "invalid merge of cluster {absorbed} into {keep} (count {k})"
        )));
    }
    Ok(())
}

pub(crate) fn check_move(p: &Partition, item: usize, target: usize) -> Result<usize> {
    if item >= p.len() {
        return Err(Error::Contract(format!("item {item} out of range ({})", p.len())));
    }
    if target >= p.num_clusters() {
        return Err(Error::Contract(format!(
            "target cluster {target} out of range ({})",
            p.num_clusters()
        )));
    }
    let source = p.label(item);
    if source == target {
        return Err(Error::Contract(format!("item {item} already in cluster {target}")));
    }
    if p.size(source) == 1 {
        return Err(Error::EmptyCluster { cluster: source });
    }
    Ok(source)
}

pub(crate) fn check_dims(tensor: &InteractionTensor, c: &Partition, y: &Partition) -> Result<()> {
    if c.len() != tensor.num_nodes() || y.len() != tensor.num_bins() {
        return Err(Error::DimensionMismatch(format!(
            "tensor is N={}, U={} but partitions have {} node labels and {} bin labels",
            tensor.num_nodes(),
            tensor.num_bins(),
            c.len(),
            y.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{build_tensor, EventRecord};

    fn two_node() -> InteractionTensor {
        build_tensor(
            &[EventRecord::new(0, 1, 0, 3), EventRecord::new(1, 0, 0, 2)],
            2,
            1,
            Mode::Directed,
        )
        .unwrap()
    }

    #[test]
    fn single_block_sums_everything() {
        let t = two_node();
        let st = BlockStats::compute(&t, &Partition::single(2).unwrap(), &Partition::single(1).unwrap()).unwrap();
        assert_eq!(st.s(0, 0, 0), 5);
        assert_eq!(st.r(0, 0, 0), 4);
        assert!((st.log_fact_const() - (6f64.ln() + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn one_node_per_cluster() {
        let t = two_node();
        let c = Partition::new(vec![0, 1]).unwrap();
        let st = BlockStats::compute(&t, &c, &Partition::single(1).unwrap()).unwrap();
        assert_eq!(st.s(0, 1, 0), 3);
        assert_eq!(st.s(1, 0, 0), 2);
        assert_eq!(st.s(0, 0, 0), 0);
        assert_eq!(st.s(1, 1, 0), 0);
        for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert_eq!(st.r(a, b, 0), 1);
        }
    }

    #[test]
    fn undirected_diagonal_volume() {
        let t = build_tensor(&[EventRecord::new(0, 1, 0, 1)], 5, 2, Mode::Undirected).unwrap();
        let c = Partition::new(vec![0, 0, 0, 1, 1]).unwrap();
        let y = Partition::new(vec![0, 0]).unwrap();
        let st = BlockStats::compute(&t, &c, &y).unwrap();
        assert_eq!(st.r(0, 0, 0), 3 * 2);
        assert_eq!(st.r(1, 1, 0), 2);
        assert_eq!(st.r(0, 1, 0), 12);
        assert_eq!(st.r(1, 0, 0), 12);
        assert_eq!(st.s(0, 0, 0), 1);
    }

    #[test]
    fn dimension_mismatch() {
        let t = two_node();
        let c = Partition::single(3).unwrap();
        assert!(matches!(
            BlockStats::compute(&t, &c, &Partition::single(1).unwrap()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn move_refuses_to_empty_a_cluster() {
        let t = two_node();
        let c = Partition::new(vec![0, 1]).unwrap();
        let y = Partition::single(1).unwrap();
        let st = BlockStats::compute(&t, &c, &y).unwrap();
        assert!(matches!(
            st.after_node_move(&t, &c, &y, 0, 1),
            Err(Error::EmptyCluster { cluster: 0 })
        ));
        let t2 = build_tensor(&[], 2, 1, Mode::Directed).unwrap();
        let c1 = Partition::single(2).unwrap();
        let y2 = Partition::single(1).unwrap();
        let st = BlockStats::compute(&t2, &c1, &y2).unwrap();
        assert!(st.after_time_move(&t2, &c1, &y2, 0, 0).is_err());
    }

    #[test]
    fn zero_degree_node_move_changes_only_volumes() {
        let t = build_tensor(&[EventRecord::new(0, 1, 0, 4)], 3, 1, Mode::Directed).unwrap();
        let y = Partition::single(1).unwrap();
        let c = Partition::new(vec![0, 1, 1]).unwrap();
        let st2 = BlockStats::compute(&t, &c, &y).unwrap();
        let moved = st2.after_node_move(&t, &c, &y, 2, 0).unwrap();
        let mut c_after = c.clone();
        c_after.move_item(2, 0).unwrap();
        let fresh = BlockStats::compute(&t, &c_after, &y).unwrap();
        assert_eq!(moved, fresh);
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(moved.s(a, b, 0), st2.s(a, b, 0));
            }
        }
        assert_eq!(moved.r(0, 0, 0), 4);
        assert_eq!(moved.r(1, 1, 0), 1);
    }

    #[test]
    fn all_zero_bin_move_adjusts_volumes() {
        let t = build_tensor(&[EventRecord::new(0, 1, 0, 4)], 2, 3, Mode::Directed).unwrap();
        let c = Partition::new(vec![0, 1]).unwrap();
        let y = Partition::new(vec![0, 1, 1]).unwrap();
        let st = BlockStats::compute(&t, &c, &y).unwrap();
        let moved = st.after_time_move(&t, &c, &y, 2, 0).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for d in 0..2 {
                    assert_eq!(moved.s(a, b, d), st.s(a, b, d));
                }
                assert_eq!(moved.r(a, b, 0), st.r(a, b, 0) + 1);
                assert_eq!(moved.r(a, b, 1), st.r(a, b, 1) - 1);
            }
        }
    }

    #[test]
    fn merge_matches_recompute() {
        let recs = [
            EventRecord::new(0, 1, 0, 3),
            EventRecord::new(1, 2, 1, 2),
            EventRecord::new(2, 3, 2, 5),
            EventRecord::new(0, 3, 1, 1),
        ];
        for mode in [Mode::Directed, Mode::Undirected] {
            let t = build_tensor(&recs, 4, 3, mode).unwrap();
            let c = Partition::new(vec![0, 1, 2, 1]).unwrap();
            let y = Partition::new(vec![0, 1, 2]).unwrap();
            let st = BlockStats::compute(&t, &c, &y).unwrap();
            for (keep, absorbed) in [(0, 1), (2, 0), (1, 2)] {
                let mut c2 = c.clone();
                c2.merge(keep, absorbed).unwrap();
                assert_eq!(
                    st.after_node_merge(&c, &y, keep, absorbed).unwrap(),
                    BlockStats::compute(&t, &c2, &y).unwrap()
                );
                let mut y2 = y.clone();
                y2.merge(keep, absorbed).unwrap();
                assert_eq!(
                    st.after_time_merge(&c, &y, keep, absorbed).unwrap(),
                    BlockStats::compute(&t, &c, &y2).unwrap()
                );
            }
        }
    }
}
