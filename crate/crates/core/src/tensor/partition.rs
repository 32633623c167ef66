use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard assignment of items to `K` non-empty clusters labelled `0..K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Partition {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

/// Node labels `c`.
pub type NodePartition = Partition;
/// Time-bin labels `y`.
pub type TimePartition = Partition;

impl Partition {
    /// Wraps a label vector. Labels must cover `0..K` with no gaps.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Contract("partition of zero items".into()));
        }
        let k = labels.iter().max().map_or(0, |&m| m + 1);
        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Contract(format!(
                "cluster {empty} is empty; labels must cover 0..{k}"
            )));
        }
        Ok(Self { labels, sizes })
    }

    /// Relabels arbitrary ids to `0..K` in order of first appearance.
    pub fn compact(labels: &[usize]) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        let dense: Vec<usize> = labels
            .iter()
            .map(|&l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        Self::new(dense)
    }

    /// Every item in cluster 0.
    pub fn single(n: usize) -> Result<Self> {
        Self::new(vec![0; n])
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    #[inline]
    pub fn label(&self, item: usize) -> usize {
        self.labels[item]
    }

    #[inline]
    pub fn size(&self, cluster: usize) -> usize {
        self.sizes[cluster]
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Members of `cluster`, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == cluster).then_some(i))
            .collect()
    }

    /// Reassigns `item`; refuses to empty its cluster.
    pub fn move_item(&mut self, item: usize, target: usize) -> Result<()> {
        let source = self.labels[item];
        if target >= self.num_clusters() {
            return Err(Error::Contract(format!(
                "target cluster {target} out of range (K={})",
                self.num_clusters()
            )));
        }
        if source == target {
            return Ok(());
        }
        if self.sizes[source] == 1 {
            return Err(Error::EmptyCluster { cluster: source });
        }
        self.labels[item] = target;
        self.sizes[source] -= 1;
        self.sizes[target] += 1;
        Ok(())
    }

    /// Folds cluster `absorbed` into `keep`. Labels above `absorbed` shift
    /// down by one, so `keep` ends at `keep - (keep > absorbed)`.
    pub fn merge(&mut self, keep: usize, absorbed: usize) -> Result<usize> {
        let k = self.num_clusters();
        if keep == absorbed || keep >= k || absorbed >= k {
            return Err(Error::Contract(format!(
                "invalid merge of cluster {absorbed} into {keep} (K={k})"
            )));
        }
        for l in self.labels.iter_mut() {
            if *l == absorbed {
                *l = keep;
            }
            if *l > absorbed {
                *l -= 1;
            }
        }
        self.sizes[keep] += self.sizes[absorbed];
        self.sizes.remove(absorbed);
        Ok(if keep > absorbed { keep - 1 } else { keep })
    }
}

impl TryFrom<Vec<usize>> for Partition {
    type Error = Error;

    fn try_from(labels: Vec<usize>) -> Result<Self> {
        Self::new(labels)
    }
}

impl From<Partition> for Vec<usize> {
    fn from(p: Partition) -> Self {
        p.labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_gaps() {
        assert!(Partition::new(vec![0, 2, 2]).is_err());
        assert!(Partition::new(vec![]).is_err());
        let p = Partition::new(vec![1, 0, 1]).unwrap();
        assert_eq!(p.sizes(), &[1, 2]);
    }

    #[test]
    fn compact_uses_first_appearance() {
        let p = Partition::compact(&[7, 3, 7, 9]).unwrap();
        assert_eq!(p.labels(), &[0, 1, 0, 2]);
    }

    #[test]
    fn move_refuses_to_empty() {
        let mut p = Partition::new(vec![0, 1, 1]).unwrap();
        assert!(matches!(p.move_item(0, 1), Err(Error::EmptyCluster { cluster: 0 })));
        p.move_item(1, 0).unwrap();
        assert_eq!(p.labels(), &[0, 0, 1]);
        assert_eq!(p.sizes(), &[2, 1]);
    }

    #[test]
    fn merge_shifts_labels() {
        let mut p = Partition::new(vec![0, 1, 2, 3, 1]).unwrap();
        let kept = p.merge(3, 1).unwrap();
        assert_eq!(kept, 2);
        assert_eq!(p.labels(), &[0, 2, 1, 2, 2]);
        assert_eq!(p.sizes(), &[1, 1, 3]);
        assert!(p.merge(0, 0).is_err());
    }
}
