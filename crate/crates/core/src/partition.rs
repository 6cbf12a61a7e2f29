//! Hitting scenarios as restricted growth strings.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest `k` accepted by [`enumerate_partitions`].
pub const MAX_ENUMERATION_K: usize = 12;

/// Largest number of conditioning sites a partition can describe.
pub const MAX_SITES: usize = 64;

/// A set partition of `{x_1, ..., x_k}` in canonical form:
/// `a_1 = 1` and `a_i <= max_{j<i} a_j + 1`. Labels are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    labels: Vec<u8>,
}

impl Partition {
    /// Validates a restricted growth string.
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if labels.is_empty() || labels.len() > MAX_SITES {
            return Err(Error::Capacity(format!(
                "partitions need between 1 and {MAX_SITES} sites, got {}",
                labels.len()
            )));
        }
        let mut max = 0u8;
        for (i, &a) in labels.iter().enumerate() {
            if a == 0 || a > max + 1 {
                return Err(Error::Domain(format!(
                    "label {a} at position {} breaks the restricted growth rule",
                    i + 1
                )));
            }
            max = max.max(a);
        }
        Ok(Partition { labels })
    }

    /// All sites in one block.
    pub fn single_block(k: usize) -> Self {
        Partition { labels: vec![1; k] }
    }

    /// Every site in its own block.
    pub fn singletons(k: usize) -> Self {
        Partition {
            labels: (1..=k as u8).collect(),
        }
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Number of sites `k`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of blocks.
    pub fn size(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }

    /// Site indices (0-based) of each block, in label order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.size()];
        for (i, &a) in self.labels.iter().enumerate() {
            out[a as usize - 1].push(i);
        }
        out
    }

    /// Bit mask of each block, in label order.
    pub fn block_masks(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.size()];
        for (i, &a) in self.labels.iter().enumerate() {
            out[a as usize - 1] |= 1 << i;
        }
        out
    }

    /// Bit mask of the block labelled `label`.
    pub fn mask_of(&self, label: u8) -> u64 {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == label)
            .fold(0, |m, (i, _)| m | 1 << i)
    }

    fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&a| a == label).count()
    }

    /// Partitions reachable by moving site `j` (0-based) to another block or
    /// to a new block, paired with the label `b` it gets before recoding.
    /// The first entry is `self` (`b = a_j`).
    pub fn neighbor_moves(&self, j: usize) -> Vec<(u8, Partition)> {
        assert!(j < self.len(), "site index {j} out of range");
        let aj = self.labels[j];
        let size = self.size() as u8;
        let b_max = if self.count(aj) == 1 { size } else { size + 1 };
        let mut out = Vec::with_capacity(b_max as usize);
        out.push((aj, self.clone()));
        for b in (1..=b_max).filter(|&b| b != aj) {
            let mut labels = self.labels.clone();
            labels[j] = b;
            out.push((b, canonicalize(&labels)));
        }
        out
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let labels = s
            .split('-')
            .map(|t| {
                t.trim()
                    .parse::<u8>()
                    .map_err(|e| Error::Domain(format!("bad partition label {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Partition::new(labels)
    }
}

/// Relabels blocks by order of first appearance.
pub fn canonicalize(labels: &[u8]) -> Partition {
    let mut map = [0u8; 256];
    let mut next = 0u8;
    let out = labels
        .iter()
        .map(|&a| {
            let slot = &mut map[a as usize];
            if *slot == 0 {
                next += 1;
                *slot = next;
            }
            *slot
        })
        .collect();
    Partition { labels: out }
}

/// All `Bell(k)` partitions of `k` sites in lexicographic order.
pub fn enumerate_partitions(k: usize) -> Result<Vec<Partition>> {
    if k == 0 || k > MAX_ENUMERATION_K {
        return Err(Error::Capacity(format!(
            "enumeration supports 1 <= k <= {MAX_ENUMERATION_K}, got {k}"
        )));
    }
    let mut out = Vec::new();
    let mut labels = vec![1u8; k];
    // prefix maxima
    let mut maxes = vec![1u8; k];
    loop {
        out.push(Partition {
            labels: labels.clone(),
        });
        // rightmost position that can still grow
        let Some(i) = (1..k).rev().find(|&i| labels[i] <= maxes[i - 1]) else {
            break;
        };
        labels[i] += 1;
        maxes[i] = maxes[i - 1].max(labels[i]);
        for t in i + 1..k {
            labels[t] = 1;
            maxes[t] = maxes[i];
        }
    }
    Ok(out)
}

/// Bell numbers, for tests and capacity checks.
pub fn bell(k: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..k {
        let mut next = vec![*row.last().unwrap()];
        for &v in &row {
            next.push(next.last().unwrap() + v);
        }
        row = next;
    }
    row[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn p(labels: &[u8]) -> Partition {
        Partition::new(labels.to_vec()).unwrap()
    }

    #[test]
    fn canonical_examples() {
        assert_eq!(canonicalize(&[2, 2, 1]), p(&[1, 1, 2]));
        assert_eq!(canonicalize(&[1, 1, 3]), p(&[1, 1, 2]));
        assert_eq!(canonicalize(&[1, 2, 3]), p(&[1, 2, 3]));
        assert!(Partition::new(vec![2, 2, 1]).is_err());
        assert!(Partition::new(vec![1, 1, 3]).is_err());
        assert!(Partition::new(vec![]).is_err());
    }

    #[test]
    fn enumeration_matches_bell() {
        assert_eq!(enumerate_partitions(1).unwrap(), vec![p(&[1])]);
        assert_eq!(enumerate_partitions(3).unwrap().len(), 5);
        assert_eq!(enumerate_partitions(4).unwrap().len(), 15);
        for k in 1..=8 {
            let all = enumerate_partitions(k).unwrap();
            assert_eq!(all.len() as u64, bell(k));
            let uniq: HashSet<_> = all.iter().collect();
            assert_eq!(uniq.len(), all.len());
            assert!(all.iter().all(|q| Partition::new(q.labels.clone()).is_ok()));
        }
        assert!(enumerate_partitions(0).is_err());
        assert!(enumerate_partitions(13).is_err());
    }

    #[test]
    fn moves_of_the_worked_example() {
        // tau = ({x1, x2}, {x3})
        let tau = p(&[1, 1, 2]);
        let moves: Vec<Partition> = tau.neighbor_moves(1).into_iter().map(|m| m.1).collect();
        assert_eq!(moves, vec![p(&[1, 1, 2]), p(&[1, 2, 2]), p(&[1, 2, 3])]);
        let as_blocks: HashSet<Vec<Vec<usize>>> = moves.iter().map(|m| m.blocks()).collect();
        assert!(as_blocks.contains(&vec![vec![0, 1], vec![2]]));
        assert!(as_blocks.contains(&vec![vec![0], vec![1], vec![2]]));
        assert!(as_blocks.contains(&vec![vec![0], vec![1, 2]]));

        let moves: Vec<Partition> = tau.neighbor_moves(2).into_iter().map(|m| m.1).collect();
        assert_eq!(moves, vec![p(&[1, 1, 2]), p(&[1, 1, 1])]);

        assert_eq!(p(&[1]).neighbor_moves(0), vec![(1, p(&[1]))]);
    }

    #[test]
    fn moving_a_singleton_to_a_fresh_label_changes_nothing() {
        for k in 1..=6 {
            for tau in enumerate_partitions(k).unwrap() {
                for j in 0..k {
                    let aj = tau.labels[j];
                    if tau.count(aj) == 1 {
                        let mut labels = tau.labels.clone();
                        labels[j] = tau.size() as u8 + 1;
                        assert_eq!(canonicalize(&labels), tau);
                    }
                }
            }
        }
    }

    #[test]
    fn display_round_trip() {
        let tau = p(&[1, 2, 1, 3]);
        assert_eq!(tau.to_string(), "1-2-1-3");
        assert_eq!("1-2-1-3".parse::<Partition>().unwrap(), tau);
        assert_eq!(tau.block_masks(), vec![0b0101, 0b0010, 0b1000]);
        assert_eq!(tau.mask_of(1), 0b0101);
    }

    proptest! {
        #[test]
        fn canonicalize_is_idempotent_and_relabeling_invariant(
            labels in prop::collection::vec(1u8..8, 1..12),
            perm_seed in 0u64..1000,
        ) {
            let c = canonicalize(&labels);
            prop_assert_eq!(&canonicalize(c.labels()), &c);
            prop_assert!(Partition::new(c.labels().to_vec()).is_ok());
            // apply a permutation of the label alphabet
            let mut alphabet: Vec<u8> = (1..8).collect();
            let mut s = perm_seed;
            for i in (1..alphabet.len()).rev() {
                s = crate::rng::derive_seed(s, i as u64);
                alphabet.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let relabeled: Vec<u8> = labels.iter().map(|&a| alphabet[a as usize - 1]).collect();
            prop_assert_eq!(canonicalize(&relabeled), c);
        }

        #[test]
        fn neighbor_moves_are_distinct_and_include_self(
            labels in prop::collection::vec(1u8..5, 1..9),
            j in 0usize..9,
        ) {
            let tau = canonicalize(&labels);
            let j = j % tau.len();
            let moves = tau.neighbor_moves(j);
            let expect = if tau.count(tau.labels[j]) == 1 { tau.size() } else { tau.size() + 1 };
            prop_assert_eq!(moves.len(), expect);
            prop_assert_eq!(&moves[0].1, &tau);
            let uniq: HashSet<_> = moves.iter().map(|m| &m.1).collect();
            prop_assert_eq!(uniq.len(), moves.len());
        }
    }
}
