use serde::{Deserialize, Serialize};

/// A pair (a, b) of conditioned-variable positions, a < b, both 0-based
/// positions within the conditioned index set I.
///
/// Enumeration order is (0,1), (0,2), ..., (0,p-1), (1,2), ..., (p-2,p-1),
/// which fixes the stacking order of every tau vector and covariance block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairIndex {
    pub a: usize,
    pub b: usize,
}

impl PairIndex {
    pub fn new(a: usize, b: usize) -> Self {
        assert!(a < b, "pair indices must satisfy a < b");
        PairIndex { a, b }
    }
}

/// All p(p-1)/2 pairs in stacking order.
pub fn all_pairs(p: usize) -> Vec<PairIndex> {
    let mut pairs = Vec::with_capacity(p * (p - 1) / 2);
    for a in 0..p {
        for b in (a + 1)..p {
            pairs.push(PairIndex { a, b });
        }
    }
    pairs
}

/// Number of pairs for p conditioned variables.
pub fn pair_count(p: usize) -> usize {
    p * (p - 1) / 2
}
