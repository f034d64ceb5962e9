//! Recursive construction of conditioning boxes that maximize conditional
//! Kendall's tau differences across threshold splits, with minCut / minSize
//! stopping. The split search sweeps each coordinate once, updating the
//! concordance counts incrementally as points move from the right child to
//! the left; counts are integers, so the sweep is exact and identical to
//! recomputing each candidate from scratch.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxes::{members, BoxFamily, CondBox};
use crate::error::{Error, Result};
use crate::pair::{all_pairs, PairIndex};
use crate::sample::Sample;

/// Candidate-threshold rule tag. Thresholds are the sorted unique observed
/// values of the split coordinate inside the current box, which exhausts the
/// achievable partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    #[default]
    ObservedUniqueValues,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Minimal tau difference a split must achieve; below it the node stays
    /// a leaf.
    pub min_cut: f64,
    /// Minimal fraction of the full sample each child box must keep.
    pub min_size: f64,
    /// Size-penalty weight in the split criterion (0 disables the penalty,
    /// leaving exactly the minCut/minSize stopping rules).
    pub alpha: f64,
    /// Exponent on the tau difference in the penalized criterion.
    pub gamma: f64,
    pub max_depth: usize,
    pub threshold_rule: ThresholdRule,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            min_cut: 0.4,
            min_size: 0.05,
            alpha: 0.0,
            gamma: 1.0,
            max_depth: 6,
            threshold_rule: ThresholdRule::ObservedUniqueValues,
        }
    }
}

impl TreeConfig {
    /// Hard floor on child box occupancy: minSize as a count, never below
    /// the 2 observations tau estimation needs.
    pub fn effective_min_count(&self, n: usize) -> usize {
        let from_fraction = (self.min_size * n as f64).ceil() as usize;
        from_fraction.max(2)
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_size) {
            return Err(Error::invalid(format!("minSize must be in [0,1], got {}", self.min_size)));
        }
        if self.min_cut < 0.0 {
            return Err(Error::invalid(format!("minCut must be >= 0, got {}", self.min_cut)));
        }
        if self.gamma <= 0.0 {
            return Err(Error::invalid(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if n < 2 {
            return Err(Error::invalid("tree construction needs n >= 2"));
        }
        Ok(())
    }
}

/// Winning split of a node: the pair, the conditioning coordinate, the
/// threshold, and the achieved (unpenalized) tau difference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitRecord {
    pub pair_idx: usize,
    pub pair: PairIndex,
    pub coord: usize,
    pub threshold: f64,
    pub diff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeNode {
    pub region: CondBox,
    /// Per-pair rescaled tau on the node's box (build data), stacking order.
    pub taus: Vec<f64>,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub children: Option<(std::boxed::Box<TreeNode>, std::boxed::Box<TreeNode>)>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    fn depth(&self) -> usize {
        match &self.children {
            None => 0,
            Some((l, r)) => 1 + l.depth().max(r.depth()),
        }
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a TreeNode>) {
        match &self.children {
            None => out.push(self),
            Some((l, r)) => {
                l.collect_leaves(out);
                r.collect_leaves(out);
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependenceTree {
    pub root: TreeNode,
    pub n: usize,
    pub pairs: Vec<PairIndex>,
    pub config: TreeConfig,
    pub conditioned_names: Vec<String>,
    pub conditioning_names: Vec<String>,
}

impl DependenceTree {
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn leaf_nodes(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut out);
        out
    }

    /// Leaf boxes in left-to-right order; they partition the root box by
    /// construction.
    pub fn leaves(&self) -> BoxFamily {
        BoxFamily::new(
            self.leaf_nodes().iter().map(|n| n.region.clone()).collect(),
            true,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serialization cannot fail")
    }

    /// DOT rendering: one node per box, labeled with the conditional
    /// Kendall's tau values and the split condition.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dependence_tree {\n  node [shape=box];\n");
        let mut counter = 0usize;
        self.dot_node(&self.root, &mut counter, &mut out);
        out.push_str("}\n");
        out
    }

    fn dot_node(&self, node: &TreeNode, counter: &mut usize, out: &mut String) -> usize {
        let id = *counter;
        *counter += 1;
        let mut label = format!("{}\\nn={}", node.region.describe(&self.conditioning_names), node.count);
        for (idx, pair) in self.pairs.iter().enumerate() {
            label.push_str(&format!(
                "\\nCKT({},{})={:.4}",
                self.conditioned_names[pair.a], self.conditioned_names[pair.b], node.taus[idx]
            ));
        }
        if let Some(split) = &node.split {
            label.push_str(&format!(
                "\\nsplit: {} <= {} (diff {:.4})",
                self.conditioning_names[split.coord], split.threshold, split.diff
            ));
        }
        out.push_str(&format!("  n{id} [label=\"{label}\"];\n"));
        if let Some((l, r)) = &node.children {
            let lid = self.dot_node(l, counter, out);
            out.push_str(&format!("  n{id} -> n{lid};\n"));
            let rid = self.dot_node(r, counter, out);
            out.push_str(&format!("  n{id} -> n{rid};\n"));
        }
        id
    }
}

struct SweepBest {
    penalized: f64,
    diff: f64,
    threshold: f64,
}

/// Best threshold for one (pair, coordinate) combination by the incremental
/// left/right count sweep. `eff_min` is the admissibility floor on both
/// child counts; `n_total` normalizes the size fractions of the penalty.
fn sweep_coordinate(
    xk: &[f64],
    xa: &[f64],
    xb: &[f64],
    full_counts: (u64, u64),
    n_total: usize,
    eff_min: usize,
    alpha: f64,
    gamma: f64,
) -> Option<SweepBest> {
    let n = xk.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&i, &j| xk[i as usize].partial_cmp(&xk[j as usize]).unwrap());
    let sk: Vec<f64> = order.iter().map(|&i| xk[i as usize]).collect();
    let sa: Vec<f64> = order.iter().map(|&i| xa[i as usize]).collect();
    let sb: Vec<f64> = order.iter().map(|&i| xb[i as usize]).collect();

    let (mut cr, mut dr) = full_counts;
    let (mut cl, mut dl) = (0u64, 0u64);
    let mut best: Option<SweepBest> = None;
    let mut idx = 0usize;
    while idx < n {
        // move the whole tie group of sk[idx]
        let t = sk[idx];
        let mut end = idx;
        while end < n && sk[end] == t {
            let (qa, qb) = (sa[end], sb[end]);
            for s in (end + 1)..n {
                let prod = (sa[s] - qa) * (sb[s] - qb);
                cr -= (prod > 0.0) as u64;
                dr -= (prod < 0.0) as u64;
            }
            for p in 0..end {
                let prod = (sa[p] - qa) * (sb[p] - qb);
                cl += (prod > 0.0) as u64;
                dl += (prod < 0.0) as u64;
            }
            end += 1;
        }
        idx = end;
        let left_n = idx;
        let right_n = n - idx;
        if left_n >= eff_min && right_n >= eff_min {
            let tau_l = 2.0 * (cl as f64 - dl as f64) / ((left_n * (left_n - 1)) as f64);
            let tau_r = 2.0 * (cr as f64 - dr as f64) / ((right_n * (right_n - 1)) as f64);
            let diff = (tau_l - tau_r).abs();
            let frac = (left_n.min(right_n)) as f64 / n_total as f64;
            let base = if gamma == 1.0 { diff } else { diff.powf(gamma) };
            let penalized = base + alpha * frac;
            let better = match &best {
                None => true,
                Some(b) => penalized > b.penalized,
            };
            if better {
                best = Some(SweepBest {
                    penalized,
                    diff,
                    threshold: t,
                });
            }
        }
    }
    best
}

/// Winning split candidate of one box.
#[derive(Debug, Clone)]
pub struct SplitCandidate {
    pub record: SplitRecord,
    pub left_rows: Vec<usize>,
    pub right_rows: Vec<usize>,
}

fn best_split_on_rows(
    sample: &Sample,
    rows: &[usize],
    config: &TreeConfig,
    pairs: &[PairIndex],
    eff_min: usize,
) -> Option<SplitCandidate> {
    let n_total = sample.n();
    if rows.len() < 2 * eff_min {
        return None;
    }
    let q = sample.conditioning_dim();
    // pair columns and per-pair full-box counts are coordinate independent
    let pair_cols: Vec<(Vec<f64>, Vec<f64>)> = pairs
        .iter()
        .map(|&pair| crate::concordance::pair_columns(sample, rows, pair))
        .collect();
    let full_counts: Vec<(u64, u64)> = pair_cols
        .iter()
        .map(|(xa, xb)| crate::concordance::count_pairs(xa, xb))
        .collect();
    let coord_cols: Vec<Vec<f64>> = (0..q)
        .map(|j| {
            let col = sample.conditioning_columns()[j];
            rows.iter().map(|&i| sample.value(i, col)).collect()
        })
        .collect();

    // candidates are evaluated in parallel and reduced in (pair, coord)
    // order with strict improvement, realizing the lexicographic tie-break
    let combos: Vec<(usize, usize)> = (0..pairs.len())
        .flat_map(|pi| (0..q).map(move |j| (pi, j)))
        .collect();
    let sweeps: Vec<Option<SweepBest>> = combos
        .par_iter()
        .map(|&(pi, j)| {
            sweep_coordinate(
                &coord_cols[j],
                &pair_cols[pi].0,
                &pair_cols[pi].1,
                full_counts[pi],
                n_total,
                eff_min,
                config.alpha,
                config.gamma,
            )
        })
        .collect();

    let mut winner: Option<(usize, usize, SweepBest)> = None;
    for (&(pi, j), sweep) in combos.iter().zip(sweeps.into_iter()) {
        if let Some(s) = sweep {
            let better = match &winner {
                None => true,
                Some((_, _, w)) => s.penalized > w.penalized,
            };
            if better {
                winner = Some((pi, j, s));
            }
        }
    }
    let (pair_idx, coord, sweep) = winner?;
    let col = sample.conditioning_columns()[coord];
    let mut left_rows = Vec::new();
    let mut right_rows = Vec::new();
    for &i in rows {
        if sample.value(i, col) <= sweep.threshold {
            left_rows.push(i);
        } else {
            right_rows.push(i);
        }
    }
    Some(SplitCandidate {
        record: SplitRecord {
            pair_idx,
            pair: pairs[pair_idx],
            coord,
            threshold: sweep.threshold,
            diff: sweep.diff,
        },
        left_rows,
        right_rows,
    })
}

/// Exhaustive split search over all pairs, conditioning coordinates and
/// observed thresholds inside a box. Returns None when no split satisfies
/// the minSize admissibility floor; minCut is the caller's stopping rule.
pub fn best_split(
    sample: &Sample,
    cond_box: &CondBox,
    config: &TreeConfig,
) -> Result<Option<SplitCandidate>> {
    config.validate(sample.n())?;
    let rows = members(sample, cond_box);
    let pairs = all_pairs(sample.conditioned_dim());
    let eff_min = config.effective_min_count(sample.n());
    Ok(best_split_on_rows(sample, &rows, config, &pairs, eff_min))
}

fn node_taus(sample: &Sample, rows: &[usize], pairs: &[PairIndex]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&pair| {
            let (xa, xb) = crate::concordance::pair_columns(sample, rows, pair);
            let (c, d) = crate::concordance::count_pairs(&xa, &xb);
            let n = rows.len();
            (c as f64 - d as f64) / ((n * (n - 1) / 2) as f64)
        })
        .collect()
}

fn build_node(
    sample: &Sample,
    rows: Vec<usize>,
    region: CondBox,
    depth: usize,
    config: &TreeConfig,
    pairs: &[PairIndex],
    eff_min: usize,
) -> TreeNode {
    let taus = node_taus(sample, &rows, pairs);
    let count = rows.len();
    let make_leaf = |taus: Vec<f64>| TreeNode {
        region: region.clone(),
        taus,
        count,
        split: None,
        children: None,
    };
    if depth >= config.max_depth {
        return make_leaf(taus);
    }
    let candidate = best_split_on_rows(sample, &rows, config, pairs, eff_min);
    match candidate {
        None => make_leaf(taus),
        Some(c) if c.record.diff < config.min_cut => make_leaf(taus),
        Some(c) => {
            let (lo_box, hi_box) = region.split_le_gt(c.record.coord, c.record.threshold);
            let left = build_node(sample, c.left_rows, lo_box, depth + 1, config, pairs, eff_min);
            let right = build_node(sample, c.right_rows, hi_box, depth + 1, config, pairs, eff_min);
            TreeNode {
                region,
                taus,
                count,
                split: Some(c.record),
                children: Some((std::boxed::Box::new(left), std::boxed::Box::new(right))),
            }
        }
    }
}

/// Grows the dependence tree on the full conditioning space of the sample.
pub fn cut_ckt(sample: &Sample, config: &TreeConfig) -> Result<DependenceTree> {
    config.validate(sample.n())?;
    let pairs = all_pairs(sample.conditioned_dim());
    let eff_min = config.effective_min_count(sample.n());
    let rows: Vec<usize> = (0..sample.n()).collect();
    let root = build_node(
        sample,
        rows,
        CondBox::full(sample.conditioning_dim()),
        0,
        config,
        &pairs,
        eff_min,
    );
    Ok(DependenceTree {
        root,
        n: sample.n(),
        pairs,
        config: config.clone(),
        conditioned_names: sample.conditioned_names(),
        conditioning_names: sample.conditioning_names(),
    })
}

/// The contagion-ordering diagnostic: true iff at every internal node the
/// split pair satisfies tau(left) >= tau(node) >= tau(right).
pub fn is_binary_search_in_tau(tree: &DependenceTree) -> bool {
    fn check(node: &TreeNode) -> bool {
        match (&node.split, &node.children) {
            (Some(split), Some((l, r))) => {
                let idx = split.pair_idx;
                l.taus[idx] >= node.taus[idx]
                    && node.taus[idx] >= r.taus[idx]
                    && check(l)
                    && check(r)
            }
            _ => true,
        }
    }
    check(&tree.root)
}
