use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::Sample;

/// Constraint on one conditioning coordinate.
///
/// `Interval` bounds may be infinite; openness is tracked per side so that
/// tree splits can produce `(-inf, t]` / `(t, +inf)` exactly. `Codes` is an
/// explicit set of integer codes for categorical coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Constraint {
    Interval {
        lower: f64,
        upper: f64,
        lower_open: bool,
        upper_open: bool,
    },
    Codes { codes: Vec<i64> },
}

impl Constraint {
    pub fn unbounded() -> Self {
        Constraint::Interval {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            lower_open: false,
            upper_open: false,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self {
            Constraint::Interval {
                lower,
                upper,
                lower_open,
                upper_open,
            } => {
                let lo_ok = if *lower_open { x > *lower } else { x >= *lower };
                let hi_ok = if *upper_open { x < *upper } else { x <= *upper };
                lo_ok && hi_ok
            }
            Constraint::Codes { codes } => codes.iter().any(|&c| x == c as f64),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            Constraint::Interval {
                lower,
                upper,
                lower_open,
                upper_open,
            } => lower > upper || (lower == upper && (*lower_open || *upper_open)),
            Constraint::Codes { codes } => codes.is_empty(),
        }
    }

    /// Intersection with the half-line `x <= t` (closed above at t).
    fn clip_le(&self, t: f64) -> Constraint {
        match self {
            Constraint::Interval {
                lower,
                upper,
                lower_open,
                upper_open,
            } => {
                let (upper, upper_open) = if t < *upper { (t, false) } else { (*upper, *upper_open) };
                Constraint::Interval {
                    lower: *lower,
                    upper,
                    lower_open: *lower_open,
                    upper_open,
                }
            }
            Constraint::Codes { codes } => Constraint::Codes {
                codes: codes.iter().copied().filter(|&c| (c as f64) <= t).collect(),
            },
        }
    }

    /// Intersection with the half-line `x > t` (open below at t).
    fn clip_gt(&self, t: f64) -> Constraint {
        match self {
            Constraint::Interval {
                lower,
                upper,
                lower_open,
                upper_open,
            } => {
                let (lower, lower_open) = if t >= *lower { (t, true) } else { (*lower, *lower_open) };
                Constraint::Interval {
                    lower,
                    upper: *upper,
                    lower_open,
                    upper_open: *upper_open,
                }
            }
            Constraint::Codes { codes } => Constraint::Codes {
                codes: codes.iter().copied().filter(|&c| (c as f64) > t).collect(),
            },
        }
    }

    fn describe(&self, name: &str) -> Option<String> {
        match self {
            Constraint::Interval {
                lower,
                upper,
                lower_open,
                upper_open,
            } => {
                let lo = if lower.is_infinite() {
                    None
                } else if *lower_open {
                    Some(format!("{name} > {lower}"))
                } else {
                    Some(format!("{name} >= {lower}"))
                };
                let hi = if upper.is_infinite() {
                    None
                } else if *upper_open {
                    Some(format!("{name} < {upper}"))
                } else {
                    Some(format!("{name} <= {upper}"))
                };
                match (lo, hi) {
                    (None, None) => None,
                    (Some(a), None) => Some(a),
                    (None, Some(b)) => Some(b),
                    (Some(a), Some(b)) => Some(format!("{a}, {b}")),
                }
            }
            Constraint::Codes { codes } => {
                let list: Vec<String> = codes.iter().map(|c| c.to_string()).collect();
                Some(format!("{name} in {{{}}}", list.join(",")))
            }
        }
    }
}

/// One axis-aligned hyper-rectangle over the conditioning coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub constraints: Vec<Constraint>,
}

impl Rect {
    pub fn full(dim: usize) -> Self {
        Rect {
            constraints: vec![Constraint::unbounded(); dim],
        }
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        self.constraints
            .iter()
            .zip(point.iter())
            .all(|(c, &x)| c.contains(x))
    }

    fn is_empty(&self) -> bool {
        self.constraints.iter().any(|c| c.is_empty())
    }
}

/// A conditioning subset: a union of axis-aligned rectangles over the
/// conditioning coordinates. The single-rectangle case is the norm; unions
/// exist so that non-rectangular borelian subsets can be declared in config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondBox {
    pub parts: Vec<Rect>,
}

impl CondBox {
    /// The whole conditioning space.
    pub fn full(dim: usize) -> Self {
        CondBox {
            parts: vec![Rect::full(dim)],
        }
    }

    /// Rectangle constraining a single coordinate, unbounded elsewhere.
    pub fn interval(dim: usize, coord: usize, lower: f64, upper: f64, lower_open: bool, upper_open: bool) -> Self {
        let mut rect = Rect::full(dim);
        rect.constraints[coord] = Constraint::Interval {
            lower,
            upper,
            lower_open,
            upper_open,
        };
        CondBox { parts: vec![rect] }
    }

    /// Code-set box over a single categorical coordinate.
    pub fn codes(dim: usize, coord: usize, mut codes: Vec<i64>) -> Self {
        codes.sort_unstable();
        codes.dedup();
        let mut rect = Rect::full(dim);
        rect.constraints[coord] = Constraint::Codes { codes };
        CondBox { parts: vec![rect] }
    }

    pub fn union(boxes: Vec<CondBox>) -> Self {
        CondBox {
            parts: boxes.into_iter().flat_map(|b| b.parts).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.parts.first().map_or(0, |r| r.constraints.len())
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        self.parts.iter().any(|r| r.contains(point))
    }

    /// Splits into `self ∩ (-inf, t]_coord` and `self ∩ (t, +inf)_coord`,
    /// exactly the two child boxes of a tree split. Provably empty parts are
    /// dropped; a child with no part left is the empty box.
    pub fn split_le_gt(&self, coord: usize, t: f64) -> (CondBox, CondBox) {
        let mut lo_parts = Vec::new();
        let mut hi_parts = Vec::new();
        for rect in &self.parts {
            let mut lo = rect.clone();
            lo.constraints[coord] = rect.constraints[coord].clip_le(t);
            if !lo.is_empty() {
                lo_parts.push(lo);
            }
            let mut hi = rect.clone();
            hi.constraints[coord] = rect.constraints[coord].clip_gt(t);
            if !hi.is_empty() {
                hi_parts.push(hi);
            }
        }
        (CondBox { parts: lo_parts }, CondBox { parts: hi_parts })
    }

    /// Human-readable conjunction of the non-trivial constraints, e.g. for
    /// DOT labels. `names` maps conditioning coordinates to column names.
    pub fn describe(&self, names: &[String]) -> String {
        let descr: Vec<String> = self
            .parts
            .iter()
            .map(|rect| {
                let conds: Vec<String> = rect
                    .constraints
                    .iter()
                    .enumerate()
                    .filter_map(|(j, c)| c.describe(&names[j]))
                    .collect();
                if conds.is_empty() {
                    "all".to_string()
                } else {
                    conds.join(", ")
                }
            })
            .collect();
        if descr.len() == 1 {
            descr.into_iter().next().unwrap()
        } else {
            descr
                .into_iter()
                .map(|d| format!("({d})"))
                .collect::<Vec<_>>()
                .join(" or ")
        }
    }
}

/// Ordered family of conditioning boxes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxFamily {
    pub boxes: Vec<CondBox>,
    /// Declared by the caller or set by construction (tree leaves, quantile
    /// partitions). The covariance estimator picks its fast path from this.
    pub disjoint: bool,
}

impl BoxFamily {
    pub fn new(boxes: Vec<CondBox>, disjoint: bool) -> Self {
        BoxFamily { boxes, disjoint }
    }

    pub fn m(&self) -> usize {
        self.boxes.len()
    }

    /// Checks the declared dimension of every box against |J|.
    pub fn validate_dim(&self, dim: usize) -> Result<()> {
        for (k, b) in self.boxes.iter().enumerate() {
            if b.dim() != dim {
                return Err(Error::invalid(format!(
                    "box {k} has dimension {} but the sample has {dim} conditioning coordinates",
                    b.dim()
                )));
            }
        }
        Ok(())
    }

    /// Empirical disjointness: no observed conditioning point falls in two
    /// boxes. This is a verification helper, not a proof for unseen points.
    pub fn verify_disjoint_on(&self, sample: &Sample) -> bool {
        let mut point = vec![0.0; sample.conditioning_dim()];
        for i in 0..sample.n() {
            sample.conditioning_point(i, &mut point);
            let hits = self.boxes.iter().filter(|b| b.contains(&point)).count();
            if hits > 1 {
                return false;
            }
        }
        true
    }
}

/// Row indices of the sample whose conditioning coordinates lie in the box,
/// in row order. `N_k` is the length of the result.
pub fn members(sample: &Sample, cond_box: &CondBox) -> Vec<usize> {
    assert_eq!(
        cond_box.dim(),
        sample.conditioning_dim(),
        "box dimension must match the number of conditioning coordinates"
    );
    let mut point = vec![0.0; sample.conditioning_dim()];
    let mut out = Vec::new();
    for i in 0..sample.n() {
        sample.conditioning_point(i, &mut point);
        if cond_box.contains(&point) {
            out.push(i);
        }
    }
    out
}

/// Empirical overlap probability `(1/n) #{i: X_{i,J} in A_k ∩ A_l}`.
/// Symmetric in its box arguments; equals the box probability when both
/// arguments are the same box.
pub fn overlap_fraction(sample: &Sample, box_k: &CondBox, box_l: &CondBox) -> f64 {
    let mut point = vec![0.0; sample.conditioning_dim()];
    let mut count = 0usize;
    for i in 0..sample.n() {
        sample.conditioning_point(i, &mut point);
        if box_k.contains(&point) && box_l.contains(&point) {
            count += 1;
        }
    }
    count as f64 / sample.n() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::Sample;

    fn toy_sample() -> Sample {
        // columns: X1, X2, X3 with I = {0, 1}, J = {2}
        let rows = vec![
            vec![1.0, 2.0, -1.5],
            vec![2.0, 1.0, 0.5],
            vec![3.0, 3.0, 1.0],
            vec![0.5, 0.2, 2.0],
            vec![1.5, 2.5, 2.5],
            vec![2.5, 0.7, 3.0],
        ];
        Sample::from_rows(rows, vec![0, 1], vec![2], None).unwrap()
    }

    #[test]
    fn members_universal_box_returns_all_rows() {
        let s = toy_sample();
        let b = CondBox::full(1);
        assert_eq!(members(&s, &b), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn members_below_minimum_is_empty() {
        let s = toy_sample();
        let b = CondBox::interval(1, 0, f64::NEG_INFINITY, -2.5, false, false);
        assert!(members(&s, &b).is_empty());
    }

    #[test]
    fn members_half_open_interval_by_direct_scan() {
        let s = toy_sample();
        // x3 in (0, 2]
        let b = CondBox::interval(1, 0, 0.0, 2.0, true, false);
        // direct scan oracle over the six points
        let expected: Vec<usize> = [-1.5, 0.5, 1.0, 2.0, 2.5, 3.0]
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0 && x <= 2.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(members(&s, &b), expected);
    }

    #[test]
    fn overlap_fraction_self_nested_disjoint() {
        let s = toy_sample();
        let big = CondBox::interval(1, 0, 0.0, 3.0, true, false);
        let small = CondBox::interval(1, 0, 0.5, 2.0, false, false);
        let far = CondBox::interval(1, 0, 10.0, 20.0, false, false);
        let p_big = members(&s, &big).len() as f64 / s.n() as f64;
        let p_small = members(&s, &small).len() as f64 / s.n() as f64;
        assert_eq!(overlap_fraction(&s, &big, &big), p_big);
        // nested: overlap equals the smaller box probability
        assert_eq!(overlap_fraction(&s, &big, &small), p_small);
        assert_eq!(overlap_fraction(&s, &big, &far), 0.0);
        assert_eq!(
            overlap_fraction(&s, &big, &small),
            overlap_fraction(&s, &small, &big)
        );
    }

    #[test]
    fn split_le_gt_partitions_membership() {
        let s = toy_sample();
        let root = CondBox::full(1);
        let (lo, hi) = root.split_le_gt(0, 1.0);
        let lo_members = members(&s, &lo);
        let hi_members = members(&s, &hi);
        assert_eq!(lo_members, vec![0, 1, 2]);
        assert_eq!(hi_members, vec![3, 4, 5]);
        // boundary point goes left (closed above), never both
        let (lo2, hi2) = root.split_le_gt(0, 2.0);
        assert!(members(&s, &lo2).contains(&3));
        assert!(!members(&s, &hi2).contains(&3));
    }

    #[test]
    fn code_boxes_match_exact_codes() {
        let rows = vec![
            vec![1.0, 2.0, 2006.0],
            vec![2.0, 1.0, 2007.0],
            vec![3.0, 3.0, 2006.0],
            vec![0.5, 0.2, 2008.0],
        ];
        let s = Sample::from_rows(rows, vec![0, 1], vec![2], None).unwrap();
        let b = CondBox::codes(1, 0, vec![2006, 2008]);
        assert_eq!(members(&s, &b), vec![0, 2, 3]);
    }

    #[test]
    fn union_box_membership() {
        let s = toy_sample();
        let u = CondBox::union(vec![
            CondBox::interval(1, 0, f64::NEG_INFINITY, 0.0, false, false),
            CondBox::interval(1, 0, 2.4, f64::INFINITY, false, false),
        ]);
        assert_eq!(members(&s, &u), vec![0, 4, 5]);
    }
}
