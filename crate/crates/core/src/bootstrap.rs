//! Efron and conditional resampling schemes and the bootstrapped test
//! statistics. Replicate b always draws from stream b of the master seed, so
//! p-values are bit-identical for any worker count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxes::{members, BoxFamily};
use crate::error::{Error, Result};
use crate::estimators::{tau_matrix_with_members, tau_matrix_opts};
use crate::sample::Sample;
use crate::sampling::stream_rng;
use crate::testing::{extended_contrast, stat_inf, stat_l2, ContrastMatrix, Method, TestResult};

/// Resampling scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Efron's bootstrap: n rows drawn i.i.d. with replacement.
    Classical,
    /// Conditional bootstrap: draw X_J* among the observed conditioning
    /// rows, then X_I* among the conditioned rows of the box containing
    /// X_J*.
    Conditional,
}

/// Which centered statistic the bootstrap targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    Inf,
    L2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub b: usize,
    pub scheme: Scheme,
    pub seed: u64,
    /// p-value convention: strict #{T* > T}/B by default; the smoothed
    /// (1 + #)/(B + 1) variant on request.
    pub smoothed_pvalue: bool,
    /// Redraw cap for replicates that produce a box with fewer than 2
    /// members.
    pub max_redraws: usize,
}

impl BootstrapConfig {
    pub fn new(scheme: Scheme, b: usize, seed: u64) -> Self {
        BootstrapConfig {
            b,
            scheme,
            seed,
            smoothed_pvalue: false,
            max_redraws: 100,
        }
    }
}

pub fn resample_classical(sample: &Sample, rng: &mut impl Rng) -> Sample {
    let n = sample.n();
    let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    sample.select_rows(&indices)
}

/// One conditional-bootstrap resample. Boxes must cover every observed
/// conditioning point; when boxes overlap, the smallest containing index
/// wins so replications stay reproducible.
pub fn resample_conditional(
    sample: &Sample,
    family: &BoxFamily,
    rng: &mut impl Rng,
) -> Result<Sample> {
    let member_lists: Vec<Vec<usize>> = family.boxes.iter().map(|b| members(sample, b)).collect();
    let box_of = assign_boxes(sample, family)?;
    resample_conditional_prepared(sample, &member_lists, &box_of, rng)
}

/// Smallest containing box index per row, or a coverage error.
fn assign_boxes(sample: &Sample, family: &BoxFamily) -> Result<Vec<u32>> {
    let mut point = vec![0.0; sample.conditioning_dim()];
    let mut out = Vec::with_capacity(sample.n());
    for i in 0..sample.n() {
        sample.conditioning_point(i, &mut point);
        match family.boxes.iter().position(|b| b.contains(&point)) {
            Some(k) => out.push(k as u32),
            None => return Err(Error::Coverage { row: i }),
        }
    }
    Ok(out)
}

fn resample_conditional_prepared(
    sample: &Sample,
    member_lists: &[Vec<usize>],
    box_of: &[u32],
    rng: &mut impl Rng,
) -> Result<Sample> {
    let n = sample.n();
    let mut i_source = Vec::with_capacity(n);
    let mut j_source = Vec::with_capacity(n);
    for _ in 0..n {
        let j = rng.random_range(0..n);
        let k = box_of[j] as usize;
        let pool = &member_lists[k];
        debug_assert!(!pool.is_empty(), "box containing an observation cannot be empty");
        let i = pool[rng.random_range(0..pool.len())];
        i_source.push(i);
        j_source.push(j);
    }
    Ok(sample.compose_rows(&i_source, &j_source))
}

/// Both centered statistics of every bootstrap replicate, one RNG stream per
/// replicate. Shared by the inf and l2 tests so a method pair reuses the
/// same resamples.
pub fn bootstrap_null_stats(
    sample: &Sample,
    family: &BoxFamily,
    contrast: &ContrastMatrix,
    w_obs: &[f64],
    config: &BootstrapConfig,
) -> Result<Vec<(f64, f64)>> {
    family.validate_dim(sample.conditioning_dim())?;
    let n = sample.n();
    let root_n = (n as f64).sqrt();
    let (member_lists, box_of) = match config.scheme {
        Scheme::Classical => (Vec::new(), Vec::new()),
        Scheme::Conditional => {
            let lists: Vec<Vec<usize>> = family.boxes.iter().map(|b| members(sample, b)).collect();
            let assignment = assign_boxes(sample, family)?;
            (lists, assignment)
        }
    };

    (0..config.b)
        .into_par_iter()
        .map(|b_idx| {
            let mut rng = stream_rng(config.seed, b_idx as u64);
            for _attempt in 0..config.max_redraws {
                let resampled = match config.scheme {
                    Scheme::Classical => resample_classical(sample, &mut rng),
                    Scheme::Conditional => {
                        resample_conditional_prepared(sample, &member_lists, &box_of, &mut rng)?
                    }
                };
                let star_members: Vec<Vec<usize>> =
                    family.boxes.iter().map(|b| members(&resampled, b)).collect();
                match tau_matrix_with_members(&resampled, &star_members, false) {
                    Ok(est) => {
                        let centered: Vec<f64> = est
                            .stacked()
                            .iter()
                            .zip(w_obs.iter())
                            .map(|(s, o)| s - o)
                            .collect();
                        let diffs = contrast.apply(&centered);
                        let t_inf = diffs
                            .iter()
                            .fold(0.0f64, |acc, &v| acc.max((root_n * v).abs()));
                        let t_l2: f64 = diffs.iter().map(|&v| n as f64 * v * v).sum();
                        return Ok((t_inf, t_l2));
                    }
                    Err(Error::InsufficientSubsample { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::RedrawExhausted {
                replicate: b_idx,
                attempts: config.max_redraws,
            })
        })
        .collect()
}

fn p_value_from_stats(observed: f64, stats: impl Iterator<Item = f64>, b: usize, smoothed: bool) -> f64 {
    let exceed = stats.filter(|&t| t > observed).count();
    if smoothed {
        (1 + exceed) as f64 / (b + 1) as f64
    } else {
        exceed as f64 / b as f64
    }
}

fn method_for(scheme: Scheme, stat: StatKind) -> Method {
    match (scheme, stat) {
        (Scheme::Classical, StatKind::Inf) => Method::BootInfClassical,
        (Scheme::Classical, StatKind::L2) => Method::BootL2Classical,
        (Scheme::Conditional, StatKind::Inf) => Method::BootInfConditional,
        (Scheme::Conditional, StatKind::L2) => Method::BootL2Conditional,
    }
}

/// Bootstrap test for one statistic.
pub fn bootstrap_test(
    sample: &Sample,
    family: &BoxFamily,
    stat: StatKind,
    config: &BootstrapConfig,
) -> Result<TestResult> {
    let (inf_res, l2_res) = bootstrap_test_pair(sample, family, config)?;
    Ok(match stat {
        StatKind::Inf => inf_res,
        StatKind::L2 => l2_res,
    })
}

/// Runs both statistics on one shared set of resamples.
pub fn bootstrap_test_pair(
    sample: &Sample,
    family: &BoxFamily,
    config: &BootstrapConfig,
) -> Result<(TestResult, TestResult)> {
    if config.b < 1 {
        return Err(Error::invalid("bootstrap replication count must be >= 1"));
    }
    if family.m() < 2 {
        return Err(Error::invalid(format!(
            "tests need at least 2 boxes, got {}",
            family.m()
        )));
    }
    let est = tau_matrix_opts(sample, family, false)?;
    let p = sample.conditioned_dim();
    let contrast = extended_contrast(family.m(), p)?;
    let obs_inf = stat_inf(&est, &contrast);
    let obs_l2 = stat_l2(&est, &contrast);
    let stats = bootstrap_null_stats(sample, family, &contrast, est.stacked(), config)?;

    let build = |stat: StatKind, observed: f64| TestResult {
        method: method_for(config.scheme, stat),
        statistic: observed,
        df: None,
        p_value: p_value_from_stats(
            observed,
            stats.iter().map(|&(i, l)| match stat {
                StatKind::Inf => i,
                StatKind::L2 => l,
            }),
            config.b,
            config.smoothed_pvalue,
        ),
        m: family.m(),
        p,
        n: sample.n(),
        b: Some(config.b),
        seed: Some(config.seed),
    };
    Ok((build(StatKind::Inf, obs_inf), build(StatKind::L2, obs_l2)))
}
