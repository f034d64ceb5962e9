//! Scenario generators and the seeded Monte Carlo harness for level/power
//! studies. Replicates are independent tasks on derived RNG streams;
//! reported frequencies are reproducible from (scenario, R, seed) and do not
//! depend on the worker count.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxes::{BoxFamily, CondBox};
use crate::bootstrap::{bootstrap_test_pair, BootstrapConfig, Scheme};
use crate::covariance::delta_hat;
use crate::error::{Error, Result};
use crate::estimators::tau_matrix;
use crate::sample::Sample;
use crate::sampling::{
    normal_quantile, open_unit, rho_from_tau, sample_bivariate_normal, sample_clayton_pair,
    sample_std_normal, stream_rng, EquicorrGaussian,
};
use crate::testing::{extended_contrast, wald_statistic, Method};
use crate::tree::{cut_ckt, TreeConfig};

fn default_p3() -> usize {
    3
}
fn default_rho() -> f64 {
    0.7071
}
fn default_theta_low() -> f64 {
    1.0
}
fn default_theta_high() -> f64 {
    5.0
}
fn default_tau_high() -> f64 {
    0.7
}
fn default_tau_low() -> f64 {
    0.1
}
fn default_split_fraction() -> f64 {
    0.5
}
fn default_b() -> usize {
    1000
}

/// Data-generating law of one study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Gaussian X_I with per-box conditional means but one common
    /// equicorrelation; the null holds whatever the means.
    GaussLevel {
        m: usize,
        #[serde(default = "default_p3")]
        p: usize,
        #[serde(default = "default_rho")]
        rho: f64,
    },
    /// Per-box equicorrelations from Kendall's taus equally spaced in
    /// [0, 0.5]; the null fails.
    GaussPower {
        m: usize,
        #[serde(default = "default_p3")]
        p: usize,
    },
    /// Bivariate Clayton with a structural break of the parameter at
    /// X_3 = lambda; boxes are uniform-quantile intervals.
    ClaytonBreak {
        m: usize,
        lambda: f64,
        #[serde(default = "default_theta_low")]
        theta_low: f64,
        #[serde(default = "default_theta_high")]
        theta_high: f64,
    },
    /// Standard Gaussian conditioning vector; the (1,2) pair carries a
    /// conditional Gaussian copula whose tau jumps at X_{p+1} = 1 (or is
    /// identically zero under the null); all other pairs independent.
    /// Boxes are grown per replicate by the tree on a build split.
    DvineDatadriven {
        p: usize,
        q: usize,
        #[serde(default = "default_tau_high")]
        tau_high: f64,
        #[serde(default = "default_tau_low")]
        tau_low: f64,
        #[serde(default)]
        null: bool,
        #[serde(default)]
        tree: TreeConfig,
        #[serde(default = "default_split_fraction")]
        split_fraction: f64,
    },
    /// Pointwise independence, subset taus +-1/2.
    Counterexample1,
    /// Pointwise taus +-1/3, equal subset laws.
    Counterexample2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub kind: ScenarioKind,
    pub n: usize,
    /// Monte Carlo replication count.
    pub r: usize,
    pub seed: u64,
    /// Inner bootstrap replication count.
    #[serde(default = "default_b")]
    pub b: usize,
}

/// Quantile boxes over one conditioning coordinate: (q_{(k-1)/m}, q_{k/m}]
/// with unbounded first and last boxes, a partition of the line.
fn quantile_boxes(thresholds: &[f64]) -> BoxFamily {
    let m = thresholds.len() + 1;
    let mut boxes = Vec::with_capacity(m);
    for k in 0..m {
        let lower = if k == 0 { f64::NEG_INFINITY } else { thresholds[k - 1] };
        let upper = if k == m - 1 { f64::INFINITY } else { thresholds[k] };
        boxes.push(CondBox::interval(1, 0, lower, upper, true, false));
    }
    BoxFamily::new(boxes, true)
}

/// Standard-normal quantile thresholds z_{k/m}, k = 1..m-1.
pub fn normal_quantile_boxes(m: usize) -> Result<BoxFamily> {
    if m < 2 {
        return Err(Error::invalid("need at least 2 boxes"));
    }
    let thresholds: Result<Vec<f64>> = (1..m).map(|k| normal_quantile(k as f64 / m as f64)).collect();
    Ok(quantile_boxes(&thresholds?))
}

/// Uniform-quantile thresholds k/m on [0, 1].
pub fn uniform_quantile_boxes(m: usize) -> Result<BoxFamily> {
    if m < 2 {
        return Err(Error::invalid("need at least 2 boxes"));
    }
    let thresholds: Vec<f64> = (1..m).map(|k| k as f64 / m as f64).collect();
    Ok(quantile_boxes(&thresholds))
}

/// Conditional means per box and conditioned coordinate. The m = 4 table is
/// the reference pattern; other m interpolate the same per-coordinate spans.
/// Means shift whole boxes and leave every concordance count unchanged, so
/// they decorate the scenario without touching the null.
fn conditional_means(m: usize, p: usize) -> Vec<Vec<f64>> {
    let span = |coord: usize, frac: f64| -> f64 {
        match coord {
            0 => 2.0 * frac,
            1 => -2.0 * frac,
            2 => 1.0 - 2.0 * frac,
            _ => 0.0,
        }
    };
    (0..m)
        .map(|k| {
            (0..p)
                .map(|coord| {
                    if m == 4 && coord == 2 {
                        // reference table for the third coordinate: 1, 1/3, -1/3, 1
                        [1.0, 1.0 / 3.0, -1.0 / 3.0, 1.0][k]
                    } else {
                        let frac = if m == 1 { 0.0 } else { k as f64 / (m as f64 - 1.0) };
                        span(coord, frac)
                    }
                })
                .collect()
        })
        .collect()
}

/// Kendall's taus equally spaced in [0, 0.5] for the power scenarios.
fn power_taus(m: usize) -> Vec<f64> {
    (0..m).map(|k| 0.5 * k as f64 / (m as f64 - 1.0)).collect()
}

fn box_index_from_thresholds(x: f64, thresholds: &[f64]) -> usize {
    thresholds.iter().take_while(|&&t| x > t).count()
}

impl Scenario {
    /// The fixed box family of the scenario, when boxes are not data-driven.
    pub fn boxes(&self) -> Result<Option<BoxFamily>> {
        match &self.kind {
            ScenarioKind::GaussLevel { m, .. } | ScenarioKind::GaussPower { m, .. } => {
                Ok(Some(normal_quantile_boxes(*m)?))
            }
            ScenarioKind::ClaytonBreak { m, .. } => Ok(Some(uniform_quantile_boxes(*m)?)),
            ScenarioKind::DvineDatadriven { .. } => Ok(None),
            ScenarioKind::Counterexample1 | ScenarioKind::Counterexample2 => {
                Ok(Some(counterexample_subset_boxes()))
            }
        }
    }

    /// One dataset of size n from the scenario's law.
    pub fn generate(&self, rng: &mut impl Rng) -> Result<Sample> {
        match &self.kind {
            ScenarioKind::GaussLevel { m, p, rho } => {
                gauss_sample(*m, *p, &vec![*rho; *m], self.n, rng)
            }
            ScenarioKind::GaussPower { m, p } => {
                let rhos: Result<Vec<f64>> = power_taus(*m).iter().map(|&t| rho_from_tau(t)).collect();
                gauss_sample(*m, *p, &rhos?, self.n, rng)
            }
            ScenarioKind::ClaytonBreak {
                lambda,
                theta_low,
                theta_high,
                ..
            } => clayton_break_sample(*lambda, *theta_low, *theta_high, self.n, rng),
            ScenarioKind::DvineDatadriven {
                p,
                q,
                tau_high,
                tau_low,
                null,
                ..
            } => dvine_sample(*p, *q, *tau_high, *tau_low, *null, self.n, rng),
            ScenarioKind::Counterexample1 => counterexample1_sample(self.n, rng),
            ScenarioKind::Counterexample2 => counterexample2_sample(self.n, rng),
        }
    }
}

fn gauss_sample(m: usize, p: usize, rhos: &[f64], n: usize, rng: &mut impl Rng) -> Result<Sample> {
    if m < 2 {
        return Err(Error::invalid("need at least 2 boxes"));
    }
    let thresholds: Result<Vec<f64>> = (1..m).map(|k| normal_quantile(k as f64 / m as f64)).collect();
    let thresholds = thresholds?;
    let means = conditional_means(m, p);
    let generators: Result<Vec<EquicorrGaussian>> = (0..m)
        .map(|k| EquicorrGaussian::new(p, rhos[k], means[k].clone()))
        .collect();
    let generators = generators?;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z = sample_std_normal(rng);
            let k = box_index_from_thresholds(z, &thresholds);
            let mut row = generators[k].draw(rng);
            row.push(z);
            row
        })
        .collect();
    Sample::from_rows(rows, (0..p).collect(), vec![p], None)
}

fn clayton_break_sample(
    lambda: f64,
    theta_low: f64,
    theta_high: f64,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Sample> {
    let rows: Result<Vec<Vec<f64>>> = (0..n)
        .map(|_| {
            let x3 = open_unit(rng);
            let theta = if x3 <= lambda { theta_low } else { theta_high };
            let (u, v) = sample_clayton_pair(theta, rng)?;
            Ok(vec![u, v, x3])
        })
        .collect();
    Sample::from_rows(rows?, vec![0, 1], vec![2], None)
}

fn dvine_sample(
    p: usize,
    q: usize,
    tau_high: f64,
    tau_low: f64,
    null: bool,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Sample> {
    if p < 2 || q < 1 {
        return Err(Error::invalid("dvine scenario needs p >= 2 and q >= 1"));
    }
    let rho_high = rho_from_tau(tau_high)?;
    let rho_low = rho_from_tau(tau_low)?;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let xj: Vec<f64> = (0..q).map(|_| sample_std_normal(rng)).collect();
            let rho = if null {
                0.0
            } else if xj[0] > 1.0 {
                rho_low
            } else {
                rho_high
            };
            let mut row = Vec::with_capacity(p + q);
            let (x1, x2) = sample_bivariate_normal(rho, rng);
            row.push(x1);
            row.push(x2);
            for _ in 2..p {
                row.push(sample_std_normal(rng));
            }
            row.extend_from_slice(&xj);
            row
        })
        .collect();
    Sample::from_rows(rows, (0..p).collect(), (p..p + q).collect(), None)
}

fn counterexample1_sample(n: usize, rng: &mut impl Rng) -> Result<Sample> {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let x3 = 4.0 * open_unit(rng);
            let u1 = open_unit(rng);
            let u2 = open_unit(rng);
            let (x1, x2) = match x3 {
                z if z <= 1.0 => (u1, u2),
                z if z <= 2.0 => (2.0 + u1, 2.0 + u2),
                z if z <= 3.0 => (u1, 2.0 + u2),
                _ => (2.0 + u1, u2),
            };
            vec![x1, x2, x3]
        })
        .collect();
    Sample::from_rows(rows, vec![0, 1], vec![2], None)
}

fn counterexample2_sample(n: usize, rng: &mut impl Rng) -> Result<Sample> {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let x3 = 4.0 * open_unit(rng);
            let rho = if (x3.floor() as i64) % 2 == 0 { 0.5 } else { -0.5 };
            let (x1, x2) = sample_bivariate_normal(rho, rng);
            vec![x1, x2, x3]
        })
        .collect();
    Sample::from_rows(rows, vec![0, 1], vec![2], None)
}

/// The two halves A_1 = (-inf, 2], A_2 = (2, inf) used by both
/// counter-example models.
pub fn counterexample_subset_boxes() -> BoxFamily {
    BoxFamily::new(
        vec![
            CondBox::interval(1, 0, f64::NEG_INFINITY, 2.0, true, false),
            CondBox::interval(1, 0, 2.0, f64::INFINITY, true, false),
        ],
        true,
    )
}

/// The four unit-interval regimes of the counter-example models.
pub fn counterexample_regime_boxes() -> BoxFamily {
    BoxFamily::new(
        vec![
            CondBox::interval(1, 0, f64::NEG_INFINITY, 1.0, true, false),
            CondBox::interval(1, 0, 1.0, 2.0, true, false),
            CondBox::interval(1, 0, 2.0, 3.0, true, false),
            CondBox::interval(1, 0, 3.0, f64::INFINITY, true, false),
        ],
        true,
    )
}

/// Rejection frequencies of the requested methods at the 5% level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub methods: Vec<Method>,
    pub rejection_rates: Vec<f64>,
    pub level: f64,
    pub r: usize,
    pub n: usize,
    pub seed: u64,
    pub b: usize,
    pub elapsed_secs: f64,
    /// Data-driven scenarios only: mean leaf count of the built trees.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_leaf_count: Option<f64>,
    /// Data-driven scenarios only: fraction of replicates whose leaf family
    /// was testable (at least 2 leaves, each with 2+ held-out members).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tested_fraction: Option<f64>,
}

struct ReplicateOutcome {
    rejections: Vec<bool>,
    leaf_count: Option<usize>,
    tested: bool,
}

const LEVEL: f64 = 0.05;

fn wants(methods: &[Method], scheme: Scheme) -> bool {
    methods.iter().any(|m| {
        matches!(
            (m, scheme),
            (Method::BootInfClassical | Method::BootL2Classical, Scheme::Classical)
                | (Method::BootInfConditional | Method::BootL2Conditional, Scheme::Conditional)
        )
    })
}

/// Runs all requested methods on one (sample, family) draw and reports the
/// 5%-level rejections in method order.
fn run_methods_once(
    sample: &Sample,
    family: &BoxFamily,
    methods: &[Method],
    b: usize,
    classical_seed: u64,
    conditional_seed: u64,
) -> Result<Vec<bool>> {
    let mut p_values: Vec<Option<f64>> = vec![None; methods.len()];
    if methods.contains(&Method::Wald) {
        let tau = tau_matrix(sample, family)?;
        let delta = delta_hat(sample, family)?;
        let contrast = extended_contrast(family.m(), sample.conditioned_dim())?;
        let res = wald_statistic(&tau, &delta, &contrast)?;
        for (slot, m) in p_values.iter_mut().zip(methods) {
            if *m == Method::Wald {
                *slot = Some(res.p_value);
            }
        }
    }
    for (scheme, seed) in [
        (Scheme::Classical, classical_seed),
        (Scheme::Conditional, conditional_seed),
    ] {
        if !wants(methods, scheme) {
            continue;
        }
        let config = BootstrapConfig::new(scheme, b, seed);
        let (inf_res, l2_res) = bootstrap_test_pair(sample, family, &config)?;
        for (slot, m) in p_values.iter_mut().zip(methods) {
            match (m, scheme) {
                (Method::BootInfClassical, Scheme::Classical)
                | (Method::BootInfConditional, Scheme::Conditional) => {
                    *slot = Some(inf_res.p_value)
                }
                (Method::BootL2Classical, Scheme::Classical)
                | (Method::BootL2Conditional, Scheme::Conditional) => *slot = Some(l2_res.p_value),
                _ => {}
            }
        }
    }
    Ok(p_values
        .into_iter()
        .map(|p| p.map(|p| p <= LEVEL).unwrap_or(false))
        .collect())
}

/// Shuffled index split for build/test halves.
pub fn split_indices(n: usize, fraction: f64, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    let cut = ((n as f64) * fraction).round() as usize;
    let test = indices.split_off(cut.min(n));
    (indices, test)
}

fn run_replicate(scenario: &Scenario, methods: &[Method], rep: u64) -> Result<ReplicateOutcome> {
    let mut rng = stream_rng(scenario.seed, rep);
    let sample = scenario.generate(&mut rng)?;
    let classical_seed: u64 = rng.random();
    let conditional_seed: u64 = rng.random();
    match &scenario.kind {
        ScenarioKind::DvineDatadriven {
            tree,
            split_fraction,
            ..
        } => {
            let (build_idx, test_idx) = split_indices(sample.n(), *split_fraction, &mut rng);
            let build = sample.select_rows(&build_idx);
            let tree_built = cut_ckt(&build, tree)?;
            let leaves = tree_built.leaves();
            let leaf_count = leaves.m();
            if leaf_count < 2 || test_idx.len() < 2 {
                return Ok(ReplicateOutcome {
                    rejections: vec![false; methods.len()],
                    leaf_count: Some(leaf_count),
                    tested: false,
                });
            }
            let test = sample.select_rows(&test_idx);
            match run_methods_once(&test, &leaves, methods, scenario.b, classical_seed, conditional_seed)
            {
                Ok(rejections) => Ok(ReplicateOutcome {
                    rejections,
                    leaf_count: Some(leaf_count),
                    tested: true,
                }),
                // a leaf with fewer than 2 held-out members is untestable
                Err(Error::InsufficientSubsample { .. }) => Ok(ReplicateOutcome {
                    rejections: vec![false; methods.len()],
                    leaf_count: Some(leaf_count),
                    tested: false,
                }),
                Err(e) => Err(e),
            }
        }
        _ => {
            let family = scenario.boxes()?.expect("fixed-box scenario");
            let rejections = run_methods_once(
                &sample,
                &family,
                methods,
                scenario.b,
                classical_seed,
                conditional_seed,
            )?;
            Ok(ReplicateOutcome {
                rejections,
                leaf_count: None,
                tested: true,
            })
        }
    }
}

/// R independent replicates, each tested at the 5% level; per-replicate RNG
/// streams derive from the master seed by replicate index.
pub fn run_study(scenario: &Scenario, methods: &[Method]) -> Result<MonteCarloReport> {
    if scenario.r < 1 {
        return Err(Error::invalid("replication count must be >= 1"));
    }
    if methods.is_empty() {
        return Err(Error::invalid("need at least one method"));
    }
    let started = std::time::Instant::now();
    let outcomes: Result<Vec<ReplicateOutcome>> = (0..scenario.r as u64)
        .into_par_iter()
        .map(|rep| run_replicate(scenario, methods, rep))
        .collect();
    let outcomes = outcomes?;
    let r = scenario.r as f64;
    let rejection_rates: Vec<f64> = (0..methods.len())
        .map(|mi| outcomes.iter().filter(|o| o.rejections[mi]).count() as f64 / r)
        .collect();
    let leaf_counts: Vec<usize> = outcomes.iter().filter_map(|o| o.leaf_count).collect();
    let avg_leaf_count = (!leaf_counts.is_empty())
        .then(|| leaf_counts.iter().sum::<usize>() as f64 / leaf_counts.len() as f64);
    let tested_fraction = matches!(scenario.kind, ScenarioKind::DvineDatadriven { .. })
        .then(|| outcomes.iter().filter(|o| o.tested).count() as f64 / r);
    Ok(MonteCarloReport {
        methods: methods.to_vec(),
        rejection_rates,
        level: LEVEL,
        r: scenario.r,
        n: scenario.n,
        seed: scenario.seed,
        b: scenario.b,
        elapsed_secs: started.elapsed().as_secs_f64(),
        avg_leaf_count,
        tested_fraction,
    })
}

/// One verified claim of the counter-example report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClaimCheck {
    pub claim: String,
    pub observed: f64,
    pub target: f64,
    pub tolerance: f64,
    pub status: ClaimStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub n: usize,
    pub seed: u64,
    pub claims: Vec<ClaimCheck>,
}

impl CounterexampleReport {
    pub fn all_passed(&self) -> bool {
        self.claims.iter().all(|c| c.status == ClaimStatus::Pass)
    }
}

fn subset_taus(sample: &Sample, family: &BoxFamily) -> Result<Vec<f64>> {
    let est = tau_matrix(sample, family)?;
    Ok((0..family.m()).map(|k| est.tau(0, k)).collect())
}

/// Monte Carlo verification of the two counter-example models: model 1 has
/// pointwise independence with subset taus +-1/2, model 2 has pointwise taus
/// +-1/3 with equal subset taus. Below n = 10^4 the tolerances widen with
/// sqrt(1e5/n) and failures downgrade to warnings.
pub fn verify_counterexamples(n: usize, seed: u64) -> Result<CounterexampleReport> {
    let widen = if n < 100_000 {
        (100_000.0 / n as f64).sqrt()
    } else {
        1.0
    };
    let warn_only = n < 10_000;
    let status = |ok: bool| {
        if ok {
            ClaimStatus::Pass
        } else if warn_only {
            ClaimStatus::Warn
        } else {
            ClaimStatus::Fail
        }
    };
    let mut claims = Vec::new();
    let mut check_abs = |claim: String, observed: f64, target: f64, tol: f64| {
        let tol = tol * widen;
        claims.push(ClaimCheck {
            claim,
            observed,
            target,
            tolerance: tol,
            status: status((observed - target).abs() <= tol),
        });
    };

    let subsets = counterexample_subset_boxes();
    let regimes = counterexample_regime_boxes();

    let model1 = Scenario {
        kind: ScenarioKind::Counterexample1,
        n,
        r: 1,
        seed,
        b: 0,
    };
    let s1 = model1.generate(&mut stream_rng(seed, 0))?;
    let sub1 = subset_taus(&s1, &subsets)?;
    check_abs("model1: tau | X3 in A1 = 1/2".into(), sub1[0], 0.5, 0.02);
    check_abs("model1: tau | X3 in A2 = -1/2".into(), sub1[1], -0.5, 0.02);
    for (k, tau) in subset_taus(&s1, &regimes)?.into_iter().enumerate() {
        check_abs(format!("model1: pointwise regime {} tau = 0", k + 1), tau, 0.0, 0.03);
    }

    let model2 = Scenario {
        kind: ScenarioKind::Counterexample2,
        n,
        r: 1,
        seed,
        b: 0,
    };
    let s2 = model2.generate(&mut stream_rng(seed, 1))?;
    let sub2 = subset_taus(&s2, &subsets)?;
    check_abs(
        "model2: subset taus equal across A1, A2".into(),
        sub2[0] - sub2[1],
        0.0,
        0.02,
    );
    let reg2 = subset_taus(&s2, &regimes)?;
    // regime taus alternate around +-(2/pi) asin(1/2) = +-1/3
    let regime_gap = (reg2[0] - reg2[1]).abs();
    let expected_gap = 2.0 * crate::sampling::tau_from_rho(0.5)?;
    check_abs(
        "model2: adjacent regime tau gap = 2*(2/pi)*asin(1/2)".into(),
        regime_gap,
        expected_gap,
        0.04,
    );
    claims.push(ClaimCheck {
        claim: "model2: regime taus differ by at least 0.5".into(),
        observed: regime_gap,
        target: 0.5,
        tolerance: 0.0,
        status: status(regime_gap >= 0.5),
    });

    Ok(CounterexampleReport { n, seed, claims })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::members;
    use crate::sampling::ks_distance_uniform;

    #[test]
    fn gauss_level_box_occupancies_are_near_quarters() {
        let scenario = Scenario {
            kind: ScenarioKind::GaussLevel { m: 4, p: 3, rho: 0.7071 },
            n: 10_000,
            r: 1,
            seed: 1,
            b: 0,
        };
        let s = scenario.generate(&mut stream_rng(1, 0)).unwrap();
        let family = scenario.boxes().unwrap().unwrap();
        let n = s.n() as f64;
        for b in &family.boxes {
            let count = members(&s, b).len() as f64;
            // binomial: n/4 +- 3 sqrt(n)
            assert!((count - n / 4.0).abs() < 3.0 * n.sqrt(), "count = {count}");
        }
    }

    #[test]
    fn gauss_level_taus_are_half_everywhere() {
        let scenario = Scenario {
            kind: ScenarioKind::GaussLevel { m: 4, p: 3, rho: 0.7071 },
            n: 10_000,
            r: 1,
            seed: 2,
            b: 0,
        };
        let s = scenario.generate(&mut stream_rng(2, 0)).unwrap();
        let family = scenario.boxes().unwrap().unwrap();
        let est = tau_matrix(&s, &family).unwrap();
        for pair_idx in 0..est.pair_count() {
            for k in 0..4 {
                let tau = est.tau(pair_idx, k);
                assert!((tau - 0.5).abs() < 0.05, "pair {pair_idx} box {k}: {tau}");
            }
        }
    }

    #[test]
    fn independent_coordinates_have_tau_near_zero() {
        let scenario = Scenario {
            kind: ScenarioKind::GaussLevel { m: 2, p: 2, rho: 0.0 },
            n: 10_000,
            r: 1,
            seed: 3,
            b: 0,
        };
        let s = scenario.generate(&mut stream_rng(3, 0)).unwrap();
        let family = scenario.boxes().unwrap().unwrap();
        let est = tau_matrix(&s, &family).unwrap();
        for k in 0..2 {
            assert!(est.tau(0, k).abs() < 0.05);
        }
    }

    #[test]
    fn clayton_break_taus_by_side() {
        let scenario = Scenario {
            kind: ScenarioKind::ClaytonBreak {
                m: 2,
                lambda: 0.5,
                theta_low: 1.0,
                theta_high: 5.0,
            },
            n: 60_000,
            r: 1,
            seed: 4,
            b: 0,
        };
        let s = scenario.generate(&mut stream_rng(4, 0)).unwrap();
        let family = BoxFamily::new(
            vec![
                CondBox::interval(1, 0, f64::NEG_INFINITY, 0.5, true, false),
                CondBox::interval(1, 0, 0.5, f64::INFINITY, true, false),
            ],
            true,
        );
        let est = tau_matrix(&s, &family).unwrap();
        assert!((est.tau(0, 0) - 1.0 / 3.0).abs() < 0.02, "below: {}", est.tau(0, 0));
        assert!((est.tau(0, 1) - 5.0 / 7.0).abs() < 0.02, "above: {}", est.tau(0, 1));
        // generated uniforms pass the KS sanity check
        let x3: Vec<f64> = (0..s.n()).map(|i| s.value(i, 2)).collect();
        assert!(ks_distance_uniform(&x3) < 0.02);
    }

    #[test]
    fn dvine_tau_jump_is_realized() {
        let scenario = Scenario {
            kind: ScenarioKind::DvineDatadriven {
                p: 2,
                q: 1,
                tau_high: 0.7,
                tau_low: 0.1,
                null: false,
                tree: TreeConfig::default(),
                split_fraction: 0.5,
            },
            n: 20_000,
            r: 1,
            seed: 5,
            b: 0,
        };
        let s = scenario.generate(&mut stream_rng(5, 0)).unwrap();
        let family = BoxFamily::new(
            vec![
                CondBox::interval(1, 0, f64::NEG_INFINITY, 1.0, true, false),
                CondBox::interval(1, 0, 1.0, f64::INFINITY, true, false),
            ],
            true,
        );
        let est = tau_matrix(&s, &family).unwrap();
        assert!((est.tau(0, 0) - 0.7).abs() < 0.03);
        assert!((est.tau(0, 1) - 0.1).abs() < 0.05);
    }

    #[test]
    fn counterexample_verification_passes_at_scale() {
        let report = verify_counterexamples(100_000, 42).unwrap();
        assert!(
            report.all_passed(),
            "failed claims: {:?}",
            report
                .claims
                .iter()
                .filter(|c| c.status != ClaimStatus::Pass)
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn counterexample_small_n_warns_instead_of_failing() {
        let report = verify_counterexamples(100, 7).unwrap();
        assert!(report.claims.iter().all(|c| c.status != ClaimStatus::Fail));
    }

    #[test]
    fn study_reports_are_seed_reproducible() {
        let scenario = Scenario {
            kind: ScenarioKind::GaussLevel { m: 2, p: 2, rho: 0.5 },
            n: 120,
            r: 10,
            seed: 11,
            b: 50,
        };
        let methods = [Method::Wald, Method::BootL2Classical];
        let a = run_study(&scenario, &methods).unwrap();
        let b = run_study(&scenario, &methods).unwrap();
        assert_eq!(a.rejection_rates, b.rejection_rates);
        assert_eq!(a.r, 10);
    }
}
