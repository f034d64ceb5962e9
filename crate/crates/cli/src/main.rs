mod boxspec;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use boxtau::bootstrap::{bootstrap_test_pair, BootstrapConfig, Scheme};
use boxtau::error::Error;
use boxtau::simulation::{run_study, verify_counterexamples, ClaimStatus, MonteCarloReport, Scenario, ScenarioKind};
use boxtau::testing::{extended_contrast, wald_statistic_opts, Method, TestResult};
use boxtau::tree::{cut_ckt, TreeConfig};
use boxtau::{delta_hat_with_path, load_sample, stream_rng, tau_matrix, BoxFamily, Sample};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "boxtau", version, about = "Equality tests for conditional Kendall's tau over conditioning boxes")]
struct Cli {
    /// Worker threads (default: available parallelism; BOXTAU_THREADS is
    /// honored when the flag is absent). Results never depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test tau equality across a declared box family.
    Test(TestArgs),
    /// Grow a dependence tree, then test its leaves on a held-out split.
    Tree(TreeArgs),
    /// Run a Monte Carlo level/power study from a scenario config.
    Simulate(SimulateArgs),
    /// Monte Carlo verification of the two pointwise-vs-subset
    /// counter-example models.
    VerifyCounterexamples(VerifyArgs),
}

#[derive(Args, Serialize, Clone)]
struct TestArgs {
    /// CSV input (header row required).
    #[arg(long)]
    input: PathBuf,
    /// Inline "col:role,..." (roles: cond, conditioning, cat, ignore) or a
    /// path to a JSON file {"col": "role", ...}.
    #[arg(long)]
    roles: String,
    /// JSON box-family file.
    #[arg(long)]
    boxes: PathBuf,
    /// Repeatable: wald, boot-inf-classical, boot-l2-classical,
    /// boot-inf-conditional, boot-l2-conditional. Default: all five.
    #[arg(long = "method")]
    methods: Vec<String>,
    /// Bootstrap replication count.
    #[arg(long = "B", default_value_t = 1000)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the result JSON (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Force the covariance path: "disjoint" or "general" (default: follow
    /// the family's disjointness).
    #[arg(long)]
    force_path: Option<String>,
    /// Retry a singular contrasted covariance with a small ridge term
    /// instead of failing.
    #[arg(long, default_value_t = false)]
    ridge: bool,
    /// Smoothed (1+#)/(B+1) bootstrap p-values.
    #[arg(long, default_value_t = false)]
    smoothed_pvalues: bool,
}

#[derive(Args, Serialize, Clone)]
struct TreeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    roles: String,
    /// Minimal tau difference for a split to survive.
    #[arg(long, default_value_t = 0.4)]
    min_cut: f64,
    /// Minimal fraction of the sample per child box.
    #[arg(long, default_value_t = 0.05)]
    min_size: f64,
    /// Size-penalty weight in the split criterion.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 6)]
    max_depth: usize,
    /// Fraction of rows used to build the tree; the rest is the held-out
    /// test part. 1.0 builds on everything and skips the test.
    #[arg(long, default_value_t = 0.5)]
    split_fraction: f64,
    /// Methods for the held-out test (default: boot-inf-classical).
    #[arg(long = "method")]
    methods: Vec<String>,
    #[arg(long = "B", default_value_t = 1000)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes <out>.tree.json, <out>.tree.dot and
    /// <out>.test.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Clone)]
struct SimulateArgs {
    /// Scenario JSON config (see README for the schema).
    #[arg(long)]
    input: PathBuf,
    /// Output prefix; writes <out>.json and <out>.csv.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed when given.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario bootstrap replication count when given.
    #[arg(long = "B")]
    b: Option<usize>,
}

#[derive(Args, Serialize, Clone)]
struct VerifyArgs {
    /// Sample size per model.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    let result = match cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Tree(args) => cmd_tree(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::VerifyCounterexamples(args) => cmd_verify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code_for(&err);
            let payload = serde_json::json!({
                "error": {
                    "kind": error_kind(&err),
                    "message": err.to_string(),
                    "exit_code": code,
                }
            });
            eprintln!("{payload}");
            ExitCode::from(code)
        }
    }
}

fn init_threads(flag: Option<usize>) {
    let threads = flag.or_else(|| {
        std::env::var("BOXTAU_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .ok();
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::SingularMatrix { .. } | Error::NonFinite(_) => 3,
        Error::Coverage { .. } => 4,
        _ => 2,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Ingestion { .. } => "ingestion",
        Error::InvalidInput(_) => "invalid_input",
        Error::InsufficientSubsample { .. } => "insufficient_subsample",
        Error::DegenerateBox { .. } => "degenerate_box",
        Error::SingularMatrix { .. } => "singular_matrix",
        Error::NonFinite(_) => "non_finite",
        Error::Coverage { .. } => "coverage",
        Error::RedrawExhausted { .. } => "redraw_exhausted",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
    }
}

/// Every artifact carries the version, the master seed and a hash of the
/// resolved configuration, so a run is reproducible from its output alone.
#[derive(Serialize)]
struct Envelope<C: Serialize, R: Serialize> {
    version: &'static str,
    seed: u64,
    config_hash: String,
    config: C,
    #[serde(flatten)]
    body: R,
}

fn envelope<C: Serialize, R: Serialize>(seed: u64, config: C, body: R) -> Envelope<C, R> {
    let canonical = serde_json::to_string(&config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let config_hash: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Envelope {
        version: VERSION,
        seed,
        config_hash,
        config,
        body,
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> boxtau::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(())
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn parse_methods(raw: &[String], default: &[Method]) -> boxtau::Result<Vec<Method>> {
    if raw.is_empty() {
        return Ok(default.to_vec());
    }
    raw.iter().map(|s| s.parse()).collect()
}

fn load_input(input: &Path, roles: &str) -> boxtau::Result<Sample> {
    let roles = boxspec::parse_roles(roles)?;
    load_sample(input, &roles)
}

fn run_test_methods(
    sample: &Sample,
    family: &BoxFamily,
    methods: &[Method],
    b: usize,
    seed: u64,
    force_disjoint: Option<bool>,
    ridge: bool,
    smoothed: bool,
) -> boxtau::Result<Vec<TestResult>> {
    if family.m() < 2 {
        return Err(Error::invalid(format!(
            "tests need at least 2 boxes, got {}",
            family.m()
        )));
    }
    let mut seeder = stream_rng(seed, u64::MAX);
    let classical_seed: u64 = seeder.random();
    let conditional_seed: u64 = seeder.random();
    let mut results = Vec::new();
    let mut classical: Option<(TestResult, TestResult)> = None;
    let mut conditional: Option<(TestResult, TestResult)> = None;
    for method in methods {
        let result = match method {
            Method::Wald => {
                let tau = tau_matrix(sample, family)?;
                let disjoint = force_disjoint.unwrap_or(family.disjoint);
                let delta = delta_hat_with_path(sample, family, disjoint)?;
                let contrast = extended_contrast(family.m(), sample.conditioned_dim())?;
                let mut res = wald_statistic_opts(&tau, &delta, &contrast, ridge)?;
                res.seed = Some(seed);
                res
            }
            Method::BootInfClassical | Method::BootL2Classical => {
                if classical.is_none() {
                    let mut config = BootstrapConfig::new(Scheme::Classical, b, classical_seed);
                    config.smoothed_pvalue = smoothed;
                    let mut pair = bootstrap_test_pair(sample, family, &config)?;
                    pair.0.seed = Some(seed);
                    pair.1.seed = Some(seed);
                    classical = Some(pair);
                }
                let pair = classical.as_ref().unwrap();
                if *method == Method::BootInfClassical {
                    pair.0.clone()
                } else {
                    pair.1.clone()
                }
            }
            Method::BootInfConditional | Method::BootL2Conditional => {
                if conditional.is_none() {
                    let mut config = BootstrapConfig::new(Scheme::Conditional, b, conditional_seed);
                    config.smoothed_pvalue = smoothed;
                    let mut pair = bootstrap_test_pair(sample, family, &config)?;
                    pair.0.seed = Some(seed);
                    pair.1.seed = Some(seed);
                    conditional = Some(pair);
                }
                let pair = conditional.as_ref().unwrap();
                if *method == Method::BootInfConditional {
                    pair.0.clone()
                } else {
                    pair.1.clone()
                }
            }
        };
        results.push(result);
    }
    Ok(results)
}

#[derive(Serialize)]
struct TestBody {
    results: Vec<TestResult>,
}

fn cmd_test(args: TestArgs) -> boxtau::Result<()> {
    let sample = load_input(&args.input, &args.roles)?;
    let family = boxspec::parse_box_family(&std::fs::read_to_string(&args.boxes)?, &sample)?;
    let methods = parse_methods(&args.methods, &Method::ALL)?;
    let force_disjoint = match args.force_path.as_deref() {
        None => None,
        Some("disjoint") => Some(true),
        Some("general") => Some(false),
        Some(other) => {
            return Err(Error::invalid(format!(
                "--force-path must be 'disjoint' or 'general', got '{other}'"
            )))
        }
    };
    let results = run_test_methods(
        &sample,
        &family,
        &methods,
        args.b,
        args.seed,
        force_disjoint,
        args.ridge,
        args.smoothed_pvalues,
    )?;
    let out = envelope(args.seed, args.clone(), TestBody { results });
    write_or_print(
        args.out.as_deref(),
        &serde_json::to_string_pretty(&out)?,
    )
}

#[derive(Serialize)]
struct TreeBody {
    n_build: usize,
    n_test: usize,
    leaf_count: usize,
    depth: usize,
    binary_search_in_tau: bool,
    test_skipped: Option<String>,
}

fn cmd_tree(args: TreeArgs) -> boxtau::Result<()> {
    if !(0.0 < args.split_fraction && args.split_fraction <= 1.0) {
        return Err(Error::invalid("split fraction must be in (0, 1]"));
    }
    let sample = load_input(&args.input, &args.roles)?;
    let config = TreeConfig {
        min_cut: args.min_cut,
        min_size: args.min_size,
        alpha: args.alpha,
        max_depth: args.max_depth,
        ..TreeConfig::default()
    };
    let mut rng = stream_rng(args.seed, 0);
    let (build_idx, test_idx) =
        boxtau::simulation::split_indices(sample.n(), args.split_fraction, &mut rng);
    let build = sample.select_rows(&build_idx);
    let tree = cut_ckt(&build, &config)?;
    let leaves = tree.leaves();

    std::fs::write(format!("{}.tree.json", args.out.display()), tree.to_json())?;
    std::fs::write(format!("{}.tree.dot", args.out.display()), tree.to_dot())?;

    let mut test_skipped = None;
    if args.split_fraction >= 1.0 {
        test_skipped = Some("split fraction 1.0: tree built on all data, no held-out test".into());
    } else if leaves.m() < 2 {
        test_skipped = Some("single-leaf tree: nothing to test".into());
    } else if test_idx.len() < 2 {
        test_skipped = Some("held-out part too small".into());
    }

    let methods = parse_methods(&args.methods, &[Method::BootInfClassical])?;
    let results = if test_skipped.is_none() {
        let test_half = sample.select_rows(&test_idx);
        match run_test_methods(&test_half, &leaves, &methods, args.b, args.seed, None, false, false) {
            Ok(results) => results,
            Err(Error::InsufficientSubsample { box_index, count }) => {
                test_skipped = Some(format!(
                    "leaf {box_index:?} holds {count} held-out rows; test skipped"
                ));
                Vec::new()
            }
            Err(e) => return Err(e),
        }
    } else {
        Vec::new()
    };
    if let Some(reason) = &test_skipped {
        eprintln!("warning: {reason}");
    }

    let body = TreeBody {
        n_build: build.n(),
        n_test: test_idx.len(),
        leaf_count: leaves.m(),
        depth: tree.depth(),
        binary_search_in_tau: boxtau::is_binary_search_in_tau(&tree),
        test_skipped,
    };
    #[derive(Serialize)]
    struct TreeTestBody {
        #[serde(flatten)]
        tree: TreeBody,
        results: Vec<TestResult>,
    }
    let out = envelope(args.seed, args.clone(), TreeTestBody { tree: body, results });
    std::fs::write(
        format!("{}.test.json", args.out.display()),
        serde_json::to_string_pretty(&out)?,
    )?;
    Ok(())
}

#[derive(serde::Deserialize, Serialize, Clone)]
struct SimulateConfig {
    scenario: Scenario,
    #[serde(default)]
    methods: Vec<String>,
    #[serde(default)]
    sweep: Option<Sweep>,
}

#[derive(serde::Deserialize, Serialize, Clone)]
struct Sweep {
    param: String,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct SweepEntry {
    param: Option<String>,
    value: Option<f64>,
    report: MonteCarloReport,
}

#[derive(Serialize)]
struct SimulateBody {
    reports: Vec<SweepEntry>,
}

fn apply_sweep(base: &Scenario, param: &str, value: f64) -> boxtau::Result<Scenario> {
    let mut scenario = base.clone();
    match param {
        "n" => scenario.n = value as usize,
        "m" => match &mut scenario.kind {
            ScenarioKind::GaussLevel { m, .. }
            | ScenarioKind::GaussPower { m, .. }
            | ScenarioKind::ClaytonBreak { m, .. } => *m = value as usize,
            _ => return Err(Error::invalid("scenario has no box count to sweep")),
        },
        "lambda" => match &mut scenario.kind {
            ScenarioKind::ClaytonBreak { lambda, .. } => *lambda = value,
            _ => return Err(Error::invalid("only clayton_break sweeps lambda")),
        },
        other => return Err(Error::invalid(format!("unknown sweep parameter '{other}'"))),
    }
    Ok(scenario)
}

fn cmd_simulate(args: SimulateArgs) -> boxtau::Result<()> {
    let mut config: SimulateConfig =
        serde_json::from_str(&std::fs::read_to_string(&args.input)?)?;
    if let Some(seed) = args.seed {
        config.scenario.seed = seed;
    }
    if let Some(b) = args.b {
        config.scenario.b = b;
    }
    let methods = parse_methods(&config.methods, &Method::ALL)?;
    let runs: Vec<(Option<String>, Option<f64>, Scenario)> = match &config.sweep {
        None => vec![(None, None, config.scenario.clone())],
        Some(sweep) => sweep
            .values
            .iter()
            .map(|&v| {
                apply_sweep(&config.scenario, &sweep.param, v)
                    .map(|s| (Some(sweep.param.clone()), Some(v), s))
            })
            .collect::<boxtau::Result<Vec<_>>>()?,
    };
    let mut reports = Vec::new();
    for (param, value, scenario) in runs {
        let report = run_study(&scenario, &methods)?;
        reports.push(SweepEntry {
            param,
            value,
            report,
        });
    }

    // CSV table: methods as rows, sweep values as columns
    let mut csv = String::from("method");
    for entry in &reports {
        match (&entry.param, entry.value) {
            (Some(p), Some(v)) => csv.push_str(&format!(",{p}={v}")),
            _ => csv.push_str(",rate"),
        }
    }
    csv.push('\n');
    for (mi, method) in methods.iter().enumerate() {
        csv.push_str(method.name());
        for entry in &reports {
            csv.push_str(&format!(",{:.4}", entry.report.rejection_rates[mi]));
        }
        csv.push('\n');
    }
    std::fs::write(format!("{}.csv", args.out.display()), csv)?;

    let seed = config.scenario.seed;
    let out = envelope(seed, config, SimulateBody { reports });
    std::fs::write(
        format!("{}.json", args.out.display()),
        serde_json::to_string_pretty(&out)?,
    )?;
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> boxtau::Result<()> {
    let report = verify_counterexamples(args.n, args.seed)?;
    for claim in &report.claims {
        let tag = match claim.status {
            ClaimStatus::Pass => "PASS",
            ClaimStatus::Warn => "WARN",
            ClaimStatus::Fail => "FAIL",
        };
        println!(
            "{tag}  {}  (observed {:.4}, target {:.4}, tol {:.4})",
            claim.claim, claim.observed, claim.target, claim.tolerance
        );
    }
    let passed = report.claims.iter().filter(|c| c.status == ClaimStatus::Pass).count();
    println!("{passed}/{} claims passed (n = {})", report.claims.len(), report.n);
    if let Some(out) = &args.out {
        let body = envelope(args.seed, args.clone(), report);
        std::fs::write(out, serde_json::to_string_pretty(&body)?)?;
    }
    Ok(())
}
