//! `functau`: rank-based association tests between a scalar response and a
//! functional predictor, plus a simulation driver.
//!
//! Exit codes: 0 on success (whatever the test decides), 2 on bad input or
//! arguments, 3 when the numerics fail on valid input.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use functau::io::{read_dense, read_sparse, report_json, summary_line};
use functau::simgen::{power_study, Design, NormalScale, PowerResult, ScenarioConfig, StudyOptions};
use functau::{dense_test, sparse_test, Bandwidth, KChoice, SmootherConfig, TestOptions, TestReport};

#[derive(Parser)]
#[command(name = "functau", version, about = "Kendall-type association tests for functional predictors")]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test densely observed curves (wide CSV, first row = grid).
    TestDense {
        /// Curve file: first row grid times, then one curve per row.
        #[arg(long)]
        curves: PathBuf,
        /// Single-column responses aligned with the curve rows.
        #[arg(long)]
        responses: PathBuf,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Test sparse longitudinal data (long CSV `subject_id,time,value`).
    TestSparse {
        #[arg(long)]
        observations: PathBuf,
        /// Responses with header `subject_id,response`.
        #[arg(long)]
        responses: PathBuf,
        /// Output grid size for the reconstructed curves.
        #[arg(long, default_value_t = 51)]
        grid_size: usize,
        /// Number of components; cross-validated when omitted.
        #[arg(long)]
        k: Option<usize>,
        /// Time domain as `lo,hi`; defaults to the observed range.
        #[arg(long, value_parser = parse_domain)]
        domain: Option<(f64, f64)>,
        /// Mean smoother bandwidth on the unit scale, or `auto`.
        #[arg(long, default_value = "auto")]
        mean_bandwidth: Bandwidth,
        /// Covariance smoother bandwidth on the unit scale, or `auto`.
        #[arg(long, default_value = "auto")]
        cov_bandwidth: Bandwidth,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Power study over simulated designs; one CSV row per scenario.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct TestArgs {
    /// Fraction of variance the retained eigenvalues must explain.
    #[arg(long, default_value_t = 0.95)]
    fve: f64,
    /// Monte Carlo draws from the null mixture.
    #[arg(long, default_value_t = 100_000)]
    mc_draws: usize,
    /// Seed for every random step; drawn from entropy when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Level for a critical value and reject decision.
    #[arg(long)]
    alpha: Option<f64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML file with defaults and `[[scenario]]` tables.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    design: Option<Design>,
    #[arg(long)]
    case: Option<u8>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// How the second argument of N(0, v) is read: `sd` or `variance`.
    #[arg(long)]
    normal_scale: Option<NormalScale>,
    #[arg(long)]
    fve: Option<f64>,
    #[arg(long)]
    mc_draws: Option<usize>,
    /// Fixed number of components for the sparse designs.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    grid_size: Option<usize>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_domain(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound {lo:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound {hi:?}"))?;
    Ok((lo, hi))
}

enum Failure {
    Input(String),
    Numerical(String),
}

impl From<functau::Error> for Failure {
    fn from(e: functau::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn write_report(report: &TestReport, out: Option<&Path>) -> Result<(), Failure> {
    let mut w = output(out)?;
    let io_err = |e: io::Error| Failure::Input(format!("writing report: {e}"));
    writeln!(w, "{}", report_json(report)).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    // keep stdout machine-readable when it carries the JSON
    if out.is_some() {
        println!("{}", summary_line(report));
    } else {
        eprintln!("{}", summary_line(report));
    }
    Ok(())
}

impl TestArgs {
    fn options(&self) -> TestOptions {
        TestOptions {
            fve: self.fve,
            mc_draws: self.mc_draws,
            seed: self.seed.unwrap_or_else(rand::random),
            alpha: self.alpha,
        }
    }
}

/// Simulation settings as they appear in a scenario file; every field is
/// optional so a table can inherit from the top-level defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSpec {
    design: Option<String>,
    case: Option<u8>,
    n: Option<usize>,
    p: Option<usize>,
    delta: Option<f64>,
    replicates: Option<usize>,
    alpha: Option<f64>,
    seed: Option<u64>,
    normal_scale: Option<String>,
    fve: Option<f64>,
    mc_draws: Option<usize>,
    k: Option<usize>,
    grid_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(flatten)]
    defaults: ScenarioSpec,
    #[serde(default)]
    scenario: Vec<ScenarioSpec>,
}

impl ScenarioSpec {
    /// Fields set in `self` win over `base`.
    fn over(self, base: &ScenarioSpec) -> ScenarioSpec {
        let b = base.clone();
        ScenarioSpec {
            design: self.design.or(b.design),
            case: self.case.or(b.case),
            n: self.n.or(b.n),
            p: self.p.or(b.p),
            delta: self.delta.or(b.delta),
            replicates: self.replicates.or(b.replicates),
            alpha: self.alpha.or(b.alpha),
            seed: self.seed.or(b.seed),
            normal_scale: self.normal_scale.or(b.normal_scale),
            fve: self.fve.or(b.fve),
            mc_draws: self.mc_draws.or(b.mc_draws),
            k: self.k.or(b.k),
            grid_size: self.grid_size.or(b.grid_size),
        }
    }

    fn resolve(&self, entropy_seed: u64) -> Result<(ScenarioConfig, StudyOptions), Failure> {
        let missing = |what: &str| Failure::Input(format!("scenario is missing `{what}`"));
        let design: Design = self.design.as_deref().ok_or_else(|| missing("design"))?.parse()?;
        let mut cfg = ScenarioConfig::new(
            design,
            self.case.ok_or_else(|| missing("case"))?,
            self.n.ok_or_else(|| missing("n"))?,
            self.delta.ok_or_else(|| missing("delta"))?,
        );
        cfg.p = self.p.unwrap_or(cfg.p);
        cfg.replicates = self.replicates.unwrap_or(cfg.replicates);
        cfg.alpha = self.alpha.unwrap_or(cfg.alpha);
        cfg.seed = self.seed.unwrap_or(entropy_seed);
        if let Some(scale) = &self.normal_scale {
            cfg.normal_scale = scale.parse()?;
        }
        cfg.validate()?;

        let mut opts = StudyOptions::default();
        opts.fve = self.fve.unwrap_or(opts.fve);
        opts.mc_draws = self.mc_draws.unwrap_or(opts.mc_draws);
        opts.k = self.k;
        if let Some(g) = self.grid_size {
            opts.smoother.output_grid_size = g;
        }
        opts.smoother.validate()?;
        Ok((cfg, opts))
    }
}

impl SimulateArgs {
    fn inline(&self) -> ScenarioSpec {
        ScenarioSpec {
            design: self.design.map(|d| d.to_string()),
            case: self.case,
            n: self.n,
            p: self.p,
            delta: self.delta,
            replicates: self.reps,
            alpha: self.alpha,
            seed: self.seed,
            normal_scale: self.normal_scale.map(|s| s.to_string()),
            fve: self.fve,
            mc_draws: self.mc_draws,
            k: self.k,
            grid_size: self.grid_size,
        }
    }

    /// Scenarios from the file (if any) with command-line flags on top.
    fn scenarios(&self) -> Result<Vec<ScenarioSpec>, Failure> {
        let inline = self.inline();
        let Some(path) = &self.scenario else {
            return Ok(vec![inline]);
        };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        let file: ScenarioFile =
            toml::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        let defaults = inline.clone().over(&file.defaults);
        if file.scenario.is_empty() {
            return Ok(vec![defaults]);
        }
        Ok(file.scenario.into_iter().map(|s| inline.clone().over(&s.over(&defaults))).collect())
    }
}

const CSV_HEADER: &str =
    "design,case,n,p,delta,replicates,failed,alpha,seed,normal_scale,rejection_rate,se,runtime_secs";

fn csv_row(cfg: &ScenarioConfig, res: &PowerResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{:.3}",
        cfg.design,
        cfg.case,
        cfg.n,
        cfg.p,
        cfg.delta,
        cfg.replicates,
        res.failed,
        cfg.alpha,
        cfg.seed,
        cfg.normal_scale,
        res.rejection_rate,
        res.se,
        res.runtime_secs
    )
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let entropy_seed: u64 = rand::random();
    let resolved = args.scenarios()?.iter().map(|s| s.resolve(entropy_seed)).collect::<Result<Vec<_>, Failure>>()?;
    let mut w = output(args.out.as_deref())?;
    let io_err = |e: io::Error| Failure::Input(format!("writing results: {e}"));
    writeln!(w, "{CSV_HEADER}").map_err(io_err)?;
    for (cfg, opts) in &resolved {
        let res = power_study(cfg, opts)?;
        writeln!(w, "{}", csv_row(cfg, &res)).map_err(io_err)?;
        w.flush().map_err(io_err)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Input(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::TestDense { curves, responses, test } => {
            let sample = read_dense(open(&curves)?, open(&responses)?)?;
            let report = dense_test(&sample, &test.options())?;
            write_report(&report, test.out.as_deref())
        }
        Command::TestSparse { observations, responses, grid_size, k, domain, mean_bandwidth, cov_bandwidth, test } => {
            let sample = read_sparse(open(&observations)?, open(&responses)?, domain)?;
            let opts = test.options();
            let cfg = SmootherConfig {
                mean_bandwidth,
                cov_bandwidth,
                output_grid_size: grid_size,
                seed: opts.seed,
                ..Default::default()
            };
            cfg.validate()?;
            let k = match k {
                Some(k) => KChoice::Fixed(k),
                None => KChoice::CrossValidated(cfg.default_k_candidates()),
            };
            let report = sparse_test(&sample, &cfg, &k, &opts)?;
            write_report(&report, test.out.as_deref())
        }
        Command::Simulate(args) => simulate(&args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
