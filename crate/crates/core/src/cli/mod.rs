//! Command-line front end.
//!
//! | command        | reads                                  | writes |
//! |----------------|----------------------------------------|--------|
//! | `simulate`     | truth kind, d, n, seed                 | `data.csv`, `truth.csv` |
//! | `fit`          | data CSV, optional JSON config         | draw store, `posterior.json`, mean CSVs, `manifest.json` |
//! | `select-graph` | `posterior.json`                       | `edges.csv`, `adjacency.csv`, `fdr_curve.csv`, `selection.json` |
//! | `metrics`      | truth precision, adjacency, partial correlations | report line, optional results CSV row |
//! | `validate`     | d, q, n, rounds                        | z-score table, optional JSON |
//!
//! Matrix CSVs are headerless; `data.csv` carries a `x1,...,xd` header.
//! Exit codes: 0 success, 2 configuration, 3 data or I/O, 4 numerical
//! failure, 5 failed validation.

mod commands;
mod config;
mod table;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_fit, cmd_metrics, cmd_select_graph, cmd_simulate, cmd_validate, FitOutcome, Manifest, MetricsArgs,
    SelectionSummary, SimulateArgs, ValidateArgs,
};
pub use config::{GridSpec, HyperOverrides, RunConfig};
pub use table::{parse_table, read_adjacency, read_table, write_matrix, Table};

use crate::error::Error;
use crate::model::RankRule;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;
pub const EXIT_VALIDATION: u8 = 5;

pub fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config(_) => EXIT_CONFIG,
        Error::Data(_) | Error::Parse { .. } | Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::Dimension(_) => {
            EXIT_DATA
        }
        Error::Domain(_) | Error::Singular { .. } | Error::StateCorruption(_) => EXIT_NUMERICAL,
        Error::AtIteration { .. } => unreachable!("root strips iteration context"),
    }
}

#[derive(Debug, Parser)]
#[command(name = "precfactor", version, about = "Sparse precision matrix estimation and graph selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic truth and a data set drawn from it.
    Simulate(SimulateCli),
    /// Run the Gibbs sampler on a data CSV.
    Fit(FitCli),
    /// Select edges from a fitted posterior with posterior FDR control.
    SelectGraph(SelectCli),
    /// Score an estimated graph against a truth.
    Metrics(MetricsCli),
    /// Joint-distribution check of the sampler.
    Validate(ValidateCli),
}

#[derive(Debug, Args)]
pub struct SimulateCli {
    /// ar2, banded or rsm.
    #[arg(long, default_value = "banded")]
    pub kind: String,
    #[arg(long, default_value_t = 50)]
    pub d: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitCli {
    /// JSON run configuration; flags given here override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Fixed number of factors instead of choosing it from the data.
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Fit the data as given, without centering columns.
    #[arg(long)]
    pub no_center: bool,
    #[arg(long)]
    pub rank_threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub rank_rule: Option<RankRuleArg>,
    #[arg(long)]
    pub eps_lo: Option<f64>,
    #[arg(long)]
    pub eps_hi: Option<f64>,
    #[arg(long)]
    pub eps_points: Option<usize>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub a_delta: Option<f64>,
    #[arg(long)]
    pub b_delta: Option<f64>,
    #[arg(long)]
    pub a_alpha: Option<f64>,
    #[arg(long)]
    pub b_alpha: Option<f64>,
    /// Also write the retained draws as CSV.
    #[arg(long)]
    pub csv_draws: bool,
    /// Write entrywise credible bands of the partial correlations.
    #[arg(long)]
    pub bands: Option<f64>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum RankRuleArg {
    InverseSingular,
    Singular,
}

impl From<RankRuleArg> for RankRule {
    fn from(r: RankRuleArg) -> Self {
        match r {
            RankRuleArg::InverseSingular => RankRule::InverseSingular,
            RankRuleArg::Singular => RankRule::Singular,
        }
    }
}

impl FitCli {
    /// Config file (if any) with command-line values laid over it.
    pub fn resolve(&self) -> crate::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.input {
            c.input = p.clone();
        }
        if let Some(p) = &self.output {
            c.output_dir = p.clone();
        }
        if self.q.is_some() {
            c.q = self.q;
        }
        set(&mut c.chain.iterations, self.iterations);
        set(&mut c.chain.burn_in, self.burn_in);
        set(&mut c.chain.thin, self.thin);
        set(&mut c.chain.seed, self.seed);
        set(&mut c.chain.n_chains, self.chains);
        set(&mut c.beta, self.beta);
        if self.no_center {
            c.center = false;
        }
        set(&mut c.rank_threshold, self.rank_threshold);
        set(&mut c.rank_rule, self.rank_rule.map(Into::into));
        set(&mut c.epsilon_grid.lo, self.eps_lo);
        set(&mut c.epsilon_grid.hi, self.eps_hi);
        set(&mut c.epsilon_grid.points, self.eps_points);
        let h = &mut c.hyper;
        for (slot, v) in [
            (&mut h.a, self.a),
            (&mut h.b, self.b),
            (&mut h.a_delta, self.a_delta),
            (&mut h.b_delta, self.b_delta),
            (&mut h.a_alpha, self.a_alpha),
            (&mut h.b_alpha, self.b_alpha),
        ] {
            if v.is_some() {
                *slot = v;
            }
        }
        if self.csv_draws {
            c.csv_draws = true;
        }
        if self.bands.is_some() {
            c.band_level = self.bands;
        }
        c.validate()?;
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum EpsilonRuleArg {
    MinimumFdr,
    SmallestQualifying,
}

impl From<EpsilonRuleArg> for crate::graphsel::EpsilonRule {
    fn from(r: EpsilonRuleArg) -> Self {
        match r {
            EpsilonRuleArg::MinimumFdr => Self::MinimumFdr,
            EpsilonRuleArg::SmallestQualifying => Self::SmallestQualifying,
        }
    }
}

#[derive(Debug, Args)]
pub struct SelectCli {
    /// A `fit` output directory or a `posterior.json` file.
    #[arg(long, short)]
    pub posterior: PathBuf,
    #[arg(long, default_value_t = crate::graphsel::DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, value_enum, default_value = "minimum-fdr")]
    pub epsilon_rule: EpsilonRuleArg,
    /// Defaults to the directory holding the posterior.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsCli {
    /// True precision matrix (headerless CSV).
    #[arg(long)]
    pub truth: PathBuf,
    /// Estimated 0/1 adjacency matrix.
    #[arg(long)]
    pub adjacency: PathBuf,
    /// Estimated partial correlations, conventional sign.
    #[arg(long)]
    pub partial_corr: PathBuf,
    /// Pairs with |partial correlation| above this are true edges.
    #[arg(long, default_value_t = crate::synthbench::DEFAULT_EDGE_THRESHOLD)]
    pub edge_threshold: f64,
    /// Append a row to this results CSV.
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long, default_value = "custom")]
    pub kind: String,
    #[arg(long, default_value_t = 0)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub rep: usize,
    /// `selection.json` from select-graph, for the ε and FDR columns.
    #[arg(long)]
    pub selection: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateCli {
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub q: usize,
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[arg(long, default_value_t = 100_000)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest acceptable |z|.
    #[arg(long, default_value_t = 4.0)]
    pub threshold: f64,
    /// Write the report as JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(command: Command) -> crate::Result<u8> {
    match command {
        Command::Simulate(a) => {
            let files = cmd_simulate(&SimulateArgs {
                kind: crate::synthbench::TruthKind::from_label(&a.kind)?,
                d: a.d,
                n: a.n,
                seed: a.seed,
                output_dir: a.output,
            })?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(0)
        }
        Command::Fit(a) => {
            let config = a.resolve()?;
            let out = cmd_fit(&config)?;
            println!(
                "q = {} ({}), {} retained draws, {:.1}s; results in {}",
                out.manifest.q,
                out.manifest.q_source,
                out.manifest.retained,
                out.manifest.timings.total_seconds,
                config.output_dir.display()
            );
            Ok(0)
        }
        Command::SelectGraph(a) => {
            let s = cmd_select_graph(&a.posterior, a.beta, a.epsilon_rule.into(), a.output.as_deref())?;
            println!(
                "chosen epsilon = {}, attained FDR = {:.4}, {} edges",
                s.chosen_epsilon, s.attained_fdr, s.n_edges
            );
            if !s.fdr_met {
                eprintln!("warning: no epsilon on the grid reaches FDR <= {:.3}; used the largest", 1.0 - s.beta);
            }
            Ok(0)
        }
        Command::Metrics(a) => {
            let report = cmd_metrics(&MetricsArgs {
                truth: a.truth,
                adjacency: a.adjacency,
                partial_corr: a.partial_corr,
                edge_threshold: a.edge_threshold,
                results: a.results,
                kind: a.kind,
                n: a.n,
                rep: a.rep,
                selection: a.selection,
            })?;
            println!(
                "frobenius={:.6} sensitivity={:.4} specificity={:.4} tp={} fp={} tn={} fn={}",
                report.frobenius,
                report.sensitivity,
                report.specificity,
                report.confusion.tp,
                report.confusion.fp,
                report.confusion.tn,
                report.confusion.fn_
            );
            Ok(0)
        }
        Command::Validate(a) => {
            let report = cmd_validate(&ValidateArgs {
                d: a.d,
                q: a.q,
                n: a.n,
                rounds: a.rounds,
                seed: a.seed,
                report: a.report,
            })?;
            println!("{:<16} {:>12} {:>12} {:>8}", "statistic", "marginal", "successive", "z");
            for s in &report.stats {
                println!("{:<16} {:>12.5} {:>12.5} {:>8.2}", s.name, s.mean_marginal, s.mean_successive, s.z);
            }
            if let Some((round, err)) = &report.diverged {
                println!("successive chain failed at round {round}: {err}");
            }
            let ok = report.passed(a.threshold);
            println!("{} (max |z| = {:.2}, threshold {})", if ok { "PASS" } else { "FAIL" }, report.max_abs_z(), a.threshold);
            Ok(if ok { 0 } else { EXIT_VALIDATION })
        }
    }
}
