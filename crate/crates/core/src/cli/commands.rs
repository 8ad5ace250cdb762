use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::table::{read_adjacency, read_table, write_matrix};
use crate::error::{Error, Result};
use crate::graphsel::{self, EdgePosterior};
use crate::model::{self, Hyperparams};
use crate::rng::RngStream;
use crate::sampler::{self, DrawReader, DrawWriter, GewekeDims, GewekeReport};
use crate::synthbench::{self, ResultsRow, Truth, TruthKind, TruthSpec};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub kind: TruthKind,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

/// Writes `data.csv` (n×d with a header) and `truth.csv` (the d×d true
/// precision, headerless). Truth and data use streams 0 and 1 of `seed`.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<Vec<PathBuf>> {
    if args.n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    let spec = TruthSpec::new(args.kind.clone(), args.d);
    let truth = synthbench::gen_truth(&spec, &mut RngStream::new(args.seed, 0))?;
    let data = synthbench::sample_data(&truth.omega, args.n, &mut RngStream::new(args.seed, 1))?;
    create_dir(&args.output_dir)?;
    let data_path = args.output_dir.join("data.csv");
    let truth_path = args.output_dir.join("truth.csv");
    let header: Vec<String> = (1..=args.d).map(|j| format!("x{j}")).collect();
    write_matrix(&data_path, &data, Some(&header))?;
    write_matrix(&truth_path, &truth.omega, None)?;
    Ok(vec![data_path, truth_path])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_seconds: f64,
    pub rank_seconds: f64,
    pub sampling_seconds: f64,
    pub total_seconds: f64,
}

/// Everything needed to rerun a fit exactly, plus what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub n: usize,
    pub d: usize,
    pub q: usize,
    /// `auto` or `override`.
    pub q_source: String,
    pub hyper: Hyperparams,
    pub seed: u64,
    pub retained: usize,
    pub sweeps: u64,
    pub factorizations: u64,
    pub timings: Timings,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub manifest: Manifest,
    pub posterior: EdgePosterior,
}

/// Runs rank selection and the sampler and writes, into the output directory:
/// `draws.bin` + `draws.json` (draw store), `posterior.json`,
/// `mean_precision.csv`, `mean_partial_corr.csv`, `config.json`,
/// `manifest.json`, and optionally `draws.csv`, `bands_lower.csv`,
/// `bands_upper.csv`.
pub fn cmd_fit(config: &RunConfig) -> Result<FitOutcome> {
    config.validate()?;
    let started = Instant::now();
    let table = read_table(&config.input)?;
    let mut y = table.values;
    let (n, d) = y.shape();
    if n < 2 {
        return Err(Error::Data(format!("need at least two observations, got {n}")));
    }
    if d < 2 {
        return Err(Error::Data(format!("need at least two variables, got {d}")));
    }
    if config.center {
        y = model::center_columns(&y);
    }
    let load_seconds = started.elapsed().as_secs_f64();

    let t = Instant::now();
    let (q, q_source) = match config.q {
        Some(q) => (q, "override"),
        None => (
            model::select_q(&y, config.rank_threshold, model::default_max_rank(n, d), config.rank_rule)?,
            "auto",
        ),
    };
    let rank_seconds = t.elapsed().as_secs_f64();
    let hyper = config.hyper.apply(q);
    hyper.validate(d)?;

    let out = &config.output_dir;
    create_dir(out)?;
    let mut files = Vec::new();
    let stem = out.join("draws");
    let mut writer = DrawWriter::create(&stem, d, q)?;
    let mut csv_draws = Vec::new();
    let grid = config.epsilon_grid.values()?;
    let t = Instant::now();
    let summary = sampler::run_chain_with(&y, &hyper, &config.chain, &grid, |_, draw| {
        writer.write(draw)?;
        if config.csv_draws {
            csv_draws.push(draw.clone());
        }
        Ok(())
    })?;
    let sampling_seconds = t.elapsed().as_secs_f64();
    writer.finish()?;
    files.extend(["draws.bin".to_string(), "draws.json".to_string()]);
    if config.csv_draws {
        sampler::write_draws_csv(out.join("draws.csv"), &csv_draws)?;
        files.push("draws.csv".into());
    }

    let post = summary.posterior;
    post.save(out.join("posterior.json"))?;
    write_matrix(out.join("mean_precision.csv"), &post.mean_precision(), None)?;
    write_matrix(out.join("mean_partial_corr.csv"), &post.mean_partial_correlation(), None)?;
    files.extend(["posterior.json", "mean_precision.csv", "mean_partial_corr.csv"].map(String::from));

    if let Some(level) = config.band_level {
        let draws = DrawReader::open(&stem)?.collect::<Result<Vec<_>>>()?;
        let bands = synthbench::credible_bands(&draws, level)?;
        write_matrix(out.join("bands_lower.csv"), &bands.lower, None)?;
        write_matrix(out.join("bands_upper.csv"), &bands.upper, None)?;
        files.extend(["bands_lower.csv", "bands_upper.csv"].map(String::from));
    }

    let config_path = out.join("config.json");
    std::fs::write(&config_path, config.canonical() + "\n").map_err(|e| Error::io(&config_path, e))?;
    files.extend(["config.json", "manifest.json"].map(String::from));
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        n,
        d,
        q,
        q_source: q_source.into(),
        hyper,
        seed: config.chain.seed,
        retained: summary.retained,
        sweeps: summary.sweeps,
        factorizations: summary.factorizations,
        timings: Timings {
            load_seconds,
            rank_seconds,
            sampling_seconds,
            total_seconds: started.elapsed().as_secs_f64(),
        },
        files,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(FitOutcome {
        manifest,
        posterior: post,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub beta: f64,
    pub epsilon_rule: graphsel::EpsilonRule,
    pub chosen_epsilon: f64,
    pub attained_fdr: f64,
    pub fdr_met: bool,
    pub n_edges: usize,
    pub n_draws: u64,
}

/// Writes `edges.csv`, `adjacency.csv`, `fdr_curve.csv` and
/// `selection.json`.
pub fn cmd_select_graph(
    posterior: &Path,
    beta: f64,
    rule: graphsel::EpsilonRule,
    output: Option<&Path>,
) -> Result<SelectionSummary> {
    let (file, dir) = if posterior.is_dir() {
        (posterior.join("posterior.json"), posterior.to_path_buf())
    } else {
        let parent = posterior.parent().map(Path::to_path_buf).unwrap_or_default();
        (posterior.to_path_buf(), parent)
    };
    let post = EdgePosterior::load(&file)?;
    let graph = graphsel::select_graph_with(&post, beta, rule)?;
    let out = output.map(Path::to_path_buf).unwrap_or(dir);
    create_dir(&out)?;
    graph.write_edge_list(out.join("edges.csv"))?;
    graph.write_adjacency(out.join("adjacency.csv"))?;
    graph.write_fdr_curve(out.join("fdr_curve.csv"))?;
    let summary = SelectionSummary {
        beta,
        epsilon_rule: rule,
        chosen_epsilon: graph.chosen_epsilon,
        attained_fdr: graph.attained_fdr,
        fdr_met: graph.fdr_met,
        n_edges: graph.n_edges(),
        n_draws: post.n_draws(),
    };
    write_json(&out.join("selection.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct MetricsArgs {
    pub truth: PathBuf,
    pub adjacency: PathBuf,
    pub partial_corr: PathBuf,
    pub edge_threshold: f64,
    pub results: Option<PathBuf>,
    pub kind: String,
    pub n: usize,
    pub rep: usize,
    pub selection: Option<PathBuf>,
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<synthbench::EvalReport> {
    let omega = read_table(&args.truth)?.values;
    let truth = Truth::from_precision(omega, args.edge_threshold)?;
    let adjacency = read_adjacency(&args.adjacency)?;
    let est_pc = read_table(&args.partial_corr)?.values;
    let mut report = synthbench::evaluate_parts(&adjacency, &est_pc, &truth.adjacency, &truth.partial_corr)?;
    report.replication = args.rep;
    if let Some(path) = &args.results {
        let (eps, fdr) = match &args.selection {
            Some(sel) => {
                let text = std::fs::read_to_string(sel).map_err(|e| Error::io(sel, e))?;
                let s: SelectionSummary = serde_json::from_str(&text)?;
                (s.chosen_epsilon, s.attained_fdr)
            }
            None => (f64::NAN, f64::NAN),
        };
        synthbench::append_results(
            path,
            &[ResultsRow {
                kind: args.kind.clone(),
                d: truth.omega.nrows(),
                n: args.n,
                rep: args.rep,
                frobenius: report.frobenius,
                sensitivity: report.sensitivity,
                specificity: report.specificity,
                runtime_seconds: report.runtime_seconds,
                chosen_epsilon: eps,
                attained_fdr: fdr,
            }],
        )?;
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct ValidateArgs {
    pub d: usize,
    pub q: usize,
    pub n: usize,
    pub rounds: usize,
    pub seed: u64,
    pub report: Option<PathBuf>,
}

/// Runs the Geweke test with default hyperparameters at rank `q`.
pub fn cmd_validate(args: &ValidateArgs) -> Result<GewekeReport> {
    if args.d > 4 || args.q > 2 || args.n > 10 {
        return Err(Error::Config(format!(
            "validation is meant for small problems (d <= 4, q <= 2, n <= 10), got d={}, q={}, n={}",
            args.d, args.q, args.n
        )));
    }
    let dims = GewekeDims {
        d: args.d,
        q: args.q,
        n: args.n,
    };
    let mut config = sampler::GewekeConfig::new(Hyperparams::with_rank(args.q), dims, args.rounds);
    config.seed = args.seed;
    let report = sampler::run_geweke(&config)?;
    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }
    Ok(report)
}
