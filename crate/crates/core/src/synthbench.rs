//! Synthetic truths, data generation and the evaluation metrics of the
//! simulation study.

use std::fs::OpenOptions;
use std::path::Path;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphsel::{self, GraphEstimate};
use crate::model::{self, Hyperparams, RankRule};
use crate::rng::RngStream;
use crate::rvgen;
use crate::sampler::{self, ChainConfig, Draw};

/// Pairs with `|partial correlation|` above this are true edges.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TruthKind {
    /// Stationary Gaussian AR(2) with unit innovations, parametrized by its
    /// two partial autocorrelations.
    Ar2 { pacf: [f64; 2] },
    /// `bands[0]` on the diagonal, `bands[k]` on the k-th off-diagonals.
    Banded { bands: Vec<f64> },
    /// Random sparse graph built from one loading column per edge.
    Rsm {
        /// Edge probability; `None` gives 2 expected edges per node.
        edge_prob: Option<f64>,
        /// Loading magnitudes are drawn from `U(lo, hi)` with a random sign.
        magnitude: [f64; 2],
    },
}

impl TruthKind {
    pub fn ar2() -> Self {
        TruthKind::Ar2 { pacf: [0.5, -0.3] }
    }

    pub fn banded() -> Self {
        TruthKind::Banded { bands: vec![1.0, 0.45] }
    }

    pub fn rsm() -> Self {
        TruthKind::Rsm {
            edge_prob: None,
            magnitude: [0.6, 1.0],
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TruthKind::Ar2 { .. } => "ar2",
            TruthKind::Banded { .. } => "banded",
            TruthKind::Rsm { .. } => "rsm",
        }
    }

    /// Default parameters for `ar2`, `banded` or `rsm`.
    pub fn from_label(label: &str) -> Result<Self> {
        match label.to_ascii_lowercase().as_str() {
            "ar2" => Ok(Self::ar2()),
            "banded" => Ok(Self::banded()),
            "rsm" => Ok(Self::rsm()),
            other => Err(Error::Config(format!("unknown truth kind `{other}` (ar2, banded, rsm)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    #[serde(flatten)]
    pub kind: TruthKind,
    pub d: usize,
    #[serde(default = "default_threshold")]
    pub edge_threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_EDGE_THRESHOLD
}

impl TruthSpec {
    pub fn new(kind: TruthKind, d: usize) -> Self {
        Self {
            kind,
            d,
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub omega: DMatrix<f64>,
    pub adjacency: DMatrix<bool>,
    /// Conventional-sign partial correlations.
    pub partial_corr: DMatrix<f64>,
}

impl Truth {
    /// Builds the truth from a precision matrix, declaring edges where
    /// `|ρ| > threshold`.
    pub fn from_precision(omega: DMatrix<f64>, threshold: f64) -> Result<Self> {
        check_spd(&omega)?;
        let partial_corr = model::standard_partial_correlation(&omega)?;
        let d = omega.nrows();
        let adjacency = DMatrix::from_fn(d, d, |i, j| i != j && partial_corr[(i, j)].abs() > threshold);
        Ok(Self {
            omega,
            adjacency,
            partial_corr,
        })
    }

    pub fn n_edges(&self) -> usize {
        upper_pairs(self.omega.nrows()).filter(|&(i, j)| self.adjacency[(i, j)]).count()
    }
}

fn upper_pairs(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |i| ((i + 1)..d).map(move |j| (i, j)))
}

fn check_spd(omega: &DMatrix<f64>) -> Result<()> {
    if !omega.is_square() {
        return Err(Error::Dimension(format!("precision is {}×{}", omega.nrows(), omega.ncols())));
    }
    let asym = (omega - omega.transpose()).amax();
    if asym > 1e-10 * omega.amax().max(1.0) {
        return Err(Error::Domain(format!("precision is not symmetric (max gap {asym:e})")));
    }
    if Cholesky::new(omega.clone()).is_none() {
        return Err(Error::Domain("precision is not positive definite".into()));
    }
    Ok(())
}

/// AR coefficients from partial autocorrelations (Durbin–Levinson).
pub fn ar2_coefficients(pacf: [f64; 2]) -> Result<[f64; 2]> {
    if pacf.iter().any(|p| !(p.abs() < 1.0)) {
        return Err(Error::Domain(format!("partial autocorrelations {pacf:?} must lie in (-1, 1)")));
    }
    Ok([pacf[0] * (1.0 - pacf[1]), pacf[1]])
}

/// Exact precision of `d` consecutive values of a stationary AR(2) with
/// unit innovation variance.
pub fn ar2_precision(d: usize, phi: [f64; 2]) -> Result<DMatrix<f64>> {
    let [p1, p2] = phi;
    let denom = (1.0 + p2) * ((1.0 - p2).powi(2) - p1 * p1);
    if !(denom > 0.0 && p2.abs() < 1.0) {
        return Err(Error::Domain(format!("AR(2) coefficients {phi:?} are not stationary")));
    }
    let g0 = (1.0 - p2) / denom;
    let g1 = p1 * g0 / (1.0 - p2);
    let start = d.min(2);
    let gamma = DMatrix::from_fn(start, start, |i, j| if i == j { g0 } else { g1 });
    let inv = gamma
        .try_inverse()
        .ok_or(Error::Singular { what: "AR(2) start block" })?;
    let mut omega = DMatrix::zeros(d, d);
    omega.view_mut((0, 0), (start, start)).copy_from(&inv);
    for t in 2..d {
        let a = [(t, 1.0), (t - 1, -p1), (t - 2, -p2)];
        for &(i, ai) in &a {
            for &(j, aj) in &a {
                omega[(i, j)] += ai * aj;
            }
        }
    }
    Ok(omega)
}

pub fn banded_precision(d: usize, bands: &[f64]) -> Result<DMatrix<f64>> {
    if bands.is_empty() {
        return Err(Error::Config("banded truth needs at least the diagonal value".into()));
    }
    let omega = DMatrix::from_fn(d, d, |i, j| bands.get(i.abs_diff(j)).copied().unwrap_or(0.0));
    if Cholesky::new(omega.clone()).is_none() {
        return Err(Error::Domain(format!("bands {bands:?} do not give a positive definite matrix at d = {d}")));
    }
    Ok(omega)
}

/// `Ω = ΛΛᵀ + I` with one loading column per edge of an Erdős–Rényi graph.
pub fn rsm_precision(d: usize, edge_prob: f64, magnitude: [f64; 2], rng: &mut RngStream) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::Config(format!("edge probability {edge_prob} outside [0, 1]")));
    }
    let [lo, hi] = magnitude;
    if !(0.0 < lo && lo <= hi && hi.is_finite()) {
        return Err(Error::Config(format!("loading magnitudes {magnitude:?} must satisfy 0 < lo <= hi")));
    }
    let mut omega = DMatrix::identity(d, d);
    for (i, j) in upper_pairs(d) {
        if rng.open01() >= edge_prob {
            continue;
        }
        let mut draw = || {
            let m = lo + (hi - lo) * rng.open01();
            if rng.open01() < 0.5 {
                -m
            } else {
                m
            }
        };
        let (li, lj) = (draw(), draw());
        omega[(i, i)] += li * li;
        omega[(j, j)] += lj * lj;
        omega[(i, j)] += li * lj;
        omega[(j, i)] += li * lj;
    }
    Ok(omega)
}

/// Generates the true precision and its edge set.
pub fn gen_truth(spec: &TruthSpec, rng: &mut RngStream) -> Result<Truth> {
    let d = spec.d;
    if d < 2 {
        return Err(Error::Config(format!("truth dimension must be at least 2, got {d}")));
    }
    let omega = match &spec.kind {
        TruthKind::Ar2 { pacf } => ar2_precision(d, ar2_coefficients(*pacf)?)?,
        TruthKind::Banded { bands } => banded_precision(d, bands)?,
        TruthKind::Rsm { edge_prob, magnitude } => {
            let p = edge_prob.unwrap_or(2.0 / (d - 1) as f64).min(1.0);
            rsm_precision(d, p, *magnitude, rng)?
        }
    };
    Truth::from_precision(omega, spec.edge_threshold)
}

/// `n` iid rows from `N_d(0, Ω⁻¹)`: with `Ω = LLᵀ`, each row solves `Lᵀy = z`.
pub fn sample_data(omega: &DMatrix<f64>, n: usize, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let d = omega.nrows();
    let chol = Cholesky::new(omega.clone()).ok_or_else(|| Error::Domain("precision is not positive definite".into()))?;
    let lt = chol.l().transpose();
    let z = DMatrix::from_fn(d, n, |_, _| rvgen::std_normal(rng));
    let y = lt
        .solve_upper_triangular(&z)
        .ok_or(Error::Singular { what: "precision factor" })?;
    Ok(y.transpose())
}

/// `n` iid rows from `N_d(0, Ω⁻¹)` for `Ω = ΛΛᵀ + diag(δ²)`, without forming Ω.
///
/// With `B = Δ^{-1/2}Λ = U S Wᵀ`, `(I + BBᵀ)^{-1/2} = I + U diag((1 + s²)^{-1/2} - 1) Uᵀ`,
/// so each row is `Δ^{-1/2}` times that matrix applied to a standard normal
/// vector. This stays accurate when δ² and ΛΛᵀ differ by many orders of
/// magnitude.
pub fn sample_lrd_data(lambda: &DMatrix<f64>, delta: &[f64], n: usize, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let (d, q) = lambda.shape();
    if delta.len() != d {
        return Err(Error::Dimension(format!("Λ has {d} rows but δ² has {}", delta.len())));
    }
    if let Some(bad) = delta.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::Domain(format!("residual precision must be positive, got {bad}")));
    }
    let inv_sd: Vec<f64> = delta.iter().map(|x| 1.0 / x.sqrt()).collect();
    let mut b = lambda.clone();
    for (i, s) in inv_sd.iter().enumerate() {
        let mut row = b.row_mut(i);
        row *= *s;
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("scaled loadings overflow".into()));
    }
    let svd = b.svd(true, false);
    let u = svd.u.ok_or(Error::Singular { what: "scaled loadings" })?;
    let shrink: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| 1.0 / (1.0 + s * s).sqrt() - 1.0)
        .collect();
    let mut z = DMatrix::from_fn(d, n, |_, _| rvgen::std_normal(rng));
    let mut coef = u.transpose() * &z;
    for (h, c) in shrink.iter().enumerate().take(q.min(d)) {
        let mut row = coef.row_mut(h);
        row *= *c;
    }
    z += &u * coef;
    for (i, s) in inv_sd.iter().enumerate() {
        let mut row = z.row_mut(i);
        row *= *s;
    }
    Ok(z.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Over unordered off-diagonal pairs; only the upper triangles are read.
    pub fn count(estimate: &DMatrix<bool>, truth: &DMatrix<bool>) -> Result<Self> {
        if estimate.shape() != truth.shape() || !truth.is_square() {
            return Err(Error::Dimension(format!(
                "estimated graph {:?} vs true graph {:?}",
                estimate.shape(),
                truth.shape()
            )));
        }
        let mut c = Confusion {
            tp: 0,
            fp: 0,
            tn: 0,
            fn_: 0,
        };
        for (i, j) in upper_pairs(truth.nrows()) {
            match (estimate[(i, j)] || estimate[(j, i)], truth[(i, j)] || truth[(j, i)]) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    /// `TP / (TP + FN)`; 1 when the truth has no edges.
    pub fn sensitivity(&self) -> f64 {
        ratio_or_one(self.tp, self.tp + self.fn_)
    }

    /// `TN / (TN + FP)`; 1 when the truth is complete.
    pub fn specificity(&self) -> f64 {
        ratio_or_one(self.tn, self.tn + self.fp)
    }

    /// `FP / (TP + FP)`; 0 for an empty estimate.
    pub fn false_discovery_proportion(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.fp as f64 / (self.tp + self.fp) as f64
        }
    }
}

fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub replication: usize,
    /// Frobenius distance between true and estimated partial correlations.
    pub frobenius: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub confusion: Confusion,
    pub runtime_seconds: f64,
}

/// Scores an estimated graph and partial-correlation matrix against truth.
pub fn evaluate_parts(
    est_adjacency: &DMatrix<bool>,
    est_partial_corr: &DMatrix<f64>,
    truth_adjacency: &DMatrix<bool>,
    truth_partial_corr: &DMatrix<f64>,
) -> Result<EvalReport> {
    if est_partial_corr.shape() != truth_partial_corr.shape() {
        return Err(Error::Dimension(format!(
            "estimated partial correlations {:?} vs truth {:?}",
            est_partial_corr.shape(),
            truth_partial_corr.shape()
        )));
    }
    let confusion = Confusion::count(est_adjacency, truth_adjacency)?;
    Ok(EvalReport {
        replication: 0,
        frobenius: (est_partial_corr - truth_partial_corr).norm(),
        sensitivity: confusion.sensitivity(),
        specificity: confusion.specificity(),
        confusion,
        runtime_seconds: 0.0,
    })
}

pub fn evaluate(est: &GraphEstimate, est_partial_corr: &DMatrix<f64>, truth: &Truth) -> Result<EvalReport> {
    evaluate_parts(&est.adjacency, est_partial_corr, &truth.adjacency, &truth.partial_corr)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CredibleBands {
    pub level: f64,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
}

impl CredibleBands {
    /// Share of off-diagonal unordered pairs whose true value lies inside
    /// the band.
    pub fn coverage(&self, truth: &DMatrix<f64>) -> Result<f64> {
        if truth.shape() != self.lower.shape() {
            return Err(Error::Dimension("band and truth dimensions differ".into()));
        }
        let d = truth.nrows();
        let (mut inside, mut total) = (0usize, 0usize);
        for (i, j) in upper_pairs(d) {
            total += 1;
            let t = truth[(i, j)];
            if self.lower[(i, j)] <= t && t <= self.upper[(i, j)] {
                inside += 1;
            }
        }
        Ok(ratio_or_one(inside, total))
    }
}

pub const MIN_BAND_DRAWS: usize = 20;

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Entrywise central `level` bands over a set of equally shaped matrices.
pub fn entrywise_bands(samples: &[DMatrix<f64>], level: f64) -> Result<CredibleBands> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("band level {level} outside (0, 1)")));
    }
    if samples.len() < MIN_BAND_DRAWS {
        return Err(Error::Config(format!(
            "credible bands need at least {MIN_BAND_DRAWS} draws, got {}",
            samples.len()
        )));
    }
    let (r, c) = samples[0].shape();
    if samples.iter().any(|m| m.shape() != (r, c)) {
        return Err(Error::Dimension("band samples differ in shape".into()));
    }
    let tail = (1.0 - level) / 2.0;
    let mut lower = DMatrix::zeros(r, c);
    let mut upper = DMatrix::zeros(r, c);
    let mut buf = vec![0.0; samples.len()];
    for j in 0..c {
        for i in 0..r {
            for (slot, m) in buf.iter_mut().zip(samples) {
                *slot = m[(i, j)];
            }
            buf.sort_by(f64::total_cmp);
            lower[(i, j)] = quantile_sorted(&buf, tail);
            upper[(i, j)] = quantile_sorted(&buf, 1.0 - tail);
        }
    }
    Ok(CredibleBands { level, lower, upper })
}

/// Entrywise bands for the conventional-sign partial correlations.
pub fn credible_bands(draws: &[Draw], level: f64) -> Result<CredibleBands> {
    if draws.len() < MIN_BAND_DRAWS {
        return Err(Error::Config(format!(
            "credible bands need at least {MIN_BAND_DRAWS} draws, got {}",
            draws.len()
        )));
    }
    let samples = draws
        .iter()
        .map(|dr| {
            let state = model::ModelState::from_parts(dr.lambda.clone(), dr.delta.clone())?;
            model::standard_partial_correlation(&model::assemble_precision(&state))
        })
        .collect::<Result<Vec<_>>>()?;
    entrywise_bands(&samples, level)
}

/// One row of the benchmark results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub kind: String,
    pub d: usize,
    pub n: usize,
    pub rep: usize,
    pub frobenius: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub runtime_seconds: f64,
    pub chosen_epsilon: f64,
    pub attained_fdr: f64,
}

/// Appends rows, writing the header only when the file is new or empty.
pub fn append_results(path: impl AsRef<Path>, rows: &[ResultsRow]) -> Result<()> {
    let path = path.as_ref();
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One simulate-fit-select-score design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchDesign {
    pub truth: TruthSpec,
    pub n: usize,
    pub seed: u64,
    pub chain: ChainConfig,
    /// Fixed rank, or `None` to pick it from the data.
    pub q: Option<usize>,
    pub rank_threshold: f64,
    pub rank_rule: RankRule,
    pub beta: f64,
    pub epsilon_grid: Vec<f64>,
    pub epsilon_rule: graphsel::EpsilonRule,
    pub band_level: Option<f64>,
}

impl BenchDesign {
    /// d = 50, n = 100 with every other setting at its default.
    pub fn new(kind: TruthKind, seed: u64) -> Self {
        Self {
            truth: TruthSpec::new(kind, 50),
            n: 100,
            seed,
            chain: ChainConfig::default(),
            q: None,
            rank_threshold: 0.95,
            rank_rule: RankRule::default(),
            beta: graphsel::DEFAULT_BETA,
            epsilon_grid: graphsel::default_epsilon_grid(),
            epsilon_rule: graphsel::EpsilonRule::default(),
            band_level: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Replication {
    pub truth: Truth,
    pub posterior: graphsel::EdgePosterior,
    pub q: usize,
    pub graph: GraphEstimate,
    pub report: EvalReport,
    pub confusion: Confusion,
    pub bands: Option<CredibleBands>,
}

impl Replication {
    pub fn results_row(&self, design: &BenchDesign) -> ResultsRow {
        ResultsRow {
            kind: design.truth.kind.label().to_string(),
            d: design.truth.d,
            n: design.n,
            rep: self.report.replication,
            frobenius: self.report.frobenius,
            sensitivity: self.report.sensitivity,
            specificity: self.report.specificity,
            runtime_seconds: self.report.runtime_seconds,
            chosen_epsilon: self.graph.chosen_epsilon,
            attained_fdr: self.graph.attained_fdr,
        }
    }
}

/// Runs replication `rep`: truth and data on their own streams, then the
/// chain, edge selection and scoring. Runtime covers fitting and selection.
pub fn run_replication(design: &BenchDesign, rep: usize) -> Result<Replication> {
    let base = 4 * rep as u64;
    let truth = gen_truth(&design.truth, &mut RngStream::new(design.seed, base))?;
    let data = sample_data(&truth.omega, design.n, &mut RngStream::new(design.seed, base + 1))?;
    let data = model::center_columns(&data);

    let started = Instant::now();
    let q = match design.q {
        Some(q) => q,
        None => model::select_q(
            &data,
            design.rank_threshold,
            model::default_max_rank(design.n, design.truth.d),
            design.rank_rule,
        )?,
    };
    let hyper = Hyperparams::with_rank(q);
    let mut chain = design.chain;
    chain.seed = design.seed ^ (rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let keep_draws = design.band_level.is_some();
    let mut draws = Vec::new();
    let summary = sampler::run_chain_with(&data, &hyper, &chain, &design.epsilon_grid, |_, draw| {
        if keep_draws {
            draws.push(draw.clone());
        }
        Ok(())
    })?;
    let graph = graphsel::select_graph_with(&summary.posterior, design.beta, design.epsilon_rule)?;
    let runtime = started.elapsed().as_secs_f64();

    let mut report = evaluate(&graph, &graph.mean_partial_corr, &truth)?;
    report.replication = rep;
    report.runtime_seconds = runtime;
    let bands = match design.band_level {
        Some(level) => Some(credible_bands(&draws, level)?),
        None => None,
    };
    Ok(Replication {
        posterior: summary.posterior,
        confusion: report.confusion,
        truth,
        q,
        graph,
        report,
        bands,
    })
}
