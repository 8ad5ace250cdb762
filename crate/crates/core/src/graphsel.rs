//! Edge selection from posterior draws with posterior false-discovery-rate
//! control.
//!
//! For a threshold ε each pair (i, j) is tested as `|ρ_ij| ≤ ε` against
//! `|ρ_ij| > ε`, with ρ the diagonally scaled precision. The posterior
//! probability of the alternative is the fraction of draws exceeding ε.
//! An edge is declared when that probability exceeds β, and the posterior
//! FDR of the resulting graph is the average null probability of the
//! declared edges.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BLOCK_ROWS: usize = 128;

/// `n` equally spaced points ending at `hi`: `lo + (hi - lo) * i / (n - 1)`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// 50 points from 0.01 to 0.5.
pub fn default_epsilon_grid() -> Vec<f64> {
    linear_grid(0.01, 0.5, 50)
}

pub const DEFAULT_BETA: f64 = 0.9;

#[inline]
pub fn edge_index(i: usize, j: usize, d: usize) -> usize {
    debug_assert!(i < j && j < d);
    i * d - i * (i + 1) / 2 + (j - i - 1)
}

/// Streaming posterior summaries of the partial correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePosterior {
    d: usize,
    grid: Vec<f64>,
    /// Per edge, `grid.len() + 1` bins; bin k counts draws whose |ρ| lies
    /// strictly above exactly k grid points.
    bins: Vec<u32>,
    n_draws: u64,
    /// Upper-triangle sums of ρ (scaled-precision sign).
    sum_rho: Vec<f64>,
    /// Upper triangle, diagonal included, row-major sums of Ω.
    sum_omega: Vec<f64>,
}

impl EdgePosterior {
    pub fn new(d: usize, epsilon_grid: Vec<f64>) -> Result<Self> {
        if epsilon_grid.is_empty() {
            return Err(Error::Config("epsilon grid is empty".into()));
        }
        if epsilon_grid.iter().any(|e| !(*e > 0.0 && *e < 1.0))
            || epsilon_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Config("epsilon grid must be strictly increasing inside (0, 1)".into()));
        }
        let edges = d * d.saturating_sub(1) / 2;
        Ok(Self {
            d,
            bins: vec![0; edges * (epsilon_grid.len() + 1)],
            grid: epsilon_grid,
            n_draws: 0,
            sum_rho: vec![0.0; edges],
            sum_omega: vec![0.0; d * (d + 1) / 2],
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_edges(&self) -> usize {
        self.d * self.d.saturating_sub(1) / 2
    }

    pub fn epsilon_grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_draws(&self) -> u64 {
        self.n_draws
    }

    /// Adds one posterior draw `Ω = ΛΛᵀ + diag(δ²)`.
    ///
    /// ρ is formed from row-scaled loadings `λ_i / sqrt(ω_ii)` one block of
    /// rows at a time, so the d×d matrix never exists in full.
    pub fn accumulate(&mut self, lambda: &DMatrix<f64>, delta: &[f64]) -> Result<()> {
        let d = self.d;
        if lambda.nrows() != d || delta.len() != d {
            return Err(Error::Dimension(format!(
                "draw has d={} (δ² length {}), posterior expects {d}",
                lambda.nrows(),
                delta.len()
            )));
        }
        let diag: Vec<f64> = (0..d).map(|i| lambda.row(i).norm_squared() + delta[i]).collect();
        if let Some(bad) = diag.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Domain(format!("precision diagonal {bad} in draw")));
        }
        let inv_sd: Vec<f64> = diag.iter().map(|w| 1.0 / w.sqrt()).collect();
        let mut scaled = lambda.clone();
        for (i, s) in inv_sd.iter().enumerate() {
            let mut row = scaled.row_mut(i);
            row *= *s;
        }
        let g = self.grid.len();
        let st = scaled.transpose();
        let mut start = 0;
        while start < d {
            let rows = BLOCK_ROWS.min(d - start);
            let block = scaled.rows(start, rows) * &st;
            for bi in 0..rows {
                let i = start + bi;
                let tri = i * d - i * (i + 1) / 2 + i;
                self.sum_omega[tri] += diag[i];
                for j in (i + 1)..d {
                    let rho = block[(bi, j)];
                    let e = edge_index(i, j, d);
                    self.sum_rho[e] += rho;
                    self.sum_omega[tri + (j - i)] += rho / (inv_sd[i] * inv_sd[j]);
                    let above = self.grid.partition_point(|&eps| eps < rho.abs());
                    self.bins[e * (g + 1) + above] += 1;
                }
            }
            start += rows;
        }
        self.n_draws += 1;
        Ok(())
    }

    /// Adds another accumulator over the same grid.
    pub fn merge(&mut self, other: &EdgePosterior) -> Result<()> {
        if other.d != self.d || other.grid != self.grid {
            return Err(Error::Dimension("accumulators differ in dimension or grid".into()));
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
        for (a, b) in self.sum_rho.iter_mut().zip(&other.sum_rho) {
            *a += b;
        }
        for (a, b) in self.sum_omega.iter_mut().zip(&other.sum_omega) {
            *a += b;
        }
        self.n_draws += other.n_draws;
        Ok(())
    }

    /// Draws with `|ρ_ij| > ε_g` for edge `e`, for every grid point.
    pub fn exceed_counts(&self, e: usize) -> Vec<u64> {
        let g = self.grid.len();
        let bins = &self.bins[e * (g + 1)..(e + 1) * (g + 1)];
        let mut out = vec![0u64; g];
        let mut acc = 0u64;
        for k in (1..=g).rev() {
            acc += bins[k] as u64;
            out[k - 1] = acc;
        }
        out
    }

    /// `exceed_counts` for the pair (i, j), i ≠ j.
    pub fn exceed_counts_pair(&self, i: usize, j: usize) -> Vec<u64> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.exceed_counts(edge_index(a, b, self.d))
    }

    /// Posterior probabilities `Π(|ρ_e| > ε_g | y)` for every edge at grid
    /// point `g`.
    pub fn edge_probabilities(&self, g: usize) -> Vec<f64> {
        let width = self.grid.len() + 1;
        let n = self.n_draws.max(1) as f64;
        (0..self.n_edges())
            .map(|e| {
                let above: u64 = self.bins[e * width + g + 1..(e + 1) * width]
                    .iter()
                    .map(|&c| c as u64)
                    .sum();
                above as f64 / n
            })
            .collect()
    }

    /// Posterior mean of ρ (scaled-precision sign, unit diagonal).
    pub fn mean_scaled_precision(&self) -> DMatrix<f64> {
        let d = self.d;
        let n = self.n_draws.max(1) as f64;
        let mut m = DMatrix::identity(d, d);
        for i in 0..d {
            for j in (i + 1)..d {
                let v = self.sum_rho[edge_index(i, j, d)] / n;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Posterior mean partial correlations with the conventional sign.
    pub fn mean_partial_correlation(&self) -> DMatrix<f64> {
        crate::model::negate_off_diagonal(self.mean_scaled_precision())
    }

    /// Posterior mean of Ω.
    pub fn mean_precision(&self) -> DMatrix<f64> {
        let d = self.d;
        let n = self.n_draws.max(1) as f64;
        let mut m = DMatrix::zeros(d, d);
        let mut at = 0;
        for i in 0..d {
            for j in i..d {
                let v = self.sum_omega[at] / n;
                m[(i, j)] = v;
                m[(j, i)] = v;
                at += 1;
            }
        }
        m
    }

    pub fn to_file(&self) -> PosteriorFile {
        PosteriorFile {
            format: "precfactor-posterior".into(),
            version: 1,
            d: self.d,
            epsilon_grid: self.grid.clone(),
            n_draws: self.n_draws,
            exceed_counts: (0..self.n_edges()).map(|e| self.exceed_counts(e)).collect(),
            sum_scaled_precision: self.sum_rho.clone(),
            sum_precision: self.sum_omega.clone(),
        }
    }

    pub fn from_file(file: PosteriorFile) -> Result<Self> {
        let mut post = EdgePosterior::new(file.d, file.epsilon_grid)?;
        let g = post.grid.len();
        if file.exceed_counts.len() != post.n_edges()
            || file.sum_scaled_precision.len() != post.n_edges()
            || file.sum_precision.len() != post.sum_omega.len()
        {
            return Err(Error::Data("posterior file sizes do not match its dimension".into()));
        }
        for (e, counts) in file.exceed_counts.iter().enumerate() {
            if counts.len() != g {
                return Err(Error::Data(format!("edge {e}: {} counts for {g} grid points", counts.len())));
            }
            let mut prev = file.n_draws;
            for (k, &c) in counts.iter().enumerate() {
                if c > prev {
                    return Err(Error::Data(format!("edge {e}: exceedance counts increase with ε")));
                }
                post.bins[e * (g + 1) + k] = (prev - c) as u32;
                prev = c;
            }
            post.bins[e * (g + 1) + g] = prev as u32;
        }
        post.n_draws = file.n_draws;
        post.sum_rho = file.sum_scaled_precision;
        post.sum_omega = file.sum_precision;
        Ok(post)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_file())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file(serde_json::from_str(&text)?)
    }
}

/// Serialized form of [`EdgePosterior`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorFile {
    pub format: String,
    pub version: u32,
    pub d: usize,
    pub epsilon_grid: Vec<f64>,
    pub n_draws: u64,
    /// Per edge (i < j, row-major), draws with |ρ| above each grid point.
    pub exceed_counts: Vec<Vec<u64>>,
    pub sum_scaled_precision: Vec<f64>,
    pub sum_precision: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdrPoint {
    pub epsilon: f64,
    pub fdr: f64,
    pub n_selected: usize,
}

/// Posterior FDR of thresholding `probs` at `beta`:
/// `Σ d_e (1 - p_e) / max(Σ d_e, 1)` with `d_e = 1{p_e > beta}`.
pub fn posterior_fdr(probs: &[f64], beta: f64) -> (f64, usize) {
    let mut selected = 0usize;
    let mut null_mass = 0.0;
    for &p in probs {
        if p > beta {
            selected += 1;
            null_mass += 1.0 - p;
        }
    }
    (null_mass / selected.max(1) as f64, selected)
}

pub fn fdr_curve(post: &EdgePosterior, beta: f64) -> Result<Vec<FdrPoint>> {
    if post.n_draws == 0 {
        return Err(Error::Config("posterior holds no draws".into()));
    }
    check_beta(beta)?;
    Ok(post
        .grid
        .iter()
        .enumerate()
        .map(|(g, &epsilon)| {
            let (fdr, n_selected) = posterior_fdr(&post.edge_probabilities(g), beta);
            FdrPoint {
                epsilon,
                fdr,
                n_selected,
            }
        })
        .collect())
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("beta must lie in (0, 1), got {beta}")))
    }
}

/// How the threshold ε is picked from the FDR curve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonRule {
    /// Smallest grid ε whose FDR is at most `1 - beta`.
    SmallestQualifying,
    /// Grid ε with the lowest FDR among those selecting at least one edge
    /// (ties go to the smaller ε), provided that FDR is at most `1 - beta`.
    #[default]
    MinimumFdr,
}

/// Index of the grid point chosen by `rule`, or `None` when no point
/// qualifies.
pub fn choose_epsilon(curve: &[FdrPoint], beta: f64, rule: EpsilonRule) -> Option<usize> {
    let level = 1.0 - beta + 1e-12;
    match rule {
        EpsilonRule::SmallestQualifying => curve.iter().position(|p| p.fdr <= level),
        EpsilonRule::MinimumFdr => {
            let mut best: Option<usize> = None;
            for (g, p) in curve.iter().enumerate() {
                if p.n_selected > 0 && p.fdr <= level && best.map_or(true, |b| p.fdr < curve[b].fdr) {
                    best = Some(g);
                }
            }
            best.or_else(|| curve.iter().position(|p| p.fdr <= level))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEstimate {
    pub adjacency: DMatrix<bool>,
    pub edge_prob: DMatrix<f64>,
    pub chosen_epsilon: f64,
    pub attained_fdr: f64,
    pub beta: f64,
    /// Sign of the conventional partial correlation on selected edges,
    /// zero elsewhere.
    pub signs: DMatrix<i8>,
    /// Posterior mean partial correlations, conventional sign.
    pub mean_partial_corr: DMatrix<f64>,
    /// False when no grid point met the FDR level and the largest ε was used.
    pub fdr_met: bool,
    pub curve: Vec<FdrPoint>,
}

impl GraphEstimate {
    pub fn n_edges(&self) -> usize {
        let d = self.adjacency.nrows();
        (0..d)
            .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
            .filter(|&(i, j)| self.adjacency[(i, j)])
            .count()
    }

    /// Selected pairs `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let d = self.adjacency.nrows();
        let mut out = Vec::new();
        for i in 0..d {
            for j in (i + 1)..d {
                if self.adjacency[(i, j)] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Edge list: `i,j,posterior_prob,sign,mean_partial_corr`.
    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i", "j", "posterior_prob", "sign", "mean_partial_corr"])?;
        for (i, j) in self.edges() {
            w.write_record([
                i.to_string(),
                j.to_string(),
                format!("{:?}", self.edge_prob[(i, j)]),
                self.signs[(i, j)].to_string(),
                format!("{:?}", self.mean_partial_corr[(i, j)]),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Headerless d×d 0/1 matrix.
    pub fn write_adjacency(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        for i in 0..self.adjacency.nrows() {
            let row: Vec<&str> = (0..self.adjacency.ncols())
                .map(|j| if self.adjacency[(i, j)] { "1" } else { "0" })
                .collect();
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// `epsilon,fdr,n_selected`.
    pub fn write_fdr_curve(&self, path: impl AsRef<Path>) -> Result<()> {
        write_fdr_curve(path, &self.curve)
    }
}

pub fn write_fdr_curve(path: impl AsRef<Path>, curve: &[FdrPoint]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epsilon", "fdr", "n_selected"])?;
    for p in curve {
        w.write_record([format!("{:?}", p.epsilon), format!("{:?}", p.fdr), p.n_selected.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Chooses ε on the grid by the default rule and thresholds the edge
/// probabilities at `beta`.
pub fn select_graph(post: &EdgePosterior, beta: f64) -> Result<GraphEstimate> {
    select_graph_with(post, beta, EpsilonRule::default())
}

pub fn select_graph_with(post: &EdgePosterior, beta: f64, rule: EpsilonRule) -> Result<GraphEstimate> {
    let curve = fdr_curve(post, beta)?;
    let (g, fdr_met) = match choose_epsilon(&curve, beta, rule) {
        Some(g) => (g, true),
        None => (curve.len() - 1, false),
    };
    let d = post.d;
    let probs = post.edge_probabilities(g);
    let mean = post.mean_partial_correlation();
    let mut adjacency = DMatrix::from_element(d, d, false);
    let mut edge_prob = DMatrix::zeros(d, d);
    let mut signs = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in (i + 1)..d {
            let p = probs[edge_index(i, j, d)];
            edge_prob[(i, j)] = p;
            edge_prob[(j, i)] = p;
            if p > beta {
                adjacency[(i, j)] = true;
                adjacency[(j, i)] = true;
                let s = mean[(i, j)].signum() as i8;
                let s = if mean[(i, j)] == 0.0 { 0 } else { s };
                signs[(i, j)] = s;
                signs[(j, i)] = s;
            }
        }
    }
    Ok(GraphEstimate {
        adjacency,
        edge_prob,
        chosen_epsilon: curve[g].epsilon,
        attained_fdr: curve[g].fdr,
        beta,
        signs,
        mean_partial_corr: mean,
        fdr_met,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_precision, partial_correlation, ModelState};
    use crate::rng::RngStream;
    use crate::rvgen;
    use proptest::prelude::*;

    fn random_draw(d: usize, q: usize, rng: &mut RngStream) -> (DMatrix<f64>, Vec<f64>) {
        let lambda = DMatrix::from_fn(d, q, |_, _| rvgen::std_normal(rng));
        let delta = (0..d).map(|_| 0.1 + rvgen::exponential(1.0, rng).unwrap()).collect();
        (lambda, delta)
    }

    fn posterior_from(draws: &[(DMatrix<f64>, Vec<f64>)], grid: Vec<f64>) -> EdgePosterior {
        let mut post = EdgePosterior::new(draws[0].0.nrows(), grid).unwrap();
        for (l, dlt) in draws {
            post.accumulate(l, dlt).unwrap();
        }
        post
    }

    fn curve_of(fdrs: &[f64], grid: &[f64]) -> Vec<FdrPoint> {
        fdrs.iter()
            .zip(grid)
            .map(|(&fdr, &epsilon)| FdrPoint {
                epsilon,
                fdr,
                n_selected: 3,
            })
            .collect()
    }

    #[test]
    fn edge_index_enumerates_the_upper_triangle() {
        let d = 7;
        let mut next = 0;
        for i in 0..d {
            for j in (i + 1)..d {
                assert_eq!(edge_index(i, j, d), next);
                next += 1;
            }
        }
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(EdgePosterior::new(3, vec![]), Err(Error::Config(_))));
        assert!(EdgePosterior::new(3, vec![0.2, 0.1]).is_err());
        assert!(EdgePosterior::new(3, vec![0.0, 0.1]).is_err());
        assert!(EdgePosterior::new(3, vec![0.5, 1.0]).is_err());
        let grid = default_epsilon_grid();
        assert_eq!(grid.len(), 50);
        assert!((grid[0] - 0.01).abs() < 1e-15 && (grid[49] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn counts_for_hand_draws() {
        let mut post = EdgePosterior::new(3, vec![0.1, 0.3, 0.7]).unwrap();
        post.accumulate(&DMatrix::zeros(3, 2), &[1.0, 2.0, 3.0]).unwrap();
        for e in 0..3 {
            assert_eq!(post.exceed_counts(e), vec![0, 0, 0]);
        }
        let mut post = EdgePosterior::new(2, vec![0.1, 0.3, 0.7]).unwrap();
        post.accumulate(&DMatrix::from_element(2, 1, 1.0), &[1.0, 1.0]).unwrap();
        assert_eq!(post.exceed_counts_pair(1, 0), vec![1, 1, 0]);
        assert!(matches!(post.accumulate(&DMatrix::zeros(3, 1), &[1.0; 3]), Err(Error::Dimension(_))));
    }

    #[test]
    fn counters_match_replay_of_stored_draws() {
        let mut rng = RngStream::new(31, 0);
        let draws: Vec<_> = (0..100).map(|_| random_draw(5, 2, &mut rng)).collect();
        let grid = linear_grid(0.05, 0.6, 12);
        let post = posterior_from(&draws, grid.clone());
        let mut counts = vec![vec![0u64; grid.len()]; 10];
        let mut sum_rho = DMatrix::zeros(5, 5);
        let mut sum_omega = DMatrix::zeros(5, 5);
        for (l, dlt) in &draws {
            let omega = assemble_precision(&ModelState::from_parts(l.clone(), dlt.clone()).unwrap());
            let rho = partial_correlation(&omega).unwrap();
            for i in 0..5 {
                for j in (i + 1)..5 {
                    for (g, &eps) in grid.iter().enumerate() {
                        if rho[(i, j)].abs() > eps {
                            counts[edge_index(i, j, 5)][g] += 1;
                        }
                    }
                }
            }
            sum_rho += rho;
            sum_omega += omega;
        }
        for (e, want) in counts.iter().enumerate() {
            assert_eq!(&post.exceed_counts(e), want);
        }
        assert!((post.mean_scaled_precision() - sum_rho / 100.0).amax() < 1e-12);
        assert!((post.mean_precision() - sum_omega / 100.0).amax() < 1e-12);
        let pc = post.mean_partial_correlation();
        assert!((pc[(0, 1)] + post.mean_scaled_precision()[(0, 1)]).abs() < 1e-15);
    }

    #[test]
    fn blockwise_accumulation_matches_dense_for_large_d() {
        let mut rng = RngStream::new(32, 0);
        let (l, dlt) = random_draw(300, 3, &mut rng);
        let grid = vec![0.05, 0.2, 0.4];
        let post = posterior_from(&[(l.clone(), dlt.clone())], grid.clone());
        let rho = partial_correlation(&assemble_precision(&ModelState::from_parts(l, dlt).unwrap())).unwrap();
        for i in 0..300 {
            for j in (i + 1)..300 {
                let want: Vec<u64> = grid.iter().map(|&e| (rho[(i, j)].abs() > e) as u64).collect();
                assert_eq!(post.exceed_counts_pair(i, j), want);
            }
        }
    }

    #[test]
    fn fdr_hand_cases() {
        let (fdr, k) = posterior_fdr(&[0.95, 0.92, 0.10], 0.9);
        assert_eq!(k, 2);
        assert!((fdr - 0.065).abs() < 1e-12);
        assert_eq!(posterior_fdr(&[1.0, 1.0, 1.0], 0.9), (0.0, 3));
        assert_eq!(posterior_fdr(&[0.3, 0.9, 0.0], 0.9), (0.0, 0));
    }

    #[test]
    fn epsilon_rules_on_a_hand_curve() {
        let grid = [0.05, 0.1, 0.2, 0.3];
        let curve = curve_of(&[0.4, 0.2, 0.08, 0.05], &grid);
        let g = choose_epsilon(&curve, 0.9, EpsilonRule::SmallestQualifying).unwrap();
        assert_eq!((curve[g].epsilon, curve[g].fdr), (0.2, 0.08));
        let g = choose_epsilon(&curve, 0.9, EpsilonRule::MinimumFdr).unwrap();
        assert_eq!((curve[g].epsilon, curve[g].fdr), (0.3, 0.05));
        let none = curve_of(&[0.4, 0.3, 0.2, 0.15], &grid);
        assert_eq!(choose_epsilon(&none, 0.9, EpsilonRule::MinimumFdr), None);
        assert_eq!(choose_epsilon(&none, 0.9, EpsilonRule::SmallestQualifying), None);
    }

    #[test]
    fn minimum_fdr_skips_empty_selections() {
        let mut curve = curve_of(&[0.02, 0.05, 0.0], &[0.1, 0.2, 0.3]);
        curve[2].n_selected = 0;
        assert_eq!(choose_epsilon(&curve, 0.9, EpsilonRule::MinimumFdr), Some(0));
        for p in &mut curve {
            p.n_selected = 0;
        }
        assert_eq!(choose_epsilon(&curve, 0.9, EpsilonRule::MinimumFdr), Some(0));
    }

    #[test]
    fn null_posterior_gives_the_empty_graph() {
        let mut post = EdgePosterior::new(4, default_epsilon_grid()).unwrap();
        for _ in 0..20 {
            post.accumulate(&DMatrix::zeros(4, 2), &[1.0; 4]).unwrap();
        }
        for rule in [EpsilonRule::SmallestQualifying, EpsilonRule::MinimumFdr] {
            let est = select_graph_with(&post, 0.9, rule).unwrap();
            assert_eq!(est.n_edges(), 0);
            assert_eq!(est.attained_fdr, 0.0);
            assert!(est.fdr_met);
        }
        let empty = EdgePosterior::new(4, default_epsilon_grid()).unwrap();
        assert!(matches!(select_graph(&empty, 0.9), Err(Error::Config(_))));
        assert!(matches!(select_graph(&post, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn every_selection_meets_its_level() {
        // Each declared edge has null mass 1 - p < 1 - beta, so their mean
        // does too, whatever the draws.
        let grid = vec![0.1, 0.2, 0.3];
        let mut post = EdgePosterior::new(2, grid).unwrap();
        for k in 0..100 {
            let l = if k < 95 { DMatrix::from_element(2, 1, 1.0) } else { DMatrix::zeros(2, 1) };
            post.accumulate(&l, &[1.0, 1.0]).unwrap();
        }
        let est = select_graph(&post, 0.94).unwrap();
        assert!(est.fdr_met && est.n_edges() == 1);
        assert!((est.attained_fdr - 0.05).abs() < 1e-12);
        assert_eq!(est.signs[(0, 1)], -1);
        let est = select_graph(&post, 0.99).unwrap();
        assert!(est.fdr_met && est.n_edges() == 0);
    }

    #[test]
    fn posterior_file_round_trip_and_merge() {
        let mut rng = RngStream::new(33, 0);
        let draws: Vec<_> = (0..40).map(|_| random_draw(6, 2, &mut rng)).collect();
        let grid = default_epsilon_grid();
        let whole = posterior_from(&draws, grid.clone());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("posterior.json");
        whole.save(&path).unwrap();
        assert_eq!(EdgePosterior::load(&path).unwrap(), whole);

        let mut first = posterior_from(&draws[..15], grid.clone());
        first.merge(&posterior_from(&draws[15..], grid.clone())).unwrap();
        assert_eq!(first.n_draws(), 40);
        for e in 0..whole.n_edges() {
            assert_eq!(first.exceed_counts(e), whole.exceed_counts(e));
        }
        assert!((first.mean_precision() - whole.mean_precision()).amax() < 1e-12);
        let other = EdgePosterior::new(6, vec![0.1]).unwrap();
        assert!(first.merge(&other).is_err());
    }

    #[test]
    fn exported_tables_have_documented_headers() {
        let mut rng = RngStream::new(34, 0);
        let draws: Vec<_> = (0..30).map(|_| random_draw(4, 2, &mut rng)).collect();
        let est = select_graph(&posterior_from(&draws, default_epsilon_grid()), 0.9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (edges, adj, curve) = (dir.path().join("e.csv"), dir.path().join("a.csv"), dir.path().join("c.csv"));
        est.write_edge_list(&edges).unwrap();
        est.write_adjacency(&adj).unwrap();
        est.write_fdr_curve(&curve).unwrap();
        let text = std::fs::read_to_string(&edges).unwrap();
        assert!(text.starts_with("i,j,posterior_prob,sign,mean_partial_corr\n"));
        assert_eq!(text.lines().count(), 1 + est.n_edges());
        assert_eq!(std::fs::read_to_string(&adj).unwrap().lines().count(), 4);
        let text = std::fs::read_to_string(&curve).unwrap();
        assert!(text.starts_with("epsilon,fdr,n_selected\n"));
        assert_eq!(text.lines().count(), 51);
    }

    fn draws_strategy() -> impl Strategy<Value = (u64, usize)> {
        (any::<u64>(), 1usize..40)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn selected_sets_shrink_as_epsilon_grows((seed, n) in draws_strategy(), beta in 0.5f64..0.99) {
            let mut rng = RngStream::new(seed, 0);
            let draws: Vec<_> = (0..n).map(|_| random_draw(5, 2, &mut rng)).collect();
            let post = posterior_from(&draws, default_epsilon_grid());
            let mut prev: Option<Vec<f64>> = None;
            for g in 0..post.epsilon_grid().len() {
                let p = post.edge_probabilities(g);
                if let Some(prev) = &prev {
                    for (a, b) in prev.iter().zip(&p) {
                        prop_assert!(b <= a);
                        prop_assert!(!(*b > beta) || *a > beta);
                    }
                }
                prev = Some(p);
            }
            for e in 0..post.n_edges() {
                let c = post.exceed_counts(e);
                prop_assert!(c.windows(2).all(|w| w[1] <= w[0]));
                prop_assert!(c[0] <= post.n_draws());
            }
        }

        #[test]
        fn selection_is_nested_in_beta((seed, n) in draws_strategy(), b1 in 0.5f64..0.98, gap in 0.0f64..0.2) {
            let b2 = (b1 + gap).min(0.999);
            let mut rng = RngStream::new(seed, 0);
            let draws: Vec<_> = (0..n).map(|_| random_draw(5, 2, &mut rng)).collect();
            let post = posterior_from(&draws, default_epsilon_grid());
            for g in 0..post.epsilon_grid().len() {
                let p = post.edge_probabilities(g);
                prop_assert!(p.iter().all(|&x| !(x > b2) || x > b1));
            }
            let est = select_graph(&post, b1).unwrap();
            if est.fdr_met {
                prop_assert!(est.attained_fdr <= 1.0 - b1 + 1e-12);
            }
            prop_assert!(est.adjacency == est.adjacency.transpose());
            prop_assert!((0..5).all(|i| !est.adjacency[(i, i)]));
        }

        #[test]
        fn accumulation_ignores_draw_order((seed, n) in draws_strategy(), shift in 0usize..40) {
            let mut rng = RngStream::new(seed, 0);
            let draws: Vec<_> = (0..n).map(|_| random_draw(6, 2, &mut rng)).collect();
            let mut permuted = draws.clone();
            permuted.rotate_left(shift % n);
            permuted.reverse();
            let a = posterior_from(&draws, default_epsilon_grid());
            let b = posterior_from(&permuted, default_epsilon_grid());
            for e in 0..a.n_edges() {
                prop_assert_eq!(a.exceed_counts(e), b.exceed_counts(e));
            }
            prop_assert!((a.mean_scaled_precision() - b.mean_scaled_precision()).amax() < 1e-12);
        }
    }
}
