//! Model state for the low-rank-plus-diagonal precision
//! `Ω = ΛΛᵀ + diag(δ²)` and the dense algebra around it.
//!
//! Δ is carried as the vector `δ²` together with the Dirichlet-process
//! bookkeeping that generates it. Ω itself is only built on request.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::rvgen;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Dirichlet concentration of the Dirichlet–Laplace prior.
    pub a: f64,
    /// Rate of the DL global scale, `τ ~ Ga(dq·a, b)`.
    pub b: f64,
    pub a_delta: f64,
    pub b_delta: f64,
    pub a_alpha: f64,
    pub b_alpha: f64,
    /// Number of latent factors (columns of Λ).
    pub q: usize,
}

impl Hyperparams {
    pub fn with_rank(q: usize) -> Self {
        Self {
            a: 0.5,
            b: 2.0,
            a_delta: 0.1,
            b_delta: 0.1,
            a_alpha: 0.1,
            b_alpha: 0.1,
            q,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let named = [
            ("a", self.a),
            ("b", self.b),
            ("a_delta", self.a_delta),
            ("b_delta", self.b_delta),
            ("a_alpha", self.a_alpha),
            ("b_alpha", self.b_alpha),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("hyperparameter {name} must be positive, got {v}")));
            }
        }
        if self.q == 0 || self.q > d {
            return Err(Error::Config(format!("rank q = {} must lie in 1..={d}", self.q)));
        }
        Ok(())
    }
}

/// Local and global scales of the Dirichlet–Laplace prior on `vec(Λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DlLocals {
    /// ψ, d×q, exponential local scales.
    pub psi: DMatrix<f64>,
    /// φ, d×q, a single simplex over all dq entries.
    pub phi: DMatrix<f64>,
    /// τ, the global scale.
    pub tau: f64,
}

impl DlLocals {
    pub fn uniform(d: usize, q: usize) -> Self {
        Self {
            psi: DMatrix::from_element(d, q, 1.0),
            phi: DMatrix::from_element(d, q, 1.0 / (d * q) as f64),
            tau: 1.0,
        }
    }

    /// Prior variance `ψ φ² τ²` of loading (j, h).
    #[inline]
    pub fn prior_variance(&self, j: usize, h: usize) -> f64 {
        let phi = self.phi[(j, h)];
        self.psi[(j, h)] * phi * phi * self.tau * self.tau
    }
}

/// Dirichlet-process clustering of the residual precisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpState {
    /// Cluster id of each variable, compacted to `0..k`.
    pub labels: Vec<usize>,
    /// Cluster precisions δ*², one per live cluster.
    pub uniques: Vec<f64>,
    pub alpha: f64,
}

impl DpState {
    pub fn single_cluster(d: usize, precision: f64, alpha: f64) -> Self {
        Self {
            labels: vec![0; d],
            uniques: vec![precision],
            alpha,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.uniques.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.uniques.len()];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }

    /// Every label points at a live unique and every unique has a member.
    pub fn is_consistent(&self) -> bool {
        self.labels.iter().all(|&c| c < self.uniques.len())
            && self.cluster_sizes().iter().all(|&s| s > 0)
            && self.uniques.iter().all(|&u| u.is_finite() && u > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// Λ, d×q loadings.
    pub lambda: DMatrix<f64>,
    pub dl: DlLocals,
    pub dp: DpState,
    /// δ², the diagonal of Δ, always `dp.uniques[dp.labels[j]]`.
    pub delta: Vec<f64>,
}

impl ModelState {
    /// Starting point for a chain: Λ entries iid N(0, 0.01), one residual
    /// cluster with precision 1, τ = 1, ψ = 1, φ uniform and α = 1.
    pub fn initial(d: usize, q: usize, rng: &mut RngStream) -> Self {
        let lambda = DMatrix::from_fn(d, q, |_, _| 0.1 * rvgen::std_normal(rng));
        let dp = DpState::single_cluster(d, 1.0, 1.0);
        let delta = vec![1.0; d];
        Self {
            lambda,
            dl: DlLocals::uniform(d, q),
            dp,
            delta,
        }
    }

    /// Builds a state from explicit loadings and residual precisions, one
    /// cluster per distinct value of `delta`.
    pub fn from_parts(lambda: DMatrix<f64>, delta: Vec<f64>) -> Result<Self> {
        let (d, q) = lambda.shape();
        if delta.len() != d {
            return Err(Error::Dimension(format!("Λ has {d} rows but δ² has {}", delta.len())));
        }
        if let Some(bad) = delta.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::Domain(format!("residual precision must be positive, got {bad}")));
        }
        let mut uniques: Vec<f64> = Vec::new();
        let mut labels = Vec::with_capacity(d);
        for &x in &delta {
            let c = match uniques.iter().position(|&u| u == x) {
                Some(c) => c,
                None => {
                    uniques.push(x);
                    uniques.len() - 1
                }
            };
            labels.push(c);
        }
        Ok(Self {
            lambda,
            dl: DlLocals::uniform(d, q),
            dp: DpState {
                labels,
                uniques,
                alpha: 1.0,
            },
            delta,
        })
    }

    /// One joint draw of every parameter from the prior.
    pub fn sample_prior(d: usize, hyper: &Hyperparams, rng: &mut RngStream) -> Result<Self> {
        let q = hyper.q;
        let k = d * q;
        let phi = rvgen::dirichlet(&vec![hyper.a; k], rng)?;
        let tau = rvgen::gamma(k as f64 * hyper.a, hyper.b, rng)?;
        let mut psi = DMatrix::zeros(d, q);
        let mut phi_m = DMatrix::zeros(d, q);
        for h in 0..q {
            for j in 0..d {
                psi[(j, h)] = rvgen::exponential(0.5, rng)?;
                phi_m[(j, h)] = phi[h * d + j];
            }
        }
        let dl = DlLocals { psi, phi: phi_m, tau };
        let mut lambda = DMatrix::zeros(d, q);
        for h in 0..q {
            for j in 0..d {
                lambda[(j, h)] = dl.prior_variance(j, h).sqrt() * rvgen::std_normal(rng);
            }
        }

        let alpha = rvgen::gamma(hyper.a_alpha, hyper.b_alpha, rng)?;
        let mut labels = Vec::with_capacity(d);
        let mut sizes: Vec<usize> = Vec::new();
        for j in 0..d {
            // Chinese restaurant process: join r w.p. ∝ size, open w.p. ∝ α.
            let mut t = rng.open01() * (j as f64 + alpha);
            let mut chosen = sizes.len();
            for (r, &s) in sizes.iter().enumerate() {
                if t < s as f64 {
                    chosen = r;
                    break;
                }
                t -= s as f64;
            }
            if chosen == sizes.len() {
                sizes.push(0);
            }
            sizes[chosen] += 1;
            labels.push(chosen);
        }
        let uniques = (0..sizes.len())
            .map(|_| rvgen::gamma(hyper.a_delta, hyper.b_delta, rng))
            .collect::<Result<Vec<_>>>()?;
        let dp = DpState {
            labels,
            uniques,
            alpha,
        };
        let mut state = Self {
            lambda,
            dl,
            dp,
            delta: Vec::new(),
        };
        state.refresh_delta();
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn rank(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn refresh_delta(&mut self) {
        self.delta = self.dp.labels.iter().map(|&c| self.dp.uniques[c]).collect();
    }
}

/// The latent pair `(U, V)` of one sweep together with `P = I + ΛᵀΔ⁻¹Λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBlock {
    /// n×q, rows `u_i`.
    pub u: DMatrix<f64>,
    /// n×d, rows `v_i`; column j is `v^(j)`.
    pub v: DMatrix<f64>,
    /// q×q.
    pub p: DMatrix<f64>,
}

/// `P = I_q + ΛᵀΔ⁻¹Λ`.
pub fn latent_precision(lambda: &DMatrix<f64>, delta: &[f64]) -> DMatrix<f64> {
    let scaled = scale_rows(lambda, delta.iter().map(|d| 1.0 / d));
    let mut p = lambda.tr_mul(&scaled);
    for h in 0..p.nrows() {
        p[(h, h)] += 1.0;
    }
    symmetrize(&mut p);
    p
}

/// `Ω = ΛΛᵀ + diag(δ²)`.
pub fn assemble_precision(state: &ModelState) -> DMatrix<f64> {
    let mut omega = &state.lambda * state.lambda.transpose();
    for (j, d) in state.delta.iter().enumerate() {
        omega[(j, j)] += d;
    }
    symmetrize(&mut omega);
    omega
}

/// `Ω⁻¹` through the Sherman–Woodbury identity; only a q×q system is
/// factorized.
pub fn woodbury_covariance(state: &ModelState) -> Result<DMatrix<f64>> {
    let d = state.dim();
    let p = latent_precision(&state.lambda, &state.delta);
    let chol = p.cholesky().ok_or(Error::Singular {
        what: "latent precision I + ΛᵀΔ⁻¹Λ",
    })?;
    // K = Δ⁻¹Λ L⁻ᵀ, so Δ⁻¹ΛP⁻¹ΛᵀΔ⁻¹ = K Kᵀ.
    let scaled = scale_rows(&state.lambda, state.delta.iter().map(|d| 1.0 / d));
    let kt = chol
        .l()
        .solve_lower_triangular(&scaled.transpose())
        .ok_or(Error::Singular {
            what: "latent precision factor",
        })?;
    let mut sigma = -(kt.tr_mul(&kt));
    for j in 0..d {
        sigma[(j, j)] += 1.0 / state.delta[j];
    }
    symmetrize(&mut sigma);
    Ok(sigma)
}

/// `diag(Ω)^{-1/2} Ω diag(Ω)^{-1/2}`.
///
/// Off-diagonals keep the sign of Ω; the conventional partial correlation
/// is their negation (see [`standard_partial_correlation`]).
pub fn partial_correlation(omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = omega.nrows();
    if omega.ncols() != d {
        return Err(Error::Dimension(format!("{}×{} matrix is not square", d, omega.ncols())));
    }
    let mut inv_sd = Vec::with_capacity(d);
    for j in 0..d {
        let w = omega[(j, j)];
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::Domain(format!("diagonal entry {j} is {w}, need > 0")));
        }
        inv_sd.push(1.0 / w.sqrt());
    }
    let mut rho = DMatrix::from_fn(d, d, |i, j| omega[(i, j)] * inv_sd[i] * inv_sd[j]);
    for j in 0..d {
        rho[(j, j)] = 1.0;
    }
    Ok(rho)
}

/// Partial correlations with the usual sign, `-ω_ij / sqrt(ω_ii ω_jj)`.
pub fn standard_partial_correlation(omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(negate_off_diagonal(partial_correlation(omega)?))
}

pub fn negate_off_diagonal(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    for i in 0..d {
        for j in 0..d {
            if i != j {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
    m
}

/// How singular values are turned into rank weights by [`select_q`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankRule {
    /// Reciprocal singular values, summed largest first.
    #[default]
    InverseSingular,
    /// Singular values themselves, summed largest first.
    Singular,
}

/// Default cap on the number of singular values inspected.
pub fn default_max_rank(n: usize, d: usize) -> usize {
    (n.saturating_sub(1)).min(d).min(500).max(1)
}

/// Picks the latent rank from the spectrum of the column-centered data.
///
/// The top `min(max_rank, n, d)` singular values are turned into weights
/// by `rule`, sorted in decreasing order, and the smallest prefix whose sum
/// reaches `threshold` of the total gives q.
pub fn select_q(data: &DMatrix<f64>, threshold: f64, max_rank: usize, rule: RankRule) -> Result<usize> {
    let (n, d) = data.shape();
    if n < 2 || d < 2 {
        return Err(Error::Domain(format!("rank selection needs n, d >= 2, got {n}×{d}")));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("threshold {threshold} outside (0, 1]")));
    }
    if max_rank == 0 {
        return Err(Error::Config("max_rank must be positive".into()));
    }
    let centered = center_columns(data);
    let k = max_rank.min(n).min(d);
    let sv = top_singular_values(&centered, k);
    let sv = retained_spectrum(&sv)?;
    let weights: Vec<f64> = match rule {
        RankRule::InverseSingular => sv.iter().map(|s| 1.0 / s).collect(),
        RankRule::Singular => sv,
    };
    Ok(rank_from_weights(&weights, threshold))
}

/// Drops numerically zero singular values; an all-zero spectrum is an error.
pub(crate) fn retained_spectrum(sv: &[f64]) -> Result<Vec<f64>> {
    let top = sv.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) || !top.is_finite() {
        return Err(Error::Domain("data matrix is degenerate (zero spectrum)".into()));
    }
    let floor = top * 1e-10;
    Ok(sv.iter().cloned().filter(|&s| s > floor).collect())
}

/// Smallest count of the decreasingly sorted weights whose running sum
/// reaches `threshold` of their total.
pub fn rank_from_weights(weights: &[f64], threshold: f64) -> usize {
    let mut w = weights.to_vec();
    w.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = w.iter().sum();
    let target = threshold * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (i, x) in w.iter().enumerate() {
        acc += x;
        if acc >= target {
            return i + 1;
        }
    }
    w.len().max(1)
}

pub fn center_columns(data: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = data.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}

/// The `k` largest singular values, in decreasing order.
///
/// When `k` covers most of the spectrum the Gram matrix of the short side
/// is diagonalised outright; otherwise a block subspace iteration is run on
/// `XᵀX` until the Ritz values settle.
pub fn top_singular_values(x: &DMatrix<f64>, k: usize) -> Vec<f64> {
    let (n, d) = x.shape();
    let m = n.min(d);
    let k = k.min(m);
    if k == 0 {
        return Vec::new();
    }
    if 2 * (k + 10) >= m {
        let gram = if d <= n { x.tr_mul(x) } else { x * x.transpose() };
        let mut ev: Vec<f64> = SymmetricEigen::new(gram)
            .eigenvalues
            .iter()
            .map(|&e| e.max(0.0).sqrt())
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev.truncate(k);
        return ev;
    }
    subspace_singular_values(x, k)
}

fn subspace_singular_values(x: &DMatrix<f64>, k: usize) -> Vec<f64> {
    let d = x.ncols();
    let block = (k + 10).min(d);
    let mut rng = RngStream::new(0x5eed_5bd, 0);
    let mut q = DMatrix::from_fn(d, block, |_, _| rvgen::std_normal(&mut rng));
    q = q.qr().q();
    let mut prev: Vec<f64> = vec![0.0; k];
    for _ in 0..500 {
        let z = x.tr_mul(&(x * &q));
        q = z.qr().q();
        let b = x * &q;
        let mut sv: Vec<f64> = b.singular_values().iter().cloned().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv.truncate(k);
        let settled = sv
            .iter()
            .zip(&prev)
            .all(|(s, p)| (s - p).abs() <= 1e-13 * sv[0].max(f64::MIN_POSITIVE) + 1e-12 * s);
        prev = sv;
        if settled {
            break;
        }
    }
    prev
}

/// Multiplies row j of `m` by the j-th factor.
pub(crate) fn scale_rows(m: &DMatrix<f64>, factors: impl Iterator<Item = f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, f) in factors.enumerate() {
        let mut row = out.row_mut(j);
        row *= f;
    }
    out
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_state(d: usize, q: usize, seed: u64) -> ModelState {
        let mut rng = RngStream::new(seed, 0);
        let lambda = DMatrix::from_fn(d, q, |_, _| rvgen::std_normal(&mut rng));
        let delta = (0..d).map(|_| 0.2 + rvgen::exponential(1.0, &mut rng).unwrap()).collect();
        ModelState::from_parts(lambda, delta).unwrap()
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    #[test]
    fn assemble_hand_cases() {
        let s = ModelState::from_parts(DMatrix::zeros(3, 2), vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(assemble_precision(&s), DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0])));
        let s = ModelState::from_parts(DMatrix::from_element(2, 1, 1.0), vec![1.0, 1.0]).unwrap();
        assert_eq!(assemble_precision(&s), DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
    }

    #[test]
    fn assemble_matches_dense_oracle() {
        let s = random_state(6, 3, 1);
        let omega = assemble_precision(&s);
        for i in 0..6 {
            for j in 0..6 {
                let mut want: f64 = (0..3).map(|h| s.lambda[(i, h)] * s.lambda[(j, h)]).sum();
                if i == j {
                    want += s.delta[i];
                }
                assert!((omega[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn woodbury_hand_cases() {
        let s = ModelState::from_parts(DMatrix::zeros(3, 2), vec![1.0, 2.0, 4.0]).unwrap();
        let sigma = woodbury_covariance(&s).unwrap();
        assert_eq!(sigma, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.5, 0.25])));
        let s = ModelState::from_parts(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), vec![1.0, 1.0]).unwrap();
        let sigma = woodbury_covariance(&s).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]);
        assert!(max_abs(&(sigma - want)) < 1e-15);
    }

    #[test]
    fn woodbury_inverts_the_precision() {
        for (d, q, seed) in [(8, 3, 2), (50, 5, 3), (200, 20, 4)] {
            let s = random_state(d, q, seed);
            let prod = assemble_precision(&s) * woodbury_covariance(&s).unwrap();
            let err = max_abs(&(prod - DMatrix::identity(d, d)));
            assert!(err < 1e-8, "d={d} q={q}: {err}");
        }
    }

    #[test]
    fn latent_precision_is_symmetric_with_eigenvalues_above_one() {
        let s = random_state(30, 6, 5);
        let p = latent_precision(&s.lambda, &s.delta);
        assert!(max_abs(&(&p - p.transpose())) < 1e-10);
        assert!(min_eigenvalue(&p) >= 1.0 - 1e-10);
    }

    #[test]
    fn partial_correlation_cases() {
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 5.0, 0.3]));
        assert_eq!(partial_correlation(&diag).unwrap(), DMatrix::identity(3, 3));
        let omega = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let rho = partial_correlation(&omega).unwrap();
        assert!(max_abs(&(rho - DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]))) < 1e-15);
        let std = standard_partial_correlation(&omega).unwrap();
        assert!((std[(0, 1)] + 0.5).abs() < 1e-15);

        let omega = assemble_precision(&random_state(5, 2, 6));
        let rho = partial_correlation(&omega).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = omega[(i, j)] / (omega[(i, i)] * omega[(j, j)]).sqrt();
                assert!((rho[(i, j)] - want).abs() < 1e-12);
                assert!(rho[(i, j)].abs() <= 1.0 + 1e-15);
            }
        }
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(partial_correlation(&bad), Err(Error::Domain(_))));
    }

    #[test]
    fn from_parts_validates() {
        assert!(matches!(
            ModelState::from_parts(DMatrix::zeros(3, 1), vec![1.0, 1.0]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            ModelState::from_parts(DMatrix::zeros(2, 1), vec![1.0, -1.0]),
            Err(Error::Domain(_))
        ));
        let s = ModelState::from_parts(DMatrix::zeros(4, 1), vec![1.0, 2.0, 1.0, 3.0]).unwrap();
        assert_eq!(s.dp.n_clusters(), 3);
        assert!(s.dp.is_consistent());
    }

    #[test]
    fn hyperparameter_defaults_and_validation() {
        let h = Hyperparams::with_rank(3);
        assert_eq!((h.a, h.b, h.a_delta, h.b_delta, h.a_alpha, h.b_alpha), (0.5, 2.0, 0.1, 0.1, 0.1, 0.1));
        assert!(h.validate(3).is_ok());
        assert!(h.validate(2).is_err());
        assert!(Hyperparams { a: 0.0, ..h }.validate(5).is_err());
        assert!(Hyperparams::with_rank(0).validate(5).is_err());
    }

    #[test]
    fn prior_draws_respect_type_invariants() {
        let hyper = Hyperparams::with_rank(3);
        let mut rng = RngStream::new(7, 0);
        for _ in 0..200 {
            let s = ModelState::sample_prior(10, &hyper, &mut rng).unwrap();
            assert!((s.dl.phi.sum() - 1.0).abs() < 1e-12);
            assert!(s.dl.phi.iter().chain(s.dl.psi.iter()).all(|&x| x > 0.0));
            assert!(s.dl.tau > 0.0 && s.dp.alpha > 0.0);
            assert!(s.dp.is_consistent());
            assert!(s.dp.n_clusters() <= 10);
        }
    }

    #[test]
    fn rank_rule_examples() {
        assert_eq!(rank_from_weights(&[1.0; 10], 0.95), 10);
        assert_eq!(rank_from_weights(&[0.02, 0.96, 0.02], 0.95), 1);
        assert_eq!(rank_from_weights(&[3.0, 1.0], 1.0), 2);
    }

    fn brute_force_q(data: &DMatrix<f64>, threshold: f64, k: usize, rule: RankRule) -> usize {
        let mut sv: Vec<f64> = center_columns(data).svd(false, false).singular_values.iter().cloned().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv.truncate(k);
        let w: Vec<f64> = match rule {
            RankRule::InverseSingular => sv.iter().map(|s| 1.0 / s).collect(),
            RankRule::Singular => sv,
        };
        let total: f64 = w.iter().sum();
        let mut sorted = w.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut acc = 0.0;
        for (i, x) in sorted.iter().enumerate() {
            acc += x;
            if acc >= threshold * total - 1e-12 * total {
                return i + 1;
            }
        }
        sorted.len()
    }

    #[test]
    fn select_q_matches_full_svd() {
        let mut rng = RngStream::new(8, 0);
        let data = DMatrix::from_fn(50, 20, |_, _| rvgen::std_normal(&mut rng));
        for rule in [RankRule::InverseSingular, RankRule::Singular] {
            for t in [0.5, 0.8, 0.95] {
                let k = default_max_rank(50, 20);
                assert_eq!(select_q(&data, t, k, rule).unwrap(), brute_force_q(&data, t, k, rule));
            }
        }
    }

    #[test]
    fn truncated_spectrum_matches_full_svd() {
        let mut rng = RngStream::new(9, 0);
        let x = DMatrix::from_fn(120, 90, |i, j| rvgen::std_normal(&mut rng) + if i % 3 == 0 { j as f64 * 0.05 } else { 0.0 });
        let got = top_singular_values(&x, 12);
        let mut full: Vec<f64> = x.svd(false, false).singular_values.iter().cloned().collect();
        full.sort_by(|a, b| b.total_cmp(a));
        for (g, f) in got.iter().zip(&full) {
            assert!((g - f).abs() < 1e-8 * f, "{g} vs {f}");
        }
        assert_eq!(got.len(), 12);
    }

    #[test]
    fn zero_data_is_degenerate() {
        let data = DMatrix::from_element(10, 4, 3.0);
        assert!(matches!(select_q(&data, 0.95, 4, RankRule::default()), Err(Error::Domain(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn partial_correlation_ignores_diagonal_rescaling(
            seed in any::<u64>(),
            scales in proptest::collection::vec(0.01f64..100.0, 5),
        ) {
            let omega = assemble_precision(&random_state(5, 2, seed));
            let dm = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(scales));
            let scaled = &dm * &omega * &dm;
            let diff = partial_correlation(&scaled).unwrap() - partial_correlation(&omega).unwrap();
            prop_assert!(max_abs(&diff) < 1e-12);
        }

        #[test]
        fn precision_eigenvalues_bounded_by_residual(seed in any::<u64>(), d in 2usize..30, q in 1usize..6) {
            let s = random_state(d, q.min(d), seed);
            let lo = s.delta.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(min_eigenvalue(&assemble_precision(&s)) >= lo - 1e-8);
        }

        #[test]
        fn woodbury_inverse_consistency(seed in any::<u64>(), d in 2usize..60, q in 1usize..10) {
            let s = random_state(d, q.min(d), seed);
            let prod = assemble_precision(&s) * woodbury_covariance(&s).unwrap();
            prop_assert!(max_abs(&(prod - DMatrix::identity(d, d))) < 1e-8);
        }
    }
}
