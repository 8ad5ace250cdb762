//! The five conditional updates of one sweep.

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use super::prior::{update_dl, DlKernel, LoadingsPrior};
use crate::error::{Error, Result};
use crate::model::{latent_precision, scale_rows, DlLocals, DpState, Hyperparams, LatentBlock, ModelState};
use crate::rng::RngStream;
use crate::rvgen;

/// Working storage for the row-by-row loading update.
#[derive(Debug, Clone)]
pub struct SweepScratch {
    /// n×q residual `E = U - VΛ`.
    pub resid: DMatrix<f64>,
    /// `‖v^(j)‖²` for every column of V.
    pub v_norms: Vec<f64>,
    w: Vec<f64>,
    prec: Vec<f64>,
}

impl SweepScratch {
    /// Builds the residual for the current Λ from scratch.
    pub fn new(latents: &LatentBlock, lambda: &DMatrix<f64>) -> Self {
        let resid = &latents.u - &latents.v * lambda;
        let v_norms = latents.v.column_iter().map(|c| c.norm_squared()).collect();
        let q = lambda.ncols();
        Self {
            resid,
            v_norms,
            w: vec![0.0; q],
            prec: vec![0.0; q],
        }
    }

    /// Largest deviation between the maintained residual and `U - VΛ`.
    pub fn residual_drift(&self, latents: &LatentBlock, lambda: &DMatrix<f64>) -> f64 {
        let fresh = &latents.u - &latents.v * lambda;
        (&fresh - &self.resid).amax()
    }
}

/// Step 1: `u_i ~ N_q(0, P)` independently of the data and
/// `v_i = y_i + Δ⁻¹ΛP⁻¹u_i`, with a single Cholesky factorization of P.
pub fn step1_sample_latents(state: &ModelState, y: &DMatrix<f64>, rng: &mut RngStream) -> Result<LatentBlock> {
    let (n, d) = y.shape();
    if d != state.dim() {
        return Err(Error::Dimension(format!("data has {d} columns, model has {}", state.dim())));
    }
    let q = state.rank();
    let p = latent_precision(&state.lambda, &state.delta);
    let chol = p.clone().cholesky().ok_or(Error::Singular {
        what: "latent precision I + ΛᵀΔ⁻¹Λ",
    })?;
    let l = chol.l();
    let z = DMatrix::from_fn(n, q, |_, _| rvgen::std_normal(rng));
    // u_i = L z_i and P⁻¹u_i = L⁻ᵀ z_i, so v_i = y_i + K z_i with
    // K = Δ⁻¹Λ L⁻ᵀ, i.e. Kᵀ = L⁻¹ (Δ⁻¹Λ)ᵀ.
    let scaled = scale_rows(&state.lambda, state.delta.iter().map(|x| 1.0 / x));
    let kt = l.solve_lower_triangular(&scaled.transpose()).ok_or(Error::Singular {
        what: "latent precision factor",
    })?;
    let u = &z * l.transpose();
    let v = y + &z * kt;
    Ok(LatentBlock { u, v, p })
}

/// Step 2: sequential row updates
/// `λ_j ~ N_q((D_j⁻¹ + ‖v^(j)‖² I)⁻¹ w_j, (D_j⁻¹ + ‖v^(j)‖² I)⁻¹)`
/// with `w_j = Σ_i v_{j,i} u_i^(j)`, keeping `E = U - VΛ` current.
///
/// `variance_inflation` is 1 for the real kernel; the validation harness
/// raises it to check that a broken kernel is caught.
pub fn step2_update_lambda<P: LoadingsPrior + ?Sized>(
    lambda: &mut DMatrix<f64>,
    prior: &P,
    latents: &LatentBlock,
    scratch: &mut SweepScratch,
    variance_inflation: f64,
    rng: &mut RngStream,
) -> Result<()> {
    let (d, q) = lambda.shape();
    let v = &latents.v;
    for j in 0..d {
        let vj = v.column(j);
        let norm = scratch.v_norms[j];
        prior.row_precisions(j, &mut scratch.prec)?;
        // u_i^(j) = e_i + λ_j v_{j,i}  =>  w_j = Eᵀ v^(j) + ‖v^(j)‖² λ_j.
        for h in 0..q {
            scratch.w[h] = scratch.resid.column(h).dot(&vj) + norm * lambda[(j, h)];
        }
        for h in 0..q {
            let precision = scratch.prec[h] + norm;
            let var = 1.0 / precision;
            let mean = if var == 0.0 { 0.0 } else { var * scratch.w[h] };
            let draw = mean + (var * variance_inflation).sqrt() * rvgen::std_normal(rng);
            if !draw.is_finite() {
                return Err(Error::StateCorruption(format!(
                    "loading ({j}, {h}) drew {draw} (prior precision {})",
                    scratch.prec[h]
                )));
            }
            let change = draw - lambda[(j, h)];
            if change != 0.0 {
                scratch.resid.column_mut(h).axpy(-change, &vj, 1.0);
            }
            lambda[(j, h)] = draw;
        }
    }
    Ok(())
}

/// `log ∫ N_n(v; 0, δ⁻² I) Ga(δ²; shape, rate) dδ²` for a vector with
/// squared norm `sq_norm` and length `n`: a central multivariate Student t.
pub fn log_marginal_gamma_normal(sq_norm: f64, n: usize, shape: f64, rate: f64) -> f64 {
    let half_n = 0.5 * n as f64;
    -half_n * (2.0 * std::f64::consts::PI).ln() + shape * rate.ln() - ln_gamma(shape) + ln_gamma(shape + half_n)
        - (shape + half_n) * (rate + 0.5 * sq_norm).ln()
}

/// Unnormalised log assignment weights of one variable: one entry per
/// cluster in `counts` (size without the variable, zero for empty slots,
/// which get `-inf`) followed by the weight of a new cluster.
pub fn assignment_log_weights(
    sq_norm: f64,
    n: usize,
    counts: &[usize],
    sums: &[f64],
    alpha: f64,
    hyper: &Hyperparams,
) -> Vec<f64> {
    let half_n = 0.5 * n as f64;
    let mut out = Vec::with_capacity(counts.len() + 1);
    for (&c, &s) in counts.iter().zip(sums) {
        if c == 0 {
            out.push(f64::NEG_INFINITY);
        } else {
            let shape = hyper.a_delta + half_n * c as f64;
            let rate = hyper.b_delta + 0.5 * s;
            out.push((c as f64).ln() + log_marginal_gamma_normal(sq_norm, n, shape, rate));
        }
    }
    out.push(alpha.ln() + log_marginal_gamma_normal(sq_norm, n, hyper.a_delta, hyper.b_delta));
    out
}

/// Normalised probabilities from log weights.
pub fn softmax(log_w: &[f64]) -> Vec<f64> {
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = log_w.iter().map(|&l| (l - top).exp()).collect();
    let total: f64 = p.iter().sum();
    for x in &mut p {
        *x /= total;
    }
    p
}

fn sample_categorical(log_w: &[f64], rng: &mut RngStream) -> usize {
    let p = softmax(log_w);
    let mut t = rng.open01();
    for (i, &x) in p.iter().enumerate() {
        if t < x {
            return i;
        }
        t -= x;
    }
    // Round-off left a sliver past the last positive weight.
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Step 3: collapsed Pólya-urn reassignment of the cluster labels, fresh
/// cluster precisions `δ*²_r ~ Ga(a_δ + n d_r / 2, b_δ + V_r / 2)`, and
/// `δ_j² = δ*²_{c_j}`. Empty clusters are dropped and labels compacted.
pub fn step3_update_delta(
    dp: &mut DpState,
    v_norms: &[f64],
    n: usize,
    hyper: &Hyperparams,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let d = dp.labels.len();
    if v_norms.len() != d {
        return Err(Error::Dimension(format!("{} column norms for {d} labels", v_norms.len())));
    }
    if let Some(bad) = v_norms.iter().find(|x| !x.is_finite()) {
        return Err(Error::StateCorruption(format!("latent column norm {bad}")));
    }
    let k = dp.uniques.len();
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k];
    for (&c, &s) in dp.labels.iter().zip(v_norms) {
        counts[c] += 1;
        sums[c] += s;
    }
    for j in 0..d {
        let old = dp.labels[j];
        counts[old] -= 1;
        sums[old] -= v_norms[j];
        if counts[old] == 0 {
            sums[old] = 0.0;
        }
        let log_w = assignment_log_weights(v_norms[j], n, &counts, &sums, dp.alpha, hyper);
        let pick = sample_categorical(&log_w, rng);
        let target = if pick == counts.len() {
            match counts.iter().position(|&c| c == 0) {
                Some(slot) => slot,
                None => {
                    counts.push(0);
                    sums.push(0.0);
                    counts.len() - 1
                }
            }
        } else {
            pick
        };
        counts[target] += 1;
        sums[target] += v_norms[j];
        dp.labels[j] = target;
    }

    // Compact to 0..k in order of first appearance.
    let mut remap = vec![usize::MAX; counts.len()];
    let mut live = 0;
    for c in dp.labels.iter_mut() {
        if remap[*c] == usize::MAX {
            remap[*c] = live;
            live += 1;
        }
        *c = remap[*c];
    }
    let mut sizes = vec![0usize; live];
    let mut totals = vec![0.0; live];
    for (&c, &s) in dp.labels.iter().zip(v_norms) {
        sizes[c] += 1;
        totals[c] += s;
    }
    let half_n = 0.5 * n as f64;
    dp.uniques = sizes
        .iter()
        .zip(&totals)
        .map(|(&size, &total)| {
            rvgen::gamma(hyper.a_delta + half_n * size as f64, hyper.b_delta + 0.5 * total, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(dp.labels.iter().map(|&c| dp.uniques[c]).collect())
}

/// Step 4: refresh the DL scales given Λ.
pub fn step4_update_dl(
    dl: &mut DlLocals,
    lambda: &DMatrix<f64>,
    hyper: &Hyperparams,
    kernel: DlKernel,
    rng: &mut RngStream,
) -> Result<()> {
    update_dl(dl, lambda, hyper, kernel, rng)
}

/// Mixture weight π of West's auxiliary-variable α update for a given
/// auxiliary draw `eta ~ Beta(α + 1, d)`.
pub fn alpha_mixture_weight(eta: f64, k: usize, d: usize, hyper: &Hyperparams) -> f64 {
    let odds = (hyper.a_alpha + k as f64 - 1.0) / (d as f64 * (hyper.b_alpha - eta.ln()));
    odds / (1.0 + odds)
}

/// Step 5: `η ~ Beta(α + 1, d)`, then α from the two-component gamma
/// mixture `π Ga(a_α + k, b_α - log η) + (1 - π) Ga(a_α + k - 1, b_α - log η)`.
pub fn step5_update_alpha(dp: &DpState, d: usize, hyper: &Hyperparams, rng: &mut RngStream) -> Result<f64> {
    let k = dp.n_clusters();
    if k == 0 {
        return Err(Error::StateCorruption("no live clusters".into()));
    }
    let eta = rvgen::beta(dp.alpha + 1.0, d as f64, rng)?;
    let rate = hyper.b_alpha - eta.ln();
    let pi = alpha_mixture_weight(eta, k, d, hyper);
    let shape = if rng.open01() < pi {
        hyper.a_alpha + k as f64
    } else {
        hyper.a_alpha + k as f64 - 1.0
    };
    rvgen::gamma(shape, rate, rng)
}
