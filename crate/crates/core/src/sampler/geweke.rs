//! Joint-distribution ("getting it right") check of the Gibbs kernel.
//!
//! Marginal-conditional simulation draws parameters straight from the
//! prior. Successive-conditional simulation alternates one sweep given the
//! current data with a fresh data set given the new parameters. Both target
//! the prior marginal of the parameters, so test functions must agree.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Hyperparams, ModelState};
use crate::rng::RngStream;
use crate::synthbench::sample_lrd_data;

use super::{GibbsSampler, KernelOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GewekeDims {
    pub d: usize,
    pub q: usize,
    pub n: usize,
}

impl Default for GewekeDims {
    fn default() -> Self {
        Self { d: 3, q: 2, n: 5 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GewekeConfig {
    pub dims: GewekeDims,
    pub rounds: usize,
    pub seed: u64,
    pub hyper: Hyperparams,
    pub options: KernelOptions,
}

impl GewekeConfig {
    pub fn new(hyper: Hyperparams, dims: GewekeDims, rounds: usize) -> Self {
        Self {
            dims,
            rounds,
            seed: 0,
            hyper,
            options: KernelOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GewekeStat {
    pub name: &'static str,
    pub mean_marginal: f64,
    pub mean_successive: f64,
    /// Standard error of the difference; the successive side uses batch means.
    pub std_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GewekeReport {
    pub dims: GewekeDims,
    pub rounds: usize,
    pub stats: Vec<GewekeStat>,
    /// Round at which the successive chain failed numerically, with the
    /// error; statistics then cover the rounds before it.
    pub diverged: Option<(usize, String)>,
}

impl GewekeReport {
    /// NaN when the successive chain failed before producing enough rounds.
    pub fn max_abs_z(&self) -> f64 {
        self.stats
            .iter()
            .map(|s| s.z.abs())
            .fold(0.0, |m, z| if m.is_nan() || z.is_nan() { f64::NAN } else { m.max(z) })
    }

    pub fn passed(&self, threshold: f64) -> bool {
        self.diverged.is_none() && self.stats.iter().all(|s| s.z.abs() < threshold)
    }
}

const TEST_FUNCTIONS: [&str; 5] = ["mean_lambda", "mean_lambda_sq", "mean_delta_sq", "n_clusters", "alpha"];

fn test_functions(state: &ModelState) -> [f64; 5] {
    let m = state.lambda.len() as f64;
    [
        state.lambda.sum() / m,
        state.lambda.norm_squared() / m,
        state.delta.iter().sum::<f64>() / state.delta.len() as f64,
        state.dp.n_clusters() as f64,
        state.dp.alpha,
    ]
}

/// Runs both simulators for `config.rounds` rounds each.
pub fn run_geweke(config: &GewekeConfig) -> Result<GewekeReport> {
    let GewekeDims { d, q, n } = config.dims;
    if config.rounds < 100 {
        return Err(Error::Config(format!("need at least 100 Geweke rounds, got {}", config.rounds)));
    }
    if config.hyper.q != q {
        return Err(Error::Config(format!("hyperparameter rank {} differs from q = {q}", config.hyper.q)));
    }
    config.hyper.validate(d)?;
    if n == 0 {
        return Err(Error::Config("Geweke data sets need n >= 1".into()));
    }

    let mut marginal = vec![Vec::with_capacity(config.rounds); TEST_FUNCTIONS.len()];
    let mut rng = RngStream::new(config.seed, 0);
    for _ in 0..config.rounds {
        let state = ModelState::sample_prior(d, &config.hyper, &mut rng)?;
        for (col, g) in marginal.iter_mut().zip(test_functions(&state)) {
            col.push(g);
        }
    }

    let mut successive = vec![Vec::with_capacity(config.rounds); TEST_FUNCTIONS.len()];
    let mut rng = RngStream::new(config.seed, 1);
    let start = ModelState::sample_prior(d, &config.hyper, &mut rng)?;
    let mut sampler = GibbsSampler::from_state(start, config.hyper, rng).with_options(config.options);
    let mut diverged = None;
    for round in 0..config.rounds {
        let (lambda, delta) = (sampler.state().lambda.clone(), sampler.state().delta.clone());
        let step = sample_lrd_data(&lambda, &delta, n, sampler.rng_mut()).and_then(|y| sampler.sweep(&y));
        if let Err(e) = step {
            diverged = Some((round, e.to_string()));
            break;
        }
        for (col, g) in successive.iter_mut().zip(test_functions(sampler.state())) {
            col.push(g);
        }
    }

    let stats = TEST_FUNCTIONS
        .iter()
        .zip(marginal.iter().zip(&successive))
        .map(|(&name, (mc, sc))| {
            let (m1, v1) = mean_var(mc);
            let (m2, se, z) = if sc.len() < 16 {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                let m2 = mean_var(sc).0;
                let se = (v1 / mc.len() as f64 + batch_means_variance(sc) / sc.len() as f64).sqrt();
                (m2, se, if se > 0.0 { (m1 - m2) / se } else { 0.0 })
            };
            GewekeStat {
                name,
                mean_marginal: m1,
                mean_successive: m2,
                std_error: se,
                z,
            }
        })
        .collect();
    Ok(GewekeReport {
        dims: config.dims,
        rounds: config.rounds,
        stats,
        diverged,
    })
}

/// Geweke test with the default kernel and a fixed seed.
pub fn validate_geweke(hyper: Hyperparams, dims: GewekeDims, rounds: usize) -> Result<GewekeReport> {
    run_geweke(&GewekeConfig::new(hyper, dims, rounds))
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Long-run variance estimate `b · Var(batch means)` with about √n batches.
pub fn batch_means_variance(x: &[f64]) -> f64 {
    let n_batches = (x.len() as f64).sqrt().floor().max(2.0) as usize;
    let size = x.len() / n_batches;
    let means: Vec<f64> = x
        .chunks_exact(size)
        .take(n_batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    mean_var(&means).1 * size as f64
}
