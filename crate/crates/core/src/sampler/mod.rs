//! The Gibbs kernel and the machinery that drives it.
//!
//! One sweep runs, strictly in this order:
//!
//! 1. latent pair `(U, V)` given Λ, Δ and the data;
//! 2. rows of Λ, one at a time, given `(U, V)` and the prior scales;
//! 3. cluster labels (collapsed Pólya urn) and cluster precisions of Δ;
//! 4. Dirichlet–Laplace scales ψ, τ, φ given Λ;
//! 5. the DP concentration α given the number of clusters.
//!
//! Only step 1 factorizes a matrix, and only the q×q `I + ΛᵀΔ⁻¹Λ`.

mod geweke;
mod prior;
mod steps;
mod store;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use geweke::{batch_means_variance, run_geweke, validate_geweke, GewekeConfig, GewekeDims, GewekeReport, GewekeStat};
pub use prior::{update_dl, update_phi, update_psi, update_tau, DlConditionals, DlKernel, DlUpdateOrder, LoadingsPrior};
pub use steps::{
    alpha_mixture_weight, assignment_log_weights, log_marginal_gamma_normal, softmax, step1_sample_latents,
    step2_update_lambda, step3_update_delta, step4_update_dl, step5_update_alpha, SweepScratch,
};
pub use store::{read_draws_csv, write_draws_csv, DrawReader, DrawStoreMeta, DrawWriter};

use crate::error::{Error, Result};
use crate::graphsel::EdgePosterior;
use crate::model::{Hyperparams, LatentBlock, ModelState};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 5500,
            burn_in: 1250,
            thin: 5,
            seed: 0,
            n_chains: 1,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin == 0 || self.n_chains == 0 {
            return Err(Error::Config("iterations, thin and n_chains must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }

    /// Draws kept per chain.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    /// Whether the state after 0-based sweep `iteration` is kept.
    pub fn keeps(&self, iteration: usize) -> bool {
        iteration >= self.burn_in && (iteration + 1 - self.burn_in) % self.thin == 0
    }
}

/// Deliberate kernel corruptions used to check that validation catches a
/// broken sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fault {
    /// Multiplies the conditional variance of every loading draw.
    InflateLoadingVariance(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KernelOptions {
    pub dl: DlKernel,
    pub fault: Option<Fault>,
}

impl KernelOptions {
    fn variance_inflation(&self) -> f64 {
        match self.fault {
            Some(Fault::InflateLoadingVariance(f)) => f,
            None => 1.0,
        }
    }
}

/// One retained state.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    /// 0-based sweep index.
    pub iteration: usize,
    pub lambda: DMatrix<f64>,
    pub delta: Vec<f64>,
    pub labels: Vec<usize>,
    pub alpha: f64,
    pub tau: f64,
}

impl Draw {
    pub fn from_state(iteration: usize, state: &ModelState) -> Self {
        Self {
            iteration,
            lambda: state.lambda.clone(),
            delta: state.delta.clone(),
            labels: state.dp.labels.clone(),
            alpha: state.dp.alpha,
            tau: state.dl.tau,
        }
    }
}

/// A single chain's Gibbs kernel and its state.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    hyper: Hyperparams,
    state: ModelState,
    rng: RngStream,
    options: KernelOptions,
    factorizations: u64,
    sweeps: u64,
}

impl GibbsSampler {
    /// Starts from the default initial state.
    pub fn new(d: usize, hyper: Hyperparams, mut rng: RngStream) -> Result<Self> {
        hyper.validate(d)?;
        let state = ModelState::initial(d, hyper.q, &mut rng);
        Ok(Self::from_state(state, hyper, rng))
    }

    pub fn from_state(state: ModelState, hyper: Hyperparams, rng: RngStream) -> Self {
        Self {
            hyper,
            state,
            rng,
            options: KernelOptions::default(),
            factorizations: 0,
            sweeps: 0,
        }
    }

    pub fn with_options(mut self, options: KernelOptions) -> Self {
        self.options = options;
        self
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ModelState {
        &mut self.state
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn rng_mut(&mut self) -> &mut RngStream {
        &mut self.rng
    }

    /// q×q factorizations performed so far.
    pub fn factorizations(&self) -> u64 {
        self.factorizations
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    /// One full sweep of steps 1–5 against data `y` (n×d).
    pub fn sweep(&mut self, y: &DMatrix<f64>) -> Result<()> {
        let latents = step1_sample_latents(&self.state, y, &mut self.rng)?;
        self.factorizations += 1;
        self.sweep_given_latents(&latents)?;
        Ok(())
    }

    /// Steps 2–5 for an already drawn latent pair.
    pub fn sweep_given_latents(&mut self, latents: &LatentBlock) -> Result<SweepScratch> {
        let n = latents.v.nrows();
        let mut scratch = SweepScratch::new(latents, &self.state.lambda);
        let ModelState { lambda, dl, dp, delta } = &mut self.state;
        step2_update_lambda(
            lambda,
            &*dl,
            latents,
            &mut scratch,
            self.options.variance_inflation(),
            &mut self.rng,
        )?;
        *delta = step3_update_delta(dp, &scratch.v_norms, n, &self.hyper, &mut self.rng)?;
        step4_update_dl(dl, lambda, &self.hyper, self.options.dl, &mut self.rng)?;
        dp.alpha = step5_update_alpha(dp, lambda.nrows(), &self.hyper, &mut self.rng)?;
        self.sweeps += 1;
        Ok(scratch)
    }
}

/// What a finished chain (or set of chains) reports besides its draws.
#[derive(Debug, Clone)]
pub struct ChainSummary {
    pub posterior: EdgePosterior,
    pub retained: usize,
    pub sweeps: u64,
    pub factorizations: u64,
    pub final_states: Vec<ModelState>,
}

/// Runs the configured chains, handing every retained draw to `sink`
/// (chain index first) and streaming it into the edge posterior.
///
/// Chains use stream ids `0..n_chains` of the configured seed; with more
/// than one chain they run on separate threads and are merged in chain
/// order, so the result does not depend on scheduling.
pub fn run_chain_with<F>(
    y: &DMatrix<f64>,
    hyper: &Hyperparams,
    config: &ChainConfig,
    epsilon_grid: &[f64],
    mut sink: F,
) -> Result<ChainSummary>
where
    F: FnMut(usize, &Draw) -> Result<()>,
{
    config.validate()?;
    let (n, d) = y.shape();
    if n < 2 {
        return Err(Error::Data(format!("need at least two observations, got {n}")));
    }
    if y.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("data contain non-finite values".into()));
    }
    hyper.validate(d)?;

    if config.n_chains == 1 {
        let mut post = EdgePosterior::new(d, epsilon_grid.to_vec())?;
        let (state, stats) = run_single(y, hyper, config, 0, |draw| {
            post.accumulate(&draw.lambda, &draw.delta)?;
            sink(0, draw)
        })?;
        return Ok(ChainSummary {
            posterior: post,
            retained: stats.0,
            sweeps: stats.1,
            factorizations: stats.2,
            final_states: vec![state],
        });
    }

    let results: Vec<Result<(Vec<Draw>, EdgePosterior, ModelState, (usize, u64, u64))>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..config.n_chains)
            .map(|c| {
                s.spawn(move || {
                    let mut post = EdgePosterior::new(d, epsilon_grid.to_vec())?;
                    let mut draws = Vec::new();
                    let (state, stats) = run_single(y, hyper, config, c as u64, |draw| {
                        post.accumulate(&draw.lambda, &draw.delta)?;
                        draws.push(draw.clone());
                        Ok(())
                    })?;
                    Ok((draws, post, state, stats))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    });

    let mut merged = EdgePosterior::new(d, epsilon_grid.to_vec())?;
    let mut summary = ChainSummary {
        posterior: EdgePosterior::new(d, epsilon_grid.to_vec())?,
        retained: 0,
        sweeps: 0,
        factorizations: 0,
        final_states: Vec::new(),
    };
    for (c, res) in results.into_iter().enumerate() {
        let (draws, post, state, (kept, sweeps, facts)) = res?;
        for draw in &draws {
            sink(c, draw)?;
        }
        merged.merge(&post)?;
        summary.retained += kept;
        summary.sweeps += sweeps;
        summary.factorizations += facts;
        summary.final_states.push(state);
    }
    summary.posterior = merged;
    Ok(summary)
}

/// Runs the chains and keeps every retained draw in memory.
pub fn run_chain(
    y: &DMatrix<f64>,
    hyper: &Hyperparams,
    config: &ChainConfig,
    epsilon_grid: &[f64],
) -> Result<(Vec<Draw>, ChainSummary)> {
    let mut draws = Vec::with_capacity(config.retained() * config.n_chains);
    let summary = run_chain_with(y, hyper, config, epsilon_grid, |_, draw| {
        draws.push(draw.clone());
        Ok(())
    })?;
    Ok((draws, summary))
}

fn run_single<F>(
    y: &DMatrix<f64>,
    hyper: &Hyperparams,
    config: &ChainConfig,
    stream_id: u64,
    mut on_draw: F,
) -> Result<(ModelState, (usize, u64, u64))>
where
    F: FnMut(&Draw) -> Result<()>,
{
    let d = y.ncols();
    let mut sampler = GibbsSampler::new(d, *hyper, RngStream::new(config.seed, stream_id))?;
    let mut kept = 0;
    for it in 0..config.iterations {
        sampler.sweep(y).map_err(|e| e.at_iteration(it))?;
        if config.keeps(it) {
            let draw = Draw::from_state(it, sampler.state());
            on_draw(&draw).map_err(|e| e.at_iteration(it))?;
            kept += 1;
        }
    }
    let stats = (kept, sampler.sweeps(), sampler.factorizations());
    Ok((sampler.state, stats))
}
