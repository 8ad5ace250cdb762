//! The seam between the loading update and whatever shrinkage prior sits
//! on Λ.
//!
//! Any prior that is a Gaussian scale mixture on the entries of Λ plugs in
//! here: the row update only needs the current prior precisions of one row,
//! and the prior only needs Λ to refresh its own scales. The Dirichlet–Laplace
//! prior is the one concrete implementation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{DlLocals, Hyperparams};
use crate::rng::RngStream;
use crate::rvgen::{self, GigParams, MAGNITUDE_FLOOR};

pub trait LoadingsPrior {
    /// Writes the conditional prior precisions `1 / Var(λ_{j,h})` of row j.
    fn row_precisions(&self, j: usize, out: &mut [f64]) -> Result<()>;

    /// Redraws the prior's own scales given the loadings.
    fn update(&mut self, lambda: &DMatrix<f64>, hyper: &Hyperparams, rng: &mut RngStream) -> Result<()>;
}

/// Which form of the τ and φ conditionals to use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DlConditionals {
    /// `τ ~ giG(dq(a - 1), 2b, ·)` and `T ~ giG(a - 1, 2b, ·)`, the exact
    /// conditionals under `τ ~ Ga(dq·a, b)`.
    #[default]
    Derived,
    /// `τ ~ giG(dq(1 - a), 2b, ·)` and `T ~ giG(a - 1, 1, ·)`. Kept for
    /// diagnostics; not invariant for the prior unless `a = 1/2 = b`.
    AsPrinted,
}

/// Order in which the three DL scale blocks are refreshed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DlUpdateOrder {
    /// φ | Λ, then τ | φ, Λ, then ψ | τ, φ, Λ: a joint draw of the scales.
    #[default]
    Composition,
    /// ψ, τ, φ, in the order the conditionals are usually listed.
    Listed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DlKernel {
    pub order: DlUpdateOrder,
    pub conditionals: DlConditionals,
}

impl LoadingsPrior for DlLocals {
    fn row_precisions(&self, j: usize, out: &mut [f64]) -> Result<()> {
        for (h, slot) in out.iter_mut().enumerate() {
            let var = self.prior_variance(j, h);
            if var.is_nan() || var.is_infinite() {
                return Err(Error::StateCorruption(format!(
                    "prior variance of loading ({j}, {h}) is {var}"
                )));
            }
            // A variance that underflowed to zero pins the loading at zero.
            *slot = 1.0 / var;
        }
        Ok(())
    }

    fn update(&mut self, lambda: &DMatrix<f64>, hyper: &Hyperparams, rng: &mut RngStream) -> Result<()> {
        update_dl(self, lambda, hyper, DlKernel::default(), rng)
    }
}

/// Refreshes ψ, τ and φ given Λ.
pub fn update_dl(
    dl: &mut DlLocals,
    lambda: &DMatrix<f64>,
    hyper: &Hyperparams,
    kernel: DlKernel,
    rng: &mut RngStream,
) -> Result<()> {
    if lambda.iter().any(|x| !x.is_finite()) {
        return Err(Error::StateCorruption("non-finite loading entering the DL update".into()));
    }
    let form = kernel.conditionals;
    match kernel.order {
        DlUpdateOrder::Composition => {
            update_phi(dl, lambda, hyper, form, rng)?;
            update_tau(dl, lambda, hyper, form, rng)?;
            update_psi(dl, lambda, rng)
        }
        DlUpdateOrder::Listed => {
            update_psi(dl, lambda, rng)?;
            update_tau(dl, lambda, hyper, form, rng)?;
            update_phi(dl, lambda, hyper, form, rng)
        }
    }
}

#[inline]
fn magnitude(x: f64) -> f64 {
    x.abs().max(MAGNITUDE_FLOOR)
}

/// `1/ψ_{j,h} ~ iG(τ φ_{j,h} / |λ_{j,h}|, 1)`.
pub fn update_psi(dl: &mut DlLocals, lambda: &DMatrix<f64>, rng: &mut RngStream) -> Result<()> {
    let (d, q) = lambda.shape();
    for h in 0..q {
        for j in 0..d {
            let mu = dl.tau * dl.phi[(j, h)] / magnitude(lambda[(j, h)]);
            let inv = rvgen::inverse_gaussian(mu.min(f64::MAX), 1.0, rng)?;
            dl.psi[(j, h)] = (1.0 / inv).max(f64::MIN_POSITIVE);
        }
    }
    Ok(())
}

/// `τ ~ giG(dq(a - 1), 2b, 2 Σ |λ_{j,h}| / φ_{j,h})`, ψ integrated out.
pub fn update_tau(
    dl: &mut DlLocals,
    lambda: &DMatrix<f64>,
    hyper: &Hyperparams,
    form: DlConditionals,
    rng: &mut RngStream,
) -> Result<()> {
    let (d, q) = lambda.shape();
    let ratio: f64 = lambda
        .iter()
        .zip(dl.phi.iter())
        .map(|(l, p)| magnitude(*l) / p)
        .sum();
    let exponent = match form {
        DlConditionals::Derived => hyper.a - 1.0,
        DlConditionals::AsPrinted => 1.0 - hyper.a,
    };
    let params = GigParams::new(
        (d * q) as f64 * exponent,
        2.0 * hyper.b,
        (2.0 * ratio).min(f64::MAX),
    )?;
    dl.tau = rvgen::gig(params, rng)?;
    Ok(())
}

/// `T_{j,h} ~ giG(a - 1, 2b, 2|λ_{j,h}|)`, `φ = T / ΣT`, with τ and ψ
/// integrated out (`τφ_{j,h}` are iid `Ga(a, b)` a priori).
pub fn update_phi(
    dl: &mut DlLocals,
    lambda: &DMatrix<f64>,
    hyper: &Hyperparams,
    form: DlConditionals,
    rng: &mut RngStream,
) -> Result<()> {
    let rate = match form {
        DlConditionals::Derived => 2.0 * hyper.b,
        DlConditionals::AsPrinted => 1.0,
    };
    let mut total = 0.0;
    for (slot, l) in dl.phi.iter_mut().zip(lambda.iter()) {
        let t = rvgen::gig(GigParams::new(hyper.a - 1.0, rate, 2.0 * magnitude(*l))?, rng)?;
        *slot = t;
        total += t;
    }
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::StateCorruption(format!("DL simplex normaliser is {total}")));
    }
    for slot in dl.phi.iter_mut() {
        *slot = (*slot / total).max(f64::MIN_POSITIVE);
    }
    Ok(())
}
