//! Builds a low-rank-plus-diagonal precision matrix and inverts it through
//! the q×q latent system, then checks the product against the identity and
//! the partial correlations against a dense inverse.
//!
//! cargo run --release --example woodbury -- [d] [q]

use nalgebra::DMatrix;
use precfactor::model::{
    assemble_precision, latent_precision, partial_correlation, woodbury_covariance, ModelState,
};
use precfactor::rng::RngStream;
use precfactor::rvgen;

fn main() -> precfactor::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().expect("integer argument"));
    let d = args.next().unwrap_or(200);
    let q = args.next().unwrap_or(20);

    let mut rng = RngStream::new(3, 0);
    let lambda = DMatrix::from_fn(d, q, |_, _| 0.3 * rvgen::std_normal(&mut rng));
    let delta = (0..d).map(|_| rvgen::gamma(5.0, 5.0, &mut rng)).collect::<Result<Vec<_>, _>>()?;
    let state = ModelState::from_parts(lambda, delta)?;

    let omega = assemble_precision(&state);
    let sigma = woodbury_covariance(&state)?;
    let err = (&omega * &sigma - DMatrix::identity(d, d)).amax();
    println!("d = {d}, q = {q}");
    println!("max |Omega * Sigma - I|        = {err:.3e}");

    let dense = omega.clone().cholesky().expect("SPD").inverse();
    println!("max |Sigma - dense inverse|    = {:.3e}", (&sigma - dense).amax());

    let p = latent_precision(&state.lambda, &state.delta);
    let min_eig = p.symmetric_eigenvalues().min();
    println!("smallest eigenvalue of P        = {min_eig:.4} (never below 1)");

    let rho = partial_correlation(&omega)?;
    let off = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)));
    let largest = off.map(|(i, j)| rho[(i, j)].abs()).fold(0.0, f64::max);
    println!("largest |partial correlation|   = {largest:.4}");
    Ok(())
}
