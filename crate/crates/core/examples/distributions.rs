//! Draws from each random-variate engine and compares sample moments with
//! their closed forms.
//!
//! cargo run --release --example distributions

use precfactor::rng::RngStream;
use precfactor::rvgen::{self, GigParams};

fn moments(mut f: impl FnMut(&mut RngStream) -> f64, rng: &mut RngStream, n: usize) -> (f64, f64) {
    let x: Vec<f64> = (0..n).map(|_| f(rng)).collect();
    let m = x.iter().sum::<f64>() / n as f64;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (m, v)
}

fn main() -> precfactor::Result<()> {
    let n = 200_000;
    let mut rng = RngStream::new(1, 0);
    println!("{:<28} {:>10} {:>10} {:>10} {:>10}", "law", "mean", "expected", "variance", "expected");

    let mut row = |name: &str, f: &mut dyn FnMut(&mut RngStream) -> f64, mean: f64, var: f64| {
        let (m, v) = moments(f, &mut rng, n);
        println!("{name:<28} {m:>10.4} {mean:>10.4} {v:>10.4} {var:>10.4}");
    };

    row("Gamma(0.1, 0.1)", &mut |r| rvgen::gamma(0.1, 0.1, r).unwrap(), 1.0, 10.0);
    row("Gamma(2.5, 0.7)", &mut |r| rvgen::gamma(2.5, 0.7, r).unwrap(), 2.5 / 0.7, 2.5 / 0.49);
    row("Exp(1/2)", &mut |r| rvgen::exponential(0.5, r).unwrap(), 2.0, 4.0);
    row("Beta(3, 5)", &mut |r| rvgen::beta(3.0, 5.0, r).unwrap(), 0.375, 15.0 / (64.0 * 9.0));
    row("iG(2, 3)", &mut |r| rvgen::inverse_gaussian(2.0, 3.0, r).unwrap(), 2.0, 8.0 / 3.0);
    // giG(-1/2, a, b) is iG(sqrt(b/a), b).
    row(
        "giG(-1/2, 0.75, 3)",
        &mut |r| rvgen::gig(GigParams::new(-0.5, 0.75, 3.0).unwrap(), r).unwrap(),
        2.0,
        8.0 / 3.0,
    );
    row("N(0, 1)", &mut |r| rvgen::std_normal(r), 0.0, 1.0);

    let phi = rvgen::dirichlet(&[2.0, 3.0, 5.0], &mut rng)?;
    println!("\none Dirichlet(2, 3, 5) draw: {phi:.4?}, sum {:.15}", phi.iter().sum::<f64>());

    // Same seed and stream give the same sequence.
    let a = rvgen::std_normal(&mut RngStream::new(9, 4));
    let b = rvgen::std_normal(&mut RngStream::new(9, 4));
    println!("stream (9, 4) first normal, twice: {a:.6} {b:.6}");
    Ok(())
}
