//! Joint-distribution check of the Gibbs kernel, with and without an
//! injected fault in the loading update.
//!
//! cargo run --release --example geweke -- [rounds]

use precfactor::model::Hyperparams;
use precfactor::sampler::{run_geweke, Fault, GewekeConfig, GewekeDims, GewekeReport, KernelOptions};

fn print(label: &str, report: &GewekeReport) {
    println!("{label}");
    println!("  {:<16} {:>12} {:>12} {:>8}", "statistic", "marginal", "successive", "z");
    for s in &report.stats {
        println!(
            "  {:<16} {:>12.5} {:>12.5} {:>8.2}",
            s.name, s.mean_marginal, s.mean_successive, s.z
        );
    }
    if let Some((round, err)) = &report.diverged {
        println!("  successive chain failed at round {round}: {err}");
    }
    println!("  max |z| = {:.2}\n", report.max_abs_z());
}

fn main() -> precfactor::Result<()> {
    let rounds = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20_000);
    let dims = GewekeDims::default();
    let hyper = Hyperparams::with_rank(dims.q);

    let config = GewekeConfig::new(hyper, dims, rounds);
    print("default kernel", &run_geweke(&config)?);

    let mut faulty = config;
    faulty.options = KernelOptions {
        fault: Some(Fault::InflateLoadingVariance(2.0)),
        ..KernelOptions::default()
    };
    print("loading variance doubled", &run_geweke(&faulty)?);
    Ok(())
}
