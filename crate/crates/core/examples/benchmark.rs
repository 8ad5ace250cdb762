//! Replicated simulation study over the three truth families, appending one
//! row per replication to a results CSV.
//!
//! cargo run --release --example benchmark -- [reps] [results.csv]

use precfactor::synthbench::{append_results, run_replication, BenchDesign, TruthKind};
use precfactor::sampler::ChainConfig;

fn main() -> precfactor::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps: usize = args.next().map(|s| s.parse().expect("integer")).unwrap_or(2);
    let out = args.next().unwrap_or_else(|| "benchmark_results.csv".into());

    println!("{:<7} {:>3} {:>3} {:>10} {:>11} {:>11} {:>8}", "kind", "rep", "q", "frobenius", "sensitivity", "specificity", "seconds");
    for kind in [TruthKind::ar2(), TruthKind::banded(), TruthKind::rsm()] {
        let mut design = BenchDesign::new(kind, 7);
        design.truth.d = 30;
        design.chain = ChainConfig {
            iterations: 2000,
            burn_in: 500,
            ..ChainConfig::default()
        };
        for rep in 0..reps {
            let r = run_replication(&design, rep)?;
            let row = r.results_row(&design);
            println!(
                "{:<7} {:>3} {:>3} {:>10.4} {:>11.3} {:>11.3} {:>8.2}",
                row.kind, row.rep, r.q, row.frobenius, row.sensitivity, row.specificity, row.runtime_seconds
            );
            append_results(&out, &[row])?;
        }
    }
    println!("rows appended to {out}");
    Ok(())
}
