//! Streams retained draws to the binary store, reads them back and exports
//! the first few to CSV.
//!
//! cargo run --release --example draw_store -- [dir]

use precfactor::graphsel::default_epsilon_grid;
use precfactor::model::{center_columns, Hyperparams};
use precfactor::rng::RngStream;
use precfactor::sampler::{run_chain_with, write_draws_csv, ChainConfig, DrawReader, DrawWriter};
use precfactor::synthbench::{gen_truth, sample_data, TruthKind, TruthSpec};

fn main() -> precfactor::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().display().to_string());
    let stem = std::path::Path::new(&dir).join("example_draws");

    let (d, q) = (8, 3);
    let truth = gen_truth(&TruthSpec::new(TruthKind::ar2(), d), &mut RngStream::new(1, 0))?;
    let y = center_columns(&sample_data(&truth.omega, 60, &mut RngStream::new(1, 1))?);
    let config = ChainConfig {
        iterations: 600,
        burn_in: 100,
        thin: 10,
        seed: 1,
        ..ChainConfig::default()
    };

    let mut writer = DrawWriter::create(&stem, d, q)?;
    run_chain_with(&y, &Hyperparams::with_rank(q), &config, &default_epsilon_grid(), |_, draw| writer.write(draw))?;
    let meta = writer.finish()?;
    println!("wrote {} records of {} bytes to {}", meta.n_records, meta.record_bytes, stem.with_extension("bin").display());

    let draws = DrawReader::open(&stem)?.collect::<precfactor::Result<Vec<_>>>()?;
    let iters: Vec<usize> = draws.iter().map(|d| d.iteration).collect();
    println!("iterations {:?} ... {:?}", &iters[..3], iters.last().unwrap());
    let mean_alpha = draws.iter().map(|d| d.alpha).sum::<f64>() / draws.len() as f64;
    let clusters = draws.iter().map(|d| d.labels.iter().max().unwrap() + 1).max().unwrap();
    println!("posterior mean alpha {mean_alpha:.3}, at most {clusters} variance clusters");

    let csv = stem.with_extension("csv");
    write_draws_csv(&csv, &draws[..5])?;
    println!("first five draws exported to {}", csv.display());
    Ok(())
}
