//! Chooses the factor rank from the leading singular values of centred
//! data, for a few cumulative-variance thresholds.
//!
//! cargo run --release --example select_rank

use precfactor::model::{center_columns, default_max_rank, select_q, top_singular_values, RankRule};
use precfactor::rng::RngStream;
use precfactor::synthbench::{gen_truth, sample_data, TruthKind, TruthSpec};

fn main() -> precfactor::Result<()> {
    let (d, n) = (50, 100);
    for kind in [TruthKind::ar2(), TruthKind::banded(), TruthKind::rsm()] {
        let truth = gen_truth(&TruthSpec::new(kind.clone(), d), &mut RngStream::new(5, 0))?;
        let y = center_columns(&sample_data(&truth.omega, n, &mut RngStream::new(5, 1))?);
        let max_rank = default_max_rank(n, d);
        let sv = top_singular_values(&y, 5);
        print!("{:<7} leading singular values {:.2?}; q at", kind.label(), sv);
        for threshold in [0.5, 0.8, 0.95] {
            print!("  {threshold}: {}", select_q(&y, threshold, max_rank, RankRule::default())?);
        }
        println!();
    }
    Ok(())
}
