//! Does the shared-weight supernet rank widths the way from-scratch
//! training would?
//!
//! The whole point of a one-shot supernet is to stand in for thousands of
//! independent training runs, so its usefulness is measured by rank
//! fidelity, not absolute accuracy. This example trains every width of a
//! small search space from scratch (the oracle), trains one supernet with
//! the fixed channel pattern (offset 0) and one with locally free
//! assignments (offset 1), and compares their Kendall tau-b rank
//! correlation against the oracle.
//!
//! Run with: cargo run --example rank_fidelity

use cafewidth::binplan::{plan_bins, widths_from_bins, Rational};
use cafewidth::dataset::{gaussian_blobs, split_dataset};
use cafewidth::searcher::{enumerate_space, rank_correlation, retrain_from_scratch};
use cafewidth::sharing::CandidatePolicy;
use cafewidth::sharing::Offset;
use cafewidth::toy::dense_chain;
use cafewidth::trainer::{train_supernet, TrainConfig};

fn main() -> cafewidth::Result<()> {
    let data = gaussian_blobs(6, 8, 480, 0.9, 21)?;
    let splits = split_dataset(&data, 0)?;
    let graph = dense_chain(8, &[12, 12], 6)?;
    let plan = plan_bins(&graph, Rational::from_int(3))?;

    // The whole space: every bin combination.
    let widths: Vec<_> = enumerate_space(&plan, usize::MAX)?
        .into_iter()
        .map(|bins| widths_from_bins(&plan, &bins))
        .collect::<cafewidth::Result<_>>()?;
    println!("space: {} widths from bins {:?}", widths.len(), plan.bin_counts());

    // Oracle: train each width from scratch and record test accuracy.
    let mut oracle_cfg = TrainConfig::desk_default();
    oracle_cfg.epochs = 8;
    oracle_cfg.seed = 100;
    let mut oracle = Vec::with_capacity(widths.len());
    for w in &widths {
        let out = retrain_from_scratch(&graph, w, &oracle_cfg, &splits)?;
        oracle.push(out.accuracy);
        println!("  oracle {:?}: {:.3}", w.channels(), out.accuracy);
    }

    // Supernets at both sharing modes, several seeds each, ranking the
    // same widths against the oracle.
    let seeds = [5u64, 6, 7];
    println!();
    for (r, label) in [(0usize, "fixed pattern (r=0)"), (1, "locally free (r=1)")] {
        let mut taus = Vec::new();
        for &seed in &seeds {
            let mut tc = TrainConfig::desk_default();
            tc.epochs = 8;
            tc.offset = r;
            tc.seed = seed;
            let trained = train_supernet(&graph, &plan, &tc, &splits.train, None)?;
            let (tau, _) = rank_correlation(
                &trained.state,
                &graph,
                &plan,
                Offset(r),
                CandidatePolicy::SharedCombination,
                seed,
                &widths,
                &oracle,
                &splits.val,
            )?;
            taus.push(tau);
        }
        let mean = taus.iter().sum::<f64>() / taus.len() as f64;
        let per_seed: Vec<String> = taus.iter().map(|t| format!("{t:+.3}")).collect();
        println!("{label}: mean Kendall tau-b = {mean:+.3}  (per seed: {})", per_seed.join(", "));
    }
    println!("\n(+1 = identical ranking, 0 = unrelated, -1 = reversed)");
    Ok(())
}
