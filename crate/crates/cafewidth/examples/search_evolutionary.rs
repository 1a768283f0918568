//! Budgeted width search over a trained supernet.
//!
//! Trains one weight-sharing supernet, then searches the width space for
//! the most accurate sub-network whose FLOPs fit a 55% budget — first by
//! seeded random sampling, then with the evolutionary loop (tournament
//! selection, uniform crossover, per-group mutation, repair to budget).
//! Both searches score widths with locally free evaluation: each width is
//! judged by the best of its channel assignments, without retraining.
//!
//! Run with: cargo run --example search_evolutionary

use cafewidth::archgraph::network_flops;
use cafewidth::binplan::{plan_bins, Rational};
use cafewidth::dataset::{gaussian_blobs, split_dataset};
use cafewidth::searcher::{evolutionary_search, random_search, uniform_baseline, EvoConfig};
use cafewidth::sharing::{CandidatePolicy, Offset};
use cafewidth::toy::dense_chain;
use cafewidth::trainer::{train_supernet, TrainConfig};

fn main() -> cafewidth::Result<()> {
    let data = gaussian_blobs(4, 8, 420, 0.8, 11)?;
    let splits = split_dataset(&data, 0)?;
    let graph = dense_chain(8, &[16, 16, 12], 4)?;
    let plan = plan_bins(&graph, Rational::from_int(1))?;

    let full = network_flops(&graph, &graph.full_widths())?;
    let budget = (full as f64 * 0.55) as u64;
    println!("full network: {full} MACs; budget: {budget} MACs (55%)");
    println!("bins per group: {:?}", plan.bin_counts());

    let mut tc = TrainConfig::desk_default();
    tc.epochs = 10;
    tc.seed = 3;
    let trained = train_supernet(&graph, &plan, &tc, &splits.train, None)?;
    println!("supernet trained for {} iterations", trained.log.records.len());

    let r = Offset(1);
    let policy = CandidatePolicy::SharedCombination;

    let rand = random_search(&trained.state, &graph, &plan, budget, 40, r, policy, 5, &splits.val)?;
    println!(
        "\nrandom search   (40 samples): best {:?}  acc {:.3}  {} MACs",
        rand.best.width, rand.best.accuracy, rand.best.flops
    );

    let evo = EvoConfig {
        population: 8,
        generations: 10,
        seed: 5,
        ..EvoConfig::full_scale_default()
    };
    let found = evolutionary_search(&trained.state, &graph, &plan, budget, &evo, r, policy, &splits.val)?;
    println!(
        "evolutionary search (8x10) :  best {:?}  acc {:.3}  {} MACs",
        found.best.width, found.best.accuracy, found.best.flops
    );
    println!("  winning channel assignment: {:?}", found.best.pattern);
    println!("  distinct widths evaluated: {}", found.log.len());
    println!("  best-ever accuracy by generation (printed when it improves):");
    let mut last = f64::NEG_INFINITY;
    for gs in &found.generations {
        if gs.best_acc > last {
            println!("    gen {:>2}: {:.3}", gs.generation, gs.best_acc);
            last = gs.best_acc;
        }
    }

    // Reference point: uniform shrinking (same scale for every group).
    let uni = uniform_baseline(&graph, budget)?;
    println!(
        "\nuniform shrink to the same budget keeps {:?} ({} MACs)",
        uni.channels(),
        network_flops(&graph, &uni)?
    );
    println!("searched width re-allocates those MACs across groups.");
    Ok(())
}
