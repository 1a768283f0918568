//! End to end: search a width under a FLOPs budget, retrain it from
//! scratch, and score it against the standard baselines.
//!
//! This is the full deployment recipe on a small CNN and synthetic 8x8
//! striped patches: train the weight-sharing supernet once, search its
//! width space under a 50% MACs budget, retrain the winning width as a
//! standalone network, and compare its test accuracy with (a) uniform
//! shrinking of every group to the same budget and (b) the best of
//! several random widths given a short pre-training audition.
//!
//! Run with: cargo run --example deploy_width

use cafewidth::archgraph::network_flops;
use cafewidth::binplan::{plan_bins, Rational};
use cafewidth::dataset::{split_dataset, striped_patches};
use cafewidth::searcher::{
    evolutionary_search, random_baseline, retrain_from_scratch, uniform_baseline, EvoConfig,
    RandomBaselineConfig,
};
use cafewidth::sharing::{CandidatePolicy, Offset};
use cafewidth::toy::patch_cnn;
use cafewidth::trainer::{train_supernet, TrainConfig};

fn main() -> cafewidth::Result<()> {
    let data = striped_patches(600, 0.2, 13)?;
    let splits = split_dataset(&data, 0)?;
    let graph = patch_cnn(8, 10)?;
    let plan = plan_bins(&graph, Rational::from_int(2))?;

    let full = network_flops(&graph, &graph.full_widths())?;
    let budget = full / 2;
    println!("budget: {budget} of {full} MACs (50%)");

    let mut tc = TrainConfig::desk_default();
    tc.epochs = 20;
    tc.seed = 2;

    // 1. One-shot supernet + evolutionary width search (no retraining
    //    inside the loop: widths are scored through weight sharing).
    let trained = train_supernet(&graph, &plan, &tc, &splits.train, None)?;
    let evo = EvoConfig {
        population: 12,
        generations: 8,
        seed: 2,
        ..EvoConfig::full_scale_default()
    };
    let found = evolutionary_search(
        &trained.state,
        &graph,
        &plan,
        budget,
        &evo,
        Offset(tc.offset),
        CandidatePolicy::SharedCombination,
        &splits.val,
    )?;
    println!(
        "searched width {:?}: supernet val acc {:.3} at {} MACs",
        found.best.width, found.best.accuracy, found.best.flops
    );

    // 2. Retrain the winner from scratch (train+val) and score on test.
    let searched = retrain_from_scratch(&graph, &found.best_width(), &tc, &splits)?;
    println!("retrained from scratch: test acc {:.3}", searched.accuracy);

    // 3. Baseline A: uniform shrink to the same budget, retrained the
    //    same way.
    let uni_width = uniform_baseline(&graph, budget)?;
    let uni = retrain_from_scratch(&graph, &uni_width, &tc, &splits)?;
    println!(
        "uniform baseline {:?}: test acc {:.3} at {} MACs",
        uni.width, uni.accuracy, uni.flops
    );

    // 4. Baseline B: best of random feasible widths after a short
    //    audition, winner retrained identically.
    let protocol = RandomBaselineConfig {
        candidates: 8,
        pre_epochs: 1,
    };
    let rnd = random_baseline(&graph, &plan, budget, &tc, &protocol, 7, &splits)?;
    println!(
        "random baseline  {:?}: test acc {:.3} at {} MACs ({} candidates auditioned)",
        rnd.width,
        rnd.accuracy,
        rnd.flops,
        rnd.candidates.len()
    );

    println!(
        "\nsearched vs uniform: {:+.3}   searched vs random: {:+.3}",
        searched.accuracy - uni.accuracy,
        searched.accuracy - rnd.accuracy
    );
    Ok(())
}
