//! Multi-stage width search: coarse-to-fine narrowing under a decaying
//! FLOPs budget.
//!
//! One-shot search over a finely binned space wastes supernet capacity on
//! widths that will never fit the budget. The multi-stage loop instead
//! starts with coarse bins and the full-width budget, and at each stage
//! halves the minimum bin size (finer bins) while the budget decays
//! linearly toward the target; each stage re-trains a supernet on the
//! narrowed graph from the previous winner.
//!
//! Run with: cargo run --example multi_stage

use cafewidth::archgraph::network_flops;
use cafewidth::binplan::{make_schedule, Rational};
use cafewidth::dataset::{gaussian_blobs, split_dataset};
use cafewidth::searcher::{multi_stage_search, EvoConfig};
use cafewidth::toy::dense_chain;
use cafewidth::trainer::TrainConfig;

fn main() -> cafewidth::Result<()> {
    let data = gaussian_blobs(5, 10, 600, 1.0, 9)?;
    let splits = split_dataset(&data, 0)?;
    let graph = dense_chain(10, &[16, 16], 5)?;

    let full = network_flops(&graph, &graph.full_widths())?;
    let target = (full as f64 * 0.22) as u64;
    let schedule = make_schedule(full, target, 3, Rational::from_int(4), Rational::from_int(2))?;
    println!("full {full} MACs -> target {target} MACs over {} stages", schedule.stages);

    let mut tc = TrainConfig::desk_default();
    tc.epochs = 14;
    tc.seed = 17;
    let evo = EvoConfig {
        population: 10,
        generations: 6,
        seed: 17,
        ..EvoConfig::full_scale_default()
    };

    let outcome = multi_stage_search(&graph, &schedule, &tc, &evo, &splits)?;
    for st in &outcome.stages {
        println!(
            "stage {}: beta {:>4}, budget {:>4} MACs, bins {:?}, space {} -> keep {:?} (acc {:.3}, {} MACs)",
            st.stage,
            st.beta.to_f64(),
            st.budget,
            st.bin_counts,
            st.space_size,
            st.winner.width,
            st.winner.accuracy,
            st.winner.flops
        );
    }
    println!(
        "\nfinal width {:?}: {:.3} validation accuracy at {} MACs ({:.0}% of full)",
        outcome.final_width,
        outcome.final_accuracy,
        outcome.final_flops,
        100.0 * outcome.final_flops as f64 / full as f64
    );
    Ok(())
}
