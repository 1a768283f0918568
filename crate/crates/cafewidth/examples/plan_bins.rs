//! FLOPs-sensitive bin planning and multi-stage budget schedules.
//!
//! Channel groups that cost many MACs per channel get coarse bins (few,
//! large steps); cheap groups get fine bins. The example plans bins for a
//! small CNN at several granularity multipliers, sizes the resulting
//! search spaces, and prints a three-stage budget/granularity schedule.
//!
//! Run with: cargo run --example plan_bins

use cafewidth::archgraph::{network_flops, sensitivities};
use cafewidth::binplan::{format_scientific, make_schedule, plan_bins, search_space_size, Rational};
use cafewidth::toy::patch_cnn;

fn main() -> cafewidth::Result<()> {
    let graph = patch_cnn(16, 10)?;
    let eps = sensitivities(&graph);
    println!("group sensitivities: {eps:?}  (MACs per channel)");

    for beta in [1u64, 2, 4] {
        let plan = plan_bins(&graph, Rational::from_int(beta))?;
        println!("\nbeta = {beta}:");
        for gb in &plan.groups {
            println!(
                "  {:>3}: bin size {:>2}, {:>2} bins, widths {:?}",
                gb.group, gb.bin_size, gb.bin_count, gb.boundaries
            );
        }
        let size = search_space_size(std::slice::from_ref(&plan))?;
        println!("  search space: {} width vectors", format_scientific(&size));
    }

    // A budget schedule walks granularity and FLOPs budget together:
    // each stage doubles granularity (beta halves) while the budget
    // decays linearly from the full network to the final target.
    let full = network_flops(&graph, &graph.full_widths())?;
    let target = full / 2;
    let schedule = make_schedule(full, target, 3, Rational::from_int(4), Rational::from_int(2))?;
    println!("\nthree-stage schedule from {full} down to {target} MACs:");
    for t in 1..=schedule.stages {
        println!(
            "  stage {}: beta = {}, budget = {} MACs",
            t,
            schedule.betas[t - 1].to_f64(),
            schedule.budgets[t]
        );
    }
    Ok(())
}
