//! Acceptance suite: one test per numbered criterion, each printing a
//! single pass/fail line (visible with `--nocapture` or `--show-output`)
//! and enforcing its own wall-clock limit. Criteria run serialized so the
//! timings are not polluted by sibling tests.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::Instant;

use cafewidth::archgraph::{network_flops, sensitivities, NetworkGraph, WidthVector};
use cafewidth::binplan::{
    make_schedule, plan_bins, plan_uniform_bins, search_space_size, widths_from_bins, BinPlan,
    Rational,
};
use cafewidth::dataset::{gaussian_blobs, split_dataset, striped_patches};
use cafewidth::nnkernel::{
    activation_margin, loss_and_gradients, masked_forward, verify_flops_oracle, Selection,
    SupernetState,
};
use cafewidth::searcher::{
    enumerate_space, evaluate_width, evolutionary_search, exhaustive_search, random_baseline,
    random_search, rank_correlation, retrain_from_scratch, uniform_baseline, EvoConfig,
    RandomBaselineConfig,
};
use cafewidth::sharing::{
    base_len, enumerate_assignments, fixed_assignment, sharing_degree, AssignmentPattern,
    CandidatePolicy, GroupAssignment, IndexSet, Offset,
};
use cafewidth::toy::{dense_chain, patch_cnn, random_batch, random_graph, tiny_cnn};
use cafewidth::trainer::{
    replay_training, train_fixed_pattern, train_supernet, LrSchedule, TrainConfig, TrainLog,
};

static SERIAL: Mutex<()> = Mutex::new(());

/// Run one criterion body under the global lock, time it, and print
/// exactly one pass/fail line.
fn criterion(number: usize, name: &str, limit_s: f64, body: impl FnOnce()) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let dt = t0.elapsed().as_secs_f64();
    match &outcome {
        Ok(()) if dt < limit_s => {
            println!("criterion {number:>2} ({name}): PASS in {dt:.2}s (limit {limit_s}s)")
        }
        Ok(()) => println!("criterion {number:>2} ({name}): FAIL — exceeded {limit_s}s ({dt:.2}s)"),
        Err(_) => println!("criterion {number:>2} ({name}): FAIL after {dt:.2}s"),
    }
    if let Err(panic) = outcome {
        std::panic::resume_unwind(panic);
    }
    assert!(dt < limit_s, "criterion {number} exceeded {limit_s}s: took {dt:.2}s");
}

// ---------------------------------------------------------------------------
// 1. Sharing-degree identity and lower bound
// ---------------------------------------------------------------------------

#[test]
fn a01_sharing_degree_identity_and_bound() {
    criterion(1, "sharing degree identity and bound", 1.0, || {
        // Fixed patterns are nested prefixes: degree exactly 1 for every
        // pair of widths at every group size up to 64.
        let one = Rational::from_int(1);
        for total in 1..=64usize {
            for c in 1..=total {
                for c2 in 1..=total {
                    let a = fixed_assignment(c, total).unwrap();
                    let b = fixed_assignment(c2, total).unwrap();
                    assert_eq!(sharing_degree(&a, &b).unwrap(), one, "fixed({c}) vs fixed({c2}) of {total}");
                }
            }
        }

        // Locally free assignments: c_b/c <= degree <= 1 over every pair
        // of assignments of every width pair, for each offset, at several
        // group sizes.
        for total in [3usize, 6, 10, 14] {
            for r in 1..=3usize {
                let per_width: Vec<Vec<IndexSet>> = (1..=total)
                    .map(|c| enumerate_assignments(c, Offset(r), total).unwrap())
                    .collect();
                for c in 1..=total {
                    for c2 in 1..=total {
                        let cmin = c.min(c2);
                        let bound = Rational::new(base_len(cmin, Offset(r)) as u64, cmin as u64).unwrap();
                        for a in &per_width[c - 1] {
                            for b in &per_width[c2 - 1] {
                                let d = sharing_degree(a, b).unwrap();
                                assert!(
                                    d.ratio() >= bound.ratio() && d.ratio() <= one.ratio(),
                                    "degree {} outside [{}, 1] for c={c}, c~={c2}, r={r}, B={total}",
                                    d.to_f64(),
                                    bound.to_f64()
                                );
                            }
                        }
                    }
                }
            }
        }

        // At the full 64-unit size, verify the mechanism behind the bound
        // on every single assignment: each one contains the mandatory
        // prefix [1, c-r-1], which is what guarantees the overlap.
        let total = 64usize;
        for r in 1..=3usize {
            for c in 1..=total {
                let cb = base_len(c, Offset(r));
                for a in enumerate_assignments(c, Offset(r), total).unwrap() {
                    assert_eq!(a.len(), c);
                    assert!((1..=cb).all(|u| a.contains(u)), "c={c} r={r} missing prefix");
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// 2. Assignment enumeration equals a brute-force subset filter
// ---------------------------------------------------------------------------

/// Independent oracle: all c-element subsets of [1, total] that contain
/// the mandatory prefix and keep the rest inside the free window.
fn brute_force_assignments(c: usize, r: usize, total: usize) -> Vec<Vec<usize>> {
    let cb = c.saturating_sub(r + 1);
    let lo = c.saturating_sub(r).max(1);
    let hi = (c + r).min(total);
    let mut out = Vec::new();
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != c {
            continue;
        }
        let units: Vec<usize> = (1..=total).filter(|&u| mask >> (u - 1) & 1 == 1).collect();
        let has_prefix = (1..=cb).all(|u| mask >> (u - 1) & 1 == 1);
        let rest_in_zone = units.iter().all(|&u| u <= cb || (u >= lo && u <= hi));
        if has_prefix && rest_in_zone {
            out.push(units);
        }
    }
    out.sort();
    out
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut acc = 1usize;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

#[test]
fn a02_enumeration_matches_brute_force() {
    criterion(2, "assignment enumeration vs brute force", 5.0, || {
        for total in 1..=12usize {
            for c in 1..=total {
                for r in 0..=3usize {
                    let mut got: Vec<Vec<usize>> = enumerate_assignments(c, Offset(r), total)
                        .unwrap()
                        .iter()
                        .map(|s| s.indices().to_vec())
                        .collect();
                    got.sort();
                    let want = brute_force_assignments(c, r, total);
                    assert_eq!(got, want, "c={c} r={r} total={total}");
                    // No duplicates.
                    let set: BTreeSet<_> = got.iter().collect();
                    assert_eq!(set.len(), got.len());
                }
            }
        }
        // Interior widths (free window unclipped): exactly C(2r+1, r+1)
        // assignments — 3, 10, 35 for r = 1, 2, 3.
        for (r, expect) in [(1usize, 3usize), (2, 10), (3, 35)] {
            let total = 16;
            for c in (r + 2)..=(total - r) {
                let n = enumerate_assignments(c, Offset(r), total).unwrap().len();
                assert_eq!(n, expect, "interior c={c}, r={r}");
                assert_eq!(expect, binomial(2 * r + 1, r + 1));
            }
        }
    });
}

// ---------------------------------------------------------------------------
// 3. Closed-form FLOPs equals the instrumented MAC counter
// ---------------------------------------------------------------------------

#[test]
fn a03_flops_match_mac_counter() {
    criterion(3, "closed-form FLOPs vs counted MACs", 10.0, || {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(303);
        for seed in 0..100u64 {
            let (graph, h, w) = random_graph(seed);
            assert!(graph.layers().len() <= 6);
            assert!(graph.groups().iter().all(|g| g.max_width <= 8));
            let state = SupernetState::init(&graph, seed);
            for _ in 0..3 {
                let widths = WidthVector::from_channels(
                    graph.groups().iter().map(|g| rng.random_range(1..=g.max_width)).collect(),
                );
                let sel = Selection::fixed(&graph, &widths).unwrap();
                let batch = random_batch(&graph, 2, h, w, seed ^ 0xabcd);
                assert!(
                    verify_flops_oracle(&state, &graph, &sel, &batch).unwrap(),
                    "graph seed {seed}, widths {:?}",
                    widths.channels()
                );
            }
        }
    });
}

// ---------------------------------------------------------------------------
// 4. Bin plans: integrality, equal-sensitivity case, 2:1 case, space size
// ---------------------------------------------------------------------------

#[test]
fn a04_bin_plans() {
    criterion(4, "bin planning", 5.0, || {
        // Bin sizes are integers >= 1 for random graphs across a beta grid.
        for seed in 0..25u64 {
            let (graph, _, _) = random_graph(seed);
            for (num, den) in [(1u64, 4u64), (1, 2), (1, 1), (2, 1), (4, 1)] {
                let plan = plan_bins(&graph, Rational::new(num, den).unwrap()).unwrap();
                for gb in &plan.groups {
                    assert!(gb.bin_size >= 1, "seed {seed} beta {num}/{den}");
                    assert!(gb.bin_count >= 1);
                }
            }
        }

        // Equal sensitivities: every group gets bin size exactly beta.
        // Chain picked so both groups cost 32 MACs per channel.
        let equal = dense_chain(24, &[28, 8], 4).unwrap();
        let eps = sensitivities(&equal);
        assert_eq!(eps[0], eps[1], "fixture must have equal sensitivities");
        for beta in 1..=3u64 {
            let plan = plan_bins(&equal, Rational::from_int(beta)).unwrap();
            for gb in &plan.groups {
                assert_eq!(gb.bin_size as u64, beta);
            }
        }

        // Sensitivities (80, 40) at beta = 1: bin sizes (1, 2).
        let twice = dense_chain(70, &[36, 10], 4).unwrap();
        assert_eq!(sensitivities(&twice), vec![80, 40]);
        let plan = plan_bins(&twice, Rational::from_int(1)).unwrap();
        assert_eq!(plan.groups[0].bin_size, 1);
        assert_eq!(plan.groups[1].bin_size, 2);

        // Space size matches exhaustive enumeration wherever enumeration
        // is tractable (product of bin counts <= 1e5), including summed
        // multi-stage spaces.
        let mut plans: Vec<BinPlan> = Vec::new();
        for seed in 0..10u64 {
            let (graph, _, _) = random_graph(seed);
            let plan = plan_bins(&graph, Rational::from_int(1)).unwrap();
            let product: usize = plan.bin_counts().iter().product();
            if product <= 100_000 {
                let listed = enumerate_space(&plan, 100_000).unwrap().len();
                let claimed = search_space_size(std::slice::from_ref(&plan)).unwrap();
                assert_eq!(claimed.to_string(), listed.to_string(), "seed {seed}");
                plans.push(plan);
            }
        }
        assert!(plans.len() >= 2, "need at least two tractable plans");
        let total: usize = plans
            .iter()
            .map(|p| enumerate_space(p, 100_000).unwrap().len())
            .sum();
        assert_eq!(search_space_size(&plans).unwrap().to_string(), total.to_string());
    });
}

// ---------------------------------------------------------------------------
// 5. Stage schedule endpoints and granularity sequence
// ---------------------------------------------------------------------------

#[test]
fn a05_schedule_endpoints() {
    criterion(5, "stage schedule endpoints", 1.0, || {
        let flops0 = 230_560u64;
        let target = 101_777u64;
        for stages in 1..=6usize {
            let s = make_schedule(flops0, target, stages, Rational::from_int(1), Rational::from_int(2)).unwrap();
            assert_eq!(s.budgets[0], flops0, "start endpoint");
            assert_eq!(s.budgets[stages], target, "final endpoint");
            assert_eq!(s.final_budget, target);
        }
        let s = make_schedule(flops0, target, 3, Rational::from_int(1), Rational::from_int(2)).unwrap();
        let betas: Vec<f64> = s.betas.iter().map(|b| b.to_f64()).collect();
        assert_eq!(betas, vec![1.0, 0.5, 0.25]);
    });
}

// ---------------------------------------------------------------------------
// 6. Analytic gradients vs central finite differences on masked subnets
// ---------------------------------------------------------------------------

/// Random sparse (locally free) selection over unit-sized bins.
fn random_free_selection(
    graph: &NetworkGraph,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Selection {
    use rand::seq::IndexedRandom;
    use rand::Rng;
    let plan = plan_uniform_bins(graph, usize::MAX).unwrap(); // unit bins
    let pattern = AssignmentPattern {
        groups: graph
            .groups()
            .iter()
            .map(|info| {
                let c = rng.random_range(1..=info.max_width);
                let choices = enumerate_assignments(c, Offset(2), info.max_width).unwrap();
                let units = choices.choose(rng).unwrap().clone();
                let cb = base_len(c, Offset(2));
                let (base, free): (Vec<usize>, Vec<usize>) =
                    units.indices().iter().partition(|&&u| u <= cb);
                GroupAssignment {
                    group: info.name.clone(),
                    base: IndexSet::from_sorted(base).unwrap(),
                    free: IndexSet::from_sorted(free).unwrap(),
                }
            })
            .collect(),
    };
    Selection::from_pattern(graph, &plan, &pattern).unwrap()
}

#[test]
fn a06_gradient_check() {
    criterion(6, "gradients vs finite differences", 30.0, || {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(606);
        let eps = 1e-3;
        let mut checked = 0usize;
        let mut graph_seed = 0u64;
        while checked < 50 {
            // Random 2-3 layer networks with a random sparse channel mask.
            let (graph, h, w) = random_graph(graph_seed);
            graph_seed += 1;
            if !(2..=3).contains(&graph.layers().len()) {
                continue;
            }
            let sel = random_free_selection(&graph, &mut rng);

            // Keep every ReLU safely away from its kink so central
            // differences see a locally smooth loss.
            let (state, batch) = match kink_free_fixture(&graph, &sel, h, w) {
                Some(pair) => pair,
                None => continue,
            };
            let mut state = state;
            let (_, grads) = loss_and_gradients(&state, &graph, &sel, &batch).unwrap();

            // Probe a handful of selected coordinates (weights and biases).
            for _ in 0..10 {
                if checked >= 50 {
                    break;
                }
                let li = rng.random_range(0..state.layers.len());
                let use_bias = rng.random_range(0..4) == 0;
                let (vec_len, analytic) = if use_bias {
                    (state.layers[li].b.len(), &grads.layers[li].1)
                } else {
                    (state.layers[li].w.len(), &grads.layers[li].0)
                };
                let xi = rng.random_range(0..vec_len);
                let an = analytic[xi];
                if an == 0.0 {
                    continue; // unselected coordinate: finite difference is 0 too
                }
                let orig = if use_bias {
                    state.layers[li].b[xi]
                } else {
                    state.layers[li].w[xi]
                };
                let probe = |v: f64, state: &mut SupernetState| -> f64 {
                    if use_bias {
                        state.layers[li].b[xi] = v;
                    } else {
                        state.layers[li].w[xi] = v;
                    }
                    let (loss, _) = masked_forward(state, &graph, &sel, &batch).unwrap();
                    loss
                };
                let lp = probe(orig + eps, &mut state);
                let lm = probe(orig - eps, &mut state);
                probe(orig, &mut state);
                let fd = (lp - lm) / (2.0 * eps);
                let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);
                assert!(
                    rel <= 1e-4,
                    "graph seed {}, layer {li}, {} [{xi}]: analytic {an} vs fd {fd} (rel {rel:.2e})",
                    graph_seed - 1,
                    if use_bias { "bias" } else { "weight" }
                );
                checked += 1;
            }
        }
        assert_eq!(checked, 50);
    });
}

/// Scan init seeds until every ReLU input sits away from zero, so a
/// 1e-3 finite-difference probe never crosses a kink.
fn kink_free_fixture(
    graph: &NetworkGraph,
    sel: &Selection,
    h: usize,
    w: usize,
) -> Option<(SupernetState, cafewidth::nnkernel::Batch)> {
    for seed in 0..200u64 {
        let mut state = SupernetState::init(graph, seed);
        let last = state.layers.len() - 1;
        for layer in state.layers.iter_mut().take(last) {
            for (o, b) in layer.b.iter_mut().enumerate() {
                *b = if o % 2 == 0 { 0.3 } else { -0.3 };
            }
        }
        let mut batch = random_batch(graph, 3, h, w, seed.wrapping_add(7000));
        for v in batch.inputs.iter_mut() {
            *v *= 0.1;
        }
        if activation_margin(&state, graph, sel, &batch).unwrap() > 0.05 {
            return Some((state, batch));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// 7. Candidate racing honours the argmin; scanning mutates nothing
// ---------------------------------------------------------------------------

#[test]
fn a07_min_min_contract() {
    criterion(7, "candidate-racing contract", 60.0, || {
        let data = gaussian_blobs(3, 6, 360, 0.5, 7).unwrap();
        let splits = split_dataset(&data, 0).unwrap();
        let graph = dense_chain(6, &[12, 12], 3).unwrap();
        let plan = plan_bins(&graph, Rational::from_int(2)).unwrap();
        let mut config = TrainConfig::desk_default();
        config.epochs = 2;
        config.offset = 2;
        config.seed = 77;

        let outcome = train_supernet(&graph, &plan, &config, &splits.train, None).unwrap();
        assert!(!outcome.log.records.is_empty());

        // Round-trip the log through its serialized form, then re-derive
        // the whole trajectory: the replay errors if any step's logged
        // choice is not the argmin over candidate losses, if any loss or
        // width disagrees bitwise, or if a candidate scan changed the
        // weights (state-hash check inside the scan).
        let dir = tempfile::tempdir().unwrap();
        let log_path = dir.path().join("train_log.jsonl");
        outcome.log.save_jsonl(&log_path).unwrap();
        let restored = TrainLog::load_jsonl(&log_path).unwrap();
        assert_eq!(restored.records.len(), outcome.log.records.len());
        replay_training(&graph, &plan, &config, &splits.train, &restored).unwrap();

        // Direct purity check on the trained state: a width evaluation
        // (which scans every candidate assignment) leaves every stored
        // bit unchanged.
        let before = outcome.state.content_hash();
        let width = WidthVector::from_channels(vec![6, 8]);
        evaluate_width(
            &outcome.state,
            &graph,
            &plan,
            &width,
            Offset(2),
            CandidatePolicy::SharedCombination,
            9,
            &splits.val,
        )
        .unwrap();
        assert_eq!(outcome.state.content_hash(), before);
    });
}

// ---------------------------------------------------------------------------
// 8. Search optimality on an exhaustively enumerable space
// ---------------------------------------------------------------------------

#[test]
fn a08_small_space_search_optimality() {
    criterion(8, "search hits the exhaustive optimum", 300.0, || {
        let data = gaussian_blobs(3, 6, 360, 0.6, 7).unwrap();
        let splits = split_dataset(&data, 0).unwrap();
        let graph = dense_chain(6, &[8, 8, 8], 3).unwrap();
        let plan = plan_bins(&graph, Rational::from_int(1)).unwrap();
        let space: usize = plan.bin_counts().iter().product();
        assert!(space <= 512, "space {space} must stay exhaustively enumerable");

        let full = network_flops(&graph, &graph.full_widths()).unwrap();
        let budget = (full as f64 * 0.6) as u64;
        let r = Offset(1);
        let policy = CandidatePolicy::SharedCombination;

        let mut tc = TrainConfig::desk_default();
        tc.epochs = 20;
        tc.seed = 1000;
        let trained = train_supernet(&graph, &plan, &tc, &splits.train, None).unwrap();

        // Oracle: score every feasible width and keep the best accuracy.
        let oracle = exhaustive_search(
            &trained.state, &graph, &plan, budget, r, policy, 0, &splits.val, space,
        )
        .unwrap();
        let best = oracle.best.accuracy;

        // Evolutionary search, 20 seeded runs: at least 19 reach the
        // oracle accuracy.
        let evo = EvoConfig {
            population: 16,
            generations: 20,
            ..EvoConfig::full_scale_default()
        };
        let mut evo_hits = 0usize;
        for seed in 0..20u64 {
            let run = evolutionary_search(
                &trained.state,
                &graph,
                &plan,
                budget,
                &EvoConfig { seed, ..evo },
                r,
                policy,
                &splits.val,
            )
            .unwrap();
            if run.best.accuracy >= best {
                evo_hits += 1;
            }
        }

        // Random search with 5x the space size in samples: every one of
        // the 20 runs reaches the oracle accuracy.
        let mut rand_hits = 0usize;
        for seed in 0..20u64 {
            let run = random_search(
                &trained.state,
                &graph,
                &plan,
                budget,
                5 * space,
                r,
                policy,
                100 + seed,
                &splits.val,
            )
            .unwrap();
            if run.best.accuracy >= best {
                rand_hits += 1;
            }
        }

        assert!(evo_hits >= 19, "evolutionary search hit the optimum in only {evo_hits}/20 runs");
        assert!(rand_hits >= 20, "random search hit the optimum in only {rand_hits}/20 runs");
    });
}

// ---------------------------------------------------------------------------
// 9. End-to-end directional experiment on the patches CNN
// ---------------------------------------------------------------------------

#[test]
fn a09_end_to_end_budgeted_search() {
    criterion(9, "searched width vs uniform and random baselines", 900.0, || {
        let data = striped_patches(900, 0.2, 13).unwrap();
        let splits = split_dataset(&data, 0).unwrap();
        let graph = patch_cnn(16, 10).unwrap();
        assert_eq!(graph.groups().len(), 4);
        assert!(graph.groups().iter().all(|g| g.max_width == 16));
        let plan = plan_bins(&graph, Rational::from_int(1)).unwrap();

        let full = network_flops(&graph, &graph.full_widths()).unwrap();
        let budget = full / 2;

        // Retraining protocol shared by every arm (searched, uniform,
        // random): long, gentle cosine so single-run accuracy is stable
        // and differences reflect the width, not optimizer luck.
        let base_tc = || {
            let mut tc = TrainConfig::desk_default();
            tc.epochs = 30;
            tc.lr = LrSchedule::Cosine { lr0: 0.05, lr_min: 1e-3 };
            tc
        };
        let uniform_width = uniform_baseline(&graph, budget).unwrap();
        assert!(network_flops(&graph, &uniform_width).unwrap() <= budget);

        let mut searched_accs = Vec::new();
        let mut uniform_accs = Vec::new();
        let mut random_accs = Vec::new();
        for seed in 0..5u64 {
            let mut tc = base_tc();
            tc.seed = seed;

            // The supernet is trained once and reused for every width
            // evaluation, so it gets a longer schedule than the
            // single-width retraining runs.
            let mut supernet_tc = tc.clone();
            supernet_tc.epochs = 60;
            supernet_tc.lr = LrSchedule::Cosine { lr0: 0.1, lr_min: 1e-3 };
            let trained = train_supernet(&graph, &plan, &supernet_tc, &splits.train, None).unwrap();
            let evo = EvoConfig {
                population: 16,
                generations: 12,
                seed,
                ..EvoConfig::full_scale_default()
            };
            let found = evolutionary_search(
                &trained.state,
                &graph,
                &plan,
                budget,
                &evo,
                Offset(tc.offset),
                tc.policy,
                &splits.val,
            )
            .unwrap();
            assert!(found.best.flops <= budget);

            let searched = retrain_from_scratch(&graph, &found.best_width(), &tc, &splits).unwrap();
            let uniform = retrain_from_scratch(&graph, &uniform_width, &tc, &splits).unwrap();
            let random = random_baseline(
                &graph,
                &plan,
                budget,
                &tc,
                &RandomBaselineConfig { candidates: 10, pre_epochs: 1 },
                seed,
                &splits,
            )
            .unwrap();
            println!(
                "  seed {seed}: searched {:?} {:.3} | uniform {:?} {:.3} | random {:?} {:.3}",
                searched.width, searched.accuracy, uniform.width, uniform.accuracy, random.width, random.accuracy
            );
            searched_accs.push(searched.accuracy);
            uniform_accs.push(uniform.accuracy);
            random_accs.push(random.accuracy);
        }

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ms, mu, mr) = (mean(&searched_accs), mean(&uniform_accs), mean(&random_accs));
        println!("  means: searched {ms:.4}, uniform {mu:.4}, random {mr:.4}");
        assert!(
            ms >= mu - 0.005,
            "searched mean {ms:.4} fell more than 0.5pp below uniform mean {mu:.4}"
        );
        assert!(ms >= mr, "searched mean {ms:.4} below random-baseline mean {mr:.4}");
    });
}

// ---------------------------------------------------------------------------
// 10. Ranking fidelity of the supernet against from-scratch oracles
// ---------------------------------------------------------------------------

#[test]
fn a10_ranking_fidelity() {
    criterion(10, "locally free ranking fidelity", 1200.0, || {
        let data = striped_patches(900, 0.2, 13).unwrap();
        let splits = split_dataset(&data, 0).unwrap();
        let graph = tiny_cnn(8, 8, (8, 8), 10).unwrap();
        let plan = plan_uniform_bins(&graph, 4).unwrap();
        assert_eq!(plan.bin_counts(), vec![4, 4]);

        let widths: Vec<WidthVector> = enumerate_space(&plan, usize::MAX)
            .unwrap()
            .into_iter()
            .map(|bins| widths_from_bins(&plan, &bins).unwrap())
            .collect();
        assert_eq!(widths.len(), 16);

        // Oracle: every width trained from scratch under one fixed seed,
        // with the long gentle schedule whose run-to-run variance is nil.
        let mut oracle_tc = TrainConfig::desk_default();
        oracle_tc.epochs = 30;
        oracle_tc.lr = LrSchedule::Cosine { lr0: 0.05, lr_min: 1e-3 };
        oracle_tc.seed = 900;
        let oracle: Vec<f64> = widths
            .iter()
            .map(|w| retrain_from_scratch(&graph, w, &oracle_tc, &splits).unwrap().accuracy)
            .collect();

        // Five supernets per sharing mode, ranked against the oracle.
        let mut means = Vec::new();
        for r in [0usize, 1] {
            let mut taus = Vec::new();
            for s in 0..5u64 {
                let mut tc = TrainConfig::desk_default();
                tc.epochs = 40;
                tc.offset = r;
                tc.seed = 500 + s;
                let trained = train_supernet(&graph, &plan, &tc, &splits.train, None).unwrap();
                let (tau, _) = rank_correlation(
                    &trained.state,
                    &graph,
                    &plan,
                    Offset(r),
                    CandidatePolicy::SharedCombination,
                    tc.seed,
                    &widths,
                    &oracle,
                    &splits.val,
                )
                .unwrap();
                taus.push(tau);
            }
            let mean = taus.iter().sum::<f64>() / taus.len() as f64;
            println!("  offset {r}: taus {:?} -> mean {mean:+.4}", taus.iter().map(|t| (t * 1000.0).round() / 1000.0).collect::<Vec<_>>());
            means.push(mean);
        }
        assert!(
            means[1] >= means[0] - 0.05,
            "locally free mean tau {:.4} fell more than 0.05 below fixed-pattern mean tau {:.4}",
            means[1],
            means[0]
        );
    });
}

// ---------------------------------------------------------------------------
// 11. Offset 0 reproduces the fixed-pattern trainer bit for bit
// ---------------------------------------------------------------------------

#[test]
fn a11_degenerate_equivalence() {
    criterion(11, "offset-0 bit-identity with fixed-pattern trainer", 60.0, || {
        let data = gaussian_blobs(3, 6, 360, 0.5, 7).unwrap();
        let splits = split_dataset(&data, 0).unwrap();
        let graph = dense_chain(6, &[12, 12], 3).unwrap();
        let plan = plan_bins(&graph, Rational::from_int(2)).unwrap();
        let mut config = TrainConfig::desk_default();
        config.epochs = 3;
        config.offset = 0;
        config.seed = 11;

        let racing = train_supernet(&graph, &plan, &config, &splits.train, None).unwrap();
        let fixed = train_fixed_pattern(&graph, &plan, &config, &splits.train, None).unwrap();

        // Same trajectory, bit for bit.
        assert_eq!(racing.log.records.len(), fixed.log.records.len());
        for (a, b) in racing.log.records.iter().zip(&fixed.log.records) {
            assert_eq!(a.iter, b.iter);
            assert_eq!(a.width, b.width);
            assert_eq!(a.candidate, 0);
            assert_eq!(b.candidate, 0);
            assert_eq!(a.loss.to_bits(), b.loss.to_bits());
            assert_eq!(a.lr.to_bits(), b.lr.to_bits());
        }
        // Same weights, bit for bit (every tensor, not just the hash).
        assert_eq!(racing.state.step, fixed.state.step);
        for (la, lb) in racing.state.layers.iter().zip(&fixed.state.layers) {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&la.w), bits(&lb.w));
            assert_eq!(bits(&la.b), bits(&lb.b));
            assert_eq!(bits(&la.mw), bits(&lb.mw));
            assert_eq!(bits(&la.mb), bits(&lb.mb));
        }
        assert_eq!(racing.state.content_hash(), fixed.state.content_hash());
    });
}
