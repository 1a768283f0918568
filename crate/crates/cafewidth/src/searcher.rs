//! Width search over a trained supernet.
//!
//! A width vector is scored by the best validation accuracy among its
//! locally free candidate sub-networks (max-max selection). Under a FLOPs
//! budget, widths can be found by exhaustive enumeration (small spaces),
//! uniform random sampling with rejection, or an evolutionary loop with
//! tournament selection, uniform crossover, per-group mutation, and
//! budget repair. Multi-stage search repeats train-then-search rounds
//! while the budget decays and the supernet narrows to each winner.
//! Searched widths are judged by retraining them from scratch; uniform
//! scaling and best-of-random-widths baselines are provided, plus Kendall
//! tau-b for supernet-vs-oracle ranking fidelity.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archgraph::{network_flops, NetworkGraph, WidthVector};
use crate::binplan::{plan_bins, search_space_size, widths_from_bins, BinPlan, Rational, StageSchedule};
use crate::dataset::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::nnkernel::{evaluate, Selection, SupernetState};
use crate::sharing::{candidate_subnets, pattern_log_map, CandidatePolicy, Offset};
use crate::trainer::{train_plain, train_supernet, TrainConfig, TrainLog};

// ---------------------------------------------------------------------------
// Max-max width evaluation
// ---------------------------------------------------------------------------

/// Score a width on the validation set: the best accuracy over its
/// candidate sub-networks (ties -> lowest candidate index). Returns the
/// score and the winning assignment, logged as 1-based bin units per group.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_width(
    state: &SupernetState,
    graph: &NetworkGraph,
    plan: &BinPlan,
    width: &WidthVector,
    r: Offset,
    policy: CandidatePolicy,
    seed: u64,
    val: &Dataset,
) -> Result<(f64, std::collections::BTreeMap<String, Vec<usize>>)> {
    if val.is_empty() {
        return Err(Error::DataFormat("validation set is empty".into()));
    }
    let batch = val.full_batch()?;
    let candidates = candidate_subnets(width, plan, r, policy, seed)?;
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_pattern = None;
    for pattern in &candidates {
        let sel = Selection::from_pattern(graph, plan, pattern)?;
        let acc = evaluate(state, graph, &sel, &batch)?;
        if acc > best_acc {
            best_acc = acc;
            best_pattern = Some(pattern);
        }
    }
    Ok((best_acc, pattern_log_map(best_pattern.expect("at least one candidate"))))
}

// ---------------------------------------------------------------------------
// Search results
// ---------------------------------------------------------------------------

/// One evaluated width in a search log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub bin_counts: Vec<usize>,
    pub width: Vec<usize>,
    pub flops: u64,
    pub accuracy: f64,
    /// Winning candidate assignment (1-based bin units per group).
    pub pattern: std::collections::BTreeMap<String, Vec<usize>>,
}

/// Best-ever score after each evolutionary generation (generation 0 is
/// the initial population).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenStat {
    pub generation: usize,
    pub best_acc: f64,
    pub best_flops: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: EvalRecord,
    /// Every distinct width evaluated, in first-evaluation order.
    pub log: Vec<EvalRecord>,
    /// Per-generation best-ever trace (evolutionary search only).
    pub generations: Vec<GenStat>,
    pub budget: u64,
    pub seed: u64,
}

impl SearchResult {
    pub fn best_width(&self) -> WidthVector {
        WidthVector::from_channels(self.best.width.clone())
    }
}

/// Memoizing evaluator shared by every search strategy: each distinct
/// width is scored once; parallel scoring of a batch of widths is
/// order-independent because per-width candidate seeds derive from the
/// width itself.
struct Scorer<'a> {
    state: &'a SupernetState,
    graph: &'a NetworkGraph,
    plan: &'a BinPlan,
    r: Offset,
    policy: CandidatePolicy,
    seed: u64,
    val: &'a Dataset,
    memo: HashMap<Vec<usize>, EvalRecord>,
    log: Vec<EvalRecord>,
}

fn width_seed(seed: u64, bins: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bins {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ seed
}

impl<'a> Scorer<'a> {
    fn new(
        state: &'a SupernetState,
        graph: &'a NetworkGraph,
        plan: &'a BinPlan,
        r: Offset,
        policy: CandidatePolicy,
        seed: u64,
        val: &'a Dataset,
    ) -> Scorer<'a> {
        Scorer {
            state,
            graph,
            plan,
            r,
            policy,
            seed,
            val,
            memo: HashMap::new(),
            log: Vec::new(),
        }
    }

    fn eval_one(&self, bins: &[usize]) -> Result<EvalRecord> {
        let width = widths_from_bins(self.plan, bins)?;
        let flops = network_flops(self.graph, &width)?;
        let (accuracy, pattern) = evaluate_width(
            self.state,
            self.graph,
            self.plan,
            &width,
            self.r,
            self.policy,
            width_seed(self.seed, bins),
            self.val,
        )?;
        Ok(EvalRecord {
            bin_counts: bins.to_vec(),
            width: width.channels().to_vec(),
            flops,
            accuracy,
            pattern,
        })
    }

    /// Score many widths; duplicates and already-seen widths are free.
    fn score_all(&mut self, batch: &[Vec<usize>]) -> Result<()> {
        let mut fresh: Vec<Vec<usize>> = Vec::new();
        for bins in batch {
            if !self.memo.contains_key(bins) && !fresh.contains(bins) {
                fresh.push(bins.clone());
            }
        }
        let records: Vec<EvalRecord> = fresh
            .par_iter()
            .map(|bins| self.eval_one(bins))
            .collect::<Result<Vec<_>>>()?;
        for rec in records {
            self.memo.insert(rec.bin_counts.clone(), rec.clone());
            self.log.push(rec);
        }
        Ok(())
    }

    fn get(&self, bins: &[usize]) -> &EvalRecord {
        &self.memo[bins]
    }
}

/// Deterministic preference order used everywhere one best record must be
/// reported: higher accuracy, then fewer FLOPs, then lexicographically
/// smaller bin counts.
pub fn better(a: &EvalRecord, b: &EvalRecord) -> bool {
    (a.accuracy, std::cmp::Reverse(a.flops), std::cmp::Reverse(a.bin_counts.clone()))
        > (b.accuracy, std::cmp::Reverse(b.flops), std::cmp::Reverse(b.bin_counts.clone()))
}

fn best_of<'r>(records: impl Iterator<Item = &'r EvalRecord>) -> Option<&'r EvalRecord> {
    let mut best: Option<&EvalRecord> = None;
    for rec in records {
        if best.is_none() || better(rec, best.unwrap()) {
            best = Some(rec);
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Budget handling
// ---------------------------------------------------------------------------

fn flops_of_bins(graph: &NetworkGraph, plan: &BinPlan, bins: &[usize]) -> Result<u64> {
    network_flops(graph, &widths_from_bins(plan, bins)?)
}

/// Cheapest reachable point of the plan's space.
fn min_flops(graph: &NetworkGraph, plan: &BinPlan) -> Result<u64> {
    flops_of_bins(graph, plan, &vec![1; plan.group_count()])
}

/// Shrink an infeasible assignment to the budget: repeatedly decrement
/// the group whose single-bin removal saves the most FLOPs (ties -> lowest
/// group index). Requires the all-ones assignment to be feasible.
fn repair_to_budget(graph: &NetworkGraph, plan: &BinPlan, bins: &mut [usize], budget: u64) -> Result<()> {
    let mut flops = flops_of_bins(graph, plan, bins)?;
    while flops > budget {
        let mut best: Option<(u64, usize, u64)> = None; // (saving, group, new_flops)
        for g in 0..bins.len() {
            if bins[g] > 1 {
                bins[g] -= 1;
                let f = flops_of_bins(graph, plan, bins)?;
                bins[g] += 1;
                let saving = flops - f;
                if best.is_none_or(|(s, _, _)| saving > s) {
                    best = Some((saving, g, f));
                }
            }
        }
        let (_, g, f) = best.ok_or_else(|| {
            Error::InfeasibleBudget(format!("budget {budget} is below the minimum-width cost {flops}"))
        })?;
        bins[g] -= 1;
        flops = f;
    }
    Ok(())
}

/// Uniform bin-count sample (the same distribution the trainer uses).
fn sample_bins(plan: &BinPlan, rng: &mut ChaCha8Rng) -> Vec<usize> {
    plan.bin_counts().iter().map(|&b| rng.random_range(1..=b)).collect()
}

// ---------------------------------------------------------------------------
// Random search
// ---------------------------------------------------------------------------

/// Uniform random search: draw widths until `samples` of them fit the
/// budget (duplicates count), capped at `100 * samples` attempts. With no
/// accepted width at the cap the budget is infeasible.
#[allow(clippy::too_many_arguments)]
pub fn random_search(
    state: &SupernetState,
    graph: &NetworkGraph,
    plan: &BinPlan,
    budget: u64,
    samples: usize,
    r: Offset,
    policy: CandidatePolicy,
    seed: u64,
    val: &Dataset,
) -> Result<SearchResult> {
    if samples == 0 {
        return Err(Error::InvalidConfig("random search needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted: Vec<Vec<usize>> = Vec::with_capacity(samples);
    let mut attempts = 0usize;
    while accepted.len() < samples && attempts < 100 * samples {
        attempts += 1;
        let bins = sample_bins(plan, &mut rng);
        if flops_of_bins(graph, plan, &bins)? <= budget {
            accepted.push(bins);
        }
    }
    if accepted.is_empty() {
        return Err(Error::InfeasibleBudget(format!(
            "no width fit the budget {budget} in {attempts} draws"
        )));
    }
    let mut scorer = Scorer::new(state, graph, plan, r, policy, seed, val);
    scorer.score_all(&accepted)?;
    let best = best_of(accepted.iter().map(|b| scorer.get(b))).expect("non-empty").clone();
    Ok(SearchResult {
        best,
        log: scorer.log,
        generations: Vec::new(),
        budget,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Exhaustive search (oracle for small spaces)
// ---------------------------------------------------------------------------

/// Every bin-count vector of the plan, in mixed-radix order. Errors when
/// the space exceeds `cap` points.
pub fn enumerate_space(plan: &BinPlan, cap: usize) -> Result<Vec<Vec<usize>>> {
    let size = search_space_size(std::slice::from_ref(plan))?;
    if size > num_bigint::BigUint::from(cap) {
        return Err(Error::InvalidConfig(format!(
            "space of {size} widths exceeds the enumeration cap {cap}"
        )));
    }
    let radices = plan.bin_counts();
    let mut out = Vec::new();
    let mut current = vec![1usize; radices.len()];
    loop {
        out.push(current.clone());
        let mut g = radices.len();
        loop {
            if g == 0 {
                return Ok(out);
            }
            g -= 1;
            if current[g] < radices[g] {
                current[g] += 1;
                for c in current.iter_mut().skip(g + 1) {
                    *c = 1;
                }
                break;
            }
        }
    }
}

/// Score the entire (budget-filtered) space and return the optimum; the
/// reference answer for small spaces.
#[allow(clippy::too_many_arguments)]
pub fn exhaustive_search(
    state: &SupernetState,
    graph: &NetworkGraph,
    plan: &BinPlan,
    budget: u64,
    r: Offset,
    policy: CandidatePolicy,
    seed: u64,
    val: &Dataset,
    cap: usize,
) -> Result<SearchResult> {
    let all = enumerate_space(plan, cap)?;
    let feasible: Vec<Vec<usize>> = all
        .into_iter()
        .filter_map(|bins| match flops_of_bins(graph, plan, &bins) {
            Ok(f) if f <= budget => Some(Ok(bins)),
            Ok(_) => None,
            Err(e) => Some(Err(e)),
        })
        .collect::<Result<Vec<_>>>()?;
    if feasible.is_empty() {
        return Err(Error::InfeasibleBudget(format!(
            "no width in the space fits the budget {budget}"
        )));
    }
    let mut scorer = Scorer::new(state, graph, plan, r, policy, seed, val);
    scorer.score_all(&feasible)?;
    let best = best_of(scorer.log.iter()).expect("non-empty").clone();
    Ok(SearchResult {
        best,
        log: scorer.log,
        generations: Vec::new(),
        budget,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Evolutionary search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvoConfig {
    pub population: usize,
    pub generations: usize,
    /// Per-group probability of resampling a child's bin count.
    pub mutation_prob: f64,
    /// Probability that a child mixes two parents instead of cloning one.
    pub crossover_prob: f64,
    /// Fraction of the population carried over unchanged each generation.
    pub elite_fraction: f64,
    pub seed: u64,
}

impl EvoConfig {
    /// Full-scale defaults; desk-scale runs usually shrink these.
    pub fn full_scale_default() -> EvoConfig {
        EvoConfig {
            population: 40,
            generations: 50,
            mutation_prob: 0.1,
            crossover_prob: 0.9,
            elite_fraction: 0.125,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidConfig("population must be >= 2".into()));
        }
        if self.generations == 0 {
            return Err(Error::InvalidConfig("generations must be >= 1".into()));
        }
        for (name, p) in [
            ("mutation_prob", self.mutation_prob),
            ("crossover_prob", self.crossover_prob),
            ("elite_fraction", self.elite_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} {p} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Evolutionary search under a FLOPs budget: elitism, tournament-of-two
/// parent selection, uniform crossover, per-group mutation, and repair of
/// over-budget offspring by shrinking the costliest group.
#[allow(clippy::too_many_arguments)]
pub fn evolutionary_search(
    state: &SupernetState,
    graph: &NetworkGraph,
    plan: &BinPlan,
    budget: u64,
    config: &EvoConfig,
    r: Offset,
    policy: CandidatePolicy,
    val: &Dataset,
) -> Result<SearchResult> {
    config.validate()?;
    if min_flops(graph, plan)? > budget {
        return Err(Error::InfeasibleBudget(format!(
            "budget {budget} is below the minimum-width cost {}",
            min_flops(graph, plan)?
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let p = config.population;

    // Initial population: rejection sampling with a repair fallback.
    let mut population: Vec<Vec<usize>> = Vec::with_capacity(p);
    while population.len() < p {
        let mut bins = sample_bins(plan, &mut rng);
        let mut tries = 0;
        while flops_of_bins(graph, plan, &bins)? > budget && tries < 100 {
            bins = sample_bins(plan, &mut rng);
            tries += 1;
        }
        repair_to_budget(graph, plan, &mut bins, budget)?;
        population.push(bins);
    }

    let mut scorer = Scorer::new(state, graph, plan, r, policy, config.seed, val);
    scorer.score_all(&population)?;
    let mut best = best_of(population.iter().map(|b| scorer.get(b))).expect("non-empty").clone();
    let mut generations = vec![GenStat {
        generation: 0,
        best_acc: best.accuracy,
        best_flops: best.flops,
    }];

    let elite_count = ((config.elite_fraction * p as f64).floor() as usize).clamp(1, p);
    for gen in 1..=config.generations {
        // Rank the current population best-first.
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&i, &j| {
            let (a, b) = (scorer.get(&population[i]), scorer.get(&population[j]));
            if better(a, b) {
                std::cmp::Ordering::Less
            } else if better(b, a) {
                std::cmp::Ordering::Greater
            } else {
                i.cmp(&j)
            }
        });

        let mut next: Vec<Vec<usize>> = order.iter().take(elite_count).map(|&i| population[i].clone()).collect();
        while next.len() < p {
            let tournament = |rng: &mut ChaCha8Rng| -> Vec<usize> {
                let a = rng.random_range(0..population.len());
                let b = rng.random_range(0..population.len());
                let win = if better(scorer.get(&population[a]), scorer.get(&population[b])) {
                    a
                } else {
                    b
                };
                population[win].clone()
            };
            let pa = tournament(&mut rng);
            let pb = tournament(&mut rng);
            let mut child: Vec<usize> = if rng.random::<f64>() < config.crossover_prob {
                pa.iter()
                    .zip(&pb)
                    .map(|(&x, &y)| if rng.random::<bool>() { x } else { y })
                    .collect()
            } else {
                pa.clone()
            };
            for (g, &b) in plan.bin_counts().iter().enumerate() {
                if rng.random::<f64>() < config.mutation_prob {
                    child[g] = rng.random_range(1..=b);
                }
            }
            repair_to_budget(graph, plan, &mut child, budget)?;
            next.push(child);
        }
        population = next;
        scorer.score_all(&population)?;
        if let Some(gen_best) = best_of(population.iter().map(|b| scorer.get(b))) {
            if better(gen_best, &best) {
                best = gen_best.clone();
            }
        }
        generations.push(GenStat {
            generation: gen,
            best_acc: best.accuracy,
            best_flops: best.flops,
        });
    }

    Ok(SearchResult {
        best,
        log: scorer.log,
        generations,
        budget,
        seed: config.seed,
    })
}

// ---------------------------------------------------------------------------
// Multi-stage search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: usize,
    pub beta: Rational,
    pub budget: u64,
    pub bin_counts: Vec<usize>,
    pub space_size: String,
    pub winner: EvalRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiStageOutcome {
    pub stages: Vec<StageOutcome>,
    pub final_width: Vec<usize>,
    pub final_accuracy: f64,
    pub final_flops: u64,
}

/// Derive a stage-local seed so that re-initialized supernets differ
/// between stages while the whole run stays reproducible.
fn stage_seed(seed: u64, stage: usize) -> u64 {
    seed.wrapping_add(stage as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ seed
}

/// Repeated train-then-search rounds: stage t plans bins with beta(t),
/// re-initializes and trains a supernet whose per-group maxima are the
/// previous stage's winning widths, then searches under the stage budget.
pub fn multi_stage_search(
    graph: &NetworkGraph,
    schedule: &StageSchedule,
    train_config: &TrainConfig,
    evo_config: &EvoConfig,
    splits: &Splits,
) -> Result<MultiStageOutcome> {
    let at_stage = |t: usize, e: Error| -> Error {
        match e {
            Error::InfeasibleBudget(msg) => Error::InfeasibleBudget(format!("stage {t}: {msg}")),
            other => other,
        }
    };
    let mut current = graph.clone();
    let mut stages = Vec::with_capacity(schedule.stages);
    for t in 1..=schedule.stages {
        let beta = schedule.betas[t - 1];
        let budget = schedule.budgets[t];
        let plan = plan_bins(&current, beta).map_err(|e| at_stage(t, e))?;
        let mut cfg = train_config.clone();
        cfg.seed = stage_seed(train_config.seed, t);
        let outcome = train_supernet(&current, &plan, &cfg, &splits.train, None)?;
        let mut evo = evo_config.clone();
        evo.seed = stage_seed(evo_config.seed, t);
        let result = evolutionary_search(
            &outcome.state,
            &current,
            &plan,
            budget,
            &evo,
            Offset(cfg.offset),
            cfg.policy,
            &splits.val,
        )
        .map_err(|e| at_stage(t, e))?;
        let winner = result.best.clone();
        current = current.with_group_widths(&result.best_width())?;
        stages.push(StageOutcome {
            stage: t,
            beta,
            budget,
            bin_counts: plan.bin_counts(),
            space_size: search_space_size(std::slice::from_ref(&plan))?.to_string(),
            winner,
        });
    }
    let last = stages.last().expect("at least one stage");
    Ok(MultiStageOutcome {
        final_width: last.winner.width.clone(),
        final_accuracy: last.winner.accuracy,
        final_flops: last.winner.flops,
        stages,
    })
}

// ---------------------------------------------------------------------------
// Retraining and baselines
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct RetrainOutcome {
    pub accuracy: f64,
    pub width: Vec<usize>,
    pub flops: u64,
    pub log: TrainLog,
}

/// Train a standalone network at exactly these widths from scratch on
/// train+val, then report test accuracy.
pub fn retrain_from_scratch(
    graph: &NetworkGraph,
    width: &WidthVector,
    config: &TrainConfig,
    splits: &Splits,
) -> Result<RetrainOutcome> {
    let standalone = graph.with_group_widths(width)?;
    let data = splits.train.concat(&splits.val)?;
    let outcome = train_plain(&standalone, config, &data, None)?;
    let batch = splits.test.full_batch()?;
    let accuracy = evaluate(&outcome.state, &standalone, &Selection::full(&standalone), &batch)?;
    Ok(RetrainOutcome {
        accuracy,
        width: width.channels().to_vec(),
        flops: network_flops(graph, width)?,
        log: outcome.log,
    })
}

/// Largest single scale factor s in (0, 1] such that every group at
/// round(s * max_width) channels (at least 1) fits the budget.
pub fn uniform_baseline(graph: &NetworkGraph, budget: u64) -> Result<WidthVector> {
    let widths_at = |s: f64| -> WidthVector {
        WidthVector::from_channels(
            graph
                .groups()
                .iter()
                .map(|g| ((s * g.max_width as f64).round() as usize).clamp(1, g.max_width))
                .collect(),
        )
    };
    let full = graph.full_widths();
    if network_flops(graph, &full)? <= budget {
        return Ok(full);
    }
    if network_flops(graph, &widths_at(0.0))? > budget {
        return Err(Error::InfeasibleBudget(format!(
            "budget {budget} is below the minimum uniform-width cost"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if network_flops(graph, &widths_at(mid))? <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(widths_at(lo))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomBaselineConfig {
    /// How many random widths to try.
    pub candidates: usize,
    /// Short pre-training budget (epochs) used only to pick the winner.
    pub pre_epochs: usize,
}

impl Default for RandomBaselineConfig {
    fn default() -> Self {
        RandomBaselineConfig {
            candidates: 20,
            pre_epochs: 1,
        }
    }
}

#[derive(Debug)]
pub struct RandomBaselineOutcome {
    pub accuracy: f64,
    pub width: Vec<usize>,
    pub flops: u64,
    /// (width, pre-training validation accuracy) per candidate.
    pub candidates: Vec<(Vec<usize>, f64)>,
}

/// Best-of-random-widths baseline: sample budget-feasible widths, give
/// each a short training run, keep the one with the best validation
/// accuracy, and train that width from scratch with the full recipe (the
/// pre-training runs only select; they do not seed the final weights).
pub fn random_baseline(
    graph: &NetworkGraph,
    plan: &BinPlan,
    budget: u64,
    config: &TrainConfig,
    protocol: &RandomBaselineConfig,
    seed: u64,
    splits: &Splits,
) -> Result<RandomBaselineOutcome> {
    if protocol.candidates == 0 || protocol.pre_epochs == 0 {
        return Err(Error::InvalidConfig("random baseline needs candidates >= 1 and pre_epochs >= 1".into()));
    }
    if min_flops(graph, plan)? > budget {
        return Err(Error::InfeasibleBudget(format!(
            "budget {budget} is below the minimum-width cost"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut widths: Vec<Vec<usize>> = Vec::with_capacity(protocol.candidates);
    while widths.len() < protocol.candidates {
        let mut bins = sample_bins(plan, &mut rng);
        let mut tries = 0;
        while flops_of_bins(graph, plan, &bins)? > budget && tries < 100 {
            bins = sample_bins(plan, &mut rng);
            tries += 1;
        }
        repair_to_budget(graph, plan, &mut bins, budget)?;
        widths.push(bins);
    }

    let mut pre = config.clone();
    pre.epochs = protocol.pre_epochs;
    let mut scored: Vec<(Vec<usize>, f64)> = Vec::with_capacity(widths.len());
    let val_batch = splits.val.full_batch()?;
    for bins in &widths {
        let width = widths_from_bins(plan, bins)?;
        let standalone = graph.with_group_widths(&width)?;
        let outcome = train_plain(&standalone, &pre, &splits.train, None)?;
        let acc = evaluate(&outcome.state, &standalone, &Selection::full(&standalone), &val_batch)?;
        scored.push((width.channels().to_vec(), acc));
    }
    let winner = scored
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.1.partial_cmp(&b.1).unwrap().then(j.cmp(i)))
        .map(|(i, _)| i)
        .expect("at least one candidate");
    let width = WidthVector::from_channels(scored[winner].0.clone());
    let final_run = retrain_from_scratch(graph, &width, config, splits)?;
    Ok(RandomBaselineOutcome {
        accuracy: final_run.accuracy,
        width: final_run.width,
        flops: final_run.flops,
        candidates: scored,
    })
}

// ---------------------------------------------------------------------------
// Ranking fidelity
// ---------------------------------------------------------------------------

/// Kendall tau-b rank correlation with tie correction, in [-1, 1].
pub fn kendall_tau_b(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidConfig(format!(
            "rank lists differ in length: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InvalidConfig("rank correlation needs at least 2 entries".into()));
    }
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_x, mut ties_y) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = xs[i].partial_cmp(&xs[j]).ok_or_else(|| {
                Error::InvalidConfig("rank lists must not contain NaN".into())
            })?;
            let dy = ys[i].partial_cmp(&ys[j]).ok_or_else(|| {
                Error::InvalidConfig("rank lists must not contain NaN".into())
            })?;
            use std::cmp::Ordering::Equal;
            // Tie corrections count ALL pairs tied within a list, including
            // pairs tied in both lists at once.
            match (dx, dy) {
                (Equal, Equal) => {
                    ties_x += 1;
                    ties_y += 1;
                }
                (Equal, _) => ties_x += 1,
                (_, Equal) => ties_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - ties_x) as f64) * ((n0 - ties_y) as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::InvalidConfig("rank correlation undefined: a list is constant".into()));
    }
    Ok((concordant - discordant) as f64 / denom)
}

/// Kendall tau-b between supernet max-max scores and train-from-scratch
/// oracle accuracies over the same widths. Returns the tau and the
/// supernet scores in width order.
#[allow(clippy::too_many_arguments)]
pub fn rank_correlation(
    state: &SupernetState,
    graph: &NetworkGraph,
    plan: &BinPlan,
    r: Offset,
    policy: CandidatePolicy,
    seed: u64,
    widths: &[WidthVector],
    oracle_accs: &[f64],
    val: &Dataset,
) -> Result<(f64, Vec<f64>)> {
    if widths.len() != oracle_accs.len() {
        return Err(Error::InvalidConfig(format!(
            "{} widths vs {} oracle accuracies",
            widths.len(),
            oracle_accs.len()
        )));
    }
    let scores = widths
        .par_iter()
        .map(|w| {
            let bins = crate::sharing::bin_counts_of_widths(w, plan)?;
            Ok(evaluate_width(state, graph, plan, w, r, policy, width_seed(seed, &bins), val)?.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    let tau = kendall_tau_b(&scores, oracle_accs)?;
    Ok((tau, scores))
}
