//! One function per CLI subcommand. Every command reads the same
//! experiment configuration, writes `result.json` / `manifest.json` /
//! `timing.json` (plus CSV series where a series exists) under
//! `<out>/<command>/`, and prints a short human summary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use crate::archgraph::{network_flops, NetworkGraph, WidthVector};
use crate::binplan::{format_scientific, plan_bins, plan_uniform_bins, search_space_size, BinPlan};
use crate::dataset::{split_dataset, Splits};
use crate::error::{Error, Result};
use crate::nnkernel::checkpoint::save_checkpoint;
use crate::searcher::{
    better, enumerate_space, evolutionary_search, multi_stage_search, random_baseline, random_search,
    rank_correlation, retrain_from_scratch, uniform_baseline, EvalRecord, EvoConfig, SearchResult,
};
use crate::sharing::Offset;
use crate::trainer::{train_supernet, TrainConfig};

use super::config::LoadedConfig;
use super::report::{write_csv, write_manifest, write_result, write_timing, ResultEnvelope};

/// A parsed subcommand, ready to run against a loaded configuration.
#[derive(Debug, Clone)]
pub enum Command {
    PlanBins,
    AnalyzeSpace,
    Train,
    SearchRandom,
    SearchEvo,
    MultiStage,
    Retrain {
        width: Option<Vec<usize>>,
        from_result: Option<PathBuf>,
    },
    BaselineUniform,
    BaselineRandom,
    AblateR,
    AblateLambda,
    AblateBins,
    RankCorr,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::PlanBins => "plan-bins",
            Command::AnalyzeSpace => "analyze-space",
            Command::Train => "train",
            Command::SearchRandom => "search-random",
            Command::SearchEvo => "search-evo",
            Command::MultiStage => "multi-stage",
            Command::Retrain { .. } => "retrain",
            Command::BaselineUniform => "baseline-uniform",
            Command::BaselineRandom => "baseline-random",
            Command::AblateR => "ablate-r",
            Command::AblateLambda => "ablate-lambda",
            Command::AblateBins => "ablate-bins",
            Command::RankCorr => "rank-corr",
        }
    }
}

/// Run one command end to end and return the path of its result document.
pub fn run_command(loaded: &LoadedConfig, command: &Command) -> Result<PathBuf> {
    let out = loaded.out_dir.join(command.name());
    std::fs::create_dir_all(&out)?;
    let started = Instant::now();
    let (result, timing_details) = match command {
        Command::PlanBins => cmd_plan_bins(loaded, &out)?,
        Command::AnalyzeSpace => cmd_analyze_space(loaded, &out)?,
        Command::Train => cmd_train(loaded, &out)?,
        Command::SearchRandom => cmd_search(loaded, &out, false)?,
        Command::SearchEvo => cmd_search(loaded, &out, true)?,
        Command::MultiStage => cmd_multi_stage(loaded, &out)?,
        Command::Retrain { width, from_result } => cmd_retrain(loaded, &out, width.as_deref(), from_result.as_deref())?,
        Command::BaselineUniform => cmd_baseline_uniform(loaded, &out)?,
        Command::BaselineRandom => cmd_baseline_random(loaded, &out)?,
        Command::AblateR => cmd_ablate_r(loaded, &out)?,
        Command::AblateLambda => cmd_ablate_lambda(loaded, &out)?,
        Command::AblateBins => cmd_ablate_bins(loaded, &out)?,
        Command::RankCorr => cmd_rank_corr(loaded, &out)?,
    };
    let envelope = ResultEnvelope::new(
        command.name(),
        &loaded.config_sha256,
        &loaded.config.seeds,
        loaded.reference,
        result,
    );
    let result_path = write_result(&out, &envelope)?;
    write_manifest(
        &out,
        command.name(),
        &loaded.config,
        &loaded.config_sha256,
        &loaded.config.seeds,
        loaded.reference,
        rayon::current_num_threads(),
    )?;
    write_timing(&out, command.name(), started.elapsed().as_secs_f64(), timing_details)?;
    println!("wrote {}", result_path.display());
    Ok(result_path)
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn load_splits(loaded: &LoadedConfig) -> Result<Splits> {
    let data = loaded.dataset()?;
    split_dataset(&data, loaded.config.split_seed)
}

/// Training/evolution configs for one run seed.
fn seeded(loaded: &LoadedConfig, seed: u64) -> (TrainConfig, EvoConfig) {
    let mut train = loaded.config.train.clone();
    train.seed = seed;
    let mut evo = loaded.config.evo.clone();
    evo.seed = seed;
    (train, evo)
}

fn stage1_plan(loaded: &LoadedConfig, graph: &NetworkGraph) -> Result<BinPlan> {
    plan_bins(graph, loaded.config.beta0)
}

fn record_json(rec: &EvalRecord) -> Value {
    serde_json::to_value(rec).expect("EvalRecord serializes")
}

fn fmt_width(width: &[usize]) -> String {
    width.iter().map(ToString::to_string).collect::<Vec<_>>().join("x")
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Train one supernet and search it; the shared body of the search and
/// ablation commands.
fn train_then_search(
    graph: &NetworkGraph,
    plan: &BinPlan,
    budget: u64,
    splits: &Splits,
    train: &TrainConfig,
    evo: &EvoConfig,
    random_samples: Option<usize>,
) -> Result<SearchResult> {
    let outcome = train_supernet(graph, plan, train, &splits.train, None)?;
    match random_samples {
        Some(n) => random_search(
            &outcome.state,
            graph,
            plan,
            budget,
            n,
            Offset(train.offset),
            train.policy,
            evo.seed,
            &splits.val,
        ),
        None => evolutionary_search(
            &outcome.state,
            graph,
            plan,
            budget,
            evo,
            Offset(train.offset),
            train.policy,
            &splits.val,
        ),
    }
}

// ---------------------------------------------------------------------------
// plan-bins / analyze-space
// ---------------------------------------------------------------------------

fn cmd_plan_bins(loaded: &LoadedConfig, out: &Path) -> Result<(Value, Value)> {
    let graph = loaded.graph()?;
    let plan = stage1_plan(loaded, &graph)?;
    let eps = crate::archgraph::sensitivities(&graph);
    let size = search_space_size(std::slice::from_ref(&plan))?;
    let mut rows = Vec::new();
    let groups: Vec<Value> = plan
        .groups
        .iter()
        .zip(graph.groups())
        .zip(&eps)
        .map(|((bins, info), &sens)| {
            println!(
                "group {}: max_width={} sensitivity={} bin_size={} bin_count={}",
                bins.group, info.max_width, sens, bins.bin_size, bins.bin_count
            );
            rows.push(vec![
                bins.group.clone(),
                info.max_width.to_string(),
                sens.to_string(),
                bins.bin_size.to_string(),
                bins.bin_count.to_string(),
            ]);
            json!({
                "group": bins.group,
                "max_width": info.max_width,
                "sensitivity": sens,
                "bin_size": bins.bin_size,
                "bin_count": bins.bin_count,
                "boundaries": bins.boundaries,
            })
        })
        .collect();
    println!("search space size = {} ({})", size, format_scientific(&size));
    write_csv(out, "bins.csv", &["group", "max_width", "sensitivity", "bin_size", "bin_count"], &rows)?;
    let result = json!({
        "beta0": loaded.config.beta0,
        "full_flops": network_flops(&graph, &graph.full_widths())?,
        "groups": groups,
        "space_size": { "exact": size.to_string(), "scientific": format_scientific(&size) },
    });
    Ok((result, json!({})))
}

fn cmd_analyze_space(loaded: &LoadedConfig, out: &Path) -> Result<(Value, Value)> {
    let graph = loaded.graph()?;
    let schedule = loaded.schedule(&graph)?;
    let mut plans = Vec::with_capacity(schedule.stages);
    let mut stages = Vec::with_capacity(schedule.stages);
    let mut rows = Vec::new();
    for t in 1..=schedule.stages {
        let beta = schedule.betas[t - 1];
        let plan = plan_bins(&graph, beta)?;
        let size = search_space_size(std::slice::from_ref(&plan))?;
        println!(
            "stage {t}: beta={} budget={} bins={:?} space size = {}",
            beta,
            schedule.budgets[t],
            plan.bin_counts(),
            size
        );
        rows.push(vec![
            t.to_string(),
            beta.to_string(),
            schedule.budgets[t].to_string(),
            size.to_string(),
        ]);
        stages.push(json!({
            "stage": t,
            "beta": beta,
            "budget": schedule.budgets[t],
            "bin_counts": plan.bin_counts(),
            "space_size": size.to_string(),
        }));
        plans.push(plan);
    }
    let total = search_space_size(&plans)?;
    println!("total search space size = {} ({})", total, format_scientific(&total));
    write_csv(out, "stages.csv", &["stage", "beta", "budget", "space_size"], &rows)?;
    let result = json!({
        "budgets": schedule.budgets,
        "final_budget": schedule.final_budget,
        "stages": stages,
        "total_space_size": { "exact": total.to_string(), "scientific": format_scientific(&total) },
    });
    Ok((result, json!({})))
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn cmd_train(loaded: &LoadedConfig, out: &Path) -> Result<(Value, Value)> {
    let graph = loaded.graph()?;
    let plan = stage1_plan(loaded, &graph)?;
    let splits = load_splits(loaded)?;
    let mut runs = Vec::new();
    let mut seed_seconds = Vec::new();
    for &seed in &loaded.config.seeds {
        let started = Instant::now();
        let (train, _) = seeded(loaded, seed);
        let seed_dir = out.join(format!("seed{seed}"));
        std::fs::create_dir_all(&seed_dir)?;
        let outcome = train_supernet(&graph, &plan, &train, &splits.train, Some(&seed_dir))?;
        outcome.log.save_jsonl(&seed_dir.join("train_log.jsonl"))?;
        save_checkpoint(&outcome.state, &seed_dir.join("final.ckpt"))?;
        let loss_rows: Vec<Vec<String>> = outcome
            .log
            .records
            .iter()
            .map(|r| vec![r.iter.to_string(), r.loss.to_string(), r.lr.to_string()])
            .collect();
        write_csv(&seed_dir, "loss.csv", &["iter", "loss", "lr"], &loss_rows)?;
        let final_loss = outcome.log.final_loss().unwrap_or(f64::NAN);
        println!(
            "seed {seed}: {} iterations, final loss {final_loss:.6}",
            outcome.log.records.len()
        );
        runs.push(json!({
            "seed": seed,
            "iterations": outcome.log.records.len(),
            "final_loss": final_loss,
            "log": format!("seed{seed}/train_log.jsonl"),
            "checkpoint": format!("seed{seed}/final.ckpt"),
        }));
        seed_seconds.push(json!({"seed": seed, "seconds": started.elapsed().as_secs_f64()}));
    }
    let result = json!({
        "epochs": loaded.config.train.epochs,
        "bin_counts": plan.bin_counts(),
        "runs": runs,
    });
    Ok((result, json!({"per_seed": seed_seconds})))
}

// ---------------------------------------------------------------------------
// search {random|evo}
// ---------------------------------------------------------------------------

fn cmd_search(loaded: &LoadedConfig, out: &Path, evolutionary: bool) -> Result<(Value, Value)> {
    let graph = loaded.graph()?;
    let plan = stage1_plan(loaded, &graph)?;
    let splits = load_splits(loaded)?;
    let budget = loaded.budget(&graph)?;
    let mut runs = Vec::new();
    let mut best: Option<EvalRecord> = None;
    let mut accs = Vec::new();
    let mut eval_rows = Vec::new();
    let mut gen_rows = Vec::new();
    let mut seed_seconds = Vec::new();
    for &seed in &loaded.config.seeds {
        let started = Instant::now();
        let (train, evo) = seeded(loaded, seed);
        let samples = if evolutionary { None } else { Some(loaded.config.random_samples) };
        let result = train_then_search(&graph, &plan, budget, &splits, &train, &evo, samples)?;
        for rec in &result.log {
            eval_rows.push(vec![
                seed.to_string(),
                fmt_width(&rec.width),
                rec.flops.to_string(),
                rec.accuracy.to_string(),
            ]);
        }
        for g in &result.generations {
            gen_rows.push(vec![
                seed.to_string(),
                g.generation.to_string(),
                g.best_acc.to_string(),
                g.best_flops.to_string(),
            ]);
        }
        println!(
            "seed {seed}: best width {} val accuracy {:.4} flops {} ({} widths evaluated)",
            fmt_width(&result.best.width),
            result.best.accuracy,
            result.best.flops,
            result.log.len()
        );
        accs.push(result.best.accuracy);
        if best.as_ref().is_none_or(|b| better(&result.best, b)) {
            best = Some(result.best.clone());
        }
        runs.push(json!({
            "seed": seed,
            "best": record_json(&result.best),
            "evaluations": result.log.len(),
        }));
        seed_seconds.push(json!({"seed": seed, "seconds": started.elapsed().as_secs_f64()}));
    }
    write_csv(out, "eval_log.csv", &["seed", "width", "flops", "accuracy"], &eval_rows)?;
    if evolutionary {
        write_csv(
            out,
            "generations.csv",
            &["seed", "generation", "best_acc", "best_flops"],
            &gen_rows,
        )?;
    }
    let result = json!({
        "strategy": if evolutionary { "evo" } else { "random" },
        "budget": budget,
        "bin_counts": plan.bin_counts(),
        "runs": runs,
        "best": record_json(&best.expect("seeds non-empty")),
        "mean_best_accuracy": mean(&accs),
    });
    Ok((result, json!({"per_seed": seed_seconds})))
}

// ---------------------------------------------------------------------------
// multi-stage
// ---------------------------------------------------------------------------

fn cmd_multi_stage(loaded: &LoadedConfig, out: &Path) -> Result<(Value, Value)> {
    let graph = loaded.graph()?;
    let schedule = loaded.schedule(&graph)?;
    let splits = load_splits(loaded)?;
    let mut runs = Vec::new();
    let mut stage_rows = Vec::new();
    let mut best: Option<(f64, u64, Vec<usize>)> = None;
    let mut accs = Vec::new();
    let mut seed_seconds = Vec::new();
    for &seed in &loaded.config.seeds {
        let started = Instant::now();
        let (train, evo) = seeded(loaded, seed);
        let outcome = multi_stage_search(&graph, &schedule, &train, &evo, &splits)?;
        for st in &outcome.stages {
            stage_rows.push(vec![
                seed.to_string(),
                st.stage.to_string(),
                st.beta.to_string(),
                st.budget.to_string(),
                fmt_width(&st.winner.width),
                st.winner.flops.to_string(),
                st.winner.accuracy.to_string(),
            ]);
        }
        println!(
            "seed {seed}: final width {} val accuracy {:.4} flops {}",
            fmt_width(&outcome.final_width),
            outcome.final_accuracy,
            outcome.final_flops
        );
        accs.push(outcome.final_accuracy);
        let key = (outcome.final_accuracy, outcome.final_flops, outcome.final_width.clone());
        if best
            .as_ref()
            .is_none_or(|(a, f, w)| (key.0, std::cmp::Reverse(key.1), std::cmp::Reverse(&key.2))
                > (*a, std::cmp::Reverse(*f), std::cmp::Reverse(w)))
        {
            best = Some(key);
        }
        runs.push(json!({
            "seed": seed,
            "outcome": serde_json::to_value(&outcome)?,
        }));
        seed_seconds.push(json!({"seed": seed, "seconds": started.elapsed().as_secs_f64()}));
    }
    write_csv(
        out,
        "stages.csv",
        &["seed", "stage", "beta", "budget", "width", "flops", "accuracy"],
        &stage_rows,
    )?;
    let (acc, flops, width) = best.expect("seeds non-empty");
    let result = json!({
        "stages": schedule.stages,
        "final_budget": schedule.final_budget,
        "runs": runs,
        "best": { "width": width, "accuracy": acc, "flops": flops },
        "mean_final_accuracy": mean(&accs),
    });
    Ok((result, json!({"per_seed": seed_seconds})))
}

// ---------------------------------------------------------------------------
// retrain
// ---------------------------------------------------------------------------

/// Pull `result.best.width` out of a previously written result document.
fn width_from_result(path: &Path) -> Result<Vec<usize>> {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidConfig(format!("cannot read result document {}: {e}", path.display()))
    })?)?;
    let width = doc
        .pointer("/result/best/width")
        .and_then(Value::as_array)
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "{} has no result.best.width field to retrain",
                path.display()
            ))
        })?;
    width
        .iter()
        .map(|v| {
            v.as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::InvalidConfig("width entries must be non-negative integers".into()))
        })
        .collect()
}

fn cmd_retrain(
    loaded: &LoadedConfig,
    out: &Path,
    width: Option<&[usize]>,
    from_result: Option<&Path>,
) -> Result<(Value, Value)> {
    let graph = loaded.graph()?;
    let splits = load_splits(loaded)?;
    let channels = match (width, from_result) {
        (Some(w), None) => w.to_vec(),
        (None, Some(path)) => width_from_result(path)?,
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig("give either --width or --from-result, not both".into()))
        }
        (None, None) => {
            return Err(Error::InvalidConfig("retrain needs --width a,b,... or --from-result PATH".into()))
        }
    };
    let width = WidthVector::from_channels(channels);
    let (result, details) = retrain_runs(loaded, &graph, &width, &splits, out)?;
    Ok((result, details))
}

/// Retrain `width` once per seed; shared by retrain and baseline-uniform.
fn retrain_runs(
    loaded: &LoadedConfig,
    graph: &NetworkGraph,
    width: &WidthVector,
    splits: &Splits,
    out: &Path,
) -> Result<(Value, Value)> {
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    let mut accs = Vec::new();
    let mut seed_seconds = Vec::new();
    for &seed in &loaded.config.seeds {
        let started = Instant::now();
        let (train, _) = seeded(loaded, seed);
        let outcome = retrain_from_scratch(graph, width, &train, splits)?;
        println!(
            "seed {seed}: width {} test accuracy {:.4}",
            fmt_width(&outcome.width),
            outcome.accuracy
        );
        rows.push(vec![seed.to_string(), outcome.accuracy.to_string()]);
        accs.push(outcome.accuracy);
        runs.push(json!({
            "seed": seed,
            "test_accuracy": outcome.accuracy,
            "final_loss": outcome.log.final_loss(),
        }));
        seed_seconds.push(json!({"seed": seed, "seconds": started.elapsed().as_secs_f64()}));
    }
    write_csv(out, "runs.csv", &["seed", "test_accuracy"], &rows)?;
    let result = json!({
        "best": {
            "width": width.channels(),
            "flops": network_flops(graph, width)?,
            "accuracy": accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        },
        "runs": runs,
        "mean_test_accuracy": mean(&accs),
    });
    Ok((result, json!({"per_seed": seed_seconds})))
}

// ---------------------------------------------------------------------------
// baseline {uniform|random}
// ---------------------------------------------------------------------------

fn cmd_baseline_uniform(loaded: &LoadedConfig, out: &Path) -> Result<(Value, Value)> {
    let graph = loaded.graph()?;
    let splits = load_splits(loaded)?;
    let budget = loaded.budget(&graph)?;
    let width = uniform_baseline(&graph, budget)?;
    println!("uniform width under budget {budget}: {}", fmt_width(width.channels()));
    let (mut result, details) = retrain_runs(loaded, &graph, &width, &splits, out)?;
    result["budget"] = json!(budget);
    Ok((result, details))
}

fn cmd_baseline_random(loaded: &LoadedConfig, out: &Path) -> Result<(Value, Value)> {
    let graph = loaded.graph()?;
    let plan = stage1_plan(loaded, &graph)?;
    let splits = load_splits(loaded)?;
    let budget = loaded.budget(&graph)?;
    let mut runs = Vec::new();
    let mut candidate_rows = Vec::new();
    let mut accs = Vec::new();
    let mut best: Option<(f64, u64, Vec<usize>)> = None;
    let mut seed_seconds = Vec::new();
    for &seed in &loaded.config.seeds {
        let started = Instant::now();
        let (train, _) = seeded(loaded, seed);
        let outcome = random_baseline(
            &graph,
            &plan,
            budget,
            &train,
            &loaded.config.random_baseline,
            seed,
            &splits,
        )?;
        for (w, acc) in &outcome.candidates {
            candidate_rows.push(vec![seed.to_string(), fmt_width(w), acc.to_string()]);
        }
        println!(
            "seed {seed}: picked width {} test accuracy {:.4}",
            fmt_width(&outcome.width),
            outcome.accuracy
        );
        accs.push(outcome.accuracy);
        let key = (outcome.accuracy, outcome.flops, outcome.width.clone());
        if best
            .as_ref()
            .is_none_or(|(a, f, w)| (key.0, std::cmp::Reverse(key.1), std::cmp::Reverse(&key.2))
                > (*a, std::cmp::Reverse(*f), std::cmp::Reverse(w)))
        {
            best = Some(key);
        }
        runs.push(json!({
            "seed": seed,
            "width": outcome.width,
            "flops": outcome.flops,
            "test_accuracy": outcome.accuracy,
            "candidates": outcome.candidates.iter()
                .map(|(w, a)| json!({"width": w, "val_accuracy": a}))
                .collect::<Vec<_>>(),
        }));
        seed_seconds.push(json!({"seed": seed, "seconds": started.elapsed().as_secs_f64()}));
    }
    write_csv(out, "candidates.csv", &["seed", "width", "val_accuracy"], &candidate_rows)?;
    let (acc, flops, width) = best.expect("seeds non-empty");
    let result = json!({
        "budget": budget,
        "candidates_per_seed": loaded.config.random_baseline.candidates,
        "runs": runs,
        "best": { "width": width, "accuracy": acc, "flops": flops },
        "mean_test_accuracy": mean(&accs),
    });
    Ok((result, json!({"per_seed": seed_seconds})))
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

/// Shared sweep: for each setting, train a supernet and search it, then
/// report the searched best per (setting, seed) plus per-setting means.
fn ablate<S: Clone + std::fmt::Display>(
    loaded: &LoadedConfig,
    out: &Path,
    label: &str,
    settings: &[S],
    mut apply: impl FnMut(&mut TrainConfig, &S),
    plan_for: impl Fn(&NetworkGraph, &S) -> Result<BinPlan>,
) -> Result<(Value, Value)> {
    let graph = loaded.graph()?;
    let splits = load_splits(loaded)?;
    let budget = loaded.budget(&graph)?;
    let mut rows = Vec::new();
    let mut row_values = Vec::new();
    let mut means = Vec::new();
    let mut cells = Vec::new();
    for setting in settings {
        let plan = plan_for(&graph, setting)?;
        let mut accs = Vec::new();
        for &seed in &loaded.config.seeds {
            let started = Instant::now();
            let (mut train, evo) = seeded(loaded, seed);
            apply(&mut train, setting);
            train.validate()?;
            let result = train_then_search(&graph, &plan, budget, &splits, &train, &evo, None)?;
            println!(
                "{label}={setting} seed {seed}: best accuracy {:.4} (width {})",
                result.best.accuracy,
                fmt_width(&result.best.width)
            );
            rows.push(vec![
                setting.to_string(),
                seed.to_string(),
                result.best.accuracy.to_string(),
                result.best.flops.to_string(),
                fmt_width(&result.best.width),
            ]);
            row_values.push(json!({
                label: setting.to_string(),
                "seed": seed,
                "best_accuracy": result.best.accuracy,
                "best_flops": result.best.flops,
                "best_width": result.best.width,
            }));
            accs.push(result.best.accuracy);
            cells.push(json!({
                label: setting.to_string(),
                "seed": seed,
                "seconds": started.elapsed().as_secs_f64(),
            }));
        }
        means.push(json!({
            label: setting.to_string(),
            "mean_best_accuracy": mean(&accs),
            "space_size": search_space_size(std::slice::from_ref(&plan))?.to_string(),
        }));
    }
    write_csv(
        out,
        "rows.csv",
        &[label, "seed", "best_accuracy", "best_flops", "best_width"],
        &rows,
    )?;
    let result = json!({
        "budget": budget,
        "rows": row_values,
        "means": means,
    });
    Ok((result, json!({"per_cell": cells})))
}

fn cmd_ablate_r(loaded: &LoadedConfig, out: &Path) -> Result<(Value, Value)> {
    let beta0 = loaded.config.beta0;
    ablate(
        loaded,
        out,
        "r",
        &[0usize, 1, 2, 3],
        |train, &r| train.offset = r,
        |graph, _| plan_bins(graph, beta0),
    )
}

fn cmd_ablate_lambda(loaded: &LoadedConfig, out: &Path) -> Result<(Value, Value)> {
    let beta0 = loaded.config.beta0;
    ablate(
        loaded,
        out,
        "lambda",
        &[0.0f64, 0.25, 0.5, 0.75, 1.0],
        |train, &l| train.warmup_fraction = l,
        |graph, _| plan_bins(graph, beta0),
    )
}

fn cmd_ablate_bins(loaded: &LoadedConfig, out: &Path) -> Result<(Value, Value)> {
    let beta0 = loaded.config.beta0;
    // The uniform variant gets the bin count whose space size is nearest
    // the sensitivity-aware one (geometric mean of its per-group counts),
    // so the two searches cover comparably sized spaces.
    let uniform_k = |graph: &NetworkGraph| -> Result<usize> {
        let plan = plan_bins(graph, beta0)?;
        let counts = plan.bin_counts();
        let log_mean = counts.iter().map(|&c| (c as f64).ln()).sum::<f64>() / counts.len() as f64;
        Ok((log_mean.exp().round() as usize).max(1))
    };
    ablate(
        loaded,
        out,
        "mode",
        &["sensitive", "uniform"],
        |_, _| {},
        |graph, mode| {
            if *mode == "sensitive" {
                plan_bins(graph, beta0)
            } else {
                plan_uniform_bins(graph, uniform_k(graph)?)
            }
        },
    )
}

// ---------------------------------------------------------------------------
// rank-corr
// ---------------------------------------------------------------------------

fn cmd_rank_corr(loaded: &LoadedConfig, out: &Path) -> Result<(Value, Value)> {
    let graph = loaded.graph()?;
    let plan = stage1_plan(loaded, &graph)?;
    let splits = load_splits(loaded)?;
    let wanted = loaded.config.rank_widths;

    // A fixed roster of widths, shared by every seed: the whole space if
    // it is small, otherwise a seeded distinct sample.
    let bins_list: Vec<Vec<usize>> = match enumerate_space(&plan, wanted) {
        Ok(all) => all,
        Err(_) => {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(loaded.config.split_seed);
            let counts = plan.bin_counts();
            let mut seen = std::collections::HashSet::new();
            let mut picked = Vec::new();
            let mut tries = 0;
            while picked.len() < wanted && tries < 1000 * wanted {
                tries += 1;
                let bins: Vec<usize> = counts.iter().map(|&b| rng.random_range(1..=b)).collect();
                if seen.insert(bins.clone()) {
                    picked.push(bins);
                }
            }
            picked
        }
    };
    if bins_list.len() < 2 {
        return Err(Error::InvalidConfig("rank-corr needs at least 2 distinct widths".into()));
    }
    let widths: Vec<WidthVector> = bins_list
        .iter()
        .map(|bins| crate::binplan::widths_from_bins(&plan, bins))
        .collect::<Result<Vec<_>>>()?;

    let mut runs = Vec::new();
    let mut rows = Vec::new();
    let mut taus = Vec::new();
    let mut seed_seconds = Vec::new();
    for &seed in &loaded.config.seeds {
        let started = Instant::now();
        let (train, _) = seeded(loaded, seed);
        // From-scratch oracle accuracy per width.
        let oracle: Vec<f64> = widths
            .iter()
            .map(|w| Ok(retrain_from_scratch(&graph, w, &train, &splits)?.accuracy))
            .collect::<Result<Vec<_>>>()?;
        // Supernet max-max score per width, and the tau between the two.
        let outcome = train_supernet(&graph, &plan, &train, &splits.train, None)?;
        let (tau, scores) = rank_correlation(
            &outcome.state,
            &graph,
            &plan,
            Offset(train.offset),
            train.policy,
            seed,
            &widths,
            &oracle,
            &splits.val,
        )?;
        for ((w, s), o) in widths.iter().zip(&scores).zip(&oracle) {
            rows.push(vec![
                seed.to_string(),
                fmt_width(w.channels()),
                s.to_string(),
                o.to_string(),
            ]);
        }
        println!("seed {seed}: Kendall tau-b = {tau:.4} over {} widths", widths.len());
        taus.push(tau);
        runs.push(json!({
            "seed": seed,
            "tau": tau,
            "scores": scores,
            "oracle": oracle,
        }));
        seed_seconds.push(json!({"seed": seed, "seconds": started.elapsed().as_secs_f64()}));
    }
    write_csv(out, "rows.csv", &["seed", "width", "supernet_score", "oracle_accuracy"], &rows)?;
    let result = json!({
        "widths": widths.iter().map(|w| w.channels().to_vec()).collect::<Vec<_>>(),
        "offset": loaded.config.train.offset,
        "runs": runs,
        "mean_tau": mean(&taus),
    });
    Ok((result, json!({"per_seed": seed_seconds})))
}
