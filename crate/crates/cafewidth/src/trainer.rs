//! Supernet training with candidate racing.
//!
//! Each iteration samples one width vector uniformly over the bin space,
//! enumerates that width's locally free candidate sub-networks, evaluates
//! them forward-only, and applies exactly one SGD step to the candidate
//! with the smallest batch loss (ties -> lowest index). An optional warmup
//! fraction trains a uniformly random candidate instead, and offset 0
//! degenerates to plain single-path training of the fixed pattern.
//!
//! [`replay_training`] re-derives a whole trajectory from its log and
//! asserts, step by step, that the chosen candidate really was the argmin
//! and that the forward scan never touched the weights.

use std::io::{BufRead, Write as IoWrite};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archgraph::{NetworkGraph, WidthVector};
use crate::binplan::{widths_from_bins, BinPlan};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nnkernel::{backward_and_step, checkpoint, masked_forward, Batch, Selection, SupernetState};
use crate::sharing::{candidate_subnets, AssignmentPattern, CandidatePolicy, Offset};

/// Learning-rate schedule over the whole run (`total` iterations).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// Half-cosine decay from `lr0` at iteration 0 towards `lr_min`.
    Cosine { lr0: f64, lr_min: f64 },
    /// Multiply `lr0` by `gamma` every `every` iterations.
    Step { lr0: f64, gamma: f64, every: usize },
}

impl LrSchedule {
    pub fn at(&self, iter: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Cosine { lr0, lr_min } => {
                let t = iter as f64 / total.max(1) as f64;
                lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
            }
            LrSchedule::Step { lr0, gamma, every } => lr0 * gamma.powi((iter / every.max(1)) as i32),
        }
    }

    pub fn lr0(&self) -> f64 {
        match *self {
            LrSchedule::Cosine { lr0, .. } | LrSchedule::Step { lr0, .. } => lr0,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidConfig(reason));
        match *self {
            LrSchedule::Cosine { lr0, lr_min } => {
                if !(lr0 > 0.0 && lr0.is_finite()) {
                    return bad(format!("lr0 {lr0} must be positive"));
                }
                if !(lr_min >= 0.0 && lr_min <= lr0) {
                    return bad(format!("lr_min {lr_min} must lie in [0, lr0]"));
                }
            }
            LrSchedule::Step { lr0, gamma, every } => {
                if !(lr0 > 0.0 && lr0.is_finite()) {
                    return bad(format!("lr0 {lr0} must be positive"));
                }
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return bad(format!("step decay {gamma} must lie in (0, 1]"));
                }
                if every == 0 {
                    return bad("step period must be >= 1".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Free-zone half-width r; 0 recovers the fixed channel pattern.
    pub offset: usize,
    pub policy: CandidatePolicy,
    /// Fraction of iterations that train a random candidate before
    /// candidate racing starts (0 = race from the first step).
    pub warmup_fraction: f64,
    pub seed: u64,
    /// Save a checkpoint every this many epochs (needs a directory).
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
}

impl TrainConfig {
    /// Small-but-sensible defaults for desk-scale runs.
    pub fn desk_default() -> TrainConfig {
        TrainConfig {
            epochs: 4,
            batch_size: 32,
            lr: LrSchedule::Cosine { lr0: 0.1, lr_min: 1e-3 },
            momentum: 0.9,
            weight_decay: 1e-4,
            offset: 1,
            policy: CandidatePolicy::SharedCombination,
            warmup_fraction: 0.0,
            seed: 0,
            checkpoint_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        self.lr.validate()?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!("momentum {} must lie in [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "weight decay {} must be finite and >= 0",
                self.weight_decay
            )));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidConfig(format!(
                "warmup fraction {} must lie in [0, 1]",
                self.warmup_fraction
            )));
        }
        if let Some(0) = self.checkpoint_every {
            return Err(Error::InvalidConfig("checkpoint period must be >= 1".into()));
        }
        Ok(())
    }
}

/// One training iteration as logged (and replayed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iter: usize,
    pub width: Vec<usize>,
    pub candidate: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn write_jsonl(&self, out: &mut impl IoWrite) -> Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut *out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn read_jsonl(input: &mut impl BufRead) -> Result<TrainLog> {
        let mut records = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Ok(TrainLog { records })
    }

    pub fn load_jsonl(path: &Path) -> Result<TrainLog> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_jsonl(&mut file)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub state: SupernetState,
    pub log: TrainLog,
}

/// Draw each group's bin count independently and uniformly from
/// `[1, B_g]`, then expand to channel counts.
pub fn sample_width(plan: &BinPlan, rng: &mut ChaCha8Rng) -> Result<WidthVector> {
    let counts: Vec<usize> = plan.bin_counts().iter().map(|&b| rng.random_range(1..=b)).collect();
    widths_from_bins(plan, &counts)
}

/// Deterministic per-step seed for candidate sampling (only consumed by
/// the sampled-candidates policy).
fn candidate_seed(seed: u64, step: u64) -> u64 {
    seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Forward losses of every candidate, in candidate order. Read-only.
fn scan_candidates(
    state: &SupernetState,
    graph: &NetworkGraph,
    plan: &BinPlan,
    candidates: &[AssignmentPattern],
    batch: &Batch,
) -> Result<Vec<f64>> {
    candidates
        .par_iter()
        .map(|pattern| {
            let sel = Selection::from_pattern(graph, plan, pattern)?;
            Ok(masked_forward(state, graph, &sel, batch)?.0)
        })
        .collect()
}

fn argmin(losses: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate().skip(1) {
        if l < losses[best] {
            best = i;
        }
    }
    best
}

/// One candidate-racing step at the given width: evaluate every candidate
/// forward-only, pick the smallest batch loss (ties -> lowest index), and
/// update that candidate alone. Returns the chosen index and its loss.
pub fn min_min_step(
    state: &mut SupernetState,
    graph: &NetworkGraph,
    width: &WidthVector,
    plan: &BinPlan,
    config: &TrainConfig,
    batch: &Batch,
    lr: f64,
) -> Result<(usize, f64)> {
    let candidates = candidate_subnets(
        width,
        plan,
        Offset(config.offset),
        config.policy,
        candidate_seed(config.seed, state.step),
    )?;
    let chosen = if candidates.len() > 1 {
        let before = state.content_hash();
        let losses = scan_candidates(state, graph, plan, &candidates, batch)?;
        debug_assert_eq!(before, state.content_hash(), "forward scan must not mutate state");
        argmin(&losses)
    } else {
        0
    };
    let sel = Selection::from_pattern(graph, plan, &candidates[chosen])?;
    let loss = backward_and_step(state, graph, &sel, batch, lr, config.momentum, config.weight_decay)?;
    Ok((chosen, loss))
}

/// What widths and candidates a training run draws each iteration.
enum Mode<'a> {
    /// Sample a width, race its candidates (with optional warmup).
    MinMin { plan: &'a BinPlan },
    /// Sample a width, always train its fixed prefix pattern
    /// (single-path baseline; consumes the same width RNG draws).
    FixedPattern { plan: &'a BinPlan },
    /// Full width every step: ordinary training of a standalone network.
    Plain,
}

/// When replaying, the expected log and the per-step invariant checks.
struct Replayer<'a> {
    expected: &'a [TrainRecord],
}

impl Replayer<'_> {
    fn check(
        &self,
        t: usize,
        width: &[usize],
        candidate: usize,
        loss: f64,
        lr: f64,
        scan_losses: Option<&[f64]>,
    ) -> Result<()> {
        let fail = |reason: String| Error::InvalidConfig(format!("log replay diverged at iteration {t}: {reason}"));
        let rec = self
            .expected
            .get(t)
            .ok_or_else(|| fail("log ended early".into()))?;
        if rec.iter != t || rec.width != width || rec.candidate != candidate {
            return Err(fail(format!(
                "logged (iter {}, width {:?}, candidate {}) vs replayed ({t}, {:?}, {candidate})",
                rec.iter, rec.width, rec.candidate, width
            )));
        }
        if rec.loss.to_bits() != loss.to_bits() || rec.lr.to_bits() != lr.to_bits() {
            return Err(fail(format!(
                "logged (loss {}, lr {}) vs replayed ({loss}, {lr})",
                rec.loss, rec.lr
            )));
        }
        if let Some(losses) = scan_losses {
            if losses.iter().any(|&l| l < losses[candidate]) || argmin(losses) != candidate {
                return Err(fail(format!(
                    "candidate {candidate} (loss {}) is not the argmin of {losses:?}",
                    losses[candidate]
                )));
            }
        }
        Ok(())
    }
}

fn run_training(
    graph: &NetworkGraph,
    mode: Mode,
    config: &TrainConfig,
    data: &Dataset,
    checkpoint_dir: Option<&Path>,
    replay: Option<&TrainLog>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::DataFormat("training data is empty".into()));
    }
    if config.checkpoint_every.is_some() && checkpoint_dir.is_none() {
        return Err(Error::InvalidConfig("checkpointing requested without a directory".into()));
    }

    let mut state = SupernetState::init(graph, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let iters_per_epoch = data.len().div_ceil(config.batch_size);
    let total = config.epochs * iters_per_epoch;
    let warmup_iters = (config.warmup_fraction * total as f64).floor() as usize;
    let replayer = replay.map(|log| Replayer { expected: &log.records });

    let mut records = Vec::with_capacity(total);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (i, chunk) in order.chunks(config.batch_size).enumerate() {
            let t = epoch * iters_per_epoch + i;
            let lr = config.lr.at(t, total);
            let batch = data.gather(chunk)?;

            let (width, candidate, loss, scan_losses) = match &mode {
                Mode::Plain => {
                    let sel = Selection::full(graph);
                    let loss = step(&mut state, graph, &sel, &batch, lr, config, t)?;
                    (graph.full_widths(), 0, loss, None)
                }
                Mode::FixedPattern { plan } => {
                    let width = sample_width(plan, &mut rng)?;
                    let sel = Selection::fixed(graph, &width)?;
                    let loss = step(&mut state, graph, &sel, &batch, lr, config, t)?;
                    (width, 0, loss, None)
                }
                Mode::MinMin { plan } => {
                    let width = sample_width(plan, &mut rng)?;
                    let candidates = candidate_subnets(
                        &width,
                        plan,
                        Offset(config.offset),
                        config.policy,
                        candidate_seed(config.seed, state.step),
                    )?;
                    // Racing (and the warmup lottery) only exists when
                    // there is more than one candidate; with a single
                    // candidate no RNG is drawn and no scan runs, which
                    // keeps offset-0 runs bit-identical to FixedPattern.
                    let (candidate, scan_losses) = if candidates.len() == 1 {
                        (0, None)
                    } else if t < warmup_iters {
                        let pick = rng.random_range(0..candidates.len());
                        let losses = if replayer.is_some() {
                            Some(scan_candidates(&state, graph, plan, &candidates, &batch)?)
                        } else {
                            None
                        };
                        (pick, losses)
                    } else {
                        let before = state.content_hash();
                        let losses = scan_candidates(&state, graph, plan, &candidates, &batch)?;
                        if before != state.content_hash() {
                            return Err(Error::Numeric {
                                layer: 0,
                                reason: format!("iteration {t}: forward scan mutated the supernet"),
                            });
                        }
                        (argmin(&losses), Some(losses))
                    };
                    let sel = Selection::from_pattern(graph, plan, &candidates[candidate])?;
                    let loss = step(&mut state, graph, &sel, &batch, lr, config, t)?;
                    (width, candidate, loss, scan_losses)
                }
            };

            if let Some(rp) = &replayer {
                // Warmup picks are random, not argmin; only racing steps
                // carry the argmin obligation.
                let racing = matches!(mode, Mode::MinMin { .. }) && t >= warmup_iters;
                rp.check(
                    t,
                    width.channels(),
                    candidate,
                    loss,
                    lr,
                    if racing { scan_losses.as_deref() } else { None },
                )?;
            }
            records.push(TrainRecord {
                iter: t,
                width: width.channels().to_vec(),
                candidate,
                loss,
                lr,
            });
        }
        if let (Some(every), Some(dir)) = (config.checkpoint_every, checkpoint_dir) {
            if (epoch + 1) % every == 0 || epoch + 1 == config.epochs {
                checkpoint::save_checkpoint(&state, &dir.join(format!("epoch{:04}.ckpt", epoch + 1)))?;
            }
        }
    }
    Ok(TrainOutcome {
        state,
        log: TrainLog { records },
    })
}

/// One update step, tagging numeric failures with the iteration index.
fn step(
    state: &mut SupernetState,
    graph: &NetworkGraph,
    sel: &Selection,
    batch: &Batch,
    lr: f64,
    config: &TrainConfig,
    t: usize,
) -> Result<f64> {
    backward_and_step(state, graph, sel, batch, lr, config.momentum, config.weight_decay).map_err(|e| match e {
        Error::Numeric { layer, reason } => Error::Numeric {
            layer,
            reason: format!("iteration {t}: {reason}"),
        },
        other => other,
    })
}

/// Train the supernet with candidate racing (the main trainer).
pub fn train_supernet(
    graph: &NetworkGraph,
    plan: &BinPlan,
    config: &TrainConfig,
    data: &Dataset,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    run_training(graph, Mode::MinMin { plan }, config, data, checkpoint_dir, None)
}

/// Single-path baseline: identical width sampling, but every step trains
/// the fixed prefix pattern. With offset 0 the main trainer reproduces
/// this trajectory bit for bit.
pub fn train_fixed_pattern(
    graph: &NetworkGraph,
    plan: &BinPlan,
    config: &TrainConfig,
    data: &Dataset,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    run_training(graph, Mode::FixedPattern { plan }, config, data, checkpoint_dir, None)
}

/// Ordinary full-width training of a standalone network (no width
/// sampling); used to retrain searched widths from scratch.
pub fn train_plain(
    graph: &NetworkGraph,
    config: &TrainConfig,
    data: &Dataset,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    run_training(graph, Mode::Plain, config, data, checkpoint_dir, None)
}

/// Re-derive a training trajectory and verify it against its log: same
/// widths, candidates, losses (bitwise) and learning rates, the racing
/// argmin honoured at every step, and a scan that never mutates weights.
pub fn replay_training(
    graph: &NetworkGraph,
    plan: &BinPlan,
    config: &TrainConfig,
    data: &Dataset,
    log: &TrainLog,
) -> Result<()> {
    let outcome = run_training(graph, Mode::MinMin { plan }, config, data, None, Some(log))?;
    if outcome.log.records.len() != log.records.len() {
        return Err(Error::InvalidConfig(format!(
            "log replay diverged: {} logged iterations, {} replayed",
            log.records.len(),
            outcome.log.records.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binplan::plan_uniform_bins;
    use crate::dataset::gaussian_blobs;
    use crate::toy::dense_chain;

    fn blob_setup(seed: u64) -> (NetworkGraph, BinPlan, Dataset) {
        let graph = dense_chain(4, &[6, 6], 3).unwrap();
        let plan = plan_uniform_bins(&graph, 3).unwrap();
        let data = gaussian_blobs(3, 4, 96, 0.3, seed).unwrap();
        (graph, plan, data)
    }

    fn quick_config(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 16,
            lr: LrSchedule::Cosine { lr0: 0.05, lr_min: 1e-3 },
            momentum: 0.9,
            weight_decay: 1e-4,
            offset: 1,
            policy: CandidatePolicy::SharedCombination,
            warmup_fraction: 0.0,
            seed,
            checkpoint_every: None,
        }
    }

    #[test]
    fn sample_width_is_uniform_per_group() {
        let (_graph, plan, _) = blob_setup(0);
        let bins = plan.bin_counts();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 10_000;
        let mut counts = [vec![0usize; bins[0]], vec![0usize; bins[1]]];
        for _ in 0..draws {
            let w = sample_width(&plan, &mut rng).unwrap();
            for g in 0..2 {
                let k = (1..=bins[g]).find(|&k| plan.width_of(g, k).unwrap() == w[g]).unwrap();
                counts[g][k - 1] += 1;
            }
        }
        // Chi-square against uniform: 3 bins, df=2, p>0.01 needs X2 < 9.21.
        for g in 0..2 {
            let expected = draws as f64 / bins[g] as f64;
            let x2: f64 = counts[g].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
            assert!(x2 < 9.21, "group {g} not uniform: {:?} (X2={x2:.2})", counts[g]);
        }
    }

    #[test]
    fn sampled_widths_are_reproducible() {
        let (_, plan, _) = blob_setup(0);
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            assert_eq!(
                sample_width(&plan, &mut a).unwrap().channels(),
                sample_width(&plan, &mut b).unwrap().channels()
            );
        }
    }

    #[test]
    fn min_min_step_picks_the_smallest_loss() {
        let (graph, plan, data) = blob_setup(3);
        let config = quick_config(3);
        let mut state = SupernetState::init(&graph, 3);
        let width = WidthVector::from_channels(vec![4, 4]);
        let batch = data.gather(&(0..32).collect::<Vec<_>>()).unwrap();

        let candidates =
            candidate_subnets(&width, &plan, Offset(1), CandidatePolicy::SharedCombination, 0).unwrap();
        assert!(candidates.len() > 1, "width must race multiple candidates");
        let losses = scan_candidates(&state, &graph, &plan, &candidates, &batch).unwrap();
        let expect = argmin(&losses);

        let (chosen, loss) = min_min_step(&mut state, &graph, &width, &plan, &config, &batch, 0.05).unwrap();
        assert_eq!(chosen, expect);
        assert_eq!(loss.to_bits(), losses[expect].to_bits());
        assert!(losses.iter().all(|&l| losses[chosen] <= l));
    }

    #[test]
    fn min_min_step_does_not_increase_chosen_loss_at_small_lr() {
        let (graph, plan, data) = blob_setup(11);
        let config = quick_config(11);
        let batch = data.gather(&(0..32).collect::<Vec<_>>()).unwrap();
        for seed in 0..3u64 {
            let mut state = SupernetState::init(&graph, seed);
            let width = WidthVector::from_channels(vec![4, 4]);
            let (chosen, before) =
                min_min_step(&mut state, &graph, &width, &plan, &config, &batch, 0.01).unwrap();
            let candidates =
                candidate_subnets(&width, &plan, Offset(1), CandidatePolicy::SharedCombination, 0).unwrap();
            let sel = Selection::from_pattern(&graph, &plan, &candidates[chosen]).unwrap();
            let (after, _) = masked_forward(&state, &graph, &sel, &batch).unwrap();
            assert!(
                after <= before + 1e-9,
                "seed {seed}: loss rose from {before} to {after}"
            );
        }
    }

    #[test]
    fn training_logs_every_iteration_and_replays() {
        let (graph, plan, data) = blob_setup(5);
        let config = quick_config(5);
        let outcome = train_supernet(&graph, &plan, &config, &data, None).unwrap();
        assert_eq!(outcome.log.records.len(), 2 * 6); // 96 samples / 16 per batch
        for (t, rec) in outcome.log.records.iter().enumerate() {
            assert_eq!(rec.iter, t);
            assert!(rec.loss.is_finite());
            assert_eq!(rec.lr, config.lr.at(t, 12));
            assert_eq!(rec.width.len(), 2);
        }
        replay_training(&graph, &plan, &config, &data, &outcome.log).unwrap();

        // A corrupted candidate choice must be caught.
        let mut bad = outcome.log.clone();
        let idx = bad
            .records
            .iter()
            .position(|r| r.candidate != 0)
            .expect("some step raced candidates");
        bad.records[idx].candidate = 0;
        assert!(replay_training(&graph, &plan, &config, &data, &bad).is_err());
    }

    #[test]
    fn warmup_fraction_one_never_races() {
        let (graph, plan, data) = blob_setup(6);
        let mut config = quick_config(6);
        config.warmup_fraction = 1.0;
        let outcome = train_supernet(&graph, &plan, &config, &data, None).unwrap();
        // With pure warmup every candidate pick is a lottery, so at least
        // one step should land off the fixed pattern.
        assert!(outcome.log.records.iter().any(|r| r.candidate != 0));
        replay_training(&graph, &plan, &config, &data, &outcome.log).unwrap();
    }

    #[test]
    fn offset_zero_matches_fixed_pattern_baseline_bitwise() {
        let (graph, plan, data) = blob_setup(8);
        let mut config = quick_config(8);
        config.offset = 0;
        let racing = train_supernet(&graph, &plan, &config, &data, None).unwrap();
        let baseline = train_fixed_pattern(&graph, &plan, &config, &data, None).unwrap();
        assert_eq!(racing.state.content_hash(), baseline.state.content_hash());
        assert_eq!(racing.log, baseline.log);
    }

    #[test]
    fn trainer_is_deterministic() {
        let (graph, plan, data) = blob_setup(9);
        let config = quick_config(9);
        let a = train_supernet(&graph, &plan, &config, &data, None).unwrap();
        let b = train_supernet(&graph, &plan, &config, &data, None).unwrap();
        assert_eq!(a.state.content_hash(), b.state.content_hash());
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn full_width_loss_decreases_on_separable_blobs() {
        let graph = dense_chain(4, &[8, 8], 3).unwrap();
        let plan = plan_uniform_bins(&graph, 2).unwrap();
        let mut first = 0.0;
        let mut last = 0.0;
        for seed in 0..3u64 {
            let data = gaussian_blobs(3, 4, 120, 0.25, 40 + seed).unwrap();
            let mut config = quick_config(seed);
            config.epochs = 4;
            let outcome = train_supernet(&graph, &plan, &config, &data, None).unwrap();
            let full = Selection::full(&graph);
            let batch = data.full_batch().unwrap();
            let fresh = SupernetState::init(&graph, seed);
            first += masked_forward(&fresh, &graph, &full, &batch).unwrap().0;
            last += masked_forward(&outcome.state, &graph, &full, &batch).unwrap().0;
        }
        assert!(
            last < first,
            "mean full-width loss should drop: before {first:.4}, after {last:.4}"
        );
    }

    #[test]
    fn plain_training_runs_and_checkpoints() {
        let graph = dense_chain(4, &[8], 3).unwrap();
        let data = gaussian_blobs(3, 4, 120, 0.25, 1).unwrap();
        let mut config = quick_config(2);
        config.epochs = 4;
        config.checkpoint_every = Some(2);
        let dir = tempfile::tempdir().unwrap();
        let outcome = train_plain(&graph, &config, &data, Some(dir.path())).unwrap();
        assert!(outcome.log.records.iter().all(|r| r.candidate == 0));
        assert!(outcome.log.records.iter().all(|r| r.width == vec![8]));
        assert!(dir.path().join("epoch0002.ckpt").exists());
        assert!(dir.path().join("epoch0004.ckpt").exists());
        let loaded = checkpoint::load_checkpoint(&graph, &dir.path().join("epoch0004.ckpt")).unwrap();
        assert_eq!(loaded.content_hash(), outcome.state.content_hash());
    }

    #[test]
    fn jsonl_round_trip_is_bit_exact() {
        let (graph, plan, data) = blob_setup(12);
        let config = quick_config(12);
        let outcome = train_supernet(&graph, &plan, &config, &data, None).unwrap();
        let mut buf = Vec::new();
        outcome.log.write_jsonl(&mut buf).unwrap();
        let back = TrainLog::read_jsonl(&mut buf.as_slice()).unwrap();
        assert_eq!(back, outcome.log);
        for (a, b) in back.records.iter().zip(&outcome.log.records) {
            assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let (graph, plan, data) = blob_setup(1);
        for breakage in [
            |c: &mut TrainConfig| c.epochs = 0,
            |c: &mut TrainConfig| c.batch_size = 0,
            |c: &mut TrainConfig| c.lr = LrSchedule::Cosine { lr0: 0.0, lr_min: 0.0 },
            |c: &mut TrainConfig| c.lr = LrSchedule::Cosine { lr0: 0.1, lr_min: 0.2 },
            |c: &mut TrainConfig| c.lr = LrSchedule::Step { lr0: 0.1, gamma: 0.0, every: 10 },
            |c: &mut TrainConfig| c.momentum = 1.0,
            |c: &mut TrainConfig| c.weight_decay = -1.0,
            |c: &mut TrainConfig| c.warmup_fraction = 1.5,
            |c: &mut TrainConfig| c.checkpoint_every = Some(0),
        ] {
            let mut config = quick_config(0);
            breakage(&mut config);
            let err = train_supernet(&graph, &plan, &config, &data, None).unwrap_err();
            assert!(matches!(err, Error::InvalidConfig(_)), "{err}");
        }
    }

    #[test]
    fn lr_schedules_have_expected_shape() {
        let cosine = LrSchedule::Cosine { lr0: 0.1, lr_min: 0.001 };
        assert_eq!(cosine.at(0, 100), 0.1);
        assert!(cosine.at(99, 100) < 0.0011 + 0.5 * 0.099 * 0.001);
        assert!(cosine.at(50, 100) < cosine.at(25, 100));
        let step = LrSchedule::Step { lr0: 0.1, gamma: 0.5, every: 10 };
        assert_eq!(step.at(9, 100), 0.1);
        assert_eq!(step.at(10, 100), 0.05);
        assert_eq!(step.at(25, 100), 0.025);
    }
}
