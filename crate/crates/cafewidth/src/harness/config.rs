//! Experiment configuration: a single JSON file names the architecture,
//! the dataset, the training and evolution recipes, the FLOPs budget and
//! its multi-stage decay, and the seeds to run. Command-line flags can
//! override individual fields without editing the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archgraph::{network_flops, NetworkGraph};
use crate::binplan::{make_schedule, Rational, StageSchedule};
use crate::dataset::DataSource;
use crate::error::{Error, Result};
use crate::searcher::{EvoConfig, RandomBaselineConfig};
use crate::sharing::CandidatePolicy;
use crate::toy;
use crate::trainer::TrainConfig;

/// Where the network architecture comes from: a JSON file or a built-in
/// toy constructor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ArchSource {
    /// Layer list in the graph JSON format (see `NetworkGraph::load`).
    File { path: PathBuf },
    /// Four-conv-group CNN for 8x8 single-channel patches.
    PatchCnn { width: usize, classes: usize },
    /// Fully connected chain on flat feature vectors.
    DenseChain {
        input: usize,
        hidden: Vec<usize>,
        classes: usize,
    },
    /// Two-conv-group CNN for h x w single-channel images.
    TinyCnn {
        h: usize,
        w: usize,
        widths: (usize, usize),
        classes: usize,
    },
}

impl ArchSource {
    pub fn load(&self, base: &Path) -> Result<NetworkGraph> {
        match self {
            ArchSource::File { path } => NetworkGraph::load(&resolve_path(base, path)),
            ArchSource::PatchCnn { width, classes } => toy::patch_cnn(*width, *classes),
            ArchSource::DenseChain {
                input,
                hidden,
                classes,
            } => toy::dense_chain(*input, hidden, *classes),
            ArchSource::TinyCnn {
                h,
                w,
                widths,
                classes,
            } => toy::tiny_cnn(*h, *w, *widths, *classes),
        }
    }
}

/// FLOPs budget, absolute or relative to the full-width network.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetSpec {
    Fraction(f64),
    Flops(u64),
}

impl BudgetSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BudgetSpec::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "budget fraction {f} must lie in (0, 1]"
                    )));
                }
            }
            BudgetSpec::Flops(n) => {
                if n == 0 {
                    return Err(Error::InvalidConfig("absolute budget must be >= 1 FLOP".into()));
                }
            }
        }
        Ok(())
    }

    /// Absolute budget for a graph (fractions scale full-width FLOPs).
    pub fn resolve(&self, graph: &NetworkGraph) -> Result<u64> {
        let full = network_flops(graph, &graph.full_widths())?;
        Ok(match *self {
            BudgetSpec::Fraction(f) => (f * full as f64).floor() as u64,
            BudgetSpec::Flops(n) => n,
        })
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_evo() -> EvoConfig {
    EvoConfig {
        population: 16,
        generations: 10,
        mutation_prob: 0.1,
        crossover_prob: 0.9,
        elite_fraction: 0.125,
        seed: 0,
    }
}

fn default_stages() -> usize {
    1
}

fn default_beta0() -> Rational {
    Rational::from_int(1)
}

fn default_alpha() -> Rational {
    Rational::from_int(2)
}

fn default_random_samples() -> usize {
    32
}

fn default_rank_widths() -> usize {
    12
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// One experiment, fully described. Every command reads the same shape
/// and uses the parts it needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub arch: ArchSource,
    pub data: DataSource,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "TrainConfig::desk_default")]
    pub train: TrainConfig,
    #[serde(default = "default_evo")]
    pub evo: EvoConfig,
    pub budget: BudgetSpec,
    /// Number of shrink stages in the budget decay.
    #[serde(default = "default_stages")]
    pub stages: usize,
    /// Initial bin-size multiplier (stage 1 plans with this value).
    #[serde(default = "default_beta0")]
    pub beta0: Rational,
    /// Per-stage divisor applied to the multiplier.
    #[serde(default = "default_alpha")]
    pub alpha: Rational,
    /// Seed for the stratified train/val/test split.
    #[serde(default)]
    pub split_seed: u64,
    /// One full run per seed; training and search seeds derive from it.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Sample count for `search random`.
    #[serde(default = "default_random_samples")]
    pub random_samples: usize,
    /// Width count scored against from-scratch oracles in `rank-corr`.
    #[serde(default = "default_rank_widths")]
    pub rank_widths: usize,
    /// Candidate/pre-training protocol for `baseline random`.
    #[serde(default)]
    pub random_baseline: RandomBaselineConfig,
}

impl ExperimentConfig {
    pub fn validate(&self, base: &Path) -> Result<()> {
        if let ArchSource::File { path } = &self.arch {
            let p = resolve_path(base, path);
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!(
                    "architecture file {} does not exist",
                    p.display()
                )));
            }
        }
        if let Some(p) = self.data.file_path() {
            let p = resolve_path(base, &p);
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!(
                    "dataset file {} does not exist",
                    p.display()
                )));
            }
        }
        self.train.validate()?;
        self.evo.validate()?;
        self.budget.validate()?;
        if self.stages == 0 {
            return Err(Error::InvalidConfig("stages must be >= 1".into()));
        }
        if self.beta0.is_zero() {
            return Err(Error::InvalidConfig("beta0 must be positive".into()));
        }
        if self.alpha.ratio() < num_rational::Ratio::from_integer(1) {
            return Err(Error::InvalidConfig("alpha must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds list must not be empty".into()));
        }
        if self.random_samples == 0 {
            return Err(Error::InvalidConfig("random_samples must be >= 1".into()));
        }
        if self.rank_widths < 2 {
            return Err(Error::InvalidConfig("rank_widths must be >= 2".into()));
        }
        Ok(())
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub budget_fraction: Option<f64>,
    pub stages: Option<usize>,
    pub offset: Option<usize>,
    pub policy: Option<CandidatePolicy>,
    pub reference: bool,
}

/// Parse `shared` or `sampled:M` into a candidate policy.
pub fn parse_policy(s: &str) -> Result<CandidatePolicy> {
    if s == "shared" {
        return Ok(CandidatePolicy::SharedCombination);
    }
    if let Some(m) = s.strip_prefix("sampled:") {
        let m: usize = m
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad candidate count in policy '{s}'")))?;
        if m == 0 {
            return Err(Error::InvalidConfig("sampled policy needs at least 1 candidate".into()));
        }
        return Ok(CandidatePolicy::IndependentSampled(m));
    }
    Err(Error::InvalidConfig(format!(
        "unknown policy '{s}' (expected 'shared' or 'sampled:M')"
    )))
}

fn resolve_path(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// A validated configuration with overrides applied, plus everything a
/// command needs to reference it: the raw bytes' hash and the directory
/// relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
    pub reference: bool,
}

impl LoadedConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<LoadedConfig> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: ExperimentConfig = serde_json::from_slice(&bytes)
            .map_err(|e| Error::InvalidConfig(format!("config {}: {e}", path.display())))?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));

        if let Some(seed) = overrides.seed {
            config.seeds = vec![seed];
        }
        if let Some(f) = overrides.budget_fraction {
            config.budget = BudgetSpec::Fraction(f);
        }
        if let Some(t) = overrides.stages {
            config.stages = t;
        }
        if let Some(r) = overrides.offset {
            config.train.offset = r;
        }
        if let Some(p) = overrides.policy {
            config.train.policy = p;
        }
        if let Some(out) = &overrides.out {
            config.out_dir = out.clone();
        }
        config.validate(&base_dir)?;

        let out_dir = resolve_path(&base_dir, &config.out_dir);
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let config_sha256 = format!("{:x}", hasher.finalize());
        Ok(LoadedConfig {
            config,
            config_sha256,
            base_dir,
            out_dir,
            reference: overrides.reference,
        })
    }

    pub fn graph(&self) -> Result<NetworkGraph> {
        self.config.arch.load(&self.base_dir)
    }

    pub fn dataset(&self) -> Result<crate::dataset::Dataset> {
        self.config.data.load_from(&self.base_dir)
    }

    pub fn budget(&self, graph: &NetworkGraph) -> Result<u64> {
        self.config.budget.resolve(graph)
    }

    pub fn schedule(&self, graph: &NetworkGraph) -> Result<StageSchedule> {
        let full = network_flops(graph, &graph.full_widths())?;
        make_schedule(
            full,
            self.budget(graph)?,
            self.config.stages,
            self.config.beta0,
            self.config.alpha,
        )
    }
}
