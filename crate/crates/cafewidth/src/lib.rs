//! Width search on a one-shot supernet with locally free weight sharing.
//!
//! The pipeline, end to end:
//!
//! 1. [`archgraph`] — describe a network as layers with named width groups;
//!    exact FLOPs accounting and per-group FLOPs slopes.
//! 2. [`binplan`] — partition each group's channels into slope-equalized
//!    bins (the searching unit) and lay out multi-stage budget schedules.
//! 3. [`sharing`] — fixed and locally free channel-assignment patterns over
//!    bins; candidate sub-networks per width; sharing degree.
//! 4. [`nnkernel`] — masked forward/backward/SGD over full-dimension
//!    supernet weights, in deterministic double precision.
//! 5. [`trainer`] — one-shot supernet training: sample a width each step,
//!    forward all its candidates, backpropagate the best (min-min).
//! 6. [`searcher`] — max-max width evaluation, random/evolutionary search
//!    under a FLOPs budget, multi-stage orchestration, retraining, and
//!    the uniform/random baselines.
//! 7. [`harness`] — experiment configs, dataset plumbing, result files and
//!    the command-line front end.
//!
//! Everything is seeded and deterministic; see `README.md` for the replay
//! guarantees.

pub mod archgraph;
pub mod binplan;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod nnkernel;
pub mod searcher;
pub mod sharing;
pub mod toy;
pub mod trainer;

pub use error::{Error, Result};
