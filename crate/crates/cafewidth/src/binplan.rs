//! Channel bins: the minimal searching unit, sized per group so that cheap
//! groups get coarse bins and expensive groups get fine ones.
//!
//! A group of n channels with bin size b is searched in bin counts
//! 1..=ceil(n/b); every bin holds exactly b channels except the last, which
//! holds the remainder. Bin sizes come from the FLOPs slope of each group:
//! b_g = round(β · max_h ε_h / ε_g), so b_g · ε_g is near-constant and one
//! bin step costs roughly the same FLOPs everywhere.
//!
//! Multi-stage runs shrink the budget linearly toward the target while the
//! minimum bin size β shrinks geometrically by the speed α, so later stages
//! search a finer space around the survivor of the previous stage.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::archgraph::{sensitivities, NetworkGraph, WidthVector};
use crate::error::{Error, Result};

/// Exact non-negative rational, used wherever bin-size arithmetic must stay
/// exact across stages (β, α). Serializes as a string such as `"3/2"` or
/// `"2"`; deserializes from that form, from decimal strings like `"0.25"`,
/// and from JSON numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Rational(Ratio<u64>);

impl Rational {
    pub fn new(numer: u64, denom: u64) -> Result<Self> {
        if denom == 0 {
            return Err(Error::InvalidConfig("rational with zero denominator".into()));
        }
        Ok(Rational(Ratio::new(numer, denom)))
    }

    pub fn from_int(n: u64) -> Self {
        Rational(Ratio::from_integer(n))
    }

    pub fn ratio(&self) -> Ratio<u64> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.numer().is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    pub fn div(&self, other: &Rational) -> Result<Rational> {
        if other.is_zero() {
            return Err(Error::InvalidConfig("division by zero rational".into()));
        }
        Ok(Rational(self.0 / other.0))
    }

    pub fn mul(&self, other: &Rational) -> Rational {
        Rational(self.0 * other.0)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |s: &str| Error::InvalidConfig(format!("cannot parse rational from {s:?}"));
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let numer: u64 = p.trim().parse().map_err(|_| bad(s))?;
            let denom: u64 = q.trim().parse().map_err(|_| bad(s))?;
            return Rational::new(numer, denom);
        }
        if let Some((int_part, frac_part)) = s.split_once('.') {
            if frac_part.is_empty() || frac_part.len() > 18 || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad(s));
            }
            let int_part: u64 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| bad(s))? };
            let frac: u64 = frac_part.parse().map_err(|_| bad(s))?;
            let denom = 10u64.pow(frac_part.len() as u32);
            let numer = int_part
                .checked_mul(denom)
                .and_then(|v| v.checked_add(frac))
                .ok_or_else(|| bad(s))?;
            return Rational::new(numer, denom);
        }
        let n: u64 = s.parse().map_err(|_| bad(s))?;
        Ok(Rational::from_int(n))
    }
}

impl Serialize for Rational {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Float(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Int(n) => Ok(Rational::from_int(n)),
            Repr::Float(f) => {
                let big = num_rational::BigRational::from_float(f)
                    .filter(|r| !r.is_negative())
                    .ok_or_else(|| D::Error::custom(format!("bad rational value {f}")))?;
                let numer = big.numer().to_u64();
                let denom = big.denom().to_u64();
                match (numer, denom) {
                    (Some(n), Some(d)) if d != 0 => Ok(Rational(Ratio::new(n, d))),
                    _ => Err(D::Error::custom(format!("rational value {f} out of range"))),
                }
            }
            Repr::Text(s) => s.parse().map_err(DeError::custom),
        }
    }
}

/// Round a non-negative rational to the nearest integer, ties to even.
pub(crate) fn round_half_even(r: Ratio<u64>) -> u64 {
    let floor = r.to_integer();
    let frac = r - Ratio::from_integer(floor);
    let half = Ratio::new(1, 2);
    match frac.cmp(&half) {
        std::cmp::Ordering::Less => floor,
        std::cmp::Ordering::Greater => floor + 1,
        std::cmp::Ordering::Equal => {
            if floor.is_multiple_of(2) {
                floor
            } else {
                floor + 1
            }
        }
    }
}

/// Bin layout of one width group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupBins {
    pub group: String,
    /// Channels per bin (all bins except possibly the last).
    pub bin_size: usize,
    /// Number of bins; selecting all of them recovers max_width.
    pub bin_count: usize,
    /// Cumulative channel count after each bin; last entry is max_width.
    pub boundaries: Vec<usize>,
}

/// Bin layout for every searchable group, in the graph's canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinPlan {
    pub groups: Vec<GroupBins>,
}

impl BinPlan {
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Bin counts per group (the per-group search range is 1..=B_g).
    pub fn bin_counts(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.bin_count).collect()
    }

    /// Channel count when group `g` keeps its first `k` bins (1-based k).
    pub fn width_of(&self, g: usize, k: usize) -> Result<usize> {
        let info = &self.groups[g];
        if k == 0 || k > info.bin_count {
            return Err(Error::InvalidWidth(format!(
                "group {:?}: bin count {} outside [1, {}]",
                info.group, k, info.bin_count
            )));
        }
        Ok(info.boundaries[k - 1])
    }
}

fn bins_for_group(name: &str, n: usize, bin_size: usize) -> GroupBins {
    debug_assert!(bin_size >= 1 && bin_size <= n);
    let bin_count = n.div_ceil(bin_size);
    let boundaries = (1..=bin_count).map(|k| (k * bin_size).min(n)).collect();
    GroupBins {
        group: name.to_string(),
        bin_size,
        bin_count,
        boundaries,
    }
}

/// Size each group's bins inversely to its FLOPs slope: the most expensive
/// group gets bin size β (clamped to an integer ≥ 1), cheaper groups get
/// proportionally larger bins.
pub fn plan_bins(graph: &NetworkGraph, beta: Rational) -> Result<BinPlan> {
    if beta.is_zero() {
        return Err(Error::InvalidPlan("beta must be positive".into()));
    }
    if graph.groups().is_empty() {
        return Err(Error::InvalidPlan("graph has no searchable width group".into()));
    }
    let eps = sensitivities(graph);
    let max_eps = *eps.iter().max().expect("non-empty");
    if eps.contains(&0) {
        return Err(Error::InvalidPlan("a searchable group has zero FLOPs slope".into()));
    }
    let groups = graph
        .groups()
        .iter()
        .zip(&eps)
        .map(|(info, &e)| {
            let ideal = beta.ratio() * Ratio::new(max_eps, e);
            let b = round_half_even(ideal).clamp(1, info.max_width as u64) as usize;
            bins_for_group(&info.name, info.max_width, b)
        })
        .collect();
    Ok(BinPlan { groups })
}

/// Split every group into (up to) `k` near-equal bins, ignoring FLOPs slopes.
pub fn plan_uniform_bins(graph: &NetworkGraph, k: usize) -> Result<BinPlan> {
    if k == 0 {
        return Err(Error::InvalidPlan("bins per group must be ≥ 1".into()));
    }
    if graph.groups().is_empty() {
        return Err(Error::InvalidPlan("graph has no searchable width group".into()));
    }
    let groups = graph
        .groups()
        .iter()
        .map(|info| {
            let n = info.max_width;
            let b = n.div_ceil(k.min(n));
            bins_for_group(&info.name, n, b)
        })
        .collect();
    Ok(BinPlan { groups })
}

/// Convert per-group bin counts (canonical order) to channel counts.
pub fn widths_from_bins(plan: &BinPlan, bin_counts: &[usize]) -> Result<WidthVector> {
    if bin_counts.len() != plan.group_count() {
        return Err(Error::InvalidWidth(format!(
            "expected {} bin counts, got {}",
            plan.group_count(),
            bin_counts.len()
        )));
    }
    let mut channels = Vec::with_capacity(bin_counts.len());
    for (g, &k) in bin_counts.iter().enumerate() {
        channels.push(plan.width_of(g, k)?);
    }
    Ok(WidthVector::from_channels(channels))
}

/// [`widths_from_bins`] from a group-name map; every group must be present.
pub fn widths_from_bin_map(plan: &BinPlan, bin_counts: &BTreeMap<String, usize>) -> Result<WidthVector> {
    for name in bin_counts.keys() {
        if plan.groups.iter().all(|g| &g.group != name) {
            return Err(Error::UnknownGroup(name.clone()));
        }
    }
    let counts = plan
        .groups
        .iter()
        .map(|g| {
            bin_counts
                .get(&g.group)
                .copied()
                .ok_or_else(|| Error::InvalidWidth(format!("missing bin count for group {:?}", g.group)))
        })
        .collect::<Result<Vec<_>>>()?;
    widths_from_bins(plan, &counts)
}

/// Number of distinct width vectors reachable across all stage plans:
/// Σ over stages of Π over groups of the bin count. Exact.
pub fn search_space_size(plans: &[BinPlan]) -> Result<BigUint> {
    if plans.is_empty() {
        return Err(Error::InvalidPlan("search_space_size needs at least one plan".into()));
    }
    let mut total = BigUint::zero();
    for plan in plans {
        let mut prod = BigUint::one();
        for g in &plan.groups {
            prod *= BigUint::from(g.bin_count);
        }
        total += prod;
    }
    Ok(total)
}

/// Render a big integer as `d.dde±N` scientific notation (plain below 1000).
pub fn format_scientific(n: &BigUint) -> String {
    let digits = n.to_string();
    if digits.len() <= 3 {
        return digits;
    }
    let mantissa: String = digits.chars().take(3).collect();
    format!("{}.{}e{}", &mantissa[..1], &mantissa[1..], digits.len() - 1)
}

/// Budget and bin-size trajectory of a multi-stage run.
///
/// `budgets` has T+1 entries: the full-width FLOPs at index 0, then the
/// budget after each stage, ending exactly at the final target. Stage t
/// (1-based) searches under `budgets[t]` with minimum bin size `betas[t-1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub stages: usize,
    pub budgets: Vec<u64>,
    pub betas: Vec<Rational>,
    pub alpha: Rational,
    pub final_budget: u64,
    /// Rebuild supernet weights from scratch at the start of every stage.
    pub reinit_per_stage: bool,
}

/// Linear budget decay from the full-width FLOPs down to `target`, with the
/// minimum bin size divided by `alpha` at each stage.
pub fn make_schedule(flops0: u64, target: u64, stages: usize, beta0: Rational, alpha: Rational) -> Result<StageSchedule> {
    if stages == 0 {
        return Err(Error::InvalidConfig("schedule needs at least one stage".into()));
    }
    if beta0.is_zero() {
        return Err(Error::InvalidConfig("beta must be positive".into()));
    }
    if alpha.is_zero() {
        return Err(Error::InvalidConfig("alpha must be positive".into()));
    }
    if target > flops0 {
        return Err(Error::InfeasibleBudget(format!(
            "target {target} exceeds full-width FLOPs {flops0}"
        )));
    }
    let span = (flops0 - target) as u128;
    let budgets = (0..=stages)
        .map(|t| {
            let numer = flops0 as u128 * stages as u128 - span * t as u128;
            (numer / stages as u128) as u64
        })
        .collect();
    let mut betas = Vec::with_capacity(stages);
    let mut beta = beta0;
    for _ in 0..stages {
        betas.push(beta);
        beta = beta.div(&alpha)?;
    }
    Ok(StageSchedule {
        stages,
        budgets,
        betas,
        alpha,
        final_budget: target,
        reinit_per_stage: true,
    })
}
