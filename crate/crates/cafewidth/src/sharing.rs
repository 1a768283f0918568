//! Channel-assignment patterns at bin granularity.
//!
//! A sub-network keeping `c` of `B` units in a group is described by an
//! index set I(c). The fixed pattern always takes the leftmost prefix
//! [1:c]. The locally free pattern keeps a mandatory base prefix
//! [1:c_b] with c_b = max(c−r−1, 0) and chooses the remaining c−c_b units
//! freely inside the zone [c−r, c+r] (clipped to [1,B] and to exclude the
//! base). The offset r bounds how far assignments may deviate, which in
//! turn lower-bounds the overlap between any chosen assignment and the
//! fixed one at c_b/c.
//!
//! Units here are bins; channel-level behavior is the bin-size-1 case.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize};

use crate::archgraph::WidthVector;
use crate::binplan::{BinPlan, Rational};
use crate::error::{Error, Result};

/// Sorted, strictly increasing 1-based unit indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    /// Validate and wrap a strictly increasing list of 1-based indices.
    pub fn from_sorted(indices: Vec<usize>) -> Result<Self> {
        let mut prev = 0;
        for &i in &indices {
            if i <= prev {
                return Err(Error::InvalidPattern(format!(
                    "indices must be strictly increasing and ≥ 1, got {indices:?}"
                )));
            }
            prev = i;
        }
        Ok(IndexSet(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    /// Size of the intersection with `other` (both sorted: linear merge).
    pub fn intersection_size(&self, other: &IndexSet) -> usize {
        let (mut a, mut b, mut n) = (0, 0, 0);
        while a < self.0.len() && b < other.0.len() {
            match self.0[a].cmp(&other.0[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    a += 1;
                    b += 1;
                }
            }
        }
        n
    }

    /// Union of two disjoint sorted sets.
    fn merge_disjoint(&self, other: &IndexSet) -> IndexSet {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut a, mut b) = (0, 0);
        while a < self.0.len() || b < other.0.len() {
            let take_a = b >= other.0.len() || (a < self.0.len() && self.0[a] < other.0[b]);
            if take_a {
                out.push(self.0[a]);
                a += 1;
            } else {
                out.push(other.0[b]);
                b += 1;
            }
        }
        IndexSet(out)
    }
}

/// Allowed deviation of the free zone; 0 degenerates to the fixed pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Offset(pub usize);

/// Mandatory prefix length for keeping `c` of the units under offset `r`.
pub fn base_len(c: usize, r: Offset) -> usize {
    c.saturating_sub(r.0 + 1)
}

/// The fixed pattern: leftmost `c` units.
pub fn fixed_assignment(c: usize, total_units: usize) -> Result<IndexSet> {
    if c == 0 || c > total_units {
        return Err(Error::InvalidPattern(format!(
            "unit count {c} outside [1, {total_units}]"
        )));
    }
    Ok(IndexSet((1..=c).collect()))
}

/// Inclusive range of unit indices the free part may occupy: the
/// neighborhood [c−r, c+r] clipped to [1, B] and past the base prefix.
pub fn free_zone(c: usize, r: Offset, total_units: usize) -> Result<(usize, usize)> {
    if c == 0 || c > total_units {
        return Err(Error::InvalidPattern(format!(
            "unit count {c} outside [1, {total_units}]"
        )));
    }
    let cb = base_len(c, r);
    let lo = (c.saturating_sub(r.0)).max(cb + 1);
    let hi = (c + r.0).min(total_units);
    Ok((lo, hi))
}

/// All free-part choices for keeping `c` units, in lexicographic order.
/// The first choice is always the tail of the fixed pattern.
fn enumerate_free_subsets(c: usize, r: Offset, total_units: usize) -> Result<(IndexSet, Vec<IndexSet>)> {
    let cb = base_len(c, r);
    let base = IndexSet((1..=cb).collect());
    let (lo, hi) = free_zone(c, r, total_units)?;
    let zone: Vec<usize> = (lo..=hi).collect();
    let need = c - cb;
    // The zone always contains [cb+1, min(c+r, B)] ⊇ need elements.
    assert!(zone.len() >= need, "free zone smaller than required subset");
    let mut subsets = Vec::new();
    let mut pick = vec![0usize; need];
    fn rec(zone: &[usize], need: usize, start: usize, pick: &mut Vec<usize>, depth: usize, out: &mut Vec<IndexSet>) {
        if depth == need {
            out.push(IndexSet(pick.clone()));
            return;
        }
        for i in start..=(zone.len() - (need - depth)) {
            pick[depth] = zone[i];
            rec(zone, need, i + 1, pick, depth + 1, out);
        }
    }
    if need == 0 {
        subsets.push(IndexSet(Vec::new()));
    } else {
        rec(&zone, need, 0, &mut pick, 0, &mut subsets);
    }
    Ok((base, subsets))
}

/// All assignments keeping `c` of `total_units` units under offset `r`,
/// in deterministic lexicographic order. Interior widths with r ≥ 1 yield
/// exactly C(2r+1, r+1) assignments; r = 0 yields only the fixed pattern.
pub fn enumerate_assignments(c: usize, r: Offset, total_units: usize) -> Result<Vec<IndexSet>> {
    let (base, frees) = enumerate_free_subsets(c, r, total_units)?;
    Ok(frees.iter().map(|f| base.merge_disjoint(f)).collect())
}

/// Overlap of two assignments relative to the smaller one: |a∩b| / min(|a|,|b|).
pub fn sharing_degree(a: &IndexSet, b: &IndexSet) -> Result<Rational> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidPattern("sharing degree of an empty set is undefined".into()));
    }
    let inter = a.intersection_size(b) as u64;
    let min = a.len().min(b.len()) as u64;
    Rational::new(inter, min)
}

/// One group's chosen assignment, split into mandatory base and free part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAssignment {
    pub group: String,
    pub base: IndexSet,
    pub free: IndexSet,
}

impl GroupAssignment {
    /// Base and free merged into the full unit set.
    pub fn units(&self) -> IndexSet {
        self.base.merge_disjoint(&self.free)
    }
}

/// Network-wide assignment: one [`GroupAssignment`] per searchable group,
/// in the plan's group order. Serializes for logs as a map from group name
/// to the merged sorted unit list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentPattern {
    pub groups: Vec<GroupAssignment>,
}

impl Serialize for AssignmentPattern {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.groups.len()))?;
        for g in &self.groups {
            map.serialize_entry(&g.group, g.units().indices())?;
        }
        map.end()
    }
}

/// How per-group free choices combine into network-wide candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePolicy {
    /// Candidate k applies every group's k-th enumerated choice (cyclic
    /// reuse for groups with fewer choices); at most C(2r+1, r+1)
    /// candidates total, and candidate 0 is the fixed sub-network.
    SharedCombination,
    /// The given number of candidates, each with per-group choices drawn
    /// uniformly and independently from a seeded generator.
    IndependentSampled(usize),
}

/// Unit count (bin count) each group keeps under `widths`; the widths must
/// lie exactly on the plan's bin boundaries.
pub fn bin_counts_of_widths(widths: &WidthVector, plan: &BinPlan) -> Result<Vec<usize>> {
    if widths.len() != plan.group_count() {
        return Err(Error::InvalidWidth(format!(
            "expected {} group widths, got {}",
            plan.group_count(),
            widths.len()
        )));
    }
    plan.groups
        .iter()
        .enumerate()
        .map(|(g, info)| {
            info.boundaries
                .iter()
                .position(|&b| b == widths[g])
                .map(|p| p + 1)
                .ok_or_else(|| {
                    Error::InvalidWidth(format!(
                        "group {:?}: width {} is not on a bin boundary {:?}",
                        info.group, widths[g], info.boundaries
                    ))
                })
        })
        .collect()
}

/// The sub-network candidates trained and evaluated for one width vector.
pub fn candidate_subnets(
    widths: &WidthVector,
    plan: &BinPlan,
    r: Offset,
    policy: CandidatePolicy,
    seed: u64,
) -> Result<Vec<AssignmentPattern>> {
    let counts = bin_counts_of_widths(widths, plan)?;
    let per_group: Vec<(IndexSet, Vec<IndexSet>)> = plan
        .groups
        .iter()
        .zip(&counts)
        .map(|(info, &k)| enumerate_free_subsets(k, r, info.bin_count))
        .collect::<Result<Vec<_>>>()?;

    match policy {
        CandidatePolicy::SharedCombination => {
            let m = per_group.iter().map(|(_, frees)| frees.len()).max().unwrap_or(1);
            let candidates = (0..m)
                .map(|j| AssignmentPattern {
                    groups: plan
                        .groups
                        .iter()
                        .zip(&per_group)
                        .map(|(info, (base, frees))| GroupAssignment {
                            group: info.group.clone(),
                            base: base.clone(),
                            free: frees[j % frees.len()].clone(),
                        })
                        .collect(),
                })
                .collect();
            Ok(candidates)
        }
        CandidatePolicy::IndependentSampled(m) => {
            if m == 0 {
                return Err(Error::InvalidConfig("IndependentSampled needs at least one candidate".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let candidates = (0..m)
                .map(|_| AssignmentPattern {
                    groups: plan
                        .groups
                        .iter()
                        .zip(&per_group)
                        .map(|(info, (base, frees))| GroupAssignment {
                            group: info.group.clone(),
                            base: base.clone(),
                            free: frees[rng.random_range(0..frees.len())].clone(),
                        })
                        .collect(),
                })
                .collect();
            Ok(candidates)
        }
    }
}

/// Expand a group's unit set to 0-based channel indices under the plan.
pub fn channel_indices(plan: &BinPlan, g: usize, units: &IndexSet) -> Vec<usize> {
    let info = &plan.groups[g];
    let mut out = Vec::new();
    for &u in units.indices() {
        let start = if u == 1 { 0 } else { info.boundaries[u - 2] };
        let end = info.boundaries[u - 1];
        out.extend(start..end);
    }
    out
}

/// Serializable log form of an assignment: group name → merged unit list.
pub fn pattern_log_map(pattern: &AssignmentPattern) -> BTreeMap<String, Vec<usize>> {
    pattern
        .groups
        .iter()
        .map(|g| (g.group.clone(), g.units().indices().to_vec()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archgraph::{LayerSpec, NetworkGraph, INPUT_GROUP, OUTPUT_GROUP};
    use crate::binplan::plan_uniform_bins;

    fn set(v: &[usize]) -> IndexSet {
        IndexSet::from_sorted(v.to_vec()).unwrap()
    }

    #[test]
    fn fixed_assignment_cases() {
        assert_eq!(fixed_assignment(4, 6).unwrap(), set(&[1, 2, 3, 4]));
        assert_eq!(fixed_assignment(1, 6).unwrap(), set(&[1]));
        assert_eq!(fixed_assignment(6, 6).unwrap(), set(&[1, 2, 3, 4, 5, 6]));
        assert!(fixed_assignment(0, 6).is_err());
        assert!(fixed_assignment(7, 6).is_err());
    }

    #[test]
    fn free_zone_cases() {
        assert_eq!(free_zone(4, Offset(1), 6).unwrap(), (3, 5));
        assert_eq!(free_zone(1, Offset(1), 6).unwrap(), (1, 2));
        assert_eq!(free_zone(6, Offset(1), 6).unwrap(), (5, 6));
    }

    #[test]
    fn enumerate_cases() {
        let got = enumerate_assignments(4, Offset(1), 6).unwrap();
        assert_eq!(got, vec![set(&[1, 2, 3, 4]), set(&[1, 2, 3, 5]), set(&[1, 2, 4, 5])]);

        let full = enumerate_assignments(6, Offset(1), 6).unwrap();
        assert_eq!(full, vec![set(&[1, 2, 3, 4, 5, 6])]);

        let low = enumerate_assignments(1, Offset(1), 6).unwrap();
        assert_eq!(low, vec![set(&[1]), set(&[2])]);

        for c in 1..=6 {
            let fixed_only = enumerate_assignments(c, Offset(0), 6).unwrap();
            assert_eq!(fixed_only, vec![fixed_assignment(c, 6).unwrap()]);
        }
    }

    #[test]
    fn interior_candidate_counts() {
        // Interior widths: r+1 ≤ c ≤ B−r.
        for (r, expect) in [(1usize, 3usize), (2, 10), (3, 35)] {
            let b = 12;
            for c in (r + 1)..=(b - r) {
                let n = enumerate_assignments(c, Offset(r), b).unwrap().len();
                assert_eq!(n, expect, "c={c}, r={r}");
            }
        }
    }

    #[test]
    fn enumeration_matches_subset_filter() {
        // Independent oracle: filter all c-subsets of [1,B] that contain the
        // base prefix and put everything else inside the clipped zone.
        for b in 1..=8usize {
            for r in 0..=3usize {
                for c in 1..=b {
                    let cb = base_len(c, Offset(r));
                    let (lo, hi) = free_zone(c, Offset(r), b).unwrap();
                    let mut oracle = Vec::new();
                    for mask in 0u32..(1 << b) {
                        if mask.count_ones() as usize != c {
                            continue;
                        }
                        let chosen: Vec<usize> = (1..=b).filter(|i| mask >> (i - 1) & 1 == 1).collect();
                        let has_base = (1..=cb).all(|i| chosen.contains(&i));
                        let free_ok = chosen.iter().all(|&i| i <= cb || (i >= lo && i <= hi));
                        if has_base && free_ok {
                            oracle.push(chosen);
                        }
                    }
                    oracle.sort();
                    let got: Vec<Vec<usize>> = enumerate_assignments(c, Offset(r), b)
                        .unwrap()
                        .into_iter()
                        .map(|s| s.indices().to_vec())
                        .collect();
                    assert_eq!(got, oracle, "B={b}, r={r}, c={c}");
                }
            }
        }
    }

    #[test]
    fn enumerated_sets_are_well_formed() {
        for b in 1..=16usize {
            for r in 0..=3usize {
                for c in 1..=b {
                    let cb = base_len(c, Offset(r));
                    let fixed = fixed_assignment(c, b).unwrap();
                    for a in enumerate_assignments(c, Offset(r), b).unwrap() {
                        assert_eq!(a.len(), c);
                        for i in 1..=cb {
                            assert!(a.contains(i));
                        }
                        let d = sharing_degree(&a, &fixed).unwrap();
                        assert!(d.ratio() >= num_rational::Ratio::new(cb as u64, c as u64));
                        assert!(d.ratio() <= num_rational::Ratio::new(1, 1));
                    }
                }
            }
        }
    }

    #[test]
    fn degree_cases() {
        let d = sharing_degree(&fixed_assignment(3, 8).unwrap(), &fixed_assignment(5, 8).unwrap()).unwrap();
        assert_eq!(d, Rational::from_int(1));
        let d = sharing_degree(&set(&[1, 2, 4]), &set(&[1, 2, 3, 5, 6])).unwrap();
        assert_eq!(d, Rational::new(2, 3).unwrap());
        let s = set(&[2, 5, 7]);
        assert_eq!(sharing_degree(&s, &s).unwrap(), Rational::from_int(1));
        assert!(sharing_degree(&set(&[]), &s).is_err());
    }

    #[test]
    fn index_set_validation() {
        assert!(IndexSet::from_sorted(vec![1, 1, 2]).is_err());
        assert!(IndexSet::from_sorted(vec![0, 1]).is_err());
        assert!(IndexSet::from_sorted(vec![3, 2]).is_err());
    }

    fn two_group_plan() -> (NetworkGraph, BinPlan) {
        let g = NetworkGraph::new(
            2,
            3,
            vec![
                LayerSpec::conv(2, 2, 1, 8, "a", INPUT_GROUP),
                LayerSpec::conv(2, 2, 1, 6, "b", "a"),
                LayerSpec::dense(3, OUTPUT_GROUP, "b"),
            ],
        )
        .unwrap();
        let plan = plan_uniform_bins(&g, 8).unwrap(); // bin size 1 everywhere
        (g, plan)
    }

    #[test]
    fn candidates_shared_combination() {
        let (_, plan) = two_group_plan();
        let widths = crate::binplan::widths_from_bins(&plan, &[4, 3]).unwrap();

        let fixed = candidate_subnets(&widths, &plan, Offset(0), CandidatePolicy::SharedCombination, 0).unwrap();
        assert_eq!(fixed.len(), 1);
        assert_eq!(fixed[0].groups[0].units(), set(&[1, 2, 3, 4]));
        assert_eq!(fixed[0].groups[1].units(), set(&[1, 2, 3]));

        let cands = candidate_subnets(&widths, &plan, Offset(1), CandidatePolicy::SharedCombination, 0).unwrap();
        assert_eq!(cands.len(), 3); // both groups interior
        assert_eq!(cands[0].groups[0].units(), set(&[1, 2, 3, 4])); // candidate 0 is fixed
        assert_eq!(cands[0].groups[1].units(), set(&[1, 2, 3]));

        // Full-width group has a single choice and reuses it cyclically.
        let widths = crate::binplan::widths_from_bins(&plan, &[8, 3]).unwrap();
        let cands = candidate_subnets(&widths, &plan, Offset(1), CandidatePolicy::SharedCombination, 0).unwrap();
        assert_eq!(cands.len(), 3);
        for c in &cands {
            assert_eq!(c.groups[0].units().len(), 8);
        }
        assert_ne!(cands[1].groups[1], cands[2].groups[1]);
    }

    #[test]
    fn candidates_independent_sampled() {
        let (_, plan) = two_group_plan();
        let widths = crate::binplan::widths_from_bins(&plan, &[4, 3]).unwrap();
        let a = candidate_subnets(&widths, &plan, Offset(1), CandidatePolicy::IndependentSampled(5), 42).unwrap();
        let b = candidate_subnets(&widths, &plan, Offset(1), CandidatePolicy::IndependentSampled(5), 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        for cand in &a {
            assert_eq!(cand.groups[0].units().len(), 4);
            assert_eq!(cand.groups[1].units().len(), 3);
        }
        assert!(matches!(
            candidate_subnets(&widths, &plan, Offset(1), CandidatePolicy::IndependentSampled(0), 42),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn widths_must_sit_on_boundaries() {
        let g = NetworkGraph::new(
            2,
            3,
            vec![
                LayerSpec::conv(2, 2, 1, 8, "a", INPUT_GROUP),
                LayerSpec::dense(3, OUTPUT_GROUP, "a"),
            ],
        )
        .unwrap();
        let plan = plan_uniform_bins(&g, 4).unwrap(); // boundaries 2,4,6,8
        let widths = crate::archgraph::WidthVector::from_channels(vec![3]);
        assert!(candidate_subnets(&widths, &plan, Offset(1), CandidatePolicy::SharedCombination, 0).is_err());
    }

    #[test]
    fn channel_expansion() {
        let g = NetworkGraph::new(
            2,
            3,
            vec![
                LayerSpec::conv(2, 2, 1, 8, "a", INPUT_GROUP),
                LayerSpec::dense(3, OUTPUT_GROUP, "a"),
            ],
        )
        .unwrap();
        let plan = plan_uniform_bins(&g, 4).unwrap(); // bins of 2 channels
        let chans = channel_indices(&plan, 0, &set(&[1, 3]));
        assert_eq!(chans, vec![0, 1, 4, 5]);
    }

    #[test]
    fn pattern_serializes_as_group_map() {
        let (_, plan) = two_group_plan();
        let widths = crate::binplan::widths_from_bins(&plan, &[4, 3]).unwrap();
        let cands = candidate_subnets(&widths, &plan, Offset(1), CandidatePolicy::SharedCombination, 0).unwrap();
        let json = serde_json::to_value(&cands[1]).unwrap();
        assert_eq!(json["a"], serde_json::json!([1, 2, 3, 5]));
    }
}
