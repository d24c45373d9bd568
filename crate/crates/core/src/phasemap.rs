//! Incremental phase computation over binary peak patterns.
//!
//! Samples are grouped by peak count and processed in ascending order. Each
//! sample is compared, via [`fuzzy_equals`], first against the pure phases
//! already known and then against mixtures of them; the first match wins.
//! Unmatched samples seed new pure phases, whose representatives are
//! replaced by the member average once the group is done. Pure phases with
//! fewer than `ot` members are dropped as outliers after every group.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    BinaryPeakPattern, Membership, MembershipTable, OutlierFiltering, PhaseCatalog, PhaseId, PhaseMapResult, RunParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMapParams {
    /// Adjacency threshold for peak locations, in windows.
    pub th: usize,
    /// Minimum number of pure members for a phase to survive.
    pub ot: usize,
    pub max_mixed_constituents: usize,
}

impl PhaseMapParams {
    pub fn new(th: usize, ot: usize) -> Self {
        PhaseMapParams {
            th,
            ot,
            max_mixed_constituents: 3,
        }
    }

    pub fn validate(&self, width: usize) -> Result<()> {
        if self.ot == 0 {
            return Err(Error::param("ot must be at least 1"));
        }
        if width > 0 && self.th >= width {
            return Err(Error::param(format!(
                "th {} must be below the window count {width}",
                self.th
            )));
        }
        if self.max_mixed_constituents < 2 {
            return Err(Error::param("max_mixed_constituents must be at least 2"));
        }
        Ok(())
    }
}

/// Distance from `x` to the closest entry of the sorted, non-empty `sorted`.
fn nearest_distance(sorted: &[usize], x: usize) -> usize {
    let i = sorted.partition_point(|&v| v < x);
    let right = sorted.get(i).map(|&v| v - x);
    let left = i.checked_sub(1).map(|j| x - sorted[j]);
    match (left, right) {
        (Some(l), Some(r)) => l.min(r),
        (Some(l), None) => l,
        (None, Some(r)) => r,
        (None, None) => usize::MAX,
    }
}

/// True when both patterns have the same number of peaks and every peak of
/// either lies within `th` windows of some peak of the other.
pub fn fuzzy_equals(a: &BinaryPeakPattern, b: &BinaryPeakPattern, th: usize) -> Result<bool> {
    if a.width() != b.width() {
        return Err(Error::param(format!(
            "pattern widths differ: {} vs {}",
            a.width(),
            b.width()
        )));
    }
    Ok(fuzzy_equals_unchecked(a.peaks(), b.peaks(), th))
}

pub(crate) fn fuzzy_equals_unchecked(a: &[usize], b: &[usize], th: usize) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().all(|&i| nearest_distance(b, i) <= th) && b.iter().all(|&i| nearest_distance(a, i) <= th)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixedPhaseCandidate {
    pub constituents: Membership,
    pub merged_pattern: BinaryPeakPattern,
}

/// `floor(sum / n + 1/2)` in integers.
fn round_half_up_mean(sum: usize, n: usize) -> usize {
    (2 * sum + n) / (2 * n)
}

/// Sorted union of peak indices with runs of neighbours no more than `th`
/// apart collapsed to their rounded mean.
pub fn coalesce_union<'a>(patterns: impl IntoIterator<Item = &'a [usize]>, th: usize) -> Vec<usize> {
    let union: BTreeSet<usize> = patterns.into_iter().flatten().copied().collect();
    let mut out = Vec::with_capacity(union.len());
    let mut run: Vec<usize> = Vec::new();
    for idx in union {
        if let Some(&last) = run.last() {
            if idx - last > th {
                out.push(round_half_up_mean(run.iter().sum(), run.len()));
                run.clear();
            }
        }
        run.push(idx);
    }
    if !run.is_empty() {
        out.push(round_half_up_mean(run.iter().sum(), run.len()));
    }
    out
}

/// Visits every subset of `0..n` with size in `2..=max_size`, in
/// lexicographic order of the (sorted) index lists.
fn for_each_subset(n: usize, max_size: usize, mut f: impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, max_size: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        for i in start..n {
            cur.push(i);
            if cur.len() >= 2 {
                f(cur);
            }
            if cur.len() < max_size {
                rec(i + 1, n, max_size, cur, f);
            }
            cur.pop();
        }
    }
    rec(0, n, max_size, &mut Vec::new(), &mut f);
}

/// Mixtures of 2..=`max_constituents` pure phases whose coalesced union
/// has exactly `pc` peaks, sorted by constituent ids.
pub fn compute_mixed_phases(
    catalog: &PhaseCatalog,
    pc: usize,
    th: usize,
    max_constituents: usize,
) -> Vec<MixedPhaseCandidate> {
    let mut phases: Vec<_> = catalog.phases.iter().collect();
    phases.sort_by_key(|p| p.id);
    let mut out = Vec::new();
    for_each_subset(phases.len(), max_constituents, |subset| {
        let total: usize = subset.iter().map(|&i| phases[i].representative.peak_count()).sum();
        // coalescing only ever removes peaks
        if total < pc {
            return;
        }
        let peaks = coalesce_union(subset.iter().map(|&i| phases[i].representative.peaks()), th);
        if peaks.len() == pc {
            let width = phases[subset[0]].representative.width();
            out.push(MixedPhaseCandidate {
                constituents: subset.iter().map(|&i| phases[i].id).collect(),
                merged_pattern: BinaryPeakPattern::from_peaks(width, peaks)
                    .expect("coalesced peaks stay inside the window range"),
            });
        }
    });
    out.sort_by(|a, b| a.constituents.cmp(&b.constituents));
    out
}

/// Positional average: the k-th output peak is the rounded mean of every
/// member's k-th peak.
pub fn average_representation(members: &[&BinaryPeakPattern], pc: usize) -> Result<BinaryPeakPattern> {
    let first = members
        .first()
        .ok_or_else(|| Error::contract("cannot average an empty member list"))?;
    let width = first.width();
    let mut sums = vec![0usize; pc];
    for m in members {
        if m.peak_count() != pc {
            return Err(Error::contract(format!(
                "member has {} peaks, expected {pc}",
                m.peak_count()
            )));
        }
        if m.width() != width {
            return Err(Error::contract("members differ in width"));
        }
        for (s, p) in sums.iter_mut().zip(m.peaks()) {
            *s += p;
        }
    }
    BinaryPeakPattern::from_peaks(width, sums.into_iter().map(|s| round_half_up_mean(s, members.len())))
}

/// One pass of the incremental algorithm over a group of equal-count samples.
///
/// Every sample in `group` must already have an entry in `memberships`
/// (typically empty); it is overwritten with the match found.
pub fn phase_computation(
    group: &[(&str, &BinaryPeakPattern)],
    pc: usize,
    params: &PhaseMapParams,
    catalog: &mut PhaseCatalog,
    memberships: &mut MembershipTable,
) -> Result<()> {
    if let Some((id, p)) = group.iter().find(|(_, p)| p.peak_count() != pc) {
        return Err(Error::contract(format!(
            "sample {id} has {} peaks in the group for {pc}",
            p.peak_count()
        )));
    }
    let th = params.th;
    let mixed = compute_mixed_phases(catalog, pc, th, params.max_mixed_constituents);

    for &(sample, pattern) in group {
        let pure_match = catalog
            .phases
            .iter()
            .find(|p| {
                p.representative.peak_count() == pc
                    && fuzzy_equals_unchecked(pattern.peaks(), p.representative.peaks(), th)
            })
            .map(|p| p.id);
        let membership: Membership = if let Some(id) = pure_match {
            [id].into()
        } else if let Some(m) = mixed
            .iter()
            .find(|m| fuzzy_equals_unchecked(pattern.peaks(), m.merged_pattern.peaks(), th))
        {
            m.constituents.clone()
        } else {
            [catalog.push(pattern.clone())].into()
        };
        memberships.insert(sample, membership);
    }

    // Group members only; phases with pc peaks were all created in this group.
    for phase in catalog
        .phases
        .iter_mut()
        .filter(|p| p.representative.peak_count() == pc)
    {
        let members: Vec<&BinaryPeakPattern> = group
            .iter()
            .filter(|(s, _)| {
                memberships
                    .get(s)
                    .is_some_and(|m| m.len() == 1 && m.contains(&phase.id))
            })
            .map(|(_, p)| *p)
            .collect();
        if !members.is_empty() {
            phase.representative = average_representation(&members, pc)?;
        }
    }
    catalog.rebuild_members(memberships);
    Ok(())
}

/// Drops pure phases with fewer than `ot` pure members.
///
/// Their pure members become outliers. Mixed memberships lose the removed
/// constituents; one survivor makes the sample a pure member of it, none
/// makes it an outlier.
pub fn remove_outlier_phases(catalog: &mut PhaseCatalog, memberships: &mut MembershipTable, ot: usize) -> Vec<PhaseId> {
    let removed: Vec<PhaseId> = catalog
        .phases
        .iter()
        .filter(|p| memberships.pure_member_count(p.id) < ot)
        .map(|p| p.id)
        .collect();
    if removed.is_empty() {
        return removed;
    }
    let gone: HashSet<PhaseId> = removed.iter().copied().collect();
    catalog.phases.retain(|p| !gone.contains(&p.id));
    for (_, m) in memberships.iter_mut() {
        m.retain(|id| !gone.contains(id));
    }
    catalog.rebuild_members(memberships);
    removed
}

/// Runs the full incremental algorithm over `(sample id, pattern)` pairs.
///
/// Zero-peak patterns are outliers from the start. Groups are processed in
/// ascending peak count with outlier filtering after each.
pub fn run_incremental_phase_mapping(
    patterns: &[(String, BinaryPeakPattern)],
    params: &PhaseMapParams,
) -> Result<PhaseMapResult> {
    let width = patterns.first().map_or(0, |(_, p)| p.width());
    if let Some((id, p)) = patterns.iter().find(|(_, p)| p.width() != width) {
        return Err(Error::contract(format!(
            "sample {id} has width {}, expected {width}",
            p.width()
        )));
    }
    params.validate(width)?;

    let mut memberships = MembershipTable::new();
    let mut by_id = IndexMap::with_capacity(patterns.len());
    for (id, p) in patterns {
        if by_id.insert(id.clone(), p.clone()).is_some() {
            return Err(Error::Dataset(format!("duplicate sample id {id}")));
        }
        memberships.insert(id.clone(), Membership::new());
    }

    let mut groups: BTreeMap<usize, Vec<(&str, &BinaryPeakPattern)>> = BTreeMap::new();
    for (id, p) in patterns {
        if p.peak_count() > 0 {
            groups.entry(p.peak_count()).or_default().push((id.as_str(), p));
        }
    }

    let mut catalog = PhaseCatalog::new();
    for (pc, group) in &groups {
        phase_computation(group, *pc, params, &mut catalog, &mut memberships)?;
        let removed = remove_outlier_phases(&mut catalog, &mut memberships, params.ot);
        if !removed.is_empty() {
            log::debug!("peak count {pc}: removed {} outlier phases", removed.len());
        }
    }

    Ok(PhaseMapResult {
        params: RunParams {
            th: params.th,
            ot: params.ot,
            max_mixed_constituents: params.max_mixed_constituents,
            windows: width,
            outlier_filtering: OutlierFiltering::PerGroup,
            binarization: None,
            seed: None,
        },
        catalog,
        memberships,
        patterns: by_id,
        lineage: Vec::new(),
    })
}
