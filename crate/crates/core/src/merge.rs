//! Consolidation of initial pure phases.
//!
//! Phases can be merged automatically with average-linkage clustering over
//! peak-location distances, or explicitly by id. Every merge is recorded in
//! the result's lineage so the current state can be rebuilt (or undone) by
//! replaying the log on the initial result.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::comparison::average_linkage;
use crate::error::{Error, Result};
use crate::model::{
    BinaryPeakPattern, LineageEntry, Membership, MergeOp, PhaseCatalog, PhaseId, PhaseMapResult, PurePhase, Stamp,
};
use crate::phasemap::average_representation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakMetric {
    AvgPeakDiff,
    MaxPeakDiff,
    SumPeakDiff,
}

impl FromStr for PeakMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg_peak_diff" => Ok(PeakMetric::AvgPeakDiff),
            "max_peak_diff" => Ok(PeakMetric::MaxPeakDiff),
            "sum_peak_diff" => Ok(PeakMetric::SumPeakDiff),
            _ => Err(Error::param(format!("unknown peak metric {s:?}"))),
        }
    }
}

impl fmt::Display for PeakMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeakMetric::AvgPeakDiff => "avg_peak_diff",
            PeakMetric::MaxPeakDiff => "max_peak_diff",
            PeakMetric::SumPeakDiff => "sum_peak_diff",
        })
    }
}

/// Greedy closest-pair matching of two sorted peak lists.
///
/// Returns the distances of the matched pairs and the number of peaks left
/// unmatched. Pairs are taken in ascending order of (distance, lower
/// index, higher index), which makes the result symmetric in its arguments.
pub fn match_peaks(a: &[usize], b: &[usize]) -> (Vec<usize>, usize) {
    let mut pairs: Vec<(usize, usize, usize, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            pairs.push((x.abs_diff(y), x.min(y), x.max(y), i, j));
        }
    }
    pairs.sort_unstable();
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let m = a.len().min(b.len());
    let mut matched = Vec::with_capacity(m);
    for (d, _, _, i, j) in pairs {
        if matched.len() == m {
            break;
        }
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            matched.push(d);
        }
    }
    (matched, a.len().max(b.len()) - m)
}

/// Peak-location distance between two patterns; each unmatched peak costs
/// the pattern width.
pub fn phase_distance(a: &BinaryPeakPattern, b: &BinaryPeakPattern, metric: PeakMetric) -> Result<f64> {
    if a.width() != b.width() {
        return Err(Error::param(format!(
            "pattern widths differ: {} vs {}",
            a.width(),
            b.width()
        )));
    }
    let (matched, unmatched) = match_peaks(a.peaks(), b.peaks());
    let penalty = a.width() as f64;
    let terms = matched
        .iter()
        .map(|&d| d as f64)
        .chain(std::iter::repeat_n(penalty, unmatched));
    let n = matched.len() + unmatched;
    if n == 0 {
        return Ok(0.0);
    }
    Ok(match metric {
        PeakMetric::SumPeakDiff => terms.sum(),
        PeakMetric::AvgPeakDiff => terms.sum::<f64>() / n as f64,
        PeakMetric::MaxPeakDiff => terms.fold(0.0, f64::max),
    })
}

/// Replaces each group of phases by one new phase and rewrites memberships.
///
/// A merged phase takes a fresh id and the catalog position of its first
/// constituent. Returns the new result with `entry` appended to the lineage.
fn apply_groups(
    result: &PhaseMapResult,
    groups: Vec<(Vec<PhaseId>, BinaryPeakPattern)>,
    op: MergeOp,
    stamp: Stamp,
    warnings: Vec<String>,
) -> PhaseMapResult {
    let mut catalog = PhaseCatalog {
        phases: Vec::with_capacity(result.catalog.len()),
        next_id: result.catalog.next_id,
    };
    let mut mapping: HashMap<PhaseId, PhaseId> = HashMap::new();
    let mut merged_log = Vec::new();
    let mut reps: HashMap<PhaseId, BinaryPeakPattern> = HashMap::new();
    let mut new_ids = Vec::new();
    for (ids, rep) in groups {
        let new_id = catalog.allocate_id();
        for id in &ids {
            mapping.insert(*id, new_id);
        }
        reps.insert(new_id, rep);
        new_ids.push(new_id);
        merged_log.push((ids, new_id));
    }
    let mut emitted = BTreeSet::new();
    for phase in &result.catalog.phases {
        match mapping.get(&phase.id) {
            None => catalog.phases.push(phase.clone()),
            Some(new_id) => {
                if emitted.insert(*new_id) {
                    catalog.phases.push(PurePhase {
                        id: *new_id,
                        representative: reps[new_id].clone(),
                        members: Vec::new(),
                    });
                }
            }
        }
    }
    let mut memberships = result.memberships.clone();
    for (_, m) in memberships.iter_mut() {
        if m.iter().any(|id| mapping.contains_key(id)) {
            *m = m
                .iter()
                .map(|id| *mapping.get(id).unwrap_or(id))
                .collect::<Membership>();
        }
    }
    catalog.rebuild_members(&memberships);

    let mut lineage = result.lineage.clone();
    lineage.push(LineageEntry {
        op,
        stamp,
        merged: merged_log,
        warnings,
    });
    PhaseMapResult {
        params: result.params.clone(),
        catalog,
        memberships,
        patterns: result.patterns.clone(),
        lineage,
    }
}

/// Constituent with the most pure members; ties go to the lowest id.
fn largest_constituent<'a>(result: &'a PhaseMapResult, ids: &[PhaseId]) -> &'a PurePhase {
    ids.iter()
        .filter_map(|id| result.catalog.get(*id))
        .max_by(|a, b| a.members.len().cmp(&b.members.len()).then(b.id.cmp(&a.id)))
        .expect("merge group is non-empty")
}

fn same_peak_count(result: &PhaseMapResult, ids: &[PhaseId]) -> bool {
    let counts: BTreeSet<usize> = ids
        .iter()
        .filter_map(|id| result.catalog.get(*id))
        .map(|p| p.representative.peak_count())
        .collect();
    counts.len() == 1
}

/// Average-linkage clustering of the pure phases, cut at `cutoff`.
///
/// Returns the merged result and the old-to-new id mapping (identity for
/// phases left alone). When a merged set's peak counts agree the new
/// representative is the positional average over all pure members;
/// otherwise the largest constituent's representative is kept and a warning
/// is logged in the lineage.
pub fn hierarchical_merge(
    result: &PhaseMapResult,
    metric: PeakMetric,
    cutoff: f64,
    stamp: Stamp,
) -> Result<(PhaseMapResult, BTreeMap<PhaseId, PhaseId>)> {
    if cutoff.is_nan() || cutoff < 0.0 {
        return Err(Error::param("cutoff must be non-negative"));
    }
    let phases = &result.catalog.phases;
    let n = phases.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = phase_distance(&phases[i].representative, &phases[j].representative, metric)?;
            matrix[i][j] = d;
            matrix[j][i] = d;
        }
    }
    let labels = if n == 0 {
        Vec::new()
    } else {
        average_linkage(&matrix)?.cut(cutoff)
    };
    let mut clusters: Vec<Vec<PhaseId>> = Vec::new();
    for (pos, &label) in labels.iter().enumerate() {
        if label == clusters.len() {
            clusters.push(Vec::new());
        }
        clusters[label].push(phases[pos].id);
    }

    let mut groups = Vec::new();
    let mut warnings = Vec::new();
    for ids in clusters.into_iter().filter(|c| c.len() >= 2) {
        let rep = merged_representative(result, &ids, &mut warnings)?;
        groups.push((ids, rep));
    }
    let merged = apply_groups(
        result,
        groups,
        MergeOp::Hierarchical { metric, cutoff },
        stamp,
        warnings,
    );

    let mut mapping: BTreeMap<PhaseId, PhaseId> = phases.iter().map(|p| (p.id, p.id)).collect();
    for (ids, new_id) in &merged.lineage.last().expect("entry just appended").merged {
        for id in ids {
            mapping.insert(*id, *new_id);
        }
    }
    Ok((merged, mapping))
}

fn merged_representative(
    result: &PhaseMapResult,
    ids: &[PhaseId],
    warnings: &mut Vec<String>,
) -> Result<BinaryPeakPattern> {
    let fallback = largest_constituent(result, ids);
    if !same_peak_count(result, ids) {
        warnings.push(format!(
            "merged {} across peak counts; kept representative of {}",
            join_ids(ids),
            fallback.id
        ));
        return Ok(fallback.representative.clone());
    }
    let pc = fallback.representative.peak_count();
    let members: Vec<&BinaryPeakPattern> = ids
        .iter()
        .filter_map(|id| result.catalog.get(*id))
        .flat_map(|p| p.members.iter())
        .filter_map(|s| result.pattern(s))
        .collect();
    if members.is_empty() || members.iter().any(|m| m.peak_count() != pc) {
        warnings.push(format!(
            "members of {} disagree in peak count; kept representative of {}",
            join_ids(ids),
            fallback.id
        ));
        return Ok(fallback.representative.clone());
    }
    average_representation(&members, pc)
}

fn join_ids(ids: &[PhaseId]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

/// Merges the given pure phases into one new phase.
///
/// The representative of the constituent with the most pure members is
/// kept. Merging phases with different peak counts is allowed and noted in
/// the lineage warnings.
pub fn manual_merge(result: &PhaseMapResult, ids: &[PhaseId], stamp: Stamp) -> Result<PhaseMapResult> {
    let unique: BTreeSet<PhaseId> = ids.iter().copied().collect();
    if unique.len() < 2 {
        return Err(Error::validation("a merge needs at least two distinct phase ids"));
    }
    if let Some(missing) = unique.iter().find(|id| result.catalog.get(**id).is_none()) {
        return Err(Error::validation(format!("unknown phase id {missing}")));
    }
    let ids: Vec<PhaseId> = unique.into_iter().collect();
    let mut warnings = Vec::new();
    if !same_peak_count(result, &ids) {
        warnings.push(format!("merged {} across different peak counts", join_ids(&ids)));
    }
    let rep = largest_constituent(result, &ids).representative.clone();
    Ok(apply_groups(
        result,
        vec![(ids.clone(), rep)],
        MergeOp::Manual { ids },
        stamp,
        warnings,
    ))
}

/// Re-applies `lineage` on top of `initial` (whose own lineage is ignored).
pub fn replay(initial: &PhaseMapResult, lineage: &[LineageEntry]) -> Result<PhaseMapResult> {
    let mut current = PhaseMapResult {
        lineage: Vec::new(),
        ..initial.clone()
    };
    for entry in lineage {
        current = match &entry.op {
            MergeOp::Manual { ids } => manual_merge(&current, ids, entry.stamp.clone())?,
            MergeOp::Hierarchical { metric, cutoff } => {
                hierarchical_merge(&current, *metric, *cutoff, entry.stamp.clone())?.0
            }
        };
    }
    Ok(current)
}

/// Drops the last lineage entry by replaying the rest.
pub fn undo(initial: &PhaseMapResult, current: &PhaseMapResult) -> Result<PhaseMapResult> {
    match current.lineage.split_last() {
        Some((_, rest)) => replay(initial, rest),
        None => Err(Error::validation("nothing to undo")),
    }
}
