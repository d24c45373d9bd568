//! Domain types shared by every stage of the pipeline.
//!
//! All values are immutable once built; stages produce new values instead of
//! mutating shared ones. Collections that end up in exported files keep
//! insertion order so identical inputs serialize identically.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::merge::PeakMetric;
use crate::signal::BinarizationRecord;

/// Tolerance on the sum of composition fractions.
pub const COMPOSITION_TOLERANCE: f64 = 1e-6;

/// Strictly increasing Q axis (inverse angstrom) shared by a dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct QGrid(Vec<f64>);

impl QGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::param("Q grid needs at least two values"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("Q value {i} is not finite")));
        }
        if let Some(i) = values.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::param(format!(
                "Q grid is not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(QGrid(values))
    }

    /// Evenly spaced grid with `points` values covering `[start, end]`.
    pub fn linspace(start: f64, end: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::param("Q grid needs at least two values"));
        }
        let step = (end - start) / (points - 1) as f64;
        QGrid::new((0..points).map(|i| start + step * i as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the grid point closest to `q`.
    pub fn nearest_index(&self, q: f64) -> usize {
        let idx = self.0.partition_point(|&v| v < q);
        if idx == 0 {
            0
        } else if idx == self.0.len() {
            self.0.len() - 1
        } else if (q - self.0[idx - 1]) <= (self.0[idx] - q) {
            idx - 1
        } else {
            idx
        }
    }
}

impl<'de> Deserialize<'de> for QGrid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        QGrid::new(values).map_err(serde::de::Error::custom)
    }
}

/// Atomic fractions of the three elements of a ternary system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Composition([f64; 3]);

impl Composition {
    pub fn new(fractions: [f64; 3]) -> Result<Self> {
        if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::param(format!(
                "composition entries must be finite and non-negative: {fractions:?}"
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > COMPOSITION_TOLERANCE {
            return Err(Error::param(format!("composition must sum to 1 (got {sum})")));
        }
        Ok(Composition(fractions))
    }

    /// Divides by the sum. Fails only when the sum is not positive.
    pub fn normalized(fractions: [f64; 3]) -> Result<Self> {
        let sum: f64 = fractions.iter().sum();
        if sum.is_nan() || sum <= 0.0 {
            return Err(Error::param("composition has no mass"));
        }
        Composition::new(fractions.map(|f| f / sum))
    }

    pub fn fractions(&self) -> [f64; 3] {
        self.0
    }
}

/// One measured 1D diffraction pattern with its wafer metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XrdSample {
    pub id: String,
    pub intensities: Vec<f64>,
    pub composition: Composition,
    /// Wafer position (x, y) in millimeters.
    pub wafer_pos: (f64, f64),
}

impl XrdSample {
    pub fn new(
        id: impl Into<String>,
        intensities: Vec<f64>,
        composition: Composition,
        wafer_pos: (f64, f64),
    ) -> Result<Self> {
        let id = id.into();
        if let Some(i) = intensities.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param(format!(
                "sample {id}: intensity {i} must be finite and non-negative"
            )));
        }
        Ok(XrdSample {
            id,
            intensities,
            composition,
            wafer_pos,
        })
    }
}

/// A validated collection of samples on one Q grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub grid: QGrid,
    pub samples: Vec<XrdSample>,
}

impl Dataset {
    pub fn new(grid: QGrid, samples: Vec<XrdSample>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &samples {
            if s.intensities.len() != grid.len() {
                return Err(Error::Dataset(format!(
                    "sample {} has {} intensities, grid has {}",
                    s.id,
                    s.intensities.len(),
                    grid.len()
                )));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Dataset(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Dataset { grid, samples })
    }

    pub fn sample(&self, id: &str) -> Option<&XrdSample> {
        self.samples.iter().find(|s| s.id == id)
    }
}

/// Zero-padded id used when an input row carries none ("s0001" for row 1).
pub fn default_sample_id(row: usize, total: usize) -> String {
    let width = total.to_string().len().max(4);
    format!("s{row:0width$}")
}

/// Fixed-width bit vector marking the windows that hold a peak.
///
/// Stored as the sorted list of set windows; the bit form is derived.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryPeakPattern {
    width: usize,
    peaks: Vec<usize>,
}

impl BinaryPeakPattern {
    pub fn zeros(width: usize) -> Self {
        BinaryPeakPattern {
            width,
            peaks: Vec::new(),
        }
    }

    /// Builds a pattern with the given windows set. Duplicates collapse.
    pub fn from_peaks(width: usize, peaks: impl IntoIterator<Item = usize>) -> Result<Self> {
        if width == 0 {
            return Err(Error::param("pattern width must be positive"));
        }
        let mut peaks: Vec<usize> = peaks.into_iter().collect();
        peaks.sort_unstable();
        peaks.dedup();
        if let Some(&last) = peaks.last() {
            if last >= width {
                return Err(Error::param(format!(
                    "peak index {last} out of range for width {width}"
                )));
            }
        }
        Ok(BinaryPeakPattern { width, peaks })
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        BinaryPeakPattern::from_peaks(bits.len(), bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn peak_count(&self) -> usize {
        self.peaks.len()
    }

    pub fn get(&self, window: usize) -> bool {
        self.peaks.binary_search(&window).is_ok()
    }

    pub fn bits(&self) -> Vec<bool> {
        let mut bits = vec![false; self.width];
        for &p in &self.peaks {
            bits[p] = true;
        }
        bits
    }

    /// `'0'`/`'1'` string of length `width`.
    pub fn bitstring(&self) -> String {
        self.bits().iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bitstring(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::param(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        BinaryPeakPattern::from_bits(&bits)
    }

    /// Sorted peak windows as a slice.
    pub fn peaks(&self) -> &[usize] {
        &self.peaks
    }
}

/// Strictly increasing window indices of the set bits.
pub fn peak_locations(pattern: &BinaryPeakPattern) -> Vec<usize> {
    pattern.peaks.clone()
}

#[derive(Serialize, Deserialize)]
struct PatternRepr {
    width: usize,
    peaks: Vec<usize>,
    bits: String,
}

impl Serialize for BinaryPeakPattern {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PatternRepr {
            width: self.width,
            peaks: self.peaks.clone(),
            bits: self.bitstring(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BinaryPeakPattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = PatternRepr::deserialize(d)?;
        let pattern = BinaryPeakPattern::from_peaks(repr.width, repr.peaks).map_err(D::Error::custom)?;
        if pattern.bitstring() != repr.bits {
            return Err(D::Error::custom("pattern bits disagree with peak list"));
        }
        Ok(pattern)
    }
}

/// Identifier of a pure phase, displayed as `P<index>`.
///
/// Mixed phases are not given ids of their own; they are named by the sorted
/// set of their pure constituents (see [`Membership`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhaseId(pub usize);

impl fmt::Display for PhaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

impl FromStr for PhaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .trim()
            .strip_prefix('P')
            .or_else(|| s.trim().strip_prefix('p'))
            .unwrap_or(s.trim());
        digits
            .parse::<usize>()
            .map(PhaseId)
            .map_err(|_| Error::validation(format!("invalid phase id {s:?}")))
    }
}

impl Serialize for PhaseId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PhaseId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Set of pure phases a sample belongs to.
pub type Membership = BTreeSet<PhaseId>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MembershipKind {
    Outlier,
    Pure(PhaseId),
    Mixed,
}

pub fn membership_kind(m: &Membership) -> MembershipKind {
    match m.len() {
        0 => MembershipKind::Outlier,
        1 => MembershipKind::Pure(*m.iter().next().unwrap()),
        _ => MembershipKind::Mixed,
    }
}

/// Semicolon-joined ids, e.g. `P0;P2`. Empty for outliers.
pub fn format_membership(m: &Membership) -> String {
    m.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(";")
}

pub fn parse_membership(s: &str) -> Result<Membership> {
    s.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurePhase {
    pub id: PhaseId,
    pub representative: BinaryPeakPattern,
    /// Samples whose membership is exactly `{id}`, in table order.
    pub members: Vec<String>,
}

/// Ordered set of pure phases. Ids are never reused.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseCatalog {
    pub phases: Vec<PurePhase>,
    pub next_id: usize,
}

impl PhaseCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn get(&self, id: PhaseId) -> Option<&PurePhase> {
        self.phases.iter().find(|p| p.id == id)
    }

    pub fn position(&self, id: PhaseId) -> Option<usize> {
        self.phases.iter().position(|p| p.id == id)
    }

    pub fn ids(&self) -> Vec<PhaseId> {
        self.phases.iter().map(|p| p.id).collect()
    }

    /// Appends a phase under a fresh id and returns that id.
    pub fn push(&mut self, representative: BinaryPeakPattern) -> PhaseId {
        let id = self.allocate_id();
        self.phases.push(PurePhase {
            id,
            representative,
            members: Vec::new(),
        });
        id
    }

    pub(crate) fn allocate_id(&mut self) -> PhaseId {
        let id = PhaseId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Recomputes every `members` list from the membership table.
    pub fn rebuild_members(&mut self, memberships: &MembershipTable) {
        for phase in &mut self.phases {
            phase.members.clear();
        }
        for (sample, m) in memberships.iter() {
            if let MembershipKind::Pure(id) = membership_kind(m) {
                if let Some(phase) = self.phases.iter_mut().find(|p| p.id == id) {
                    phase.members.push(sample.clone());
                }
            }
        }
    }
}

/// Sample id to membership set, in insertion order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MembershipTable(IndexMap<String, Membership>);

impl MembershipTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sample: impl Into<String>, m: Membership) {
        self.0.insert(sample.into(), m);
    }

    pub fn get(&self, sample: &str) -> Option<&Membership> {
        self.0.get(sample)
    }

    pub fn get_mut(&mut self, sample: &str) -> Option<&mut Membership> {
        self.0.get_mut(sample)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Membership)> {
        self.0.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Membership)> {
        self.0.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pure_member_count(&self, id: PhaseId) -> usize {
        self.0.values().filter(|m| m.len() == 1 && m.contains(&id)).count()
    }

    pub fn outliers(&self) -> impl Iterator<Item = &String> {
        self.0.iter().filter(|(_, m)| m.is_empty()).map(|(s, _)| s)
    }

    pub fn mixed(&self) -> impl Iterator<Item = (&String, &Membership)> {
        self.0.iter().filter(|(_, m)| m.len() >= 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierFiltering {
    /// Filter after every peak-count group, before the next group's
    /// mixed-phase enumeration.
    PerGroup,
}

/// Everything needed to reproduce a result from its dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub th: usize,
    pub ot: usize,
    pub max_mixed_constituents: usize,
    pub windows: usize,
    pub outlier_filtering: OutlierFiltering,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binarization: Option<BinarizationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Who applied a merge and when (milliseconds since the Unix epoch).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub actor: String,
    pub timestamp_ms: u64,
}

impl Stamp {
    pub fn new(actor: impl Into<String>, timestamp_ms: u64) -> Self {
        Stamp {
            actor: actor.into(),
            timestamp_ms,
        }
    }

    pub fn now(actor: impl Into<String>) -> Self {
        let ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Stamp::new(actor, ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MergeOp {
    Manual { ids: Vec<PhaseId> },
    Hierarchical { metric: PeakMetric, cutoff: f64 },
}

/// One applied merge. Replaying the log on the initial result reproduces
/// the current result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageEntry {
    #[serde(flatten)]
    pub op: MergeOp,
    pub stamp: Stamp,
    /// Groups of old ids and the id that replaced each group.
    pub merged: Vec<(Vec<PhaseId>, PhaseId)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Catalog, memberships and provenance of one phase-mapping run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMapResult {
    pub params: RunParams,
    pub catalog: PhaseCatalog,
    pub memberships: MembershipTable,
    /// Input pattern of every sample, in input order.
    pub patterns: IndexMap<String, BinaryPeakPattern>,
    #[serde(default)]
    pub lineage: Vec<LineageEntry>,
}

impl PhaseMapResult {
    pub fn pattern(&self, sample: &str) -> Option<&BinaryPeakPattern> {
        self.patterns.get(sample)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
