//! File formats: datasets, binarized pattern sets, phase-map results,
//! ground-truth tables and sweep reports.
//!
//! Dataset CSV layout, one row per sample:
//!
//! ```text
//! id,x_mm,y_mm,frac_a,frac_b,frac_c,1.0,1.0064,...,4.2
//! s0001,-4,-48,0.31,0.22,0.47,301.2,300.8,...
//! ```
//!
//! The Q value of every intensity column is carried in its header cell. The
//! `id` column is optional. Compositions given in percent are normalized.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comparison::SweepReport;
use crate::error::{Error, Result};
use crate::model::{
    format_membership, parse_membership, BinaryPeakPattern, Composition, Dataset, LineageEntry, MembershipTable,
    PhaseCatalog, PhaseId, PhaseMapResult, PurePhase, QGrid, RunParams, XrdSample, COMPOSITION_TOLERANCE,
};
use crate::signal::BinarizationRecord;

/// Largest deviation of a composition sum from 1 that is silently
/// renormalized (with a warning) instead of rejected.
pub const COMPOSITION_RENORMALIZE_TOLERANCE: f64 = 1e-3;

const META_COLUMNS: [&str; 5] = ["x_mm", "y_mm", "frac_a", "frac_b", "frac_c"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// `.json` selects JSON; anything else is CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// A loaded dataset with the non-fatal issues found while reading it.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

fn check_composition(raw: [f64; 3], row: usize, warnings: &mut Vec<String>) -> Result<Composition> {
    if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::ingest(row, "composition entries must be non-negative numbers"));
    }
    let mut fr = raw;
    let mut sum: f64 = fr.iter().sum();
    if (sum - 100.0).abs() <= 100.0 * COMPOSITION_RENORMALIZE_TOLERANCE {
        fr = fr.map(|v| v / 100.0);
        sum /= 100.0;
    }
    if (sum - 1.0).abs() > COMPOSITION_RENORMALIZE_TOLERANCE {
        return Err(Error::ingest(row, format!("composition sums to {sum}, expected 1")));
    }
    let comp = if (sum - 1.0).abs() > COMPOSITION_TOLERANCE {
        warnings.push(format!("row {row}: composition sum {sum} renormalized"));
        Composition::normalized(fr)
    } else {
        Composition::new(fr)
    };
    comp.map_err(|e| Error::ingest(row, e.to_string()))
}

fn parse_f64(cell: &str, row: usize, what: &str) -> Result<f64> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| Error::ingest(row, format!("{what}: cannot parse {cell:?} as a number")))
}

pub fn read_dataset_csv(text: &str) -> Result<Loaded> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let has_id = header.first().is_some_and(|h| h.eq_ignore_ascii_case("id"));
    let offset = usize::from(has_id);
    for (k, name) in META_COLUMNS.iter().enumerate() {
        match header.get(offset + k) {
            Some(h) if h.eq_ignore_ascii_case(name) => {}
            other => {
                return Err(Error::ingest(1, format!("expected column {name:?}, found {other:?}")));
            }
        }
    }
    let q_start = offset + META_COLUMNS.len();
    let q_values = header[q_start..]
        .iter()
        .map(|h| parse_f64(h, 1, "Q header"))
        .collect::<Result<Vec<_>>>()?;
    let grid = QGrid::new(q_values).map_err(|e| Error::ingest(1, e.to_string()))?;

    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    let total = records.len();
    let mut samples = Vec::with_capacity(total);
    let mut warnings = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let row = i + 2;
        if rec.len() != header.len() {
            return Err(Error::ingest(
                row,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let id = if has_id && !rec[0].is_empty() {
            rec[0].to_string()
        } else {
            crate::model::default_sample_id(i + 1, total)
        };
        let meta: Vec<f64> = (0..META_COLUMNS.len())
            .map(|k| parse_f64(&rec[offset + k], row, META_COLUMNS[k]))
            .collect::<Result<_>>()?;
        let comp = check_composition([meta[2], meta[3], meta[4]], row, &mut warnings)?;
        let intensities = (q_start..rec.len())
            .map(|k| parse_f64(&rec[k], row, "intensity"))
            .collect::<Result<Vec<_>>>()?;
        let sample =
            XrdSample::new(id, intensities, comp, (meta[0], meta[1])).map_err(|e| Error::ingest(row, e.to_string()))?;
        samples.push(sample);
    }
    let dataset = Dataset::new(grid, samples)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Loaded { dataset, warnings })
}

#[derive(Deserialize)]
struct JsonSample {
    #[serde(default)]
    id: Option<String>,
    x_mm: f64,
    y_mm: f64,
    composition: [f64; 3],
    intensities: Vec<f64>,
}

#[derive(Deserialize)]
struct JsonDataset {
    grid: Vec<f64>,
    samples: Vec<JsonSample>,
}

#[derive(Serialize)]
struct JsonSampleOut<'a> {
    id: &'a str,
    x_mm: f64,
    y_mm: f64,
    composition: [f64; 3],
    intensities: &'a [f64],
}

#[derive(Serialize)]
struct JsonDatasetOut<'a> {
    grid: &'a [f64],
    samples: Vec<JsonSampleOut<'a>>,
}

pub fn read_dataset_json(text: &str) -> Result<Loaded> {
    let raw: JsonDataset = serde_json::from_str(text)?;
    let grid = QGrid::new(raw.grid).map_err(|e| Error::ingest(0, e.to_string()))?;
    let total = raw.samples.len();
    let mut warnings = Vec::new();
    let mut samples = Vec::with_capacity(total);
    for (i, s) in raw.samples.into_iter().enumerate() {
        let row = i + 1;
        if s.intensities.len() != grid.len() {
            return Err(Error::ingest(
                row,
                format!("expected {} intensities, found {}", grid.len(), s.intensities.len()),
            ));
        }
        let comp = check_composition(s.composition, row, &mut warnings)?;
        let id =
            s.id.filter(|v| !v.is_empty())
                .unwrap_or_else(|| crate::model::default_sample_id(row, total));
        samples.push(
            XrdSample::new(id, s.intensities, comp, (s.x_mm, s.y_mm)).map_err(|e| Error::ingest(row, e.to_string()))?,
        );
    }
    Ok(Loaded {
        dataset: Dataset::new(grid, samples)?,
        warnings,
    })
}

/// Reads a dataset; the format follows the file extension.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Loaded> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    match Format::from_path(path) {
        Format::Json => read_dataset_json(&text),
        Format::Csv => read_dataset_csv(&text),
    }
}

pub fn dataset_to_csv(dataset: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string()];
    header.extend(META_COLUMNS.iter().map(|s| s.to_string()));
    header.extend(dataset.grid.values().iter().map(|q| q.to_string()));
    w.write_record(&header)?;
    for s in &dataset.samples {
        let c = s.composition.fractions();
        let mut rec = vec![
            s.id.clone(),
            s.wafer_pos.0.to_string(),
            s.wafer_pos.1.to_string(),
            c[0].to_string(),
            c[1].to_string(),
            c[2].to_string(),
        ];
        rec.extend(s.intensities.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn dataset_to_json(dataset: &Dataset) -> Result<String> {
    let out = JsonDatasetOut {
        grid: dataset.grid.values(),
        samples: dataset
            .samples
            .iter()
            .map(|s| JsonSampleOut {
                id: &s.id,
                x_mm: s.wafer_pos.0,
                y_mm: s.wafer_pos.1,
                composition: s.composition.fractions(),
                intensities: &s.intensities,
            })
            .collect(),
    };
    Ok(serde_json::to_string(&out)?)
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match Format::from_path(path) {
        Format::Json => dataset_to_json(dataset)?,
        Format::Csv => dataset_to_csv(dataset)?,
    };
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternEntry {
    pub id: String,
    #[serde(flatten)]
    pub pattern: BinaryPeakPattern,
}

/// Output of the binarization stage, input of phase mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSet {
    pub windows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binarization: Option<BinarizationRecord>,
    pub patterns: Vec<PatternEntry>,
}

impl PatternSet {
    pub fn new(
        ids: impl IntoIterator<Item = String>,
        patterns: Vec<BinaryPeakPattern>,
        record: Option<BinarizationRecord>,
    ) -> Self {
        let windows = record
            .as_ref()
            .map(|r| r.params.window_count)
            .or_else(|| patterns.first().map(|p| p.width()))
            .unwrap_or(0);
        PatternSet {
            windows,
            binarization: record,
            patterns: ids
                .into_iter()
                .zip(patterns)
                .map(|(id, pattern)| PatternEntry { id, pattern })
                .collect(),
        }
    }

    pub fn pairs(&self) -> Vec<(String, BinaryPeakPattern)> {
        self.patterns
            .iter()
            .map(|e| (e.id.clone(), e.pattern.clone()))
            .collect()
    }
}

pub fn write_patterns(set: &PatternSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(set)?)?;
    Ok(())
}

pub fn read_patterns(path: impl AsRef<Path>) -> Result<PatternSet> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

const RESULT_CSV_HEADER: [&str; 4] = ["record", "id", "phases", "peaks"];

fn join_peaks(p: &BinaryPeakPattern) -> String {
    p.peaks().iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

fn split_peaks(s: &str, width: usize, row: usize) -> Result<BinaryPeakPattern> {
    let peaks = s
        .split(';')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::ingest(row, format!("bad peak index {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    BinaryPeakPattern::from_peaks(width, peaks).map_err(|e| Error::ingest(row, e.to_string()))
}

/// Flat CSV form of a result.
///
/// `sample` rows carry the semicolon-joined membership (`P0;P2`) and the
/// sample's peak windows; `phase` rows carry representatives; `meta` and
/// `lineage` rows hold JSON so the file re-imports losslessly.
pub fn result_to_csv(result: &PhaseMapResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULT_CSV_HEADER)?;
    w.write_record(["meta", "params", "", &serde_json::to_string(&result.params)?])?;
    w.write_record(["meta", "next_id", "", &result.catalog.next_id.to_string()])?;
    for p in &result.catalog.phases {
        w.write_record(["phase", &p.id.to_string(), "", &join_peaks(&p.representative)])?;
    }
    for (id, m) in result.memberships.iter() {
        let peaks = result.pattern(id).map(join_peaks).unwrap_or_default();
        w.write_record(["sample", id, &format_membership(m), &peaks])?;
    }
    for (i, entry) in result.lineage.iter().enumerate() {
        w.write_record(["lineage", &i.to_string(), "", &serde_json::to_string(entry)?])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn result_from_csv(text: &str) -> Result<PhaseMapResult> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut params: Option<RunParams> = None;
    let mut catalog = PhaseCatalog::new();
    let mut memberships = MembershipTable::new();
    let mut patterns = indexmap::IndexMap::new();
    let mut lineage: Vec<LineageEntry> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != 4 {
            return Err(Error::ingest(row, "expected 4 fields"));
        }
        let width = || {
            params
                .as_ref()
                .map(|p| p.windows)
                .ok_or_else(|| Error::ingest(row, "params row must come first"))
        };
        match &rec[0] {
            "meta" => match &rec[1] {
                "params" => params = Some(serde_json::from_str(&rec[3])?),
                "next_id" => {
                    catalog.next_id = rec[3].parse().map_err(|_| Error::ingest(row, "bad next_id"))?;
                }
                other => return Err(Error::ingest(row, format!("unknown meta key {other:?}"))),
            },
            "phase" => {
                let id: PhaseId = rec[1].parse().map_err(|e: Error| Error::ingest(row, e.to_string()))?;
                catalog.phases.push(PurePhase {
                    id,
                    representative: split_peaks(&rec[3], width()?, row)?,
                    members: Vec::new(),
                });
            }
            "sample" => {
                let m = parse_membership(&rec[2]).map_err(|e| Error::ingest(row, e.to_string()))?;
                memberships.insert(rec[1].to_string(), m);
                patterns.insert(rec[1].to_string(), split_peaks(&rec[3], width()?, row)?);
            }
            "lineage" => lineage.push(serde_json::from_str(&rec[3])?),
            other => return Err(Error::ingest(row, format!("unknown record kind {other:?}"))),
        }
    }
    let params = params.ok_or_else(|| Error::ingest(1, "missing params row"))?;
    catalog.rebuild_members(&memberships);
    Ok(PhaseMapResult {
        params,
        catalog,
        memberships,
        patterns,
        lineage,
    })
}

pub fn export_result(result: &PhaseMapResult, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let text = match format {
        Format::Json => result.to_json()?,
        Format::Csv => result_to_csv(result)?,
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn import_result(path: impl AsRef<Path>) -> Result<PhaseMapResult> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    match Format::from_path(path) {
        Format::Json => PhaseMapResult::from_json(&text),
        Format::Csv => result_from_csv(&text),
    }
}

/// Ground truth as `sample_id,phases` CSV.
pub fn truth_to_csv(truth: &MembershipTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "phases"])?;
    for (id, m) in truth.iter() {
        w.write_record([id.as_str(), &format_membership(m)])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn truth_from_csv(text: &str) -> Result<MembershipTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut out = MembershipTable::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::ingest(i + 2, "expected 2 fields"));
        }
        out.insert(
            rec[0].to_string(),
            parse_membership(&rec[1]).map_err(|e| Error::ingest(i + 2, e.to_string()))?,
        );
    }
    Ok(out)
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<MembershipTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    match Format::from_path(path) {
        Format::Json => Ok(serde_json::from_str(&text)?),
        Format::Csv => truth_from_csv(&text),
    }
}

pub fn report_to_csv(report: &SweepReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "metric",
        "param",
        "clusters",
        "dual_memberships",
        "purity",
        "adjusted_rand",
        "mixed_recall",
        "dual_membership_recall",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.method.clone(),
            r.metric.clone(),
            r.param.to_string(),
            r.clusters.to_string(),
            r.dual_memberships.to_string(),
            r.scores.purity.to_string(),
            r.scores.adjusted_rand.to_string(),
            r.scores.mixed_recall.to_string(),
            r.scores.dual_membership_recall.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_report(report: &SweepReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match Format::from_path(path) {
        Format::Json => serde_json::to_string_pretty(report)?,
        Format::Csv => report_to_csv(report)?,
    };
    fs::write(path, text)?;
    Ok(())
}

/// Position in an equilateral ternary diagram: A at (0, 0), B at (1, 0),
/// C at (0.5, √3/2).
pub fn ternary_coords(c: &Composition) -> (f64, f64) {
    let [_, b, cc] = c.fractions();
    (b + 0.5 * cc, cc * 3f64.sqrt() / 2.0)
}
