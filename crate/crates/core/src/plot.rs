//! SVG plots and the plot-data JSON shared with the browser client.
//!
//! Three figures are produced: the circular wafer map, the ternary
//! composition diagram and the binary peak stack. Numbers are written with
//! fixed precision so output is byte-stable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::ternary_coords;
use crate::model::{membership_kind, Dataset, MembershipKind, PhaseId, PhaseMapResult};

pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
pub const OUTLIER_COLOR: &str = "#b0b0b0";

pub const WAFER_FILE: &str = "wafer.svg";
pub const TERNARY_FILE: &str = "ternary.svg";
pub const PEAKS_FILE: &str = "peaks.svg";
pub const PLOT_DATA_FILE: &str = "plot_data.json";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlotOptions {
    pub show_outliers: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Pure,
    Mixed,
    Outlier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub id: PhaseId,
    pub color: String,
    pub peak_count: usize,
    pub member_count: usize,
    pub peaks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub x_mm: f64,
    pub y_mm: f64,
    pub ternary: [f64; 2],
    pub composition: [f64; 3],
    pub kind: SampleKind,
    pub phases: Vec<PhaseId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub windows: usize,
    pub wafer_radius: f64,
    /// Catalog order; colors are assigned by position.
    pub phases: Vec<PhaseEntry>,
    /// Peak-stack row order: peak count, then id.
    pub stack_order: Vec<PhaseId>,
    /// Dataset order. Samples absent from the result are skipped.
    pub samples: Vec<SampleEntry>,
}

impl PlotData {
    pub fn color_of(&self, id: PhaseId) -> &str {
        self.phases
            .iter()
            .find(|p| p.id == id)
            .map_or(OUTLIER_COLOR, |p| p.color.as_str())
    }
}

pub fn plot_data(result: &PhaseMapResult, dataset: &Dataset) -> PlotData {
    let phases: Vec<PhaseEntry> = result
        .catalog
        .phases
        .iter()
        .enumerate()
        .map(|(i, p)| PhaseEntry {
            id: p.id,
            color: PALETTE[i % PALETTE.len()].to_string(),
            peak_count: p.representative.peak_count(),
            member_count: p.members.len(),
            peaks: p.representative.peaks().to_vec(),
        })
        .collect();
    let mut stack_order: Vec<(usize, PhaseId)> = phases.iter().map(|p| (p.peak_count, p.id)).collect();
    stack_order.sort();

    let mut samples = Vec::new();
    let mut radius: f64 = 0.0;
    for s in &dataset.samples {
        let Some(m) = result.memberships.get(&s.id) else {
            continue;
        };
        let kind = match membership_kind(m) {
            MembershipKind::Outlier => SampleKind::Outlier,
            MembershipKind::Pure(_) => SampleKind::Pure,
            MembershipKind::Mixed => SampleKind::Mixed,
        };
        let (tx, ty) = ternary_coords(&s.composition);
        radius = radius.max(s.wafer_pos.0.hypot(s.wafer_pos.1));
        samples.push(SampleEntry {
            id: s.id.clone(),
            x_mm: s.wafer_pos.0,
            y_mm: s.wafer_pos.1,
            ternary: [tx, ty],
            composition: s.composition.fractions(),
            kind,
            phases: m.iter().copied().collect(),
        });
    }
    PlotData {
        windows: result.params.windows,
        wafer_radius: if radius > 0.0 { radius } else { 1.0 },
        phases,
        stack_order: stack_order.into_iter().map(|(_, id)| id).collect(),
        samples,
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn svg_open(out: &mut String, w: u32, h: u32) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
}

const MARKER_RADIUS: f64 = 5.0;

/// Pure samples get one disc; mixed samples get one concentric disc per
/// constituent, shrinking inward.
fn marker(out: &mut String, data: &PlotData, s: &SampleEntry, cx: f64, cy: f64, show_outliers: bool) {
    match s.kind {
        SampleKind::Outlier => {
            if show_outliers {
                let _ = writeln!(
                    out,
                    r#"<circle class="outlier" cx="{cx:.2}" cy="{cy:.2}" r="3.00" fill="{OUTLIER_COLOR}"><title>{}</title></circle>"#,
                    escape(&s.id)
                );
            }
        }
        _ => {
            let k = s.phases.len() as f64;
            let _ = writeln!(out, r#"<g class="sample {}">"#, if k > 1.0 { "mixed" } else { "pure" });
            for (i, id) in s.phases.iter().enumerate() {
                let r = MARKER_RADIUS * (k - i as f64) / k;
                let _ = writeln!(
                    out,
                    r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" fill="{}" data-phase="{id}"><title>{}</title></circle>"#,
                    data.color_of(*id),
                    escape(&s.id)
                );
            }
            let _ = writeln!(out, "</g>");
        }
    }
}

pub fn wafer_svg(data: &PlotData, options: PlotOptions) -> String {
    let (size, c, span) = (420u32, 210.0, 190.0);
    let scale = span / data.wafer_radius;
    let mut out = String::new();
    svg_open(&mut out, size, size);
    let _ = writeln!(
        out,
        r##"<circle class="axis" cx="{c:.2}" cy="{c:.2}" r="{span:.2}" fill="none" stroke="#333333"/>"##
    );
    let _ = writeln!(
        out,
        r##"<line class="axis" x1="{:.2}" y1="{c:.2}" x2="{:.2}" y2="{c:.2}" stroke="#cccccc"/>"##,
        c - span,
        c + span
    );
    let _ = writeln!(
        out,
        r##"<line class="axis" x1="{c:.2}" y1="{:.2}" x2="{c:.2}" y2="{:.2}" stroke="#cccccc"/>"##,
        c - span,
        c + span
    );
    let _ = writeln!(
        out,
        r#"<text x="{c:.2}" y="14" text-anchor="middle" font-size="11">wafer, radius {:.2} mm</text>"#,
        data.wafer_radius
    );
    for s in &data.samples {
        marker(
            &mut out,
            data,
            s,
            c + s.x_mm * scale,
            c - s.y_mm * scale,
            options.show_outliers,
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn ternary_svg(data: &PlotData, options: PlotOptions) -> String {
    let (w, h) = (420u32, 400u32);
    let (x0, y0, side) = (30.0, 370.0, 360.0);
    let map = |t: [f64; 2]| (x0 + side * t[0], y0 - side * t[1]);
    let mut out = String::new();
    svg_open(&mut out, w, h);
    let a = map([0.0, 0.0]);
    let b = map([1.0, 0.0]);
    let top = map([0.5, 3f64.sqrt() / 2.0]);
    let _ = writeln!(
        out,
        r##"<polygon class="axis" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="none" stroke="#333333"/>"##,
        a.0, a.1, b.0, b.1, top.0, top.1
    );
    for (label, (x, y), dy) in [("A", a, 16.0), ("B", b, 16.0), ("C", top, -6.0)] {
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="12">{label}</text>"#,
            y + dy
        );
    }
    for s in &data.samples {
        let (x, y) = map(s.ternary);
        marker(&mut out, data, s, x, y, options.show_outliers);
    }
    out.push_str("</svg>\n");
    out
}

pub fn peak_stack_svg(data: &PlotData) -> String {
    let (left, plot_w, row_h, top) = (50.0, 500.0, 18.0, 20.0);
    let rows = data.stack_order.len();
    let h = (top + row_h * rows.max(1) as f64 + 30.0) as u32;
    let mut out = String::new();
    svg_open(&mut out, (left + plot_w + 20.0) as u32, h);
    let bottom = top + row_h * rows.max(1) as f64;
    let _ = writeln!(
        out,
        r##"<rect class="axis" x="{left:.2}" y="{top:.2}" width="{plot_w:.2}" height="{:.2}" fill="none" stroke="#333333"/>"##,
        bottom - top
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">window (of {})</text>"#,
        left + plot_w / 2.0,
        bottom + 20.0,
        data.windows
    );
    let width = data.windows.max(1) as f64;
    for (row, id) in data.stack_order.iter().enumerate() {
        let Some(p) = data.phases.iter().find(|p| p.id == *id) else {
            continue;
        };
        let y = top + row_h * row as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{id}</text>"#,
            left - 6.0,
            y + row_h * 0.7
        );
        let _ = writeln!(out, r#"<g class="phase" data-phase="{id}">"#);
        for &w in &p.peaks {
            let x = left + plot_w * (w as f64 + 0.5) / width;
            let _ = writeln!(
                out,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{}" stroke-width="2"/>"#,
                y + 3.0,
                y + row_h - 3.0,
                p.color
            );
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}

/// Writes the three SVG figures and `plot_data.json` into `out_dir`,
/// returning the paths in that order.
pub fn render_plots(
    result: &PhaseMapResult,
    dataset: &Dataset,
    out_dir: impl AsRef<Path>,
    options: PlotOptions,
) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let data = plot_data(result, dataset);
    let files = [
        (WAFER_FILE, wafer_svg(&data, options)),
        (TERNARY_FILE, ternary_svg(&data, options)),
        (PEAKS_FILE, peak_stack_svg(&data)),
        (PLOT_DATA_FILE, serde_json::to_string_pretty(&data)? + "\n"),
    ];
    let mut paths = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        paths.push(path);
    }
    Ok(paths)
}
