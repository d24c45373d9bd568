//! Over-split a wafer with th = 0, then re-unify by peak-location distance
//! and by hand, and undo through the lineage.
//!
//! ```text
//! cargo run --release --example merge_phases
//! ```

use xrdmap::merge::{hierarchical_merge, manual_merge, phase_distance, undo, PeakMetric};
use xrdmap::model::Stamp;
use xrdmap::signal::Threshold;
use xrdmap::synth::{fixtures, generate};
use xrdmap::{pipeline, PhaseId};

fn main() -> xrdmap::Result<()> {
    let fixture = fixtures::over_split(3, 500);
    let out = generate(&fixture.config)?;
    let initial = pipeline::run(
        &out.dataset,
        &fixture.binarization,
        Threshold::Fixed(fixture.binarization.intensity_threshold),
        &fixture.mapping,
    )?;
    println!("initial phases: {:?}", initial.catalog.ids());

    let phases = &initial.catalog.phases;
    for (i, a) in phases.iter().enumerate() {
        for b in &phases[i + 1..] {
            let d = phase_distance(&a.representative, &b.representative, PeakMetric::AvgPeakDiff)?;
            println!("  d({}, {}) = {d:.2}", a.id, b.id);
        }
    }

    let (merged, renamed) = hierarchical_merge(&initial, PeakMetric::AvgPeakDiff, 1.0, Stamp::new("example", 0))?;
    println!("cutoff 1: {:?}, renamed {renamed:?}", merged.catalog.ids());

    let by_hand = manual_merge(&initial, &[PhaseId(2), PhaseId(3)], Stamp::new("example", 1))?;
    for w in &by_hand.lineage[0].warnings {
        println!("warning: {w}");
    }
    println!("manual P2+P3: {:?}", by_hand.catalog.ids());

    let restored = undo(&initial, &by_hand)?;
    println!("undo restores initial: {}", restored == initial);
    Ok(())
}
