//! Hard clustering of raw patterns against the incremental method on the
//! same wafer.
//!
//! ```text
//! cargo run --release --example baseline_comparison
//! ```

use std::collections::BTreeSet;

use xrdmap::comparison::{geometric_grid, sweep, MetricKind, SweepMethod};
use xrdmap::pipeline;
use xrdmap::signal::Threshold;
use xrdmap::synth::{fixtures, generate};

fn main() -> xrdmap::Result<()> {
    let fixture = fixtures::clean_three_phase(7, 300);
    let out = generate(&fixture.config)?;
    let ids: Vec<&str> = out.dataset.samples.iter().map(|s| s.id.as_str()).collect();
    let as_sets = |t: &xrdmap::MembershipTable| -> Vec<BTreeSet<usize>> {
        ids.iter()
            .map(|id| t.get(id).unwrap().iter().map(|p| p.0).collect())
            .collect()
    };
    let truth = as_sets(&out.truth);
    let vectors: Vec<Vec<f64>> = out.dataset.samples.iter().map(|s| s.intensities.clone()).collect();

    let methods = vec![
        SweepMethod::Hierarchical {
            metric: MetricKind::Cosine,
            cutoffs: geometric_grid(0.5, 2.0, 8),
        },
        SweepMethod::Hierarchical {
            metric: MetricKind::Emd,
            cutoffs: geometric_grid(20.0, 2.0, 8),
        },
        SweepMethod::Kmeans {
            ks: vec![3, 5],
            seed: 1,
        },
    ];
    let mut report = sweep(&vectors, &truth, &methods)?;

    let result = pipeline::run(
        &out.dataset,
        &fixture.binarization,
        Threshold::Fixed(fixture.binarization.intensity_threshold),
        &fixture.mapping,
    )?;
    report.push_memberships(
        "incremental",
        fixture.mapping.th as f64,
        &as_sets(&result.memberships),
        &truth,
    )?;

    println!(
        "{:<12} {:<11} {:>9} {:>8} {:>7} {:>7} {:>6}",
        "method", "metric", "param", "clusters", "purity", "ari", "dual"
    );
    for r in &report.rows {
        println!(
            "{:<12} {:<11} {:>9.4} {:>8} {:>7.3} {:>7.3} {:>6.2}",
            r.method,
            r.metric,
            r.param,
            r.clusters,
            r.scores.purity,
            r.scores.adjusted_rand,
            r.scores.dual_membership_recall
        );
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    Ok(())
}
