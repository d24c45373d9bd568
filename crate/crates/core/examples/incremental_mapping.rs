//! Phase mapping of a generated three-phase wafer, compared with its planted truth.
//!
//! ```text
//! cargo run --release --example incremental_mapping
//! ```

use std::collections::BTreeMap;

use xrdmap::model::{membership_kind, MembershipKind};
use xrdmap::pipeline;
use xrdmap::signal::Threshold;
use xrdmap::synth::{fixtures, generate};

fn main() -> xrdmap::Result<()> {
    let fixture = fixtures::clean_three_phase(7, 500);
    let out = generate(&fixture.config)?;
    let result = pipeline::run(
        &out.dataset,
        &fixture.binarization,
        Threshold::Fixed(fixture.binarization.intensity_threshold),
        &fixture.mapping,
    )?;

    for phase in &result.catalog.phases {
        println!(
            "{:<4} {} peaks {:?}, {} pure members",
            phase.id,
            phase.representative.peak_count(),
            phase.representative.peaks(),
            phase.members.len()
        );
    }

    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    let mut agree = 0;
    for (id, m) in result.memberships.iter() {
        let kind = match membership_kind(m) {
            MembershipKind::Outlier => "outlier",
            MembershipKind::Pure(_) => "pure",
            MembershipKind::Mixed => "mixed",
        };
        *kinds.entry(kind).or_default() += 1;
        agree += usize::from(out.truth.get(id).map(|t| t.len()) == Some(m.len()));
    }
    println!("{kinds:?}");
    println!(
        "{agree} of {} samples have the planted number of phases",
        result.memberships.len()
    );
    Ok(())
}
