//! Wafer, ternary and peak-stack SVGs plus plot-data JSON for a generated wafer.
//!
//! ```text
//! cargo run --release --example render_plots -- /tmp/xrdmap-plots
//! ```

use xrdmap::pipeline;
use xrdmap::plot::{render_plots, PlotOptions};
use xrdmap::signal::Threshold;
use xrdmap::synth::{fixtures, generate};

fn main() -> xrdmap::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "xrdmap-plots".into());
    let fixture = fixtures::noisy_three_phase(11, 500);
    let out = generate(&fixture.config)?;
    let result = pipeline::run(
        &out.dataset,
        &fixture.binarization,
        Threshold::Fixed(fixture.binarization.intensity_threshold),
        &fixture.mapping,
    )?;
    for path in render_plots(&result, &out.dataset, &dir, PlotOptions { show_outliers: true })? {
        println!("{}", path.display());
    }
    Ok(())
}
