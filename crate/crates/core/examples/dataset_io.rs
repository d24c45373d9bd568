//! Dataset CSV round trip and result export in both formats.
//!
//! ```text
//! cargo run --example dataset_io
//! ```

use xrdmap::io::{self, Format};
use xrdmap::pipeline;
use xrdmap::signal::Threshold;
use xrdmap::synth::{fixtures, generate};

fn main() -> xrdmap::Result<()> {
    let dir = std::env::temp_dir().join("xrdmap-dataset-io");
    std::fs::create_dir_all(&dir)?;

    let fixture = fixtures::clean_three_phase(1, 60);
    let out = generate(&fixture.config)?;
    let csv = dir.join("wafer.csv");
    io::write_dataset(&out.dataset, &csv)?;
    let loaded = io::load_dataset(&csv)?;
    println!(
        "{} samples x {} Q values, identical after reload: {}",
        loaded.dataset.samples.len(),
        loaded.dataset.grid.len(),
        loaded.dataset == out.dataset
    );

    let result = pipeline::run(
        &loaded.dataset,
        &fixture.binarization,
        Threshold::Fixed(fixture.binarization.intensity_threshold),
        &fixture.mapping,
    )?;
    for (name, format) in [("result.json", Format::Json), ("result.csv", Format::Csv)] {
        let path = dir.join(name);
        io::export_result(&result, &path, format)?;
        println!("{}: lossless {}", path.display(), io::import_result(&path)? == result);
    }
    let text = io::result_to_csv(&result)?;
    for line in text.lines().filter(|l| l.starts_with("sample,")).take(3) {
        println!("  {line}");
    }
    Ok(())
}
