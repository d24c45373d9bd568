//! Smooth, baseline-correct and binarize one synthetic diffraction pattern.
//!
//! ```text
//! cargo run --example binarize_pattern
//! ```

use xrdmap::model::QGrid;
use xrdmap::signal::{detect_peaks, preprocess, BinarizationParams};

fn main() -> xrdmap::Result<()> {
    let grid = QGrid::linspace(1.0, 4.2, 500)?;
    let gauss = |q: f64, c: f64, a: f64| a * (-0.5 * ((q - c) / 0.025).powi(2)).exp();
    let intensities: Vec<f64> = grid
        .values()
        .iter()
        .map(|&q| 300.0 - 40.0 * (q - 1.0) + gauss(q, 1.8, 900.0) + gauss(q, 2.9, 650.0) + gauss(q, 3.05, 200.0))
        .collect();

    let params = BinarizationParams::new(300.0, 100);
    let processed = preprocess(&intensities, &params)?;
    let pattern = detect_peaks(&processed.processed, &params)?;

    let top = processed.processed.iter().cloned().fold(0.0, f64::max);
    println!("max processed intensity {top:.1}");
    println!("peak windows {:?}", pattern.peaks());
    println!("{}", pattern.bitstring());

    // a lower threshold admits the weak shoulder at q = 3.05
    let loose = detect_peaks(&processed.processed, &BinarizationParams::new(100.0, 100))?;
    println!("threshold 100: {:?}", loose.peaks());
    Ok(())
}
