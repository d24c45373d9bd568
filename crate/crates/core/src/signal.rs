//! From raw 1D intensities to a [`BinaryPeakPattern`].
//!
//! Three stages: sliding-window polynomial smoothing, a low-degree baseline
//! fitted by iterated clipping and subtracted (clamped at zero), then
//! windowed peak detection on the first difference of the processed series.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinaryPeakPattern, XrdSample};

/// Maximum refits of the clipped baseline.
pub const BASELINE_MAX_ITERATIONS: usize = 10;

/// Multiplier on the median absolute deviation in the automatic threshold.
pub const AUTO_THRESHOLD_MADS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarizationParams {
    pub smooth_degree: usize,
    /// Odd number of grid points in the smoothing window.
    pub smooth_window: usize,
    pub baseline_degree: usize,
    /// Minimum processed intensity (counts) for a window's peak to count.
    pub intensity_threshold: f64,
    pub window_count: usize,
}

impl BinarizationParams {
    /// Degree 5 / 21-point smoothing and a degree 1 baseline.
    pub fn new(intensity_threshold: f64, window_count: usize) -> Self {
        BinarizationParams {
            smooth_degree: 5,
            smooth_window: 21,
            baseline_degree: 1,
            intensity_threshold,
            window_count,
        }
    }

    pub fn validate(&self, grid_len: usize) -> Result<()> {
        if self.smooth_window.is_multiple_of(2) {
            return Err(Error::param("smooth_window must be odd"));
        }
        if self.smooth_window <= self.smooth_degree {
            return Err(Error::param("smooth_window must exceed smooth_degree"));
        }
        if self.smooth_window > grid_len {
            return Err(Error::param(format!(
                "smooth_window {} exceeds series length {grid_len}",
                self.smooth_window
            )));
        }
        if self.baseline_degree >= grid_len {
            return Err(Error::param("baseline_degree must be below series length"));
        }
        if self.window_count == 0 || self.window_count > grid_len {
            return Err(Error::param(format!(
                "window count must be in 1..={grid_len}, got {}",
                self.window_count
            )));
        }
        if !self.intensity_threshold.is_finite() || self.intensity_threshold < 0.0 {
            return Err(Error::param("intensity_threshold must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Explicit,
    /// Pooled median + 5 MAD of the processed dataset.
    Auto,
}

/// Binarization parameters as actually applied, including the realized
/// threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarizationRecord {
    #[serde(flatten)]
    pub params: BinarizationParams,
    pub threshold_source: ThresholdSource,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Fixed(f64),
    Auto,
}

impl std::str::FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threshold::Auto);
        }
        s.parse::<f64>()
            .ok()
            .filter(|t| t.is_finite() && *t >= 0.0)
            .map(Threshold::Fixed)
            .ok_or_else(|| Error::param(format!("threshold must be 'auto' or a non-negative number, got {s:?}")))
    }
}

/// Weights of one least-squares polynomial fit evaluated at each position
/// inside a window of `window` points.
struct SmoothingKernel {
    window: usize,
    /// `weights[t]` evaluates the fit at window offset `t`.
    weights: Vec<Vec<f64>>,
}

impl SmoothingKernel {
    fn new(degree: usize, window: usize) -> Result<Self> {
        let half = (window / 2) as f64;
        let scale = if half > 0.0 { half } else { 1.0 };
        let x: Vec<f64> = (0..window).map(|j| (j as f64 - half) / scale).collect();
        let design = DMatrix::from_fn(window, degree + 1, |j, k| x[j].powi(k as i32));
        let gram = design.transpose() * &design;
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| Error::param("smoothing fit is singular"))?;
        // hat = A (AᵀA)⁻¹ Aᵀ; row t gives the fitted value at offset t.
        let hat = &design * gram_inv * design.transpose();
        let weights = (0..window).map(|t| hat.row(t).iter().copied().collect()).collect();
        Ok(SmoothingKernel { window, weights })
    }

    fn apply(&self, series: &[f64]) -> Vec<f64> {
        let n = series.len();
        let half = self.window / 2;
        (0..n)
            .map(|i| {
                let start = i.saturating_sub(half).min(n - self.window);
                let w = &self.weights[i - start];
                series[start..start + self.window]
                    .iter()
                    .zip(w)
                    .map(|(y, c)| y * c)
                    .sum()
            })
            .collect()
    }
}

/// Sliding-window least-squares polynomial smoothing.
///
/// Each output point is the value of a degree-`degree` fit over the `window`
/// points centered on it. Near the ends the window is shifted to stay inside
/// the series and the fit is evaluated off-center, so polynomials up to
/// `degree` are reproduced exactly everywhere.
pub fn smooth(intensities: &[f64], degree: usize, window: usize) -> Result<Vec<f64>> {
    if window.is_multiple_of(2) {
        return Err(Error::param(format!("smoothing window {window} must be odd")));
    }
    if window <= degree {
        return Err(Error::param(format!(
            "smoothing window {window} must exceed degree {degree}"
        )));
    }
    if window > intensities.len() {
        return Err(Error::param(format!(
            "smoothing window {window} exceeds series length {}",
            intensities.len()
        )));
    }
    Ok(SmoothingKernel::new(degree, window)?.apply(intensities))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFit {
    pub values: Vec<f64>,
    /// Polynomial coefficients in the normalized abscissa `x ∈ [-1, 1]`,
    /// lowest order first.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Clipping removed too many points; the plain fit was used instead.
    pub fell_back: bool,
}

fn normalized_abscissa(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| 2.0 * i as f64 / (n - 1) as f64 - 1.0).collect()
}

fn polyfit(x: &[f64], y: &[f64], idx: &[usize], degree: usize) -> Result<Vec<f64>> {
    let a = DMatrix::from_fn(idx.len(), degree + 1, |r, k| x[idx[r]].powi(k as i32));
    let b = DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i]));
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::param(format!("baseline fit failed: {e}")))?;
    Ok(sol.iter().copied().collect())
}

fn polyval(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Low-degree baseline lying under the bulk of the signal.
///
/// Starts from a least-squares fit over every point, then repeatedly refits
/// using only the points at or below the current fit, until the retained
/// set stops changing or [`BASELINE_MAX_ITERATIONS`] refits have run.
pub fn fit_baseline(smoothed: &[f64], degree: usize) -> Result<BaselineFit> {
    let n = smoothed.len();
    if degree >= n {
        return Err(Error::param(format!(
            "baseline degree {degree} must be below series length {n}"
        )));
    }
    let x = normalized_abscissa(n);
    let all: Vec<usize> = (0..n).collect();
    let plain = polyfit(&x, smoothed, &all, degree)?;
    let scale = smoothed.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;

    let below = |coef: &[f64]| -> Vec<usize> { (0..n).filter(|&i| smoothed[i] <= polyval(coef, x[i]) + tol).collect() };

    let mut coef = plain.clone();
    let mut retained = below(&coef);
    let mut iterations = 0;
    let mut fell_back = false;
    while iterations < BASELINE_MAX_ITERATIONS {
        if retained.len() < degree + 1 {
            fell_back = true;
            coef = plain.clone();
            break;
        }
        coef = polyfit(&x, smoothed, &retained, degree)?;
        iterations += 1;
        let next = below(&coef);
        if next == retained {
            break;
        }
        retained = next;
    }
    let values = x.iter().map(|&xi| polyval(&coef, xi)).collect();
    Ok(BaselineFit {
        values,
        coefficients: coef,
        iterations,
        fell_back,
    })
}

/// Elementwise `max(smoothed - baseline, 0)`.
pub fn subtract_and_clamp(smoothed: &[f64], baseline: &[f64]) -> Result<Vec<f64>> {
    if smoothed.len() != baseline.len() {
        return Err(Error::param(format!(
            "length mismatch: {} vs {}",
            smoothed.len(),
            baseline.len()
        )));
    }
    Ok(smoothed.iter().zip(baseline).map(|(s, b)| (s - b).max(0.0)).collect())
}

/// Half-open index ranges of `windows` contiguous windows over `len` points.
/// The first `len % windows` windows hold one extra point.
pub fn window_bounds(len: usize, windows: usize) -> Vec<(usize, usize)> {
    let base = len / windows;
    let extra = len % windows;
    let mut start = 0;
    (0..windows)
        .map(|w| {
            let size = base + usize::from(w < extra);
            let range = (start, start + size);
            start += size;
            range
        })
        .collect()
}

/// Indices where the first difference turns from positive to negative.
/// A plateau counts once, at its leftmost index.
pub fn local_maxima(series: &[f64]) -> Vec<usize> {
    let n = series.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if series[i] > series[i - 1] {
            let mut j = i;
            while j + 1 < n && series[j + 1] == series[i] {
                j += 1;
            }
            if j + 1 < n && series[j + 1] < series[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Windowed threshold peak detection on a processed series.
///
/// Within each window only the highest candidate maximum is considered; the
/// window's bit is set when that maximum reaches the intensity threshold.
pub fn detect_peaks(processed: &[f64], params: &BinarizationParams) -> Result<BinaryPeakPattern> {
    let w = params.window_count;
    if w == 0 || w > processed.len() {
        return Err(Error::param(format!(
            "window count {w} invalid for series of length {}",
            processed.len()
        )));
    }
    let candidates = local_maxima(processed);
    let mut best: Vec<Option<usize>> = vec![None; w];
    let bounds = window_bounds(processed.len(), w);
    let mut win = 0;
    for &c in &candidates {
        while c >= bounds[win].1 {
            win += 1;
        }
        match best[win] {
            Some(b) if processed[b] >= processed[c] => {}
            _ => best[win] = Some(c),
        }
    }
    let peaks = best
        .iter()
        .enumerate()
        .filter_map(|(k, b)| b.filter(|&i| processed[i] >= params.intensity_threshold).map(|_| k));
    BinaryPeakPattern::from_peaks(w, peaks)
}

/// Intermediate series of one sample, useful for diagnostics and plots.
#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub smoothed: Vec<f64>,
    pub baseline: BaselineFit,
    pub processed: Vec<f64>,
}

/// Smoothing, baseline fit and subtraction; everything before detection.
pub fn preprocess(intensities: &[f64], params: &BinarizationParams) -> Result<Processed> {
    let smoothed = smooth(intensities, params.smooth_degree, params.smooth_window)?;
    let baseline = fit_baseline(&smoothed, params.baseline_degree)?;
    let processed = subtract_and_clamp(&smoothed, &baseline.values)?;
    Ok(Processed {
        smoothed,
        baseline,
        processed,
    })
}

pub fn binarize_sample(sample: &XrdSample, params: &BinarizationParams) -> Result<BinaryPeakPattern> {
    params.validate(sample.intensities.len())?;
    let p = preprocess(&sample.intensities, params)?;
    detect_peaks(&p.processed, params)
}

fn check_uniform(samples: &[XrdSample]) -> Result<()> {
    if let Some(first) = samples.first() {
        let len = first.intensities.len();
        if let Some(bad) = samples.iter().find(|s| s.intensities.len() != len) {
            return Err(Error::Dataset(format!(
                "sample {} has {} points, expected {len}",
                bad.id,
                bad.intensities.len()
            )));
        }
    }
    Ok(())
}

/// Binarizes every sample, in input order. Samples are processed in parallel.
pub fn binarize_dataset(samples: &[XrdSample], params: &BinarizationParams) -> Result<Vec<BinaryPeakPattern>> {
    check_uniform(samples)?;
    if let Some(first) = samples.first() {
        params.validate(first.intensities.len())?;
    }
    samples.par_iter().map(|s| binarize_sample(s, params)).collect()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// `median + 5 * MAD` over all values of all series pooled together.
pub fn estimate_threshold<'a>(series: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    let mut values: Vec<f64> = series.into_iter().flatten().copied().collect();
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let med = median(&values);
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    med + AUTO_THRESHOLD_MADS * median(&dev)
}

/// Binarizes a dataset, resolving an automatic threshold first when asked.
/// `template.intensity_threshold` is ignored for [`Threshold::Auto`].
pub fn binarize_with_threshold(
    samples: &[XrdSample],
    template: &BinarizationParams,
    threshold: Threshold,
) -> Result<(Vec<BinaryPeakPattern>, BinarizationRecord)> {
    check_uniform(samples)?;
    let mut params = template.clone();
    let source = match threshold {
        Threshold::Fixed(t) => {
            params.intensity_threshold = t;
            ThresholdSource::Explicit
        }
        Threshold::Auto => {
            params.intensity_threshold = 0.0;
            if let Some(first) = samples.first() {
                params.validate(first.intensities.len())?;
            }
            let processed: Vec<Vec<f64>> = samples
                .par_iter()
                .map(|s| preprocess(&s.intensities, &params).map(|p| p.processed))
                .collect::<Result<_>>()?;
            params.intensity_threshold = estimate_threshold(processed.iter().map(Vec::as_slice));
            log::info!("automatic intensity threshold {}", params.intensity_threshold);
            ThresholdSource::Auto
        }
    };
    let patterns = binarize_dataset(samples, &params)?;
    Ok((
        patterns,
        BinarizationRecord {
            params,
            threshold_source: source,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Composition;
    use proptest::prelude::*;

    /// Fits a polynomial to one window by solving the normal equations with
    /// Gaussian elimination, then evaluates it at `at`. Independent of the
    /// kernel construction used by `smooth`.
    fn window_fit_oracle(xs: &[f64], ys: &[f64], degree: usize, at: f64) -> f64 {
        let m = degree + 1;
        let mut a = vec![vec![0.0; m + 1]; m];
        for (x, y) in xs.iter().zip(ys) {
            for r in 0..m {
                for c in 0..m {
                    a[r][c] += x.powi((r + c) as i32);
                }
                a[r][m] += y * x.powi(r as i32);
            }
        }
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for r in 0..m {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=m {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        let coef: Vec<f64> = (0..m).map(|r| a[r][m] / a[r][r]).collect();
        coef.iter().enumerate().map(|(k, c)| c * at.powi(k as i32)).sum()
    }

    fn smooth_oracle(series: &[f64], degree: usize, window: usize) -> Vec<f64> {
        let n = series.len();
        let half = window / 2;
        (0..n)
            .map(|i| {
                let start = i.saturating_sub(half).min(n - window);
                // Local abscissa centered on the window, scaled like the
                // implementation is irrelevant here: use raw offsets.
                let xs: Vec<f64> = (0..window).map(|j| j as f64 - half as f64).collect();
                let at = i as f64 - start as f64 - half as f64;
                window_fit_oracle(&xs, &series[start..start + window], degree, at)
            })
            .collect()
    }

    #[test]
    fn smoothing_keeps_constants() {
        let out = smooth(&[5.0; 5], 2, 5).unwrap();
        assert!(out.iter().all(|v| (v - 5.0).abs() < 1e-12));
        let out = smooth(&[5.0; 5], 0, 3).unwrap();
        assert!(out.iter().all(|v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn smoothing_reproduces_cubic() {
        let ys: Vec<f64> = (0..40)
            .map(|i| {
                let x = i as f64 * 0.1;
                0.5 * x.powi(3) - 2.0 * x * x + x - 3.0
            })
            .collect();
        let out = smooth(&ys, 5, 7).unwrap();
        for (a, b) in out.iter().zip(&ys) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn spike_matches_normal_equation_oracle() {
        let mut ys = vec![0.0; 61];
        ys[30] = 100.0;
        let out = smooth(&ys, 5, 21).unwrap();
        let oracle = smooth_oracle(&ys, 5, 21);
        for (a, b) in out.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(out[30] < 100.0);
        // Spike amplitude bounded by (degree + 1) / window of the input.
        assert!(out[30] < 100.0 * 6.0 / 21.0 * 2.0);
    }

    #[test]
    fn smoothing_matches_oracle_near_edges() {
        let ys: Vec<f64> = (0..30).map(|i| ((i * 7919) % 13) as f64).collect();
        let out = smooth(&ys, 3, 9).unwrap();
        let oracle = smooth_oracle(&ys, 3, 9);
        for (a, b) in out.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn smoothing_parameter_errors() {
        assert!(matches!(smooth(&[1.0; 10], 2, 4), Err(Error::Param(_))));
        assert!(matches!(smooth(&[1.0; 10], 5, 5), Err(Error::Param(_))));
        assert!(matches!(smooth(&[1.0; 10], 2, 11), Err(Error::Param(_))));
    }

    #[test]
    fn baseline_of_a_line_is_the_line() {
        let ys: Vec<f64> = (0..100).map(|i| 3.0 + 0.25 * i as f64).collect();
        let fit = fit_baseline(&ys, 1).unwrap();
        for (a, b) in fit.values.iter().zip(&ys) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(!fit.fell_back);
    }

    #[test]
    fn baseline_of_zero_is_zero() {
        let fit = fit_baseline(&[0.0; 50], 1).unwrap();
        assert!(fit.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn baseline_ignores_a_tall_peak() {
        let (intercept, slope) = (40.0, -0.05);
        let ys: Vec<f64> = (0..400)
            .map(|i| {
                let i = i as f64;
                intercept + slope * i + 500.0 * (-((i - 150.0) / 6.0).powi(2) / 2.0).exp()
            })
            .collect();
        let fit = fit_baseline(&ys, 1).unwrap();
        let fitted_intercept = fit.values[0];
        let fitted_slope = fit.values[1] - fit.values[0];
        assert!((fitted_intercept - intercept).abs() / intercept.abs() < 0.01);
        assert!((fitted_slope - slope).abs() / slope.abs() < 0.01);
    }

    #[test]
    fn baseline_degree_too_high() {
        assert!(fit_baseline(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(subtract_and_clamp(&[3.0, 1.0], &[1.0, 2.0]).unwrap(), vec![2.0, 0.0]);
        assert_eq!(subtract_and_clamp(&[4.0, 4.0], &[4.0, 4.0]).unwrap(), vec![0.0, 0.0]);
        assert!(subtract_and_clamp(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn planted_peak_survives_processing() {
        let h = 300.0;
        let ys: Vec<f64> = (0..500)
            .map(|i| {
                let i = i as f64;
                80.0 + 0.02 * i + h * (-((i - 260.0) / 5.0).powi(2) / 2.0).exp()
            })
            .collect();
        let p = preprocess(&ys, &BinarizationParams::new(10.0, 100)).unwrap();
        let top = p.processed.iter().cloned().fold(0.0, f64::max);
        assert!((top - h).abs() / h < 0.05, "residual height {top}");
        assert!(p.processed.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn window_partition() {
        assert_eq!(window_bounds(10, 3), vec![(0, 4), (4, 7), (7, 10)]);
        assert_eq!(window_bounds(6, 6).len(), 6);
    }

    #[test]
    fn local_maxima_plateau_leftmost() {
        assert_eq!(local_maxima(&[0.0, 1.0, 3.0, 3.0, 3.0, 1.0]), vec![2]);
        // rising edge plateau at the end is not a peak
        assert!(local_maxima(&[0.0, 1.0, 2.0, 2.0]).is_empty());
        assert!(local_maxima(&[5.0, 1.0, 0.0]).is_empty());
    }

    /// Brute-force scan: every index strictly above its left neighbour whose
    /// next different value to the right is lower.
    fn maxima_oracle(s: &[f64]) -> Vec<usize> {
        (1..s.len().saturating_sub(1))
            .filter(|&i| s[i] > s[i - 1])
            .filter(|&i| s[i + 1..].iter().find(|v| **v != s[i]).is_some_and(|v| *v < s[i]))
            .collect()
    }

    #[test]
    fn all_zero_series_gives_empty_pattern() {
        let p = detect_peaks(&[0.0; 100], &BinarizationParams::new(0.0, 10)).unwrap();
        assert_eq!(p.peak_count(), 0);
    }

    #[test]
    fn triangular_peak_sets_its_window() {
        // 100 points, W=10: window 3 spans [30, 40), center 35.
        let series: Vec<f64> = (0..100)
            .map(|i| (10.0 - (i as f64 - 35.0).abs() * 2.0).max(0.0))
            .collect();
        assert_eq!(maxima_oracle(&series), vec![35]);
        let p = detect_peaks(&series, &BinarizationParams::new(5.0, 10)).unwrap();
        assert_eq!(p.peaks(), &[3]);
    }

    #[test]
    fn highest_maximum_per_window_wins() {
        let mut series = vec![0.0; 100];
        series[32] = 8.0;
        series[37] = 12.0;
        assert_eq!(maxima_oracle(&series), vec![32, 37]);
        let p = detect_peaks(&series, &BinarizationParams::new(5.0, 10)).unwrap();
        assert_eq!(p.peaks(), &[3]);
        // the lower maximum alone would also qualify; the window still gives one bit
        let p = detect_peaks(&series, &BinarizationParams::new(10.0, 10)).unwrap();
        assert_eq!(p.peaks(), &[3]);
        let p = detect_peaks(&series, &BinarizationParams::new(12.5, 10)).unwrap();
        assert_eq!(p.peak_count(), 0);
    }

    fn planted_sample(centers: &[(f64, f64)], points: usize) -> XrdSample {
        let ys = (0..points)
            .map(|i| {
                let i = i as f64;
                50.0 + 0.01 * i
                    + centers
                        .iter()
                        .map(|(c, h)| h * (-((i - c) / 4.0).powi(2) / 2.0).exp())
                        .sum::<f64>()
            })
            .collect();
        XrdSample::new("s", ys, Composition::new([1.0, 0.0, 0.0]).unwrap(), (0.0, 0.0)).unwrap()
    }

    #[test]
    fn zero_sample_gives_zero_pattern() {
        let s = XrdSample::new(
            "z",
            vec![0.0; 200],
            Composition::new([0.0, 1.0, 0.0]).unwrap(),
            (0.0, 0.0),
        )
        .unwrap();
        let p = binarize_sample(&s, &BinarizationParams::new(1.0, 40)).unwrap();
        assert_eq!(p.peak_count(), 0);
    }

    #[test]
    fn three_planted_peaks_give_three_bits() {
        // 500 points in 100 windows of 5; centers at window midpoints.
        let s = planted_sample(&[(102.0, 400.0), (252.0, 300.0), (397.0, 500.0)], 500);
        let p = binarize_sample(&s, &BinarizationParams::new(100.0, 100)).unwrap();
        assert_eq!(p.peaks(), &[20, 50, 79]);
    }

    #[test]
    fn peak_below_threshold_is_dropped() {
        let threshold = 200.0;
        let s = planted_sample(&[(102.0, 400.0), (252.0, threshold * 0.9)], 500);
        let p = binarize_sample(&s, &BinarizationParams::new(threshold, 100)).unwrap();
        assert_eq!(p.peaks(), &[20]);
    }

    #[test]
    fn dataset_binarization_preserves_order_and_purity() {
        let params = BinarizationParams::new(100.0, 100);
        assert!(binarize_dataset(&[], &params).unwrap().is_empty());
        let s = planted_sample(&[(102.0, 400.0)], 500);
        let many = vec![s.clone(); 16];
        let out = binarize_dataset(&many, &params).unwrap();
        assert!(out.iter().all(|p| *p == out[0]));
        let sequential: Vec<_> = many.iter().map(|s| binarize_sample(s, &params).unwrap()).collect();
        assert_eq!(out, sequential);
    }

    #[test]
    fn mixed_lengths_are_a_dataset_error() {
        let a = planted_sample(&[(50.0, 100.0)], 200);
        let b = planted_sample(&[(50.0, 100.0)], 210);
        let err = binarize_dataset(&[a, b], &BinarizationParams::new(1.0, 10)).unwrap_err();
        assert!(matches!(err, Error::Dataset(_)));
    }

    #[test]
    fn auto_threshold_is_recorded() {
        let s = planted_sample(&[(102.0, 400.0), (252.0, 300.0)], 500);
        let (patterns, record) =
            binarize_with_threshold(&[s], &BinarizationParams::new(0.0, 100), Threshold::Auto).unwrap();
        assert_eq!(record.threshold_source, ThresholdSource::Auto);
        assert!(record.params.intensity_threshold > 0.0);
        assert_eq!(patterns[0].peaks(), &[20, 50]);
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!("auto".parse::<Threshold>().unwrap(), Threshold::Auto);
        assert_eq!("12.5".parse::<Threshold>().unwrap(), Threshold::Fixed(12.5));
        assert!("-1".parse::<Threshold>().is_err());
    }

    #[test]
    fn median_mad_estimator() {
        let t = estimate_threshold([[1.0, 2.0, 3.0, 4.0, 100.0].as_slice()]);
        // median 3, deviations {2,1,0,1,97} -> MAD 1
        assert_eq!(t, 8.0);
    }

    proptest! {
        #[test]
        fn local_maxima_match_oracle(series in proptest::collection::vec(0u8..6, 0..60)) {
            let s: Vec<f64> = series.iter().map(|&v| v as f64).collect();
            prop_assert_eq!(local_maxima(&s), maxima_oracle(&s));
        }

        #[test]
        fn raising_threshold_never_adds_bits(
            series in proptest::collection::vec(0.0f64..100.0, 20..200),
            w in 1usize..20,
            t1 in 0.0f64..100.0,
            dt in 0.0f64..50.0,
        ) {
            let w = w.min(series.len());
            let low = detect_peaks(&series, &BinarizationParams::new(t1, w)).unwrap();
            let high = detect_peaks(&series, &BinarizationParams::new(t1 + dt, w)).unwrap();
            prop_assert!(high.peaks().iter().all(|p| low.get(*p)));
        }

        #[test]
        fn coarser_windows_keep_covering_bits(
            series in proptest::collection::vec(0.0f64..100.0, 20..200),
            fine in 2usize..40,
            coarse in 1usize..40,
            t in 0.0f64..100.0,
        ) {
            let fine = fine.min(series.len());
            let coarse = coarse.min(fine - 1).max(1);
            let fine_p = detect_peaks(&series, &BinarizationParams::new(t, fine)).unwrap();
            let coarse_p = detect_peaks(&series, &BinarizationParams::new(t, coarse)).unwrap();
            let fb = window_bounds(series.len(), fine);
            let cb = window_bounds(series.len(), coarse);
            for &k in fine_p.peaks() {
                // every candidate inside fine window k lies in some coarse window;
                // the kept maximum's coarse window must be set
                let maxima = local_maxima(&series);
                let kept = maxima.iter().copied()
                    .filter(|&i| i >= fb[k].0 && i < fb[k].1)
                    .max_by(|&a, &b| series[a].total_cmp(&series[b]).then(b.cmp(&a)))
                    .unwrap();
                let cw = cb.iter().position(|&(s, e)| kept >= s && kept < e).unwrap();
                prop_assert!(coarse_p.get(cw));
            }
        }

        #[test]
        fn processed_is_non_negative(series in proptest::collection::vec(0.0f64..1000.0, 25..120)) {
            let p = preprocess(&series, &BinarizationParams::new(0.0, 5)).unwrap();
            prop_assert!(p.processed.iter().all(|v| *v >= 0.0 && v.is_finite()));
        }
    }
}
