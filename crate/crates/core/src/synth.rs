//! Synthetic composition-spread wafers with planted phases.
//!
//! Samples sit on a square grid inside a circular wafer. Composition varies
//! smoothly with position (three sputter sources around the rim) and each
//! sample belongs to the planted phase whose composition anchor is closest.
//! The samples closest to a region boundary are given the union of the two
//! nearest phases' peaks and recorded as mixed in the ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Composition, Dataset, Membership, MembershipTable, PhaseId, QGrid, XrdSample};
use crate::phasemap::{fuzzy_equals_unchecked, PhaseMapParams};
use crate::signal::{window_bounds, BinarizationParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPeak {
    /// Peak center, inverse angstrom.
    pub q: f64,
    /// Peak height, counts.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPhase {
    pub name: String,
    /// Composition around which this phase is stable.
    pub anchor: [f64; 3],
    pub peaks: Vec<PlantedPeak>,
    /// Gaussian standard deviation of every peak, inverse angstrom.
    pub width: f64,
}

/// Linear background `intercept + slope * (q - q_start)`, in counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub intercept: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

/// Binarization geometry under which planted phases must be told apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationCheck {
    pub windows: usize,
    pub th: usize,
}

fn default_radius() -> f64 {
    50.0
}

fn default_pitch() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    #[serde(default = "default_radius")]
    pub wafer_radius: f64,
    #[serde(default = "default_pitch")]
    pub pitch: f64,
    /// Evenly thinned subset of the wafer grid; all grid points when absent.
    #[serde(default)]
    pub sample_count: Option<usize>,
    pub grid: GridSpec,
    pub phases: Vec<PlantedPhase>,
    /// Fraction of samples given mixed (two-phase) patterns.
    #[serde(default)]
    pub boundary_band: f64,
    pub background: Background,
    #[serde(default)]
    pub spike_rate: f64,
    #[serde(default)]
    pub spike_amplitude: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub separation: Option<SeparationCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: Dataset,
    /// Planted memberships; `PhaseId(i)` is `config.phases[i]`.
    pub truth: MembershipTable,
}

/// Window index of each planted peak under `check`.
pub fn planted_windows(grid: &QGrid, phase: &PlantedPhase, windows: usize) -> Vec<usize> {
    let bounds = window_bounds(grid.len(), windows);
    let mut w: Vec<usize> = phase
        .peaks
        .iter()
        .map(|p| {
            let i = grid.nearest_index(p.q);
            bounds
                .iter()
                .position(|&(s, e)| i >= s && i < e)
                .expect("index inside grid")
        })
        .collect();
    w.sort_unstable();
    w.dedup();
    w
}

impl SynthConfig {
    pub fn q_grid(&self) -> Result<QGrid> {
        QGrid::linspace(self.grid.start, self.grid.end, self.grid.points)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.phases.is_empty() {
            return bad("at least one planted phase is required".into());
        }
        if !(self.wafer_radius > 0.0 && self.pitch > 0.0) {
            return bad("wafer radius and pitch must be positive".into());
        }
        if !(0.0..1.0).contains(&self.boundary_band) {
            return bad("boundary_band must be in [0, 1)".into());
        }
        if self.boundary_band > 0.0 && self.phases.len() < 2 {
            return bad("a boundary band needs at least two phases".into());
        }
        if !(0.0..=1.0).contains(&self.spike_rate) || self.noise_sigma < 0.0 || self.spike_amplitude < 0.0 {
            return bad("spike_rate, spike_amplitude and noise_sigma out of range".into());
        }
        for p in &self.phases {
            if p.width.is_nan() || p.width <= 0.0 {
                return bad(format!("phase {} needs a positive peak width", p.name));
            }
            if p.peaks.iter().any(|k| k.amplitude.is_nan() || k.amplitude < 0.0) {
                return bad(format!("phase {} has a negative amplitude", p.name));
            }
            Composition::new(p.anchor).map_err(|e| Error::Config(format!("phase {} anchor: {e}", p.name)))?;
        }
        if let Some(check) = self.separation {
            let grid = self.q_grid()?;
            let windows: Vec<Vec<usize>> = self
                .phases
                .iter()
                .map(|p| planted_windows(&grid, p, check.windows))
                .collect();
            for i in 0..windows.len() {
                for j in i + 1..windows.len() {
                    if fuzzy_equals_unchecked(&windows[i], &windows[j], check.th) {
                        return bad(format!(
                            "phases {} and {} are indistinguishable at th={}",
                            self.phases[i].name, self.phases[j].name, check.th
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

fn wafer_positions(radius: f64, pitch: f64) -> Vec<(f64, f64)> {
    let steps = (radius / pitch).floor() as i64;
    let mut out = Vec::new();
    for iy in -steps..=steps {
        for ix in -steps..=steps {
            let (x, y) = (ix as f64 * pitch, iy as f64 * pitch);
            if x * x + y * y <= radius * radius + 1e-9 {
                out.push((x, y));
            }
        }
    }
    out
}

/// Composition from three sources placed at 90, 210 and 330 degrees on the rim.
fn composition_at(pos: (f64, f64), radius: f64) -> [f64; 3] {
    let mut w = [0.0; 3];
    for (k, wk) in w.iter_mut().enumerate() {
        let angle = (90.0 + 120.0 * k as f64).to_radians();
        let (sx, sy) = (radius * angle.cos(), radius * angle.sin());
        let d = ((pos.0 - sx).powi(2) + (pos.1 - sy).powi(2)).sqrt();
        *wk = (-d / (0.5 * radius)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

fn distance3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn gaussian(q: f64, center: f64, width: f64) -> f64 {
    (-0.5 * ((q - center) / width).powi(2)).exp()
}

/// Number of mixed samples planted for `n` samples.
pub fn boundary_count(band: f64, n: usize) -> usize {
    (band * n as f64 - 1e-9).ceil().max(0.0) as usize
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let grid = config.q_grid()?;
    let mut positions = wafer_positions(config.wafer_radius, config.pitch);
    if let Some(n) = config.sample_count {
        let m = positions.len();
        if n > m {
            return Err(Error::Config(format!("wafer holds only {m} positions, {n} requested")));
        }
        positions = (0..n).map(|i| positions[i * m / n]).collect();
    }
    let n = positions.len();
    let total = n;

    // Nearest and second-nearest anchors for each sample.
    let comps: Vec<[f64; 3]> = positions
        .iter()
        .map(|&p| composition_at(p, config.wafer_radius))
        .collect();
    let ranked: Vec<(usize, usize, f64)> = comps
        .iter()
        .map(|c| {
            let mut d: Vec<(f64, usize)> = config
                .phases
                .iter()
                .enumerate()
                .map(|(i, p)| (distance3(c, &p.anchor), i))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let second = d.get(1).map_or((f64::INFINITY, d[0].1), |x| *x);
            (d[0].1, second.1, second.0 - d[0].0)
        })
        .collect();

    let mut memberships: Vec<Membership> = ranked.iter().map(|r| [PhaseId(r.0)].into()).collect();
    let band = boundary_count(config.boundary_band, n);
    if band > 0 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| ranked[a].2.total_cmp(&ranked[b].2).then(a.cmp(&b)));
        for &i in &order[..band] {
            memberships[i] = [PhaseId(ranked[i].0), PhaseId(ranked[i].1)].into();
        }
    }

    let q = grid.values();
    let q0 = q[0];
    let noise = Normal::new(0.0, config.noise_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let samples: Vec<XrdSample> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64 + 1);
            let mut y: Vec<f64> = q
                .iter()
                .map(|&qv| config.background.intercept + config.background.slope * (qv - q0))
                .collect();
            for id in &memberships[i] {
                let phase = &config.phases[id.0];
                for peak in &phase.peaks {
                    for (yv, &qv) in y.iter_mut().zip(q) {
                        *yv += peak.amplitude * gaussian(qv, peak.q, phase.width);
                    }
                }
            }
            if config.spike_rate > 0.0 && rng.random::<f64>() < config.spike_rate {
                let at = rng.random_range(0..q.len());
                y[at] += config.spike_amplitude;
            }
            if config.noise_sigma > 0.0 {
                for v in y.iter_mut() {
                    *v += noise.sample(&mut rng);
                }
            }
            for v in y.iter_mut() {
                *v = v.max(0.0);
            }
            let id = crate::model::default_sample_id(i + 1, total);
            let comp = Composition::normalized(comps[i])?;
            XrdSample::new(id, y, comp, positions[i])
        })
        .collect::<Result<_>>()?;

    let mut truth = MembershipTable::new();
    for (s, m) in samples.iter().zip(memberships) {
        truth.insert(s.id.clone(), m);
    }
    Ok(SynthOutput {
        dataset: Dataset::new(grid, samples)?,
        truth,
    })
}

/// Ready-made wafers with matched processing parameters.
pub mod fixtures {
    use super::*;

    /// A generated configuration plus the binarization and mapping
    /// parameters it was designed for.
    #[derive(Debug, Clone)]
    pub struct Fixture {
        pub config: SynthConfig,
        pub binarization: BinarizationParams,
        pub mapping: PhaseMapParams,
    }

    pub const GRID_POINTS: usize = 500;
    pub const WINDOWS: usize = 100;
    pub const AMPLITUDE: f64 = 1000.0;

    fn grid() -> GridSpec {
        GridSpec {
            start: 1.0,
            end: 4.2,
            points: GRID_POINTS,
        }
    }

    /// Q value at the center of window `w` of the fixture grid.
    pub fn window_center_q(w: usize) -> f64 {
        let g = grid();
        let per = g.points / WINDOWS;
        let idx = w * per + per / 2;
        g.start + (g.end - g.start) * idx as f64 / (g.points - 1) as f64
    }

    fn phase(name: &str, anchor: [f64; 3], windows: &[usize], amplitudes: &[f64]) -> PlantedPhase {
        let step = (grid().end - grid().start) / (GRID_POINTS - 1) as f64;
        PlantedPhase {
            name: name.into(),
            anchor,
            peaks: windows
                .iter()
                .zip(amplitudes)
                .map(|(&w, &a)| PlantedPeak {
                    q: window_center_q(w),
                    amplitude: a,
                })
                .collect(),
            width: 4.0 * step,
        }
    }

    /// Three phases with 2, 3 and 3 peaks anchored at the ternary vertices.
    pub fn three_phases() -> Vec<PlantedPhase> {
        vec![
            phase("alpha", [1.0, 0.0, 0.0], &[15, 60], &[AMPLITUDE, 0.8 * AMPLITUDE]),
            phase(
                "beta",
                [0.0, 1.0, 0.0],
                &[25, 45, 80],
                &[0.9 * AMPLITUDE, AMPLITUDE, 0.7 * AMPLITUDE],
            ),
            phase(
                "gamma",
                [0.0, 0.0, 1.0],
                &[35, 70, 90],
                &[AMPLITUDE, 0.75 * AMPLITUDE, 0.85 * AMPLITUDE],
            ),
        ]
    }

    fn base(seed: u64, n: usize, phases: Vec<PlantedPhase>, th: usize) -> SynthConfig {
        SynthConfig {
            seed,
            wafer_radius: 50.0,
            pitch: 2.0,
            sample_count: Some(n),
            grid: grid(),
            phases,
            boundary_band: 0.0,
            background: Background {
                intercept: 300.0,
                slope: -40.0,
            },
            spike_rate: 0.0,
            spike_amplitude: 0.0,
            noise_sigma: 0.0,
            separation: Some(SeparationCheck { windows: WINDOWS, th }),
        }
    }

    fn binarization() -> BinarizationParams {
        BinarizationParams::new(0.3 * AMPLITUDE, WINDOWS)
    }

    /// Noise-free three-phase wafer with a 10% boundary band.
    pub fn clean_three_phase(seed: u64, n: usize) -> Fixture {
        let mut config = base(seed, n, three_phases(), 2);
        config.boundary_band = 0.1;
        Fixture {
            config,
            binarization: binarization(),
            mapping: PhaseMapParams::new(2, 5),
        }
    }

    /// The clean wafer with 5% Gaussian noise and occasional single-point spikes.
    pub fn noisy_three_phase(seed: u64, n: usize) -> Fixture {
        let mut f = clean_three_phase(seed, n);
        f.config.noise_sigma = 0.05 * AMPLITUDE;
        f.config.spike_rate = 0.02;
        f.config.spike_amplitude = 4.0 * AMPLITUDE;
        f
    }

    /// One planted phase duplicated one window to the right, so that
    /// `th = 0` splits what is physically a single phase.
    pub fn over_split(seed: u64, n: usize) -> Fixture {
        let mut phases = three_phases();
        let mut twin = phases[0].clone();
        twin.name = "alpha-shifted".into();
        let step = window_center_q(1) - window_center_q(0);
        for p in &mut twin.peaks {
            p.q += step;
        }
        twin.anchor = [0.5, 0.25, 0.25];
        phases.insert(1, twin);
        Fixture {
            config: base(seed, n, phases, 0),
            binarization: binarization(),
            mapping: PhaseMapParams::new(0, 5),
        }
    }
}
