//! Phase mapping of combinatorial XRD libraries.
//!
//! Each diffraction pattern is reduced to a binary peak pattern over `W`
//! Q windows. Patterns are then grouped by peak count and assigned, group by
//! group, to pure phases or to mixtures of previously found ones. Results
//! can be merged hierarchically or by hand, compared against conventional
//! clustering, plotted, and served to a browser client.
//!
//! ```no_run
//! use xrdmap::{pipeline, io, phasemap::PhaseMapParams, signal::{BinarizationParams, Threshold}};
//!
//! let loaded = io::load_dataset("wafer.csv")?;
//! let result = pipeline::run(
//!     &loaded.dataset,
//!     &BinarizationParams::new(0.0, 100),
//!     Threshold::Auto,
//!     &PhaseMapParams::new(2, 5),
//! )?;
//! println!("{} phases", result.catalog.len());
//! # Ok::<(), xrdmap::Error>(())
//! ```

#![allow(clippy::needless_range_loop)]

pub mod comparison;
pub mod error;
pub mod io;
pub mod merge;
pub mod model;
pub mod phasemap;
pub mod plot;
pub mod service;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    BinaryPeakPattern, Composition, Dataset, Membership, MembershipTable, PhaseCatalog, PhaseId, PhaseMapResult, QGrid,
    XrdSample,
};

pub mod pipeline {
    //! Dataset to phase map in one call.

    use crate::error::Result;
    use crate::model::{Dataset, PhaseMapResult};
    use crate::phasemap::{run_incremental_phase_mapping, PhaseMapParams};
    use crate::signal::{binarize_with_threshold, BinarizationParams, Threshold};

    /// Binarizes every sample and runs incremental phase mapping. The
    /// binarization actually applied is recorded in the result's params.
    pub fn run(
        dataset: &Dataset,
        binarization: &BinarizationParams,
        threshold: Threshold,
        mapping: &PhaseMapParams,
    ) -> Result<PhaseMapResult> {
        let (patterns, record) = binarize_with_threshold(&dataset.samples, binarization, threshold)?;
        let pairs: Vec<_> = dataset.samples.iter().map(|s| s.id.clone()).zip(patterns).collect();
        let mut result = run_incremental_phase_mapping(&pairs, mapping)?;
        result.params.binarization = Some(record);
        Ok(result)
    }
}
