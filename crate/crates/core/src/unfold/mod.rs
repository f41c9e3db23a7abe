//! Trivariate binning, the Monte Carlo section kernel and EM unfolding.

pub mod binning;
pub mod em;
pub mod kernel;

pub use binning::{bin_attributes, bin_ellipses, BinningSpec, Histogram3D, PRESETS};
pub use em::{em_unfold, EmConfig, EmResult};
pub use kernel::{estimate_column, estimate_kernel, KernelCache, KernelConfig, KernelEntry, KernelMatrix, SourceBox};
