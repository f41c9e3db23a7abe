//! Estimation of size, shape and orientation distributions of prolate
//! spheroids from planar sections.

pub mod error;
pub mod io;
pub mod mle;
pub mod model;
pub mod qle;
pub mod quadrature;
pub mod rng;
pub mod sectioning;
pub mod simulate;
pub mod stats;
pub mod study;
pub mod unfold;

pub use error::{Error, Result};
pub use model::ModelParams;
pub use sectioning::{EdgeRule, ObsWindow, SectionEllipse, SectionPlane};
pub use simulate::{BoxWindow, ProcessConfig, Spheroid, SteinerCoefficients};
