//! Numerical lab for rotationally symmetric self-shrinkers: profile solving,
//! the Gaussian stability spectrum, the doubling construction, rescaled mean
//! curvature flow, Ważewski box shooting and barrier verification.

pub mod barrier;
pub mod config;
pub mod cutoff;
pub mod diff;
pub mod doubling;
pub mod embed;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod spectrum;
pub mod wazewski;

pub use cutoff::CutoffEta;
pub use geometry::{ConeSpec, EndKind, ProfileKind, ShrinkerProfile};
pub use spectrum::SpectralBasis;

/// Version stamped into every emitted file.
pub const FORMAT_VERSION: u32 = 1;
