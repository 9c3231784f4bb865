//! Upper limits on the collapse-rate parameter λ of spontaneous-localization
//! models, obtained from binned low-background X-ray spectra.
//!
//! The chain is: load a spectrum ([`spectrum`]), fit the amplitude of a pure
//! `α/E` shape ([`fit`]), convert the amplitude into a bound on λ through the
//! per-electron spontaneous emission rate ([`emission`], [`limit`]), and
//! validate the whole thing on pseudo-experiments ([`pseudo`]).
//!
//! Closure studies run their trials on the rayon pool when the `parallel`
//! feature is enabled (the default). Without it every path is sequential and
//! produces identical results.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod emission;
pub mod error;
pub mod fit;
pub mod limit;
pub mod material;
pub mod plot;
pub mod pseudo;
pub mod report;
pub mod spectrum;

pub use constants::{ConstantsMode, PhysicalConstants};
pub use emission::EmissionModelParams;
pub use error::{Error, Result};
pub use fit::{FitMethod, FitResult};
pub use limit::{ClMode, LimitAssumptions, LimitResult};
pub use material::MaterialSpec;
pub use pseudo::{ClosureReport, Execution, SimulationConfig};
pub use spectrum::{BinnedSpectrum, Normalization};
