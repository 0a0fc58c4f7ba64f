//! Deformed harmonic oscillator algebras reconstructed from the weight
//! function of a Bargmann scalar product.
//!
//! The pipeline runs weight function → Mellin transform → characteristic
//! function ψ → truncated Bargmann representation → verification report:
//!
//! - [`weightfn`]: the weight families and their edge behaviour
//! - [`mellin`]: Mellin transform, convergence abscissa, ratio limits
//! - [`algebra`]: ψ, ψ(n)!, spectrum, coherent domain, duality, condition checks
//! - [`bargmann`]: operator matrices, coherent vectors, reproducing kernel,
//!   scalar products and the representation verification suite
//! - [`cli`]: run configuration, reports and the example battery

pub mod algebra;
pub mod bargmann;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod mellin;
pub mod quadrature;
pub mod serde_float;
pub mod weightfn;

pub use error::{Error, Result};

pub use algebra::{build_algebra, CoherentDomain, DeformedAlgebra, Mode, SpectrumDescriptor};
pub use diagnostics::{Check, CheckKind, CheckStatus, DiagnosticsReport, Verdict};
pub use mellin::{MellinProfile, MellinValue, Method, RatioLimits};
pub use weightfn::{Edge, EdgeBehavior, Family, Interval, WeightFunction};
