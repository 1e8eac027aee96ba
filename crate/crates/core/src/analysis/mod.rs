//! Response diagnostics: solution crossings, normalized spectra, trajectory
//! divergence, and the interface sweeps built on them.

pub mod chaos;
pub mod crossings;
pub mod interface;
pub mod spectrum;

pub use chaos::{chaos_measure, DivergenceReport, FractionInterval};
pub use crossings::{detect_crossings, CrossingReport};
pub use interface::{
    chaotic_interface, monotonic_interface, periodic_interface, write_curves, Grid, InterfaceCurve, InterfaceKind,
    PointCache, SweepConfig, SweepOptions, SweepOutcome,
};
pub use spectrum::{dft_normalized, power_spectrum_measure, Spectrum};
