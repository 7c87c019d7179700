//! File formats, synthetic frames and run configuration.

pub mod config;
pub mod output;
pub mod population;
pub mod synth;

pub use config::{PopulationSource, RunConfig};
pub use population::{load_population, load_sample, write_population, ColumnMapping};
pub use synth::{generate_synthetic, OutcomeFamily, SynthParams};
