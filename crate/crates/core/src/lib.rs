pub mod affinity;
pub mod binfmt;
pub mod cli;
pub mod convergence;
pub mod dataset;
pub mod error;
pub mod group;
pub mod harmonic;
pub mod operator;
pub mod oracle;
pub mod spectral;
