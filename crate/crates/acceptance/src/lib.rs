//! Generators and oracles for the acceptance suite.

pub mod graphs;
pub mod scenario;
pub mod synth;
pub mod youtube;
