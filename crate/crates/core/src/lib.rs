pub mod cli;
pub mod diffusion;
pub mod engine;
pub mod eval;
pub mod graph;
pub mod intervention;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod theory;
pub mod scm;
pub mod seed;
