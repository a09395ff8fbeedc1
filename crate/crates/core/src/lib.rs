pub mod cli;
pub mod config;
pub mod cost;
pub mod error;
pub mod first_level;
pub mod mdp_exact;
pub mod problem;
pub mod second_level;
pub mod simulator;
pub mod stochastic;
pub mod workload;

pub use error::{Error, Result};
