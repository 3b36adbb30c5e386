//! Config-driven experiment runner around `rbdsde_core`.

pub mod american;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod output;
pub mod run;
pub mod suite;
