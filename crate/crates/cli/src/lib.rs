//! Experiment runner for master stability function computations on
//! networks of impact oscillators.

pub mod config;
pub mod output;
pub mod plot;
pub mod run;
