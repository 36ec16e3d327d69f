//! A desk-scale AC optimal power flow laboratory.
//!
//! The crate covers the full loop for studying learned OPF proxies:
//! parsing grid case files, solving the AC-OPF with a primal-dual
//! interior-point method (recording solver trajectories), generating
//! perturbed-load datasets, quantifying generator dispatch volatility with
//! piecewise-linear complexity indices, training fully-connected and
//! recurrent predictors (with optional constraint-aware losses), and
//! evaluating prediction quality against load-flow projections.

pub mod case;
pub mod dataset;
pub mod eval;
pub mod network;
pub mod nn;
pub mod pwl;
pub mod report;
pub mod solver;
pub mod train;
