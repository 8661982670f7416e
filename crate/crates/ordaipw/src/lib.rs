//! Treatment-effect estimation for randomized trials with an ordinal
//! outcome determined a fixed lag after randomization, analyzed at an
//! interim time when some outcomes are still censored.
//!
//! The crate provides the proportional-odds model and its
//! working-independence estimating machinery, censoring Kaplan-Meier
//! curves and censoring-martingale integrals, the augmented
//! inverse-probability-weighted estimators built from them, simulation
//! scenario generators, and a Monte Carlo harness with a command-line
//! front end.

// Negated comparisons like `!(x > 0.0)` are NaN-rejecting guards here, and
// explicit index loops mirror the paired matrix/vector subscripts of the
// estimating equations.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aipw;
pub mod basis;
pub mod censoring;
pub mod config;
pub mod data;
pub mod error;
pub mod io;
pub mod mc;
pub mod propodds;
pub mod report;
pub mod simgen;
pub mod rng;
