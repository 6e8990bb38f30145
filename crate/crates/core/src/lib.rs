//! Simulation and trace-analysis toolkit for adoption subsidies on a
//! communication network.
//!
//! The crate has three layers:
//!
//! - a structural demand model for calling between contacts ([`model`]),
//!   line-of-sight coverage over elevation grids ([`coverage`]), and the
//!   adoption game it induces ([`equilibrium`]);
//! - policy machinery on top of the game: subsidy programs, targeting rules,
//!   impact decomposition ([`policy`]) and welfare accounting ([`welfare`]);
//! - synthetic data generation plus forensic analysis of transaction records
//!   ([`scenario`], [`traces`]).
//!
//! Everything is deterministic given explicit seeds; there is no ambient
//! randomness anywhere in the crate.

pub mod coverage;
pub mod equilibrium;
pub mod error;
pub mod math;
pub mod model;
pub mod policy;
pub mod scenario;
pub mod traces;
pub mod welfare;

pub use error::{Error, Result};
