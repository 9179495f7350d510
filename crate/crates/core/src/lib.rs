//! Learning mixtures of discrete graphical models.
//!
//! The estimator runs in three stages:
//!
//! 1. [`ranktest::rank_test`] recovers the union graph of all components from
//!    effective ranks of conditional pairwise probability matrices;
//! 2. [`pipeline::find_components`] recovers per-component pairwise marginals
//!    and mixing weights by a spectral decomposition conditioned on vertex
//!    separators, with a globally isolated node fixing the label order;
//! 3. Chow-Liu trees are fitted per component from those marginals.
//!
//! Every estimator reads its moments through [`empirical::StatsSource`], so the
//! same code runs on samples or on exact probabilities from the
//! [`model::Oracle`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod empirical;
mod error;
pub mod eval;
pub mod graphs;
pub mod model;
pub mod pipeline;
pub mod ranktest;
pub mod spectral;
pub mod util;

pub use error::{Error, Result};
