//! Finite-memory predictive online least squares for marginally stable
//! linear dynamical systems, with hint-based regret control.
//!
//! The guide in `book/` walks through the concepts; its chapters are compiled
//! as doctests.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod comparators;
pub mod config;
pub mod error;
pub mod experiment;
pub mod hints;
pub mod lds;
pub mod matkit;
pub mod predictor;
pub mod verify;

pub use error::{Error, Result};
pub use matkit::Mat;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/systems.md")]
    mod systems {}
    #[doc = include_str!("../../../book/src/pols.md")]
    mod pols {}
    #[doc = include_str!("../../../book/src/hints.md")]
    mod hints {}
    #[doc = include_str!("../../../book/src/comparators.md")]
    mod comparators {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
