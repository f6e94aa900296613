//! Doctest shim for the guide in `book/`.
//!
//! mdBook renders the chapters; this crate re-exposes each chapter as a
//! rustdoc page so `cargo test --doc -p neckcalib-book` compiles and
//! runs every code snippet. Keep the module list in sync with
//! `book/src/SUMMARY.md`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/determinants.md")]
pub mod determinants {}

#[doc = include_str!("../../../book/src/neck-metrics.md")]
pub mod neck_metrics {}

#[doc = include_str!("../../../book/src/comass.md")]
pub mod comass {}

#[doc = include_str!("../../../book/src/volume-experiments.md")]
pub mod volume_experiments {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
