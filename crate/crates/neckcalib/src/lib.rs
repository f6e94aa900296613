//! Numerical verification engine for calibrations on product "neck"
//! manifolds (M×N, g(q)+h(p)).
//!
//! The library constructs metric families whose diagonal base factors
//! f_j vary along the fiber, locates the fiber point q₀ minimizing the
//! factor product, estimates the comass of the pulled-back volume form
//! π*vol_{g(q₀)} by Monte-Carlo sweeps and local search over tangent
//! frames, checks the equality locus M×{q₀}, and runs volume-comparison
//! and first-variation experiments for graph competitors. A hypothesis
//! probe separates the product-minimum assumption from the stronger
//! coordinatewise one by searching for comass violations.
//!
//! See the guide under `book/` for worked concepts, and the `neckcalib`
//! binary for the operator surface.

pub mod calibration;
pub mod cli;
pub mod domain;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod linalg;
pub mod metric;
pub mod rng;
pub mod variational;

pub use domain::BoxDomain;
pub use error::{Error, Result};
pub use geometry::{jlt_neck, BasePoint, Geometry, OrientedTangentBasis};
pub use metric::{FactorProfile, FiberMetric, NeckSpec, ProductInnerProduct, Q0Info};
