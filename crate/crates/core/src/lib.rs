//! Zero-shot node classification with a decomposed graph prototype network.
//!
//! The toolkit covers the full experimental loop at desk scale:
//!
//! - [`graph`] — sparse symmetric adjacency, degree-normalized propagation
//!   operators, and exact sparse-times-dense application.
//! - [`spectral`] — a dense spectral-filter oracle (eigendecomposition vs
//!   Chebyshev recursion) used only for verification on small graphs.
//! - [`decompose`] — the K+1 propagated feature subparts and their pooling
//!   weights for four graph-convolution decompositions, plus direct-power
//!   oracles proving the expansions correct.
//! - [`model`] — the prototypical network itself: shared subpart encoder,
//!   semantic heads, joint local/compositional loss, analytic gradients,
//!   Adam training, zero-shot inference and a standard-classification head.
//! - [`csd`] — quantitative class-semantic-description evaluation via
//!   empirical vs semantic class-relation distributions.
//! - [`data`] — citation-network ingestion, CSD tables, class splits, and a
//!   deterministic synthetic dataset generator.
//! - [`harness`] — experiment runners that produce deterministic reports.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); everything
//! shipped runs at [`Real`] = `f64`, which the gradient-check tolerances
//! assume. Concrete aliases for the common types are exported at the crate
//! root.

pub mod config;
pub mod csd;
pub mod data;
pub mod decompose;
pub mod error;
pub mod graph;
pub mod harness;
pub mod model;
pub mod spectral;

mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar type used by the shipped experiments.
pub type Real = f64;

/// [`graph::SparseGraph`] at the default scalar.
pub type SparseGraph64 = graph::SparseGraph<Real>;
/// [`graph::PropagationOperator`] at the default scalar.
pub type PropagationOperator64 = graph::PropagationOperator<Real>;
/// [`decompose::SubpartStack`] at the default scalar.
pub type SubpartStack64 = decompose::SubpartStack<Real>;
/// [`model::ParamSet`] at the default scalar.
pub type ParamSet64 = model::ParamSet<Real>;
/// [`data::Dataset`] at the default scalar.
pub type Dataset64 = data::Dataset<Real>;
