//! Spectral structure of the second-moment matrix of one-hidden-layer ReLU
//! features.
//!
//! Fix a d×p weight matrix `W` with `N(0, 1/p)` entries and feed it
//! standard-normal inputs `x`; the feature vector `X_j = max(0, x·W^(j))`
//! has second-moment matrix `J = E[XᵀX]`, which is proportional to the
//! Fisher information of the output layer (factor `1/σ²`). This crate
//! builds `J` three independent ways and verifies how its spectrum is
//! organized:
//!
//! * [`kernel`] — the arc-cosine closed form, an equivalent power series in
//!   the column cosines, the positive-semidefinite series remainder, and a
//!   seeded Monte Carlo oracle;
//! * [`empirical`] — sampled features and the empirical matrix `J⁽ⁿ⁾`;
//! * [`decomposition`] — the candidate eigenvector family (norm profile,
//!   weight rows, pair products, centered squares) and the weighted
//!   outer-product approximation it generates;
//! * [`spectrum`] — dense and Lanczos eigensolvers, the fixed-count
//!   grouping of the eigenvalues near `(2d+1)/4π`, `1/4`, `1/(2πd)`, and
//!   principal-angle alignment reports;
//! * [`bounds`] — the explicit deviation allowances `ξ(d)`, probability
//!   floors `1 − CD/(δ²p)`, and per-run certificates;
//! * [`weights`], [`operator`], [`io`], [`config`], [`cli`] — generation,
//!   matrix-free application, file formats, and the command-line surface.
//!
//! Everything is deterministic given a seed; see [`rng`] for the exact
//! stream and transform.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod decomposition;
pub mod empirical;
pub mod error;
pub mod io;
pub mod kernel;
pub mod operator;
pub mod rng;
pub mod spectrum;
pub mod weights;

pub use error::{Error, Result};
