//! Seeded generation of the hidden-layer weight matrix and its column
//! geometry.
//!
//! The weight matrix `W` is d×p with i.i.d. `N(0, scale)` entries
//! (`scale = 1/p` matches the random-feature normalization used throughout).
//! Columns `W^(i)` are the per-neuron weight vectors; rows `W_l` are the
//! per-input-coordinate profiles. Entries are drawn in row-major order
//! (`l = 0..d`, then `i = 0..p`) from the stream documented in [`crate::rng`],
//! so regeneration with the same `(d, p, seed, scale)` is bit-identical.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, GaussianStream, SeedDomain};

/// Default cap on dimensions that require p×p dense storage (8·p² bytes).
pub const DENSE_CAP_DEFAULT: usize = 20_000;

pub(crate) fn check_dense_cap(p: usize, cap: usize) -> Result<()> {
    if p > cap {
        Err(Error::DenseCapExceeded { p, cap })
    } else {
        Ok(())
    }
}

/// What to do on the probability-zero event of an exactly zero column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroColumnPolicy {
    /// Fail construction, identifying the column.
    #[default]
    Reject,
    /// Redraw the offending column from the continuing stream.
    Resample,
}

/// The d×p weight matrix together with its generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    d: usize,
    p: usize,
    seed: u64,
    scale: f64,
    entries: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Variance of the entries.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The raw d×p entry matrix; column `i` is the weight vector of neuron `i`.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Owned copy of column `i` (a d-vector).
    pub fn column(&self, i: usize) -> DVector<f64> {
        self.entries.column(i).into_owned()
    }

    /// Owned copy of row `l` as a p-vector.
    pub fn row_vector(&self, l: usize) -> DVector<f64> {
        self.entries.row(l).transpose()
    }

    /// Euclidean norms of all columns.
    pub fn column_norms(&self) -> DVector<f64> {
        DVector::from_fn(self.p, |i, _| self.entries.column(i).norm())
    }

    pub(crate) fn from_parts(
        d: usize,
        p: usize,
        seed: u64,
        scale: f64,
        entries: DMatrix<f64>,
    ) -> Self {
        WeightMatrix {
            d,
            p,
            seed,
            scale,
            entries,
        }
    }
}

/// Generates `W` with the default [`ZeroColumnPolicy::Reject`].
pub fn generate_weights(d: usize, p: usize, seed: u64, scale: f64) -> Result<WeightMatrix> {
    generate_weights_with(d, p, seed, scale, ZeroColumnPolicy::Reject)
}

/// Generates `W`, drawing entries row-major from the weights stream.
pub fn generate_weights_with(
    d: usize,
    p: usize,
    seed: u64,
    scale: f64,
    policy: ZeroColumnPolicy,
) -> Result<WeightMatrix> {
    if d == 0 {
        return Err(Error::invalid("d must be positive"));
    }
    if p == 0 {
        return Err(Error::invalid("p must be positive"));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    let mut stream = GaussianStream::new(derive_seed(seed, SeedDomain::Weights, 0));
    let sigma = scale.sqrt();
    let mut entries = DMatrix::<f64>::zeros(d, p);
    // Row-major traversal keeps the stream order independent of storage layout.
    for l in 0..d {
        for i in 0..p {
            entries[(l, i)] = sigma * stream.next_gaussian();
        }
    }
    for i in 0..p {
        while entries.column(i).iter().all(|&x| x == 0.0) {
            match policy {
                ZeroColumnPolicy::Reject => return Err(Error::ZeroColumn(i)),
                ZeroColumnPolicy::Resample => {
                    for l in 0..d {
                        entries[(l, i)] = sigma * stream.next_gaussian();
                    }
                }
            }
        }
    }
    Ok(WeightMatrix::from_parts(d, p, seed, scale, entries))
}

/// Column norms and the clamped cosine matrix of `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnGeometry {
    d: usize,
    p: usize,
    seed: u64,
    norms: DVector<f64>,
    unit_gram: DMatrix<f64>,
}

impl ColumnGeometry {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `norms[i] = ‖W^(i)‖`.
    pub fn norms(&self) -> &DVector<f64> {
        &self.norms
    }

    /// Pairwise column cosines, clamped to [-1, 1], unit diagonal.
    pub fn unit_gram(&self) -> &DMatrix<f64> {
        &self.unit_gram
    }

    /// `‖W^(i)‖·‖W^(j)‖`.
    pub fn norm_product(&self, i: usize, j: usize) -> f64 {
        self.norms[i] * self.norms[j]
    }

    /// Angle between columns i and j, in [0, π].
    pub fn angle(&self, i: usize, j: usize) -> f64 {
        self.unit_gram[(i, j)].acos()
    }
}

/// Computes [`ColumnGeometry`] under the default dense cap.
pub fn column_geometry(w: &WeightMatrix) -> Result<ColumnGeometry> {
    column_geometry_with_cap(w, DENSE_CAP_DEFAULT)
}

/// Computes norms and the normalized Gram matrix `Dⁿ⁻¹ (WᵀW) Dⁿ⁻¹`.
///
/// Cosines of near-parallel columns can exceed 1 in magnitude by a few ulps;
/// they are clamped so downstream `acos` never sees an out-of-domain value.
pub fn column_geometry_with_cap(w: &WeightMatrix, cap: usize) -> Result<ColumnGeometry> {
    check_dense_cap(w.p(), cap)?;
    let norms = w.column_norms();
    for (i, &n) in norms.iter().enumerate() {
        if n == 0.0 {
            return Err(Error::ZeroColumn(i));
        }
    }
    let p = w.p();
    let mut gram = w.entries().transpose() * w.entries();
    // Normalize, clamp, and mirror the upper triangle so symmetry is exact.
    for j in 0..p {
        for i in 0..=j {
            let c = if i == j {
                1.0
            } else {
                (gram[(i, j)] / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            gram[(i, j)] = c;
            gram[(j, i)] = c;
        }
    }
    Ok(ColumnGeometry {
        d: w.d(),
        p,
        seed: w.seed(),
        norms,
        unit_gram: gram,
    })
}
