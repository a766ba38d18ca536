//! The feature second-moment matrix `J` of ReLU features.
//!
//! For standard-normal input `x` and weight columns `u = W^(i)`, `v = W^(j)`,
//! the entry `J_ij = E[φ(x·u) φ(x·v)]` has the arc-cosine closed form
//!
//! ```text
//! J_ij = (1/2π) ((π − θ) cos θ + sin θ) · ‖u‖‖v‖,   θ = angle(u, v),
//! ```
//!
//! and an equivalent power series in `z = cos θ`:
//! `J_ij = (A/2π) f(z) + A z / 4` with `f(z) = z·asin z + sqrt(1−z²)`,
//! `A = ‖u‖‖v‖`, and `f(z) = 1 + Σ_{n≥0} c_n z^(2n+2)` where
//! `c_n = C(2n,n) / (4^n (2n+1)(2n+2))`. The terms with `n ≥ 1` form the
//! positive-semidefinite remainder matrix returned by [`residual_kernel`].
//!
//! A seeded Monte Carlo estimator of `E[φ(x·u) φ(x·v)]` serves as an
//! independent oracle for both constructions.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, GaussianStream, SeedDomain};
use crate::weights::ColumnGeometry;

/// How a [`KernelMatrix`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    /// Arc-cosine closed form.
    ClosedForm,
    /// Series truncated after remainder term `n = truncation`.
    Series { truncation: usize },
    /// Sample average of `XᵀX` over `samples` feature draws.
    Empirical { samples: usize, sigma2: f64 },
    /// Low-rank assembly from the feature basis.
    Approx,
    /// Truncated positive-semidefinite remainder.
    Residual { truncation: usize },
}

/// Originating parameters carried alongside the values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelMeta {
    pub d: usize,
    pub seed: u64,
    /// Guaranteed entrywise bound on the truncated series tail, when the
    /// provenance involves a truncation.
    pub tail_bound: Option<f64>,
}

/// A symmetric p×p matrix tagged with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    p: usize,
    values: DMatrix<f64>,
    provenance: Provenance,
    meta: KernelMeta,
}

impl KernelMatrix {
    /// Builds from an upper-triangle entry function; symmetry is exact by
    /// construction. Fails on non-finite entries.
    pub(crate) fn from_upper<F>(
        p: usize,
        provenance: Provenance,
        meta: KernelMeta,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let mut values = DMatrix::<f64>::zeros(p, p);
        // Entries are independent; fill column-parallel then mirror.
        let cols: Vec<Vec<f64>> = (0..p)
            .into_par_iter()
            .map(|j| (0..=j).map(|i| f(i, j)).collect())
            .collect();
        for (j, col) in cols.into_iter().enumerate() {
            for (i, v) in col.into_iter().enumerate() {
                values[(i, j)] = v;
                values[(j, i)] = v;
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("kernel entries must be finite"));
        }
        Ok(KernelMatrix {
            p,
            values,
            provenance,
            meta,
        })
    }

    pub(crate) fn from_symmetric_parts(
        values: DMatrix<f64>,
        provenance: Provenance,
        meta: KernelMeta,
    ) -> Result<Self> {
        let p = values.nrows();
        if values.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: values.ncols(),
            });
        }
        let max_asym = (0..p)
            .flat_map(|j| (0..j).map(move |i| (i, j)))
            .map(|(i, j)| (values[(i, j)] - values[(j, i)]).abs())
            .fold(0.0, f64::max);
        if max_asym > 0.0 {
            return Err(Error::NotSymmetric { max_asym });
        }
        Ok(KernelMatrix {
            p,
            values,
            provenance,
            meta,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn meta(&self) -> KernelMeta {
        self.meta
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference to another matrix.
    pub fn max_entry_diff(&self, other: &KernelMatrix) -> Result<f64> {
        if self.p != other.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: other.p,
            });
        }
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// The same matrix scaled by `factor`, keeping provenance and meta.
    pub fn scaled(&self, factor: f64) -> KernelMatrix {
        KernelMatrix {
            p: self.p,
            values: &self.values * factor,
            provenance: self.provenance,
            meta: self.meta,
        }
    }

    /// For an empirical matrix, the Fisher-information view `J⁽ⁿ⁾/σ²`.
    /// Eigenvectors are unchanged; eigenvalues scale by `1/σ²`.
    pub fn fim_view(&self) -> Result<KernelMatrix> {
        match self.provenance {
            Provenance::Empirical { sigma2, .. } => Ok(self.scaled(1.0 / sigma2)),
            _ => Err(Error::invalid(
                "fim_view applies to empirically accumulated matrices",
            )),
        }
    }
}

/// Closed-form entry from a clamped cosine and a norm product.
///
/// The `cosine = ±1` limits are returned exactly (`A/2` and `0`) so arccos
/// rounding cannot leak into parallel/antiparallel pairs.
pub fn closed_entry(cosine: f64, norm_product: f64) -> f64 {
    debug_assert!((-1.0..=1.0).contains(&cosine));
    if cosine >= 1.0 {
        return norm_product / 2.0;
    }
    if cosine <= -1.0 {
        return 0.0;
    }
    let theta = cosine.acos();
    let sin_theta = (1.0 - cosine * cosine).sqrt();
    ((std::f64::consts::PI - theta) * cosine + sin_theta) * norm_product
        / (2.0 * std::f64::consts::PI)
}

/// The closed-form matrix; diagonal entries are `‖W^(i)‖²/2` exactly.
pub fn closed_form_kernel(geom: &ColumnGeometry) -> Result<KernelMatrix> {
    let norms = geom.norms();
    let gram = geom.unit_gram();
    KernelMatrix::from_upper(
        geom.p(),
        Provenance::ClosedForm,
        KernelMeta {
            d: geom.d(),
            seed: geom.seed(),
            tail_bound: None,
        },
        |i, j| {
            if i == j {
                norms[i] * norms[i] / 2.0
            } else {
                closed_entry(gram[(i, j)], norms[i] * norms[j])
            }
        },
    )
}

/// `f(z) = z·asin(z) + sqrt(1 − z²)` for `|z| ≤ 1`.
pub fn f_of_z(z: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&z) {
        return Err(Error::invalid(format!("f(z) requires |z| <= 1, got {z}")));
    }
    Ok(z * z.asin() + (1.0 - z * z).sqrt())
}

/// Series coefficients `c_n = C(2n,n) / (4^n (2n+1)(2n+2))` for `n = 0..=n_max`.
///
/// The central-binomial ratio `C(2n,n)/4^n = Π (2k−1)/(2k)` is folded
/// incrementally, so no intermediate overflows for any `n`.
pub fn series_coefficients(n_max: usize) -> Vec<f64> {
    let mut coeffs = Vec::with_capacity(n_max + 1);
    let mut central = 1.0; // C(2n,n)/4^n at n = 0
    for n in 0..=n_max {
        if n > 0 {
            central *= (2 * n - 1) as f64 / (2 * n) as f64;
        }
        coeffs.push(central / ((2 * n + 1) as f64 * (2 * n + 2) as f64));
    }
    coeffs
}

/// Conservative analytic bound on `Σ_{n > n_trunc} c_n`.
///
/// Sums terms directly up to `M` and bounds the rest via
/// `c_n ≤ 1/(4 sqrt(π) n^{5/2})`, giving remainder `≤ M^{-3/2}/(6 sqrt(π))`.
pub fn coefficient_tail_sum(n_trunc: usize) -> f64 {
    let m = (4 * n_trunc).max(n_trunc + 1000);
    let coeffs = series_coefficients(m);
    let direct: f64 = coeffs[n_trunc + 1..].iter().rev().sum();
    let remainder = (m as f64).powf(-1.5) / (6.0 * std::f64::consts::PI.sqrt());
    direct + remainder
}

/// Truncation and tolerance for the series constructions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    /// Remainder terms `n = 1..=truncation` are kept.
    pub truncation: usize,
    /// Target entrywise tail tolerance (relative to the norm product).
    pub tail_tol: f64,
}

impl Default for SeriesSpec {
    fn default() -> Self {
        SeriesSpec {
            truncation: 64,
            tail_tol: 1e-12,
        }
    }
}

impl SeriesSpec {
    /// Picks the smallest truncation whose guaranteed tail at `|z| ≤ z_max`
    /// is below `tol` (relative to the norm product). Near `z_max = 1` the
    /// tail decays like `N^{-3/2}`, so tight tolerances get large.
    pub fn for_tolerance(tol: f64, z_max: f64) -> Result<SeriesSpec> {
        if !(tol > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if !(0.0..=1.0).contains(&z_max) {
            return Err(Error::invalid("z_max must be in [0, 1]"));
        }
        let mut n = 1usize;
        loop {
            let tail = coefficient_tail_sum(n) * z_max.powi(2 * n as i32 + 4)
                / (2.0 * std::f64::consts::PI);
            if tail <= tol {
                return Ok(SeriesSpec {
                    truncation: n,
                    tail_tol: tol,
                });
            }
            if n > 20_000_000 {
                return Err(Error::invalid(format!(
                    "tolerance {tol:e} unreachable at z_max {z_max}"
                )));
            }
            n = (n * 2).max(n + 1);
        }
    }
}

/// Partial sum of `f`: `1 + Σ_{n=0..=n_terms} c_n z^(2n+2)`.
///
/// Nondecreasing in `n_terms` for `z ≥ 0` and converges to [`f_of_z`].
pub fn f_series(z: f64, n_terms: usize) -> Result<f64> {
    if !(-1.0..=1.0).contains(&z) {
        return Err(Error::invalid(format!("f(z) requires |z| <= 1, got {z}")));
    }
    let coeffs = series_coefficients(n_terms);
    let z2 = z * z;
    let mut power = z2; // z^(2n+2) at n = 0
    let mut sum = 1.0;
    for c in coeffs {
        sum += c * power;
        power *= z2;
    }
    Ok(sum)
}

fn series_parts(cosine: f64, norm_product: f64, coeffs: &[f64]) -> (f64, f64) {
    // Returns (leading three terms, truncated remainder), both scaled by A.
    let z2 = cosine * cosine;
    let a = norm_product;
    let inv_2pi = 0.5 / std::f64::consts::PI;
    let leading = a * inv_2pi + a * cosine / 4.0 + a * z2 * coeffs[0] * inv_2pi;
    let mut power = z2 * z2; // z^(2n+2) at n = 1
    let mut rem = 0.0;
    for &c in &coeffs[1..] {
        rem += c * power;
        power *= z2;
    }
    (leading, a * inv_2pi * rem)
}

fn truncation_meta(geom: &ColumnGeometry, spec: &SeriesSpec) -> KernelMeta {
    let max_a = geom.norms().iter().fold(0.0f64, |m, &n| m.max(n * n));
    KernelMeta {
        d: geom.d(),
        seed: geom.seed(),
        tail_bound: Some(
            max_a * coefficient_tail_sum(spec.truncation) / (2.0 * std::f64::consts::PI),
        ),
    }
}

/// The series construction truncated per `spec`; records the guaranteed
/// entrywise bound on the discarded tail in its meta.
pub fn series_kernel(geom: &ColumnGeometry, spec: &SeriesSpec) -> Result<KernelMatrix> {
    let coeffs = series_coefficients(spec.truncation);
    let norms = geom.norms();
    let gram = geom.unit_gram();
    KernelMatrix::from_upper(
        geom.p(),
        Provenance::Series {
            truncation: spec.truncation,
        },
        truncation_meta(geom, spec),
        |i, j| {
            let (lead, rem) = series_parts(gram[(i, j)], norms[i] * norms[j], &coeffs);
            lead + rem
        },
    )
}

/// The truncated remainder matrix
/// `R_ij = (1/2π) Σ_{n=1..=N} c_n (W^(i)·W^(j))^(2n+2) / A^(2n+1)`.
///
/// Each term is a Hadamard power of the unit Gram matrix times the rank-one
/// norm-product matrix, hence positive-semidefinite; so is the sum.
pub fn residual_kernel(geom: &ColumnGeometry, spec: &SeriesSpec) -> Result<KernelMatrix> {
    let coeffs = series_coefficients(spec.truncation);
    let norms = geom.norms();
    let gram = geom.unit_gram();
    KernelMatrix::from_upper(
        geom.p(),
        Provenance::Residual {
            truncation: spec.truncation,
        },
        truncation_meta(geom, spec),
        |i, j| series_parts(gram[(i, j)], norms[i] * norms[j], &coeffs).1,
    )
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl OracleEstimate {
    /// |mean − reference| in units of the standard error.
    pub fn sigmas_from(&self, reference: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.mean == reference {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - reference).abs() / self.std_error
        }
    }
}

fn oracle_partial(u: &DVector<f64>, v: &DVector<f64>, samples: usize, stream_seed: u64) -> (f64, f64) {
    let d = u.len();
    let mut stream = GaussianStream::new(stream_seed);
    let mut x = DVector::<f64>::zeros(d);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        stream.fill_gaussian(x.as_mut_slice());
        let y = x.dot(u).max(0.0) * x.dot(v).max(0.0);
        sum += y;
        sum_sq += y * y;
    }
    (sum, sum_sq)
}

/// Monte Carlo estimate of `E[φ(x·u) φ(x·v)]` over `x ~ N(0, I_d)`.
///
/// Draws from the kernel-oracle seed domain, so the estimate is independent
/// of any weight-generation stream with the same root seed.
pub fn expected_kernel_oracle(
    u: &DVector<f64>,
    v: &DVector<f64>,
    samples: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    expected_kernel_oracle_sharded(u, v, samples, seed, 1)
}

/// Sharded oracle: worker `w` draws `samples/workers (+1 for the first
/// `samples % workers`)` values from substream `(seed, w)`; partial sums are
/// merged in worker order.
pub fn expected_kernel_oracle_sharded(
    u: &DVector<f64>,
    v: &DVector<f64>,
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<OracleEstimate> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    if u.norm() == 0.0 || v.norm() == 0.0 {
        return Err(Error::invalid("oracle vectors must be nonzero"));
    }
    if samples == 0 {
        return Err(Error::invalid("samples must be >= 1"));
    }
    let workers = workers.max(1).min(samples);
    let shares: Vec<usize> = (0..workers)
        .map(|w| samples / workers + usize::from(w < samples % workers))
        .collect();
    let partials: Vec<(f64, f64)> = shares
        .par_iter()
        .enumerate()
        .map(|(w, &share)| {
            oracle_partial(
                u,
                v,
                share,
                derive_seed(seed, SeedDomain::KernelOracle, w as u64),
            )
        })
        .collect();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for (s, s2) in partials {
        sum += s;
        sum_sq += s2;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
    Ok(OracleEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples,
    })
}
