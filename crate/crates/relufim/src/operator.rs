//! Matrix-free symmetric operators.
//!
//! Dense p×p storage costs 8·p² bytes, so at p = 10⁴ and beyond the kernel
//! is better applied than materialized. Implementations recompute entries on
//! the fly from O(p·d) state; batched quadratic forms stream each row once
//! for all right-hand sides.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{closed_entry, KernelMatrix};
use crate::weights::WeightMatrix;

pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    /// `y ← Ax`.
    fn apply_to(&self, x: &DVector<f64>, y: &mut DVector<f64>);

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        self.apply_to(x, &mut y);
        y
    }

    /// Quadratic forms `x_kᵀ A x_k` for a batch of vectors.
    fn quadratic_forms(&self, xs: &[&DVector<f64>]) -> Vec<f64> {
        xs.iter().map(|x| x.dot(&self.apply(x))).collect()
    }

    /// Exact trace when cheaply available.
    fn trace_hint(&self) -> Option<f64> {
        None
    }
}

impl SymmetricOperator for KernelMatrix {
    fn dim(&self) -> usize {
        self.p()
    }

    fn apply_to(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        y.gemv(1.0, self.values(), x, 0.0);
    }

    fn trace_hint(&self) -> Option<f64> {
        Some(self.trace())
    }
}

/// The closed-form kernel applied entry-by-entry from normalized columns,
/// without any p×p storage.
pub struct ClosedFormOperator {
    d: usize,
    p: usize,
    seed: u64,
    /// Columns scaled to unit norm, d×p.
    unit_columns: DMatrix<f64>,
    norms: DVector<f64>,
}

impl ClosedFormOperator {
    pub fn from_weights(w: &WeightMatrix) -> Result<Self> {
        let norms = w.column_norms();
        for (i, &n) in norms.iter().enumerate() {
            if n == 0.0 {
                return Err(Error::ZeroColumn(i));
            }
        }
        let mut unit_columns = w.entries().clone();
        for i in 0..w.p() {
            unit_columns.column_mut(i).scale_mut(1.0 / norms[i]);
        }
        Ok(ClosedFormOperator {
            d: w.d(),
            p: w.p(),
            seed: w.seed(),
            unit_columns,
            norms,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.norms[i] * self.norms[i] / 2.0;
        }
        let cosine = self
            .unit_columns
            .column(i)
            .dot(&self.unit_columns.column(j))
            .clamp(-1.0, 1.0);
        closed_entry(cosine, self.norms[i] * self.norms[j])
    }

    /// Exact trace `½ Σ ‖W^(i)‖²`.
    pub fn trace(&self) -> f64 {
        self.norms.iter().map(|n| n * n).sum::<f64>() / 2.0
    }

    fn row_into(&self, i: usize, row: &mut [f64]) {
        let ci = self.unit_columns.column(i);
        let ni = self.norms[i];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = if i == j {
                ni * ni / 2.0
            } else {
                let cosine = ci.dot(&self.unit_columns.column(j)).clamp(-1.0, 1.0);
                closed_entry(cosine, ni * self.norms[j])
            };
        }
    }
}

impl SymmetricOperator for ClosedFormOperator {
    fn dim(&self) -> usize {
        self.p
    }

    fn apply_to(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        let p = self.p;
        let out: Vec<f64> = (0..p)
            .into_par_iter()
            .map_init(
                || vec![0.0; p],
                |row, i| {
                    self.row_into(i, row);
                    row.iter().zip(x.iter()).map(|(r, v)| r * v).sum()
                },
            )
            .collect();
        y.copy_from_slice(&out);
    }

    fn quadratic_forms(&self, xs: &[&DVector<f64>]) -> Vec<f64> {
        // One pass over the rows serves every right-hand side.
        let p = self.p;
        let k = xs.len();
        let partials: Vec<Vec<f64>> = (0..p)
            .into_par_iter()
            .map_init(
                || vec![0.0; p],
                |row, i| {
                    self.row_into(i, row);
                    xs.iter()
                        .map(|x| {
                            let dot: f64 = row.iter().zip(x.iter()).map(|(r, v)| r * v).sum();
                            x[i] * dot
                        })
                        .collect()
                },
            )
            .collect();
        let mut forms = vec![0.0; k];
        for part in partials {
            for (f, v) in forms.iter_mut().zip(part) {
                *f += v;
            }
        }
        forms
    }

    fn trace_hint(&self) -> Option<f64> {
        Some(self.trace())
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.p);
        self.apply_to(x, &mut y);
        y
    }
}

impl ClosedFormOperator {
    pub fn d(&self) -> usize {
        self.d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::closed_form_kernel;
    use crate::weights::{column_geometry, generate_weights};

    #[test]
    fn matches_dense_closed_form() {
        let w = generate_weights(6, 60, 17, 1.0 / 60.0).unwrap();
        let dense = closed_form_kernel(&column_geometry(&w).unwrap()).unwrap();
        let op = ClosedFormOperator::from_weights(&w).unwrap();
        for i in 0..60 {
            for j in 0..60 {
                assert!((op.entry(i, j) - dense.values()[(i, j)]).abs() < 1e-12);
            }
        }
        let x = DVector::from_fn(60, |i, _| (i as f64 * 0.37).sin());
        let via_op = op.apply(&x);
        let via_dense = dense.values() * &x;
        assert!((via_op - via_dense).norm() < 1e-10);
        assert!((op.trace() - dense.trace()).abs() < 1e-12);
    }

    #[test]
    fn batched_forms_match_single_applications() {
        let w = generate_weights(5, 40, 18, 0.025).unwrap();
        let op = ClosedFormOperator::from_weights(&w).unwrap();
        let a = DVector::from_fn(40, |i, _| 1.0 / (i as f64 + 1.0));
        let b = DVector::from_fn(40, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        let batch = op.quadratic_forms(&[&a, &b]);
        assert!((batch[0] - a.dot(&op.apply(&a))).abs() < 1e-12);
        assert!((batch[1] - b.dot(&op.apply(&b))).abs() < 1e-12);
    }
}
