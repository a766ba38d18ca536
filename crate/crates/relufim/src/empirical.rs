//! Sampled ReLU features and the empirical second-moment matrix.
//!
//! Each draw takes a standard-normal input `x`, forms `X = φ(xW)` entrywise,
//! and adds the rank-one update `XᵀX` to a running sum; `J⁽ⁿ⁾ = sum/n`
//! converges to the closed-form matrix entrywise at the usual `1/√n` rate.
//! Only the upper triangle is written during accumulation; mirroring happens
//! when the matrix is finalized. The noise variance `σ²` never enters the
//! accumulation — the Fisher-information view is a pure `1/σ²` rescaling.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{KernelMatrix, KernelMeta, Provenance};
use crate::rng::{derive_seed, GaussianStream, SeedDomain};
use crate::weights::WeightMatrix;

/// Draws i.i.d. feature vectors `X = φ(xW)` for a fixed weight matrix.
pub struct FeatureSampler<'a> {
    weights: &'a WeightMatrix,
    stream: GaussianStream,
    seed: u64,
    input_buf: DVector<f64>,
}

impl<'a> FeatureSampler<'a> {
    /// Uses the features stream `(seed, shard)`; shard 0 is the default
    /// single-threaded stream.
    pub fn new(weights: &'a WeightMatrix, seed: u64) -> Self {
        Self::for_shard(weights, seed, 0)
    }

    pub fn for_shard(weights: &'a WeightMatrix, seed: u64, shard: u64) -> Self {
        FeatureSampler {
            weights,
            stream: GaussianStream::new(derive_seed(seed, SeedDomain::Features, shard)),
            seed,
            input_buf: DVector::zeros(weights.d()),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn p(&self) -> usize {
        self.weights.p()
    }

    /// Writes the next feature vector into `out` (length p).
    pub fn next_feature_into(&mut self, out: &mut DVector<f64>) {
        self.stream.fill_gaussian(self.input_buf.as_mut_slice());
        out.gemv_tr(1.0, self.weights.entries(), &self.input_buf, 0.0);
        for v in out.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    pub fn next_feature(&mut self) -> DVector<f64> {
        let mut out = DVector::zeros(self.weights.p());
        self.next_feature_into(&mut out);
        out
    }
}

/// Emits `count` feature vectors from the sampler.
pub fn sample_features<'a, 'b>(
    sampler: &'a mut FeatureSampler<'b>,
    count: usize,
) -> impl Iterator<Item = DVector<f64>> + use<'a, 'b> {
    (0..count).map(move |_| sampler.next_feature())
}

/// Running sum of `XᵀX` over accumulated feature vectors.
#[derive(Debug, Clone)]
pub struct EmpiricalAccumulator {
    p: usize,
    seed: u64,
    d: usize,
    sum: DMatrix<f64>,
    /// Kahan compensation for `sum`, when enabled.
    comp: Option<DMatrix<f64>>,
    /// Per-entry sum of `(X_i X_j)²`, when enabled (for standard errors).
    sq_sum: Option<DMatrix<f64>>,
    count: usize,
}

impl EmpiricalAccumulator {
    pub fn new(p: usize, d: usize, seed: u64) -> Self {
        EmpiricalAccumulator {
            p,
            seed,
            d,
            sum: DMatrix::zeros(p, p),
            comp: None,
            sq_sum: None,
            count: 0,
        }
    }

    /// Enables compensated summation. Naive f64 accumulation loses about
    /// three digits at n = 10⁵; the toggle exists for oracle-grade checks.
    pub fn with_kahan(mut self, on: bool) -> Self {
        self.comp = if on { Some(DMatrix::zeros(self.p, self.p)) } else { None };
        self
    }

    /// Tracks per-entry second moments so standard errors can be reported.
    pub fn with_second_moments(mut self, on: bool) -> Self {
        self.sq_sum = if on { Some(DMatrix::zeros(self.p, self.p)) } else { None };
        self
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Rank-one update of the upper triangle with `XᵀX`.
    pub fn accumulate(&mut self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature vector has non-finite entries"));
        }
        let xs = x.as_slice();
        for j in 0..self.p {
            let xj = xs[j];
            if xj == 0.0 {
                continue; // ReLU zeros contribute nothing to column j
            }
            match &mut self.comp {
                None => {
                    let col = &mut self.sum.column_mut(j);
                    for i in 0..=j {
                        col[i] += xs[i] * xj;
                    }
                }
                Some(comp) => {
                    for i in 0..=j {
                        let term = xs[i] * xj;
                        let y = term - comp[(i, j)];
                        let t = self.sum[(i, j)] + y;
                        comp[(i, j)] = (t - self.sum[(i, j)]) - y;
                        self.sum[(i, j)] = t;
                    }
                }
            }
            if let Some(sq) = &mut self.sq_sum {
                let col = &mut sq.column_mut(j);
                for i in 0..=j {
                    let term = xs[i] * xj;
                    col[i] += term * term;
                }
            }
        }
        self.count += 1;
        Ok(())
    }

    /// Feeds `count` fresh samples from the sampler.
    pub fn extend_from(&mut self, sampler: &mut FeatureSampler<'_>, count: usize) -> Result<()> {
        let mut x = DVector::zeros(self.p);
        for _ in 0..count {
            sampler.next_feature_into(&mut x);
            self.accumulate(&x)?;
        }
        Ok(())
    }

    /// Adds another accumulator's sums and count.
    pub fn merge(&mut self, other: &EmpiricalAccumulator) -> Result<()> {
        if other.p != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: other.p,
            });
        }
        self.sum += &other.sum;
        self.count += other.count;
        if let (Some(a), Some(b)) = (&mut self.sq_sum, &other.sq_sum) {
            *a += b;
        }
        Ok(())
    }

    /// `J⁽ⁿ⁾ = sum/n`, mirrored to full symmetry, tagged with `(n, σ²)`.
    ///
    /// The Fisher-information matrix is `J⁽ⁿ⁾/σ²` (see
    /// [`KernelMatrix::fim_view`]); eigenvectors coincide, eigenvalues scale.
    pub fn finalize_fim(&self, sigma2: f64) -> Result<KernelMatrix> {
        if self.count == 0 {
            return Err(Error::EmptyAccumulator);
        }
        if !(sigma2 > 0.0) {
            return Err(Error::invalid(format!("sigma2 must be positive, got {sigma2}")));
        }
        let n = self.count as f64;
        let sum = &self.sum;
        KernelMatrix::from_upper(
            self.p,
            Provenance::Empirical {
                samples: self.count,
                sigma2,
            },
            KernelMeta {
                d: self.d,
                seed: self.seed,
                tail_bound: None,
            },
            |i, j| sum[(i, j)] / n,
        )
    }

    /// Per-entry standard error of the mean, when second moments are tracked.
    pub fn standard_errors(&self) -> Option<DMatrix<f64>> {
        let sq = self.sq_sum.as_ref()?;
        if self.count < 2 {
            return None;
        }
        let n = self.count as f64;
        let mut se = DMatrix::zeros(self.p, self.p);
        for j in 0..self.p {
            for i in 0..=j {
                let mean = self.sum[(i, j)] / n;
                let var = ((sq[(i, j)] - n * mean * mean) / (n - 1.0)).max(0.0);
                let s = (var / n).sqrt();
                se[(i, j)] = s;
                se[(j, i)] = s;
            }
        }
        Some(se)
    }
}

/// Accumulates `n` samples single-threaded from the shard-0 stream.
pub fn accumulate_features(
    weights: &WeightMatrix,
    seed: u64,
    n: usize,
    kahan: bool,
) -> Result<EmpiricalAccumulator> {
    let mut acc = EmpiricalAccumulator::new(weights.p(), weights.d(), seed).with_kahan(kahan);
    let mut sampler = FeatureSampler::new(weights, seed);
    acc.extend_from(&mut sampler, n)?;
    Ok(acc)
}

/// Sharded accumulation: worker `w` owns a private accumulator fed from
/// substream `(seed, w)`; partial results merge in ascending worker order,
/// so the result is reproducible for a fixed `(seed, n, workers)`.
pub fn accumulate_sharded(
    weights: &WeightMatrix,
    seed: u64,
    n: usize,
    workers: usize,
    kahan: bool,
) -> Result<EmpiricalAccumulator> {
    let workers = workers.max(1).min(n.max(1));
    let shares: Vec<usize> = (0..workers)
        .map(|w| n / workers + usize::from(w < n % workers))
        .collect();
    let partials: Vec<Result<EmpiricalAccumulator>> = shares
        .par_iter()
        .enumerate()
        .map(|(w, &share)| {
            let mut acc =
                EmpiricalAccumulator::new(weights.p(), weights.d(), seed).with_kahan(kahan);
            let mut sampler = FeatureSampler::for_shard(weights, seed, w as u64);
            acc.extend_from(&mut sampler, share)?;
            Ok(acc)
        })
        .collect();
    let mut merged = EmpiricalAccumulator::new(weights.p(), weights.d(), seed).with_kahan(kahan);
    for part in partials {
        merged.merge(&part?)?;
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::closed_form_kernel;
    use crate::weights::{column_geometry, generate_weights};

    #[test]
    fn scalar_relu_cases() {
        // d = 1, p = 1, W = [1]: x = 2 → X = [2]; x = −2 → X = [0].
        let w = WeightMatrix::from_parts(1, 1, 0, 1.0, DMatrix::from_element(1, 1, 1.0));
        let mut sampler = FeatureSampler::new(&w, 0);
        sampler.input_buf = DVector::from_vec(vec![0.0]);
        // Drive the transform directly.
        let feature = |x: f64| {
            let mut out = DVector::zeros(1);
            out.gemv_tr(1.0, w.entries(), &DVector::from_vec(vec![x]), 0.0);
            out.iter_mut().for_each(|v| *v = v.max(0.0));
            out
        };
        assert_eq!(feature(2.0)[0], 2.0);
        assert_eq!(feature(-2.0)[0], 0.0);
    }

    #[test]
    fn all_negative_projections_give_zero_vector() {
        // W = identity columns in d = 2; x = (−1, −1) kills both features.
        let w = WeightMatrix::from_parts(2, 2, 0, 1.0, DMatrix::identity(2, 2));
        let mut out = DVector::zeros(2);
        out.gemv_tr(1.0, w.entries(), &DVector::from_vec(vec![-1.0, -1.0]), 0.0);
        out.iter_mut().for_each(|v| *v = v.max(0.0));
        assert_eq!(out, DVector::zeros(2));
    }

    #[test]
    fn about_half_the_entries_are_zero() {
        let w = generate_weights(10, 100, 21, 0.01).unwrap();
        let mut sampler = FeatureSampler::new(&w, 3);
        let n = 2_000;
        let mut zeros = 0usize;
        let mut x = DVector::zeros(100);
        for _ in 0..n {
            sampler.next_feature_into(&mut x);
            zeros += x.iter().filter(|&&v| v == 0.0).count();
        }
        let frac = zeros as f64 / (n * 100) as f64;
        assert!((frac - 0.5).abs() < 0.01, "zero fraction {frac}");
    }

    #[test]
    fn single_outer_product() {
        let mut acc = EmpiricalAccumulator::new(2, 2, 0);
        acc.accumulate(&DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let j = acc.finalize_fim(1.0).unwrap();
        assert_eq!(j.values()[(0, 0)], 1.0);
        assert_eq!(j.values()[(0, 1)], 2.0);
        assert_eq!(j.values()[(1, 0)], 2.0);
        assert_eq!(j.values()[(1, 1)], 4.0);
    }

    #[test]
    fn zero_vector_only_bumps_count() {
        let mut acc = EmpiricalAccumulator::new(3, 3, 0);
        acc.accumulate(&DVector::from_vec(vec![1.0, 0.0, 1.0])).unwrap();
        let before = acc.sum.clone();
        acc.accumulate(&DVector::zeros(3)).unwrap();
        assert_eq!(acc.sum, before);
        assert_eq!(acc.count(), 2);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut acc = EmpiricalAccumulator::new(3, 3, 0);
        assert!(acc.accumulate(&DVector::zeros(4)).is_err());
    }

    #[test]
    fn finalize_requires_samples_and_positive_noise() {
        let acc = EmpiricalAccumulator::new(2, 2, 0);
        assert!(matches!(acc.finalize_fim(1.0), Err(Error::EmptyAccumulator)));
        let mut acc = EmpiricalAccumulator::new(2, 2, 0);
        acc.accumulate(&DVector::zeros(2)).unwrap();
        assert!(acc.finalize_fim(0.0).is_err());
        assert!(acc.finalize_fim(-2.0).is_err());
    }

    #[test]
    fn fim_view_is_pure_scaling() {
        let w = generate_weights(3, 5, 7, 0.2).unwrap();
        let acc = accumulate_features(&w, 8, 500, false).unwrap();
        let j = acc.finalize_fim(4.0).unwrap();
        let i_n = j.fim_view().unwrap();
        for (a, b) in j.values().iter().zip(i_n.values().iter()) {
            assert!((a / 4.0 - b).abs() < 1e-15);
        }
        // σ² = 1 is the identity view.
        let j1 = acc.finalize_fim(1.0).unwrap();
        assert_eq!(j1.values(), j1.fim_view().unwrap().values());
    }

    #[test]
    fn matches_closed_form_within_five_standard_errors() {
        let (d, p, n) = (10, 20, 40_000);
        let w = generate_weights(d, p, 30, 1.0 / p as f64).unwrap();
        let reference = closed_form_kernel(&column_geometry(&w).unwrap()).unwrap();
        let mut acc = EmpiricalAccumulator::new(p, d, 31).with_second_moments(true);
        let mut sampler = FeatureSampler::new(&w, 31);
        acc.extend_from(&mut sampler, n).unwrap();
        let j_n = acc.finalize_fim(1.0).unwrap();
        let se = acc.standard_errors().unwrap();
        for j in 0..p {
            for i in 0..=j {
                let err = (j_n.values()[(i, j)] - reference.values()[(i, j)]).abs();
                assert!(
                    err <= 5.0 * se[(i, j)].max(1e-12),
                    "({i},{j}): err {err:e}, se {:e}",
                    se[(i, j)]
                );
            }
        }
    }

    #[test]
    fn trace_approaches_half_sum_of_row_norms() {
        let (d, p, n) = (10, 50, 100_000);
        let w = generate_weights(d, p, 40, 1.0 / p as f64).unwrap();
        let target: f64 = (0..d).map(|l| w.row_vector(l).norm_squared()).sum::<f64>() / 2.0;
        // Track per-sample ‖X‖² for a standard error on the trace.
        let mut sampler = FeatureSampler::new(&w, 41);
        let mut acc = EmpiricalAccumulator::new(p, d, 41);
        let mut x = DVector::zeros(p);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            sampler.next_feature_into(&mut x);
            let t = x.norm_squared();
            s += t;
            s2 += t * t;
            acc.accumulate(&x).unwrap();
        }
        let j_n = acc.finalize_fim(1.0).unwrap();
        let mean = s / n as f64;
        let se = (((s2 - (n as f64) * mean * mean) / (n as f64 - 1.0)).max(0.0) / n as f64).sqrt();
        assert!((j_n.trace() - mean).abs() < 1e-10 * mean.abs().max(1.0));
        assert!((j_n.trace() - target).abs() <= 5.0 * se, "trace off by more than 5 SE");
    }

    #[test]
    fn batch_splits_agree_up_to_reassociation() {
        let (d, p) = (4, 12);
        let w = generate_weights(d, p, 50, 1.0 / p as f64).unwrap();
        let mut sampler = FeatureSampler::new(&w, 51);
        let xs: Vec<DVector<f64>> = sample_features(&mut sampler, 300).collect();
        let mut one = EmpiricalAccumulator::new(p, d, 51);
        for x in &xs {
            one.accumulate(x).unwrap();
        }
        let mut a = EmpiricalAccumulator::new(p, d, 51);
        let mut b = EmpiricalAccumulator::new(p, d, 51);
        for x in &xs[..137] {
            a.accumulate(x).unwrap();
        }
        for x in &xs[137..] {
            b.accumulate(x).unwrap();
        }
        a.merge(&b).unwrap();
        assert_eq!(a.count(), one.count());
        let ja = a.finalize_fim(1.0).unwrap();
        let jb = one.finalize_fim(1.0).unwrap();
        let scale = jb.max_abs();
        assert!(ja.max_entry_diff(&jb).unwrap() <= 1e-10 * scale);
    }

    #[test]
    fn sharded_accumulation_is_reproducible() {
        let w = generate_weights(5, 16, 60, 0.0625).unwrap();
        let a = accumulate_sharded(&w, 61, 1000, 4, false).unwrap();
        let b = accumulate_sharded(&w, 61, 1000, 4, false).unwrap();
        assert_eq!(a.count(), 1000);
        let ja = a.finalize_fim(1.0).unwrap();
        let jb = b.finalize_fim(1.0).unwrap();
        assert_eq!(ja.values(), jb.values());
    }

    #[test]
    fn kahan_tracks_naive_at_small_n() {
        let w = generate_weights(4, 10, 70, 0.1).unwrap();
        let a = accumulate_features(&w, 71, 2000, false).unwrap();
        let b = accumulate_features(&w, 71, 2000, true).unwrap();
        let ja = a.finalize_fim(1.0).unwrap();
        let jb = b.finalize_fim(1.0).unwrap();
        assert!(ja.max_entry_diff(&jb).unwrap() <= 1e-12 * ja.max_abs());
    }

    #[test]
    fn empirical_matrix_is_psd() {
        let w = generate_weights(6, 30, 80, 1.0 / 30.0).unwrap();
        let acc = accumulate_features(&w, 81, 500, false).unwrap();
        let j = acc.finalize_fim(1.0).unwrap();
        let eig = j.values().clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() >= -1e-10 * j.trace());
    }
}
