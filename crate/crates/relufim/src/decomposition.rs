//! The candidate eigenvector family and the structured low-rank
//! approximation it generates.
//!
//! From the weight matrix the builder derives, per column `i` with norm
//! `n_i = ‖W^(i)‖`:
//!
//! * the norm profile `v⁰_i = n_i/√d`,
//! * the rows `W_l` themselves,
//! * pair products `v^(α,β)_i = √d W_αi W_βi / n_i` for `α < β`,
//! * centered squares `v^(γ) = (v^(γ,γ) − v⁰)/√2`, which sum to zero
//!   exactly, so they span at most `d − 1` dimensions.
//!
//! Weighting the outer products with `(2d+1)/4π`, `1/4`, `1/(2πd)` gives a
//! matrix that differs from the closed-form kernel exactly by the
//! positive-semidefinite remainder of [`crate::kernel::residual_kernel`]
//! plus its truncation tail.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelMatrix, KernelMeta, Provenance};
use crate::operator::SymmetricOperator;
use crate::weights::WeightMatrix;

/// Identifies a run so that reports from different runs cannot be mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStamp {
    pub d: usize,
    pub p: usize,
    pub seed: u64,
}

impl RunStamp {
    pub fn of_weights(w: &WeightMatrix) -> Self {
        RunStamp {
            d: w.d(),
            p: w.p(),
            seed: w.seed(),
        }
    }

    pub fn ensure_matches(&self, other: &RunStamp) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::RunMismatch(format!("{self} vs {other}")))
        }
    }
}

impl fmt::Display for RunStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(d={}, p={}, seed={})", self.d, self.p, self.seed)
    }
}

/// Which basis vector a value refers to. Indices are 1-based, matching the
/// usual mathematical labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BasisVectorId {
    /// The column-norm profile.
    NormProfile,
    /// Weight row `l`.
    Row(usize),
    /// Pair product for coordinates `(α, β)`, `α < β`.
    PairProduct(usize, usize),
    /// Centered square for coordinate `γ`.
    CenteredSquare(usize),
}

impl fmt::Display for BasisVectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisVectorId::NormProfile => write!(f, "norms"),
            BasisVectorId::Row(l) => write!(f, "row{l}"),
            BasisVectorId::PairProduct(a, b) => write!(f, "pair{a}_{b}"),
            BasisVectorId::CenteredSquare(g) => write!(f, "center{g}"),
        }
    }
}

/// Families of basis vectors, used to pick the right deviation allowances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisFamily {
    NormProfile,
    Row,
    PairProduct,
    CenteredSquare,
}

impl BasisVectorId {
    pub fn family(&self) -> BasisFamily {
        match self {
            BasisVectorId::NormProfile => BasisFamily::NormProfile,
            BasisVectorId::Row(_) => BasisFamily::Row,
            BasisVectorId::PairProduct(..) => BasisFamily::PairProduct,
            BasisVectorId::CenteredSquare(_) => BasisFamily::CenteredSquare,
        }
    }
}

/// The full candidate family in canonical order:
/// `[norm profile; rows 1..d; pair products lexicographic; centered 1..d]`.
#[derive(Debug, Clone)]
pub struct FeatureBasis {
    stamp: RunStamp,
    norm_profile: DVector<f64>,
    rows: Vec<DVector<f64>>,
    pair_products: Vec<DVector<f64>>,
    centered_squares: Vec<DVector<f64>>,
}

impl FeatureBasis {
    pub fn stamp(&self) -> RunStamp {
        self.stamp
    }

    pub fn d(&self) -> usize {
        self.stamp.d
    }

    pub fn p(&self) -> usize {
        self.stamp.p
    }

    /// Number of vectors: `d(d+3)/2 + 1`.
    pub fn len(&self) -> usize {
        1 + self.rows.len() + self.pair_products.len() + self.centered_squares.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn norm_profile(&self) -> &DVector<f64> {
        &self.norm_profile
    }

    pub fn row(&self, l: usize) -> &DVector<f64> {
        &self.rows[l]
    }

    pub fn pair_products(&self) -> &[DVector<f64>] {
        &self.pair_products
    }

    pub fn centered_squares(&self) -> &[DVector<f64>] {
        &self.centered_squares
    }

    /// Canonical identifiers, in iteration order.
    pub fn ids(&self) -> Vec<BasisVectorId> {
        let d = self.d();
        let mut ids = Vec::with_capacity(self.len());
        ids.push(BasisVectorId::NormProfile);
        ids.extend((1..=d).map(BasisVectorId::Row));
        for a in 1..=d {
            for b in (a + 1)..=d {
                ids.push(BasisVectorId::PairProduct(a, b));
            }
        }
        ids.extend((1..=d).map(BasisVectorId::CenteredSquare));
        ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (BasisVectorId, &DVector<f64>)> {
        self.ids().into_iter().zip(self.vectors())
    }

    /// All vectors in canonical order.
    pub fn vectors(&self) -> Vec<&DVector<f64>> {
        let mut out = Vec::with_capacity(self.len());
        out.push(&self.norm_profile);
        out.extend(self.rows.iter());
        out.extend(self.pair_products.iter());
        out.extend(self.centered_squares.iter());
        out
    }

    /// `‖Σ_γ v^(γ)‖`; zero in exact arithmetic.
    pub fn centered_sum_norm(&self) -> f64 {
        let mut sum = DVector::<f64>::zeros(self.p());
        for v in &self.centered_squares {
            sum += v;
        }
        sum.norm()
    }
}

/// Builds the basis; fails on zero columns.
pub fn build_basis(w: &WeightMatrix) -> Result<FeatureBasis> {
    let (d, p) = (w.d(), w.p());
    let norms = w.column_norms();
    for (i, &n) in norms.iter().enumerate() {
        if n == 0.0 {
            return Err(Error::ZeroColumn(i));
        }
    }
    let sqrt_d = (d as f64).sqrt();
    let norm_profile = DVector::from_fn(p, |i, _| norms[i] / sqrt_d);
    let rows: Vec<DVector<f64>> = (0..d).map(|l| w.row_vector(l)).collect();
    let entries = w.entries();
    let mut pair_products = Vec::with_capacity(d * (d - 1) / 2);
    for a in 0..d {
        for b in (a + 1)..d {
            pair_products.push(DVector::from_fn(p, |i, _| {
                sqrt_d * entries[(a, i)] * entries[(b, i)] / norms[i]
            }));
        }
    }
    let centered_squares: Vec<DVector<f64>> = (0..d)
        .map(|g| {
            DVector::from_fn(p, |i, _| {
                let square_profile = sqrt_d * entries[(g, i)] * entries[(g, i)] / norms[i];
                (square_profile - norm_profile[i]) / std::f64::consts::SQRT_2
            })
        })
        .collect();
    Ok(FeatureBasis {
        stamp: RunStamp::of_weights(w),
        norm_profile,
        rows,
        pair_products,
        centered_squares,
    })
}

/// Outer-product weights of the structured approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxCoefficients {
    /// Weight of the norm-profile outer product: `(2d+1)/4π`.
    pub top: f64,
    /// Weight of each row outer product: `1/4`.
    pub row: f64,
    /// Weight of each pair-product / centered-square outer product: `1/(2πd)`.
    pub cluster: f64,
}

impl ApproxCoefficients {
    pub fn for_dimension(d: usize) -> Self {
        ApproxCoefficients {
            top: (2.0 * d as f64 + 1.0) / (4.0 * std::f64::consts::PI),
            row: 0.25,
            cluster: 1.0 / (2.0 * std::f64::consts::PI * d as f64),
        }
    }

    fn weight_for(&self, family: BasisFamily) -> f64 {
        match family {
            BasisFamily::NormProfile => self.top,
            BasisFamily::Row => self.row,
            BasisFamily::PairProduct | BasisFamily::CenteredSquare => self.cluster,
        }
    }
}

/// The weighted-outer-product approximation of the kernel.
#[derive(Debug, Clone)]
pub struct ApproxDecomposition {
    pub coefficients: ApproxCoefficients,
    pub basis: FeatureBasis,
    /// Entrywise bound on the remainder tail this approximation ignores,
    /// when carried over from a series construction.
    pub residual_bound: Option<f64>,
}

impl ApproxDecomposition {
    pub fn new(basis: FeatureBasis) -> Self {
        let coefficients = ApproxCoefficients::for_dimension(basis.d());
        ApproxDecomposition {
            coefficients,
            basis,
            residual_bound: None,
        }
    }

    pub fn with_residual_bound(mut self, bound: f64) -> Self {
        self.residual_bound = Some(bound);
        self
    }

    /// Dense assembly. Rank is at most `d(d+3)/2` since the centered
    /// squares lose one dimension to their zero sum.
    pub fn assemble(&self) -> Result<KernelMatrix> {
        let p = self.basis.p();
        let ids = self.basis.ids();
        let vectors = self.basis.vectors();
        let weights: Vec<f64> = ids
            .iter()
            .map(|id| self.coefficients.weight_for(id.family()))
            .collect();
        KernelMatrix::from_upper(
            p,
            Provenance::Approx,
            KernelMeta {
                d: self.basis.d(),
                seed: self.basis.stamp().seed,
                tail_bound: self.residual_bound,
            },
            |i, j| {
                weights
                    .iter()
                    .zip(&vectors)
                    .map(|(w, v)| w * v[i] * v[j])
                    .sum()
            },
        )
    }

    /// Matrix-free operator; applying costs `O(p·d²)`.
    pub fn operator(&self) -> ApproxOperator<'_> {
        ApproxOperator { decomp: self }
    }
}

/// Convenience wrapper assembling the approximation for a basis.
pub fn assemble_approx(basis: &FeatureBasis) -> Result<KernelMatrix> {
    ApproxDecomposition::new(basis.clone()).assemble()
}

/// Applies the approximation without materializing the p×p matrix.
pub struct ApproxOperator<'a> {
    decomp: &'a ApproxDecomposition,
}

impl SymmetricOperator for ApproxOperator<'_> {
    fn dim(&self) -> usize {
        self.decomp.basis.p()
    }

    fn apply_to(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        y.fill(0.0);
        let c = &self.decomp.coefficients;
        for (id, v) in self.decomp.basis.iter() {
            let w = c.weight_for(id.family()) * v.dot(x);
            y.axpy(w, v, 1.0);
        }
    }

    fn trace_hint(&self) -> Option<f64> {
        let c = &self.decomp.coefficients;
        Some(
            self.decomp
                .basis
                .iter()
                .map(|(id, v)| c.weight_for(id.family()) * v.norm_squared())
                .sum(),
        )
    }
}

/// Rayleigh quotients `vJvᵀ/‖v‖²` of every basis vector against an operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuotientReport {
    pub stamp: RunStamp,
    /// `(vector id, quotient)` in canonical order; zero vectors (possible
    /// only in the degenerate d = 1 case) are skipped.
    pub entries: Vec<(BasisVectorId, f64)>,
}

impl QuotientReport {
    pub fn min_for(&self, family: BasisFamily) -> Option<f64> {
        self.entries
            .iter()
            .filter(|(id, _)| id.family() == family)
            .map(|&(_, q)| q)
            .min_by(f64::total_cmp)
    }

    pub fn get(&self, id: BasisVectorId) -> Option<f64> {
        self.entries.iter().find(|(i, _)| *i == id).map(|&(_, q)| q)
    }
}

/// Computes all Rayleigh quotients with one batched operator pass.
pub fn rayleigh_quotients(
    op: &dyn SymmetricOperator,
    basis: &FeatureBasis,
) -> Result<QuotientReport> {
    if op.dim() != basis.p() {
        return Err(Error::DimensionMismatch {
            expected: basis.p(),
            got: op.dim(),
        });
    }
    let vectors = basis.vectors();
    let forms = op.quadratic_forms(&vectors);
    let entries = basis
        .ids()
        .into_iter()
        .zip(vectors.iter().zip(forms))
        .filter_map(|(id, (v, form))| {
            let n2 = v.norm_squared();
            (n2 > 0.0).then_some((id, form / n2))
        })
        .collect();
    Ok(QuotientReport {
        stamp: basis.stamp(),
        entries,
    })
}

/// Pairwise geometry of the basis: squared norms and inner products, with
/// the deviations the concentration statements are about.
#[derive(Debug, Clone)]
pub struct GramReport {
    stamp: RunStamp,
    ids: Vec<BasisVectorId>,
    gram: DMatrix<f64>,
}

impl GramReport {
    pub fn stamp(&self) -> RunStamp {
        self.stamp
    }

    pub fn ids(&self) -> &[BasisVectorId] {
        &self.ids
    }

    /// Inner products `v_k · v_k'` in canonical order.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn norm_squared(&self, k: usize) -> f64 {
        self.gram[(k, k)]
    }

    /// Largest `|‖v‖² − 1|` over the given family.
    pub fn max_norm_dev(&self, family: BasisFamily) -> f64 {
        self.ids
            .iter()
            .enumerate()
            .filter(|(_, id)| id.family() == family)
            .map(|(k, _)| (self.gram[(k, k)] - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|v·v′|` over distinct pairs not both centered squares.
    pub fn max_mixed_inner(&self) -> f64 {
        let mut max = 0.0f64;
        for k in 0..self.ids.len() {
            for k2 in (k + 1)..self.ids.len() {
                let both_centered = self.ids[k].family() == BasisFamily::CenteredSquare
                    && self.ids[k2].family() == BasisFamily::CenteredSquare;
                if !both_centered {
                    max = max.max(self.gram[(k, k2)].abs());
                }
            }
        }
        max
    }

    /// Largest `|v·v′ + 1/(d−1)|` over distinct centered-square pairs.
    pub fn max_centered_offset(&self) -> f64 {
        let d = self.stamp.d;
        if d < 2 {
            return 0.0;
        }
        let target = -1.0 / (d as f64 - 1.0);
        let centered: Vec<usize> = self
            .ids
            .iter()
            .enumerate()
            .filter(|(_, id)| id.family() == BasisFamily::CenteredSquare)
            .map(|(k, _)| k)
            .collect();
        let mut max = 0.0f64;
        for (a, &k) in centered.iter().enumerate() {
            for &k2 in &centered[a + 1..] {
                max = max.max((self.gram[(k, k2)] - target).abs());
            }
        }
        max
    }

    /// Largest absolute row sum of the centered-square Gram block; zero in
    /// exact arithmetic because the centered squares sum to zero.
    pub fn centered_row_sum_max(&self) -> f64 {
        let centered: Vec<usize> = self
            .ids
            .iter()
            .enumerate()
            .filter(|(_, id)| id.family() == BasisFamily::CenteredSquare)
            .map(|(k, _)| k)
            .collect();
        centered
            .iter()
            .map(|&k| centered.iter().map(|&k2| self.gram[(k, k2)]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// The smallest tolerance δ at which every deviation statement holds,
    /// given the norm-ratio allowance `xi`:
    /// plain norms need δ ≥ |‖v‖²−1|, adjusted families get a `xi` (or
    /// `xi/(d−1)`) allowance first, mixed inner products need δ ≥ |v·v′|.
    pub fn required_delta(&self, xi: f64) -> f64 {
        let d = self.stamp.d as f64;
        let mut req = self
            .max_norm_dev(BasisFamily::NormProfile)
            .max(self.max_norm_dev(BasisFamily::Row));
        req = req.max((self.max_norm_dev(BasisFamily::PairProduct) - xi).max(0.0));
        req = req.max((self.max_norm_dev(BasisFamily::CenteredSquare) - xi).max(0.0));
        req = req.max(self.max_mixed_inner());
        if self.stamp.d > 1 {
            req = req.max((self.max_centered_offset() - xi / (d - 1.0)).max(0.0));
        }
        req
    }
}

/// Computes the full Gram matrix of the basis (`O(p·m²)` dot products).
pub fn basis_geometry(basis: &FeatureBasis) -> GramReport {
    let ids = basis.ids();
    let vectors = basis.vectors();
    let m = vectors.len();
    let mut gram = DMatrix::zeros(m, m);
    for k in 0..m {
        for k2 in k..m {
            let v = vectors[k].dot(vectors[k2]);
            gram[(k, k2)] = v;
            gram[(k2, k)] = v;
        }
    }
    GramReport {
        stamp: basis.stamp(),
        ids,
        gram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{closed_form_kernel, residual_kernel, SeriesSpec};
    use crate::weights::{column_geometry, generate_weights};

    fn weights(d: usize, p: usize, seed: u64) -> WeightMatrix {
        generate_weights(d, p, seed, 1.0 / p as f64).unwrap()
    }

    #[test]
    fn counts_and_order() {
        let w = weights(5, 40, 1);
        let b = build_basis(&w).unwrap();
        assert_eq!(b.len(), 5 * 8 / 2 + 1); // d(d+3)/2 + 1 = 21
        let ids = b.ids();
        assert_eq!(ids.len(), 21);
        assert_eq!(ids[0], BasisVectorId::NormProfile);
        assert_eq!(ids[1], BasisVectorId::Row(1));
        assert_eq!(ids[6], BasisVectorId::PairProduct(1, 2));
        assert_eq!(ids[7], BasisVectorId::PairProduct(1, 3));
        assert_eq!(ids[20], BasisVectorId::CenteredSquare(5));
    }

    #[test]
    fn defining_formulas_on_identity_columns() {
        // d = 2, p = 2, columns e1 and e2.
        let w = WeightMatrix::from_parts(2, 2, 0, 1.0, DMatrix::identity(2, 2));
        let b = build_basis(&w).unwrap();
        let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
        assert!((b.norm_profile()[0] - inv_sqrt2).abs() < 1e-15);
        assert!((b.norm_profile()[1] - inv_sqrt2).abs() < 1e-15);
        // Each column has one zero coordinate, so the pair product vanishes.
        assert_eq!(b.pair_products()[0], DVector::zeros(2));
    }

    #[test]
    fn degenerate_single_input_dimension() {
        // d = 1 forces the centered square to vanish identically.
        let w = weights(1, 6, 2);
        let b = build_basis(&w).unwrap();
        assert!(b.pair_products().is_empty());
        assert!(b.centered_squares()[0].norm() < 1e-15);
    }

    #[test]
    fn centered_squares_sum_to_zero() {
        for (d, p, seed) in [(5, 50, 3), (10, 500, 4), (10, 10_000, 5)] {
            let b = build_basis(&weights(d, p, seed)).unwrap();
            let bound = 1e-12 * (d as f64).sqrt();
            assert!(b.centered_sum_norm() <= bound, "d={d} p={p}");
        }
    }

    #[test]
    fn zero_column_rejected() {
        let w = WeightMatrix::from_parts(
            2,
            2,
            0,
            1.0,
            DMatrix::from_columns(&[
                DVector::from_vec(vec![1.0, 0.0]),
                DVector::from_vec(vec![0.0, 0.0]),
            ]),
        );
        assert!(matches!(build_basis(&w), Err(Error::ZeroColumn(1))));
    }

    #[test]
    fn norm_profile_concentrates() {
        let b = build_basis(&weights(10, 10_000, 6)).unwrap();
        // ‖v⁰‖² = (1/d)Σ n_i² has mean 1, SD sqrt(2/(d p)).
        let dev = (b.norm_profile().norm_squared() - 1.0).abs();
        assert!(dev < 5.0 * (2.0 / 1e5f64).sqrt(), "dev {dev}");
    }

    #[test]
    fn assembly_matches_closed_form_minus_residual() {
        for (d, p) in [(5usize, 50usize), (10, 50), (5, 500), (10, 500)] {
            let w = weights(d, p, 7);
            let geom = column_geometry(&w).unwrap();
            let j = closed_form_kernel(&geom).unwrap();
            let spec = SeriesSpec::default();
            let r = residual_kernel(&geom, &spec).unwrap();
            let approx = assemble_approx(&build_basis(&w).unwrap()).unwrap();
            let bound = r.meta().tail_bound.unwrap();
            let mut max_dev = 0.0f64;
            for jx in 0..p {
                for ix in 0..=jx {
                    let dev = (j.values()[(ix, jx)]
                        - approx.values()[(ix, jx)]
                        - r.values()[(ix, jx)])
                        .abs();
                    max_dev = max_dev.max(dev);
                }
            }
            assert!(max_dev <= bound, "d={d} p={p}: {max_dev:e} > {bound:e}");
        }
    }

    #[test]
    fn approx_trace_below_closed_form_trace() {
        // The remainder is PSD with nonnegative diagonal.
        let w = weights(10, 200, 8);
        let geom = column_geometry(&w).unwrap();
        let j = closed_form_kernel(&geom).unwrap();
        let approx = assemble_approx(&build_basis(&w).unwrap()).unwrap();
        assert!(approx.trace() <= j.trace());
    }

    #[test]
    fn approx_rank_bounded_by_vector_count_minus_one() {
        let d = 10;
        let w = weights(d, 100, 9);
        let approx = assemble_approx(&build_basis(&w).unwrap()).unwrap();
        let eig = approx.values().clone().symmetric_eigen();
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let rank_limit = d * (d + 3) / 2; // 65
        let top = ApproxCoefficients::for_dimension(d).top;
        for (k, &lambda) in ev.iter().enumerate().skip(rank_limit) {
            assert!(lambda.abs() <= 1e-10 * top, "index {k}: {lambda:e}");
        }
    }

    #[test]
    fn operator_agrees_with_dense_assembly() {
        let w = weights(6, 80, 10);
        let decomp = ApproxDecomposition::new(build_basis(&w).unwrap());
        let dense = decomp.assemble().unwrap();
        let op = decomp.operator();
        let mut probe = DVector::zeros(80);
        probe[3] = 1.0;
        probe[40] = -0.5;
        let via_op = op.apply(&probe);
        let via_dense = dense.values() * &probe;
        assert!((via_op - via_dense).norm() < 1e-12);
        let tr = op.trace_hint().unwrap();
        assert!((tr - dense.trace()).abs() < 1e-10 * tr.abs());
    }

    #[test]
    fn quotients_of_identity_are_one() {
        let w = weights(5, 30, 11);
        let b = build_basis(&w).unwrap();
        let identity = KernelMatrix::from_upper(
            30,
            Provenance::Approx,
            KernelMeta {
                d: 5,
                seed: 11,
                tail_bound: None,
            },
            |i, j| if i == j { 1.0 } else { 0.0 },
        )
        .unwrap();
        let q = rayleigh_quotients(&identity, &b).unwrap();
        assert_eq!(q.entries.len(), b.len());
        for (_, quotient) in q.entries {
            assert!((quotient - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quotients_dominate_weighted_norms() {
        // vJvᵀ ≥ coefficient·‖v‖⁴ term by term, so the quotient of each basis
        // vector against the closed form is at least its own weight times
        // ‖v‖² (the remainder and all other outer products are PSD).
        let d = 10;
        let w = weights(d, 500, 12);
        let b = build_basis(&w).unwrap();
        let geom = column_geometry(&w).unwrap();
        let j = closed_form_kernel(&geom).unwrap();
        let q = rayleigh_quotients(&j, &b).unwrap();
        let c = ApproxCoefficients::for_dimension(d);
        let g = basis_geometry(&b);
        for (k, (id, quotient)) in q.entries.iter().enumerate() {
            let floor = c.weight_for(id.family()) * g.norm_squared(k);
            assert!(
                *quotient >= floor - 1e-12,
                "{id}: {quotient} < {floor}"
            );
        }
    }

    #[test]
    fn geometry_matches_brute_force_on_toy_matrix() {
        // d = 2, p = 4, hand-chosen entries.
        let entries = DMatrix::from_row_slice(
            2,
            4,
            &[0.6, -0.3, 1.2, 0.4, 0.8, 0.5, -0.1, -0.9],
        );
        let w = WeightMatrix::from_parts(2, 4, 0, 1.0, entries);
        let b = build_basis(&w).unwrap();
        let report = basis_geometry(&b);
        let vectors = b.vectors();
        for (k, vk) in vectors.iter().enumerate() {
            for (k2, vk2) in vectors.iter().enumerate() {
                assert_eq!(report.gram()[(k, k2)], vk.dot(vk2));
            }
        }
    }

    #[test]
    fn centered_gram_row_sums_vanish() {
        let b = build_basis(&weights(10, 2000, 13)).unwrap();
        let report = basis_geometry(&b);
        assert!(report.centered_row_sum_max() <= 1e-10);
    }

    #[test]
    fn required_delta_makes_all_statements_hold() {
        let b = build_basis(&weights(10, 2000, 14)).unwrap();
        let report = basis_geometry(&b);
        let xi = 0.5;
        let delta = report.required_delta(xi);
        assert!(report.max_norm_dev(BasisFamily::NormProfile) <= delta);
        assert!(report.max_norm_dev(BasisFamily::Row) <= delta);
        assert!(report.max_norm_dev(BasisFamily::PairProduct) <= delta + xi);
        assert!(report.max_norm_dev(BasisFamily::CenteredSquare) <= delta + xi);
        assert!(report.max_mixed_inner() <= delta);
        assert!(report.max_centered_offset() <= delta + xi / 9.0);
    }

    #[test]
    fn run_stamps_guard_mixing() {
        let b1 = build_basis(&weights(5, 20, 1)).unwrap();
        let b2 = build_basis(&weights(5, 20, 2)).unwrap();
        assert!(b1.stamp().ensure_matches(&b2.stamp()).is_err());
        assert!(b1.stamp().ensure_matches(&b1.stamp()).is_ok());
    }
}
