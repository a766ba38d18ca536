//! Eigenvalue extraction, the grouped structure of the spectrum, and
//! subspace alignment diagnostics.
//!
//! The kernel's spectrum splits into one eigenvalue near `(2d+1)/4π`, a band
//! of `d` near `1/4`, and a band of `d(d+1)/2 − 1` near `1/(2πd)`; grouping
//! here is by those fixed counts (the cluster boundaries are diagnostics,
//! not detection criteria). Dense decomposition delegates to a
//! tridiagonalization-based solver; the iterative path is a Lanczos
//! iteration with full reorthogonalization, which restarts on breakdown so
//! degenerate operators (e.g. the identity) still yield `k` pairs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decomposition::{FeatureBasis, RunStamp};
use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::operator::SymmetricOperator;
use crate::rng::{derive_seed, GaussianStream, SeedDomain};

/// Full symmetric eigendecomposition, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    pub eigenvalues: DVector<f64>,
    /// Column `k` pairs with `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
}

impl DenseSpectrum {
    /// The eigenvector block for eigenvalue indices `[lo, hi)`.
    pub fn block(&self, lo: usize, hi: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(lo, hi - lo).into_owned()
    }
}

/// Dense symmetric eigendecomposition with a residual probe.
///
/// The input is verified to be exactly symmetric (constructors guarantee
/// this; a violation signals corruption). After solving, a seeded random
/// probe checks `‖Jv − QΛQᵀv‖_∞ ≤ 1e-8 · ‖J‖_max · √p`, which is implied by
/// the reconstruction contract `‖J − QΛQᵀ‖_max ≤ 1e-8 · ‖J‖_max`.
pub fn dense_spectrum(j: &KernelMatrix) -> Result<DenseSpectrum> {
    let p = j.p();
    let values = j.values();
    for col in 0..p {
        for row in 0..col {
            if values[(row, col)] != values[(col, row)] {
                return Err(Error::NotSymmetric {
                    max_asym: (values[(row, col)] - values[(col, row)]).abs(),
                });
            }
        }
    }
    let eig = values.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = DVector::from_fn(p, |k, _| eig.eigenvalues[order[k]]);
    let mut eigenvectors = DMatrix::zeros(p, p);
    for (k, &src) in order.iter().enumerate() {
        eigenvectors.column_mut(k).copy_from(&eig.eigenvectors.column(src));
    }
    // Residual probe.
    let mut stream = GaussianStream::new(derive_seed(0xE16E, SeedDomain::Probes, p as u64));
    let mut v = DVector::zeros(p);
    stream.fill_gaussian(v.as_mut_slice());
    v /= v.norm();
    let direct = values * &v;
    let projected = &eigenvectors * eigenvalues.component_mul(&(eigenvectors.transpose() * &v));
    let resid = (direct - projected).amax();
    let tol = 1e-8 * j.max_abs() * (p as f64).sqrt();
    if resid > tol.max(1e-300) {
        return Err(Error::invalid(format!(
            "eigendecomposition residual probe failed: {resid:e} > {tol:e}"
        )));
    }
    Ok(DenseSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Result of the iterative top-k path.
#[derive(Debug, Clone)]
pub struct TopkSpectrum {
    /// Descending; length k.
    pub eigenvalues: Vec<f64>,
    /// Ritz vectors, column `i` pairing with `eigenvalues[i]`.
    pub vectors: DMatrix<f64>,
    /// Verified residual norms `‖Av − λv‖`.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

pub struct LanczosOptions {
    pub tol: f64,
    pub seed: u64,
    /// Basis size budget; defaults to `min(p, max(6k, 200))`.
    pub max_iter: Option<usize>,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: 1e-10,
            seed: 0,
            max_iter: None,
        }
    }
}

/// Top-k eigenvalues of a symmetric operator by Lanczos iteration with full
/// reorthogonalization.
///
/// Symmetry is first checked probabilistically: for seeded random unit
/// `u, v`, `|uᵀ(Av) − vᵀ(Au)|` must not exceed `tol` on the scale of the
/// operator's action. Each returned pair is explicitly verified to satisfy
/// `‖Av − λv‖ ≤ tol·|λ|`; non-convergence returns the best estimates so far
/// inside the error.
pub fn topk_spectrum(
    op: &dyn SymmetricOperator,
    k: usize,
    tol: f64,
    seed: u64,
) -> Result<TopkSpectrum> {
    topk_spectrum_with(
        op,
        k,
        LanczosOptions {
            tol,
            seed,
            max_iter: None,
        },
    )
}

fn orthogonalize_against(basis: &[DVector<f64>], w: &mut DVector<f64>) {
    // Two classical Gram-Schmidt sweeps.
    for _ in 0..2 {
        for v in basis {
            let c = v.dot(w);
            w.axpy(-c, v, 1.0);
        }
    }
}

fn tridiagonal_eigen(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for (i, &a) in alphas.iter().enumerate() {
        t[(i, i)] = a;
    }
    for (i, &b) in betas.iter().enumerate() {
        t[(i, i + 1)] = b;
        t[(i + 1, i)] = b;
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m, m);
    for (c, &src) in order.iter().enumerate() {
        vectors.column_mut(c).copy_from(&eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn topk_spectrum_with(
    op: &dyn SymmetricOperator,
    k: usize,
    opts: LanczosOptions,
) -> Result<TopkSpectrum> {
    let p = op.dim();
    if k == 0 || k > p {
        return Err(Error::invalid(format!("k = {k} outside 1..={p}")));
    }
    let tol = opts.tol.max(f64::EPSILON);
    let max_iter = opts.max_iter.unwrap_or_else(|| p.min((6 * k).max(200)));

    // Probabilistic symmetry check.
    let mut probe_stream = GaussianStream::new(derive_seed(opts.seed, SeedDomain::Probes, 1));
    for _ in 0..2 {
        let mut u = DVector::zeros(p);
        let mut v = DVector::zeros(p);
        probe_stream.fill_gaussian(u.as_mut_slice());
        probe_stream.fill_gaussian(v.as_mut_slice());
        u /= u.norm();
        v /= v.norm();
        let au = op.apply(&u);
        let av = op.apply(&v);
        let asym = (u.dot(&av) - v.dot(&au)).abs();
        let scale = au.norm().max(av.norm()).max(1e-300);
        if asym > tol.max(1e-10) * scale {
            return Err(Error::NotSymmetric { max_asym: asym });
        }
    }

    let mut stream = GaussianStream::new(derive_seed(opts.seed, SeedDomain::Probes, 2));
    let mut fresh_vector = |basis: &[DVector<f64>]| -> Option<DVector<f64>> {
        // A few attempts to find a direction outside the current span.
        for _ in 0..8 {
            let mut v = DVector::zeros(p);
            stream.fill_gaussian(v.as_mut_slice());
            orthogonalize_against(basis, &mut v);
            let n = v.norm();
            if n > 1e-8 {
                return Some(v / n);
            }
        }
        None
    };

    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut pending: Option<(DVector<f64>, f64)> = None; // (next vector, beta)
    let mut best: Vec<f64> = Vec::new();

    while basis.len() < max_iter.max(k) && basis.len() < p {
        let v_next = match pending.take() {
            Some((v, beta)) => {
                betas.push(beta);
                v
            }
            None => {
                if !basis.is_empty() {
                    betas.push(0.0); // restart: disconnected tridiagonal block
                }
                match fresh_vector(&basis) {
                    Some(v) => v,
                    None => break, // span exhausted
                }
            }
        };
        basis.push(v_next);
        let j = basis.len() - 1;
        let mut w = op.apply(&basis[j]);
        let alpha = basis[j].dot(&w);
        alphas.push(alpha);
        w.axpy(-alpha, &basis[j], 1.0);
        if j > 0 && betas[j - 1] != 0.0 {
            let b = betas[j - 1];
            w.axpy(-b, &basis[j - 1], 1.0);
        }
        orthogonalize_against(&basis, &mut w);
        let beta = w.norm();
        let scale = alphas.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(
            betas.iter().fold(0.0f64, |m, b| m.max(b.abs())),
        );
        if beta > 1e-12 * scale.max(1.0) {
            pending = Some((w / beta, beta));
        }

        let m = basis.len();
        let check_now = m >= k && (m % 8 == 0 || pending.is_none() || m + 1 >= max_iter);
        if !check_now {
            continue;
        }
        let (theta, s) = tridiagonal_eigen(&alphas, &betas);
        best = theta[..k.min(theta.len())].to_vec();
        if theta.len() < k {
            continue;
        }
        let beta_next = pending.as_ref().map(|&(_, b)| b).unwrap_or(0.0);
        let floor = 1e3 * f64::EPSILON * theta[0].abs().max(1e-300);
        let estimates_ok = (0..k).all(|i| {
            let est = beta_next * s[(m - 1, i)].abs();
            est <= tol * theta[i].abs().max(floor)
        });
        if !estimates_ok && pending.is_some() && m < max_iter {
            continue;
        }
        // Form Ritz vectors and verify residuals explicitly.
        let mut vectors = DMatrix::zeros(p, k);
        for i in 0..k {
            let mut y = DVector::zeros(p);
            for (row, vb) in basis.iter().enumerate() {
                y.axpy(s[(row, i)], vb, 1.0);
            }
            y /= y.norm();
            vectors.column_mut(i).copy_from(&y);
        }
        let mut residuals = Vec::with_capacity(k);
        let mut verified = true;
        for i in 0..k {
            let y = vectors.column(i).into_owned();
            let mut r = op.apply(&y);
            r.axpy(-theta[i], &y, 1.0);
            let rn = r.norm();
            residuals.push(rn);
            if rn > tol * theta[i].abs().max(floor) {
                verified = false;
            }
        }
        if verified {
            return Ok(TopkSpectrum {
                eigenvalues: theta[..k].to_vec(),
                vectors,
                residuals,
                iterations: m,
            });
        }
        if pending.is_none() && basis.len() >= p.min(max_iter) {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: basis.len(),
        best,
    })
}

/// Statistics of one eigenvalue group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// The level this group is predicted to sit at, where one exists.
    pub predicted: Option<f64>,
}

fn stats_of(slice: &[f64], predicted: Option<f64>) -> GroupStats {
    let count = slice.len();
    let mean = slice.iter().sum::<f64>() / count as f64;
    GroupStats {
        count,
        mean,
        min: slice.iter().copied().fold(f64::INFINITY, f64::min),
        max: slice.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        predicted,
    }
}

/// Group partition by the fixed theoretical counts `[1 | d | d(d+1)/2−1 | rest]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupAnalysis {
    pub d: usize,
    /// Sizes of the three predicted groups.
    pub sizes: [usize; 3],
    /// Stats for the three groups, plus the remainder when nonempty.
    pub groups: Vec<GroupStats>,
    /// `λ(last of group) / λ(first of next)` at each boundary.
    pub gap_ratios: Vec<f64>,
}

/// Predicted group levels `(2d+1)/4π`, `1/4`, `1/(2πd)`.
pub fn reference_lines(d: usize) -> [f64; 3] {
    [
        (2.0 * d as f64 + 1.0) / (4.0 * std::f64::consts::PI),
        0.25,
        1.0 / (2.0 * std::f64::consts::PI * d as f64),
    ]
}

pub fn group_analysis(eigenvalues: &[f64], d: usize) -> Result<GroupAnalysis> {
    if d == 0 {
        return Err(Error::invalid("d must be positive"));
    }
    let needed = d * (d + 3) / 2; // 1 + d + (d(d+1)/2 − 1)
    if eigenvalues.len() < needed {
        return Err(Error::invalid(format!(
            "need at least {needed} eigenvalues for d = {d}, got {}",
            eigenvalues.len()
        )));
    }
    if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid("eigenvalues must be sorted descending"));
    }
    let sizes = [1, d, d * (d + 1) / 2 - 1];
    let refs = reference_lines(d);
    let b1 = 1;
    let b2 = 1 + d;
    let b3 = needed;
    let mut groups = vec![
        stats_of(&eigenvalues[..b1], Some(refs[0])),
        stats_of(&eigenvalues[b1..b2], Some(refs[1])),
        stats_of(&eigenvalues[b2..b3], Some(refs[2])),
    ];
    let mut gap_ratios = vec![
        eigenvalues[b1 - 1] / eigenvalues[b1],
        eigenvalues[b2 - 1] / eigenvalues[b2],
    ];
    if eigenvalues.len() > b3 {
        groups.push(stats_of(&eigenvalues[b3..], None));
        gap_ratios.push(eigenvalues[b3 - 1] / eigenvalues[b3]);
    }
    Ok(GroupAnalysis {
        d,
        sizes,
        groups,
        gap_ratios,
    })
}

/// 0-based group id (0..=2, or 3 for the remainder) of eigenvalue `rank`.
pub fn group_of_rank(rank: usize, d: usize) -> usize {
    if rank == 0 {
        0
    } else if rank <= d {
        1
    } else if rank < d * (d + 3) / 2 {
        2
    } else {
        3
    }
}

/// Orthonormalizes `vectors` (QR with column pivoting), dropping directions
/// whose diagonal falls below `1e-10` of the leading one.
fn orthonormal_span(vectors: &[&DVector<f64>]) -> Result<DMatrix<f64>> {
    if vectors.is_empty() {
        return Err(Error::DegenerateSpan);
    }
    let p = vectors[0].len();
    let stacked = DMatrix::from_fn(p, vectors.len(), |i, c| vectors[c][i]);
    let qr = stacked.col_piv_qr();
    let r = qr.r();
    let lead = r[(0, 0)].abs();
    if lead == 0.0 {
        return Err(Error::DegenerateSpan);
    }
    let rank = (0..r.nrows().min(r.ncols()))
        .take_while(|&i| r[(i, i)].abs() > 1e-10 * lead)
        .count();
    if rank == 0 {
        return Err(Error::DegenerateSpan);
    }
    Ok(qr.q().columns(0, rank).into_owned())
}

/// Principal angles (radians, ascending) between the span of an orthonormal
/// block and the span of a set of predicted vectors.
///
/// Zero angles mean containment; `π/2` means an orthogonal direction.
/// Small angles come from the sine of the residual projection rather than
/// `acos` of a cosine, whose resolution bottoms out near `sqrt(2·eps)`.
pub fn principal_angles(block: &DMatrix<f64>, predicted: &[&DVector<f64>]) -> Result<Vec<f64>> {
    let q2 = orthonormal_span(predicted)?;
    if block.nrows() != q2.nrows() {
        return Err(Error::DimensionMismatch {
            expected: q2.nrows(),
            got: block.nrows(),
        });
    }
    let m = block.transpose() * &q2;
    let cosines = m.clone().svd(false, false).singular_values; // descending
    let residual = &q2 - block * m;
    let mut sines: Vec<f64> = residual
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sines.sort_by(f64::total_cmp); // ascending, pairing with descending cosines
    let mut angles: Vec<f64> = cosines
        .iter()
        .zip(&sines)
        .map(|(&c, &s)| {
            if c * c > 0.5 {
                s.clamp(0.0, 1.0).asin()
            } else {
                c.clamp(0.0, 1.0).acos()
            }
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Alignment between eigenvector blocks and the predicted spans, per group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AngleReport {
    /// Top eigenvector vs the norm profile.
    pub top: Vec<f64>,
    /// Group-2 block vs the weight rows.
    pub rows: Vec<f64>,
    /// Group-3 block vs pair products + centered squares.
    pub cluster: Vec<f64>,
}

/// Everything the spectrum path reports for one matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub stamp: Option<RunStamp>,
    pub eigenvalues: Vec<f64>,
    pub analysis: GroupAnalysis,
    pub reference_lines: [f64; 3],
    pub principal_angles: Option<AngleReport>,
}

/// Assembles the report; when eigenvectors and the basis are available the
/// per-group principal angles are included.
pub fn spectrum_report(
    eigenvalues: &[f64],
    d: usize,
    stamp: Option<RunStamp>,
    eigenvectors: Option<&DMatrix<f64>>,
    basis: Option<&FeatureBasis>,
) -> Result<SpectrumReport> {
    let analysis = group_analysis(eigenvalues, d)?;
    let principal = match (eigenvectors, basis) {
        (Some(q), Some(b)) => {
            let b2 = 1 + d;
            let b3 = d * (d + 3) / 2;
            let rows: Vec<&DVector<f64>> = (0..d).map(|l| b.row(l)).collect();
            let cluster: Vec<&DVector<f64>> = b
                .pair_products()
                .iter()
                .chain(b.centered_squares().iter())
                .collect();
            Some(AngleReport {
                top: principal_angles(&q.columns(0, 1).into_owned(), &[b.norm_profile()])?,
                rows: principal_angles(&q.columns(1, d).into_owned(), &rows)?,
                cluster: principal_angles(&q.columns(b2, b3 - b2).into_owned(), &cluster)?,
            })
        }
        _ => None,
    };
    Ok(SpectrumReport {
        stamp,
        eigenvalues: eigenvalues.to_vec(),
        analysis,
        reference_lines: reference_lines(d),
        principal_angles: principal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{assemble_approx, build_basis, ApproxDecomposition};
    use crate::kernel::{closed_form_kernel, KernelMeta, Provenance};
    use crate::weights::{column_geometry, generate_weights};

    fn diag_matrix(values: &[f64]) -> KernelMatrix {
        KernelMatrix::from_upper(
            values.len(),
            Provenance::Approx,
            KernelMeta {
                d: 1,
                seed: 0,
                tail_bound: None,
            },
            |i, j| if i == j { values[i] } else { 0.0 },
        )
        .unwrap()
    }

    #[test]
    fn dense_spectrum_of_diagonal() {
        let j = diag_matrix(&[3.0, 2.0, 1.0]);
        let s = dense_spectrum(&j).unwrap();
        assert_eq!(s.eigenvalues.as_slice(), &[3.0, 2.0, 1.0]);
        for k in 0..3 {
            let col = s.eigenvectors.column(k);
            assert!((col[k].abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_spectrum_of_rank_one() {
        let v = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let vc = v.clone();
        let j = KernelMatrix::from_upper(
            3,
            Provenance::Approx,
            KernelMeta {
                d: 1,
                seed: 0,
                tail_bound: None,
            },
            move |i, jx| vc[i] * vc[jx],
        )
        .unwrap();
        let s = dense_spectrum(&j).unwrap();
        assert!((s.eigenvalues[0] - 9.0).abs() < 1e-12); // ‖v‖²
        assert!(s.eigenvalues[1].abs() < 1e-12);
        let top = s.eigenvectors.column(0);
        let unit = &v / v.norm();
        assert!((top.dot(&unit).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_reconstruction_residual_bound() {
        let w = generate_weights(10, 120, 90, 1.0 / 120.0).unwrap();
        let j = closed_form_kernel(&column_geometry(&w).unwrap()).unwrap();
        let s = dense_spectrum(&j).unwrap();
        let reconstructed = &s.eigenvectors
            * DMatrix::from_diagonal(&s.eigenvalues)
            * s.eigenvectors.transpose();
        let mut max_err = 0.0f64;
        for (a, b) in j.values().iter().zip(reconstructed.iter()) {
            max_err = max_err.max((a - b).abs());
        }
        assert!(max_err <= 1e-8 * j.max_abs(), "residual {max_err:e}");
    }

    #[test]
    fn lanczos_on_identity() {
        let j = diag_matrix(&[1.0; 12]);
        let topk = topk_spectrum(&j, 5, 1e-10, 3).unwrap();
        for lambda in topk.eigenvalues {
            assert!((lambda - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn lanczos_matches_dense_on_closed_form() {
        let d = 10;
        let w = generate_weights(d, 500, 91, 1.0 / 500.0).unwrap();
        let j = closed_form_kernel(&column_geometry(&w).unwrap()).unwrap();
        let dense = dense_spectrum(&j).unwrap();
        let k = d * (d + 3) / 2;
        let topk = topk_spectrum(&j, k, 1e-10, 4).unwrap();
        for i in 0..k {
            let rel = (topk.eigenvalues[i] - dense.eigenvalues[i]).abs()
                / dense.eigenvalues[i].abs();
            assert!(rel < 1e-8, "i={i}: rel {rel:e}");
        }
    }

    #[test]
    fn lanczos_rejects_asymmetric_operator() {
        struct Shift;
        impl SymmetricOperator for Shift {
            fn dim(&self) -> usize {
                8
            }
            fn apply_to(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
                // Cyclic shift: decidedly not symmetric.
                for i in 0..8 {
                    y[i] = x[(i + 1) % 8];
                }
            }
        }
        assert!(matches!(
            topk_spectrum(&Shift, 2, 1e-10, 5),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn lanczos_on_matrix_free_approximation() {
        let d = 10;
        let w = generate_weights(d, 1000, 92, 1e-3).unwrap();
        let decomp = ApproxDecomposition::new(build_basis(&w).unwrap());
        let dense = dense_spectrum(&decomp.assemble().unwrap()).unwrap();
        let op = decomp.operator();
        let k = 20;
        let topk = topk_spectrum(&op, k, 1e-9, 6).unwrap();
        for i in 0..k {
            let rel = (topk.eigenvalues[i] - dense.eigenvalues[i]).abs()
                / dense.eigenvalues[i].abs().max(1e-12);
            assert!(rel < 1e-7, "i={i}: {rel:e}");
        }
    }

    #[test]
    fn group_analysis_counts_and_errors() {
        // d = 10: sizes 1, 10, 54.
        let g = group_analysis(&vec![1.0; 65], 10).unwrap();
        assert_eq!(g.sizes, [1, 10, 54]);
        // d = 2 needs d(d+3)/2 = 5 values; 4 is malformed.
        assert!(group_analysis(&[5.0, 1.0, 1.0, 0.1], 2).is_err());
        let g = group_analysis(&[5.0, 1.0, 1.0, 0.1, 0.1], 2).unwrap();
        assert_eq!(g.sizes, [1, 2, 2]);
        assert!((g.groups[0].mean - 5.0).abs() < 1e-15);
        assert!((g.gap_ratios[0] - 5.0).abs() < 1e-12);
        assert!((g.gap_ratios[1] - 10.0).abs() < 1e-12);
        // Unsorted input is rejected.
        assert!(group_analysis(&[1.0, 2.0, 0.5, 0.1, 0.1], 2).is_err());
    }

    #[test]
    fn group_ids_by_rank() {
        assert_eq!(group_of_rank(0, 10), 0);
        assert_eq!(group_of_rank(1, 10), 1);
        assert_eq!(group_of_rank(10, 10), 1);
        assert_eq!(group_of_rank(11, 10), 2);
        assert_eq!(group_of_rank(64, 10), 2);
        assert_eq!(group_of_rank(65, 10), 3);
    }

    #[test]
    fn principal_angles_reference_cases() {
        // Identical subspaces → all angles 0.
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        let block = DMatrix::from_columns(&[e1.clone()]);
        let same = principal_angles(&block, &[&e1]).unwrap();
        assert!(same[0].abs() < 1e-12);
        let orth = principal_angles(&block, &[&e2]).unwrap();
        assert!((orth[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        // Degenerate span errors out.
        let z = DVector::zeros(2);
        assert!(matches!(
            principal_angles(&block, &[&z]),
            Err(Error::DegenerateSpan)
        ));
    }

    #[test]
    fn scaling_leaves_eigenvectors_fixed() {
        let w = generate_weights(10, 500, 93, 1.0 / 500.0).unwrap();
        let j = closed_form_kernel(&column_geometry(&w).unwrap()).unwrap();
        let s1 = dense_spectrum(&j).unwrap();
        let s2 = dense_spectrum(&j.scaled(0.25)).unwrap();
        for i in 0..10 {
            assert!((s2.eigenvalues[i] - s1.eigenvalues[i] / 4.0).abs() < 1e-12);
        }
        // Compare blocks at the well-separated group-2/group-3 boundary;
        // a cut inside the tight third cluster is fp-degenerate.
        let k = 1 + 10;
        let b1 = s1.block(0, k);
        let cols: Vec<DVector<f64>> = (0..k).map(|c| s2.eigenvectors.column(c).into_owned()).collect();
        let refs: Vec<&DVector<f64>> = cols.iter().collect();
        let angles = principal_angles(&b1, &refs).unwrap();
        assert!(angles.iter().all(|a| *a <= 1e-8), "{angles:?}");
    }

    #[test]
    fn trace_sum_rule() {
        let w = generate_weights(8, 200, 94, 1.0 / 200.0).unwrap();
        let j = closed_form_kernel(&column_geometry(&w).unwrap()).unwrap();
        let s = dense_spectrum(&j).unwrap();
        let row_half: f64 = (0..8).map(|l| w.row_vector(l).norm_squared()).sum::<f64>() / 2.0;
        let sum: f64 = s.eigenvalues.iter().sum();
        assert!((sum - j.trace()).abs() <= 1e-8 * j.trace());
        assert!((j.trace() - row_half).abs() <= 1e-10 * row_half);
    }

    #[test]
    fn approx_spectrum_has_exactly_the_predicted_rank() {
        // Synthetic orthonormal family: exact coefficients, exact rank.
        let p = 40;
        let m = 10;
        let mut stream = GaussianStream::new(7);
        let mut raw = DMatrix::zeros(p, m);
        for v in raw.iter_mut() {
            *v = stream.next_gaussian();
        }
        let q = raw.col_piv_qr().q();
        let coeffs: Vec<f64> = (1..=m).map(|i| i as f64).collect();
        let qc = q.clone();
        let j = KernelMatrix::from_upper(
            p,
            Provenance::Approx,
            KernelMeta {
                d: 1,
                seed: 0,
                tail_bound: None,
            },
            move |i, jx| {
                (0..m)
                    .map(|c| coeffs[c] * qc[(i, c)] * qc[(jx, c)])
                    .sum()
            },
        )
        .unwrap();
        let s = dense_spectrum(&j).unwrap();
        for i in 0..m {
            assert!((s.eigenvalues[i] - (m - i) as f64).abs() < 1e-10);
        }
        for i in m..p {
            assert!(s.eigenvalues[i].abs() < 1e-12);
        }
        // Generated basis: rank d(d+3)/2, one dimension lost to the zero sum.
        let d = 10;
        let w = generate_weights(d, 100, 95, 0.01).unwrap();
        let approx = assemble_approx(&build_basis(&w).unwrap()).unwrap();
        let s = dense_spectrum(&approx).unwrap();
        let limit = d * (d + 3) / 2;
        assert!(s.eigenvalues[limit] <= 1e-6 * s.eigenvalues[0]);
    }
}
