//! Explicit deviation bounds and run certificates.
//!
//! The norm-ratio allowance `ξ(d)` controls how far the squared norms and
//! inner products of the feature basis can sit from orthonormality in
//! expectation; together with a tolerance `δ` (Chebyshev + union bound over
//! all `D = (d+1)(d+2)(d²+3d+4)/8` vector pairs) it yields a probability
//! floor `1 − CD/(δ²p)` for the full set of deviation statements.
//!
//! `certify_run` evaluates every statement for a concrete run: the trace
//! bound `tr(J) ≤ (d/2)(1+δ)`, the four Rayleigh-quotient floors, the six
//! deviation families, and the accounting identity that the quotient floors
//! sum to at least `(3+π)/(2π) · d/2 ≥ 0.977 · d/2`.
//!
//! Only the statements are evaluated here. The two norm-ratio expectations
//! they rest on, `E[d Z₁²Z₂²/‖Z‖²]` and `E[d Z₁⁴/‖Z‖²]`, have Monte Carlo
//! spot checks in [`norm_ratio_moments`]; nothing else from the underlying
//! proofs is re-derived.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{basis_geometry, build_basis, BasisFamily, GramReport, QuotientReport, RunStamp};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, GaussianStream, SeedDomain};
use crate::weights::generate_weights;

/// `ι₁(a) = √(2/π)(a + 1/a)·e^(−a²/2)` and
/// `ι₂(a) = √(2/π)(a³ + 3a + 3/a)·e^(−a²/2)`.
pub fn iota(a: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) {
        return Err(Error::invalid(format!("iota requires a > 0, got {a}")));
    }
    let front = (2.0 / std::f64::consts::PI).sqrt() * (-a * a / 2.0).exp();
    let iota1 = front * (a + 1.0 / a);
    let iota2 = front * (a * a * a + 3.0 * a + 3.0 / a);
    Ok((iota1, iota2))
}

/// Which fourth argument enters the max defining `ξ(d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum XiMode {
    /// `max(ξ₁(d₁), ξ₂(d₂), ξ̄₁(d₁), ξ̄₂(d₂))`: pairs every component with
    /// the argument it is used with.
    #[default]
    Corrected,
    /// `max(ξ₁(d₁), ξ₂(d₂), ξ̄₁(d₁), ξ̄₁(d₂))`: the published display, which
    /// repeats ξ̄₁ and never uses ξ̄₂; almost certainly a typo, kept for
    /// literal reproduction.
    PaperLiteral,
}

/// All components of the norm-ratio allowance at one `(d, η)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiMachinery {
    pub d: usize,
    pub eta: f64,
    pub d1: usize,
    pub d2: usize,
    /// `ι₁(d₁^η)`, `ι₂(d₂^η)` at the evaluation points baked into ξ₁/ξ₂.
    pub iota1_at_eval: f64,
    pub iota2_at_eval: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub xi_bar1: f64,
    pub xi_bar2: f64,
    /// The max over the four components per `mode`.
    pub value: f64,
    pub mode: XiMode,
}

fn xi1_component(d1: f64, eta: f64, iota1: f64) -> f64 {
    let tail = 1.0 - 2.0 * (-d1.powf(2.0 * eta) / 8.0).exp();
    1.0 - (1.0 - iota1).powi(2) * tail * (d1 + 2.0)
        / (d1 + d1.powf(0.5 + eta) + 2.0 * d1.powf(2.0 * eta))
}

fn xi2_component(d2: f64, eta: f64, iota2: f64) -> f64 {
    let tail = 1.0 - 2.0 * (-d2.powf(2.0 * eta) / 8.0).exp();
    1.5 - (3.0 - iota2) / 2.0 * tail * (d2 + 1.0)
        / (d2 + d2.powf(0.5 + eta) + d2.powf(2.0 * eta))
}

fn xi_bar1_component(x: f64, eta: f64) -> f64 {
    (1.0 + 2.0 / x) * (1.0 + 1.0 / (x.powf(0.5 - eta) - 1.0))
        + 2.0 * (x + 2.0) * (-x.powf(2.0 * eta) / 8.0).exp()
        - 1.0
}

fn xi_bar2_component(x: f64, eta: f64) -> f64 {
    1.5 * (1.0 + 1.0 / x) * (1.0 + 1.0 / (x.powf(0.5 - eta) - 1.0))
        + 2.0 * (x + 1.0) * (-x.powf(2.0 * eta) / 8.0).exp()
        - 1.5
}

/// Evaluates the ξ machinery at `(d, η)` with the corrected max.
pub fn xi_of_d(d: usize, eta: f64) -> Result<XiMachinery> {
    xi_of_d_mode(d, eta, XiMode::Corrected)
}

pub fn xi_of_d_mode(d: usize, eta: f64, mode: XiMode) -> Result<XiMachinery> {
    if d <= 4 {
        return Err(Error::DimensionTooSmall(d));
    }
    if !(eta > 0.0 && eta < 0.5) {
        return Err(Error::invalid(format!("eta must lie in (0, 1/2), got {eta}")));
    }
    let d1 = d - 2;
    let d2 = d - 1;
    let (f1, f2) = (d1 as f64, d2 as f64);
    let (iota1_at_eval, _) = iota(f1.powf(eta))?;
    let (_, iota2_at_eval) = iota(f2.powf(eta))?;
    let xi1 = xi1_component(f1, eta, iota1_at_eval);
    let xi2 = xi2_component(f2, eta, iota2_at_eval);
    let xi_bar1 = xi_bar1_component(f1, eta);
    let xi_bar2 = xi_bar2_component(f2, eta);
    let fourth = match mode {
        XiMode::Corrected => xi_bar2,
        XiMode::PaperLiteral => xi_bar1_component(f2, eta),
    };
    let value = xi1.max(xi2).max(xi_bar1).max(fourth);
    Ok(XiMachinery {
        d,
        eta,
        d1,
        d2,
        iota1_at_eval,
        iota2_at_eval,
        xi1,
        xi2,
        xi_bar1,
        xi_bar2,
        value,
        mode,
    })
}

/// Number of distinct pairs over the basis family:
/// `D = (d+1)(d+2)(d²+3d+4)/8`, always an integer.
pub fn pair_count(d: usize) -> u128 {
    let d = d as u128;
    (d + 1) * (d + 2) * (d * d + 3 * d + 4) / 8
}

/// Cardinality of the basis family: `d(d+3)/2 + 1`.
pub fn basis_cardinality(d: usize) -> usize {
    d * (d + 3) / 2 + 1
}

/// Union-bound probability floor `1 − C·D/(δ²·p)`, clipped at zero.
///
/// A zero result means the bound is vacuous at these parameters.
pub fn probability_floor(d: usize, p: usize, delta: f64, c: f64) -> Result<f64> {
    if d <= 4 {
        return Err(Error::DimensionTooSmall(d));
    }
    if p == 0 {
        return Err(Error::invalid("p must be positive"));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("delta must be positive, got {delta}")));
    }
    if !(c > 0.0) {
        return Err(Error::invalid(format!("C must be positive, got {c}")));
    }
    let correction = c * pair_count(d) as f64 / (delta * delta * p as f64);
    Ok((1.0 - correction).max(0.0))
}

/// One evaluated claim: both sides, the margin `rhs − lhs` under the claim's
/// direction (positive = satisfied), and the verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRecord {
    pub claim: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl CheckRecord {
    fn le(claim: &str, lhs: f64, rhs: f64) -> Self {
        CheckRecord {
            claim: claim.to_string(),
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: lhs <= rhs,
        }
    }

    fn ge(claim: &str, lhs: f64, rhs: f64) -> Self {
        CheckRecord {
            claim: claim.to_string(),
            lhs,
            rhs,
            margin: lhs - rhs,
            pass: lhs >= rhs,
        }
    }
}

/// Certificate for one run at one tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    pub stamp: RunStamp,
    /// Tolerance the checks were evaluated at.
    pub delta: f64,
    /// Smallest tolerance at which every deviation statement holds.
    pub delta_star: f64,
    pub eta: f64,
    pub xi: f64,
    pub pair_count: u128,
    pub c: f64,
    /// `1 − C·D/(δ²·p)` at the evaluated δ.
    pub probability_floor: f64,
    pub checks: Vec<CheckRecord>,
    pub all_pass: bool,
}

impl CertificateReport {
    pub fn failing(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Evaluates every deviation and floor statement for one run.
///
/// `trace_j` is the trace of the kernel the quotients were measured against.
/// With `delta = None` the certificate is self-calibrating: it uses the
/// smallest tolerance `δ*` under which the deviation family holds, and the
/// quotient floors are then genuine statements about the kernel.
pub fn certify_run(
    trace_j: f64,
    geom: &GramReport,
    quotients: &QuotientReport,
    xi: &XiMachinery,
    delta: Option<f64>,
    c: f64,
) -> Result<CertificateReport> {
    let stamp = geom.stamp();
    stamp.ensure_matches(&quotients.stamp)?;
    if stamp.d != xi.d {
        return Err(Error::RunMismatch(format!(
            "geometry is for d={}, xi machinery for d={}",
            stamp.d, xi.d
        )));
    }
    let d = stamp.d as f64;
    let xi_v = xi.value;
    let delta_star = geom.required_delta(xi_v);
    let delta = delta.unwrap_or(delta_star);
    if !(delta >= 0.0) {
        return Err(Error::invalid(format!("delta must be nonnegative, got {delta}")));
    }

    let mut checks = Vec::new();
    checks.push(CheckRecord::le(
        "trace_upper_bound",
        trace_j,
        d / 2.0 * (1.0 + delta),
    ));

    let top_floor = (2.0 * d + 1.0) / (4.0 * std::f64::consts::PI) * (1.0 - delta);
    let row_floor = 0.25 * (1.0 - delta);
    let cluster_floor = (1.0 - delta - xi_v) / (2.0 * std::f64::consts::PI * d);
    let quotient_check = |claim: &str, family: BasisFamily, floor: f64| -> Result<CheckRecord> {
        let min = quotients
            .min_for(family)
            .ok_or_else(|| Error::invalid(format!("no quotients for {claim}")))?;
        Ok(CheckRecord::ge(claim, min, floor))
    };
    checks.push(quotient_check(
        "rayleigh_floor_norm_profile",
        BasisFamily::NormProfile,
        top_floor,
    )?);
    checks.push(quotient_check(
        "rayleigh_floor_rows",
        BasisFamily::Row,
        row_floor,
    )?);
    checks.push(quotient_check(
        "rayleigh_floor_pair_products",
        BasisFamily::PairProduct,
        cluster_floor,
    )?);
    checks.push(quotient_check(
        "rayleigh_floor_centered_squares",
        BasisFamily::CenteredSquare,
        cluster_floor,
    )?);

    checks.push(CheckRecord::le(
        "norm_dev_norm_profile",
        geom.max_norm_dev(BasisFamily::NormProfile),
        delta,
    ));
    checks.push(CheckRecord::le(
        "norm_dev_rows",
        geom.max_norm_dev(BasisFamily::Row),
        delta,
    ));
    checks.push(CheckRecord::le(
        "norm_dev_pair_products",
        geom.max_norm_dev(BasisFamily::PairProduct),
        delta + xi_v,
    ));
    checks.push(CheckRecord::le(
        "norm_dev_centered_squares",
        geom.max_norm_dev(BasisFamily::CenteredSquare),
        delta + xi_v,
    ));
    checks.push(CheckRecord::le(
        "cross_inner_products",
        geom.max_mixed_inner(),
        delta,
    ));
    checks.push(CheckRecord::le(
        "centered_pair_offset",
        geom.max_centered_offset(),
        delta + xi_v / (d - 1.0),
    ));

    // Accounting: the quotient floors sum to at least (3+π)/(2π)·d/2, which
    // is at least 0.977·d/2 and sits inside the trace bound.
    let remark = (3.0 + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
    checks.push(CheckRecord::ge("remark_constant", remark, 0.977));
    let ideal_floor_sum = (2.0 * d + 1.0) / (4.0 * std::f64::consts::PI)
        + d / 4.0
        + (d - 1.0) * (d + 2.0) / (4.0 * std::f64::consts::PI * d);
    checks.push(CheckRecord::ge(
        "floor_sum_exceeds_remark_level",
        ideal_floor_sum,
        remark * d / 2.0,
    ));
    checks.push(CheckRecord::ge(
        "floor_mass_vs_trace",
        remark * d / 2.0 / trace_j,
        0.977 / (1.0 + delta),
    ));

    let all_pass = checks.iter().all(|c| c.pass);
    let probability_floor = if delta > 0.0 {
        probability_floor(stamp.d, stamp.p, delta, c)?
    } else {
        0.0
    };
    Ok(CertificateReport {
        stamp,
        delta,
        delta_star,
        eta: xi.eta,
        xi: xi_v,
        pair_count: pair_count(stamp.d),
        c,
        probability_floor,
        checks,
        all_pass,
    })
}

/// A Monte Carlo mean with standard error, for the norm-ratio expectations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Estimates `E[d Z₁²Z₂²/‖Z‖²]` and `E[d Z₁⁴/‖Z‖²]` over standard-normal
/// d-vectors; these are the two expectations the ξ intervals bracket.
pub fn norm_ratio_moments(d: usize, samples: usize, seed: u64) -> Result<(MomentEstimate, MomentEstimate)> {
    if d < 2 {
        return Err(Error::invalid("d must be at least 2"));
    }
    if samples == 0 {
        return Err(Error::invalid("samples must be >= 1"));
    }
    let mut stream = GaussianStream::new(derive_seed(seed, SeedDomain::BoundsOracle, 0));
    let mut z = vec![0.0f64; d];
    let (mut s1, mut s1_sq, mut s2, mut s2_sq) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        stream.fill_gaussian(&mut z);
        let norm_sq: f64 = z.iter().map(|v| v * v).sum();
        let y1 = d as f64 * z[0] * z[0] * z[1] * z[1] / norm_sq;
        let y2 = d as f64 * z[0] * z[0] * z[0] * z[0] / norm_sq;
        s1 += y1;
        s1_sq += y1 * y1;
        s2 += y2;
        s2_sq += y2 * y2;
    }
    let n = samples as f64;
    let finish = |sum: f64, sum_sq: f64| {
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
        MomentEstimate {
            mean,
            std_error: (var / n).sqrt(),
            samples,
        }
    };
    Ok((finish(s1, s1_sq), finish(s2, s2_sq)))
}

/// Multi-seed estimate of the constant in `Var[v·v′] ≤ C/p`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnionConstantEstimate {
    pub d: usize,
    pub p: usize,
    pub seeds: usize,
    /// `p · max over pair statistics of the across-seed variance`.
    pub c_hat: f64,
    /// Largest deviation per seed (the self-calibrating tolerance).
    pub delta_stars: Vec<f64>,
    /// Fraction of seeds whose largest deviation exceeds `delta`.
    pub exceed_fraction: f64,
    pub delta: f64,
}

/// Runs `seeds` independent generations at `(d, p)` and estimates the
/// variance constant empirically. The result is a report, not an assertion:
/// the constant is unspecified, so this pins a plausible value for the
/// probability floor.
pub fn estimate_union_constant(
    d: usize,
    p: usize,
    seeds: usize,
    base_seed: u64,
    delta: f64,
    eta: f64,
) -> Result<UnionConstantEstimate> {
    if seeds < 2 {
        return Err(Error::invalid("need at least 2 seeds"));
    }
    let xi = xi_of_d(d, eta)?;
    let reports: Vec<(Vec<f64>, f64)> = (0..seeds as u64)
        .into_par_iter()
        .map(|s| {
            let w = generate_weights(d, p, base_seed.wrapping_add(s), 1.0 / p as f64)
                .expect("generation at valid parameters");
            let basis = build_basis(&w).expect("basis from nonzero columns");
            let geom = basis_geometry(&basis);
            let gram = geom.gram();
            let m = gram.nrows();
            let mut stats = Vec::with_capacity(m * (m + 1) / 2);
            for k in 0..m {
                for k2 in k..m {
                    stats.push(gram[(k, k2)]);
                }
            }
            (stats, geom.required_delta(xi.value))
        })
        .collect();
    let n_stats = reports[0].0.len();
    let mut c_hat = 0.0f64;
    for idx in 0..n_stats {
        let mean = reports.iter().map(|(s, _)| s[idx]).sum::<f64>() / seeds as f64;
        let var = reports
            .iter()
            .map(|(s, _)| (s[idx] - mean).powi(2))
            .sum::<f64>()
            / (seeds as f64 - 1.0);
        c_hat = c_hat.max(var * p as f64);
    }
    let delta_stars: Vec<f64> = reports.iter().map(|&(_, ds)| ds).collect();
    let exceed = delta_stars.iter().filter(|&&ds| ds > delta).count();
    Ok(UnionConstantEstimate {
        d,
        p,
        seeds,
        c_hat,
        exceed_fraction: exceed as f64 / seeds as f64,
        delta_stars,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::rayleigh_quotients;
    use crate::kernel::closed_form_kernel;
    use crate::weights::column_geometry;

    #[test]
    fn iota_reference_values() {
        // √(2/π)·2·e^(−1/2) and √(2/π)·7·e^(−1/2).
        let (i1, i2) = iota(1.0).unwrap();
        assert!((i1 - 0.9678828980765734).abs() < 1e-14);
        assert!((i2 - 3.387590143268007).abs() < 1e-14);
        assert!(iota(0.0).is_err());
        assert!(iota(-1.0).is_err());
        // Gaussian decay dominates the polynomial factors.
        let (b1, b2) = iota(40.0).unwrap();
        assert!(b1 < 1e-300 && b2 < 1e-300);
    }

    #[test]
    fn xi_regression_fixture() {
        // Frozen from a 40-digit evaluation of the defining formulas.
        let xi = xi_of_d(10, 0.25).unwrap();
        assert!((xi.value - 16.189161248793508).abs() < 1e-10, "{}", xi.value);
        assert!((xi.xi1 - 1.0684822700046212).abs() < 1e-10);
        assert!((xi.xi2 - 1.5916480115325009).abs() < 1e-10);
        assert!((xi.xi_bar1 - 16.127171529256996).abs() < 1e-10);
        assert!((xi.xi_bar2 - 16.189161248793508).abs() < 1e-10);
        let literal = xi_of_d_mode(10, 0.25, XiMode::PaperLiteral).unwrap();
        assert!((literal.value - 17.012172960249036).abs() < 1e-10);
    }

    #[test]
    fn xi_domain_checks() {
        assert!(matches!(xi_of_d(4, 0.25), Err(Error::DimensionTooSmall(4))));
        assert!(xi_of_d(10, 0.0).is_err());
        assert!(xi_of_d(10, 0.5).is_err());
    }

    #[test]
    fn xi_goes_to_zero_in_the_wide_regime() {
        // The exponential term peaks near d ≈ 250 at η = 1/4; beyond it the
        // allowance decays like d^(η−1/2) and vanishes asymptotically.
        let a = xi_of_d(1_000, 0.25).unwrap().value;
        let b = xi_of_d(10_000, 0.25).unwrap().value;
        let c = xi_of_d(100_000, 0.25).unwrap().value;
        let e = xi_of_d(100_000_000, 0.25).unwrap().value;
        assert!(a > b && b > c, "{a} {b} {c}");
        assert!(c > e);
        assert!(e < 0.02);
        for d in [10usize, 100, 1000, 100_000] {
            assert!(xi_of_d(d, 0.25).unwrap().value > 0.0);
        }
    }

    #[test]
    fn xi_increases_toward_eta_half_when_polynomial_dominates() {
        let lo = xi_of_d(1_000_000, 0.25).unwrap().value;
        let mid = xi_of_d(1_000_000, 0.4).unwrap().value;
        let hi = xi_of_d(1_000_000, 0.45).unwrap().value;
        assert!(lo < mid && mid < hi, "{lo} {mid} {hi}");
    }

    #[test]
    fn pair_count_formula() {
        // d = 10: 11·12·134/8 = 2211.
        assert_eq!(pair_count(10), 2211);
        // Counting identity: D = M(M+1)/2 with M = d(d+3)/2 + 1.
        for d in 5..=50usize {
            let m = basis_cardinality(d) as u128;
            assert_eq!(pair_count(d), m * (m + 1) / 2, "d={d}");
            // Integrality of the closed form.
            let dd = d as u128;
            assert_eq!((dd + 1) * (dd + 2) * (dd * dd + 3 * dd + 4) % 8, 0);
        }
    }

    #[test]
    fn probability_floor_behaviour() {
        // Large p drives the floor to 1.
        let lo = probability_floor(10, 10_000, 0.5, 1.0).unwrap();
        let hi = probability_floor(10, 100_000_000, 0.5, 1.0).unwrap();
        assert!(hi > lo);
        assert!(hi > 0.999);
        // Vacuous region clips to zero.
        assert_eq!(probability_floor(10, 10, 0.1, 1.0).unwrap(), 0.0);
        assert!(probability_floor(4, 10, 0.1, 1.0).is_err());
        assert!(probability_floor(10, 10, 0.0, 1.0).is_err());
        assert!(probability_floor(10, 10, 0.1, 0.0).is_err());
    }

    #[test]
    fn norm_ratio_moment_sanity() {
        // Exact values: d/(d+2) and 3d/(d+2).
        let d = 12;
        let (m1, m2) = norm_ratio_moments(d, 200_000, 9).unwrap();
        let t1 = d as f64 / (d as f64 + 2.0);
        let t2 = 3.0 * d as f64 / (d as f64 + 2.0);
        assert!((m1.mean - t1).abs() < 5.0 * m1.std_error, "{m1:?} vs {t1}");
        assert!((m2.mean - t2).abs() < 5.0 * m2.std_error, "{m2:?} vs {t2}");
    }

    fn small_run(
        d: usize,
        p: usize,
        seed: u64,
    ) -> (f64, GramReport, QuotientReport, XiMachinery) {
        let w = generate_weights(d, p, seed, 1.0 / p as f64).unwrap();
        let basis = build_basis(&w).unwrap();
        let geom = basis_geometry(&basis);
        let j = closed_form_kernel(&column_geometry(&w).unwrap()).unwrap();
        let quotients = rayleigh_quotients(&j, &basis).unwrap();
        let xi = xi_of_d(d, 0.25).unwrap();
        (j.trace(), geom, quotients, xi)
    }

    #[test]
    fn certificate_passes_at_observed_tolerance() {
        let (trace, geom, quotients, xi) = small_run(10, 2000, 17);
        let report = certify_run(trace, &geom, &quotients, &xi, None, 1.0).unwrap();
        assert!(report.all_pass, "failing: {:?}", report.failing().collect::<Vec<_>>());
        assert_eq!(report.delta, report.delta_star);
        assert_eq!(report.pair_count, 2211);
    }

    #[test]
    fn certificate_fails_at_tiny_tolerance() {
        let (trace, geom, quotients, xi) = small_run(10, 500, 18);
        let report = certify_run(trace, &geom, &quotients, &xi, Some(0.0), 1.0).unwrap();
        assert!(!report.all_pass);
        // Norm deviations are almost surely nonzero at finite p.
        assert!(report
            .failing()
            .any(|c| c.claim.starts_with("norm_dev") || c.claim == "cross_inner_products"));
    }

    #[test]
    fn certificate_is_monotone_in_delta() {
        let (trace, geom, quotients, xi) = small_run(8, 1000, 19);
        let at = |delta: f64| {
            certify_run(trace, &geom, &quotients, &xi, Some(delta), 1.0)
                .unwrap()
                .checks
                .iter()
                .filter(|c| c.pass)
                .count()
        };
        let base = certify_run(trace, &geom, &quotients, &xi, None, 1.0).unwrap();
        let passes_at_star = at(base.delta_star);
        assert!(at(base.delta_star * 2.0) >= passes_at_star);
        assert!(at(base.delta_star * 8.0) >= passes_at_star);
    }

    #[test]
    fn certificate_rejects_mixed_runs() {
        let (_, geom, _, xi) = small_run(6, 300, 20);
        let (trace2, _, quotients2, _) = small_run(6, 300, 21);
        assert!(matches!(
            certify_run(trace2, &geom, &quotients2, &xi, None, 1.0),
            Err(Error::RunMismatch(_))
        ));
    }

    #[test]
    fn union_constant_estimate_is_sane() {
        let est = estimate_union_constant(6, 400, 24, 100, 0.5, 0.25).unwrap();
        assert!(est.c_hat.is_finite() && est.c_hat > 0.0);
        assert_eq!(est.delta_stars.len(), 24);
        assert!((0.0..=1.0).contains(&est.exceed_fraction));
    }
}
