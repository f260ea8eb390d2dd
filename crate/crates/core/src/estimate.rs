//! Unbiased least-squares estimation of `p` from block multinomial counts.
//!
//! With stacked rows `alpha_i A_i` (empirical `alpha_i = n_i / n`),
//! `p_hat = (A'A)^{-1} A' X / n` and
//! `Var[p_hat] = (A'A)^{-1} (sum_i alpha_i^3 A_i' V(A_i p) A_i) (A'A)^{-1} / n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{DesignKind, ListDesign, Preferences, SurveyDesign, SUM_TOL};
use crate::error::{Error, Result};
use crate::linalg;
use crate::stats::normal_quantile;

/// Per-block response counts `X_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseCounts {
    blocks: Vec<Vec<u64>>,
}

impl ResponseCounts {
    pub fn new(blocks: Vec<Vec<u64>>) -> Self {
        ResponseCounts { blocks }
    }

    /// Single-block counts (pair method).
    pub fn single(counts: Vec<u64>) -> Self {
        ResponseCounts {
            blocks: vec![counts],
        }
    }

    pub fn blocks(&self) -> &[Vec<u64>] {
        &self.blocks
    }

    pub fn block_totals(&self) -> Vec<u64> {
        self.blocks.iter().map(|b| b.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.blocks.iter().flatten().sum()
    }

    /// All counts stacked in block order.
    pub fn stacked(&self) -> Vec<u64> {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn check_shape(&self, design: &SurveyDesign) -> Result<()> {
        let sizes = design.block_sizes();
        if sizes.len() != self.blocks.len() {
            return Err(Error::LengthMismatch {
                expected: sizes.len(),
                got: self.blocks.len(),
            });
        }
        for (k, b) in sizes.iter().zip(&self.blocks) {
            if *k != b.len() {
                return Err(Error::LengthMismatch {
                    expected: *k,
                    got: b.len(),
                });
            }
        }
        Ok(())
    }
}

/// Which preference vector the reported covariance is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceAt<'a> {
    /// Plug in the estimate itself.
    PlugIn,
    /// Use a known or hypothesised truth.
    Known(&'a Preferences),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    PlugIn,
    Known,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub p_hat: Vec<f64>,
    /// Row-major `N x N` covariance of `p_hat` for this survey (already divided by `n`).
    pub cov: Vec<f64>,
    pub n_parties: usize,
    pub n: u64,
    pub method_tag: DesignKind,
    pub negative_entries: bool,
    pub covariance_at: CovarianceSource,
    /// Set when the plug-in point lies outside the simplex, in which case the
    /// reported matrix need not be positive semi-definite.
    pub possibly_indefinite: bool,
}

impl EstimateResult {
    fn assemble(
        p_hat: Vec<f64>,
        cov: DMatrix<f64>,
        n: u64,
        method_tag: DesignKind,
        at: CovarianceSource,
    ) -> Self {
        let n_parties = p_hat.len();
        let negative_entries = p_hat.iter().any(|&v| v < 0.0);
        let possibly_indefinite =
            at == CovarianceSource::PlugIn && p_hat.iter().any(|&v| !(0.0..=1.0).contains(&v));
        let cov = (0..n_parties)
            .flat_map(|i| (0..n_parties).map(move |j| (i, j)))
            .map(|(i, j)| cov[(i, j)])
            .collect();
        EstimateResult {
            p_hat,
            cov,
            n_parties,
            n,
            method_tag,
            negative_entries,
            covariance_at: at,
            possibly_indefinite,
        }
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_parties, self.n_parties, &self.cov)
    }

    pub fn variance(&self, party: usize) -> f64 {
        self.cov[party * self.n_parties + party]
    }
}

/// `(A'A)^{-1} (sum_i alpha_i^3 A_i' V(A_i p) A_i) (A'A)^{-1}`: the covariance
/// of `sqrt(n) p_hat` for block shares `alphas`, evaluated at `p`.
///
/// `p` is not required to be a probability vector (plug-in use).
pub fn design_covariance(design: &SurveyDesign, alphas: &[f64], p: &[f64]) -> Result<DMatrix<f64>> {
    if alphas.len() != design.blocks().len() {
        return Err(Error::LengthMismatch {
            expected: design.blocks().len(),
            got: alphas.len(),
        });
    }
    if p.len() != design.n_parties() {
        return Err(Error::LengthMismatch {
            expected: design.n_parties(),
            got: p.len(),
        });
    }
    let a = design.stacked_with(alphas);
    let chol = linalg::gram_cholesky(&a)?;
    let pv = DVector::from_column_slice(p);
    let n = design.n_parties();
    let mut middle = DMatrix::zeros(n, n);
    for (block, &alpha) in design.blocks().iter().zip(alphas) {
        let ai = block.matrix();
        let v = linalg::multinomial_cov(&(ai * &pv));
        middle += (ai.transpose() * v * ai) * alpha.powi(3);
    }
    Ok(linalg::sandwich(&chol, &middle))
}

/// The linear map `X -> p_hat` for a fixed allocation of respondents to blocks.
#[derive(Debug, Clone)]
pub struct LinearEstimator {
    map: DMatrix<f64>,
    alphas: Vec<f64>,
    n: u64,
}

impl LinearEstimator {
    pub fn new(design: &SurveyDesign, allocations: &[u64]) -> Result<Self> {
        if allocations.len() != design.blocks().len() {
            return Err(Error::LengthMismatch {
                expected: design.blocks().len(),
                got: allocations.len(),
            });
        }
        if let Some(i) = allocations.iter().position(|&a| a == 0) {
            return Err(Error::EmptyBlock(i));
        }
        let n: u64 = allocations.iter().sum();
        let alphas: Vec<f64> = allocations.iter().map(|&a| a as f64 / n as f64).collect();
        let a = design.stacked_with(&alphas);
        let chol = linalg::gram_cholesky(&a)?;
        let map = chol.solve(&a.transpose()) / n as f64;
        Ok(LinearEstimator { map, alphas, n })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Apply to stacked counts.
    pub fn apply(&self, stacked_counts: &[u64]) -> Vec<f64> {
        let x = DVector::from_iterator(stacked_counts.len(), stacked_counts.iter().map(|&c| c as f64));
        (&self.map * x).iter().copied().collect()
    }

    /// Apply to a real-valued stacked vector (used by exact enumeration).
    pub fn apply_f64(&self, stacked: &DVector<f64>) -> DVector<f64> {
        &self.map * stacked
    }
}

pub fn estimate_general(design: &SurveyDesign, counts: &ResponseCounts) -> Result<EstimateResult> {
    estimate_general_with(design, counts, CovarianceAt::PlugIn)
}

pub fn estimate_general_with(
    design: &SurveyDesign,
    counts: &ResponseCounts,
    at: CovarianceAt<'_>,
) -> Result<EstimateResult> {
    counts.check_shape(design)?;
    let totals = counts.block_totals();
    let est = LinearEstimator::new(design, &totals)?;
    let p_hat = est.apply(&counts.stacked());
    let (point, source) = match at {
        CovarianceAt::PlugIn => (p_hat.clone(), CovarianceSource::PlugIn),
        CovarianceAt::Known(p) => {
            if p.len() != design.n_parties() {
                return Err(Error::LengthMismatch {
                    expected: design.n_parties(),
                    got: p.len(),
                });
            }
            (p.probs().to_vec(), CovarianceSource::Known)
        }
    };
    let cov = design_covariance(design, est.alphas(), &point)? / est.n() as f64;
    Ok(EstimateResult::assemble(p_hat, cov, est.n(), design.kind(), source))
}

fn pair_count_to_parties(m: usize) -> Option<usize> {
    (3..).take_while(|n| n * (n - 1) / 2 <= m).find(|n| n * (n - 1) / 2 == m)
}

/// Closed-form pair-method estimate `p_i = (N-1)/(N-2) sum_j u_ij - 1/(N-2)`.
///
/// Counts are over the `N(N-1)/2` pairs in lexicographic order. The covariance
/// is the closed form evaluated at the estimate.
pub fn pair_estimate(n_parties: usize, counts: &[u64]) -> Result<EstimateResult> {
    pair_estimate_with(n_parties, counts, CovarianceAt::PlugIn)
}

pub fn pair_estimate_with(n_parties: usize, counts: &[u64], at: CovarianceAt<'_>) -> Result<EstimateResult> {
    if n_parties < 3 {
        return Err(Error::TooFewParties(n_parties));
    }
    let m = n_parties * (n_parties - 1) / 2;
    if counts.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            got: counts.len(),
        });
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyBlock(0));
    }
    let nf = n_parties as f64;
    let mut row_sums = vec![0.0; n_parties];
    let mut k = 0;
    for i in 0..n_parties {
        for j in i + 1..n_parties {
            let u = counts[k] as f64 / n as f64;
            row_sums[i] += u;
            row_sums[j] += u;
            k += 1;
        }
    }
    let p_hat: Vec<f64> = row_sums
        .iter()
        .map(|s| (nf - 1.0) / (nf - 2.0) * s - 1.0 / (nf - 2.0))
        .collect();
    let (point, source) = match at {
        CovarianceAt::PlugIn => (p_hat.clone(), CovarianceSource::PlugIn),
        CovarianceAt::Known(p) => {
            if p.len() != n_parties {
                return Err(Error::LengthMismatch {
                    expected: n_parties,
                    got: p.len(),
                });
            }
            (p.probs().to_vec(), CovarianceSource::Known)
        }
    };
    let cov = pair_covariance_at(&point, n as f64);
    Ok(EstimateResult::assemble(p_hat, cov, n, DesignKind::Pair, source))
}

/// Infer `N` from the number of pair counts and estimate.
pub fn pair_estimate_auto(counts: &[u64]) -> Result<EstimateResult> {
    let n_parties = pair_count_to_parties(counts.len()).ok_or(Error::LengthMismatch {
        expected: 3,
        got: counts.len(),
    })?;
    pair_estimate(n_parties, counts)
}

/// Closed-form pair covariance at an arbitrary real vector.
pub(crate) fn pair_covariance_at(p: &[f64], n: f64) -> DMatrix<f64> {
    let big_n = p.len() as f64;
    DMatrix::from_fn(p.len(), p.len(), |i, j| {
        // evaluate with ordered indices so the matrix is exactly symmetric
        let (i, j) = (i.min(j), i.max(j));
        if i == j {
            ((1.0 + (big_n - 3.0) * p[i]) / (big_n - 2.0) - p[i] * p[i]) / n
        } else {
            -((1.0 - p[i] - p[j]) / ((big_n - 2.0) * (big_n - 2.0)) + p[i] * p[j]) / n
        }
    })
}

/// Exact covariance of the pair estimator for `n` respondents.
pub fn pair_covariance(p: &Preferences, n: u64) -> Result<DMatrix<f64>> {
    if p.len() < 3 {
        return Err(Error::TooFewParties(p.len()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    Ok(pair_covariance_at(p.probs(), n as f64))
}

/// Per-respondent pair variance of `p_hat_i`: `p_i (1 - p_i) + (1 - p_i)/(N - 2)`.
pub fn pair_variance_per_sample(n_parties: usize, p_i: f64) -> f64 {
    p_i * (1.0 - p_i) + (1.0 - p_i) / (n_parties as f64 - 2.0)
}

/// Exact covariance of the list estimator with `allocations[l]` respondents
/// asked about list `l`.
pub fn list_covariance(design: &ListDesign, p: &Preferences, allocations: &[u64]) -> Result<DMatrix<f64>> {
    if allocations.len() != design.n_lists() {
        return Err(Error::LengthMismatch {
            expected: design.n_lists(),
            got: allocations.len(),
        });
    }
    if let Some(i) = allocations.iter().position(|&a| a == 0) {
        return Err(Error::EmptyBlock(i));
    }
    let n: u64 = allocations.iter().sum();
    let alphas: Vec<f64> = allocations.iter().map(|&a| a as f64 / n as f64).collect();
    Ok(design_covariance(design.design(), &alphas, p.probs())? / n as f64)
}

/// List covariance for a total of `n` respondents split exactly in the
/// design's weights (fractional allocations allowed).
pub fn list_covariance_weighted(design: &ListDesign, p: &Preferences, n: f64) -> Result<DMatrix<f64>> {
    Ok(design_covariance(design.design(), &design.weights(), p.probs())? / n)
}

/// Covariance of the limiting Gaussian of `sqrt(n)(p_hat - p)` for limit
/// block shares `limit_alphas`.
pub fn asymptotic_covariance(
    design: &SurveyDesign,
    p: &Preferences,
    limit_alphas: &[f64],
) -> Result<DMatrix<f64>> {
    if let Some((index, &value)) = limit_alphas.iter().enumerate().find(|(_, a)| !(**a > 0.0)) {
        return Err(Error::AlphaNotPositive { index, value });
    }
    let total: f64 = limit_alphas.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(Error::BadWeights(format!("limit weights sum to {total}, not 1")));
    }
    design_covariance(design, limit_alphas, p.probs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub half_width: f64,
    /// The interval reaches outside `[0, 1]`; it is not clipped.
    pub outside_unit: bool,
}

/// Wald intervals `p_i +/- z_{(1+level)/2} sqrt(cov_ii)`.
pub fn confidence_intervals(result: &EstimateResult, level: f64) -> Result<Vec<Interval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} outside (0, 1)")));
    }
    let z = normal_quantile((1.0 + level) / 2.0);
    Ok(result
        .p_hat
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let half_width = z * result.variance(i).max(0.0).sqrt();
            let (lower, upper) = (p - half_width, p + half_width);
            Interval {
                lower,
                upper,
                half_width,
                outside_unit: lower < 0.0 || upper > 1.0,
            }
        })
        .collect())
}

/// Euclidean projection onto the probability simplex.
///
/// Presentation only: the projected vector is biased and must not feed
/// variance or power calculations.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_balanced_list_design, build_pair_design};

    #[test]
    fn pair_uniform_counts() {
        let d = build_pair_design(3).unwrap();
        let r = estimate_general(d.design(), &ResponseCounts::single(vec![100, 100, 100])).unwrap();
        for v in &r.p_hat {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(r.method_tag, DesignKind::Pair);
    }

    #[test]
    fn pair_concentrated_gives_negative_entries() {
        let d = build_pair_design(4).unwrap();
        let counts = vec![100, 0, 0, 0, 0, 0];
        let r = estimate_general(d.design(), &ResponseCounts::single(counts.clone())).unwrap();
        let expect = [1.0, 1.0, -0.5, -0.5];
        for (a, b) in r.p_hat.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(r.negative_entries);
        assert!(r.possibly_indefinite);
        let closed = pair_estimate(4, &counts).unwrap();
        for (a, b) in closed.p_hat.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_closed_form_examples() {
        let r = pair_estimate(3, &[50, 50, 0]).unwrap();
        for (a, b) in r.p_hat.iter().zip([1.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let r = pair_estimate(10, &[7; 45]).unwrap();
        assert!(r.p_hat.iter().all(|v| (v - 0.1).abs() < 1e-12));
        assert!(matches!(pair_estimate(4, &[1, 2]), Err(Error::LengthMismatch { .. })));
        assert_eq!(pair_estimate_auto(&[7; 45]).unwrap().n_parties, 10);
        assert!(pair_estimate_auto(&[1; 7]).is_err());
    }

    #[test]
    fn list_uniform_fixed_point() {
        let d = build_balanced_list_design(4).unwrap();
        let counts = ResponseCounts::new(vec![vec![500, 500]; 3]);
        let r = estimate_general(d.design(), &counts).unwrap();
        assert!(r.p_hat.iter().all(|v| (v - 0.25).abs() < 1e-12));
        assert_eq!(r.method_tag, DesignKind::List);
    }

    #[test]
    fn empty_block_and_shape_errors() {
        let d = build_balanced_list_design(4).unwrap();
        let counts = ResponseCounts::new(vec![vec![5, 5], vec![0, 0], vec![3, 3]]);
        assert_eq!(estimate_general(d.design(), &counts).unwrap_err(), Error::EmptyBlock(1));
        let counts = ResponseCounts::new(vec![vec![5, 5]]);
        assert!(matches!(
            estimate_general(d.design(), &counts),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn pair_table_values() {
        let p = Preferences::uniform(10).unwrap();
        let c = pair_covariance(&p, 1).unwrap();
        assert!((c[(0, 0)] - 0.2025).abs() < 1e-12);
        assert!((c[(0, 1)] + 0.0225).abs() < 1e-12);
    }

    #[test]
    fn pair_variance_exceeds_binomial() {
        let p = Preferences::from_probs(vec![0.5, 0.3, 0.15, 0.05]).unwrap();
        let c = pair_covariance(&p, 1).unwrap();
        for i in 0..4 {
            let pi = p.get(i);
            let expect = pi * (1.0 - pi) + (1.0 - pi) / 2.0;
            assert!((c[(i, i)] - expect).abs() < 1e-15);
            assert!(c[(i, i)] > pi * (1.0 - pi));
            assert!((pair_variance_per_sample(4, pi) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn list_table_values() {
        let d = build_balanced_list_design(10).unwrap();
        let p = Preferences::uniform(10).unwrap();
        let c = list_covariance_weighted(&d, &p, 1.0).unwrap();
        for i in 0..10 {
            assert!((c[(i, i)] - 0.81).abs() < 1e-12);
            for j in 0..10 {
                if i != j {
                    assert!((c[(i, j)] + 0.09).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn asymptotic_matches_exact_for_matching_shares() {
        let d = build_balanced_list_design(4).unwrap();
        let p = Preferences::from_probs(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let exact = list_covariance(&d, &p, &[10, 10, 10]).unwrap();
        let asym = asymptotic_covariance(d.design(), &p, &[1.0 / 3.0; 3]).unwrap();
        assert!((exact * 30.0 - &asym).amax() < 1e-12);

        let u = Preferences::uniform(4).unwrap();
        let asym = asymptotic_covariance(d.design(), &u, &[1.0 / 3.0; 3]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 0.75 * 0.75 } else { -0.25 * 0.75 };
                assert!((asym[(i, j)] - e).abs() < 1e-12);
            }
        }
        assert!(matches!(
            asymptotic_covariance(d.design(), &u, &[0.5, 0.5, 0.0]),
            Err(Error::AlphaNotPositive { index: 2, .. })
        ));
    }

    #[test]
    fn pair_asymptotic_is_n_times_exact() {
        let d = build_pair_design(5).unwrap();
        let p = Preferences::from_probs(vec![0.3, 0.25, 0.2, 0.15, 0.1]).unwrap();
        let asym = asymptotic_covariance(d.design(), &p, &[1.0]).unwrap();
        let exact = pair_covariance(&p, 7).unwrap() * 7.0;
        assert!((asym - exact).amax() < 1e-12);
    }

    #[test]
    fn intervals() {
        let mut r = pair_estimate(3, &[10, 10, 10]).unwrap();
        r.cov = vec![0.0; 9];
        let ci = confidence_intervals(&r, 0.95).unwrap();
        assert_eq!(ci[0].lower, ci[0].upper);
        r.cov[0] = 1e-4;
        let ci = confidence_intervals(&r, 0.95).unwrap();
        assert!((ci[0].half_width - 0.0196).abs() < 1e-4);
        assert!((ci[0].half_width - 0.01 * 1.959_963_984_540_054).abs() < 1e-12);
        assert!(confidence_intervals(&r, 1.0).is_err());
    }

    #[test]
    fn known_covariance_option() {
        let d = build_pair_design(4).unwrap();
        let p = Preferences::from_probs(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let counts = ResponseCounts::single(vec![30, 20, 10, 15, 5, 20]);
        let r = estimate_general_with(d.design(), &counts, CovarianceAt::Known(&p)).unwrap();
        assert_eq!(r.covariance_at, CovarianceSource::Known);
        assert!(!r.possibly_indefinite);
        let expect = pair_covariance(&p, 100).unwrap();
        assert!((r.cov_matrix() - expect).amax() < 1e-14);
    }

    #[test]
    fn simplex_projection() {
        let v = project_to_simplex(&[1.0, 1.0, -0.5, -0.5]);
        assert_eq!(v, vec![0.5, 0.5, 0.0, 0.0]);
        let w = project_to_simplex(&[0.2, 0.3, 0.5]);
        assert!(w.iter().zip([0.2, 0.3, 0.5]).all(|(a, b)| (a - b).abs() < 1e-15));
    }
}
