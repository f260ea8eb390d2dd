//! Bias detection: an anonymised survey against a direct (binomial) survey.
//!
//! The direct survey estimates `p_i - b_i`; the anonymised one is unbiased.
//! The one-sided test of `b_i = 0` against `b_i > 0` has asymptotic power
//! `1 - Phi(z_{1-gamma} - b / sqrt(Var_method / n_method + Var_binom / n_binomial))`.

use serde::{Deserialize, Serialize};

use crate::design::{ListDesign, Preferences};
use crate::error::{Error, Result};
use crate::estimate::{design_covariance, pair_variance_per_sample};
use crate::stats::{normal_cdf, normal_quantile};

/// Relative slack when comparing a computed standard deviation to a target,
/// so that e.g. `sqrt(0.81 / 8100) <= 0.01` holds despite rounding.
const SD_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Pair,
    List(ListDesign),
    /// The direct survey.
    Binomial,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Pair => "pair",
            Method::List(_) => "list",
            Method::Binomial => "binomial",
        }
    }
}

/// Variance of a single respondent's contribution, i.e. `n * Var[p_hat_party]`.
///
/// List designs use their own weights as the block shares.
pub fn per_sample_variance(method: &Method, p: &Preferences, party: usize) -> Result<f64> {
    p.check_party(party)?;
    match method {
        Method::Pair => {
            if p.len() < 3 {
                return Err(Error::TooFewParties(p.len()));
            }
            Ok(pair_variance_per_sample(p.len(), p.get(party)))
        }
        Method::List(design) => {
            if design.n_parties() != p.len() {
                return Err(Error::LengthMismatch {
                    expected: design.n_parties(),
                    got: p.len(),
                });
            }
            let cov = design_covariance(design.design(), &design.weights(), p.probs())?;
            Ok(cov[(party, party)])
        }
        Method::Binomial => Ok(binomial_variance(p.get(party))),
    }
}

pub fn binomial_variance(p_i: f64) -> f64 {
    p_i * (1.0 - p_i)
}

/// Split of the total sample between the anonymised and the direct survey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub n_method: u64,
    pub n_binomial: u64,
}

impl Allocation {
    pub fn total(&self) -> u64 {
        self.n_method + self.n_binomial
    }
}

/// `n_method = n sqrt(V_m) / (sqrt(V_m) + sqrt(V_b))`, rounded to the
/// nearest integer; the rest goes to the direct survey.
pub fn optimal_allocation(n: u64, var_method: f64, var_binomial: f64) -> Result<Allocation> {
    if !(var_method > 0.0 && var_binomial > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "variances must be positive, got {var_method} and {var_binomial}"
        )));
    }
    let (sm, sb) = (var_method.sqrt(), var_binomial.sqrt());
    let n_method = ((n as f64) * sm / (sm + sb)).round() as u64;
    let n_method = n_method.min(n);
    Ok(Allocation {
        n_method,
        n_binomial: n - n_method,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpec {
    pub p_true: Preferences,
    pub party: usize,
    /// Bias values `b_i`, in proportion units, each within `[0, p_i]`.
    pub bias_grid: Vec<f64>,
    pub allocation: Allocation,
    pub gamma: f64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub bias: Vec<f64>,
    pub power: Vec<f64>,
    /// Denominator `sqrt(Var_method/n_method + Var_binom/n_binomial)` per grid point.
    pub sd: Vec<f64>,
    pub allocation: Allocation,
    pub gamma: f64,
}

fn validate(setup: &PowerSpec) -> Result<(f64, f64)> {
    setup.p_true.check_party(setup.party)?;
    if !(setup.gamma > 0.0 && setup.gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma {} outside (0, 1)", setup.gamma)));
    }
    if setup.allocation.n_method == 0 || setup.allocation.n_binomial == 0 {
        return Err(Error::InvalidArgument(
            "both surveys need at least one respondent".into(),
        ));
    }
    if matches!(setup.method, Method::Binomial) {
        return Err(Error::InvalidArgument(
            "the anonymised arm must be the pair or list method".into(),
        ));
    }
    let p_i = setup.p_true.get(setup.party);
    if let Some(b) = setup.bias_grid.iter().find(|&&b| !(0.0..=p_i).contains(&b)) {
        return Err(Error::InvalidArgument(format!("bias {b} outside [0, {p_i}]")));
    }
    let var_method = per_sample_variance(&setup.method, &setup.p_true, setup.party)?;
    Ok((p_i, var_method))
}

fn denominator(var_method: f64, p_i: f64, b: f64, alloc: Allocation) -> f64 {
    (var_method / alloc.n_method as f64 + binomial_variance(p_i - b) / alloc.n_binomial as f64).sqrt()
}

/// Asymptotic power at every bias in the grid.
pub fn power_curve(setup: &PowerSpec) -> Result<PowerResult> {
    let (p_i, var_method) = validate(setup)?;
    let z = normal_quantile(1.0 - setup.gamma);
    let mut power = Vec::with_capacity(setup.bias_grid.len());
    let mut sd = Vec::with_capacity(setup.bias_grid.len());
    for &b in &setup.bias_grid {
        let s = denominator(var_method, p_i, b, setup.allocation);
        if !(s > 0.0) {
            return Err(Error::ZeroVariance);
        }
        power.push(1.0 - normal_cdf(z - b / s));
        sd.push(s);
    }
    Ok(PowerResult {
        bias: setup.bias_grid.clone(),
        power,
        sd,
        allocation: setup.allocation,
        gamma: setup.gamma,
    })
}

/// Smallest bias reaching `target` power, by bisection on `[0, p_i]`.
///
/// Returns `None` when even `b = p_i` falls short.
pub fn detectable_bias(setup: &PowerSpec, target: f64) -> Result<Option<f64>> {
    let (p_i, _) = validate(setup)?;
    let power_at = |b: f64| -> Result<f64> {
        let s = PowerSpec {
            bias_grid: vec![b],
            ..setup.clone()
        };
        Ok(power_curve(&s)?.power[0])
    };
    if power_at(p_i)? < target {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, p_i);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if power_at(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(Some(hi))
}

/// Smallest `n` with `sqrt(Var[p_hat_party]) <= target_sd`.
pub fn sample_size_for_sd(target_sd: f64, method: &Method, p: &Preferences, party: usize) -> Result<u64> {
    if !(target_sd > 0.0) {
        return Err(Error::InvalidArgument(format!("target sd {target_sd} must be > 0")));
    }
    let v = per_sample_variance(method, p, party)?;
    let ok = |n: u64| (v / n as f64).sqrt() <= target_sd * (1.0 + SD_REL_TOL);
    let mut n = (v / (target_sd * target_sd)).ceil().max(1.0) as u64;
    while n > 1 && ok(n - 1) {
        n -= 1;
    }
    while !ok(n) {
        n += 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdPoint {
    pub n: u64,
    pub sd_method: f64,
    pub sd_pair: f64,
    pub sd_binomial: f64,
}

/// Standard deviation against sample size for the chosen method, the pair
/// method and the direct survey.
pub fn sd_curve(method: &Method, p: &Preferences, party: usize, ns: &[u64]) -> Result<Vec<SdPoint>> {
    let v_method = per_sample_variance(method, p, party)?;
    let v_pair = per_sample_variance(&Method::Pair, p, party)?;
    let v_binom = per_sample_variance(&Method::Binomial, p, party)?;
    ns.iter()
        .map(|&n| {
            if n == 0 {
                return Err(Error::InvalidArgument("sample sizes must be >= 1".into()));
            }
            let nf = n as f64;
            Ok(SdPoint {
                n,
                sd_method: (v_method / nf).sqrt(),
                sd_pair: (v_pair / nf).sqrt(),
                sd_binomial: (v_binom / nf).sqrt(),
            })
        })
        .collect()
}
