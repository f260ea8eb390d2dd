//! Synthetic surveys, Monte Carlo studies and exact enumeration of the
//! estimator's law for small instances.
//!
//! Every replication draws from its own ChaCha8 stream (`seed`, stream =
//! replication index), so results do not depend on the thread count.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::design::{pair_index, DesignKind, ListDesign, Preferences, SurveyDesign};
use crate::error::{Error, Result};
use crate::estimate::{design_covariance, LinearEstimator, ResponseCounts};
use crate::power::{binomial_variance, power_curve, Allocation, Method, PowerSpec};
use crate::stats::normal_quantile;

/// Upper bound on the number of outcomes [`exact_oracle`] will visit.
pub const MAX_EXACT_OUTCOMES: u128 = 1_000_000;

/// The RNG for replication `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    /// Uses rayon when the `parallel` feature is enabled, otherwise runs sequentially.
    #[default]
    Parallel,
    Sequential,
}

/// `f(0), f(1), .., f(count - 1)` in index order.
pub fn run_indexed<T, F>(count: u64, mode: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

fn clamp_prob(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Draws for the pair protocol: choice `T ~ p`, partner uniform on the others.
struct PairSampler {
    n_parties: usize,
    choice: WeightedIndex<f64>,
}

impl PairSampler {
    fn new(p: &Preferences) -> Result<Self> {
        if p.len() < 3 {
            return Err(Error::TooFewParties(p.len()));
        }
        let choice = WeightedIndex::new(p.probs().iter().copied())
            .map_err(|e| Error::InvalidPreferences(e.to_string()))?;
        Ok(PairSampler {
            n_parties: p.len(),
            choice,
        })
    }

    fn fill<R: Rng>(&self, rng: &mut R, n: u64, counts: &mut [u64]) {
        for _ in 0..n {
            let t = self.choice.sample(rng);
            let mut partner = rng.random_range(0..self.n_parties - 1);
            if partner >= t {
                partner += 1;
            }
            counts[pair_index(self.n_parties, t, partner)] += 1;
        }
    }
}

/// `n` pair-method respondents, simulated one at a time.
pub fn simulate_pair(p: &Preferences, n: u64, seed: u64) -> Result<ResponseCounts> {
    let sampler = PairSampler::new(p)?;
    let mut counts = vec![0; p.len() * (p.len() - 1) / 2];
    sampler.fill(&mut stream_rng(seed, 0), n, &mut counts);
    Ok(ResponseCounts::single(counts))
}

/// Yes/no counts for every list: `Binomial(n_l, p_l+)` yes answers.
pub fn simulate_list(
    design: &ListDesign,
    p: &Preferences,
    allocations: &[u64],
    seed: u64,
) -> Result<ResponseCounts> {
    check_allocations(design.design(), p, allocations)?;
    let mut rng = stream_rng(seed, 0);
    draw_list(design.design(), p, allocations, &mut rng)
}

fn draw_list<R: Rng>(
    design: &SurveyDesign,
    p: &Preferences,
    allocations: &[u64],
    rng: &mut R,
) -> Result<ResponseCounts> {
    let pv = p.as_vector();
    let blocks = design
        .blocks()
        .iter()
        .zip(allocations)
        .map(|(b, &n)| {
            let yes_prob = clamp_prob((b.matrix().row(0) * &pv)[0]);
            let yes = sample_binomial(rng, n, yes_prob)?;
            Ok(vec![yes, n - yes])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResponseCounts::new(blocks))
}

fn sample_binomial<R: Rng>(rng: &mut R, n: u64, prob: f64) -> Result<u64> {
    if n == 0 {
        return Ok(0);
    }
    let dist = Binomial::new(n, prob).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Multinomial draw through sequential conditional binomials.
fn sample_multinomial<R: Rng>(rng: &mut R, n: u64, probs: &[f64]) -> Result<Vec<u64>> {
    let mut out = vec![0; probs.len()];
    let mut left = n;
    let mut mass_left = 1.0;
    for (k, &q) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == probs.len() {
            out[k] = left;
            break;
        }
        let cond = if mass_left > 0.0 { clamp_prob(q / mass_left) } else { 0.0 };
        let x = sample_binomial(rng, left, cond)?;
        out[k] = x;
        left -= x;
        mass_left -= q;
    }
    Ok(out)
}

fn check_allocations(design: &SurveyDesign, p: &Preferences, allocations: &[u64]) -> Result<()> {
    if p.len() != design.n_parties() {
        return Err(Error::LengthMismatch {
            expected: design.n_parties(),
            got: p.len(),
        });
    }
    if allocations.len() != design.blocks().len() {
        return Err(Error::LengthMismatch {
            expected: design.blocks().len(),
            got: allocations.len(),
        });
    }
    Ok(())
}

/// Counts for any design: per-respondent for the pair design, block
/// multinomials otherwise.
pub fn simulate_design<R: Rng>(
    design: &SurveyDesign,
    p: &Preferences,
    allocations: &[u64],
    rng: &mut R,
) -> Result<ResponseCounts> {
    check_allocations(design, p, allocations)?;
    match design.kind() {
        DesignKind::Pair => {
            let sampler = PairSampler::new(p)?;
            let mut counts = vec![0; design.total_responses()];
            sampler.fill(rng, allocations[0], &mut counts);
            Ok(ResponseCounts::single(counts))
        }
        DesignKind::List => draw_list(design, p, allocations, rng),
        DesignKind::General => {
            let pv = p.as_vector();
            let blocks = design
                .blocks()
                .iter()
                .zip(allocations)
                .map(|(b, &n)| {
                    let u: Vec<f64> = (b.matrix() * &pv).iter().copied().collect();
                    sample_multinomial(rng, n, &u)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ResponseCounts::new(blocks))
        }
    }
}

/// Split `n` respondents over blocks in proportion to `weights`, largest
/// remainder first (ties to the earlier block).
pub fn allocate(n: u64, weights: &[f64]) -> Vec<u64> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut out: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take((n - assigned.min(n)) as usize) {
        out[i] += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub p_true: Preferences,
    pub design: SurveyDesign,
    pub allocations: Vec<u64>,
    pub replications: u64,
    pub seed: u64,
    pub execution: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub replications: u64,
    pub mean: Vec<f64>,
    /// Standard error of each empirical mean; `None` when `R < 2`.
    pub mean_se: Option<Vec<f64>>,
    pub max_abs_mean_error: f64,
    /// `max_i |mean_i - p_i| / se_i`.
    pub max_mean_error_in_se: Option<f64>,
    /// Empirical covariance, row-major; `None` when `R < 2`.
    pub empirical_cov: Option<Vec<f64>>,
    /// Standard error of each empirical covariance entry, row-major.
    pub cov_se: Option<Vec<f64>>,
    pub analytic_cov: Vec<f64>,
    /// `max_ij |empirical - analytic| / se`.
    pub max_cov_deviation_in_se: Option<f64>,
    pub covariance_defined: bool,
}

/// Per-replication estimates, in replication order.
pub fn replicate_estimates(config: &SimulationConfig) -> Result<Vec<Vec<f64>>> {
    if config.replications == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    check_allocations(&config.design, &config.p_true, &config.allocations)?;
    let estimator = LinearEstimator::new(&config.design, &config.allocations)?;
    let results = run_indexed(config.replications, config.execution, |r| {
        let mut rng = stream_rng(config.seed, r);
        simulate_design(&config.design, &config.p_true, &config.allocations, &mut rng)
            .map(|c| estimator.apply(&c.stacked()))
    });
    results.into_iter().collect()
}

pub fn monte_carlo_study(config: &SimulationConfig) -> Result<StudySummary> {
    let estimates = replicate_estimates(config)?;
    let estimator = LinearEstimator::new(&config.design, &config.allocations)?;
    let analytic = design_covariance(&config.design, estimator.alphas(), config.p_true.probs())?
        / estimator.n() as f64;
    Ok(summarize(&estimates, config.p_true.probs(), &analytic))
}

/// Aggregate replications in a fixed order.
pub fn summarize(estimates: &[Vec<f64>], truth: &[f64], analytic: &DMatrix<f64>) -> StudySummary {
    let r = estimates.len();
    let n = truth.len();
    let rf = r as f64;
    let mut mean = vec![0.0; n];
    for e in estimates {
        for (m, x) in mean.iter_mut().zip(e) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rf);
    let max_abs_mean_error = mean
        .iter()
        .zip(truth)
        .map(|(m, t)| (m - t).abs())
        .fold(0.0, f64::max);
    let analytic_cov: Vec<f64> = (0..n * n).map(|k| analytic[(k / n, k % n)]).collect();

    if r < 2 {
        return StudySummary {
            replications: r as u64,
            mean,
            mean_se: None,
            max_abs_mean_error,
            max_mean_error_in_se: None,
            empirical_cov: None,
            cov_se: None,
            analytic_cov,
            max_cov_deviation_in_se: None,
            covariance_defined: false,
        };
    }

    let mut sum = vec![0.0; n * n];
    let mut sum_sq = vec![0.0; n * n];
    let mut dev = vec![0.0; n];
    for e in estimates {
        for i in 0..n {
            dev[i] = e[i] - mean[i];
        }
        for i in 0..n {
            for j in i..n {
                let d = dev[i] * dev[j];
                sum[i * n + j] += d;
                sum_sq[i * n + j] += d * d;
            }
        }
    }
    let mut cov = vec![0.0; n * n];
    let mut cov_se = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k = i * n + j;
            let m = sum[k] / rf;
            let var_d = (sum_sq[k] / rf - m * m).max(0.0) * rf / (rf - 1.0);
            let c = sum[k] / (rf - 1.0);
            let se = (var_d / rf).sqrt();
            cov[k] = c;
            cov[j * n + i] = c;
            cov_se[k] = se;
            cov_se[j * n + i] = se;
        }
    }
    let ratio = |diff: f64, se: f64| {
        if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let mean_se: Vec<f64> = (0..n).map(|i| (cov[i * n + i] / rf).sqrt()).collect();
    let max_mean_error_in_se = (0..n)
        .map(|i| ratio((mean[i] - truth[i]).abs(), mean_se[i]))
        .fold(0.0, f64::max);
    let max_cov_deviation_in_se = (0..n * n)
        .map(|k| ratio((cov[k] - analytic_cov[k]).abs(), cov_se[k]))
        .fold(0.0, f64::max);
    StudySummary {
        replications: r as u64,
        mean,
        mean_se: Some(mean_se),
        max_abs_mean_error,
        max_mean_error_in_se: Some(max_mean_error_in_se),
        empirical_cov: Some(cov),
        cov_se: Some(cov_se),
        analytic_cov,
        max_cov_deviation_in_se: Some(max_cov_deviation_in_se),
        covariance_defined: true,
    }
}

/// Two-survey bias-detection experiment: an anonymised survey of
/// `n_method` respondents next to a direct survey of `n_binomial`
/// respondents whose answers under-report the party by `bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerExperiment {
    pub p_true: Preferences,
    pub party: usize,
    pub method: Method,
    pub allocation: Allocation,
    pub bias: f64,
    pub gamma: f64,
    pub replications: u64,
    pub seed: u64,
    pub execution: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerExperimentSummary {
    pub replications: u64,
    pub rejections: u64,
    pub rejection_rate: f64,
    /// Binomial standard error of the rejection rate at the analytic power.
    pub rate_se: f64,
    pub analytic_power: f64,
}

/// Simulate the experiment. The statistic is standardised with the
/// variances at the true `p` under the null, i.e. `T = (p_hat - p_tilde) / s_0`.
pub fn power_experiment(exp: &PowerExperiment) -> Result<PowerExperimentSummary> {
    let p_i = exp.p_true.get(exp.party);
    let setup = PowerSpec {
        p_true: exp.p_true.clone(),
        party: exp.party,
        bias_grid: vec![exp.bias],
        allocation: exp.allocation,
        gamma: exp.gamma,
        method: exp.method.clone(),
    };
    let analytic_power = power_curve(&setup)?.power[0];

    let (design, block_alloc) = match &exp.method {
        Method::Pair => {
            let d = crate::design::build_pair_design(exp.p_true.len())?;
            (d.design().clone(), vec![exp.allocation.n_method])
        }
        Method::List(d) => (
            d.design().clone(),
            allocate(exp.allocation.n_method, &d.weights()),
        ),
        Method::Binomial => unreachable!("rejected by power_curve"),
    };
    let estimator = LinearEstimator::new(&design, &block_alloc)?;
    let var_method = design_covariance(&design, estimator.alphas(), exp.p_true.probs())?
        [(exp.party, exp.party)]
        / exp.allocation.n_method as f64;
    let n_b = exp.allocation.n_binomial;
    let s0 = (var_method + binomial_variance(p_i) / n_b as f64).sqrt();
    let z = normal_quantile(1.0 - exp.gamma);
    let reported = clamp_prob(p_i - exp.bias);

    let flags = run_indexed(exp.replications, exp.execution, |r| -> Result<bool> {
        let mut rng = stream_rng(exp.seed, r);
        let counts = simulate_design(&design, &exp.p_true, &block_alloc, &mut rng)?;
        let p_hat = estimator.apply(&counts.stacked())[exp.party];
        let p_tilde = sample_binomial(&mut rng, n_b, reported)? as f64 / n_b as f64;
        Ok((p_hat - p_tilde) / s0 > z)
    });
    let rejections = flags.into_iter().collect::<Result<Vec<_>>>()?.iter().filter(|&&f| f).count() as u64;
    let rf = exp.replications as f64;
    Ok(PowerExperimentSummary {
        replications: exp.replications,
        rejections,
        rejection_rate: rejections as f64 / rf,
        rate_se: (analytic_power * (1.0 - analytic_power) / rf).sqrt(),
        analytic_power,
    })
}

/// Exact first two moments of `p_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactLaw {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub outcomes: u128,
    /// Total probability visited; 1 up to rounding.
    pub total_probability: f64,
}

fn binom_u128(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// All compositions of `n` into `k` parts, lexicographic.
fn compositions(n: u64, k: usize) -> Vec<Vec<u64>> {
    fn rec(n: u64, k: usize, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if k == 1 {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for x in 0..=n {
            prefix.push(x);
            rec(n - x, k - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

fn ln_multinomial_pmf(x: &[u64], u: &[f64]) -> Option<f64> {
    let n: u64 = x.iter().sum();
    let mut acc = ln_factorial(n);
    for (&xi, &ui) in x.iter().zip(u) {
        if xi > 0 {
            if ui <= 0.0 {
                return None;
            }
            acc += xi as f64 * ui.ln() - ln_factorial(xi);
        }
    }
    Some(acc)
}

/// Enumerate every outcome of the block multinomials and return the exact
/// mean and covariance of `p_hat`.
pub fn exact_oracle(design: &SurveyDesign, p: &Preferences, allocations: &[u64]) -> Result<ExactLaw> {
    check_allocations(design, p, allocations)?;
    let mut outcomes: u128 = 1;
    for (b, &n) in design.blocks().iter().zip(allocations) {
        let k = b.n_responses() as u128;
        let c = binom_u128(n as u128 + k - 1, k - 1).ok_or(Error::TooLarge(u128::MAX))?;
        outcomes = outcomes.saturating_mul(c);
        if outcomes > MAX_EXACT_OUTCOMES {
            return Err(Error::TooLarge(outcomes));
        }
    }
    let estimator = LinearEstimator::new(design, allocations)?;
    let np = design.n_parties();
    let pv = p.as_vector();

    // per block: (probability, contribution to p_hat) for each outcome
    let mut offset = 0;
    let mut per_block: Vec<Vec<(f64, DVector<f64>)>> = Vec::new();
    for (b, &n) in design.blocks().iter().zip(allocations) {
        let k = b.n_responses();
        let u: Vec<f64> = (b.matrix() * &pv).iter().copied().collect();
        let mut list = Vec::new();
        for x in compositions(n, k) {
            let Some(lp) = ln_multinomial_pmf(&x, &u) else { continue };
            let mut stacked = DVector::zeros(design.total_responses());
            for (i, &xi) in x.iter().enumerate() {
                stacked[offset + i] = xi as f64;
            }
            list.push((lp.exp(), estimator.apply_f64(&stacked)));
        }
        per_block.push(list);
        offset += k;
    }

    let visit = |f: &mut dyn FnMut(f64, &DVector<f64>)| {
        let mut idx = vec![0usize; per_block.len()];
        loop {
            let mut prob = 1.0;
            let mut est = DVector::zeros(np);
            for (b, &i) in idx.iter().enumerate() {
                prob *= per_block[b][i].0;
                est += &per_block[b][i].1;
            }
            f(prob, &est);
            let mut b = per_block.len();
            loop {
                if b == 0 {
                    return;
                }
                b -= 1;
                idx[b] += 1;
                if idx[b] < per_block[b].len() {
                    break;
                }
                idx[b] = 0;
            }
        }
    };

    let mut total_probability = 0.0;
    let mut mean = DVector::zeros(np);
    visit(&mut |prob, est| {
        total_probability += prob;
        mean += est * prob;
    });
    let mut cov = DMatrix::zeros(np, np);
    visit(&mut |prob, est| {
        let d = est - &mean;
        cov += &d * d.transpose() * prob;
    });
    Ok(ExactLaw {
        mean: mean.iter().copied().collect(),
        cov,
        outcomes,
        total_probability,
    })
}
