//! Shared oracles for the integration tests.
#![allow(dead_code)]

use anonpoll::Preferences;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `joint[t][r] = P(T = t, R = r)`.
pub struct Joint {
    joint: Vec<Vec<f64>>,
}

impl Joint {
    pub fn pair(p: &[f64]) -> Joint {
        let n = p.len();
        let mut responses = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                responses.push((i, j));
            }
        }
        let joint = (0..n)
            .map(|t| {
                responses
                    .iter()
                    .map(|&(i, j)| if t == i || t == j { p[t] / (n - 1) as f64 } else { 0.0 })
                    .collect()
            })
            .collect();
        Joint { joint }
    }

    /// Respondent is shown list `l` with probability `w_l` and answers
    /// whether their choice is on it.
    pub fn lists(p: &[f64], lists: &[Vec<usize>], weights: &[f64]) -> Joint {
        let joint = (0..p.len())
            .map(|t| {
                let mut row = Vec::new();
                for (list, &w) in lists.iter().zip(weights) {
                    let on = list.contains(&t);
                    row.push(if on { w * p[t] } else { 0.0 });
                    row.push(if on { 0.0 } else { w * p[t] });
                }
                row
            })
            .collect();
        Joint { joint }
    }

    pub fn n_responses(&self) -> usize {
        self.joint[0].len()
    }

    pub fn p_r(&self) -> Vec<f64> {
        (0..self.n_responses())
            .map(|r| self.joint.iter().map(|row| row[r]).sum())
            .collect()
    }

    pub fn p_t(&self) -> Vec<f64> {
        self.joint.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn h(xs: impl IntoIterator<Item = f64>) -> f64 {
        xs.into_iter().filter(|&x| x > 0.0).map(|x| -x * x.log2()).sum()
    }

    pub fn h_t(&self) -> f64 {
        Self::h(self.p_t())
    }

    pub fn h_r(&self) -> f64 {
        Self::h(self.p_r())
    }

    pub fn h_tr(&self) -> f64 {
        Self::h(self.joint.iter().flatten().copied())
    }

    pub fn mutual_information(&self) -> f64 {
        self.h_t() + self.h_r() - self.h_tr()
    }

    pub fn h_t_given_r(&self) -> f64 {
        self.h_tr() - self.h_r()
    }

    /// `-max_r log2 P(T = s | R = r)` over possible responses.
    pub fn worst_case(&self, s: usize) -> f64 {
        let pr = self.p_r();
        let best = (0..self.n_responses())
            .filter(|&r| pr[r] > 0.0)
            .map(|r| self.joint[s][r] / pr[r])
            .fold(0.0, f64::max);
        -best.log2()
    }

    /// Posterior odds of `T = s` over prior odds, for every response.
    pub fn jeopardy(&self, s: usize) -> Vec<f64> {
        let pt = self.p_t();
        let prior = pt[s] / (1.0 - pt[s]);
        (0..self.n_responses())
            .map(|r| {
                let in_s = self.joint[s][r];
                let out: f64 = (0..pt.len()).filter(|&t| t != s).map(|t| self.joint[t][r]).sum();
                if in_s == 0.0 {
                    0.0
                } else if out == 0.0 {
                    f64::INFINITY
                } else {
                    (in_s / out) / prior
                }
            })
            .collect()
    }

    /// `D(P(R | T = s) || P(R | T != s))` in bits.
    pub fn kl(&self, s: usize) -> f64 {
        let pt = self.p_t();
        let mut total = 0.0;
        for r in 0..self.n_responses() {
            let f = self.joint[s][r] / pt[s];
            let g: f64 = (0..pt.len()).filter(|&t| t != s).map(|t| self.joint[t][r]).sum::<f64>() / (1.0 - pt[s]);
            if f > 0.0 {
                total += f * (f / g).log2();
            }
        }
        total
    }
}

pub fn random_p(rng: &mut ChaCha8Rng, n: usize) -> Preferences {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let head: f64 = p[..n - 1].iter().sum();
    p[n - 1] = 1.0 - head;
    Preferences::from_probs(p).unwrap()
}


/// A random p with rational entries `k_i / K`, `k_i` in 1..=12.
pub fn rational_p(rng: &mut ChaCha8Rng, n: usize) -> Preferences {
    let k: Vec<u32> = (0..n).map(|_| rng.random_range(1..=12)).collect();
    let total: u32 = k.iter().sum();
    Preferences::from_probs(k.iter().map(|&x| x as f64 / total as f64).collect()).unwrap()
}
