//! Entropy and jeopardy measures of respondent anonymity, in bits.

use serde::{Deserialize, Serialize};

use crate::design::{ListDesign, PairDesign, Preferences, SurveyDesign};
use crate::error::{Error, Result};

/// `-x log2 x` with `0 log 0 = 0`.
fn neg_xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        -x * x.log2()
    } else {
        0.0
    }
}

/// Shannon entropy `H[T]` in bits.
pub fn entropy(p: &Preferences) -> f64 {
    entropy_of(p.probs())
}

pub fn entropy_of(probs: &[f64]) -> f64 {
    probs.iter().map(|&x| neg_xlog2x(x)).sum()
}

/// One possible response and what it reveals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseDetail {
    pub label: String,
    pub probability: f64,
    /// `p_{T|R}(t | r)` for every party `t`.
    pub posterior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub party: usize,
    /// `-max_r log2 p_{T|R}(party | r)`.
    pub bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub h_t: f64,
    pub h_r: f64,
    pub i_tr: f64,
    pub h_t_given_r: f64,
    pub worst_case_retained: Option<WorstCase>,
    pub responses: Vec<ResponseDetail>,
}

fn check_worst_case_party(p: &Preferences, party: usize) -> Result<()> {
    p.check_party(party)?;
    if p.get(party) <= 0.0 {
        return Err(Error::ZeroProbabilityParty(party));
    }
    Ok(())
}

/// Privacy of the pair method.
///
/// `I[T;R] = -sum_{i != j} p_i/(N-1) log2(p_i + p_j)` and
/// `H[T|R] = -sum_{i != j} p_i/(N-1) log2(p_i / (p_i + p_j))`.
pub fn pair_privacy(p: &Preferences, worst_case_party: Option<usize>) -> Result<PrivacyReport> {
    let n = p.len();
    if n < 3 {
        return Err(Error::TooFewParties(n));
    }
    if let Some(s) = worst_case_party {
        check_worst_case_party(p, s)?;
    }
    let probs = p.probs();
    let scale = 1.0 / (n - 1) as f64;
    let (mut i_tr, mut h_cond) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j || probs[i] == 0.0 {
                continue;
            }
            let w = probs[i] * scale;
            let both = probs[i] + probs[j];
            i_tr -= w * both.log2();
            h_cond -= w * (probs[i] / both).log2();
        }
    }

    let mut responses = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let both = probs[i] + probs[j];
            let mut posterior = vec![0.0; n];
            if both > 0.0 {
                posterior[i] = probs[i] / both;
                posterior[j] = probs[j] / both;
            }
            responses.push(ResponseDetail {
                label: format!("{{{},{}}}", i + 1, j + 1),
                probability: both * scale,
                posterior,
            });
        }
    }
    let h_r = responses.iter().map(|r| neg_xlog2x(r.probability)).sum();

    let worst_case_retained = worst_case_party.map(|s| {
        let min_other = (0..n)
            .filter(|&j| j != s)
            .map(|j| probs[j])
            .fold(f64::INFINITY, f64::min);
        WorstCase {
            party: s,
            bits: -probs[s].log2() + (probs[s] + min_other).log2(),
        }
    });

    Ok(PrivacyReport {
        h_t: entropy(p),
        h_r,
        i_tr,
        h_t_given_r: h_cond,
        worst_case_retained,
        responses,
    })
}

/// Privacy of a list design.
///
/// `I[T;R] = -sum_l alpha_l (p+ log2 p+ + p- log2 p-)` and
/// `H[T|R] = H[T] - I[T;R]`.
pub fn list_privacy(
    p: &Preferences,
    design: &ListDesign,
    worst_case_party: Option<usize>,
) -> Result<PrivacyReport> {
    let n = design.n_parties();
    if p.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: p.len(),
        });
    }
    if let Some(s) = worst_case_party {
        check_worst_case_party(p, s)?;
    }
    let probs = p.probs();
    let weights = design.weights();
    let masses = design.list_masses(probs);

    let i_tr: f64 = masses
        .iter()
        .zip(&weights)
        .map(|(&(plus, minus), &a)| a * (neg_xlog2x(plus) + neg_xlog2x(minus)))
        .sum();
    let h_t = entropy(p);

    let mut responses = Vec::with_capacity(2 * design.n_lists());
    for (l, (&(plus, minus), &a)) in masses.iter().zip(&weights).enumerate() {
        let mask = design.membership(l);
        for (sign, on_list, mass) in [('+', true, plus), ('-', false, minus)] {
            let posterior = (0..n)
                .map(|k| {
                    if mask[k] == on_list && mass > 0.0 {
                        probs[k] / mass
                    } else {
                        0.0
                    }
                })
                .collect();
            responses.push(ResponseDetail {
                label: format!("L{}{}", l + 1, sign),
                probability: a * mass,
                posterior,
            });
        }
    }
    let h_r = responses.iter().map(|r| neg_xlog2x(r.probability)).sum();

    let worst_case_retained = worst_case_party.map(|s| {
        let min_other = (0..design.n_lists())
            .map(|l| {
                let mask = design.membership(l);
                let (plus, minus) = masses[l];
                // mass of the other parties on whichever side holds s
                if mask[s] {
                    plus - probs[s]
                } else {
                    minus - probs[s]
                }
            })
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        WorstCase {
            party: s,
            bits: -probs[s].log2() + (probs[s] + min_other).log2(),
        }
    });

    Ok(PrivacyReport {
        h_t,
        h_r,
        i_tr,
        h_t_given_r: h_t - i_tr,
        worst_case_retained,
        responses,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JeopardyReport {
    /// Sensitive parties, 0-based.
    pub sensitive_set: Vec<usize>,
    pub response_labels: Vec<String>,
    /// `J(r)` per response; `+inf` marks full disclosure.
    #[serde(with = "extended_f64_vec")]
    pub jeopardy: Vec<f64>,
    /// Maximum over responses with `J(r) > 0`.
    #[serde(with = "extended_f64")]
    pub max_j: f64,
    /// `J` averaged over all responses, zeros included.
    #[serde(with = "extended_f64")]
    pub mean_j: f64,
    /// `E_{R | T in S}[log2 J(R)]` in bits.
    #[serde(with = "extended_f64")]
    pub kl_j: f64,
    /// Indices of responses with infinite jeopardy.
    pub infinite_responses: Vec<usize>,
}

impl JeopardyReport {
    fn from_values(
        sensitive_set: Vec<usize>,
        response_labels: Vec<String>,
        jeopardy: Vec<f64>,
        kl_j: f64,
    ) -> Self {
        let infinite_responses = jeopardy
            .iter()
            .enumerate()
            .filter(|(_, j)| j.is_infinite())
            .map(|(i, _)| i)
            .collect();
        let max_j = jeopardy.iter().cloned().filter(|&j| j > 0.0).fold(0.0, f64::max);
        let mean_j = jeopardy.iter().sum::<f64>() / jeopardy.len() as f64;
        JeopardyReport {
            sensitive_set,
            response_labels,
            jeopardy,
            max_j,
            mean_j,
            kl_j,
            infinite_responses,
        }
    }
}

fn check_sensitive_party(p: &Preferences, s: usize) -> Result<()> {
    p.check_party(s)?;
    let ps = p.get(s);
    if ps >= 1.0 {
        return Err(Error::DegenerateSensitiveSet(ps));
    }
    Ok(())
}

/// `J({s, j}) = (1 - p_s) / p_j` for pairs containing `s`, zero otherwise.
pub fn pair_jeopardy(p: &Preferences, sensitive: usize) -> Result<JeopardyReport> {
    let n = p.len();
    if n < 3 {
        return Err(Error::TooFewParties(n));
    }
    check_sensitive_party(p, sensitive)?;
    let probs = p.probs();
    let rest = 1.0 - probs[sensitive];
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            labels.push(format!("{{{},{}}}", i + 1, j + 1));
            let other = if i == sensitive {
                Some(j)
            } else if j == sensitive {
                Some(i)
            } else {
                None
            };
            values.push(match other {
                None => 0.0,
                Some(o) if probs[o] == 0.0 => f64::INFINITY,
                Some(o) => rest / probs[o],
            });
        }
    }
    let kl = match pair_design_for(n).and_then(|d| kl_jeopardy(p, d.design(), &[sensitive])) {
        Ok(v) => v,
        Err(Error::AbsoluteContinuityViolation { .. }) => f64::INFINITY,
        Err(Error::DegenerateSensitiveSet(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok(JeopardyReport::from_values(vec![sensitive], labels, values, kl))
}

fn pair_design_for(n: usize) -> Result<PairDesign> {
    crate::design::build_pair_design(n)
}

/// `J(L) = (1 - p_s) / (p_L - p_s)` for the lists and complements holding
/// `s`, averaged over all `2L` responses.
pub fn list_jeopardy(p: &Preferences, design: &ListDesign, sensitive: usize) -> Result<JeopardyReport> {
    let n = design.n_parties();
    if p.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: p.len(),
        });
    }
    check_sensitive_party(p, sensitive)?;
    let probs = p.probs();
    let ps = probs[sensitive];
    let rest = 1.0 - ps;
    let masses = design.list_masses(probs);
    let mut labels = Vec::with_capacity(2 * design.n_lists());
    let mut values = Vec::with_capacity(2 * design.n_lists());
    for (l, &(plus, minus)) in masses.iter().enumerate() {
        let s_on_plus = design.membership(l)[sensitive];
        for (sign, holds_s, mass) in [('+', s_on_plus, plus), ('-', !s_on_plus, minus)] {
            labels.push(format!("L{}{}", l + 1, sign));
            let others = mass - ps;
            values.push(if !holds_s {
                0.0
            } else if others <= 0.0 {
                f64::INFINITY
            } else {
                rest / others
            });
        }
    }
    let kl = match kl_jeopardy(p, design.design(), &[sensitive]) {
        Ok(v) => v,
        Err(Error::AbsoluteContinuityViolation { .. }) => f64::INFINITY,
        Err(Error::DegenerateSensitiveSet(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok(JeopardyReport::from_values(vec![sensitive], labels, values, kl))
}

/// Response laws `p_{R | T in S}` and `p_{R | T in S^c}` induced by a design.
fn conditional_response_laws(
    p: &Preferences,
    design: &SurveyDesign,
    sensitive: &[usize],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = design.n_parties();
    if p.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: p.len(),
        });
    }
    if sensitive.is_empty() {
        return Err(Error::EmptySensitiveSet);
    }
    let mut in_s = vec![false; n];
    for &s in sensitive {
        p.check_party(s)?;
        in_s[s] = true;
    }
    let probs = p.probs();
    let mass_s: f64 = (0..n).filter(|&t| in_s[t]).map(|t| probs[t]).sum();
    let mass_c: f64 = (0..n).filter(|&t| !in_s[t]).map(|t| probs[t]).sum();
    if !(mass_s > 0.0 && mass_c > 0.0) {
        return Err(Error::DegenerateSensitiveSet(mass_s));
    }
    let channel = design.channel();
    let mut given_s = vec![0.0; channel.nrows()];
    let mut given_c = vec![0.0; channel.nrows()];
    for r in 0..channel.nrows() {
        for t in 0..n {
            let joint = channel[(r, t)] * probs[t];
            if in_s[t] {
                given_s[r] += joint;
            } else {
                given_c[r] += joint;
            }
        }
        given_s[r] /= mass_s;
        given_c[r] /= mass_c;
    }
    Ok((given_s, given_c))
}

/// Jeopardy `J(r) = p_{R|T}(r | S) / p_{R|T}(r | S^c)` for an arbitrary
/// sensitive set, computed from the design's channel.
pub fn channel_jeopardy(p: &Preferences, design: &SurveyDesign, sensitive: &[usize]) -> Result<Vec<f64>> {
    let (given_s, given_c) = conditional_response_laws(p, design, sensitive)?;
    Ok(given_s
        .iter()
        .zip(&given_c)
        .map(|(&a, &b)| if a == 0.0 { 0.0 } else if b == 0.0 { f64::INFINITY } else { a / b })
        .collect())
}

/// `D_KL(p_{R|T in S} || p_{R|T in S^c})` in bits.
pub fn kl_jeopardy(p: &Preferences, design: &SurveyDesign, sensitive: &[usize]) -> Result<f64> {
    let (given_s, given_c) = conditional_response_laws(p, design, sensitive)?;
    kl_bits(&given_s, &given_c)
}

fn kl_bits(f: &[f64], g: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (r, (&a, &b)) in f.iter().zip(g).enumerate() {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::AbsoluteContinuityViolation { response: r });
        }
        total += a * (a / b).log2();
    }
    Ok(total.max(0.0))
}

/// Serialise non-finite floats as strings so JSON stays valid.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn to_repr(v: f64) -> impl Serialize {
        if v.is_finite() {
            Repr::Num(v)
        } else if v.is_nan() {
            Repr::Text("nan".into())
        } else if v > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    pub fn from_repr<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad number '{other}'"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(d)
    }
}

mod extended_f64_vec {
    use serde::de::{SeqAccess, Visitor};
    use serde::ser::SerializeSeq;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&super::extended_f64::to_repr(*x))?;
        }
        seq.end()
    }

    struct Wrapped(f64);

    impl<'de> serde::Deserialize<'de> for Wrapped {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            super::extended_f64::from_repr(d).map(Wrapped)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Vec<f64>;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a list of numbers")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<f64>, A::Error> {
                let mut out = Vec::new();
                while let Some(Wrapped(x)) = seq.next_element()? {
                    out.push(x);
                }
                Ok(out)
            }
        }
        d.deserialize_seq(V)
    }
}
