//! Response-channel matrices for the pair method and list designs.
//!
//! A survey design is a stack of blocks `(A_i, alpha_i)`. Each `A_i` is a
//! `K_i x N` column-stochastic matrix mapping the preference vector `p` to the
//! response probabilities `u_i = A_i p` of respondents assigned to block `i`,
//! and `alpha_i` is the share of the sample that block receives. All party
//! indices in this module are 0-based; the 1-based convention lives in the
//! I/O layer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Absolute tolerance for probability sums and column sums.
pub const SUM_TOL: f64 = 1e-12;

/// Distribution of true intent over `N` labelled parties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPreferences")]
pub struct Preferences {
    labels: Vec<String>,
    p: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPreferences {
    labels: Vec<String>,
    p: Vec<f64>,
}

impl TryFrom<RawPreferences> for Preferences {
    type Error = Error;
    fn try_from(raw: RawPreferences) -> Result<Self> {
        Preferences::new(raw.labels, raw.p)
    }
}

impl Preferences {
    pub fn new(labels: Vec<String>, p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::InvalidPreferences(format!(
                "need at least 2 parties, got {}",
                p.len()
            )));
        }
        if labels.len() != p.len() {
            return Err(Error::InvalidPreferences(format!(
                "{} labels for {} probabilities",
                labels.len(),
                p.len()
            )));
        }
        if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidPreferences(format!(
                "p[{}] = {} is not a probability",
                i + 1,
                v
            )));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidPreferences(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Preferences { labels, p })
    }

    /// Preferences labelled `1..=N`.
    pub fn from_probs(p: Vec<f64>) -> Result<Self> {
        let labels = (1..=p.len()).map(|i| i.to_string()).collect();
        Preferences::new(labels, p)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Preferences::from_probs(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, party: usize) -> f64 {
        self.p[party]
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.p)
    }

    pub fn check_party(&self, party: usize) -> Result<()> {
        if party < self.len() {
            Ok(())
        } else {
            Err(Error::PartyOutOfRange {
                index: party,
                n_parties: self.len(),
            })
        }
    }
}

/// One block `(A_i, alpha_i)` of a design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlock {
    matrix: DMatrix<f64>,
    weight: f64,
    label: String,
}

impl DesignBlock {
    pub fn new(matrix: DMatrix<f64>, weight: f64, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if matrix.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidBlock {
                index: 0,
                reason: format!("block '{label}' has a negative or non-finite entry"),
            });
        }
        for (j, col) in matrix.column_iter().enumerate() {
            let s: f64 = col.iter().sum();
            if (s - 1.0).abs() > SUM_TOL {
                return Err(Error::InvalidBlock {
                    index: 0,
                    reason: format!("block '{label}' column {} sums to {s}", j + 1),
                });
            }
        }
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(Error::BadWeights(format!(
                "block '{label}' weight {weight} outside (0, 1]"
            )));
        }
        Ok(DesignBlock {
            matrix,
            weight,
            label,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Number of response categories `K_i`.
    pub fn n_responses(&self) -> usize {
        self.matrix.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Pair,
    List,
    General,
}

/// A validated, identifiable stack of design blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyDesign {
    blocks: Vec<DesignBlock>,
    n_parties: usize,
    kind: DesignKind,
}

/// Output of [`SurveyDesign::stack`].
#[derive(Debug, Clone)]
pub struct Stacked {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
}

impl SurveyDesign {
    pub fn new(blocks: Vec<DesignBlock>) -> Result<Self> {
        Self::with_kind(blocks, DesignKind::General)
    }

    fn with_kind(blocks: Vec<DesignBlock>, kind: DesignKind) -> Result<Self> {
        let n_parties = blocks
            .first()
            .map(|b| b.matrix.ncols())
            .ok_or_else(|| Error::InvalidArgument("design has no blocks".into()))?;
        for (index, b) in blocks.iter().enumerate() {
            if b.matrix.ncols() != n_parties {
                return Err(Error::InvalidBlock {
                    index,
                    reason: format!("{} columns, expected {n_parties}", b.matrix.ncols()),
                });
            }
        }
        let total: f64 = blocks.iter().map(|b| b.weight).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::BadWeights(format!("weights sum to {total}, not 1")));
        }
        let design = SurveyDesign {
            blocks,
            n_parties,
            kind,
        };
        let (rank, direction) = linalg::numerical_rank(&design.stacked());
        if rank < n_parties {
            return Err(Error::RankDeficient {
                rank,
                n_parties,
                direction,
            });
        }
        Ok(design)
    }

    pub fn blocks(&self) -> &[DesignBlock] {
        &self.blocks
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn weights(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.weight).collect()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(DesignBlock::n_responses).collect()
    }

    pub fn total_responses(&self) -> usize {
        self.blocks.iter().map(DesignBlock::n_responses).sum()
    }

    /// Stacked matrix with rows `alpha_i A_i` using the design weights.
    pub fn stacked(&self) -> DMatrix<f64> {
        self.stacked_with(&self.weights())
    }

    /// Stacked matrix with rows `alpha_i A_i` for arbitrary block weights.
    pub fn stacked_with(&self, alphas: &[f64]) -> DMatrix<f64> {
        let rows = self.total_responses();
        let mut out = DMatrix::zeros(rows, self.n_parties);
        let mut r = 0;
        for (b, &a) in self.blocks.iter().zip(alphas) {
            let k = b.n_responses();
            out.rows_mut(r, k).copy_from(&(&b.matrix * a));
            r += k;
        }
        out
    }

    pub fn stack(&self) -> Stacked {
        let matrix = self.stacked();
        let (rank, _) = linalg::numerical_rank(&matrix);
        Stacked { matrix, rank }
    }

    /// The channel `p_{R|T}`: rows index responses across all blocks,
    /// columns index true intent. Equal to the stacked matrix.
    pub fn channel(&self) -> DMatrix<f64> {
        self.stacked()
    }
}

/// The pair method: respondents report their choice together with a
/// uniformly chosen other party, unordered.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDesign {
    pairs: Vec<(usize, usize)>,
    design: SurveyDesign,
}

/// All unordered pairs `{i, j}`, `i < j`, in lexicographic order.
pub fn lexicographic_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

/// Position of the unordered pair `{i, j}` in lexicographic order.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

pub fn build_pair_design(n_parties: usize) -> Result<PairDesign> {
    if n_parties < 3 {
        return Err(Error::TooFewParties(n_parties));
    }
    let pairs = lexicographic_pairs(n_parties);
    let scale = 1.0 / (n_parties - 1) as f64;
    let mut a = DMatrix::zeros(pairs.len(), n_parties);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        a[(k, i)] = scale;
        a[(k, j)] = scale;
    }
    let block = DesignBlock::new(a, 1.0, "pairs")?;
    let design = SurveyDesign::with_kind(vec![block], DesignKind::Pair)?;
    Ok(PairDesign { pairs, design })
}

impl PairDesign {
    pub fn n_parties(&self) -> usize {
        self.design.n_parties
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn design(&self) -> &SurveyDesign {
        &self.design
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.design.blocks[0].matrix()
    }
}

/// The list method: each block asks whether the respondent's choice is on
/// the list `L+`; "no" means it is on the complement `L-`.
#[derive(Debug, Clone, PartialEq)]
pub struct ListDesign {
    lists: Vec<Vec<usize>>,
    design: SurveyDesign,
}

impl ListDesign {
    pub fn n_parties(&self) -> usize {
        self.design.n_parties
    }

    /// Canonical `L+` lists (sorted, always containing party 0).
    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }

    pub fn n_lists(&self) -> usize {
        self.lists.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.design.weights()
    }

    pub fn design(&self) -> &SurveyDesign {
        &self.design
    }

    /// Membership mask of `L+` for list `l`.
    pub fn membership(&self, l: usize) -> Vec<bool> {
        let mut mask = vec![false; self.n_parties()];
        for &k in &self.lists[l] {
            mask[k] = true;
        }
        mask
    }

    /// Complement list `L-` of list `l`.
    pub fn complement(&self, l: usize) -> Vec<usize> {
        let mask = self.membership(l);
        (0..self.n_parties()).filter(|&k| !mask[k]).collect()
    }

    /// `(p+, p-)` for every list.
    pub fn list_masses(&self, p: &[f64]) -> Vec<(f64, f64)> {
        (0..self.n_lists())
            .map(|l| {
                let mask = self.membership(l);
                let (mut plus, mut minus) = (0.0, 0.0);
                for (k, &pk) in p.iter().enumerate() {
                    if mask[k] {
                        plus += pk;
                    } else {
                        minus += pk;
                    }
                }
                (plus, minus)
            })
            .collect()
    }

    /// Re-canonicalise: a no-op for any constructed design.
    pub fn canonicalized(&self) -> Result<ListDesign> {
        build_custom_list_design(self.n_parties(), &self.lists, &self.weights())
    }
}

fn list_block(n_parties: usize, list: &[usize], weight: f64, label: String) -> Result<DesignBlock> {
    let mut a = DMatrix::zeros(2, n_parties);
    for k in 0..n_parties {
        a[(1, k)] = 1.0;
    }
    for &k in list {
        a[(0, k)] = 1.0;
        a[(1, k)] = 0.0;
    }
    DesignBlock::new(a, weight, label)
}

/// Build a list design from arbitrary subsets; lists not containing party 0
/// are replaced by their complement.
pub fn build_custom_list_design(
    n_parties: usize,
    lists: &[Vec<usize>],
    weights: &[f64],
) -> Result<ListDesign> {
    if n_parties < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 parties, got {n_parties}"
        )));
    }
    if lists.is_empty() {
        return Err(Error::InvalidArgument("no lists given".into()));
    }
    if weights.len() != lists.len() {
        return Err(Error::BadWeights(format!(
            "{} weights for {} lists",
            weights.len(),
            lists.len()
        )));
    }
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0)) {
        return Err(Error::BadWeights(format!("weight {} is {w}", i + 1)));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(Error::BadWeights(format!("weights sum to {total}, not 1")));
    }

    let mut canonical = Vec::with_capacity(lists.len());
    for (index, list) in lists.iter().enumerate() {
        let mut mask = vec![false; n_parties];
        for &k in list {
            if k >= n_parties {
                return Err(Error::InvalidList {
                    index,
                    reason: format!("party {} out of range", k + 1),
                });
            }
            if mask[k] {
                return Err(Error::InvalidList {
                    index,
                    reason: format!("party {} listed twice", k + 1),
                });
            }
            mask[k] = true;
        }
        let size = mask.iter().filter(|&&m| m).count();
        if size == 0 || size == n_parties {
            return Err(Error::InvalidList {
                index,
                reason: "list must be a nonempty proper subset".into(),
            });
        }
        let plus: Vec<usize> = (0..n_parties).filter(|&k| mask[k] == mask[0]).collect();
        canonical.push(plus);
    }

    let blocks = canonical
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(l, (list, &w))| list_block(n_parties, list, w, format!("L{}", l + 1)))
        .collect::<Result<Vec<_>>>()?;
    let design = SurveyDesign::with_kind(blocks, DesignKind::List)?;
    Ok(ListDesign {
        lists: canonical,
        design,
    })
}

/// All `C(N-1, N/2-1)` lists of size `N/2` containing party 0, equally weighted.
pub fn build_balanced_list_design(n_parties: usize) -> Result<ListDesign> {
    if !n_parties.is_multiple_of(2) || n_parties < 4 {
        return Err(Error::OddN(n_parties));
    }
    let half = n_parties / 2;
    let mut lists = Vec::new();
    let mut combo: Vec<usize> = (1..half).collect();
    loop {
        let mut list = Vec::with_capacity(half);
        list.push(0);
        list.extend_from_slice(&combo);
        lists.push(list);
        // next (half-1)-combination of {1, .., N-1} in lexicographic order
        let k = combo.len();
        let mut i = k;
        while i > 0 && combo[i - 1] == n_parties - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        combo[i - 1] += 1;
        for j in i..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
    let w = 1.0 / lists.len() as f64;
    let weights = vec![w; lists.len()];
    build_custom_list_design(n_parties, &lists, &weights)
}

/// Either of the two concrete protocols.
#[derive(Debug, Clone, PartialEq)]
pub enum Protocol {
    Pair(PairDesign),
    List(ListDesign),
}

impl Protocol {
    pub fn design(&self) -> &SurveyDesign {
        match self {
            Protocol::Pair(d) => d.design(),
            Protocol::List(d) => d.design(),
        }
    }

    pub fn n_parties(&self) -> usize {
        self.design().n_parties()
    }
}

/// On-disk design description with 1-based party indices.
///
/// `{"n_parties": N}` alone describes the pair design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub n_parties: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lists: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl DesignFile {
    pub fn into_protocol(self) -> Result<Protocol> {
        if let Some(labels) = &self.labels {
            if labels.len() != self.n_parties {
                return Err(Error::InvalidArgument(format!(
                    "{} labels for {} parties",
                    labels.len(),
                    self.n_parties
                )));
            }
        }
        match self.lists {
            None => build_pair_design(self.n_parties).map(Protocol::Pair),
            Some(lists) => {
                let zero_based = lists
                    .iter()
                    .enumerate()
                    .map(|(index, list)| {
                        list.iter()
                            .map(|&k| {
                                if k == 0 || k > self.n_parties {
                                    Err(Error::InvalidList {
                                        index,
                                        reason: format!("party index {k} outside 1..={}", self.n_parties),
                                    })
                                } else {
                                    Ok(k - 1)
                                }
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let weights = match self.weights {
                    Some(w) => w,
                    None => vec![1.0 / zero_based.len().max(1) as f64; zero_based.len()],
                };
                build_custom_list_design(self.n_parties, &zero_based, &weights).map(Protocol::List)
            }
        }
    }

    pub fn from_protocol(protocol: &Protocol, labels: Option<Vec<String>>) -> DesignFile {
        match protocol {
            Protocol::Pair(d) => DesignFile {
                n_parties: d.n_parties(),
                lists: None,
                weights: None,
                labels,
            },
            Protocol::List(d) => DesignFile {
                n_parties: d.n_parties(),
                lists: Some(
                    d.lists()
                        .iter()
                        .map(|l| l.iter().map(|k| k + 1).collect())
                        .collect(),
                ),
                weights: Some(d.weights()),
                labels,
            },
        }
    }
}
