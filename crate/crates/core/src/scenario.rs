//! Built-in preference profiles.

use crate::design::{build_balanced_list_design, build_pair_design, ListDesign, PairDesign, Preferences};
use crate::error::{Error, Result};

/// Swedish general election 2014, in ballot order.
pub const SWEDEN_2014: [(&str, f64); 10] = [
    ("SD", 0.129),
    ("S", 0.310),
    ("M", 0.233),
    ("MP", 0.061),
    ("C", 0.069),
    ("V", 0.057),
    ("FP", 0.054),
    ("KD", 0.046),
    ("FI", 0.031),
    ("O", 0.010),
];

pub const BUILTIN_NAMES: [&str; 2] = ["uniform10", "sweden2014"];

/// Total sample size shared between the anonymised and direct surveys in
/// the power examples.
pub const DEFAULT_TOTAL_N: u64 = 15_000;

/// A named preference profile together with the party treated as sensitive
/// and the total sample size used for power calculations.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub preferences: Preferences,
    /// 0-based.
    pub sensitive: usize,
    pub total_n: u64,
}

impl Scenario {
    pub fn builtin(name: &str) -> Result<Scenario> {
        let preferences = match name {
            "uniform10" => Preferences::new(
                (1..=10).map(|i| i.to_string()).collect(),
                vec![0.1; 10],
            )?,
            "sweden2014" => Preferences::new(
                SWEDEN_2014.iter().map(|(l, _)| l.to_string()).collect(),
                SWEDEN_2014.iter().map(|(_, p)| *p).collect(),
            )?,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown scenario '{other}', expected one of {}",
                    BUILTIN_NAMES.join(", ")
                )))
            }
        };
        Ok(Scenario {
            name: name.to_string(),
            preferences,
            sensitive: 0,
            total_n: DEFAULT_TOTAL_N,
        })
    }

    pub fn n_parties(&self) -> usize {
        self.preferences.len()
    }

    pub fn pair_design(&self) -> Result<PairDesign> {
        build_pair_design(self.n_parties())
    }

    pub fn list_design(&self) -> Result<ListDesign> {
        build_balanced_list_design(self.n_parties())
    }
}
