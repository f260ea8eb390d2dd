//! Summary tables of privacy and variance measures for a scenario.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimate::{design_covariance, pair_covariance};
use crate::privacy::{entropy, list_jeopardy, list_privacy, pair_jeopardy, pair_privacy};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Entropy,
    Jeopardy,
    Variance,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Entropy, Metric::Jeopardy, Metric::Variance];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Entropy => "entropy",
            Metric::Jeopardy => "jeopardy",
            Metric::Variance => "variance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub table: String,
    pub method: String,
    pub quantity: String,
    pub value: f64,
}

fn row(table: Metric, method: &str, quantity: &str, value: f64) -> TableRow {
    TableRow {
        table: table.name().to_string(),
        method: method.to_string(),
        quantity: quantity.to_string(),
        value,
    }
}

/// Rows for one metric. Privacy measures are taken w.r.t. the scenario's
/// sensitive party; the list method uses the balanced design. Variances are
/// per respondent (`n = 1`), for the sensitive party and the party after it.
pub fn metric_rows(scenario: &Scenario, metric: Metric) -> Result<Vec<TableRow>> {
    let p = &scenario.preferences;
    let s = scenario.sensitive;
    let list = scenario.list_design()?;
    let mut rows = Vec::new();
    match metric {
        Metric::Entropy => {
            let pair = pair_privacy(p, Some(s))?;
            let lst = list_privacy(p, &list, Some(s))?;
            rows.push(row(metric, "-", "H[T]", entropy(p)));
            for (name, rep) in [("pair", &pair), ("list", &lst)] {
                rows.push(row(metric, name, "I[T;R]", rep.i_tr));
                rows.push(row(metric, name, "H[T|R]", rep.h_t_given_r));
                rows.push(row(
                    metric,
                    name,
                    "worst_case_retained",
                    rep.worst_case_retained.as_ref().map_or(f64::NAN, |w| w.bits),
                ));
                rows.push(row(metric, name, "H[R]", rep.h_r));
            }
        }
        Metric::Jeopardy => {
            let pair = pair_jeopardy(p, s)?;
            let lst = list_jeopardy(p, &list, s)?;
            for (name, rep) in [("pair", &pair), ("list", &lst)] {
                rows.push(row(metric, name, "max_J", rep.max_j));
                rows.push(row(metric, name, "mean_J", rep.mean_j));
                rows.push(row(metric, name, "kl_J", rep.kl_j));
            }
        }
        Metric::Variance => {
            let j = (s + 1) % p.len();
            let pair = pair_covariance(p, 1)?;
            let lst = design_covariance(list.design(), &list.weights(), p.probs())?;
            let (ps, pj) = (p.get(s), p.get(j));
            for (name, var, cov) in [
                ("pair", pair[(s, s)], pair[(s, j)]),
                ("list", lst[(s, s)], lst[(s, j)]),
                ("baseline", ps * (1.0 - ps), -ps * pj),
            ] {
                rows.push(row(metric, name, "var", var));
                rows.push(row(metric, name, "cov", cov));
            }
        }
    }
    Ok(rows)
}

pub fn all_rows(scenario: &Scenario, metrics: &[Metric]) -> Result<Vec<TableRow>> {
    let mut out = Vec::new();
    for &m in metrics {
        out.extend(metric_rows(scenario, m)?);
    }
    Ok(out)
}

/// Round to `digits` significant digits for display.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(digits - 1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

/// Format with `digits` significant digits, keeping trailing zeros.
pub fn format_sig(x: f64, digits: i32) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    // Round half away from zero first; `{:.N}` alone ties to even (1.125 -> "1.12").
    let r = round_sig(x, digits);
    let magnitude = r.abs().log10().floor() as i32;
    let decimals = (digits - 1 - magnitude).max(0) as usize;
    format!("{r:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn find(rows: &[TableRow], method: &str, q: &str) -> f64 {
        rows.iter()
            .find(|r| r.method == method && r.quantity == q)
            .unwrap()
            .value
    }

    #[test]
    fn uniform_tables() {
        let sc = Scenario::builtin("uniform10").unwrap();
        let e = metric_rows(&sc, Metric::Entropy).unwrap();
        assert!((find(&e, "pair", "H[T|R]") - 1.0).abs() < 1e-12);
        assert!((find(&e, "list", "I[T;R]") - 1.0).abs() < 1e-12);
        let v = metric_rows(&sc, Metric::Variance).unwrap();
        assert!((find(&v, "pair", "var") - 0.2025).abs() < 1e-12);
        assert!((find(&v, "list", "cov") + 0.09).abs() < 1e-12);
        assert!((find(&v, "baseline", "var") - 0.09).abs() < 1e-12);
    }

    #[test]
    fn rounding() {
        assert_eq!(round_sig(87.0966, 3), 87.1);
        assert_eq!(round_sig(0.10771, 2), 0.11);
        assert_eq!(round_sig(0.0, 3), 0.0);
        assert_eq!(format_sig(2.7959, 3), "2.80");
        assert_eq!(format_sig(1.0, 3), "1.00");
        assert_eq!(format_sig(87.0966, 3), "87.1");
        assert_eq!(format_sig(0.9996, 3), "1.00");
        assert_eq!(format_sig(-0.0225, 3), "-0.0225");
        assert_eq!(format_sig(1.125, 3), "1.13");
    }
}
