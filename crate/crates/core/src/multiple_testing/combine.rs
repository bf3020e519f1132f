use serde::{Deserialize, Serialize};

use super::check_pvalues;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    /// `-2 * sum(ln p)`, chi-square with `2n` degrees of freedom under the null.
    pub statistic: f64,
    pub pvalue: f64,
}

/// Fisher's combination of independent P-values.
pub fn fisher(pvalues: &[f64]) -> Result<FisherResult> {
    if pvalues.is_empty() {
        return Err(Error::InvalidInput("Fisher's method needs at least one P-value".into()));
    }
    check_pvalues(pvalues)?;
    let statistic = -2.0 * pvalues.iter().map(|p| p.ln()).sum::<f64>() + 0.0;
    Ok(FisherResult {
        statistic,
        pvalue: fisher_survival(statistic, pvalues.len()),
    })
}

/// Chi-square survival with `2n` degrees of freedom at `statistic`, via the
/// regularized upper incomplete gamma `Q(n, statistic / 2)`.
pub fn fisher_survival(statistic: f64, n: usize) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    statrs::function::gamma::gamma_ur(n as f64, statistic / 2.0)
}

/// Benjamini–Hochberg step-up selection at FDR level `alpha`. Returns the
/// rejected input positions, ascending.
pub fn bh_select(pvalues: &[f64], alpha: f64) -> Result<Vec<usize>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }
    check_pvalues(pvalues)?;
    let n = pvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let k = order
        .iter()
        .enumerate()
        .rev()
        .find(|(rank, &i)| pvalues[i] <= (rank + 1) as f64 * alpha / n as f64)
        .map_or(0, |(rank, _)| rank + 1);
    let mut rejected = order[..k].to_vec();
    rejected.sort_unstable();
    Ok(rejected)
}

/// Simes combination `min_j n p_(j) / j` of ascending P-values. BH at level
/// `q` selects something exactly when this is at most `q`.
pub fn simes_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(j, p)| n * p / (j + 1) as f64)
        .fold(f64::INFINITY, f64::min)
}
