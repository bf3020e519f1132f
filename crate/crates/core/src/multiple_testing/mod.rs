//! Combining per-sentence P-values into document-level evidence.
//!
//! [`hc`] is the primary global test; [`fisher`] and [`bh_select`] are the
//! dense-signal and FDR-selection alternatives. Critical values for HC come
//! from simulation ([`simulate_critical_values`]).

mod combine;
mod critical;
mod higher_criticism;

pub use combine::{bh_select, fisher, simes_sorted, fisher_survival, FisherResult};
pub use critical::{
    bootstrap_quantile_ci, simulate_critical_values, simulate_critical_values_with,
    simulate_null_hc, upper_quantile, CriticalValue, CriticalValueTable, TableLookup,
    CRIT_TABLE_FORMAT,
};
pub use higher_criticism::{hc, hc_sorted, hc_with, max_rank, HcConfig, HcResult, DEFAULT_GAMMA0};

use crate::error::{Error, Result};

pub(crate) fn check_pvalues(pvalues: &[f64]) -> Result<()> {
    if let Some((i, p)) = pvalues
        .iter()
        .enumerate()
        .find(|(_, p)| !(**p > 0.0 && **p <= 1.0))
    {
        return Err(Error::InvalidInput(format!(
            "P-value {p} at position {i} is outside (0, 1]"
        )));
    }
    Ok(())
}
