//! Synthetic evaluation: mixed-authorship documents, power estimation on
//! scored datasets, and the abstract sparse-mixture Monte Carlo.

mod dataset;
mod mix;
mod mixture;
mod power;
pub mod surrogate;

pub use dataset::{human_doc_id, machine_doc_id, read_rows, Dataset, DatasetRow, SurrogateCorpus};
pub use mix::{mix, mix_with_count, MixSpec, MixedDocument, Source};
pub use mixture::{mixture_mc, normal_survival, AltSpec, MixtureConfig, MixtureReport, Statistic, StatisticPower};
pub use power::{binomial_se, estimate_power, CellConfig, PowerConfig, PowerEstimate, PowerReport, SkippedCell};
pub use surrogate::{SurrogateDocument, SurrogateModel, SurrogateSentence};
