//! Non-stationary stochastic block model.
//!
//! Nodes of an interaction network and the time bins in which interactions
//! are observed are clustered jointly. Counts in cell `(i, j, u)` are
//! Poisson with a rate that depends on the node clusters of `i` and `j` and
//! the time cluster of bin `u`. Rates and cluster proportions are integrated
//! out under conjugate priors, giving an exact integrated classification
//! likelihood (ICL) that a greedy search maximizes over labels and over the
//! number of clusters on both axes.

pub mod cli;
pub mod error;
pub mod greedy;
pub mod icl;
pub mod ingest;
pub mod metrics;
pub mod simulate;
pub mod tensor;

pub use error::{Error, Result};
pub use greedy::{greedy_fit, FitResult, SearchConfig};
pub use icl::{icl, Axis, Hyperparameters, IclValue, ModelState, RateEstimate};
pub use tensor::{build_tensor, BlockStats, EventRecord, InteractionTensor, Mode, Partition};
