//! Post-hoc analyses of a trained model: structure of the CBN parameter
//! space, counting and length error profiles, and a logical consistency
//! audit of count comparisons.

pub mod consistency;
pub mod counting;
pub mod dump;
pub mod length;
pub mod purity;

use thiserror::Error;

pub use consistency::{build_audit, consistency_audit, Audit, ConsistencyReport};
pub use counting::{counting_error_profile, CountingProfile};
pub use dump::{dump_cbn_params, CbnDump, CbnRow};
pub use length::{error_by_length, LengthTable};
pub use purity::{function_grouping_report, label_purity, GroupingReport};

/// Number of validation points in the published t-SNE plots.
pub const PAPER_TSNE_POINTS: usize = 2000;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("need at least {needed} points, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error(transparent)]
    Model(#[from] cbnr::Error),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;
