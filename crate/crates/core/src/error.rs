use thiserror::Error;

use crate::model::ConfigViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation (all-zero weights,
    /// logit of 0, zero-variance sample, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid run configuration: {}", format_violations(.0))]
    InvalidConfig(Vec<ConfigViolation>),

    /// Every theta-particle carries zero weight after the update at `t`.
    #[error(
        "total particle death at t = {t}: every theta-particle has zero weight \
         (epsilon = {epsilon}); increase p_acc or n_y"
    )]
    TotalParticleDeath { t: usize, epsilon: f64 },

    #[error("rank-deficient design matrix ({rows} x {cols}): {detail}")]
    RankDeficient {
        rows: usize,
        cols: usize,
        detail: String,
    },

    #[error("enumeration needs {paths} paths, over the budget of {budget}")]
    EnumerationBudget { paths: u128, budget: u128 },

    #[error("unknown model `{0}` (expected one of: skew_normal, sv, hawkes)")]
    UnknownModel(String),

    #[error("unsupported model configuration: {0}")]
    Unsupported(String),
}

fn format_violations(v: &[ConfigViolation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
