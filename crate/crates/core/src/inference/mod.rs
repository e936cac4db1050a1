//! Rank-based inference for clustered Archimax models.

pub mod blockmax;
pub mod homogeneity;
pub mod pairwise;
pub mod pickands;
pub mod pseudo;
pub mod shared;

pub use blockmax::{block_maxima, BlockMaxima, BlockRule};
pub use homogeneity::{homogeneity_analysis, homogeneity_statistic, homogeneity_test, jackknife_sigma, HomogeneityConfig, HomogeneityResult, Norm, Scaling};
pub use pairwise::{cluster_theta_bar, fit_intra_cluster_pairs, pairwise_theta_fit, PairFit, PairFitConfig, PairwiseEstimates, PairwiseMethod};
pub use pickands::{cfg_lambda, cfg_pickands, PickandsEstimate};
pub use pseudo::{pseudo_observations, PseudoObservations};

/// Row-major nested arrays for JSON output.
pub(crate) fn serialize_matrix<S: serde::Serializer>(m: &nalgebra::DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::Serialize;
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}
