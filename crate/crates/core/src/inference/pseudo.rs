//! Rank-based pseudo-observations.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::ClusterPartition;

/// Column-wise ranks scaled by 1/(n+1).
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoObservations {
    pub matrix: DMatrix<f64>,
    pub partition: ClusterPartition,
}

impl PseudoObservations {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.matrix.column(i).iter().copied().collect()
    }

    /// The unscaled (average) ranks of column `i`.
    pub fn ranks(&self, i: usize) -> Vec<f64> {
        let s = (self.n() + 1) as f64;
        self.matrix.column(i).iter().map(|u| (u * s * 2.0).round() / 2.0).collect()
    }
}

/// Average ranks (1-based). Tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            r[o] = avg;
        }
        i = j + 1;
    }
    r
}

/// Pseudo-observations of a single column.
pub fn pseudo_column(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::domain(format!("need at least 2 observations, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("observations must be finite"));
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::domain("constant column"));
    }
    let s = (x.len() + 1) as f64;
    Ok(average_ranks(x).into_iter().map(|r| r / s).collect())
}

pub fn pseudo_observations(data: &DMatrix<f64>, partition: &ClusterPartition) -> Result<PseudoObservations> {
    crate::error::check_dim(partition.dim(), data.ncols())?;
    let n = data.nrows();
    let mut m = DMatrix::zeros(n, data.ncols());
    for c in 0..data.ncols() {
        let col: Vec<f64> = data.column(c).iter().copied().collect();
        let p = pseudo_column(&col).map_err(|e| match e {
            Error::Domain(msg) => Error::domain(format!("column {}: {msg}", c + 1)),
            other => other,
        })?;
        m.set_column(c, &nalgebra::DVector::from_vec(p));
    }
    Ok(PseudoObservations { matrix: m, partition: partition.clone() })
}
