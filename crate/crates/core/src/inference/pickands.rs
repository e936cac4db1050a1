//! Rank-based CFG-type estimator of the Pickands function of a cluster,
//! with the generator fixed at its estimated parameter.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::{ArchimedeanGenerator, Family, Generator};
use crate::inference::pseudo::PseudoObservations;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PickandsEstimate {
    /// Estimate clamped to [max_i w_i, 1].
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// Sum in increasing order, so that permutations of the same terms give
/// bit-identical sums.
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

fn check_weights(w: &[f64], dk: usize) -> Result<Vec<f64>> {
    crate::error::check_dim(dk, w.len())?;
    if w.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::domain("weights must be non-negative"));
    }
    crate::stdf::normalize_simplex(w)
}

/// Â(w) for the block of columns `cols` of `pobs`:
/// log Â = mean_j { log φ(j/(n+1)) − log min_{i: w_i>0} φ(Û_i^j)/w_i }.
pub fn cfg_pickands(pobs: &PseudoObservations, cols: &[usize], theta_bar: f64, family: Family, w: &[f64]) -> Result<PickandsEstimate> {
    let w = check_weights(w, cols.len())?;
    let g = ArchimedeanGenerator::new(family, theta_bar)?;
    if let Some(&c) = cols.iter().find(|&&c| c >= pobs.dim()) {
        return Err(Error::domain(format!("column {} is out of range", c + 1)));
    }
    let n = pobs.n();
    let scale = (n + 1) as f64;
    let reference = sorted_sum((1..=n).map(|j| g.phi(j as f64 / scale).ln()).collect());
    let phis: Vec<Vec<f64>> = cols.iter().map(|&c| pobs.matrix.column(c).iter().map(|&u| g.phi(u)).collect()).collect();
    let terms: Vec<f64> = (0..n)
        .map(|j| {
            let xi = phis.iter().zip(&w).filter(|(_, &wi)| wi > 0.0).map(|(p, &wi)| p[j] / wi).fold(f64::INFINITY, f64::min);
            xi.ln()
        })
        .collect();
    let raw = ((reference - sorted_sum(terms)) / n as f64).exp();
    let lower = w.iter().cloned().fold(0.0, f64::max);
    let value = raw.clamp(lower, 1.0);
    Ok(PickandsEstimate { value, raw, clamped: value != raw })
}

/// Â over a list of weight vectors with the number of clamped evaluations.
pub fn cfg_pickands_grid(
    pobs: &PseudoObservations,
    cols: &[usize],
    theta_bar: f64,
    family: Family,
    grid: &[Vec<f64>],
) -> Result<(Vec<PickandsEstimate>, usize)> {
    let est = grid.iter().map(|w| cfg_pickands(pobs, cols, theta_bar, family, w)).collect::<Result<Vec<_>>>()?;
    let clamped = est.iter().filter(|e| e.clamped).count();
    Ok((est, clamped))
}

/// Exponent α of the attractor ℓ_α of an Archimax copula with generator
/// (family, θ): 1/θ for Joe, 1 for Clayton and Frank.
pub fn attractor_alpha(family: Family, theta: f64) -> f64 {
    match family {
        Family::Joe => 1.0 / theta,
        Family::Clayton | Family::Frank => 1.0,
    }
}

/// Upper tail coefficient of the pair (i, j) of one cluster:
/// λ̂ = 2 − (2 Â(½, ½))^α, clamped to [0, 1].
pub fn cfg_lambda(pobs: &PseudoObservations, theta_bar: f64, family: Family, i: usize, j: usize) -> Result<f64> {
    let p = &pobs.partition;
    if i >= p.dim() || j >= p.dim() || i == j {
        return Err(Error::domain(format!("invalid pair ({}, {})", i + 1, j + 1)));
    }
    if p.cluster_of(i) != p.cluster_of(j) {
        return Err(Error::domain(format!("variables {} and {} are in different clusters", i + 1, j + 1)));
    }
    let a = cfg_pickands(pobs, &[i, j], theta_bar, family, &[0.5, 0.5])?.value;
    let alpha = attractor_alpha(family, theta_bar);
    Ok((2.0 - (2.0 * a).powf(alpha)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::pseudo::pseudo_observations;
    use crate::model::ClusterPartition;
    use nalgebra::DMatrix;

    fn pobs_of(rows: usize, f: impl Fn(usize, usize) -> f64, d: usize) -> PseudoObservations {
        let data = DMatrix::from_fn(rows, d, f);
        pseudo_observations(&data, &ClusterPartition::new(vec![(0..d).collect()]).unwrap()).unwrap()
    }

    #[test]
    fn vertices_give_exactly_one() {
        let p = pobs_of(50, |r, c| ((r * 37 + c * 11) % 50) as f64 + 0.1 * c as f64, 3);
        for fam in [Family::Clayton, Family::Joe, Family::Frank] {
            for i in 0..3 {
                let mut w = vec![0.0; 3];
                w[i] = 1.0;
                let e = cfg_pickands(&p, &[0, 1, 2], 1.7, fam, &w).unwrap();
                assert_eq!(e.raw, 1.0);
                assert_eq!(e.value, 1.0);
            }
        }
    }

    #[test]
    fn comonotone_pair_attains_the_lower_bound() {
        let p = pobs_of(200, |r, c| (r as f64).powi(c as i32 + 1), 2);
        for fam in [Family::Clayton, Family::Joe] {
            let e = cfg_pickands(&p, &[0, 1], 2.0, fam, &[0.5, 0.5]).unwrap();
            assert!((e.raw - 0.5).abs() < 1e-12);
        }
        assert!((cfg_lambda(&p, 2.0, Family::Clayton, 0, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn off_simplex_weights_are_rejected() {
        let p = pobs_of(20, |r, c| (r * (c + 1)) as f64 + c as f64 * 0.5, 2);
        assert!(cfg_pickands(&p, &[0, 1], 1.0, Family::Clayton, &[0.7, 0.7]).is_err());
        assert!(cfg_pickands(&p, &[0, 1], 1.0, Family::Clayton, &[1.5, -0.5]).is_err());
    }
}
