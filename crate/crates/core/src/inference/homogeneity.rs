//! Test of within-cluster homogeneity of the pairwise generator parameters.
//!
//! T collects θ̂_ij − θ̄_k over the intra-cluster pairs. Its covariance is
//! estimated by the leave-one-out jackknife and the p-value is the Gaussian
//! exceedance probability of ‖T‖ (scaled by √n by default).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{ArchimedeanGenerator, Family};
use crate::inference::pairwise::{
    ascent_step, check_families, cluster_theta_bar, fit_intra_cluster_pairs, intra_cluster_pairs, kendall_tau, ln_density,
    maximize, pair_moments, pearson, project, solve_moments, spearman_rho, MomentGrid, PairFit, PairFitConfig, ParamBox,
    PairwiseEstimates, PairwiseMethod, Stencil, FD_STEP,
};
use crate::inference::shared::{assemble, fit_shared_cluster, pair_objective, shared_step};
use crate::inference::pseudo::PseudoObservations;
use crate::mc::CHUNK;
use crate::model::ClusterPartition;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    Sup,
    Euclid,
}

/// Whether ‖T‖ is multiplied by √n before comparison with ‖Z‖.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    #[default]
    SqrtN,
    Raw,
}

impl Scaling {
    pub fn factor(self, n: usize) -> f64 {
        match self {
            Scaling::SqrtN => (n as f64).sqrt(),
            Scaling::Raw => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogeneityConfig {
    pub fit: PairFitConfig,
    pub scaling: Scaling,
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for HomogeneityConfig {
    fn default() -> Self {
        Self { fit: PairFitConfig::default(), scaling: Scaling::SqrtN, n_mc: 100_000, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PValues {
    pub sup: f64,
    pub euclid: f64,
    pub stat_sup: f64,
    pub stat_euclid: f64,
}

impl PValues {
    pub fn get(&self, norm: Norm) -> f64 {
        match norm {
            Norm::Sup => self.sup,
            Norm::Euclid => self.euclid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneityResult {
    /// (k, i, j) for each component of `t`, 0-based.
    pub index: Vec<(usize, usize, usize)>,
    pub estimates: PairwiseEstimates,
    pub theta_bar: Vec<f64>,
    pub t: Vec<f64>,
    #[serde(serialize_with = "crate::inference::serialize_matrix")]
    pub sigma: DMatrix<f64>,
    pub n: usize,
    pub scaling: Scaling,
    pub n_mc: usize,
    pub p_values: PValues,
}

/// T_{ijk} = θ̂_ij − θ̄_k in `intra_cluster_pairs` order, and θ̄.
pub fn homogeneity_statistic(thetas: &BTreeMap<(usize, usize), f64>, partition: &ClusterPartition) -> Result<(Vec<f64>, Vec<f64>)> {
    let bar = cluster_theta_bar(thetas, partition)?;
    let t = intra_cluster_pairs(partition).into_iter().map(|(k, i, j)| thetas[&(i, j)] - bar[k]).collect();
    Ok((t, bar))
}

/// Σ̂ = 1/(n−1) Σ_ν (T*_ν − T*_•)(T*_ν − T*_•)ᵀ with T*_ν = nT − (n−1)T_ν.
pub fn jackknife_covariance(t_full: &[f64], t_loo: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = t_loo.len();
    let m = t_full.len();
    if n < 2 {
        return Err(Error::domain("jackknife needs at least 2 leave-one-out statistics"));
    }
    let nf = n as f64;
    let pseudo: Vec<DVector<f64>> = t_loo
        .iter()
        .map(|tv| {
            crate::error::check_dim(m, tv.len())?;
            Ok(DVector::from_iterator(m, t_full.iter().zip(tv).map(|(t, v)| nf * t - (nf - 1.0) * v)))
        })
        .collect::<Result<_>>()?;
    let mean = pseudo.iter().fold(DVector::zeros(m), |a, p| a + p) / nf;
    let mut s = DMatrix::zeros(m, m);
    for p in &pseudo {
        let c = p - &mean;
        s += &c * c.transpose();
    }
    s /= nf - 1.0;
    // exact symmetry
    let s = (&s + s.transpose()) * 0.5;
    Ok(s)
}

/// LOO average rank of observation `j` once `nu` is removed.
#[inline]
fn loo_shift(r_j: f64, r_nu: f64) -> usize {
    if r_j > r_nu {
        2
    } else if r_j == r_nu {
        1
    } else {
        0
    }
}

/// Largest accepted one-step move in log coordinates; beyond it the reduced
/// sample is refitted.
const TRUST_RADIUS: f64 = 0.1;

/// For every leave-one-out sample, the pair log-likelihood at the nine
/// stencil points.
fn loo_stencil_sums(ru: &[f64], rv: &[f64], family: Family, bx: &ParamBox, st: &Stencil) -> Vec<[f64; 9]> {
    let n = ru.len();
    let nf = n as f64;
    let params: Vec<(ArchimedeanGenerator, f64)> = st
        .points()
        .iter()
        .map(|&p| {
            let (th, vt) = bx.natural(p);
            (ArchimedeanGenerator::new(family, th).expect("box inside the family domain"), vt)
        })
        .collect();
    let contrib = |u: f64, v: f64| -> [f64; 9] {
        let mut out = [0.0; 9];
        for (o, (g, vt)) in out.iter_mut().zip(&params) {
            *o = ln_density(g, *vt, u, v);
        }
        out
    };
    // per observation and LOO rank shift state (0, 0.5 or 1 on each axis)
    let mut cache: Vec<[Option<[f64; 9]>; 9]> = vec![[None; 9]; n];
    let mut out = Vec::with_capacity(n);
    for nu in 0..n {
        let mut acc = [0.0; 9];
        for j in 0..n {
            if j == nu {
                continue;
            }
            let (a, b) = (loo_shift(ru[j], ru[nu]), loo_shift(rv[j], rv[nu]));
            let slot = &mut cache[j][3 * a + b];
            let c = slot.get_or_insert_with(|| contrib((ru[j] - 0.5 * a as f64) / nf, (rv[j] - 0.5 * b as f64) / nf));
            for (s, x) in acc.iter_mut().zip(c.iter()) {
                *s += x;
            }
        }
        out.push(acc);
    }
    out
}

/// θ estimates with each observation left out in turn, by one Newton step
/// from the full-sample pseudo-likelihood estimate.
fn loo_pseudo_likelihood(ru: &[f64], rv: &[f64], family: Family, fit: &PairFit, cfg: &PairFitConfig) -> Result<Vec<f64>> {
    let bx = ParamBox::for_family(family);
    let (lo, hi) = (bx.lo(), bx.hi());
    let p_hat = bx.coords(fit.theta, fit.vartheta);
    let st = Stencil::new(p_hat, lo, hi, FD_STEP);
    let sums = loo_stencil_sums(ru, rv, family, &bx, &st);
    let mut out = Vec::with_capacity(ru.len());
    for (nu, acc) in sums.iter().enumerate() {
        let (g, h) = st.derivatives(acc);
        let neg_def = h[0][0] < 0.0 && h[1][1] < 0.0 && h[0][0] * h[1][1] - h[0][1] * h[1][0] > 0.0;
        let step = ascent_step(p_hat, g, h, lo, hi);
        let p_nu = match step {
            None => p_hat,
            Some(s) if (neg_def || pinned_one_dim(p_hat, g, lo, hi, h)) && s[0].abs().max(s[1].abs()) <= TRUST_RADIUS => {
                project([p_hat[0] + s[0], p_hat[1] + s[1]], lo, hi)
            }
            Some(_) => {
                let (u, v) = loo_sample(ru, rv, nu);
                let obj = |p: [f64; 2]| pair_objective(&bx, family, &u, &v, p);
                let (p, f, _) = maximize(obj, p_hat, lo, hi, cfg.max_iter);
                if !f.is_finite() {
                    return Err(Error::numerical(format!("leave-one-out refit failed for observation {}", nu + 1)));
                }
                p
            }
        };
        out.push(bx.natural(p_nu).0);
    }
    Ok(out)
}

/// Leave-one-out θ's of all pairs of one cluster under the shared-ϑ fit,
/// one vector per pair.
fn loo_shared(ranks: &[(Vec<f64>, Vec<f64>)], family: Family, fits: &[PairFit], cfg: &PairFitConfig) -> Result<Vec<Vec<f64>>> {
    let bx = ParamBox::for_family(family);
    let (lo2, hi2) = (bx.lo(), bx.hi());
    let m = fits.len();
    let n = ranks[0].0.len();
    let mut x_hat: Vec<f64> = fits.iter().map(|f| bx.coords(f.theta, f.vartheta)[0]).collect();
    x_hat.push(bx.coords(fits[0].theta, fits[0].vartheta)[1]);
    let (mut lo, mut hi) = (vec![lo2[0]; m], vec![hi2[0]; m]);
    lo.push(lo2[1]);
    hi.push(hi2[1]);
    let stencils: Vec<Stencil> = (0..m).map(|p| Stencil::new([x_hat[p], x_hat[m]], lo2, hi2, FD_STEP)).collect();
    let sums: Vec<Vec<[f64; 9]>> = ranks
        .par_iter()
        .zip(&stencils)
        .map(|((ru, rv), st)| loo_stencil_sums(ru, rv, family, &bx, st))
        .collect();
    let rows = (0..n)
        .into_par_iter()
        .map(|nu| {
            let parts: Vec<_> = (0..m).map(|p| stencils[p].derivatives(&sums[p][nu])).collect();
            let (g, h) = assemble(&parts);
            let step = shared_step(&x_hat, &g, &h, &lo, &hi);
            match step {
                None => Ok(fits.iter().map(|f| f.theta).collect()),
                Some((s, true)) if s.amax() <= TRUST_RADIUS => Ok((0..m).map(|p| bx.natural([(x_hat[p] + s[p]).clamp(lo[p], hi[p]), x_hat[m]]).0).collect()),
                Some(_) => {
                    let samples: Vec<_> = ranks.iter().map(|(ru, rv)| loo_sample(ru, rv, nu)).collect();
                    let refit = fit_shared_cluster(&samples, family, x_hat.clone(), cfg.max_iter)
                        .map_err(|e| Error::numerical(format!("leave-one-out refit failed for observation {}: {e}", nu + 1)))?;
                    Ok(refit.iter().map(|f| f.theta).collect::<Vec<f64>>())
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..m).map(|p| rows.iter().map(|r| r[p]).collect()).collect())
}

/// Exactly one coordinate is free and its curvature is negative.
fn pinned_one_dim(p: [f64; 2], g: [f64; 2], lo: [f64; 2], hi: [f64; 2], h: [[f64; 2]; 2]) -> bool {
    let eps = 1e-12;
    let pinned: Vec<bool> = (0..2).map(|c| (p[c] <= lo[c] + eps && g[c] < 0.0) || (p[c] >= hi[c] - eps && g[c] > 0.0)).collect();
    match (pinned[0], pinned[1]) {
        (true, false) => h[1][1] < 0.0,
        (false, true) => h[0][0] < 0.0,
        _ => false,
    }
}

fn loo_sample(ru: &[f64], rv: &[f64], nu: usize) -> (Vec<f64>, Vec<f64>) {
    let nf = ru.len() as f64;
    let mut u = Vec::with_capacity(ru.len() - 1);
    let mut v = Vec::with_capacity(ru.len() - 1);
    for j in (0..ru.len()).filter(|&j| j != nu) {
        u.push((ru[j] - 0.5 * loo_shift(ru[j], ru[nu]) as f64) / nf);
        v.push((rv[j] - 0.5 * loo_shift(rv[j], rv[nu]) as f64) / nf);
    }
    (u, v)
}

/// Leave-one-out θ for the moment method: exact LOO (τ̂, ρ̂) mapped through
/// the linearised inverse moment map at the full-sample estimate.
fn loo_moment(ru: &[f64], rv: &[f64], family: Family, cfg: &PairFitConfig) -> Result<Vec<f64>> {
    let n = ru.len();
    let grid = MomentGrid::new(cfg.moment_nodes);
    let target = [kendall_tau(ru, rv), spearman_rho(ru, rv)];
    let (fit, jac) = solve_moments(target, family, cfg, &grid)?;
    let bx = ParamBox::for_family(family);
    let (lo, hi) = (bx.lo(), bx.hi());
    let p_hat = bx.coords(fit.theta, fit.vartheta);
    let (t_fit, r_fit) = pair_moments(family, fit.theta, fit.vartheta, &grid)?;
    let sgn = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
    let mut conc = vec![0.0; n];
    let mut total = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            let s = sgn(ru[a] - ru[b]) * sgn(rv[a] - rv[b]);
            conc[a] += s;
            conc[b] += s;
            total += s;
        }
    }
    let m = (n - 1) as f64;
    let mut out = Vec::with_capacity(n);
    for nu in 0..n {
        let tau = 2.0 * (total - conc[nu]) / (m * (m - 1.0));
        let (u, v) = loo_sample(ru, rv, nu);
        let rho = pearson(&u, &v);
        let f = [t_fit - tau, r_fit - rho];
        let step = crate::numeric::solve2(jac, f)
            .ok_or_else(|| Error::numerical(format!("singular moment Jacobian at leave-one-out observation {}", nu + 1)))?;
        let p = project([p_hat[0] - step[0], p_hat[1] - step[1]], lo, hi);
        out.push(bx.natural(p).0);
    }
    Ok(out)
}

/// Leave-one-out θ̂ for every intra-cluster pair, in `intra_cluster_pairs`
/// order (outer index: pair).
pub fn leave_one_out_thetas(pobs: &PseudoObservations, estimates: &PairwiseEstimates, cfg: &PairFitConfig) -> Result<Vec<Vec<f64>>> {
    check_families(&estimates.families, &pobs.partition)?;
    let pairs = intra_cluster_pairs(&pobs.partition);
    let fit_of = |i: usize, j: usize| {
        estimates
            .get(i, j)
            .copied()
            .ok_or_else(|| Error::domain(format!("missing estimate for pair ({}, {})", i + 1, j + 1)))
    };
    if cfg.method == PairwiseMethod::SharedPseudoLikelihood {
        let per_cluster = (0..pobs.partition.n_clusters())
            .map(|k| {
                let members: Vec<_> = pairs.iter().filter(|p| p.0 == k).collect();
                let fits = members.iter().map(|&&(_, i, j)| fit_of(i, j)).collect::<Result<Vec<_>>>()?;
                let ranks: Vec<_> = members.iter().map(|&&(_, i, j)| (pobs.ranks(i), pobs.ranks(j))).collect();
                loo_shared(&ranks, estimates.families[k], &fits, cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        // clusters are contiguous in `pairs`
        return Ok(per_cluster.into_iter().flatten().collect());
    }
    pairs
        .par_iter()
        .map(|&(k, i, j)| {
            let fit = fit_of(i, j)?;
            let (ru, rv) = (pobs.ranks(i), pobs.ranks(j));
            match cfg.method {
                PairwiseMethod::MomentInversion => loo_moment(&ru, &rv, estimates.families[k], cfg),
                _ => loo_pseudo_likelihood(&ru, &rv, estimates.families[k], &fit, cfg),
            }
        })
        .collect()
}

/// Jackknife estimate of the covariance of √n·T.
pub fn jackknife_sigma(pobs: &PseudoObservations, estimates: &PairwiseEstimates, cfg: &PairFitConfig) -> Result<DMatrix<f64>> {
    let partition = &pobs.partition;
    let pairs = intra_cluster_pairs(partition);
    let (t, _) = homogeneity_statistic(&estimates.thetas(), partition)?;
    let loo = leave_one_out_thetas(pobs, estimates, cfg)?;
    let n = pobs.n();
    let t_loo = (0..n)
        .map(|nu| {
            let thetas: BTreeMap<(usize, usize), f64> = pairs.iter().zip(&loo).map(|(&(_, i, j), v)| ((i, j), v[nu])).collect();
            homogeneity_statistic(&thetas, partition).map(|(t, _)| t)
        })
        .collect::<Result<Vec<_>>>()?;
    jackknife_covariance(&t, &t_loo)
}

/// Pr(‖Z‖ ≥ ‖s·T‖), Z ~ N(0, Σ̂), for both norms from the same draws.
/// Negative eigenvalues of Σ̂ are clipped to zero.
pub fn homogeneity_test(t: &[f64], sigma: &DMatrix<f64>, n: usize, scaling: Scaling, n_mc: usize, seed: u64) -> Result<PValues> {
    let m = t.len();
    if sigma.nrows() != m || sigma.ncols() != m {
        return Err(Error::Dimension { expected: m, got: sigma.nrows() });
    }
    if n_mc == 0 {
        return Err(Error::domain("n_mc must be positive"));
    }
    let s = scaling.factor(n);
    let stat_sup = t.iter().fold(0.0f64, |a, x| a.max((s * x).abs()));
    let stat_euclid = s * t.iter().map(|x| x * x).sum::<f64>().sqrt();
    let eig = SymmetricEigen::new(sigma.clone());
    let mut a = eig.eigenvectors.clone();
    for (c, lam) in eig.eigenvalues.iter().enumerate() {
        let r = lam.max(0.0).sqrt();
        a.column_mut(c).scale_mut(r);
    }
    let chunks = n_mc.div_ceil(CHUNK);
    let counts: Vec<(usize, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64);
            let len = CHUNK.min(n_mc - c * CHUNK);
            let mut eps = DVector::zeros(m);
            let mut z = DVector::zeros(m);
            let (mut hs, mut he) = (0, 0);
            for _ in 0..len {
                for e in eps.iter_mut() {
                    *e = StandardNormal.sample(&mut rng);
                }
                a.mul_to(&eps, &mut z);
                let sup = z.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
                if sup >= stat_sup {
                    hs += 1;
                }
                if z.norm() >= stat_euclid {
                    he += 1;
                }
            }
            (hs, he)
        })
        .collect();
    let (hs, he) = counts.iter().fold((0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1));
    Ok(PValues { sup: hs as f64 / n_mc as f64, euclid: he as f64 / n_mc as f64, stat_sup, stat_euclid })
}

/// Pairwise fits, jackknife covariance and both p-values.
pub fn homogeneity_analysis(pobs: &PseudoObservations, families: &[Family], cfg: &HomogeneityConfig) -> Result<HomogeneityResult> {
    let partition = &pobs.partition;
    let estimates = fit_intra_cluster_pairs(pobs, families, &cfg.fit)?;
    let (t, theta_bar) = homogeneity_statistic(&estimates.thetas(), partition)?;
    let sigma = jackknife_sigma(pobs, &estimates, &cfg.fit)?;
    let p_values = homogeneity_test(&t, &sigma, pobs.n(), cfg.scaling, cfg.n_mc, cfg.seed)?;
    Ok(HomogeneityResult {
        index: intra_cluster_pairs(partition),
        estimates,
        theta_bar,
        t,
        sigma,
        n: pobs.n(),
        scaling: cfg.scaling,
        n_mc: cfg.n_mc,
        p_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistic_is_centred_per_cluster() {
        let p = ClusterPartition::new(vec![vec![2, 0, 1], vec![3, 4]]).unwrap();
        let th: BTreeMap<_, _> = [((0, 1), 1.0), ((0, 2), 1.2), ((1, 2), 1.1), ((3, 4), 3.0)].into_iter().collect();
        let (t, bar) = homogeneity_statistic(&th, &p).unwrap();
        let expect = [-0.1, 0.1, 0.0, 0.0];
        for (a, b) in t.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((bar[0] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn jackknife_of_the_mean_is_the_sample_variance() {
        let x = [0.3, 1.7, -0.4, 2.2, 0.9, 1.1];
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let loo: Vec<Vec<f64>> = (0..x.len()).map(|k| vec![(mean * n - x[k]) / (n - 1.0)]).collect();
        let s = jackknife_covariance(&[mean], &loo).unwrap();
        let s2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((s[(0, 0)] / n - s2 / n).abs() < 1e-12);
        let flat = jackknife_covariance(&[1.0, 2.0], &vec![vec![1.0, 2.0]; 5]).unwrap();
        assert!(flat.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn p_value_extremes() {
        let id = DMatrix::identity(3, 3);
        let p = homogeneity_test(&[0.0; 3], &id, 100, Scaling::SqrtN, 1000, 1).unwrap();
        assert_eq!((p.sup, p.euclid), (1.0, 1.0));
        let p = homogeneity_test(&[5.0, 0.0, 0.0], &id, 100, Scaling::SqrtN, 1000, 1).unwrap();
        assert_eq!((p.sup, p.euclid), (0.0, 0.0));
        let zero = DMatrix::zeros(2, 2);
        let p = homogeneity_test(&[0.0, 0.0], &zero, 10, Scaling::Raw, 10, 1).unwrap();
        assert_eq!(p.sup, 1.0);
    }

    #[test]
    fn p_value_matches_normal_tail() {
        // one component, Σ = 1, |T| = 1.96 ⇒ p ≈ 0.05
        let p = homogeneity_test(&[1.959964], &DMatrix::identity(1, 1), 1, Scaling::Raw, 200_000, 9).unwrap();
        assert!((p.sup - 0.05).abs() < 0.003, "{}", p.sup);
        assert_eq!(p.sup, p.euclid);
    }
}
