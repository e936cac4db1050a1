//! Composite-likelihood estimation of a Gaussian radial copula with the
//! cluster generators held fixed.
//!
//! For one variable per cluster, V_k = ψ_k(R_k S_k) with S_k ~ Beta(1, d_k − 1)
//! independent of R, so
//!
//!   f_V(v) = ∫_{(0,1)^K} q(F_R(r)) ∏_k f_{R_k}(r_k) f_{S_k}(s_k) |φ_k'(v_k)| / s_k ds,
//!   r_k = φ_k(v_k) / s_k,
//!
//! evaluated by tensor Gauss–Legendre quadrature in ln s. Every factor except q
//! depends on one axis only, so per-axis tables are built once per
//! observation and reused for every value of the correlation.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::{ArchimedeanGenerator, Generator, RadialDistribution};
use crate::inference::pseudo::PseudoObservations;
use crate::model::{cholesky, ClusteredModelSpec};
use crate::numeric::{brent_minimize, norm_quantile};
use crate::quadrature::GaussLegendre;

/// Clipping of v away from {0, 1}.
pub const V_EPS: f64 = 1e-6;
/// Floor for log-density terms.
pub const LOG_FLOOR: f64 = -745.0;
const Z_MAX: f64 = 37.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialFitConfig {
    /// Gauss–Legendre nodes per axis.
    pub nodes: usize,
    /// Search interval for ρ.
    pub bounds: (f64, f64),
}

impl Default for RadialFitConfig {
    fn default() -> Self {
        Self { nodes: 64, bounds: (-0.999, 0.999) }
    }
}

impl RadialFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 16 {
            return Err(Error::domain(format!("at least 16 quadrature nodes are needed, got {}", self.nodes)));
        }
        let (lo, hi) = self.bounds;
        if !(lo > -1.0 && hi < 1.0 && lo < hi) {
            return Err(Error::domain(format!("correlation bounds ({lo}, {hi}) must satisfy -1 < lo < hi < 1")));
        }
        Ok(())
    }
}

/// Quadrature weights times the single-axis factors, and the normal scores
/// Φ⁻¹(F_R(r)) at the nodes, for one value of v.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisTable {
    pub a: Vec<f64>,
    pub z: Vec<f64>,
    /// v was moved into [V_EPS, 1 − V_EPS].
    pub clipped: bool,
}

impl AxisTable {
    /// Univariate marginal density; 1 up to quadrature error.
    pub fn marginal(&self) -> f64 {
        self.a.iter().sum()
    }
}

/// Bound on the neglected tail mass of one axis factor.
const TAIL_TOL: f64 = 1e-12;
/// Nodes whose weight is below this fraction of the axis total are dropped.
const PRUNE: f64 = 1e-15;

/// Per-cluster generator, radial law and the quadrature rule.
#[derive(Debug, Clone)]
pub struct MixtureKernel {
    generators: Vec<ArchimedeanGenerator>,
    radial: Vec<RadialDistribution>,
    dims: Vec<usize>,
    gl: GaussLegendre,
}

impl MixtureKernel {
    pub fn new(model: &ClusteredModelSpec, nodes: usize) -> Result<Self> {
        let dims: Vec<usize> = model.partition.blocks().iter().map(|b| b.len()).collect();
        let radial = model
            .generators
            .iter()
            .zip(&dims)
            .map(|(g, &d)| RadialDistribution::new(*g, d))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { generators: model.generators.clone(), radial, dims, gl: GaussLegendre::new(nodes) })
    }

    pub fn nodes(&self) -> usize {
        self.gl.len()
    }

    /// The s-integral is taken in σ = −ln s = ln(r/x), x = φ(v):
    /// f(v) = |φ'(v)| ∫_0^∞ f_R(x e^σ) f_S(e^{−σ}) dσ, cut where
    /// |φ'(v)| (d−1) P(R > r)/r, a bound on the remainder, drops below
    /// `TAIL_TOL`.
    pub fn axis(&self, k: usize, v: f64) -> AxisTable {
        let clipped = !(V_EPS..=1.0 - V_EPS).contains(&v);
        let v = v.clamp(V_EPS, 1.0 - V_EPS);
        let g = &self.generators[k];
        let rad = &self.radial[k];
        let d = self.dims[k] as f64;
        let x = g.phi(v);
        let dphi = g.ln_neg_phi_prime(v).exp();
        let mut r_hi = 2.0 * x;
        for _ in 0..400 {
            if dphi * (d - 1.0) * rad.survival(r_hi) / r_hi < TAIL_TOL {
                break;
            }
            r_hi *= 2.0;
        }
        let (sig, w) = self.gl.on_interval(0.0, (r_hi / x).ln());
        let mut a = Vec::with_capacity(sig.len());
        let mut z = Vec::with_capacity(sig.len());
        for (&t, &w) in sig.iter().zip(&w) {
            let r = x * t.exp();
            let f_s = (d - 1.0) * (-(-t).exp_m1()).powf(d - 2.0);
            let f_r = rad.pdf(r).unwrap_or(0.0);
            a.push(w * f_r * dphi * f_s);
            let sv = rad.survival(r).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
            let zz = if sv < 0.5 { -norm_quantile(sv) } else { norm_quantile(1.0 - sv) };
            z.push(zz.clamp(-Z_MAX, Z_MAX));
        }
        // nodes far in the tails carry nothing at double precision
        let cut = PRUNE * a.iter().sum::<f64>();
        let keep: Vec<usize> = (0..a.len()).filter(|&m| a[m] > cut).collect();
        AxisTable { a: keep.iter().map(|&m| a[m]).collect(), z: keep.iter().map(|&m| z[m]).collect(), clipped }
    }
}

/// Σ_ab a1_a a2_b q(z1_a, z2_b; ρ) for the bivariate Gaussian copula density q.
pub fn pair_sum(t1: &AxisTable, t2: &AxisTable, rho: f64) -> f64 {
    let om = 1.0 - rho * rho;
    let c = 0.5 / om;
    let r2 = rho * rho;
    let mut total = 0.0;
    for (&a1, &z1) in t1.a.iter().zip(&t1.z) {
        if a1 == 0.0 {
            continue;
        }
        let p1 = r2 * z1 * z1;
        let m1 = 2.0 * rho * z1;
        let mut inner = 0.0;
        for (&a2, &z2) in t2.a.iter().zip(&t2.z) {
            inner += a2 * (-c * (p1 + r2 * z2 * z2 - m1 * z2)).exp();
        }
        total += a1 * inner;
    }
    total / om.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixtureDensity {
    pub value: f64,
    pub clipped: bool,
}

/// Density of (V_{ι_k}, V_{ι_ℓ}) at v for a Gaussian radial copula with
/// correlation ρ.
pub fn pair_mixture_density(v: [f64; 2], k: usize, l: usize, rho: f64, model: &ClusteredModelSpec, cfg: &RadialFitConfig) -> Result<MixtureDensity> {
    cfg.validate()?;
    check_rho(rho)?;
    check_clusters(model, k, l)?;
    if !v.iter().all(|x| *x > 0.0 && *x < 1.0) {
        return Err(Error::domain(format!("density point ({}, {}) is not in the open unit square", v[0], v[1])));
    }
    let kernel = MixtureKernel::new(model, cfg.nodes)?;
    let (t1, t2) = (kernel.axis(k, v[0]), kernel.axis(l, v[1]));
    Ok(MixtureDensity { value: pair_sum(&t1, &t2, rho), clipped: t1.clipped || t2.clipped })
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::domain(format!("correlation must be in (-1, 1), got {rho}")));
    }
    Ok(())
}

fn check_clusters(model: &ClusteredModelSpec, k: usize, l: usize) -> Result<()> {
    let kk = model.n_clusters();
    if k >= kk || l >= kk {
        return Err(Error::domain(format!("cluster index out of range for {kk} clusters")));
    }
    if k == l {
        return Err(Error::domain("the two variables must come from different clusters"));
    }
    Ok(())
}

/// Log-likelihood with bookkeeping of floored terms and clipped inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLik {
    pub value: f64,
    pub floored: usize,
    pub clipped: usize,
}

/// Axis tables of every observation of one variable.
pub struct ColumnTables {
    pub rows: Vec<AxisTable>,
}

impl ColumnTables {
    pub fn new(kernel: &MixtureKernel, cluster: usize, column: &[f64]) -> Self {
        Self { rows: column.iter().map(|&v| kernel.axis(cluster, v)).collect() }
    }

    fn clipped(&self) -> usize {
        self.rows.iter().filter(|t| t.clipped).count()
    }
}

fn floored_ln(x: f64) -> (f64, bool) {
    let l = x.ln();
    if l.is_finite() && l >= LOG_FLOOR {
        (l, false)
    } else {
        (LOG_FLOOR, true)
    }
}

/// Σ_j ln f(Û_i^j, Û_l^j) for one variable pair from prebuilt tables.
pub fn table_loglik(ti: &ColumnTables, tj: &ColumnTables, rho: f64) -> LogLik {
    let mut value = 0.0;
    let mut floored = 0;
    for (a, b) in ti.rows.iter().zip(&tj.rows) {
        let (l, f) = floored_ln(pair_sum(a, b, rho));
        value += l;
        floored += f as usize;
    }
    LogLik { value, floored, clipped: ti.clipped().max(tj.clipped()) }
}

fn check_model(pobs: &PseudoObservations, model: &ClusteredModelSpec) -> Result<()> {
    if pobs.partition != model.partition {
        return Err(Error::domain("pseudo-observations and model have different partitions"));
    }
    Ok(())
}

/// Pairwise log-likelihood of the cluster pair (k, ℓ): the sum over all
/// variable pairs in 𝒢_k × 𝒢_ℓ.
pub fn pairwise_loglik(pobs: &PseudoObservations, model: &ClusteredModelSpec, k: usize, l: usize, rho: f64, cfg: &RadialFitConfig) -> Result<LogLik> {
    cfg.validate()?;
    check_rho(rho)?;
    check_model(pobs, model)?;
    check_clusters(model, k, l)?;
    let kernel = MixtureKernel::new(model, cfg.nodes)?;
    let p = &model.partition;
    let tk: Vec<_> = p.block(k).iter().map(|&i| ColumnTables::new(&kernel, k, &pobs.column(i))).collect();
    let tl: Vec<_> = p.block(l).iter().map(|&j| ColumnTables::new(&kernel, l, &pobs.column(j))).collect();
    let mut out = LogLik { value: 0.0, floored: 0, clipped: 0 };
    for a in &tk {
        for b in &tl {
            let ll = table_loglik(a, b, rho);
            out.value += ll.value;
            out.floored += ll.floored;
            out.clipped = out.clipped.max(ll.clipped);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoFit {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub l: usize,
    pub rho: f64,
    pub loglik: f64,
    /// The likelihood varies by less than 1e-10 over the search interval;
    /// ρ is then reported as 0.
    pub flat: bool,
}

fn maximise_rho(ti: &ColumnTables, tj: &ColumnTables, cfg: &RadialFitConfig) -> (f64, f64, bool) {
    let (lo, hi) = cfg.bounds;
    let f = |r: f64| table_loglik(ti, tj, r).value;
    // searched as 2 + ρ so that the relative tolerance acts as an absolute one near 0
    let (y, neg) = brent_minimize(|y| -f(y - 2.0), lo + 2.0, hi + 2.0, 1e-6, 200);
    let x = y - 2.0;
    let ends = [f(lo), f(hi), -neg];
    let spread = ends.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ends.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread < 1e-10 {
        return (0.0, f(0.0), true);
    }
    // Brent is local; the bounds may still be better
    let best = [(x, -neg), (lo, ends[0]), (hi, ends[1])].into_iter().max_by(|a, b| a.1.total_cmp(&b.1)).expect("non-empty");
    (best.0, best.1, false)
}

/// ρ̂ for the variables i ∈ 𝒢_k and j ∈ 𝒢_ℓ, k ≠ ℓ.
pub fn fit_pair_rho(pobs: &PseudoObservations, model: &ClusteredModelSpec, i: usize, j: usize, cfg: &RadialFitConfig) -> Result<RhoFit> {
    cfg.validate()?;
    check_model(pobs, model)?;
    let p = &model.partition;
    if i >= p.dim() || j >= p.dim() {
        return Err(Error::domain(format!("variable index out of range for dimension {}", p.dim())));
    }
    let (k, l) = (p.cluster_of(i), p.cluster_of(j));
    check_clusters(model, k, l)?;
    let kernel = MixtureKernel::new(model, cfg.nodes)?;
    let ti = ColumnTables::new(&kernel, k, &pobs.column(i));
    let tj = ColumnTables::new(&kernel, l, &pobs.column(j));
    let (rho, loglik, flat) = maximise_rho(&ti, &tj, cfg);
    Ok(RhoFit { i, j, k, l, rho, loglik, flat })
}

/// Arithmetic mean of pairwise estimates.
pub fn cluster_pair_average(rhos: &[f64]) -> Result<f64> {
    if rhos.is_empty() {
        return Err(Error::domain("no pairwise estimates to average"));
    }
    Ok(rhos.iter().sum::<f64>() / rhos.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterPairRho {
    pub k: usize,
    pub l: usize,
    pub rho_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialFitResult {
    pub config: RadialFitConfig,
    /// Every inter-cluster variable pair (i < j), ordered by (i, j).
    pub pairs: Vec<RhoFit>,
    /// Cluster pairs k < ℓ.
    pub averages: Vec<ClusterPairRho>,
}

impl RadialFitResult {
    pub fn rho_bar(&self, k: usize, l: usize) -> Option<f64> {
        let (k, l) = (k.min(l), k.max(l));
        self.averages.iter().find(|a| a.k == k && a.l == l).map(|a| a.rho_bar)
    }

    /// d×d matrix of ρ̂; 1 on the diagonal and NaN for intra-cluster pairs.
    pub fn rho_matrix(&self, d: usize) -> Vec<Vec<f64>> {
        let mut m = vec![vec![f64::NAN; d]; d];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for p in &self.pairs {
            m[p.i][p.j] = p.rho;
            m[p.j][p.i] = p.rho;
        }
        m
    }
}

/// ρ̂ for every inter-cluster pair and their per-cluster-pair means.
pub fn fit_radial(pobs: &PseudoObservations, model: &ClusteredModelSpec, cfg: &RadialFitConfig) -> Result<RadialFitResult> {
    cfg.validate()?;
    check_model(pobs, model)?;
    let p = &model.partition;
    if p.n_clusters() < 2 {
        return Err(Error::domain("radial fitting needs at least two clusters"));
    }
    let kernel = MixtureKernel::new(model, cfg.nodes)?;
    let tables: Vec<ColumnTables> = (0..p.dim())
        .into_par_iter()
        .map(|i| ColumnTables::new(&kernel, p.cluster_of(i), &pobs.column(i)))
        .collect();
    let mut index = Vec::new();
    for i in 0..p.dim() {
        for j in i + 1..p.dim() {
            if p.cluster_of(i) != p.cluster_of(j) {
                index.push((i, j));
            }
        }
    }
    let pairs: Vec<RhoFit> = index
        .par_iter()
        .map(|&(i, j)| {
            let (rho, loglik, flat) = maximise_rho(&tables[i], &tables[j], cfg);
            let (k, l) = (p.cluster_of(i), p.cluster_of(j));
            RhoFit { i, j, k: k.min(l), l: k.max(l), rho, loglik, flat }
        })
        .collect();
    let mut averages = Vec::new();
    for k in 0..p.n_clusters() {
        for l in k + 1..p.n_clusters() {
            let rhos: Vec<f64> = pairs.iter().filter(|f| f.k == k && f.l == l).map(|f| f.rho).collect();
            averages.push(ClusterPairRho { k, l, rho_bar: cluster_pair_average(&rhos)? });
        }
    }
    Ok(RadialFitResult { config: *cfg, pairs, averages })
}

/// Full composite log-likelihood Σ_j Σ_ι ln f_{V_ι}(Û_ι^j) over all tuples ι
/// with one variable per cluster, for the Gaussian copula with off-diagonal
/// correlations `corr` (upper triangle, row by row). Cost grows as
/// nodes^K per observation and tuple.
pub fn full_composite_loglik(pobs: &PseudoObservations, model: &ClusteredModelSpec, corr: &[f64], cfg: &RadialFitConfig, max_k: usize) -> Result<LogLik> {
    cfg.validate()?;
    check_model(pobs, model)?;
    let p = &model.partition;
    let kk = p.n_clusters();
    if kk > max_k {
        return Err(Error::capability(format!("{kk} clusters exceed the supported maximum of {max_k} for the full composite likelihood")));
    }
    if kk < 2 {
        return Err(Error::domain("the composite likelihood needs at least two clusters"));
    }
    crate::error::check_dim(kk * (kk - 1) / 2, corr.len())?;
    let mut c = vec![vec![0.0; kk]; kk];
    let mut it = corr.iter();
    for a in 0..kk {
        c[a][a] = 1.0;
        for b in a + 1..kk {
            let r = *it.next().expect("length checked");
            check_rho(r)?;
            c[a][b] = r;
            c[b][a] = r;
        }
    }
    let l = cholesky(&c).ok_or_else(|| Error::domain("correlation matrix is not positive definite"))?;
    let ln_det: f64 = l.iter().enumerate().map(|(a, row)| 2.0 * row[a].ln()).sum();
    // P − I with P = C⁻¹
    let cm = nalgebra::DMatrix::from_fn(kk, kk, |a, b| c[a][b]);
    let pinv = cm.cholesky().expect("positive definite").inverse();
    let m = nalgebra::DMatrix::from_fn(kk, kk, |a, b| pinv[(a, b)] - if a == b { 1.0 } else { 0.0 });
    let norm = (-0.5 * ln_det).exp();

    let kernel = MixtureKernel::new(model, cfg.nodes)?;
    let tables: Vec<ColumnTables> = (0..p.dim()).map(|i| ColumnTables::new(&kernel, p.cluster_of(i), &pobs.column(i))).collect();
    let mut tuples: Vec<Vec<usize>> = vec![vec![]];
    for k in 0..kk {
        tuples = tuples.into_iter().flat_map(|t| p.block(k).iter().map(move |&i| [t.clone(), vec![i]].concat())).collect();
    }
    let nodes = kernel.nodes();
    let terms: Vec<(f64, bool)> = tuples
        .par_iter()
        .flat_map_iter(|t| {
            let tables = &tables;
            let m = &m;
            (0..pobs.n()).map(move |row| {
                let axes: Vec<&AxisTable> = t.iter().map(|&i| &tables[i].rows[row]).collect();
                let mut total = 0.0;
                let mut idx = vec![0usize; kk];
                let mut z = vec![0.0; kk];
                'outer: loop {
                    let mut w = 1.0;
                    for (a, &ix) in idx.iter().enumerate() {
                        w *= axes[a].a[ix];
                        z[a] = axes[a].z[ix];
                    }
                    if w != 0.0 {
                        let mut qf = 0.0;
                        for a in 0..kk {
                            for b in 0..kk {
                                qf += z[a] * m[(a, b)] * z[b];
                            }
                        }
                        total += w * (-0.5 * qf).exp();
                    }
                    for a in (0..kk).rev() {
                        idx[a] += 1;
                        if idx[a] < nodes {
                            continue 'outer;
                        }
                        idx[a] = 0;
                    }
                    break;
                }
                floored_ln(total * norm)
            })
        })
        .collect();
    let clipped = tables.iter().map(|t| t.clipped()).max().unwrap_or(0);
    Ok(LogLik { value: terms.iter().map(|t| t.0).sum(), floored: terms.iter().filter(|t| t.1).count(), clipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    #[test]
    fn independence_factorises_into_uniform_margins() {
        let m = presets::model_a();
        let cfg = RadialFitConfig::default();
        let kernel = MixtureKernel::new(&m, cfg.nodes).unwrap();
        for k in 0..3 {
            for v in [0.05, 0.3, 0.5, 0.8, 0.97] {
                let t = kernel.axis(k, v);
                assert!((t.marginal() - 1.0).abs() < 1e-4, "cluster {k} v {v}: {}", t.marginal());
            }
        }
        let t1 = kernel.axis(0, 0.3);
        let t2 = kernel.axis(1, 0.8);
        let f = pair_mixture_density([0.3, 0.8], 0, 1, 0.0, &m, &cfg).unwrap().value;
        assert!((f - t1.marginal() * t2.marginal()).abs() < 1e-13);
    }

    /// Nodes and weights in v from a logit-space rule.
    fn v_rule(panels: usize, span: f64) -> Vec<(f64, f64)> {
        let (t, w) = crate::quadrature::composite(panels, 8, -span, span);
        t.iter().zip(&w).map(|(&t, &w)| {
            let v = 1.0 / (1.0 + (-t).exp());
            (v, w * v * (1.0 - v))
        }).collect()
    }

    #[test]
    fn pair_density_integrates_to_one() {
        let m = presets::model_a();
        let kernel = MixtureKernel::new(&m, 64).unwrap();
        let vs = v_rule(12, 12.0);
        let a: Vec<_> = vs.iter().map(|&(v, _)| kernel.axis(0, v)).collect();
        let b: Vec<_> = vs.iter().map(|&(v, _)| kernel.axis(1, v)).collect();
        let marg: f64 = a.iter().zip(&vs).map(|(t, (_, w))| w * t.marginal()).sum();
        assert!((marg - 1.0).abs() < 1e-4, "{marg}");
        let mut total = 0.0;
        for (ta, (_, wa)) in a.iter().zip(&vs) {
            for (tb, (_, wb)) in b.iter().zip(&vs) {
                total += wa * wb * pair_sum(ta, tb, 0.5);
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn average_and_argument_checks() {
        assert_eq!(cluster_pair_average(&[0.4, 0.6]).unwrap(), 0.5);
        let m = presets::model_a();
        let cfg = RadialFitConfig::default();
        assert!(pair_mixture_density([0.5, 0.5], 0, 0, 0.5, &m, &cfg).is_err());
        assert!(pair_mixture_density([0.5, 1.0], 0, 1, 0.5, &m, &cfg).is_err());
        assert!(RadialFitConfig { nodes: 8, ..cfg }.validate().is_err());
        assert!(RadialFitConfig { bounds: (-1.0, 0.5), ..cfg }.validate().is_err());
    }

    #[test]
    fn swapping_clusters_transposes() {
        let m = presets::model_a();
        let cfg = RadialFitConfig { nodes: 32, ..Default::default() };
        let a = pair_mixture_density([0.2, 0.7], 0, 2, 0.4, &m, &cfg).unwrap().value;
        let b = pair_mixture_density([0.7, 0.2], 2, 0, 0.4, &m, &cfg).unwrap().value;
        assert!((a - b).abs() < 1e-12 * a);
    }
}
