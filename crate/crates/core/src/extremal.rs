//! Extremal behaviour of clustered Archimax copulas: tail classes of the
//! radial variables, the limiting stdf and its closed forms, tail
//! coefficients and empirical χ-curves.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::RngCore;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::generator::{ArchimedeanGenerator, Family};
use crate::mc::chunked_mean;
use crate::model::{ClusteredModelSpec, RadialCopulaSpec};
use crate::numeric::ln_beta;
use crate::quadrature;
use crate::rng::open01;
use crate::sampler::SimplexSampler;
use crate::stdf::{alpha_transform, stdf_eval, IndependenceW, LogisticW, Stdf, WSampler};

/// Tail class of 1/R_k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum TailClass {
    /// Regularly varying with index ρ ∈ (0, 1).
    D1 { rho: f64 },
    /// Finite moment of order 1 + ε.
    D2,
    /// Boundary case (Fréchet index one, infinite mean); not covered.
    Unsupported,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassEntry {
    #[serde(flatten)]
    pub class: TailClass,
    /// E[Z^{−ρ}], Z ~ Beta(1, d_k − 1); D1 only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterClassification {
    pub entries: Vec<ClassEntry>,
}

impl ClusterClassification {
    pub fn d1(&self) -> Vec<usize> {
        self.entries.iter().enumerate().filter(|(_, e)| matches!(e.class, TailClass::D1 { .. })).map(|(k, _)| k).collect()
    }

    fn check_supported(&self) -> Result<()> {
        if let Some(k) = self.entries.iter().position(|e| e.class == TailClass::Unsupported) {
            return Err(Error::capability(format!(
                "cluster {} has a radial variable on the Frechet-1 boundary (e.g. Joe with theta = 1); the limiting stdf is not available",
                k + 1
            )));
        }
        Ok(())
    }
}

pub fn classify_cluster(gen: &ArchimedeanGenerator) -> TailClass {
    match gen.family() {
        Family::Clayton | Family::Frank => TailClass::D2,
        Family::Joe if gen.theta() > 1.0 => TailClass::D1 { rho: 1.0 / gen.theta() },
        Family::Joe => TailClass::Unsupported,
    }
}

pub fn classify_model(model: &ClusteredModelSpec) -> ClusterClassification {
    let entries = model
        .generators
        .iter()
        .zip(model.partition.blocks())
        .map(|(g, blk)| {
            let class = classify_cluster(g);
            let b = match class {
                TailClass::D1 { rho } => beta_rho_moment(rho, blk.len()).ok(),
                _ => None,
            };
            ClassEntry { class, b }
        })
        .collect();
    ClusterClassification { entries }
}

/// b = E[Z^{−ρ}] = (d − 1) B(1 − ρ, d − 1) for Z ~ Beta(1, d − 1).
pub fn beta_rho_moment(rho: f64, d: usize) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::domain(format!("rho must lie in (0, 1), got {rho}")));
    }
    if d < 2 {
        return Err(Error::domain(format!("dimension must be >= 2, got {d}")));
    }
    Ok(((d as f64 - 1.0).ln() + ln_beta(1.0 - rho, d as f64 - 1.0)).exp())
}

/// How the D1 expectation is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum McScheme {
    /// Draw W, integrate the S vectors out exactly through their joint
    /// survival function (a one-dimensional integral per draw).
    #[default]
    ConditionalOnW,
    /// Draw W and every S block jointly.
    Joint,
}

#[derive(Debug, Clone, Default)]
pub struct LimitStdfOptions {
    pub scheme: McScheme,
    /// Overrides the W sampler derived from the radial copula.
    pub w_sampler: Option<Arc<dyn WSampler>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitStdfReport {
    pub estimate: f64,
    pub std_error: f64,
    pub n_mc: usize,
    pub classification: ClusterClassification,
}

/// W sampler for the D1 clusters implied by the radial copula: the logistic
/// generator for a Gumbel Q̄, the independence generator otherwise.
pub fn radial_w_sampler(model: &ClusteredModelSpec) -> Arc<dyn WSampler> {
    let k1 = classify_model(model).d1().len().max(1);
    match model.radial {
        RadialCopulaSpec::GumbelSurvival(t) => Arc::new(LogisticW::new(t, k1).expect("validated parameter")),
        _ => Arc::new(IndependenceW { dim: k1 }),
    }
}

/// ℓ_{1/R} over all K clusters: logistic for a Gumbel Q̄, independence for
/// Gaussian (|ρ| < 1) and independent radial copulas.
pub fn radial_limit_stdf(model: &ClusteredModelSpec) -> Stdf {
    let k = model.n_clusters();
    match model.radial {
        RadialCopulaSpec::GumbelSurvival(t) => Stdf::Logistic { vartheta: t, dim: k },
        _ => Stdf::Independence { dim: k },
    }
}

struct D1Term {
    /// position among the D1 clusters (index into W)
    w_index: usize,
    rho: f64,
    b: f64,
    dim: usize,
    /// c = ℓ(x^{1/ρ}) / b^{1/ρ}
    c: f64,
    x: Vec<f64>,
    sampler: Option<SimplexSampler>,
}

fn block_values(model: &ClusteredModelSpec, x: &[f64], k: usize) -> Vec<f64> {
    model.partition.block(k).iter().map(|&i| x[i]).collect()
}

fn check_x(model: &ClusteredModelSpec, x: &[f64]) -> Result<()> {
    check_dim(model.dim(), x.len())?;
    if x.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::domain("stdf arguments must be finite and non-negative"));
    }
    Ok(())
}

/// Σ_{k∈D2} ℓ_k(x_k) and the D1 terms with a non-zero argument.
fn prepare(model: &ClusteredModelSpec, x: &[f64], class: &ClusterClassification, joint: bool) -> Result<(f64, Vec<D1Term>)> {
    let mut d2 = 0.0;
    let mut terms = Vec::new();
    let mut w_index = 0;
    for (k, e) in class.entries.iter().enumerate() {
        let xk = block_values(model, x, k);
        match e.class {
            TailClass::D2 => d2 += stdf_eval(&model.stdfs[k], &xk)?,
            TailClass::D1 { rho } => {
                let b = e.b.expect("D1 entries carry b");
                if xk.iter().any(|v| *v > 0.0) {
                    let xr: Vec<f64> = xk.iter().map(|v| v.powf(1.0 / rho)).collect();
                    let c = stdf_eval(&model.stdfs[k], &xr)? / b.powf(1.0 / rho);
                    let nonzero = xk.iter().filter(|v| **v > 0.0).count();
                    let sampler = if joint && nonzero > 1 { Some(SimplexSampler::new(&model.stdfs[k])?) } else { None };
                    terms.push(D1Term { w_index, rho, b, dim: xk.len(), c, x: xk, sampler });
                }
                w_index += 1;
            }
            TailClass::Unsupported => unreachable!("checked before"),
        }
    }
    Ok((d2, terms))
}

/// E[max_k w_k Y_k] for fixed w, with P(Y_k ≤ y) = (1 − c_k y^{−1/ρ_k})_+^{d_k−1}.
fn conditional_expectation(terms: &[D1Term], w: &[f64]) -> f64 {
    let active: Vec<(f64, f64, i32)> = terms
        .iter()
        .filter_map(|t| {
            let wk = w[t.w_index];
            (wk > 0.0).then(|| (wk * t.c.powf(t.rho), 1.0 / t.rho, t.dim as i32 - 1))
        })
        .collect();
    if active.is_empty() {
        return 0.0;
    }
    // P(max > t) = 1 − Π_k (1 − (a_k/t)^{1/ρ_k})_+^{d_k−1}, a_k = w_k c_k^{ρ_k}
    let t0 = active.iter().map(|a| a.0).fold(0.0, f64::max);
    let rho_max = terms.iter().map(|t| t.rho).fold(0.0, f64::max);
    let gamma = rho_max / (1.0 - rho_max);
    // t = t0 v^{−γ}, v ∈ (0, 1]
    let integrand = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let ratio = v.powf(gamma); // t0 / t
        let mut ln_prod = 0.0;
        for &(a, inv_rho, pw) in &active {
            let z = ((a / t0) * ratio).powf(inv_rho);
            if z >= 1.0 {
                ln_prod = f64::NEG_INFINITY;
                break;
            }
            ln_prod += pw as f64 * (-z).ln_1p();
        }
        let tail = -ln_prod.exp_m1();
        tail * gamma * t0 * v.powf(-gamma - 1.0)
    };
    let q = quadrature::adaptive(integrand, 0.0, 1.0, 1e-12 * t0, 1e-10, 200);
    t0 + q.value
}

fn joint_draw(terms: &[D1Term], w: &[f64], rng: &mut dyn RngCore) -> f64 {
    let mut best = 0.0_f64;
    let mut s = Vec::new();
    for t in terms {
        let wk = w[t.w_index];
        let y = match &t.sampler {
            Some(sampler) => {
                s.resize(t.dim, 0.0);
                sampler.sample(rng, &mut s).expect("closed-form simplex sampler");
                t.x.iter().zip(&s).filter(|(x, _)| **x > 0.0).map(|(x, s)| x / (t.b * s.powf(t.rho))).fold(0.0, f64::max)
            }
            None => {
                // single non-zero coordinate: Beta(1, d − 1) margin
                let x = t.x.iter().cloned().fold(0.0, f64::max);
                let z = -(open01(rng).ln() / (t.dim as f64 - 1.0)).exp_m1();
                x / (t.b * z.powf(t.rho))
            }
        };
        best = best.max(wk * y);
    }
    best
}

/// Monte Carlo evaluation of the limiting stdf at `x` (original variable
/// order), with the default scheme and W sampler.
pub fn limit_stdf_eval(model: &ClusteredModelSpec, x: &[f64], n_mc: usize, seed: u64) -> Result<LimitStdfReport> {
    limit_stdf_eval_with(model, x, n_mc, seed, &LimitStdfOptions::default())
}

pub fn limit_stdf_eval_with(model: &ClusteredModelSpec, x: &[f64], n_mc: usize, seed: u64, opts: &LimitStdfOptions) -> Result<LimitStdfReport> {
    check_x(model, x)?;
    if n_mc == 0 {
        return Err(Error::domain("Monte Carlo budget must be positive"));
    }
    let classification = classify_model(model);
    classification.check_supported()?;
    let joint = opts.scheme == McScheme::Joint;
    let (d2, terms) = prepare(model, x, &classification, joint)?;
    if terms.is_empty() {
        return Ok(LimitStdfReport { estimate: d2, std_error: 0.0, n_mc, classification });
    }
    let w_sampler = opts.w_sampler.clone().unwrap_or_else(|| radial_w_sampler(model));
    let k1 = classification.d1().len();
    if w_sampler.dim() != k1 {
        return Err(Error::Dimension { expected: k1, got: w_sampler.dim() });
    }
    let mc = chunked_mean(n_mc, seed, |rng| {
        let mut w = vec![0.0; k1];
        w_sampler.sample(rng, &mut w);
        if joint {
            joint_draw(&terms, &w, rng)
        } else {
            conditional_expectation(&terms, &w)
        }
    });
    Ok(LimitStdfReport { estimate: d2 + mc.estimate, std_error: mc.std_error, n_mc, classification })
}

/// Closed form when the D1 radial variables are asymptotically independent:
/// Σ_{D1} ℓ_k^{ρ_k}(x_k^{1/ρ_k}) + Σ_{D2} ℓ_k(x_k).
pub fn limit_stdf_ai(model: &ClusteredModelSpec, x: &[f64]) -> Result<f64> {
    check_x(model, x)?;
    let class = classify_model(model);
    class.check_supported()?;
    let mut total = 0.0;
    for (k, e) in class.entries.iter().enumerate() {
        let xk = block_values(model, x, k);
        let l = match e.class {
            TailClass::D1 { rho } => alpha_transform(&model.stdfs[k], rho)?,
            _ => model.stdfs[k].clone(),
        };
        total += stdf_eval(&l, &xk)?;
    }
    Ok(total)
}

/// Limiting stdf of cluster k alone: ℓ_k transformed by ρ_k for D1, ℓ_k for D2.
pub fn cluster_limit_stdf(model: &ClusteredModelSpec, k: usize) -> Result<Stdf> {
    match classify_cluster(&model.generators[k]) {
        TailClass::D1 { rho } => alpha_transform(&model.stdfs[k], rho),
        TailClass::D2 => Ok(model.stdfs[k].clone()),
        TailClass::Unsupported => Err(Error::capability(format!("cluster {} is on the Frechet-1 boundary", k + 1))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderingCheck {
    /// ℓ_{1/R}(x′)
    pub lhs: f64,
    /// limiting stdf at the embedded point
    pub rhs: f64,
    pub rhs_std_error: f64,
}

/// Compares ℓ_{1/R}(x′) with the limiting stdf at x, where x carries x′_k at
/// the first variable of cluster k and zero elsewhere.
pub fn check_radial_ordering(model: &ClusteredModelSpec, x_prime: &[f64], n_mc: usize, seed: u64) -> Result<OrderingCheck> {
    let k = model.n_clusters();
    check_dim(k, x_prime.len())?;
    let mut x = vec![0.0; model.dim()];
    for (c, &v) in x_prime.iter().enumerate() {
        x[model.partition.block(c)[0]] = v;
    }
    let lhs = stdf_eval(&radial_limit_stdf(model), x_prime)?;
    let rep = limit_stdf_eval(model, &x, n_mc, seed)?;
    Ok(OrderingCheck { lhs, rhs: rep.estimate, rhs_std_error: rep.std_error })
}

/// λ_ij of the limiting extreme-value copula.
///
/// Within a cluster this is the closed form 2 − ℓ_α(1, 1); across clusters it
/// is exactly zero whenever one of them is D2 or the D1 radial variables are
/// asymptotically independent, and a Monte Carlo estimate otherwise.
pub fn pairwise_limit_lambda(model: &ClusteredModelSpec, i: usize, j: usize, n_mc: usize, seed: u64) -> Result<f64> {
    let d = model.dim();
    if i >= d || j >= d || i == j {
        return Err(Error::domain(format!("need two distinct variables below {d}, got {i} and {j}")));
    }
    let class = classify_model(model);
    class.check_supported()?;
    let (ki, _) = model.partition.locate(i);
    let (kj, _) = model.partition.locate(j);
    let mut x = vec![0.0; d];
    x[i] = 1.0;
    x[j] = 1.0;
    if ki == kj {
        let l = cluster_limit_stdf(model, ki)?;
        let v = stdf_eval(&l, &block_values(model, &x, ki))?;
        return Ok((2.0 - v).clamp(0.0, 1.0));
    }
    let both_d1 = matches!(class.entries[ki].class, TailClass::D1 { .. }) && matches!(class.entries[kj].class, TailClass::D1 { .. });
    if !both_d1 || !matches!(model.radial, RadialCopulaSpec::GumbelSurvival(t) if t > 1.0) {
        return Ok(0.0);
    }
    let rep = limit_stdf_eval(model, &x, n_mc, seed)?;
    Ok((2.0 - rep.estimate).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiPoint {
    pub q: f64,
    pub p_hat: f64,
    pub chi: f64,
    pub lower: f64,
    pub upper: f64,
    /// No joint exceedance below q was observed; χ̂ is not defined.
    pub degenerate: bool,
}

/// χ̂(q) = 2 − ln p̂ / ln q with p̂ the empirical P(U_i < q, U_j < q), and a
/// delta-method 95% interval.
pub fn chi_curve_empirical(data: &DMatrix<f64>, i: usize, j: usize, q_grid: &[f64]) -> Result<Vec<ChiPoint>> {
    let (n, d) = data.shape();
    if i >= d || j >= d {
        return Err(Error::domain(format!("column index out of range for {d} columns")));
    }
    if n == 0 {
        return Err(Error::domain("empty data"));
    }
    let ci = data.column(i);
    let cj = data.column(j);
    q_grid
        .iter()
        .map(|&q| {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::domain(format!("threshold must be in (0, 1), got {q}")));
            }
            let count = ci.iter().zip(cj.iter()).filter(|(a, b)| **a < q && **b < q).count();
            let p = count as f64 / n as f64;
            let lq = q.ln();
            if count == 0 {
                return Ok(ChiPoint { q, p_hat: 0.0, chi: f64::NAN, lower: f64::NAN, upper: f64::NAN, degenerate: true });
            }
            let chi = 2.0 - p.ln() / lq;
            let se = (p * (1.0 - p) / n as f64).sqrt() / (p * lq.abs());
            Ok(ChiPoint { q, p_hat: p, chi, lower: chi - 1.959_963_984_540_054 * se, upper: chi + 1.959_963_984_540_054 * se, degenerate: false })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    #[test]
    fn classification() {
        assert_eq!(classify_cluster(&ArchimedeanGenerator::clayton(1.5).unwrap()), TailClass::D2);
        assert_eq!(classify_cluster(&ArchimedeanGenerator::frank(3.0).unwrap()), TailClass::D2);
        assert_eq!(classify_cluster(&ArchimedeanGenerator::joe(2.0).unwrap()), TailClass::D1 { rho: 0.5 });
        assert_eq!(classify_cluster(&ArchimedeanGenerator::joe(1.0).unwrap()), TailClass::Unsupported);
    }

    #[test]
    fn beta_moment_values() {
        assert!((beta_rho_moment(0.5, 3).unwrap() - 8.0 / 3.0).abs() < 1e-12);
        assert!((beta_rho_moment(2.0 / 3.0, 3).unwrap() - 4.5).abs() < 1e-12);
        assert!((beta_rho_moment(1e-9, 4).unwrap() - 1.0).abs() < 1e-8);
        assert!(beta_rho_moment(1.0, 3).is_err());
    }

    #[test]
    fn unit_vectors() {
        let m = presets::model_b();
        let mut x = vec![0.0; 9];
        x[0] = 1.0;
        let r = limit_stdf_eval(&m, &x, 1000, 1).unwrap();
        assert_eq!(r.estimate, 1.0);
        let mut x = vec![0.0; 9];
        x[4] = 1.0;
        let r = limit_stdf_eval(&m, &x, 20_000, 1).unwrap();
        assert!((r.estimate - 1.0).abs() < 3.0 * r.std_error + 1e-12, "{r:?}");
    }

    #[test]
    fn ai_closed_form_all_ones() {
        let m = presets::model_a();
        let v = limit_stdf_ai(&m, &[1.0; 9]).unwrap();
        let expect = 3f64.powf(0.8) + 2.0 * 3f64.powf(1.0 / 3.0);
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn boundary_cluster_is_a_capability_error() {
        let mut m = presets::model_b();
        m.generators[1] = ArchimedeanGenerator::joe(1.0).unwrap();
        assert!(matches!(limit_stdf_eval(&m, &[1.0; 9], 10, 1), Err(Error::Capability(_))));
    }

    #[test]
    fn chi_degenerate_flag() {
        let data = DMatrix::from_row_slice(3, 2, &[0.9, 0.1, 0.2, 0.95, 0.5, 0.6]);
        let pts = chi_curve_empirical(&data, 0, 1, &[0.15, 0.7]).unwrap();
        assert!(pts[0].degenerate);
        assert!(!pts[1].degenerate);
    }
}
