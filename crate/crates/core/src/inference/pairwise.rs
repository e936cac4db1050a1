//! Estimation of (θ, ϑ) on bivariate margins of a cluster.
//!
//! A bivariate margin of an Archimax copula with a logistic stdf is the
//! Archimax copula C(u, v) = ψ_θ(ℓ_ϑ(φ_θ(u), φ_θ(v))). Estimators: maximum
//! pseudo-likelihood on its density with ϑ common to the pairs of a cluster
//! (default), the same with ϑ free per pair, and inversion of the
//! (Kendall τ, Spearman ρ) moment map.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{ArchimedeanGenerator, Family, Generator};
use crate::inference::pseudo::PseudoObservations;
use crate::inference::shared::{fit_shared_cluster, start_from};
use crate::model::ClusterPartition;
use crate::numeric::solve2;
use crate::quadrature::composite;

/// Floor applied to log-density terms that underflow.
pub const LOG_FLOOR: f64 = -745.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairwiseMethod {
    #[default]
    SharedPseudoLikelihood,
    PseudoLikelihood,
    MomentInversion,
}

/// Search box for (θ, ϑ). Optimisation runs in (ln θ, ln ϑ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamBox {
    pub theta: (f64, f64),
    pub vartheta: (f64, f64),
}

impl ParamBox {
    pub fn for_family(family: Family) -> Self {
        let theta = match family {
            Family::Clayton => (1e-3, 30.0),
            Family::Joe => (1.0, 30.0),
            Family::Frank => (1e-3, 60.0),
        };
        Self { theta, vartheta: (1.0, 20.0) }
    }

    pub(crate) fn lo(&self) -> [f64; 2] {
        [self.theta.0.ln(), self.vartheta.0.ln()]
    }

    pub(crate) fn hi(&self) -> [f64; 2] {
        [self.theta.1.ln(), self.vartheta.1.ln()]
    }

    pub(crate) fn natural(&self, p: [f64; 2]) -> (f64, f64) {
        (
            p[0].exp().clamp(self.theta.0, self.theta.1),
            p[1].exp().clamp(self.vartheta.0, self.vartheta.1),
        )
    }

    pub(crate) fn coords(&self, theta: f64, vartheta: f64) -> [f64; 2] {
        project([theta.ln(), vartheta.ln()], self.lo(), self.hi())
    }
}

pub(crate) fn project(p: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(lo[0], hi[0]), p[1].clamp(lo[1], hi[1])]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairFit {
    pub theta: f64,
    pub vartheta: f64,
    /// Pseudo log-likelihood at the estimate, or the residual norm of the
    /// moment equations.
    pub objective: f64,
    /// The estimate sits on the edge of the search box (for the moment
    /// method: the moment equations have no root inside it).
    pub at_boundary: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairFitConfig {
    pub method: PairwiseMethod,
    /// Start-grid points per axis.
    pub grid: usize,
    pub max_iter: usize,
    /// Gauss–Legendre nodes per axis for the moment map.
    pub moment_nodes: usize,
}

impl Default for PairFitConfig {
    fn default() -> Self {
        Self { method: PairwiseMethod::default(), grid: 7, max_iter: 100, moment_nodes: 128 }
    }
}

fn logaddexp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Shared pieces of C(u, v) at one point.
struct PairPoint {
    ln_l: f64,
    lx: f64,
    ly: f64,
}

fn pair_point(g: &ArchimedeanGenerator, vartheta: f64, u: f64, v: f64) -> PairPoint {
    let lx = g.phi(u).ln();
    let ly = g.phi(v).ln();
    let ln_s = logaddexp(vartheta * lx, vartheta * ly);
    PairPoint { ln_l: ln_s / vartheta, lx, ly }
}

/// ln c(u, v) without argument checks; underflow is floored.
pub(crate) fn ln_density(g: &ArchimedeanGenerator, vartheta: f64, u: f64, v: f64) -> f64 {
    let PairPoint { ln_l, lx, ly } = pair_point(g, vartheta, u, v);
    let l = ln_l.exp();
    let d2 = g.ln_abs_derivative(2, l).unwrap_or(f64::NAN);
    let mut lc = d2 + (vartheta - 1.0) * (lx + ly - 2.0 * ln_l);
    if vartheta > 1.0 {
        let d1 = g.ln_abs_derivative(1, l).unwrap_or(f64::NAN);
        let t2 = d1 + (vartheta - 1.0).ln() + (vartheta - 1.0) * (lx + ly) + (1.0 - 2.0 * vartheta) * ln_l;
        lc = logaddexp(lc, t2);
    }
    let r = lc + g.ln_neg_phi_prime(u) + g.ln_neg_phi_prime(v);
    if r.is_nan() {
        LOG_FLOOR
    } else {
        r.max(LOG_FLOOR)
    }
}

fn check_pair_args(theta: f64, vartheta: f64, family: Family, u: f64, v: f64) -> Result<ArchimedeanGenerator> {
    if !(vartheta >= 1.0 && vartheta.is_finite()) {
        return Err(Error::domain(format!("logistic parameter must be >= 1, got {vartheta}")));
    }
    if !(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0) {
        return Err(Error::domain(format!("({u}, {v}) is not in the open unit square")));
    }
    ArchimedeanGenerator::new(family, theta)
}

/// ln of the density of the bivariate Archimax copula (ψ_θ, logistic ϑ).
pub fn pair_log_density(family: Family, theta: f64, vartheta: f64, u: f64, v: f64) -> Result<f64> {
    let g = check_pair_args(theta, vartheta, family, u, v)?;
    Ok(ln_density(&g, vartheta, u, v))
}

/// C(u, v) of the same copula on the closed unit square.
pub fn pair_cdf(family: Family, theta: f64, vartheta: f64, u: f64, v: f64) -> Result<f64> {
    if !((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)) {
        return Err(Error::domain(format!("({u}, {v}) is not in the unit square")));
    }
    let g = check_pair_args(theta, vartheta, family, 0.5, 0.5)?;
    if u == 0.0 || v == 0.0 {
        return Ok(0.0);
    }
    if u == 1.0 || v == 1.0 {
        return Ok(u.min(v));
    }
    Ok(g.psi(pair_point(&g, vartheta, u, v).ln_l.exp()))
}

/// Sum of ln c over the sample.
pub fn pair_log_likelihood(family: Family, theta: f64, vartheta: f64, u: &[f64], v: &[f64]) -> Result<f64> {
    crate::error::check_dim(u.len(), v.len())?;
    let g = check_pair_args(theta, vartheta, family, 0.5, 0.5)?;
    if let Some(bad) = u.iter().chain(v).find(|x| !(**x > 0.0 && **x < 1.0)) {
        return Err(Error::domain(format!("pseudo-observation {bad} is not in (0, 1)")));
    }
    Ok(u.iter().zip(v).map(|(&a, &b)| ln_density(&g, vartheta, a, b)).sum())
}

/// Nine-point finite-difference stencil in (ln θ, ln ϑ). Each axis is
/// centred unless a box edge forces a one-sided rule.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    offsets: [[f64; 3]; 2],
    center: [f64; 2],
    d0: [[f64; 3]; 2],
    d1: [[f64; 3]; 2],
    d2: [[f64; 3]; 2],
}

pub(crate) const FD_STEP: f64 = 2e-4;

impl Stencil {
    pub(crate) fn new(p: [f64; 2], lo: [f64; 2], hi: [f64; 2], h: f64) -> Self {
        let mut s = Stencil { offsets: [[0.0; 3]; 2], center: p, d0: [[0.0; 3]; 2], d1: [[0.0; 3]; 2], d2: [[0.0; 3]; 2] };
        for c in 0..2 {
            let second = [1.0 / (h * h), -2.0 / (h * h), 1.0 / (h * h)];
            let (off, d0, d1) = if p[c] - h < lo[c] {
                ([0.0, h, 2.0 * h], [1.0, 0.0, 0.0], [-1.5 / h, 2.0 / h, -0.5 / h])
            } else if p[c] + h > hi[c] {
                ([-2.0 * h, -h, 0.0], [0.0, 0.0, 1.0], [0.5 / h, -2.0 / h, 1.5 / h])
            } else {
                ([-h, 0.0, h], [0.0, 1.0, 0.0], [-0.5 / h, 0.0, 0.5 / h])
            };
            s.offsets[c] = off;
            s.d0[c] = d0;
            s.d1[c] = d1;
            s.d2[c] = second;
        }
        s
    }

    pub(crate) fn points(&self) -> [[f64; 2]; 9] {
        let mut pts = [[0.0; 2]; 9];
        for a in 0..3 {
            for b in 0..3 {
                pts[3 * a + b] = [self.center[0] + self.offsets[0][a], self.center[1] + self.offsets[1][b]];
            }
        }
        pts
    }

    /// Gradient and Hessian at the centre from values at `points()`.
    pub(crate) fn derivatives(&self, f: &[f64; 9]) -> ([f64; 2], [[f64; 2]; 2]) {
        let mut g = [0.0; 2];
        let mut h = [[0.0; 2]; 2];
        for a in 0..3 {
            for b in 0..3 {
                let v = f[3 * a + b];
                g[0] += self.d1[0][a] * self.d0[1][b] * v;
                g[1] += self.d0[0][a] * self.d1[1][b] * v;
                h[0][0] += self.d2[0][a] * self.d0[1][b] * v;
                h[1][1] += self.d0[0][a] * self.d2[1][b] * v;
                h[0][1] += self.d1[0][a] * self.d1[1][b] * v;
            }
        }
        h[1][0] = h[0][1];
        (g, h)
    }
}

/// Newton step for maximisation, restricted to the coordinates that are not
/// pinned to a bound by the gradient. `None` when no ascent direction exists.
pub(crate) fn ascent_step(p: [f64; 2], g: [f64; 2], h: [[f64; 2]; 2], lo: [f64; 2], hi: [f64; 2]) -> Option<[f64; 2]> {
    let eps = 1e-12;
    let free: Vec<usize> = (0..2)
        .filter(|&c| !((p[c] <= lo[c] + eps && g[c] < 0.0) || (p[c] >= hi[c] - eps && g[c] > 0.0)))
        .collect();
    let mut s = [0.0; 2];
    match free.as_slice() {
        [] => return None,
        [c] => {
            let c = *c;
            s[c] = if h[c][c] < 0.0 { -g[c] / h[c][c] } else { g[c] / h[c][c].abs().max(1.0) };
        }
        _ => {
            let neg_def = h[0][0] < 0.0 && h[0][0] * h[1][1] - h[0][1] * h[1][0] > 0.0;
            s = match (neg_def, solve2(h, g)) {
                (true, Some(x)) => [-x[0], -x[1]],
                _ => [g[0] / h[0][0].abs().max(1.0), g[1] / h[1][1].abs().max(1.0)],
            };
        }
    }
    Some(s)
}

/// Projected Newton ascent with backtracking. Returns (argmax, max, iterations).
pub(crate) fn maximize<F: Fn([f64; 2]) -> f64>(obj: F, start: [f64; 2], lo: [f64; 2], hi: [f64; 2], max_iter: usize) -> ([f64; 2], f64, usize) {
    let mut p = start;
    let mut f = obj(p);
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let st = Stencil::new(p, lo, hi, FD_STEP);
        let vals = st.points().map(&obj);
        let (g, h) = st.derivatives(&vals);
        let Some(mut s) = ascent_step(p, g, h, lo, hi) else { break };
        let len = s[0].abs().max(s[1].abs());
        if len > 1.0 {
            s = [s[0] / len, s[1] / len];
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-10 {
            let q = project([p[0] + t * s[0], p[1] + t * s[1]], lo, hi);
            let fq = obj(q);
            let gain = g[0] * (q[0] - p[0]) + g[1] * (q[1] - p[1]);
            if fq >= f + 1e-4 * gain.max(0.0) && fq.is_finite() {
                accepted = Some((q, fq));
                break;
            }
            t *= 0.5;
        }
        let Some((q, fq)) = accepted else { break };
        let moved = (q[0] - p[0]).abs().max((q[1] - p[1]).abs());
        p = q;
        f = fq;
        if moved < 1e-9 {
            break;
        }
    }
    (p, f, it)
}

pub(crate) fn on_boundary(p: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> bool {
    (0..2).any(|c| p[c] <= lo[c] + 1e-9 || p[c] >= hi[c] - 1e-9)
}

fn grid_points(lo: [f64; 2], hi: [f64; 2], n: usize) -> Vec<[f64; 2]> {
    let n = n.max(2);
    let mut v = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let ta = a as f64 / (n - 1) as f64;
            let tb = b as f64 / (n - 1) as f64;
            v.push([lo[0] + ta * (hi[0] - lo[0]), lo[1] + tb * (hi[1] - lo[1])]);
        }
    }
    v
}

fn check_sample(u: &[f64], v: &[f64]) -> Result<()> {
    crate::error::check_dim(u.len(), v.len())?;
    if u.len() < 20 {
        return Err(Error::domain(format!("pairwise fitting needs at least 20 observations, got {}", u.len())));
    }
    if let Some(bad) = u.iter().chain(v).find(|x| !(**x > 0.0 && **x < 1.0)) {
        return Err(Error::domain(format!("pseudo-observation {bad} is not in (0, 1)")));
    }
    Ok(())
}

/// Maximum pseudo-likelihood estimate of (θ, ϑ).
pub fn fit_pseudo_likelihood(u: &[f64], v: &[f64], family: Family, cfg: &PairFitConfig) -> Result<PairFit> {
    check_sample(u, v)?;
    let bx = ParamBox::for_family(family);
    let (lo, hi) = (bx.lo(), bx.hi());
    let obj = |p: [f64; 2]| -> f64 {
        let (th, vt) = bx.natural(p);
        let g = ArchimedeanGenerator::new(family, th).expect("box inside the family domain");
        u.iter().zip(v).map(|(&a, &b)| ln_density(&g, vt, a, b)).sum()
    };
    let start = grid_points(lo, hi, cfg.grid)
        .into_iter()
        .map(|p| (p, obj(p)))
        .filter(|(_, f)| f.is_finite())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::numerical("pseudo-likelihood is not finite anywhere on the start grid"))?
        .0;
    let (p, f, iterations) = maximize(obj, start, lo, hi, cfg.max_iter);
    if !f.is_finite() {
        return Err(Error::numerical("pseudo-likelihood maximisation diverged"));
    }
    let (theta, vartheta) = bx.natural(p);
    Ok(PairFit { theta, vartheta, objective: f, at_boundary: on_boundary(p, lo, hi), iterations })
}

/// Kendall's τ_a, by direct pair counting.
pub fn kendall_tau(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            s += ((u[a] - u[b]) * (v[a] - v[b])).signum() * ((u[a] != u[b] && v[a] != v[b]) as i32 as f64);
        }
    }
    2.0 * s / (n as f64 * (n as f64 - 1.0))
}

/// Spearman's ρ: Pearson correlation of the (average) ranks.
pub fn spearman_rho(u: &[f64], v: &[f64]) -> f64 {
    let ru = crate::inference::pseudo::average_ranks(u);
    let rv = crate::inference::pseudo::average_ranks(v);
    pearson(&ru, &rv)
}

pub(crate) fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Tensor quadrature on (0, 1)² for the moment map.
#[derive(Debug, Clone)]
pub struct MomentGrid {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl MomentGrid {
    pub fn new(nodes_per_axis: usize) -> Self {
        let order = 8;
        let panels = nodes_per_axis.div_ceil(order).max(1);
        let (x, w) = composite(panels, order, 0.0, 1.0);
        Self { x, w }
    }
}

/// (τ, ρ_S) of the bivariate Archimax copula, by ρ_S = 12∬C − 3 and
/// τ = 1 − 4∬ ∂_u C ∂_v C.
pub fn pair_moments(family: Family, theta: f64, vartheta: f64, grid: &MomentGrid) -> Result<(f64, f64)> {
    let g = check_pair_args(theta, vartheta, family, 0.5, 0.5)?;
    let lx: Vec<f64> = grid.x.iter().map(|&u| g.phi(u).ln()).collect();
    let ld: Vec<f64> = grid.x.iter().map(|&u| g.ln_neg_phi_prime(u)).collect();
    let (mut int_c, mut int_cc) = (0.0, 0.0);
    for (a, (&la, &wa)) in lx.iter().zip(&grid.w).enumerate() {
        for (b, (&lb, &wb)) in lx.iter().zip(&grid.w).enumerate() {
            let ln_l = logaddexp(vartheta * la, vartheta * lb) / vartheta;
            let l = ln_l.exp();
            let c = g.psi(l);
            let d1 = g.ln_abs_derivative(1, l).unwrap_or(f64::NAN);
            // ∂_u C = |ψ'(L)| (x/L)^{ϑ−1} |φ'(u)|
            let cu = (d1 + (vartheta - 1.0) * (la - ln_l) + ld[a]).exp();
            let cv = (d1 + (vartheta - 1.0) * (lb - ln_l) + ld[b]).exp();
            let w = wa * wb;
            int_c += w * c;
            if cu.is_finite() && cv.is_finite() {
                int_cc += w * cu.min(1.0) * cv.min(1.0);
            }
        }
    }
    Ok((1.0 - 4.0 * int_cc, 12.0 * int_c - 3.0))
}

/// Solve (τ, ρ_S)(θ, ϑ) = (τ̂, ρ̂) by damped Newton from the best points of a
/// coarse start grid.
pub fn fit_moment_inversion(u: &[f64], v: &[f64], family: Family, cfg: &PairFitConfig) -> Result<PairFit> {
    check_sample(u, v)?;
    let target = [kendall_tau(u, v), spearman_rho(u, v)];
    solve_moments(target, family, cfg, &MomentGrid::new(cfg.moment_nodes)).map(|(fit, _)| fit)
}

fn moment_residual(p: [f64; 2], bx: &ParamBox, family: Family, grid: &MomentGrid, target: [f64; 2]) -> Result<[f64; 2]> {
    let (th, vt) = bx.natural(p);
    let (t, r) = pair_moments(family, th, vt, grid)?;
    Ok([t - target[0], r - target[1]])
}

fn norm2(f: [f64; 2]) -> f64 {
    f[0].hypot(f[1])
}

/// Forward-difference Jacobian of the moment map in (ln θ, ln ϑ).
pub(crate) fn moment_jacobian(p: [f64; 2], bx: &ParamBox, family: Family, grid: &MomentGrid, f0: [f64; 2], target: [f64; 2]) -> Result<[[f64; 2]; 2]> {
    let (lo, hi) = (bx.lo(), bx.hi());
    let h = 1e-5;
    let mut j = [[0.0; 2]; 2];
    for c in 0..2 {
        let sgn = if p[c] + h > hi[c] { -1.0 } else { 1.0 };
        let mut q = p;
        q[c] += sgn * h;
        let q = project(q, lo, hi);
        let f1 = moment_residual(q, bx, family, grid, target)?;
        for r in 0..2 {
            j[r][c] = (f1[r] - f0[r]) / (q[c] - p[c]);
        }
    }
    Ok(j)
}

/// Returns the fit and the Jacobian of the moment map at the estimate.
pub(crate) fn solve_moments(target: [f64; 2], family: Family, cfg: &PairFitConfig, grid: &MomentGrid) -> Result<(PairFit, [[f64; 2]; 2])> {
    let bx = ParamBox::for_family(family);
    let (lo, hi) = (bx.lo(), bx.hi());
    let mut starts: Vec<([f64; 2], f64)> = Vec::new();
    for p in grid_points(lo, hi, cfg.grid.min(5)) {
        let f = norm2(moment_residual(p, &bx, family, grid, target)?);
        if f.is_finite() {
            starts.push((p, f));
        }
    }
    starts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut best: Option<([f64; 2], f64, usize)> = None;
    for &(start, _) in starts.iter().take(3) {
        let mut p = start;
        let mut f = moment_residual(p, &bx, family, grid, target)?;
        let mut it = 0;
        while it < cfg.max_iter.min(60) && norm2(f) > 1e-11 {
            it += 1;
            let j = moment_jacobian(p, &bx, family, grid, f, target)?;
            let Some(s) = solve2(j, f) else { break };
            let mut t = 1.0;
            let mut next = None;
            while t > 1e-8 {
                let q = project([p[0] - t * s[0], p[1] - t * s[1]], lo, hi);
                let fq = moment_residual(q, &bx, family, grid, target)?;
                if norm2(fq) < norm2(f) {
                    next = Some((q, fq));
                    break;
                }
                t *= 0.5;
            }
            let Some((q, fq)) = next else { break };
            p = q;
            f = fq;
        }
        let r = norm2(f);
        if best.is_none_or(|b| r < b.1) {
            best = Some((p, r, it));
        }
        if r < 1e-9 {
            break;
        }
    }
    let (p, r, iterations) = best.ok_or_else(|| Error::numerical("moment map is not finite on the start grid"))?;
    if !r.is_finite() {
        return Err(Error::numerical("moment inversion did not converge"));
    }
    let f = moment_residual(p, &bx, family, grid, target)?;
    let jac = moment_jacobian(p, &bx, family, grid, f, target)?;
    let (theta, vartheta) = bx.natural(p);
    let fit = PairFit { theta, vartheta, objective: r, at_boundary: r > 1e-6 || on_boundary(p, lo, hi), iterations };
    Ok((fit, jac))
}

/// Fit one pair by the configured method. On a lone pair the shared and
/// per-pair likelihood methods coincide.
pub fn pairwise_theta_fit(u: &[f64], v: &[f64], family: Family, cfg: &PairFitConfig) -> Result<PairFit> {
    match cfg.method {
        PairwiseMethod::PseudoLikelihood | PairwiseMethod::SharedPseudoLikelihood => fit_pseudo_likelihood(u, v, family, cfg),
        PairwiseMethod::MomentInversion => fit_moment_inversion(u, v, family, cfg),
    }
}

/// Intra-cluster pairs (k, i, j), i < j, ordered lexicographically.
pub fn intra_cluster_pairs(partition: &ClusterPartition) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (k, b) in partition.sorted_blocks().iter().enumerate() {
        for (a, &i) in b.iter().enumerate() {
            for &j in &b[a + 1..] {
                out.push((k, i, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairEntry {
    pub cluster: usize,
    pub i: usize,
    pub j: usize,
    pub fit: PairFit,
}

/// Fits for every intra-cluster pair, in `intra_cluster_pairs` order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseEstimates {
    pub dim: usize,
    pub families: Vec<Family>,
    pub entries: Vec<PairEntry>,
}

impl PairwiseEstimates {
    pub fn get(&self, i: usize, j: usize) -> Option<&PairFit> {
        let (i, j) = (i.min(j), i.max(j));
        self.entries.iter().find(|e| e.i == i && e.j == j).map(|e| &e.fit)
    }

    pub fn thetas(&self) -> BTreeMap<(usize, usize), f64> {
        self.entries.iter().map(|e| ((e.i, e.j), e.fit.theta)).collect()
    }

    fn matrix(&self, f: impl Fn(&PairFit) -> f64) -> DMatrix<f64> {
        let mut m = DMatrix::from_element(self.dim, self.dim, f64::NAN);
        for e in &self.entries {
            m[(e.i, e.j)] = f(&e.fit);
            m[(e.j, e.i)] = f(&e.fit);
        }
        m
    }

    /// Symmetric d×d matrix of θ̂ (NaN outside clusters).
    pub fn theta_matrix(&self) -> DMatrix<f64> {
        self.matrix(|f| f.theta)
    }

    pub fn vartheta_matrix(&self) -> DMatrix<f64> {
        self.matrix(|f| f.vartheta)
    }
}

pub(crate) fn check_families(families: &[Family], partition: &ClusterPartition) -> Result<()> {
    if families.len() != partition.n_clusters() {
        return Err(Error::Dimension { expected: partition.n_clusters(), got: families.len() });
    }
    Ok(())
}

pub fn fit_intra_cluster_pairs(pobs: &PseudoObservations, families: &[Family], cfg: &PairFitConfig) -> Result<PairwiseEstimates> {
    check_families(families, &pobs.partition)?;
    let pairs = intra_cluster_pairs(&pobs.partition);
    let mut entries = pairs
        .par_iter()
        .map(|&(k, i, j)| {
            let fit = pairwise_theta_fit(&pobs.column(i), &pobs.column(j), families[k], cfg)
                .map_err(|e| Error::numerical(format!("pair ({}, {}): {e}", i + 1, j + 1)))?;
            Ok(PairEntry { cluster: k, i, j, fit })
        })
        .collect::<Result<Vec<_>>>()?;
    if cfg.method == PairwiseMethod::SharedPseudoLikelihood {
        let shared = (0..pobs.partition.n_clusters())
            .into_par_iter()
            .map(|k| {
                let idx: Vec<usize> = (0..entries.len()).filter(|&e| entries[e].cluster == k).collect();
                let samples: Vec<_> = idx.iter().map(|&e| (pobs.column(entries[e].i), pobs.column(entries[e].j))).collect();
                let bx = ParamBox::for_family(families[k]);
                let start = start_from(&bx, &idx.iter().map(|&e| entries[e].fit).collect::<Vec<_>>());
                let fits = fit_shared_cluster(&samples, families[k], start, cfg.max_iter)
                    .map_err(|e| Error::numerical(format!("cluster {}: {e}", k + 1)))?;
                Ok(idx.into_iter().zip(fits).collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        for (e, fit) in shared.into_iter().flatten() {
            entries[e].fit = fit;
        }
    }
    Ok(PairwiseEstimates { dim: pobs.dim(), families: families.to_vec(), entries })
}

/// Per-cluster mean of θ̂ over all pairs of the block.
pub fn cluster_theta_bar(thetas: &BTreeMap<(usize, usize), f64>, partition: &ClusterPartition) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; partition.n_clusters()];
    let mut counts = vec![0usize; partition.n_clusters()];
    for (k, i, j) in intra_cluster_pairs(partition) {
        let t = thetas
            .get(&(i, j))
            .ok_or_else(|| Error::domain(format!("missing estimate for pair ({}, {})", i + 1, j + 1)))?;
        sums[k] += t;
        counts[k] += 1;
    }
    Ok(sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_is_the_mixed_derivative_of_the_cdf() {
        for (fam, th, vt) in [(Family::Clayton, 1.5, 1.25), (Family::Joe, 2.0, 1.5), (Family::Frank, 3.0, 2.0), (Family::Joe, 1.0, 1.0)] {
            for &(u, v) in &[(0.3, 0.6), (0.8, 0.85), (0.1, 0.05)] {
                let h = 1e-4;
                let c = |a: f64, b: f64| pair_cdf(fam, th, vt, a, b).unwrap();
                let num = (c(u + h, v + h) - c(u + h, v - h) - c(u - h, v + h) + c(u - h, v - h)) / (4.0 * h * h);
                let ana = pair_log_density(fam, th, vt, u, v).unwrap().exp();
                assert!((num - ana).abs() < 1e-4 * ana.max(1.0), "{fam} {u} {v}: {num} vs {ana}");
            }
        }
    }

    #[test]
    fn moment_map_matches_known_families() {
        let grid = MomentGrid::new(128);
        // ψ = e^{-x} gives the Gumbel copula: τ = 1 − 1/ϑ
        let (tau, _) = pair_moments(Family::Joe, 1.0, 2.0, &grid).unwrap();
        assert!((tau - 0.5).abs() < 1e-4, "{tau}");
        // ϑ = 1 gives the Clayton copula: τ = θ/(θ+2)
        let (tau, _) = pair_moments(Family::Clayton, 2.0, 1.0, &grid).unwrap();
        assert!((tau - 0.5).abs() < 1e-4, "{tau}");
        let (tau, rho) = pair_moments(Family::Clayton, 1e-4, 1.0, &grid).unwrap();
        assert!(tau.abs() < 1e-3 && rho.abs() < 1e-3);
    }

    #[test]
    fn stencil_recovers_quadratic() {
        let f = |p: [f64; 2]| 3.0 * p[0] * p[0] - 2.0 * p[0] * p[1] + 0.5 * p[1] * p[1] + p[0];
        for p in [[0.3, 0.2], [0.0, 0.0], [1.0, 1.0]] {
            let st = Stencil::new(p, [0.0, 0.0], [1.0, 1.0], 1e-3);
            let (g, h) = st.derivatives(&st.points().map(f));
            assert!((g[0] - (6.0 * p[0] - 2.0 * p[1] + 1.0)).abs() < 1e-8);
            assert!((g[1] - (-2.0 * p[0] + p[1])).abs() < 1e-8);
            assert!((h[0][0] - 6.0).abs() < 1e-5 && (h[0][1] + 2.0).abs() < 1e-5 && (h[1][1] - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn theta_bar_averages_blocks() {
        let p = ClusterPartition::new(vec![vec![0, 1, 2], vec![3, 4]]).unwrap();
        let t: BTreeMap<_, _> = [((0, 1), 1.0), ((0, 2), 1.2), ((1, 2), 1.1), ((3, 4), 2.0)].into_iter().collect();
        let bar = cluster_theta_bar(&t, &p).unwrap();
        assert!((bar[0] - 1.1).abs() < 1e-15 && bar[1] == 2.0);
        let mut missing = t.clone();
        missing.remove(&(0, 2));
        assert!(cluster_theta_bar(&missing, &p).is_err());
    }

    #[test]
    fn tau_and_rho_of_small_samples() {
        let u = [0.1, 0.2, 0.3, 0.4];
        assert!((kendall_tau(&u, &u) - 1.0).abs() < 1e-15);
        assert!((spearman_rho(&u, &[0.4, 0.3, 0.2, 0.1]) + 1.0).abs() < 1e-15);
        assert!((kendall_tau(&u, &[0.1, 0.3, 0.2, 0.4]) - 4.0 / 6.0).abs() < 1e-15);
    }
}
