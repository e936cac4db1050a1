//! Pseudo-likelihood fit of all pairs of one cluster with a common logistic
//! parameter: maximise Σ_p ℓ_p(θ_p, ϑ) over (θ_1, …, θ_m, ϑ).
//!
//! Every bivariate margin of a cluster shares the cluster's ϑ, so pooling
//! it removes the (θ, ϑ) ridge of the single-pair likelihood. Coordinates
//! are x = (ln θ_1, …, ln θ_m, ln ϑ).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::generator::{ArchimedeanGenerator, Family};
use crate::inference::pairwise::{ln_density, on_boundary, PairFit, ParamBox, Stencil, FD_STEP};

/// Bounds of the m + 1 coordinates.
fn bounds(bx: &ParamBox, m: usize) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = (bx.lo(), bx.hi());
    let mut l = vec![lo[0]; m];
    let mut h = vec![hi[0]; m];
    l.push(lo[1]);
    h.push(hi[1]);
    (l, h)
}

fn pair_coords(x: &[f64], p: usize) -> [f64; 2] {
    [x[p], x[x.len() - 1]]
}

/// Gradient and Hessian of the composite objective from per-pair 2-D
/// derivatives in (ln θ_p, ln ϑ). The Hessian has arrow structure.
pub(crate) fn assemble(parts: &[([f64; 2], [[f64; 2]; 2])]) -> (DVector<f64>, DMatrix<f64>) {
    let m = parts.len();
    let mut g = DVector::zeros(m + 1);
    let mut h = DMatrix::zeros(m + 1, m + 1);
    for (p, (gp, hp)) in parts.iter().enumerate() {
        g[p] = gp[0];
        g[m] += gp[1];
        h[(p, p)] = hp[0][0];
        h[(p, m)] = hp[0][1];
        h[(m, p)] = hp[1][0];
        h[(m, m)] += hp[1][1];
    }
    (g, h)
}

/// Active-set Newton direction. Returns the step and whether the free
/// block of the Hessian was negative definite.
pub(crate) fn shared_step(x: &[f64], g: &DVector<f64>, h: &DMatrix<f64>, lo: &[f64], hi: &[f64]) -> Option<(DVector<f64>, bool)> {
    let eps = 1e-12;
    let free: Vec<usize> = (0..x.len())
        .filter(|&c| !((x[c] <= lo[c] + eps && g[c] < 0.0) || (x[c] >= hi[c] - eps && g[c] > 0.0)))
        .collect();
    if free.is_empty() {
        return None;
    }
    let k = free.len();
    let neg_h = DMatrix::from_fn(k, k, |a, b| -h[(free[a], free[b])]);
    let gf = DVector::from_fn(k, |a, _| g[free[a]]);
    let mut s = DVector::zeros(x.len());
    let newton = match neg_h.cholesky() {
        Some(ch) => {
            let sf = ch.solve(&gf);
            for (a, &c) in free.iter().enumerate() {
                s[c] = sf[a];
            }
            true
        }
        None => {
            for &c in &free {
                s[c] = g[c] / h[(c, c)].abs().max(1.0);
            }
            false
        }
    };
    Some((s, newton))
}

fn project(x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect()
}

/// Projected Newton ascent of Σ_p obj(p, (x_p, x_m)). Returns (argmax, max, iterations).
pub(crate) fn maximize_shared<F: Fn(usize, [f64; 2]) -> f64>(
    obj: F,
    m: usize,
    start: Vec<f64>,
    bx: &ParamBox,
    max_iter: usize,
) -> (Vec<f64>, f64, usize) {
    let (lo, hi) = bounds(bx, m);
    let (lo2, hi2) = (bx.lo(), bx.hi());
    let total = |x: &[f64]| (0..m).map(|p| obj(p, pair_coords(x, p))).sum::<f64>();
    let mut x = project(&start, &lo, &hi);
    let mut f = total(&x);
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let parts: Vec<_> = (0..m)
            .map(|p| {
                let st = Stencil::new(pair_coords(&x, p), lo2, hi2, FD_STEP);
                st.derivatives(&st.points().map(|q| obj(p, q)))
            })
            .collect();
        let (g, h) = assemble(&parts);
        let Some((mut s, _)) = shared_step(&x, &g, &h, &lo, &hi) else { break };
        let len = s.amax();
        if len > 1.0 {
            s /= len;
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-10 {
            let q = project(&x.iter().zip(s.iter()).map(|(a, b)| a + t * b).collect::<Vec<_>>(), &lo, &hi);
            let fq = total(&q);
            let gain: f64 = g.iter().zip(q.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if fq.is_finite() && fq >= f + 1e-4 * gain.max(0.0) {
                accepted = Some((q, fq));
                break;
            }
            t *= 0.5;
        }
        let Some((q, fq)) = accepted else { break };
        let moved = q.iter().zip(&x).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
        x = q;
        f = fq;
        if moved < 1e-9 {
            break;
        }
    }
    (x, f, it)
}

/// Pair log-likelihood at coordinates (ln θ, ln ϑ).
pub(crate) fn pair_objective(bx: &ParamBox, family: Family, u: &[f64], v: &[f64], c: [f64; 2]) -> f64 {
    let (th, vt) = bx.natural(c);
    let g = ArchimedeanGenerator::new(family, th).expect("box inside the family domain");
    u.iter().zip(v).map(|(&a, &b)| ln_density(&g, vt, a, b)).sum()
}

/// Starting point from single-pair fits: their θ's and the mean of ln ϑ.
pub(crate) fn start_from(bx: &ParamBox, fits: &[PairFit]) -> Vec<f64> {
    let mut x: Vec<f64> = fits.iter().map(|f| bx.coords(f.theta, f.vartheta)[0]).collect();
    let b = fits.iter().map(|f| bx.coords(f.theta, f.vartheta)[1]).sum::<f64>() / fits.len() as f64;
    x.push(b);
    x
}

/// Shared-ϑ fit of the pairs `samples` of one cluster, started at `start`.
pub fn fit_shared_cluster(samples: &[(Vec<f64>, Vec<f64>)], family: Family, start: Vec<f64>, max_iter: usize) -> Result<Vec<PairFit>> {
    let bx = ParamBox::for_family(family);
    let m = samples.len();
    if m == 0 || start.len() != m + 1 {
        return Err(Error::Dimension { expected: m + 1, got: start.len() });
    }
    let obj = |p: usize, c: [f64; 2]| pair_objective(&bx, family, &samples[p].0, &samples[p].1, c);
    let (x, f, iterations) = maximize_shared(obj, m, start, &bx, max_iter);
    if !f.is_finite() {
        return Err(Error::numerical("shared pseudo-likelihood maximisation diverged"));
    }
    let (lo, hi) = (bx.lo(), bx.hi());
    Ok((0..m)
        .map(|p| {
            let c = pair_coords(&x, p);
            let (theta, vartheta) = bx.natural(c);
            PairFit { theta, vartheta, objective: obj(p, c), at_boundary: on_boundary(c, lo, hi), iterations }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrow_assembly() {
        let parts = [([1.0, 2.0], [[-3.0, 0.5], [0.5, -1.0]]), ([4.0, -1.0], [[-2.0, 0.25], [0.25, -2.0]])];
        let (g, h) = assemble(&parts);
        assert_eq!(g.as_slice(), &[1.0, 4.0, 1.0]);
        assert_eq!(h[(2, 2)], -3.0);
        assert_eq!(h[(0, 1)], 0.0);
        assert_eq!(h[(1, 2)], 0.25);
        assert_eq!(h[(2, 0)], 0.5);
    }

    #[test]
    fn concave_quadratic_is_maximised() {
        let bx = ParamBox::for_family(Family::Clayton);
        let target = [[0.3, 0.4], [-0.2, 0.4]];
        let obj = |p: usize, c: [f64; 2]| -(c[0] - target[p][0]).powi(2) - 2.0 * (c[1] - target[p][1]).powi(2) - 0.5 * (c[0] - target[p][0]) * (c[1] - target[p][1]);
        let (x, _, _) = maximize_shared(obj, 2, vec![0.0, 0.0, 0.1], &bx, 50);
        for (a, b) in x.iter().zip([0.3, -0.2, 0.4]) {
            assert!((a - b).abs() < 1e-6, "{x:?}");
        }
    }
}
