//! Scalar root finding and minimisation, plus a few special functions.

/// Brent's method (golden section with parabolic steps) for a minimum on [a, b].
/// Returns `(x, f(x))`.
pub fn brent_minimize<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    const CGOLD: f64 = 0.381_966_011_250_105;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + CGOLD * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if !(p.abs() >= (0.5 * q * etemp).abs() || p <= q * (a - x) || p >= q * (b - x)) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Root of a function increasing in `x` on a bracket [lo, hi] with
/// `f(lo) <= 0 <= f(hi)`, by bisection down to absolute width `tol`.
pub fn bisect_increasing<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> f64 {
    for _ in 0..max_iter {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// ln B(a, b).
pub fn ln_beta(a: f64, b: f64) -> f64 {
    statrs::function::gamma::ln_gamma(a) + statrs::function::gamma::ln_gamma(b) - statrs::function::gamma::ln_gamma(a + b)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}

/// Generalised binomial coefficient C(a, k) for real `a`.
pub fn binomial_real(a: f64, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c *= (a - i as f64) / (i + 1) as f64;
    }
    c
}

/// Stirling numbers of the second kind S(n, k) for 0 <= k <= n <= `max_n`.
pub fn stirling2_table(max_n: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; max_n + 1]; max_n + 1];
    s[0][0] = 1.0;
    for n in 1..=max_n {
        for k in 1..=n {
            s[n][k] = k as f64 * s[n - 1][k] + s[n - 1][k - 1];
        }
    }
    s
}

/// S(n, k) from a cached table (computed on demand beyond n = 64).
pub fn stirling2(n: usize, k: usize) -> f64 {
    const MAX: usize = 64;
    static TABLE: std::sync::OnceLock<Vec<Vec<f64>>> = std::sync::OnceLock::new();
    if k > n {
        return 0.0;
    }
    if n <= MAX {
        TABLE.get_or_init(|| stirling2_table(MAX))[n][k]
    } else {
        stirling2_table(n)[n][k]
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    use statrs::distribution::ContinuousCDF;
    statrs::distribution::Normal::standard().inverse_cdf(p)
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Symmetric 2x2 solve of H·s = g; `None` when H is singular.
pub fn solve2(h: [[f64; 2]; 2], g: [f64; 2]) -> Option<[f64; 2]> {
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if !det.is_finite() || det.abs() < 1e-300 {
        return None;
    }
    Some([(g[0] * h[1][1] - g[1] * h[0][1]) / det, (h[0][0] * g[1] - h[1][0] * g[0]) / det])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_parabola_minimum() {
        let (x, fx) = brent_minimize(|x| (x - 0.3).powi(2) + 1.0, -1.0, 1.0, 1e-10, 200);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stirling_values() {
        let s = stirling2_table(6);
        assert_eq!(s[4][2], 7.0);
        assert_eq!(s[5][3], 25.0);
        assert_eq!(s[6][6], 1.0);
    }

    #[test]
    fn beta_and_binomial() {
        assert!((ln_beta(0.5, 2.0).exp() - 4.0 / 3.0).abs() < 1e-13);
        assert_eq!(binomial(5, 2), 10.0);
        assert!((binomial_real(0.5, 2) + 0.125).abs() < 1e-15);
    }

    #[test]
    fn normal_roundtrip() {
        for p in [1e-10, 0.01, 0.5, 0.975] {
            assert!((norm_cdf(norm_quantile(p)) - p).abs() < 1e-12 * (1.0 + p / 1e-10));
        }
    }
}
