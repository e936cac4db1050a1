//! Library values checked against formulas written out independently here.

use archimax::extremal::{classify_model, limit_stdf_ai, pairwise_limit_lambda, TailClass};
use archimax::generator::{ArchimedeanGenerator, Family, Generator, RadialDistribution};
use archimax::inference::pairwise::{pair_cdf, pair_log_density};
use archimax::model::presets;
use archimax::quadrature::composite;
use archimax::stdf::{stdf_eval, Stdf};

fn logistic(x: &[f64], vt: f64) -> f64 {
    x.iter().map(|v| v.powf(vt)).sum::<f64>().powf(1.0 / vt)
}

/// Clayton: ψ^{(k)}(x) = (−1)^k Π_{j<k}(1 + jθ) (1 + θx)^{−1/θ−k}, and
/// P(R > r) = Σ_{k<d} (−r)^k ψ^{(k)}(r) / k!.
fn clayton_radial_survival(theta: f64, d: usize, r: f64) -> f64 {
    let mut s = 0.0;
    let mut coef = 1.0;
    let mut fact = 1.0;
    for k in 0..d {
        if k > 0 {
            coef *= 1.0 + (k as f64 - 1.0) * theta;
            fact *= k as f64;
        }
        s += r.powi(k as i32) * coef * (1.0 + theta * r).powf(-1.0 / theta - k as f64) / fact;
    }
    s
}

#[test]
fn clayton_radial_survival_matches_derivative_series() {
    for theta in [0.5, 1.5, 4.0] {
        let g = ArchimedeanGenerator::clayton(theta).unwrap();
        for d in 2..=5 {
            let rd = RadialDistribution::new(g, d).unwrap();
            for r in [0.01, 0.3, 1.0, 4.0, 25.0, 400.0] {
                let want = clayton_radial_survival(theta, d, r);
                let got = rd.survival(r);
                assert!((got - want).abs() < 1e-10 * want.max(1e-3), "theta={theta} d={d} r={r}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn radial_quantiles_invert_the_survival_function() {
    for (f, th) in [(Family::Clayton, 1.5), (Family::Joe, 2.0), (Family::Frank, 3.0)] {
        let rd = RadialDistribution::new(ArchimedeanGenerator::new(f, th).unwrap(), 3).unwrap();
        for v in [1e-6, 0.01, 0.3, 0.5, 0.9, 0.999] {
            let r = rd.survival_quantile(v).unwrap();
            assert!((rd.survival(r) - v).abs() < 1e-8, "{f} v={v}");
        }
    }
}

#[test]
fn asymptotically_independent_limit_is_a_sum_of_cluster_stdfs() {
    // Model A clusters: Clayton(1.5)/logistic(1.25), Joe(1.5)/logistic(2),
    // Joe(2)/logistic(1.5). The Joe attractors are logistic with ϑθ = 3.
    let m = presets::model_a();
    let params = [1.25, 3.0, 3.0];
    let xs: [[f64; 9]; 3] = [
        [1.0; 9],
        [0.3, 1.2, 0.7, 0.0, 0.0, 2.0, 1.0, 0.5, 0.25],
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0, 0.0],
    ];
    for x in xs {
        let want: f64 = (0..3).map(|k| logistic(&x[3 * k..3 * k + 3], params[k])).sum();
        let got = limit_stdf_ai(&m, &x).unwrap();
        assert!((got - want).abs() < 1e-12, "{x:?}: {got} vs {want}");
    }
    // frozen: 3^0.8 + 2·3^(1/3)
    assert!((limit_stdf_ai(&m, &[1.0; 9]).unwrap() - 5.292_723_825_895_509).abs() < 1e-12);
}

#[test]
fn intra_cluster_tail_coefficients() {
    let m = presets::model_a();
    let want = [2.0 - 2f64.powf(0.8), 2.0 - 2f64.powf(1.0 / 3.0), 2.0 - 2f64.powf(1.0 / 3.0)];
    for (k, w) in want.iter().enumerate() {
        let l = pairwise_limit_lambda(&m, 3 * k, 3 * k + 2, 1, 0).unwrap();
        assert!((l - w).abs() < 1e-12);
    }
    assert_eq!(pairwise_limit_lambda(&m, 0, 8, 1000, 0).unwrap(), 0.0);
}

#[test]
fn tail_classes_of_the_reference_models() {
    let c = classify_model(&presets::model_b());
    assert_eq!(c.entries[0].class, TailClass::D2);
    assert_eq!(c.entries[1].class, TailClass::D1 { rho: 1.0 / 1.5 });
    assert_eq!(c.entries[2].class, TailClass::D1 { rho: 0.5 });
    assert_eq!(c.d1(), vec![1, 2]);
}

#[test]
fn pair_copula_has_uniform_margins_and_unit_mass() {
    let (t, w) = composite(16, 8, -14.0, 14.0);
    let rule: Vec<(f64, f64)> = t
        .iter()
        .zip(&w)
        .map(|(&t, &w)| {
            let v = 1.0 / (1.0 + (-t).exp());
            (v, w * v * (1.0 - v))
        })
        .collect();
    for (f, th, vt) in [(Family::Clayton, 1.5, 1.25), (Family::Joe, 2.0, 1.5), (Family::Frank, 3.0, 2.0)] {
        for u in [0.1, 0.5, 0.93] {
            assert!((pair_cdf(f, th, vt, u, 1.0).unwrap() - u).abs() < 1e-12);
            assert!((pair_cdf(f, th, vt, 1.0, u).unwrap() - u).abs() < 1e-12);
        }
        let mass: f64 = rule
            .iter()
            .flat_map(|&(u, wu)| rule.iter().map(move |&(v, wv)| wu * wv * pair_log_density(f, th, vt, u, v).unwrap().exp()))
            .sum();
        assert!((mass - 1.0).abs() < 2e-3, "{f}: {mass}");
    }
}

#[test]
fn pair_cdf_of_the_archimax_form() {
    // C(u, v) = ψ(ℓ(φ(u), φ(v))) written out for Clayton.
    let (th, vt) = (1.5, 1.25);
    let phi = |u: f64| (u.powf(-th) - 1.0) / th;
    let psi = |x: f64| (1.0 + th * x).powf(-1.0 / th);
    for (u, v) in [(0.2, 0.7), (0.5, 0.5), (0.95, 0.05)] {
        let want = psi(logistic(&[phi(u), phi(v)], vt));
        assert!((pair_cdf(Family::Clayton, th, vt, u, v).unwrap() - want).abs() < 1e-13);
    }
}

#[test]
fn generators_spot_values() {
    let g = ArchimedeanGenerator::joe(2.0).unwrap();
    // ψ(x) = 1 − (1 − e^{−x})^{1/θ}
    let x: f64 = 0.7;
    assert!((g.psi(x) - (1.0 - (1.0 - (-x).exp()).sqrt())).abs() < 1e-15);
    let f = ArchimedeanGenerator::frank(3.0).unwrap();
    // ψ(x) = −ln(1 − (1 − e^{−θ}) e^{−x}) / θ
    let want = -(1.0 - (1.0 - (-3f64).exp()) * (-x).exp()).ln() / 3.0;
    assert!((f.psi(x) - want).abs() < 1e-15);
    assert!((stdf_eval(&Stdf::logistic(2.0, 2).unwrap(), &[3.0, 4.0]).unwrap() - 5.0).abs() < 1e-15);
}
