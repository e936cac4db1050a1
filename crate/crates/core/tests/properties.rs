use std::collections::BTreeMap;

use archimax::config::ModelConfigFile;
use archimax::extremal::chi_curve_empirical;
use archimax::generator::{ArchimedeanGenerator, Family, Generator};
use archimax::inference::pairwise::pair_log_density;
use archimax::inference::{cfg_pickands, homogeneity_statistic, pseudo_observations};
use archimax::model::{presets, ClusterPartition, ClusteredModelSpec, RadialCopulaSpec};
use archimax::sampler::sample_clustered;
use archimax::stdf::{alpha_transform, stdf_eval, Stdf};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::Clayton), Just(Family::Joe), Just(Family::Frank)]
}

/// Family with a parameter inside its domain.
fn generator() -> impl Strategy<Value = ArchimedeanGenerator> {
    family().prop_flat_map(|f| {
        let lo = match f {
            Family::Joe => 1.0,
            _ => 0.05,
        };
        (Just(f), lo..12.0f64).prop_map(|(f, t)| ArchimedeanGenerator::new(f, t).unwrap())
    })
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1e3..1e3f64, rows * cols).prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

fn closed_form_stdf(d: usize) -> impl Strategy<Value = Stdf> {
    prop_oneof![
        (1.0..8.0f64).prop_map(move |vt| Stdf::logistic(vt, d).unwrap()),
        Just(Stdf::independence(d).unwrap()),
        ((1.0..8.0f64), (0.1..1.0f64)).prop_map(move |(vt, a)| alpha_transform(&Stdf::logistic(vt, d).unwrap(), a).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pseudo_observations_ignore_monotone_maps(m in matrix(40, 3), shift in -5.0..5.0f64, scale in 0.1..10.0f64) {
        let p = ClusterPartition::new(vec![vec![0, 1, 2]]).unwrap();
        prop_assume!((0..3).all(|c| m.column(c).iter().any(|v| *v != m[(0, c)])));
        let mapped = m.map(|x| (scale * x + shift).exp().atan() + x.powi(3) * 1e-12);
        let a = pseudo_observations(&m, &p).unwrap();
        let b = pseudo_observations(&m.map(|x| scale * x + shift), &p).unwrap();
        prop_assert_eq!(&a.matrix, &b.matrix);
        let c = pseudo_observations(&mapped, &p).unwrap();
        for v in c.matrix.iter() {
            prop_assert!(*v > 0.0 && *v < 1.0);
        }
    }

    #[test]
    fn pickands_is_one_at_the_vertices(m in matrix(30, 3), g in generator(), k in 0usize..3) {
        let p = ClusterPartition::new(vec![vec![0, 1, 2]]).unwrap();
        prop_assume!((0..3).all(|c| m.column(c).iter().any(|v| *v != m[(0, c)])));
        let po = pseudo_observations(&m, &p).unwrap();
        let mut w = [0.0; 3];
        w[k] = 1.0;
        prop_assert_eq!(cfg_pickands(&po, &[0, 1, 2], g.theta(), g.family(), &w).unwrap().value, 1.0);
    }

    #[test]
    fn pickands_stays_within_its_bounds(m in matrix(30, 2), g in generator(), w0 in 0.0..1.0f64) {
        let p = ClusterPartition::new(vec![vec![0, 1]]).unwrap();
        prop_assume!((0..2).all(|c| m.column(c).iter().any(|v| *v != m[(0, c)])));
        let po = pseudo_observations(&m, &p).unwrap();
        let a = cfg_pickands(&po, &[0, 1], g.theta(), g.family(), &[w0, 1.0 - w0]).unwrap().value;
        prop_assert!(a >= w0.max(1.0 - w0) - 1e-15 && a <= 1.0);
    }

    #[test]
    fn homogeneity_statistic_sums_to_zero_per_cluster(thetas in prop::collection::vec(0.1..20.0f64, 7)) {
        let p = ClusterPartition::new(vec![vec![0, 1, 2], vec![3, 4, 5, 6]]).unwrap();
        let pairs = [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (3, 6), (4, 5), (4, 6), (5, 6)];
        let map: BTreeMap<(usize, usize), f64> = pairs.iter().enumerate().map(|(n, &ij)| (ij, thetas[n % thetas.len()] + n as f64 * 0.01)).collect();
        let (t, bar) = homogeneity_statistic(&map, &p).unwrap();
        prop_assert_eq!(t.len(), 9);
        prop_assert!(t[..3].iter().sum::<f64>().abs() < 1e-12 * bar[0].max(1.0));
        prop_assert!(t[3..].iter().sum::<f64>().abs() < 1e-12 * bar[1].max(1.0));
    }

    #[test]
    fn stdf_axioms(l in closed_form_stdf(3), x in prop::collection::vec(0.0..10.0f64, 3), y in prop::collection::vec(0.0..10.0f64, 3), c in 0.01..50.0f64, lam in 0.0..1.0f64) {
        let v = stdf_eval(&l, &x).unwrap();
        let max = x.iter().cloned().fold(0.0, f64::max);
        let sum: f64 = x.iter().sum();
        prop_assert!(v >= max * (1.0 - 1e-12) && v <= sum * (1.0 + 1e-12));
        let cx: Vec<f64> = x.iter().map(|a| c * a).collect();
        prop_assert!((stdf_eval(&l, &cx).unwrap() - c * v).abs() <= 1e-10 * (c * v).max(1.0));
        for i in 0..3 {
            let mut e = [0.0; 3];
            e[i] = 1.0;
            prop_assert!((stdf_eval(&l, &e).unwrap() - 1.0).abs() < 1e-12);
        }
        let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        let rhs = lam * v + (1.0 - lam) * stdf_eval(&l, &y).unwrap();
        prop_assert!(stdf_eval(&l, &mix).unwrap() <= rhs * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn phi_inverts_psi(g in generator(), u in 1e-6..(1.0 - 1e-9f64)) {
        let x = g.phi(u);
        prop_assert!(x >= 0.0);
        prop_assert!((g.psi(x) - u).abs() < 1e-9);
    }

    #[test]
    fn pair_density_is_symmetric(g in generator(), vt in 1.0..6.0f64, u in 0.01..0.99f64, v in 0.01..0.99f64) {
        let a = pair_log_density(g.family(), g.theta(), vt, u, v).unwrap();
        let b = pair_log_density(g.family(), g.theta(), vt, v, u).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn chi_is_symmetric_and_inside_its_interval(m in matrix(50, 2), q in 0.05..0.95f64) {
        let u = m.map(|x| 0.5 + x.atan() / std::f64::consts::PI);
        let a = chi_curve_empirical(&u, 0, 1, &[q]).unwrap()[0];
        let b = chi_curve_empirical(&u, 1, 0, &[q]).unwrap()[0];
        prop_assert_eq!(a, b);
        prop_assert!(a.degenerate || (a.lower <= a.chi && a.chi <= a.upper));
        prop_assert!(a.degenerate || a.chi <= 2.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn config_round_trip(g1 in generator(), g2 in generator(), vt1 in 1.0..5.0f64, vt2 in 1.0..5.0f64, rho in -0.4..0.9f64, seed in any::<u64>()) {
        let p = ClusterPartition::new(vec![vec![0, 2], vec![1, 3, 4]]).unwrap();
        let m = ClusteredModelSpec::new(p, vec![g1, g2], vec![Stdf::logistic(vt1, 2).unwrap(), Stdf::logistic(vt2, 3).unwrap()], RadialCopulaSpec::gaussian_exchangeable(2, rho)).unwrap();
        let text = ModelConfigFile::from_model(&m, Some(seed)).unwrap().to_json();
        let back = ModelConfigFile::from_json(&text).unwrap();
        prop_assert_eq!(back.seed, Some(seed));
        prop_assert_eq!(back.to_model().unwrap(), m);
    }

    #[test]
    fn samples_are_reproducible_and_inside_the_cube(seed in any::<u64>()) {
        let m = presets::model_b();
        let a = sample_clustered(&m, 64, seed).unwrap();
        prop_assert_eq!(&a, &sample_clustered(&m, 64, seed).unwrap());
        prop_assert!(a.iter().all(|v| *v > 0.0 && *v < 1.0));
    }
}
