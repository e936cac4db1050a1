//! Simulation of radial copulas, ℓ-simplex vectors and clustered Archimax
//! samples.

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generator::{ArchimedeanGenerator, Generator, LogisticSimplexGenerator, RadialDistribution};
use crate::model::{cholesky, ClusteredModelSpec, RadialCopulaSpec};
use crate::numeric::norm_cdf;
use crate::rng::{open01, substream};
use crate::stdf::Stdf;

/// Correlated normals mapped through Φ.
pub fn sample_gaussian_copula(chol: &[Vec<f64>], rng: &mut dyn RngCore) -> Vec<f64> {
    let k = chol.len();
    let eps: Vec<f64> = (0..k).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    (0..k)
        .map(|i| {
            let z: f64 = (0..=i).map(|j| chol[i][j] * eps[j]).sum();
            norm_cdf(z)
        })
        .collect()
}

/// Positive stable variable with Laplace transform exp(−t^α), 0 < α ≤ 1
/// (Kanter / Chambers–Mallows–Stuck representation).
pub fn sample_positive_stable(alpha: f64, rng: &mut dyn RngCore) -> f64 {
    if alpha == 1.0 {
        return 1.0;
    }
    let u = std::f64::consts::PI * open01(rng);
    let e: f64 = Exp1.sample(rng);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / e).powf((1.0 - alpha) / alpha);
    a * b
}

/// Gumbel copula by Marshall–Olkin: V_i = exp(−(E_i/M)^{1/ϑ}) with M positive
/// stable of index 1/ϑ.
pub fn sample_gumbel_copula(vartheta: f64, k: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    let alpha = 1.0 / vartheta;
    let m = sample_positive_stable(alpha, rng);
    (0..k)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            (-(e / m).powf(alpha)).exp()
        })
        .collect()
}

enum RadialCopulaSampler {
    Independence(usize),
    Gaussian(Vec<Vec<f64>>),
    Gumbel(f64, usize),
}

impl RadialCopulaSampler {
    fn new(spec: &RadialCopulaSpec, k: usize) -> Result<Self> {
        Ok(match spec {
            RadialCopulaSpec::Independence => Self::Independence(k),
            RadialCopulaSpec::GaussianSurvival(c) => Self::Gaussian(cholesky(c).ok_or_else(|| Error::domain("radial correlation matrix is not positive definite"))?),
            RadialCopulaSpec::GumbelSurvival(t) => Self::Gumbel(*t, k),
        })
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        match self {
            Self::Independence(k) => (0..*k).map(|_| open01(rng)).collect(),
            Self::Gaussian(l) => sample_gaussian_copula(l, rng),
            Self::Gumbel(t, k) => sample_gumbel_copula(*t, *k, rng),
        }
    }
}

/// Sampler of the ℓ-simplex vector S with P(S > s) = (1 − ℓ(s))_+^{d−1}.
///
/// For the logistic stdf, S_i = (R̃ D_i)^{1/ϑ} with D uniform on the simplex
/// and R̃ the radial law of ψ̃(x) = (1 − x^{1/ϑ})_+^{d−1}; equivalently
/// S_i = 1 − U_i^{1/(d−1)} for U drawn from the Archimedean copula of ψ̃.
#[derive(Debug, Clone)]
pub enum SimplexSampler {
    Uniform { d: usize },
    Logistic { d: usize, vartheta: f64, atom: f64, radial: RadialDistribution<LogisticSimplexGenerator> },
}

impl SimplexSampler {
    pub fn new(l: &Stdf) -> Result<Self> {
        let d = l.dim();
        if d < 2 {
            return Err(Error::domain("simplex vectors need dimension >= 2"));
        }
        match l {
            Stdf::Independence { .. } => Ok(Self::Uniform { d }),
            Stdf::Logistic { vartheta, .. } if *vartheta == 1.0 => Ok(Self::Uniform { d }),
            Stdf::Logistic { vartheta, .. } => {
                let g = LogisticSimplexGenerator::new(*vartheta, d)?;
                let atom = g.atom();
                Ok(Self::Logistic { d, vartheta: *vartheta, atom, radial: RadialDistribution::new(g, d)? })
            }
            other => Err(Error::capability(format!("no simplex sampler for {other:?}; only logistic and independence stdfs are supported"))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Uniform { d } | Self::Logistic { d, .. } => *d,
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        let mut total = 0.0;
        for s in out.iter_mut() {
            let e: f64 = Exp1.sample(rng);
            *s = e;
            total += e;
        }
        for s in out.iter_mut() {
            *s /= total;
        }
        if let Self::Logistic { vartheta, atom, radial, .. } = self {
            let v = open01(rng);
            let r = if v <= *atom { 1.0 } else { radial.survival_quantile(v)?.min(1.0) };
            for s in out.iter_mut() {
                *s = (r * *s).powf(1.0 / vartheta);
            }
        }
        Ok(())
    }
}

/// One draw of S for the stdf `l`.
pub fn sample_simplex_vector(l: &Stdf, seed: u64) -> Result<Vec<f64>> {
    let s = SimplexSampler::new(l)?;
    let mut out = vec![0.0; s.dim()];
    s.sample(&mut substream(seed, 0), &mut out)?;
    Ok(out)
}

/// Prepared sampler for a clustered model.
pub struct ClusteredSampler {
    spec: ClusteredModelSpec,
    radials: Vec<RadialDistribution<ArchimedeanGenerator>>,
    simplex: Vec<SimplexSampler>,
    copula: RadialCopulaSampler,
}

impl ClusteredSampler {
    pub fn new(spec: &ClusteredModelSpec) -> Result<Self> {
        let radials = spec
            .generators
            .iter()
            .zip(spec.partition.blocks())
            .map(|(g, b)| RadialDistribution::new(*g, b.len()))
            .collect::<Result<Vec<_>>>()?;
        let simplex = spec.stdfs.iter().map(SimplexSampler::new).collect::<Result<Vec<_>>>()?;
        let copula = RadialCopulaSampler::new(&spec.radial, spec.n_clusters())?;
        Ok(Self { spec: spec.clone(), radials, simplex, copula })
    }

    pub fn spec(&self) -> &ClusteredModelSpec {
        &self.spec
    }

    /// V ~ Q̄ and R_k with P(R_k > r) = V_k.
    pub fn sample_radial(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let v = self.copula.sample(rng);
        v.iter()
            .zip(&self.radials)
            .map(|(&v, rd)| rd.survival_quantile(v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)))
            .collect()
    }

    /// One observation in original variable order.
    pub fn sample_row(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        let r = self.sample_radial(rng)?;
        let mut s = Vec::new();
        for (k, block) in self.spec.partition.blocks().iter().enumerate() {
            s.resize(block.len(), 0.0);
            self.simplex[k].sample(rng, &mut s)?;
            let g = &self.spec.generators[k];
            for (&i, &sk) in block.iter().zip(&s) {
                let u = g.psi(r[k] * sk);
                out[i] = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
            }
        }
        Ok(())
    }

    /// `n` rows; row `i` always comes from stream `i` of `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        let d = self.spec.dim();
        let mut data = vec![0.0; n * d];
        data.par_chunks_mut(d.max(1)).enumerate().try_for_each(|(i, row)| {
            let mut rng = substream(seed, i as u64);
            self.sample_row(&mut rng, row)
        })?;
        Ok(DMatrix::from_row_slice(n, d, &data))
    }
}

/// One draw of the radial vector (R_1, …, R_K).
pub fn sample_radial_vector(model: &ClusteredModelSpec, seed: u64) -> Result<Vec<f64>> {
    ClusteredSampler::new(model)?.sample_radial(&mut substream(seed, 0))
}

/// `n` i.i.d. rows of the clustered Archimax copula, columns in original
/// variable order.
pub fn sample_clustered(model: &ClusteredModelSpec, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::domain("sample size must be positive"));
    }
    ClusteredSampler::new(model)?.sample(n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    #[test]
    fn rows_are_in_unit_cube_and_reproducible() {
        let m = presets::model_b();
        let a = sample_clustered(&m, 300, 11).unwrap();
        let b = sample_clustered(&m, 300, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|u| *u > 0.0 && *u < 1.0));
        let prefix = sample_clustered(&m, 100, 11).unwrap();
        assert_eq!(prefix, a.rows(0, 100).into_owned());
    }

    #[test]
    fn positive_stable_laplace_transform() {
        let mut rng = substream(3, 0);
        let alpha = 0.25;
        let n = 100_000;
        let t = 1.3f64;
        let m: f64 = (0..n).map(|_| (-t * sample_positive_stable(alpha, &mut rng)).exp()).sum::<f64>() / n as f64;
        assert!((m - (-t.powf(alpha)).exp()).abs() < 0.005);
    }

    #[test]
    fn simplex_independence_is_uniform_on_simplex() {
        let s = SimplexSampler::new(&Stdf::independence(3).unwrap()).unwrap();
        let mut rng = substream(5, 0);
        let mut out = [0.0; 3];
        let mut mean = 0.0;
        let n = 100_000;
        for _ in 0..n {
            s.sample(&mut rng, &mut out).unwrap();
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            mean += out[0];
        }
        assert!((mean / n as f64 - 1.0 / 3.0).abs() < 0.005);
    }

    #[test]
    fn unsupported_stdf_variant() {
        let l = crate::stdf::alpha_transform(&Stdf::logistic(2.0, 3).unwrap(), 0.5).unwrap();
        assert!(matches!(SimplexSampler::new(&l), Err(Error::Capability(_))));
    }
}
