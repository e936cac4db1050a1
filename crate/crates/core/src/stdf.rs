//! Stable tail dependence functions.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mc::{chunked_mean, McEstimate};

/// Sampler of a positive random vector W with E[W_i] = 1, the generator of
/// the d-norm ℓ(x) = E[max_i x_i W_i].
pub trait WSampler: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut dyn RngCore, out: &mut [f64]);
}

/// W_i = E_i^{-1/ϑ} / Γ(1 − 1/ϑ) with i.i.d. unit exponentials; the
/// componentwise maximum of scaled independent Fréchet(ϑ) variables gives the
/// logistic stdf. ϑ = 1 falls back to the independence generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticW {
    vartheta: f64,
    dim: usize,
    scale: f64,
}

impl LogisticW {
    pub fn new(vartheta: f64, dim: usize) -> Result<Self> {
        if !(vartheta >= 1.0 && vartheta.is_finite()) {
            return Err(Error::domain(format!("logistic parameter must be >= 1, got {vartheta}")));
        }
        let scale = if vartheta > 1.0 { 1.0 / statrs::function::gamma::gamma(1.0 - 1.0 / vartheta) } else { 0.0 };
        Ok(Self { vartheta, dim, scale })
    }
}

impl WSampler for LogisticW {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        if self.vartheta == 1.0 {
            return IndependenceW { dim: self.dim }.sample(rng, out);
        }
        for w in out.iter_mut() {
            let e: f64 = Exp1.sample(rng);
            *w = self.scale * e.powf(-1.0 / self.vartheta);
        }
    }
}

/// W ≡ 1: ℓ(x) = max_i x_i.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComonotoneW {
    pub dim: usize,
}

impl WSampler for ComonotoneW {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, _rng: &mut dyn RngCore, out: &mut [f64]) {
        out.fill(1.0);
    }
}

/// Random permutation of (d, 0, …, 0): ℓ(x) = Σ_i x_i.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndependenceW {
    pub dim: usize,
}

impl WSampler for IndependenceW {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        out.fill(0.0);
        let j = rng.random_range(0..out.len());
        out[j] = out.len() as f64;
    }
}

#[derive(Clone)]
pub enum Stdf {
    /// (Σ x_i^ϑ)^{1/ϑ}, ϑ ≥ 1.
    Logistic { vartheta: f64, dim: usize },
    Independence { dim: usize },
    /// ℓ_α(x) = ℓ(x^{1/α})^α.
    AlphaTransformed { base: Box<Stdf>, alpha: f64 },
    /// Monte Carlo d-norm with a fixed budget and seed.
    DNormMC { sampler: Arc<dyn WSampler>, n: usize, seed: u64 },
}

impl fmt::Debug for Stdf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stdf::Logistic { vartheta, dim } => write!(f, "Logistic(vartheta={vartheta}, dim={dim})"),
            Stdf::Independence { dim } => write!(f, "Independence(dim={dim})"),
            Stdf::AlphaTransformed { base, alpha } => write!(f, "AlphaTransformed({base:?}, alpha={alpha})"),
            Stdf::DNormMC { sampler, n, seed } => write!(f, "DNormMC({sampler:?}, n={n}, seed={seed})"),
        }
    }
}

impl PartialEq for Stdf {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Stdf::Logistic { vartheta: a, dim: m }, Stdf::Logistic { vartheta: b, dim: n }) => a == b && m == n,
            (Stdf::Independence { dim: m }, Stdf::Independence { dim: n }) => m == n,
            (Stdf::AlphaTransformed { base: a, alpha: x }, Stdf::AlphaTransformed { base: b, alpha: y }) => a == b && x == y,
            (Stdf::DNormMC { sampler: a, n: m, seed: s }, Stdf::DNormMC { sampler: b, n, seed: t }) => {
                Arc::ptr_eq(a, b) && m == n && s == t
            }
            _ => false,
        }
    }
}

/// JSON form of the closed-form variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StdfSpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vartheta: Option<f64>,
    pub dim: usize,
}

impl TryFrom<StdfSpec> for Stdf {
    type Error = Error;
    fn try_from(s: StdfSpec) -> Result<Self> {
        match s.family.to_ascii_lowercase().as_str() {
            "logistic" => {
                let v = s.vartheta.ok_or_else(|| Error::domain("logistic stdf needs `vartheta`"))?;
                Stdf::logistic(v, s.dim)
            }
            "independence" => Stdf::independence(s.dim),
            other => Err(Error::domain(format!("unknown stdf family `{other}`"))),
        }
    }
}

impl Stdf {
    pub fn logistic(vartheta: f64, dim: usize) -> Result<Self> {
        if !(vartheta >= 1.0 && vartheta.is_finite()) {
            return Err(Error::domain(format!("logistic parameter must be finite and >= 1, got {vartheta}")));
        }
        if dim == 0 {
            return Err(Error::domain("stdf dimension must be positive"));
        }
        Ok(Stdf::Logistic { vartheta, dim })
    }

    pub fn independence(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("stdf dimension must be positive"));
        }
        Ok(Stdf::Independence { dim })
    }

    pub fn dnorm_mc(sampler: Arc<dyn WSampler>, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("Monte Carlo budget must be positive"));
        }
        Ok(Stdf::DNormMC { sampler, n, seed })
    }

    pub fn dim(&self) -> usize {
        match self {
            Stdf::Logistic { dim, .. } | Stdf::Independence { dim } => *dim,
            Stdf::AlphaTransformed { base, .. } => base.dim(),
            Stdf::DNormMC { sampler, .. } => sampler.dim(),
        }
    }

    pub fn is_closed_form(&self) -> bool {
        match self {
            Stdf::Logistic { .. } | Stdf::Independence { .. } => true,
            Stdf::AlphaTransformed { base, .. } => base.is_closed_form(),
            Stdf::DNormMC { .. } => false,
        }
    }

    pub fn to_spec(&self) -> Option<StdfSpec> {
        match self {
            Stdf::Logistic { vartheta, dim } => Some(StdfSpec { family: "logistic".into(), vartheta: Some(*vartheta), dim: *dim }),
            Stdf::Independence { dim } => Some(StdfSpec { family: "independence".into(), vartheta: None, dim: *dim }),
            _ => None,
        }
    }

    /// Same family in another dimension (used when marginalising a cluster).
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        match self {
            Stdf::Logistic { vartheta, .. } => Stdf::logistic(*vartheta, dim),
            Stdf::Independence { .. } => Stdf::independence(dim),
            Stdf::AlphaTransformed { base, alpha } => alpha_transform(&base.with_dim(dim)?, *alpha),
            Stdf::DNormMC { .. } => Err(Error::capability("cannot change the dimension of a Monte Carlo stdf")),
        }
    }

    // Evaluation for x ≥ 0 with max(x) = 1.
    fn eval_unit(&self, x: &[f64]) -> f64 {
        match self {
            Stdf::Logistic { vartheta, .. } => {
                if *vartheta == 1.0 {
                    x.iter().sum()
                } else {
                    x.iter().map(|v| if *v > 0.0 { v.powf(*vartheta) } else { 0.0 }).sum::<f64>().powf(1.0 / vartheta)
                }
            }
            Stdf::Independence { .. } => x.iter().sum(),
            Stdf::AlphaTransformed { base, alpha } => {
                let y: Vec<f64> = x.iter().map(|v| if *v > 0.0 { v.powf(1.0 / alpha) } else { 0.0 }).collect();
                base.eval_scaled(&y).powf(*alpha)
            }
            Stdf::DNormMC { sampler, n, seed } => dnorm_mc_raw(sampler.as_ref(), x, *n, *seed).estimate,
        }
    }

    fn eval_scaled(&self, x: &[f64]) -> f64 {
        let m = x.iter().cloned().fold(0.0, f64::max);
        if m == 0.0 {
            return 0.0;
        }
        let y: Vec<f64> = x.iter().map(|v| v / m).collect();
        m * self.eval_unit(&y)
    }
}

fn check_point(dim: usize, x: &[f64]) -> Result<()> {
    check_dim(dim, x.len())?;
    if let Some(v) = x.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::domain(format!("stdf arguments must be finite and non-negative, got {v}")));
    }
    Ok(())
}

/// ℓ(x).
pub fn stdf_eval(l: &Stdf, x: &[f64]) -> Result<f64> {
    check_point(l.dim(), x)?;
    Ok(l.eval_scaled(x))
}

/// A(w) = ℓ(w) on the unit simplex.
pub fn pickands_eval(l: &Stdf, w: &[f64]) -> Result<f64> {
    check_point(l.dim(), w)?;
    let w = normalize_simplex(w)?;
    stdf_eval(l, &w)
}

/// Accepts |Σw − 1| ≤ 1e−12 as is, renormalises up to 1e−9, rejects beyond.
pub fn normalize_simplex(w: &[f64]) -> Result<Vec<f64>> {
    let s: f64 = w.iter().sum();
    let dev = (s - 1.0).abs();
    if dev <= 1e-12 {
        Ok(w.to_vec())
    } else if dev <= 1e-9 {
        Ok(w.iter().map(|v| v / s).collect())
    } else {
        Err(Error::domain(format!("weights must lie on the unit simplex (sum = {s})")))
    }
}

/// ℓ_α(x) = ℓ^α(x^{1/α}); nested transforms compose multiplicatively.
pub fn alpha_transform(l: &Stdf, alpha: f64) -> Result<Stdf> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("alpha must be in (0, 1], got {alpha}")));
    }
    if alpha == 1.0 {
        return Ok(l.clone());
    }
    Ok(match l {
        Stdf::AlphaTransformed { base, alpha: a } => {
            let combined = a * alpha;
            if combined == 1.0 {
                (**base).clone()
            } else {
                Stdf::AlphaTransformed { base: base.clone(), alpha: combined }
            }
        }
        other => Stdf::AlphaTransformed { base: Box::new(other.clone()), alpha },
    })
}

fn dnorm_mc_raw(sampler: &dyn WSampler, x: &[f64], n: usize, seed: u64) -> McEstimate {
    if x.iter().all(|v| *v == 0.0) {
        return McEstimate { estimate: 0.0, std_error: 0.0, n };
    }
    let d = sampler.dim();
    chunked_mean(n, seed, |rng| {
        let mut w = vec![0.0; d];
        sampler.sample(rng, &mut w);
        x.iter().zip(&w).map(|(a, b)| a * b).fold(0.0, f64::max)
    })
}

/// Monte Carlo mean of max_i x_i W_i.
pub fn dnorm_mc_eval(sampler: &dyn WSampler, x: &[f64], n: usize, seed: u64) -> Result<McEstimate> {
    check_point(sampler.dim(), x)?;
    if n == 0 {
        return Err(Error::domain("Monte Carlo budget must be positive"));
    }
    Ok(dnorm_mc_raw(sampler, x, n, seed))
}

/// λ = 2 − ℓ(1, 1), clamped to [0, 1].
pub fn upper_tail_coeff(l: &Stdf) -> Result<f64> {
    if l.dim() != 2 {
        return Err(Error::Dimension { expected: 2, got: l.dim() });
    }
    Ok((2.0 - stdf_eval(l, &[1.0, 1.0])?).clamp(0.0, 1.0))
}
