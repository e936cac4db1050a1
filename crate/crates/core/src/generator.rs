//! Archimedean generators, their derivatives, and the radial laws obtained
//! from them through the inverse Williamson transform.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{binomial, binomial_real, factorial, stirling2};
use crate::quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Clayton,
    Joe,
    Frank,
}

impl Family {
    /// Smallest admissible parameter and whether it is attained.
    pub fn lower_bound(self) -> (f64, bool) {
        match self {
            Family::Clayton | Family::Frank => (0.0, false),
            Family::Joe => (1.0, true),
        }
    }

    pub fn contains(self, theta: f64) -> bool {
        let (lo, closed) = self.lower_bound();
        theta.is_finite() && (theta > lo || (closed && theta == lo))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Clayton => "clayton",
            Family::Joe => "joe",
            Family::Frank => "frank",
        })
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clayton" => Ok(Family::Clayton),
            "joe" => Ok(Family::Joe),
            "frank" => Ok(Family::Frank),
            other => Err(Error::domain(format!("unknown generator family `{other}`"))),
        }
    }
}

/// Generator interface shared by the parametric families and the auxiliary
/// generators used internally (point masses, the simplex generator of the
/// logistic stdf).
///
/// Derivatives are right-hand derivatives.
pub trait Generator: Send + Sync {
    fn psi(&self, x: f64) -> f64;

    /// Inverse of `psi` on (0, 1]; `phi(0)` is the right end of the support.
    fn phi(&self, u: f64) -> f64;

    /// Closed-form m-th derivative, if one is implemented.
    fn derivative_exact(&self, _m: usize, _x: f64) -> Option<f64> {
        None
    }

    /// ln |ψ^{(m)}(x)|, for density work in the far tail.
    fn ln_abs_derivative(&self, m: usize, x: f64) -> Option<f64> {
        self.derivative_exact(m, x).map(|v| v.abs().ln())
    }

    /// φ'(u) (negative).
    fn phi_prime(&self, u: f64) -> f64 {
        let x = self.phi(u);
        1.0 / psi_derivative(self, 1, x).map(|d| d.value).unwrap_or(f64::NAN)
    }

    /// ln(−φ'(u)).
    fn ln_neg_phi_prime(&self, u: f64) -> f64 {
        (-self.phi_prime(u)).ln()
    }

    /// Right end of the support of ψ.
    fn x_psi(&self) -> f64 {
        f64::INFINITY
    }

    /// Closed-form survival function of the radial law in dimension `d`.
    fn radial_survival_closed(&self, _d: usize, _r: f64) -> Option<f64> {
        None
    }

    fn radial_pdf_closed(&self, _d: usize, _r: f64) -> Option<f64> {
        None
    }
}

/// Parametric generator: Clayton, Joe or Frank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeneratorRepr", into = "GeneratorRepr")]
pub struct ArchimedeanGenerator {
    family: Family,
    theta: f64,
}

#[derive(Serialize, Deserialize)]
struct GeneratorRepr {
    family: Family,
    theta: f64,
}

impl TryFrom<GeneratorRepr> for ArchimedeanGenerator {
    type Error = Error;
    fn try_from(r: GeneratorRepr) -> Result<Self> {
        ArchimedeanGenerator::new(r.family, r.theta)
    }
}

impl From<ArchimedeanGenerator> for GeneratorRepr {
    fn from(g: ArchimedeanGenerator) -> Self {
        GeneratorRepr { family: g.family, theta: g.theta }
    }
}

impl ArchimedeanGenerator {
    pub fn new(family: Family, theta: f64) -> Result<Self> {
        if !family.contains(theta) {
            let (lo, closed) = family.lower_bound();
            let rel = if closed { ">=" } else { ">" };
            return Err(Error::domain(format!("{family} parameter must be finite and {rel} {lo}, got {theta}")));
        }
        Ok(Self { family, theta })
    }

    pub fn clayton(theta: f64) -> Result<Self> {
        Self::new(Family::Clayton, theta)
    }

    pub fn joe(theta: f64) -> Result<Self> {
        Self::new(Family::Joe, theta)
    }

    pub fn frank(theta: f64) -> Result<Self> {
        Self::new(Family::Frank, theta)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn joe_terms(&self, m: usize, x: f64) -> (f64, f64) {
        // |ψ^{(m)}| = t · Σ_j S(m,j) t^{j-1} |(α)_j| (1-t)^{α-j}, t = e^{-x}
        let alpha = 1.0 / self.theta;
        let t = (-x).exp();
        let one_minus_t = -(-x).exp_m1();
        let mut sum = 0.0;
        let mut falling = 1.0;
        for j in 1..=m {
            falling *= alpha - (j - 1) as f64;
            if falling == 0.0 {
                break;
            }
            sum += stirling2(m, j) * t.powi(j as i32 - 1) * falling.abs() * one_minus_t.powf(alpha - j as f64);
        }
        (t, sum)
    }

    fn frank_terms(&self, m: usize, x: f64) -> (f64, f64) {
        // |ψ^{(m)}| = (w/θ) Σ_k k! S(m,k+1) w^k, w = z/(1-z), z = (1-e^{-θ})e^{-x}
        let c = -(-self.theta).exp_m1();
        let z = c * (-x).exp();
        let w = z / (1.0 - z);
        let mut sum = 0.0;
        let mut wk = 1.0;
        for k in 0..m {
            sum += factorial(k) * stirling2(m, k + 1) * wk;
            wk *= w;
        }
        (w, sum)
    }
}

impl Generator for ArchimedeanGenerator {
    fn psi(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if x.is_infinite() {
            return 0.0;
        }
        let th = self.theta;
        match self.family {
            Family::Clayton => (-(th * x).ln_1p() / th).exp(),
            Family::Joe => {
                let one_minus_t = -(-x).exp_m1();
                -(one_minus_t.ln() / th).exp_m1()
            }
            Family::Frank => {
                let c = -(-th).exp_m1();
                -(-c * (-x).exp()).ln_1p() / th
            }
        }
    }

    fn phi(&self, u: f64) -> f64 {
        if u >= 1.0 {
            return 0.0;
        }
        if u <= 0.0 {
            return f64::INFINITY;
        }
        let th = self.theta;
        match self.family {
            Family::Clayton => (-th * u.ln()).exp_m1() / th,
            Family::Joe => {
                // -ln(1 - (1-u)^θ)
                let a = th * (-u).ln_1p();
                -(-a.exp()).ln_1p()
            }
            Family::Frank => -((-th * u).exp_m1() / (-th).exp_m1()).ln(),
        }
    }

    fn derivative_exact(&self, m: usize, x: f64) -> Option<f64> {
        if m == 0 {
            return Some(self.psi(x));
        }
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        Some(sign * self.ln_abs_derivative(m, x)?.exp())
    }

    fn ln_abs_derivative(&self, m: usize, x: f64) -> Option<f64> {
        if m == 0 {
            return Some(self.psi(x).ln());
        }
        let x = x.max(0.0);
        let th = self.theta;
        Some(match self.family {
            Family::Clayton => {
                let mut ln_prod = 0.0;
                for j in 0..m {
                    ln_prod += (j as f64 * th).ln_1p();
                }
                ln_prod - (1.0 / th + m as f64) * (th * x).ln_1p()
            }
            Family::Joe => {
                let (_, sum) = self.joe_terms(m, x);
                -x + sum.ln()
            }
            Family::Frank => {
                let (w, sum) = self.frank_terms(m, x);
                w.ln() + sum.ln() - th.ln()
            }
        })
    }

    fn phi_prime(&self, u: f64) -> f64 {
        let th = self.theta;
        match self.family {
            Family::Clayton => -(-(th + 1.0) * u.ln()).exp(),
            Family::Joe => {
                let q = (th * (-u).ln_1p()).exp(); // (1-u)^θ
                -th * ((th - 1.0) * (-u).ln_1p()).exp() / (1.0 - q)
            }
            Family::Frank => -th / (th * u).exp_m1(),
        }
    }

    fn ln_neg_phi_prime(&self, u: f64) -> f64 {
        let th = self.theta;
        match self.family {
            Family::Clayton => -(th + 1.0) * u.ln(),
            Family::Joe => {
                let l1u = (-u).ln_1p();
                th.ln() + (th - 1.0) * l1u - (-(th * l1u).exp_m1()).ln()
            }
            Family::Frank => th.ln() - (th * u).exp_m1().ln(),
        }
    }

    fn radial_pdf_closed(&self, d: usize, r: f64) -> Option<f64> {
        if self.family != Family::Clayton {
            return None;
        }
        if r <= 0.0 {
            return Some(0.0);
        }
        let th = self.theta;
        let mut ln_prod = 0.0;
        for j in 1..d {
            ln_prod += (j as f64 * th).ln_1p();
        }
        let ln = ln_prod - (d as f64 + 1.0 / th) * (th * r).ln_1p() + (d as f64 - 1.0) * r.ln() - factorial(d - 1).ln();
        Some(ln.exp())
    }
}

/// ψ(x) = (1 − x/r0)_+^{d−1}: generator of a radial point mass at `r0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMassGenerator {
    pub r0: f64,
    pub d: usize,
}

impl Generator for PointMassGenerator {
    fn psi(&self, x: f64) -> f64 {
        (1.0 - x / self.r0).max(0.0).powi(self.d as i32 - 1)
    }

    fn phi(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.r0;
        }
        self.r0 * (1.0 - u.min(1.0).powf(1.0 / (self.d as f64 - 1.0)))
    }

    fn derivative_exact(&self, m: usize, x: f64) -> Option<f64> {
        let k = self.d - 1;
        if m > k || x >= self.r0 {
            return Some(0.0);
        }
        let base = 1.0 - x.max(0.0) / self.r0;
        let mut coef = 1.0;
        for j in 0..m {
            coef *= -((k - j) as f64) / self.r0;
        }
        Some(coef * base.powi((k - m) as i32))
    }

    fn x_psi(&self) -> f64 {
        self.r0
    }

    fn radial_survival_closed(&self, _d: usize, r: f64) -> Option<f64> {
        Some(if r < self.r0 { 1.0 } else { 0.0 })
    }
}

/// ψ̃(x) = (1 − x^{1/ϑ})_+^{d−1}, whose Archimedean simplex construction yields
/// the S vector of the logistic stdf. Its radial law lives on (0, 1] and has
/// an atom at 1 unless ϑ = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticSimplexGenerator {
    vartheta: f64,
    d: usize,
    // Σ_m coef_m x^{exp_m} on [0, 1)
    coef: Vec<f64>,
    expo: Vec<f64>,
    // survival(r) = Σ_m surv_coef_m r^{exp_m} on [0, 1)
    surv_coef: Vec<f64>,
}

impl LogisticSimplexGenerator {
    pub fn new(vartheta: f64, d: usize) -> Result<Self> {
        if !(vartheta >= 1.0 && vartheta.is_finite()) {
            return Err(Error::domain(format!("logistic parameter must be >= 1, got {vartheta}")));
        }
        if d < 2 {
            return Err(Error::domain("dimension must be at least 2"));
        }
        let k = d - 1;
        let mut coef = Vec::with_capacity(d);
        let mut expo = Vec::with_capacity(d);
        let mut surv_coef = Vec::with_capacity(d);
        let sign_k = if k % 2 == 0 { 1.0 } else { -1.0 };
        for m in 0..=k {
            let c = binomial(k, m) * if m % 2 == 0 { 1.0 } else { -1.0 };
            let a = m as f64 / vartheta;
            coef.push(c);
            expo.push(a);
            surv_coef.push(c * sign_k * binomial_real(a - 1.0, k));
        }
        Ok(Self { vartheta, d, coef, expo, surv_coef })
    }

    pub fn vartheta(&self) -> f64 {
        self.vartheta
    }

    /// Probability mass of the radial law at r = 1.
    pub fn atom(&self) -> f64 {
        self.surv_coef.iter().sum::<f64>().max(0.0)
    }
}

impl Generator for LogisticSimplexGenerator {
    fn psi(&self, x: f64) -> f64 {
        if x >= 1.0 {
            return 0.0;
        }
        (1.0 - x.max(0.0).powf(1.0 / self.vartheta)).powi(self.d as i32 - 1)
    }

    fn phi(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 1.0;
        }
        (1.0 - u.min(1.0).powf(1.0 / (self.d as f64 - 1.0))).powf(self.vartheta)
    }

    fn derivative_exact(&self, m: usize, x: f64) -> Option<f64> {
        if x >= 1.0 {
            return Some(0.0);
        }
        let mut s = 0.0;
        for (c, a) in self.coef.iter().zip(&self.expo) {
            let mut falling = 1.0;
            for j in 0..m {
                falling *= a - j as f64;
            }
            if falling != 0.0 {
                s += c * falling * x.powf(a - m as f64);
            }
        }
        Some(s)
    }

    fn x_psi(&self) -> f64 {
        1.0
    }

    fn radial_survival_closed(&self, d: usize, r: f64) -> Option<f64> {
        if d != self.d {
            return None;
        }
        if r <= 0.0 {
            return Some(1.0);
        }
        if r >= 1.0 {
            return Some(0.0);
        }
        let s: f64 = self.surv_coef.iter().zip(&self.expo).map(|(c, a)| c * r.powf(*a)).sum();
        Some(s.clamp(0.0, 1.0))
    }
}

/// Value of a derivative together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub value: f64,
    /// `false` when produced by the finite-difference fallback.
    pub exact: bool,
}

const FD_MAX_ORDER: usize = 6;

/// ψ(x) with domain checks.
pub fn psi_eval<G: Generator + ?Sized>(gen: &G, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::domain(format!("psi requires x >= 0, got {x}")));
    }
    Ok(gen.psi(x))
}

/// φ(u) with domain checks.
pub fn phi_eval<G: Generator + ?Sized>(gen: &G, u: f64) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::domain(format!("phi requires u in (0, 1], got {u}")));
    }
    Ok(gen.phi(u))
}

/// Right-hand m-th derivative of ψ, exact when a closed form exists and by
/// central differences otherwise (orders up to 6).
pub fn psi_derivative<G: Generator + ?Sized>(gen: &G, m: usize, x: f64) -> Result<Derivative> {
    if !(x >= 0.0) {
        return Err(Error::domain(format!("derivative requires x >= 0, got {x}")));
    }
    if let Some(v) = gen.derivative_exact(m, x) {
        return Ok(Derivative { value: v, exact: true });
    }
    if m > FD_MAX_ORDER {
        return Err(Error::capability(format!("no closed-form derivative of order {m} and finite differences stop at {FD_MAX_ORDER}")));
    }
    let h = (f64::EPSILON).powf(1.0 / (m as f64 + 2.0)) * x.max(1.0);
    // forward stencil near the origin, centred elsewhere
    let start = if x - 0.5 * m as f64 * h < 0.0 { x } else { x - 0.5 * m as f64 * h };
    let mut s = 0.0;
    for k in 0..=m {
        let sign = if (m - k) % 2 == 0 { 1.0 } else { -1.0 };
        s += sign * binomial(m, k) * gen.psi(start + k as f64 * h);
    }
    Ok(Derivative { value: s / h.powi(m as i32), exact: false })
}

/// Radial law R with P(R > r) tied to ψ through the inverse Williamson
/// d-transform.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialDistribution<G = ArchimedeanGenerator> {
    generator: G,
    d: usize,
}

impl<G: Generator> RadialDistribution<G> {
    pub fn new(generator: G, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::domain(format!("radial law needs dimension >= 2, got {d}")));
        }
        Ok(Self { generator, d })
    }

    pub fn generator(&self) -> &G {
        &self.generator
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// P(R > r) = Σ_{j<d} (−r)^j ψ^{(j)}(r) / j!; every term is non-negative.
    pub fn survival(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        if let Some(s) = self.generator.radial_survival_closed(self.d, r) {
            return s;
        }
        if r >= self.generator.x_psi() {
            return 0.0;
        }
        let mut s = 0.0;
        let mut rj = 1.0;
        for j in 0..self.d {
            let dj = psi_derivative(&self.generator, j, r).map(|d| d.value).unwrap_or(f64::NAN);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let term = sign * rj * dj / factorial(j);
            if term.is_finite() {
                s += term;
            }
            rj *= r;
        }
        s.clamp(0.0, 1.0)
    }

    pub fn cdf(&self, r: f64) -> f64 {
        1.0 - self.survival(r)
    }

    /// Density of the absolutely continuous part.
    pub fn pdf(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        if let Some(v) = self.generator.radial_pdf_closed(self.d, r) {
            return Ok(v);
        }
        self.pdf_generic(r)
    }

    /// (−1)^d r^{d−1} ψ^{(d)}(r) / (d−1)!, bypassing any closed form.
    pub fn pdf_generic(&self, r: f64) -> Result<f64> {
        if r <= 0.0 || r >= self.generator.x_psi() {
            return Ok(0.0);
        }
        let der = psi_derivative(&self.generator, self.d, r)?;
        let sign = if self.d % 2 == 0 { 1.0 } else { -1.0 };
        let v = sign * r.powi(self.d as i32 - 1) * der.value / factorial(self.d - 1);
        if !v.is_finite() {
            return Err(Error::capability(format!("radial density not available at r = {r}")));
        }
        Ok(v.max(0.0))
    }

    /// Inverse CDF: F(r) = p.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("quantile level must be in (0, 1), got {p}")));
        }
        self.invert(p, false)
    }

    /// Inverse survival: P(R > r) = v. More accurate than `quantile(1 − v)`
    /// for small `v`.
    pub fn survival_quantile(&self, v: f64) -> Result<f64> {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::domain(format!("survival level must be in (0, 1), got {v}")));
        }
        self.invert(v, true)
    }

    fn invert(&self, target: f64, on_survival: bool) -> Result<f64> {
        // g(r) increasing in r, root where g = 0
        let g = |r: f64| {
            if on_survival {
                target - self.survival(r)
            } else {
                self.cdf(r) - target
            }
        };
        let mut lo: f64;
        let mut hi = 1.0_f64.min(self.generator.x_psi());
        let mut iter = 0;
        if g(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
            while g(hi) < 0.0 {
                lo = hi;
                hi *= 2.0;
                iter += 1;
                if iter > 1100 || !hi.is_finite() {
                    return Err(Error::numerical(format!("could not bracket radial quantile for level {target} (last upper end {lo:e})")));
                }
            }
        } else {
            let mut probe = hi * 0.5;
            while probe > 1e-300 && g(probe) >= 0.0 {
                hi = probe;
                probe *= 0.5;
            }
            lo = if probe > 1e-300 { probe } else { 0.0 };
        }
        for _ in 0..400 {
            if hi - lo <= 1e-10 * hi.max(1e-300) {
                break;
            }
            let mid = if lo > 0.0 && hi / lo > 2.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        let res = g(r);
        if let Ok(f) = self.pdf(r) {
            if f > 0.0 && f.is_finite() {
                let cand = r - res / f;
                if cand > lo && cand < hi {
                    let res2 = g(cand);
                    if res2.abs() < res.abs() {
                        return Ok(cand);
                    }
                }
            }
        }
        Ok(r)
    }

    /// E[(1 − x/R)_+^{d−1}], which must reproduce ψ(x).
    pub fn williamson_transform(&self, x: f64) -> Result<f64> {
        williamson_transform(RadialLaw::Survival(&|r| self.survival(r)), self.d, x)
    }
}

/// A radial law handed to [`williamson_transform`].
pub enum RadialLaw<'a> {
    PointMass(f64),
    /// Survival function r ↦ P(R > r).
    Survival(&'a dyn Fn(f64) -> f64),
    Sample(&'a [f64]),
}

/// 𝔚_d applied to a radial law: E[(1 − x/R)_+^{d−1}].
///
/// For a survival function this is evaluated after integrating by parts and
/// substituting r = x/(1−s): ∫₀¹ (d−1) s^{d−2} P(R > x/(1−s)) ds.
pub fn williamson_transform(law: RadialLaw<'_>, d: usize, x: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::domain(format!("Williamson transform needs d >= 2, got {d}")));
    }
    if !(x >= 0.0) {
        return Err(Error::domain(format!("Williamson transform needs x >= 0, got {x}")));
    }
    let k = d as i32 - 1;
    let kernel = |r: f64| if r > x { (1.0 - x / r).powi(k) } else { 0.0 };
    match law {
        RadialLaw::PointMass(r0) => {
            if !(r0 > 0.0) {
                return Err(Error::domain("point mass must sit at a positive radius"));
            }
            Ok(kernel(r0))
        }
        RadialLaw::Sample(rs) => {
            if rs.is_empty() {
                return Err(Error::domain("empty radial sample"));
            }
            Ok(rs.iter().map(|&r| kernel(r)).sum::<f64>() / rs.len() as f64)
        }
        RadialLaw::Survival(surv) => {
            if x == 0.0 {
                return Ok(1.0);
            }
            let q = quadrature::adaptive(
                |s: f64| {
                    if s >= 1.0 {
                        return 0.0;
                    }
                    (d - 1) as f64 * s.powi(d as i32 - 2) * surv(x / (1.0 - s))
                },
                0.0,
                1.0,
                1e-12,
                1e-11,
                4000,
            );
            Ok(q.value.clamp(0.0, 1.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(g: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (g(x + h) - g(x - h)) / (2.0 * h)
    }

    #[test]
    fn spot_values() {
        let c1 = ArchimedeanGenerator::clayton(1.0).unwrap();
        assert_eq!(c1.psi(0.0), 1.0);
        assert!((c1.psi(1.0) - 0.5).abs() < 1e-15);
        assert!((c1.phi(0.5) - 1.0).abs() < 1e-14);
        assert!((c1.derivative_exact(1, 1.0).unwrap() + 0.25).abs() < 1e-14);
        let j1 = ArchimedeanGenerator::joe(1.0).unwrap();
        assert!((j1.derivative_exact(1, 1.0).unwrap() + (-1.0f64).exp()).abs() < 1e-14);
        let j2 = ArchimedeanGenerator::joe(2.0).unwrap();
        assert!(j2.psi(800.0) < 1e-300);
        assert!((j2.phi(j2.psi(3.0)) - 3.0).abs() < 1e-10);
    }

    #[test]
    fn domains_are_enforced() {
        assert!(ArchimedeanGenerator::clayton(0.0).is_err());
        assert!(ArchimedeanGenerator::joe(0.99).is_err());
        assert!(ArchimedeanGenerator::frank(-1.0).is_err());
        assert!(ArchimedeanGenerator::clayton(f64::NAN).is_err());
        let g = ArchimedeanGenerator::clayton(1.0).unwrap();
        assert!(phi_eval(&g, 0.0).is_err());
        assert!(phi_eval(&g, 1.5).is_err());
        assert!(psi_eval(&g, -0.1).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let gens = [
            ArchimedeanGenerator::clayton(1.5).unwrap(),
            ArchimedeanGenerator::joe(1.5).unwrap(),
            ArchimedeanGenerator::joe(3.0).unwrap(),
            ArchimedeanGenerator::frank(2.0).unwrap(),
        ];
        for g in gens {
            for &x in &[0.2, 0.7, 2.0] {
                for m in 1..=5 {
                    let lower = |y: f64| g.derivative_exact(m - 1, y).unwrap();
                    let num = fd(&lower, x, 1e-5);
                    let ex = g.derivative_exact(m, x).unwrap();
                    assert!((num - ex).abs() < 1e-5 * (1.0 + ex.abs()), "{g:?} m={m} x={x}: {num} vs {ex}");
                }
            }
        }
    }

    #[test]
    fn phi_prime_is_reciprocal_slope() {
        for g in [
            ArchimedeanGenerator::clayton(0.7).unwrap(),
            ArchimedeanGenerator::joe(2.5).unwrap(),
            ArchimedeanGenerator::frank(4.0).unwrap(),
        ] {
            for &u in &[0.05, 0.4, 0.93] {
                let num = fd(&|v| g.phi(v), u, 1e-6);
                assert!((g.phi_prime(u) - num).abs() < 1e-5 * num.abs(), "{g:?} {u}");
                assert!((g.ln_neg_phi_prime(u) - (-num).ln()).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn finite_difference_fallback_is_flagged() {
        struct Exp;
        impl Generator for Exp {
            fn psi(&self, x: f64) -> f64 {
                (-x).exp()
            }
            fn phi(&self, u: f64) -> f64 {
                -u.ln()
            }
        }
        let d = psi_derivative(&Exp, 2, 1.0).unwrap();
        assert!(!d.exact);
        assert!((d.value - (-1.0f64).exp()).abs() < 1e-4);
        assert!(matches!(psi_derivative(&Exp, 9, 1.0), Err(Error::Capability(_))));
    }

    #[test]
    fn point_mass_radial_law_is_a_step() {
        let rd = RadialDistribution::new(PointMassGenerator { r0: 1.0, d: 3 }, 3).unwrap();
        let plain = RadialDistribution::new(
            {
                struct Poly;
                impl Generator for Poly {
                    fn psi(&self, x: f64) -> f64 {
                        (1.0 - x).max(0.0).powi(2)
                    }
                    fn phi(&self, u: f64) -> f64 {
                        1.0 - u.sqrt()
                    }
                    fn derivative_exact(&self, m: usize, x: f64) -> Option<f64> {
                        PointMassGenerator { r0: 1.0, d: 3 }.derivative_exact(m, x)
                    }
                }
                Poly
            },
            3,
        )
        .unwrap();
        for r in [0.1, 0.5, 0.999] {
            assert!(plain.cdf(r).abs() < 1e-12);
        }
        for r in [1.0, 1.5] {
            assert!((plain.cdf(r) - 1.0).abs() < 1e-12);
        }
        assert!((rd.quantile(0.3).unwrap() - 1.0).abs() < 1e-9);
        assert!((williamson_transform(RadialLaw::PointMass(1.0), 3, 0.5).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn simplex_generator_survival_matches_generic_sum() {
        for (vt, d) in [(1.25, 2usize), (2.0, 3), (3.0, 4)] {
            let g = LogisticSimplexGenerator::new(vt, d).unwrap();
            for r in [0.05, 0.3, 0.6, 0.95] {
                let closed = g.radial_survival_closed(d, r).unwrap();
                let mut s = 0.0;
                let mut rj = 1.0;
                for j in 0..d {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    s += sign * rj * g.derivative_exact(j, r).unwrap() / factorial(j);
                    rj *= r;
                }
                assert!((closed - s).abs() < 1e-12, "vt={vt} d={d} r={r}");
            }
        }
        let g = LogisticSimplexGenerator::new(2.0, 2).unwrap();
        assert!((g.atom() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clayton_pdf_closed_form_matches_generic() {
        let rd = RadialDistribution::new(ArchimedeanGenerator::clayton(1.5).unwrap(), 3).unwrap();
        for r in [0.01, 0.3, 1.0, 4.0, 50.0] {
            let a = rd.pdf(r).unwrap();
            let b = rd.pdf_generic(r).unwrap();
            assert!((a - b).abs() < 1e-10 * (1.0 + a), "{r}: {a} {b}");
        }
    }
}
