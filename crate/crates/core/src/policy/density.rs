//! Quantal-response densities over utility values and their mixtures.
//!
//! A rationality scalar `λ` induces the density
//! `λ exp(λ (1 + u)) / (exp(2λ) - 1)` on `u ∈ [-1, 1]` (constant 1/2 at
//! `λ = 0`). Positive `λ` favours high utility, negative `λ` low utility.

use serde::{Deserialize, Serialize};

use super::utility::{CutInAction, SubjectState, Utilities, UtilitySpec};
use crate::error::{Error, Result};

/// Default bound on `|λ|`.
pub const DEFAULT_LAMBDA_MAX: f64 = 100.0;

/// Quantal density for one `λ`, stored as `scale * exp(λ (u - anchor))` so
/// that it never overflows for `|λ| <= 350`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantalDensity {
    lambda: f64,
    scale: f64,
    anchor: f64,
}

impl QuantalDensity {
    pub fn new(lambda: f64) -> Self {
        if lambda == 0.0 {
            Self { lambda, scale: 0.5, anchor: 0.0 }
        } else if lambda > 0.0 {
            Self { lambda, scale: lambda / -(-2.0 * lambda).exp_m1(), anchor: 1.0 }
        } else {
            Self { lambda, scale: lambda / (2.0 * lambda).exp_m1(), anchor: -1.0 }
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Density at `u`; no range check.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        self.scale * (self.lambda * (u - self.anchor)).exp()
    }
}

/// Density of utility `u` under rationality `lambda`.
pub fn component_density(u: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(-1.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("utility must lie in [-1, 1], got {u}")));
    }
    Ok(QuantalDensity::new(lambda).eval(u))
}

/// CDF of the component density truncated to `[u_lo, u_hi]`.
pub fn component_cdf(u: f64, lambda: f64, u_lo: f64, u_hi: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_interval(u_lo, u_hi)?;
    if u <= u_lo {
        return Ok(0.0);
    }
    if u >= u_hi {
        return Ok(1.0);
    }
    let w = u_hi - u_lo;
    let x = u - u_lo;
    let f = if lambda == 0.0 {
        x / w
    } else if lambda > 0.0 {
        // exp(λ(x - w)) (1 - exp(-λx)) / (1 - exp(-λw))
        (lambda * (x - w)).exp() * (-(-lambda * x).exp_m1()) / (-(-lambda * w).exp_m1())
    } else {
        (lambda * x).exp_m1() / (lambda * w).exp_m1()
    };
    Ok(f.clamp(0.0, 1.0))
}

/// Inverse CDF of the component density truncated to `[u_lo, u_hi]`.
pub fn component_cdf_inverse(p: f64, lambda: f64, u_lo: f64, u_hi: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability must lie in [0, 1], got {p}")));
    }
    check_lambda(lambda)?;
    check_interval(u_lo, u_hi)?;
    let w = u_hi - u_lo;
    let u = if lambda == 0.0 {
        u_lo + p * w
    } else if lambda > 0.0 {
        // u_lo + ln(1 + p (e^{λw} - 1)) / λ, rewritten around u_hi.
        let tail = (-lambda * w).exp();
        u_hi + (p + (1.0 - p) * tail).ln() / lambda
    } else {
        u_lo + (p * (lambda * w).exp_m1()).ln_1p() / lambda
    };
    Ok(u.clamp(u_lo, u_hi))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be finite, got {lambda}")));
    }
    Ok(())
}

fn check_interval(u_lo: f64, u_hi: f64) -> Result<()> {
    if !(-1.0 <= u_lo && u_lo < u_hi && u_hi <= 1.0) {
        return Err(Error::Domain(format!("need -1 <= u_lo < u_hi <= 1, got [{u_lo}, {u_hi}]")));
    }
    Ok(())
}

/// Which utility a rationality scalar applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UtilityId {
    Gap,
    Ttc,
    Progress,
}

impl UtilityId {
    pub const ALL: [UtilityId; 3] = [UtilityId::Gap, UtilityId::Ttc, UtilityId::Progress];

    pub fn index(self) -> usize {
        match self {
            UtilityId::Gap => 0,
            UtilityId::Ttc => 1,
            UtilityId::Progress => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RationalityComponent {
    pub lambda: f64,
    pub utility_id: UtilityId,
}

/// Rationality vector `[(λ_gap, u_gap), (λ_ttc, u_ttc), (λ_progress, u_progress)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RationalityComponent>", into = "Vec<RationalityComponent>")]
pub struct RationalityVector {
    lambdas: [f64; 3],
}

impl RationalityVector {
    pub fn new(gap: f64, ttc: f64, progress: f64) -> Result<Self> {
        let v = Self { lambdas: [gap, ttc, progress] };
        for l in v.lambdas {
            check_lambda(l)?;
        }
        Ok(v)
    }

    /// Build from components given in any order; each utility must appear once.
    pub fn from_components(components: &[RationalityComponent]) -> Result<Self> {
        if components.len() != 3 {
            return Err(Error::Domain(format!("expected 3 components, got {}", components.len())));
        }
        let mut lambdas = [f64::NAN; 3];
        let mut seen = [false; 3];
        for c in components {
            let i = c.utility_id.index();
            if seen[i] {
                return Err(Error::Domain(format!("utility {:?} appears twice", c.utility_id)));
            }
            seen[i] = true;
            lambdas[i] = c.lambda;
        }
        Self::new(lambdas[0], lambdas[1], lambdas[2])
    }

    pub fn components(&self) -> [RationalityComponent; 3] {
        let mut out = [RationalityComponent { lambda: 0.0, utility_id: UtilityId::Gap }; 3];
        for (i, id) in UtilityId::ALL.into_iter().enumerate() {
            out[i] = RationalityComponent { lambda: self.lambdas[i], utility_id: id };
        }
        out
    }

    pub fn lambdas(&self) -> [f64; 3] {
        self.lambdas
    }

    pub fn lambda(&self, id: UtilityId) -> f64 {
        self.lambdas[id.index()]
    }

    pub fn check_bounds(&self, lambda_max: f64) -> Result<()> {
        for l in self.lambdas {
            if l.abs() > lambda_max {
                return Err(Error::Domain(format!("|lambda| = {} exceeds {lambda_max}", l.abs())));
            }
        }
        Ok(())
    }

    pub(crate) fn densities(&self) -> [QuantalDensity; 3] {
        self.lambdas.map(QuantalDensity::new)
    }
}

impl TryFrom<Vec<RationalityComponent>> for RationalityVector {
    type Error = Error;
    fn try_from(v: Vec<RationalityComponent>) -> Result<Self> {
        Self::from_components(&v)
    }
}

impl From<RationalityVector> for Vec<RationalityComponent> {
    fn from(v: RationalityVector) -> Self {
        v.components().to_vec()
    }
}

/// Nine-parameter mixed-behavior model: per utility a positive and a negative
/// rationality value blended by `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedPolicyParams {
    /// `λ⁺` for (gap, ttc, progress), each in `(0, λ_max]`.
    pub lambda_plus: [f64; 3],
    /// `λ⁻` for (gap, ttc, progress), each in `[-λ_max, 0)`.
    pub lambda_minus: [f64; 3],
    /// Mixing weights in `[0, 1]`.
    pub alpha: [f64; 3],
}

impl MixedPolicyParams {
    pub fn new(lambda_plus: [f64; 3], lambda_minus: [f64; 3], alpha: [f64; 3]) -> Result<Self> {
        let p = Self { lambda_plus, lambda_minus, alpha };
        p.validate(DEFAULT_LAMBDA_MAX)?;
        Ok(p)
    }

    pub fn validate(&self, lambda_max: f64) -> Result<()> {
        for i in 0..3 {
            let (lp, lm, a) = (self.lambda_plus[i], self.lambda_minus[i], self.alpha[i]);
            if !(lp > 0.0 && lp <= lambda_max) {
                return Err(Error::Domain(format!("lambda_plus[{i}] = {lp} outside (0, {lambda_max}]")));
            }
            if !(lm < 0.0 && lm >= -lambda_max) {
                return Err(Error::Domain(format!("lambda_minus[{i}] = {lm} outside [-{lambda_max}, 0)")));
            }
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Domain(format!("alpha[{i}] = {a} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Flattened as `[λ⁺ x3, λ⁻ x3, α x3]`.
    pub fn to_vec(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        out[..3].copy_from_slice(&self.lambda_plus);
        out[3..6].copy_from_slice(&self.lambda_minus);
        out[6..].copy_from_slice(&self.alpha);
        out
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            lambda_plus: [x[0], x[1], x[2]],
            lambda_minus: [x[3], x[4], x[5]],
            alpha: [x[6], x[7], x[8]],
        }
    }

    pub(crate) fn densities(&self) -> MixedDensities {
        MixedDensities {
            plus: self.lambda_plus.map(QuantalDensity::new),
            minus: self.lambda_minus.map(QuantalDensity::new),
            alpha: self.alpha,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MixedDensities {
    pub plus: [QuantalDensity; 3],
    pub minus: [QuantalDensity; 3],
    pub alpha: [f64; 3],
}

impl MixedDensities {
    /// Contribution of utility `i` at value `u`, before the 1/3 factor.
    #[inline]
    pub fn term(&self, i: usize, u: f64) -> f64 {
        self.alpha[i] * self.plus[i].eval(u) + (1.0 - self.alpha[i]) * self.minus[i].eval(u)
    }
}

fn check_utilities(u: &Utilities) -> Result<()> {
    for x in u.as_array() {
        if !(-1.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("utility {x} outside [-1, 1]")));
        }
    }
    Ok(())
}

/// Unnormalized mixture policy density `(1/3) Σ_i p(u_i | λ_i)`.
pub fn mixture_density(
    state: &SubjectState,
    action: &CutInAction,
    lam: &RationalityVector,
    spec: &UtilitySpec,
) -> Result<f64> {
    let u = Utilities::of(state, action, spec)?;
    check_utilities(&u)?;
    Ok(mixture_density_at(&u, lam))
}

pub(crate) fn mixture_density_at(u: &Utilities, lam: &RationalityVector) -> f64 {
    let d = lam.densities();
    (d[0].eval(u.gap) + d[1].eval(u.ttc) + d[2].eval(u.progress)) / 3.0
}

/// Unnormalized mixed-behavior density
/// `(1/3) Σ_i [α_i p(u_i | λ_i⁺) + (1 - α_i) p(u_i | λ_i⁻)]`.
pub fn mixed_density(
    state: &SubjectState,
    action: &CutInAction,
    params: &MixedPolicyParams,
    spec: &UtilitySpec,
) -> Result<f64> {
    let u = Utilities::of(state, action, spec)?;
    check_utilities(&u)?;
    let d = params.densities();
    Ok((d.term(0, u.gap) + d.term(1, u.ttc) + d.term(2, u.progress)) / 3.0)
}
