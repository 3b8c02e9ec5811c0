//! Revealed information in the Gaussian signal model.
//!
//! Platform `i` passes the buyer `x_iᵀθ + noise` with noise variance
//! `1 + σ_i²` on top of the unit service noise. Under the substitutes
//! structure the buyer's variance reduction for `yᵀθ` from a set `S` is
//! `mᵀ M⁻¹ m` with `m_i = γ_i`, `M_ii = 2 + σ_i²` and `M_ij = γ_i γ_j`.

use serde::{Deserialize, Serialize};

use crate::linalg::quadratic_form_inverse;
use crate::platforms::{PlatformSet, MAX_PLATFORMS};
use crate::shape::UtilityShape;
use crate::{Error, Result};

/// The full game description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: Vec<f64>,
    pub cost: Vec<f64>,
    #[serde(default)]
    pub h_user: UtilityShape,
    #[serde(default)]
    pub h_buyer: UtilityShape,
}

impl MarketParams {
    /// Linear-utility market.
    pub fn new(alpha: f64, beta: f64, gamma: Vec<f64>, cost: Vec<f64>) -> Result<Self> {
        let params = MarketParams {
            k: gamma.len(),
            alpha,
            beta,
            gamma,
            cost,
            h_user: UtilityShape::Identity,
            h_buyer: UtilityShape::Identity,
        };
        params.validate()?;
        Ok(params)
    }

    #[must_use]
    pub fn with_shapes(mut self, h_user: UtilityShape, h_buyer: UtilityShape) -> Self {
        self.h_user = h_user;
        self.h_buyer = h_buyer;
        self
    }

    #[must_use]
    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    #[must_use]
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn all(&self) -> PlatformSet {
        PlatformSet::full(self.k)
    }

    pub fn is_linear(&self) -> bool {
        self.h_user.is_identity() && self.h_buyer.is_identity()
    }

    /// Platforms whose service cost exceeds the service information `1/2`.
    pub fn high_cost(&self) -> PlatformSet {
        (0..self.k).filter(|&i| self.cost[i] > 0.5).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.k > MAX_PLATFORMS {
            return bad(format!("k must be at most {MAX_PLATFORMS}"));
        }
        if self.gamma.len() != self.k {
            return bad(format!("gamma has {} entries, expected k = {}", self.gamma.len(), self.k));
        }
        if self.cost.len() != self.k {
            return bad(format!("cost has {} entries, expected k = {}", self.cost.len(), self.k));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive and finite, got {}", self.alpha));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("beta must be nonnegative and finite, got {}", self.beta));
        }
        if let Some((i, g)) = self.gamma.iter().enumerate().find(|(_, g)| !(0.0..=1.0).contains(*g)) {
            return bad(format!("gamma[{i}] = {g} lies outside [0, 1]"));
        }
        if let Some((i, c)) = self.cost.iter().enumerate().find(|(_, c)| !(c.is_finite() && **c >= 0.0)) {
            return bad(format!("cost[{i}] = {c} must be nonnegative and finite"));
        }
        self.h_user.validate()?;
        self.h_buyer.validate()
    }
}

/// Per-platform noise standard deviations; `+inf` means nothing reaches the buyer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseProfile {
    #[serde(with = "crate::serde_inf::vec")]
    pub sigma: Vec<f64>,
}

impl NoiseProfile {
    pub fn new(sigma: Vec<f64>) -> Self {
        NoiseProfile { sigma }
    }

    pub fn uniform(k: usize, sigma: f64) -> Self {
        NoiseProfile { sigma: vec![sigma; k] }
    }

    pub fn silent(k: usize) -> Self {
        Self::uniform(k, f64::INFINITY)
    }

    /// Builds a profile from noise variances.
    pub fn from_variances(var: &[f64]) -> Self {
        NoiseProfile {
            sigma: var.iter().map(|v| v.sqrt()).collect(),
        }
    }

    pub fn variances(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s * s).collect()
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.sigma.len() != k {
            return Err(Error::InvalidParams(format!(
                "noise profile has {} entries, expected k = {k}",
                self.sigma.len()
            )));
        }
        if let Some((i, s)) = self.sigma.iter().enumerate().find(|(_, s)| !(**s >= 0.0)) {
            return Err(Error::InvalidParams(format!("sigma[{i}] = {s} must be nonnegative")));
        }
        Ok(())
    }
}

/// Signal ratio `γ² / (2 + σ²)`, zero for infinite noise.
pub fn signal_ratio(gamma: f64, sigma: f64) -> f64 {
    if sigma.is_infinite() {
        0.0
    } else {
        gamma * gamma / (2.0 + sigma * sigma)
    }
}

/// Noise level achieving signal ratio `t`; `+inf` for `t <= 0`, `None` when `t` exceeds `γ²/2`.
pub fn sigma_for_ratio(gamma: f64, t: f64) -> Option<f64> {
    if t <= 0.0 {
        return Some(f64::INFINITY);
    }
    let var = gamma * gamma / t - 2.0;
    if var < -1e-12 {
        None
    } else {
        Some(var.max(0.0).sqrt())
    }
}

/// Unchecked kernel shared by every hot path.
pub(crate) fn info_raw(gamma: &[f64], sigma: &[f64], active: PlatformSet) -> f64 {
    let mut idx = [0usize; MAX_PLATFORMS];
    let mut n = 0;
    for i in active.iter() {
        if sigma[i].is_finite() && gamma[i] > 0.0 {
            idx[n] = i;
            n += 1;
        }
    }
    if n == 0 {
        return 0.0;
    }
    if n == 1 {
        let i = idx[0];
        return signal_ratio(gamma[i], sigma[i]);
    }
    let idx = &idx[..n];
    let mut m = [0.0f64; MAX_PLATFORMS];
    for (slot, &i) in m.iter_mut().zip(idx) {
        *slot = gamma[i];
    }
    let entry = |r: usize, c: usize| {
        let (i, j) = (idx[r], idx[c]);
        if r == c {
            2.0 + sigma[i] * sigma[i]
        } else {
            gamma[i] * gamma[j]
        }
    };
    let q = quadratic_form_inverse(n, entry, &m[..n], 0.0).unwrap_or_else(|| sherman_morrison(gamma, sigma, idx));
    q.clamp(0.0, 1.0)
}

/// Closed form `s / (1 + s)` with `s = Σ γ²/(2 + σ² − γ²)`.
pub(crate) fn sherman_morrison(gamma: &[f64], sigma: &[f64], idx: &[usize]) -> f64 {
    let s: f64 = idx
        .iter()
        .filter(|&&i| sigma[i].is_finite())
        .map(|&i| {
            let g2 = gamma[i] * gamma[i];
            g2 / (2.0 + sigma[i] * sigma[i] - g2)
        })
        .sum();
    s / (1.0 + s)
}

fn check_inputs(params: &MarketParams, noise: &NoiseProfile, active: PlatformSet) -> Result<()> {
    params.validate()?;
    noise.validate(params.k)?;
    if !active.is_subset(params.all()) {
        let index = active.upper_bound() - 1;
        return Err(Error::Index {
            index,
            reason: format!("active set exceeds k = {}", params.k),
        });
    }
    Ok(())
}

/// Variance reduction of `yᵀθ` from the signals of `active`.
pub fn revealed_info(params: &MarketParams, noise: &NoiseProfile, active: PlatformSet) -> Result<f64> {
    check_inputs(params, noise, active)?;
    Ok(info_raw(&params.gamma, &noise.sigma, active))
}

fn check_pair_arg(name: &str, v: f64, gamma: bool) -> Result<()> {
    let ok = if gamma { (0.0..=1.0).contains(&v) } else { v >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} = {v} out of range")))
    }
}

/// Two-platform closed form.
pub fn revealed_info_pair(g1: f64, g2: f64, s1: f64, s2: f64) -> Result<f64> {
    check_pair_arg("gamma1", g1, true)?;
    check_pair_arg("gamma2", g2, true)?;
    check_pair_arg("sigma1", s1, false)?;
    check_pair_arg("sigma2", s2, false)?;
    Ok(match (s1.is_finite(), s2.is_finite()) {
        (false, false) => 0.0,
        (true, false) => signal_ratio(g1, s1),
        (false, true) => signal_ratio(g2, s2),
        (true, true) => {
            let (a, b) = (g1 * g1, g2 * g2);
            let (d1, d2) = (2.0 + s1 * s1, 2.0 + s2 * s2);
            (a * d2 + b * d1 - 2.0 * a * b) / (d1 * d2 - a * b)
        }
    })
}

/// Symmetric closed form: `k` platforms with signal ratio `t`, or `k − 1` with
/// ratio `t` and one with ratio `t_prime`.
pub fn revealed_info_symmetric(k: usize, t: f64, t_prime: Option<f64>) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    let in_range = |v: f64| (0.0..=1.0).contains(&v);
    if !in_range(t) || t_prime.is_some_and(|tp| !in_range(tp)) {
        return Err(Error::InvalidParams(format!(
            "signal ratios must lie in [0, 1], got t = {t}, t' = {t_prime:?}"
        )));
    }
    let kf = k as f64;
    Ok(match t_prime {
        None => kf * t / (1.0 + (kf - 1.0) * t),
        Some(tp) if k == 1 => tp,
        Some(tp) => {
            if t >= 1.0 || tp >= 1.0 {
                1.0
            } else {
                1.0 - (1.0 - t) * (1.0 - tp) / ((1.0 - t) + (kf - 1.0) * t * (1.0 - tp))
            }
        }
    })
}

/// `I(S ∪ {i}) − I(S)`.
pub fn marginal_info(
    params: &MarketParams,
    noise: &NoiseProfile,
    active: PlatformSet,
    i: usize,
) -> Result<f64> {
    if i >= params.k {
        return Err(Error::Index {
            index: i,
            reason: format!("k = {}", params.k),
        });
    }
    if active.contains(i) {
        return Err(Error::Index {
            index: i,
            reason: "platform already in the active set".into(),
        });
    }
    check_inputs(params, noise, active)?;
    let with = info_raw(&params.gamma, &noise.sigma, active.with(i));
    let without = info_raw(&params.gamma, &noise.sigma, active);
    Ok((with - without).max(0.0))
}

/// Information each platform obtains about the user it serves.
pub fn platform_service_info() -> f64 {
    0.5
}

/// Correlations `γ_i = x_iᵀ y`, checking that residuals `x_i − γ_i y` are pairwise orthogonal.
pub fn gammas_from_vectors(x: &[Vec<f64>], y: &[f64], tol: f64) -> Result<Vec<f64>> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    if (dot(y, y) - 1.0).abs() > tol {
        return Err(Error::InvalidParams("y must have unit norm".into()));
    }
    for (i, xi) in x.iter().enumerate() {
        if xi.len() != y.len() {
            return Err(Error::InvalidParams(format!(
                "x[{i}] has dimension {}, expected {}",
                xi.len(),
                y.len()
            )));
        }
        if (dot(xi, xi) - 1.0).abs() > tol {
            return Err(Error::InvalidParams(format!("x[{i}] must have unit norm")));
        }
    }
    let gamma: Vec<f64> = x.iter().map(|xi| dot(xi, y)).collect();
    if let Some((i, g)) = gamma.iter().enumerate().find(|(_, g)| **g < -tol) {
        return Err(Error::InvalidParams(format!(
            "gamma[{i}] = {g} is negative; flip the sign of x[{i}]"
        )));
    }
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let residual = dot(&x[i], &x[j]) - gamma[i] * gamma[j];
            if residual.abs() > tol {
                return Err(Error::SubstitutesViolated { i, j, residual });
            }
        }
    }
    Ok(gamma.into_iter().map(|g| g.clamp(0.0, 1.0)).collect())
}
