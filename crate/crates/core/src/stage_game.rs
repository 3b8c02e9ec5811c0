//! Utilities and the last three stages: buyer acceptance, pricing and the
//! user's sharing decision.

use serde::{Deserialize, Serialize};

use crate::info_kernel::{info_raw, platform_service_info, MarketParams, NoiseProfile};
use crate::platforms::PlatformSet;
use crate::settings::SolverSettings;
use crate::{Error, Result};

/// Entry `e`, sharing `a` and buyer acceptance `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionProfiles {
    pub entry: PlatformSet,
    pub sharing: PlatformSet,
    pub buyer: PlatformSet,
}

impl ActionProfiles {
    /// Applies `a ← a·e` and `b ← b·a·e`.
    #[must_use]
    pub fn normalized(self) -> Self {
        let sharing = self.sharing.intersection(self.entry);
        ActionProfiles {
            entry: self.entry,
            sharing,
            buyer: self.buyer.intersection(sharing),
        }
    }

    /// Entry `e`, sharing `a` and buyer acceptance on the whole active set.
    pub fn on_path(entry: PlatformSet, sharing: PlatformSet) -> Self {
        let sharing = sharing.intersection(entry);
        ActionProfiles {
            entry,
            sharing,
            buyer: sharing,
        }
    }
}

/// Realized utilities of every party in the last three stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub prices: Vec<f64>,
    pub buyer: PlatformSet,
    pub u_user: f64,
    pub u_platforms: Vec<f64>,
    pub u_buyer: f64,
    pub info_to_buyer: f64,
}

impl StageOutcome {
    pub fn empty(k: usize) -> Self {
        StageOutcome {
            prices: vec![0.0; k],
            buyer: PlatformSet::EMPTY,
            u_user: 0.0,
            u_platforms: vec![0.0; k],
            u_buyer: 0.0,
            info_to_buyer: 0.0,
        }
    }
}

/// The lattice-maximal sharing profile chosen by the user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionLabel(pub PlatformSet);

impl RegionLabel {
    pub fn sharing(self) -> PlatformSet {
        self.0
    }
}

pub(crate) fn prices_raw(params: &MarketParams, sigma: &[f64], active: PlatformSet) -> Vec<f64> {
    let mut p = vec![0.0; params.k];
    if active.is_empty() || params.beta == 0.0 {
        return p;
    }
    let h = &params.h_buyer;
    let full = h.eval(info_raw(&params.gamma, sigma, active));
    for i in active.iter() {
        let rest = h.eval(info_raw(&params.gamma, sigma, active.without(i)));
        p[i] = (params.beta * (full - rest)).max(0.0);
    }
    p
}

/// Marginal-value prices; the companion buyer decision accepts every offer on the active set.
pub fn equilibrium_prices(
    params: &MarketParams,
    noise: &NoiseProfile,
    entry: PlatformSet,
    sharing: PlatformSet,
) -> Vec<f64> {
    debug_assert_eq!(noise.sigma.len(), params.k);
    prices_raw(params, &noise.sigma, sharing.intersection(entry))
}

pub(crate) fn utilities_raw(
    params: &MarketParams,
    sigma: &[f64],
    actions: ActionProfiles,
    prices: &[f64],
) -> StageOutcome {
    let ActionProfiles {
        entry,
        sharing,
        buyer,
    } = actions.normalized();
    let info = info_raw(&params.gamma, sigma, buyer);
    let service = platform_service_info();
    let payments: f64 = buyer.iter().map(|i| prices[i]).sum();
    let u_user = service * sharing.len() as f64 - params.alpha * params.h_user.eval(info);
    let u_buyer = params.beta * params.h_buyer.eval(info) - payments;
    let u_platforms = (0..params.k)
        .map(|i| {
            if !entry.contains(i) {
                return 0.0;
            }
            let mut u = -params.cost[i];
            if sharing.contains(i) {
                u += service;
            }
            if buyer.contains(i) {
                u += prices[i];
            }
            u
        })
        .collect();
    let mut shown_prices = vec![0.0; params.k];
    for i in sharing.iter() {
        shown_prices[i] = prices[i];
    }
    StageOutcome {
        prices: shown_prices,
        buyer,
        u_user,
        u_platforms,
        u_buyer,
        info_to_buyer: info,
    }
}

/// Utilities of all four parties for the given actions and prices.
pub fn stage_utilities(
    params: &MarketParams,
    noise: &NoiseProfile,
    actions: &ActionProfiles,
    prices: &[f64],
) -> StageOutcome {
    utilities_raw(params, &noise.sigma, *actions, prices)
}

/// User utility when the buyer purchases everything shared.
pub(crate) fn user_utility_raw(params: &MarketParams, sigma: &[f64], shared: PlatformSet) -> f64 {
    platform_service_info() * shared.len() as f64
        - params.alpha * params.h_user.eval(info_raw(&params.gamma, sigma, shared))
}

/// Lattice-maximal element of the user's argmax over subsets of `entry`.
pub(crate) fn best_response_raw(
    params: &MarketParams,
    sigma: &[f64],
    entry: PlatformSet,
    tol: f64,
) -> PlatformSet {
    if entry.is_empty() {
        return PlatformSet::EMPTY;
    }
    let values: Vec<(PlatformSet, f64)> = entry
        .subsets()
        .map(|s| (s, user_utility_raw(params, sigma, s)))
        .collect();
    let best = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let argmax = values.iter().filter(|v| v.1 >= best - tol);
    let join = argmax
        .clone()
        .fold(PlatformSet::EMPTY, |acc, v| acc.union(v.0));
    if user_utility_raw(params, sigma, join) >= best - 2.0 * tol {
        return join;
    }
    // Near-ties can break exact lattice closure; keep the largest tied profile.
    argmax
        .max_by(|a, b| a.0.len().cmp(&b.0.len()).then(b.0.bits().cmp(&a.0.bits())))
        .map(|v| v.0)
        .unwrap_or(PlatformSet::EMPTY)
}

fn check_search(params: &MarketParams, noise: &NoiseProfile, entry: PlatformSet, settings: &SolverSettings) -> Result<()> {
    params.validate()?;
    noise.validate(params.k)?;
    if !entry.is_subset(params.all()) {
        return Err(Error::Index {
            index: entry.upper_bound() - 1,
            reason: format!("entry set exceeds k = {}", params.k),
        });
    }
    if entry.len() > settings.search_cap {
        return Err(Error::SearchLimitExceeded {
            k: entry.len(),
            limit: settings.search_cap,
        });
    }
    Ok(())
}

/// The user's sharing decision given noise and entry, with prices and buyer play at equilibrium.
pub fn user_best_response(
    params: &MarketParams,
    noise: &NoiseProfile,
    entry: PlatformSet,
    settings: &SolverSettings,
) -> Result<RegionLabel> {
    check_search(params, noise, entry, settings)?;
    Ok(RegionLabel(best_response_raw(
        params,
        &noise.sigma,
        entry,
        settings.indifference_tol,
    )))
}

/// Region containing `noise` for entry `entry`.
pub fn region_of(
    params: &MarketParams,
    noise: &NoiseProfile,
    entry: PlatformSet,
    settings: &SolverSettings,
) -> Result<RegionLabel> {
    user_best_response(params, noise, entry, settings)
}

pub(crate) fn subgame_raw(
    params: &MarketParams,
    sigma: &[f64],
    entry: PlatformSet,
    tol: f64,
) -> (ActionProfiles, StageOutcome) {
    let sharing = best_response_raw(params, sigma, entry, tol);
    let actions = ActionProfiles::on_path(entry, sharing);
    let prices = prices_raw(params, sigma, sharing);
    let outcome = utilities_raw(params, sigma, actions, &prices);
    (actions, outcome)
}

/// Plays the last three stages for given noise and entry.
pub fn subgame_outcome(
    params: &MarketParams,
    noise: &NoiseProfile,
    entry: PlatformSet,
    settings: &SolverSettings,
) -> Result<(ActionProfiles, StageOutcome)> {
    check_search(params, noise, entry, settings)?;
    Ok(subgame_raw(params, &noise.sigma, entry, settings.indifference_tol))
}

/// Utilitarian welfare: the sum of all four parties' utilities.
pub fn welfare(outcome: &StageOutcome) -> f64 {
    outcome.u_user + outcome.u_platforms.iter().sum::<f64>() + outcome.u_buyer
}

/// Welfare at an equilibrium on the user's indifference boundary with entrants `entry`:
/// `Σ (1/2 − c_i) + β H_b(I)` with `α H_u(I) = n/2`.
pub fn boundary_welfare(params: &MarketParams, entry: PlatformSet) -> Option<f64> {
    if entry.is_empty() {
        return Some(0.0);
    }
    let n = entry.len() as f64;
    let info = params.h_user.inverse(n / (2.0 * params.alpha))?;
    let services: f64 = entry.iter().map(|i| 0.5 - params.cost[i]).sum();
    Some(services + params.beta * params.h_buyer.eval(info))
}

/// Outcome of the zero-noise privacy check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub holds: bool,
    /// An entry set at which the user still shares at zero noise.
    pub violating_entry: Option<PlatformSet>,
    /// Smallest `α` above which the check passes (for these `γ` and `H_u`).
    pub alpha_threshold: f64,
    /// Two-platform pair condition, when `K = 2`.
    pub pair_threshold: Option<f64>,
    pub pair_holds: Option<bool>,
}

/// Checks that at zero noise the user refuses to share with every entry set.
pub fn check_privacy_assumption(params: &MarketParams, settings: &SolverSettings) -> Result<PrivacyReport> {
    params.validate()?;
    if params.k > settings.search_cap {
        return Err(Error::SearchLimitExceeded {
            k: params.k,
            limit: settings.search_cap,
        });
    }
    let zero = vec![0.0; params.k];
    let tol = settings.indifference_tol;
    let mut violating = None;
    let mut alpha_threshold: f64 = 0.0;
    for s in params.all().subsets().skip(1) {
        if violating.is_none() && user_utility_raw(params, &zero, s) >= -tol {
            violating = Some(s);
        }
        let h = params.h_user.eval(info_raw(&params.gamma, &zero, s));
        let need = if h > 0.0 {
            0.5 * s.len() as f64 / h
        } else {
            f64::INFINITY
        };
        alpha_threshold = alpha_threshold.max(need);
    }
    let (pair_threshold, pair_holds) = if params.k == 2 {
        let (a, b) = (params.gamma[0].powi(2), params.gamma[1].powi(2));
        let denom = 2.0 * (a + b - a * b);
        let thr = if denom > 0.0 {
            (4.0 - a * b) / denom
        } else {
            f64::INFINITY
        };
        (Some(thr), Some(params.alpha > thr))
    } else {
        (None, None)
    };
    Ok(PrivacyReport {
        holds: violating.is_none(),
        violating_entry: violating,
        alpha_threshold,
        pair_threshold,
        pair_holds,
    })
}
