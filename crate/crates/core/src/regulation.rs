//! Minimum privacy mandates: per-platform lower bounds on noise, with an
//! infinite bound acting as a data-sharing ban.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    assemble, beta_thresholds, solve, verify_profile, EquilibriumResult, Method, Status,
};
use crate::info_kernel::{info_raw, signal_ratio, sigma_for_ratio, MarketParams};
use crate::platforms::PlatformSet;
use crate::settings::SolverSettings;
use crate::stage_game::{subgame_raw, user_utility_raw};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "PolicyRepr")]
pub enum RegulationPolicy {
    None,
    Uniform {
        #[serde(with = "crate::serde_inf")]
        sigma_bar: f64,
    },
    BanAll,
    Nonuniform {
        #[serde(with = "crate::serde_inf::vec")]
        lower_bounds: Vec<f64>,
    },
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum PolicyKind {
    None,
    Uniform,
    BanAll,
    Nonuniform,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyRepr {
    kind: PolicyKind,
    #[serde(default, with = "crate::serde_inf::opt")]
    sigma_bar: Option<f64>,
    #[serde(default, deserialize_with = "opt_vec")]
    lower_bounds: Option<Vec<f64>>,
}

fn opt_vec<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<f64>>, D::Error> {
    crate::serde_inf::deserialize_vec(d).map(Some)
}

impl TryFrom<PolicyRepr> for RegulationPolicy {
    type Error = String;

    fn try_from(r: PolicyRepr) -> std::result::Result<Self, String> {
        match (r.kind, r.sigma_bar, r.lower_bounds) {
            (PolicyKind::None, None, None) => Ok(RegulationPolicy::None),
            (PolicyKind::BanAll, None, None) => Ok(RegulationPolicy::BanAll),
            (PolicyKind::Uniform, Some(sigma_bar), None) => Ok(RegulationPolicy::Uniform { sigma_bar }),
            (PolicyKind::Nonuniform, None, Some(lower_bounds)) => {
                Ok(RegulationPolicy::Nonuniform { lower_bounds })
            }
            (PolicyKind::Uniform, None, _) => Err("uniform policy requires `sigma_bar`".into()),
            (PolicyKind::Nonuniform, _, None) => {
                Err("nonuniform policy requires `lower_bounds`".into())
            }
            _ => Err("policy has fields that do not belong to its kind".into()),
        }
    }
}

impl RegulationPolicy {
    /// Per-platform noise floors.
    pub fn lower_bounds(&self, k: usize) -> Vec<f64> {
        match self {
            RegulationPolicy::None => vec![0.0; k],
            RegulationPolicy::Uniform { sigma_bar } => vec![*sigma_bar; k],
            RegulationPolicy::BanAll => vec![f64::INFINITY; k],
            RegulationPolicy::Nonuniform { lower_bounds } => lower_bounds.clone(),
        }
    }

    /// Ban on low-cost platforms and floor `sigma_bar` on high-cost ones.
    pub fn ban_low_cost(params: &MarketParams, sigma_bar: f64) -> Self {
        RegulationPolicy::Nonuniform {
            lower_bounds: params
                .cost
                .iter()
                .map(|&c| if c > 0.5 { sigma_bar } else { f64::INFINITY })
                .collect(),
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let bounds = self.lower_bounds(k);
        if bounds.len() != k {
            return Err(Error::InvalidParams(format!(
                "policy has {} lower bounds, expected k = {k}",
                bounds.len()
            )));
        }
        if let Some((i, b)) = bounds.iter().enumerate().find(|(_, b)| !(**b >= 0.0)) {
            return Err(Error::InvalidParams(format!(
                "lower bound {i} = {b} must be nonnegative"
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            RegulationPolicy::None => "none".into(),
            RegulationPolicy::Uniform { sigma_bar } => format!("uniform(sigma_bar={sigma_bar})"),
            RegulationPolicy::BanAll => "ban_all".into(),
            RegulationPolicy::Nonuniform { lower_bounds } => {
                let parts: Vec<String> = lower_bounds.iter().map(|b| b.to_string()).collect();
                format!("nonuniform({})", parts.join(","))
            }
        }
    }
}

/// Noise profile for entrants `entry` that respects `floors`: pinned at the
/// floors when the user already shares with every entrant there, otherwise
/// raised symmetrically (in signal ratio) to the user's indifference boundary.
fn mandated_profile(params: &MarketParams, entry: PlatformSet, floors: &[f64]) -> Vec<f64> {
    let mut sigma = vec![f64::INFINITY; params.k];
    for i in entry.iter() {
        sigma[i] = floors[i];
    }
    if entry.is_empty() || user_utility_raw(params, &sigma, entry) >= 0.0 {
        return sigma;
    }
    let caps: Vec<(usize, f64)> = entry
        .iter()
        .filter(|&i| floors[i].is_finite() && params.gamma[i] > 0.0)
        .map(|i| (i, signal_ratio(params.gamma[i], floors[i])))
        .collect();
    let set = |sigma: &mut Vec<f64>, lambda: f64| {
        for &(i, cap) in &caps {
            sigma[i] = sigma_for_ratio(params.gamma[i], lambda.min(cap))
                .unwrap_or(0.0)
                .max(floors[i]);
        }
    };
    let hi_start = caps.iter().map(|c| c.1).fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, hi_start);
    let mut work = sigma.clone();
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        set(&mut work, mid);
        if user_utility_raw(params, &work, entry) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    set(&mut sigma, lo);
    sigma
}

/// Drops the entrant with the most negative utility until every entrant breaks even.
fn stable_entry(params: &MarketParams, floors: &[f64], tol: f64, start: PlatformSet) -> (PlatformSet, Vec<f64>) {
    let mut entry = start;
    loop {
        let sigma = mandated_profile(params, entry, floors);
        let (_, out) = subgame_raw(params, &sigma, entry, tol);
        let worst = entry
            .iter()
            .map(|i| (i, out.u_platforms[i]))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match worst {
            Some((i, u)) if u < 0.0 => entry = entry.without(i),
            _ => return (entry, sigma),
        }
    }
}

/// Equilibrium of the game with noise floors imposed by `policy`.
pub fn solve_with_policy(
    params: &MarketParams,
    policy: &RegulationPolicy,
    settings: &SolverSettings,
) -> Result<EquilibriumResult> {
    params.validate()?;
    settings.validate()?;
    policy.validate(params.k)?;
    if *policy == RegulationPolicy::None {
        return solve(params, settings);
    }
    let floors = policy.lower_bounds(params.k);
    let thresholds = beta_thresholds(params, settings).ok();

    // A free-market equilibrium that already respects the floors survives:
    // the mandate only removes deviations.
    let free = solve(params, settings)?;
    let respects = free
        .entrants()
        .iter()
        .all(|i| free.noise.sigma[i] >= floors[i]);
    if free.status == Status::Verified && respects {
        return Ok(free);
    }

    let tol = settings.indifference_tol;
    let (entry, sigma) = stable_entry(params, &floors, tol, params.all());
    let cert = verify_profile(params, &sigma, entry, &floors, settings, false);
    if cert.is_verified() {
        let mut r = assemble(params, sigma, entry, cert, Status::Verified, Method::Mandate, settings);
        r.thresholds = thresholds;
        return Ok(r);
    }
    if params.k <= settings.fallback_cap {
        let sets: Vec<PlatformSet> = params.all().subsets().filter(|&s| s != entry).collect();
        let found = settings.exec.map(&sets, |&set| {
            let s = mandated_profile(params, set, &floors);
            verify_profile(params, &s, set, &floors, settings, true)
                .is_verified()
                .then_some(s)
        });
        let hit = sets
            .iter()
            .zip(found)
            .filter_map(|(&set, s)| s.map(|s| (set, s)))
            .max_by(|a, b| a.0.len().cmp(&b.0.len()).then(b.0.bits().cmp(&a.0.bits())));
        if let Some((set, s)) = hit {
            let cert = verify_profile(params, &s, set, &floors, settings, false);
            let status = if cert.is_verified() {
                Status::Verified
            } else {
                Status::NoEquilibriumFound
            };
            let mut r = assemble(params, s, set, cert, status, Method::Mandate, settings);
            r.thresholds = thresholds;
            return Ok(r);
        }
    }
    let status = if params.k <= settings.fallback_cap {
        Status::NoEquilibriumFound
    } else {
        Status::CandidateOnly
    };
    let mut r = assemble(params, sigma, entry, cert, status, Method::Mandate, settings);
    r.thresholds = thresholds;
    Ok(r)
}

/// Smallest buyer valuation at which every platform enters under a uniform
/// mandate `sigma_bar`, floored at the free-market all-entry threshold.
pub fn mandate_entry_threshold(params: &MarketParams, sigma_bar: f64, settings: &SolverSettings) -> Result<f64> {
    params.validate()?;
    if !(sigma_bar.is_finite() && sigma_bar >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "sigma_bar must be finite and nonnegative, got {sigma_bar}"
        )));
    }
    let floor = beta_thresholds(params, settings).map_or(0.0, |t| t.beta_bar);
    let sigma = vec![sigma_bar; params.k];
    let all = params.all();
    let h = &params.h_buyer;
    let full = h.eval(info_raw(&params.gamma, &sigma, all));
    let mut beta = floor;
    for i in params.high_cost().iter() {
        let marginal = full - h.eval(info_raw(&params.gamma, &sigma, all.without(i)));
        let need = if marginal > 0.0 {
            (params.cost[i] - 0.5) / marginal
        } else {
            f64::INFINITY
        };
        if !(need <= settings.mandate_cap) {
            return Err(Error::DegenerateMandate {
                sigma_bar,
                threshold: need,
                cap: settings.mandate_cap,
            });
        }
        beta = beta.max(need);
    }
    Ok(beta)
}

/// Default mandate grid: 32 noise levels with `sigma_bar²` log-spaced over `[1e-2, 1e4]`.
pub fn default_sigma_bar_grid() -> Vec<f64> {
    (0..32)
        .map(|j| (10f64.powf(-2.0 + 6.0 * j as f64 / 31.0)).sqrt())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictedWinner {
    Ban,
    Uniform,
    Nonuniform,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub policy: RegulationPolicy,
    pub status: Status,
    pub u_user: f64,
    pub welfare: f64,
    pub entrants: PlatformSet,
    pub result: EquilibriumResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub evaluations: Vec<PolicyEvaluation>,
    /// Index of the verified policy with the highest user utility.
    pub best: Option<usize>,
    pub predicted: PredictedWinner,
    /// Valuation above which the winning mandate keeps every platform in the market.
    pub beta_hat: Option<f64>,
    pub note: Option<String>,
}

impl PolicyComparison {
    pub fn best_policy(&self) -> Option<&PolicyEvaluation> {
        self.best.map(|i| &self.evaluations[i])
    }

    /// Best verified user utility among policies matching `pred`.
    pub fn best_utility_where<F: Fn(&RegulationPolicy) -> bool>(&self, pred: F) -> Option<f64> {
        self.evaluations
            .iter()
            .filter(|e| e.status == Status::Verified && pred(&e.policy))
            .map(|e| e.u_user)
            .reduce(f64::max)
    }
}

fn evaluate(
    params: &MarketParams,
    policies: Vec<RegulationPolicy>,
    settings: &SolverSettings,
) -> Result<Vec<PolicyEvaluation>> {
    settings
        .exec
        .map(&policies, |policy| {
            solve_with_policy(params, policy, settings).map(|result| PolicyEvaluation {
                policy: policy.clone(),
                status: result.status,
                u_user: result.outcome.u_user,
                welfare: result.welfare,
                entrants: result.entrants(),
                result,
            })
        })
        .into_iter()
        .collect()
}

fn argmax_verified(evals: &[PolicyEvaluation]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in evals.iter().enumerate() {
        if e.status != Status::Verified {
            continue;
        }
        if best.is_none_or(|b| e.u_user > evals[b].u_user + 1e-12) {
            best = Some(i);
        }
    }
    best
}

/// Ban-versus-uniform-mandate comparison over a grid of mandate levels.
pub fn compare_ban_vs_uniform(
    params: &MarketParams,
    sigma_bar_grid: &[f64],
    settings: &SolverSettings,
) -> Result<PolicyComparison> {
    params.validate()?;
    let mut policies = vec![RegulationPolicy::BanAll];
    policies.extend(
        sigma_bar_grid
            .iter()
            .map(|&sigma_bar| RegulationPolicy::Uniform { sigma_bar }),
    );
    let evaluations = evaluate(params, policies, settings)?;
    let best = argmax_verified(&evaluations);

    let high = params.high_cost();
    let low = params.k - high.len();
    let beta_under = beta_thresholds(params, settings).map_or(f64::NAN, |t| t.beta_under);
    let mut beta_hat = None;
    let predicted = if high.is_empty() || params.beta <= beta_under {
        PredictedWinner::Ban
    } else {
        // A uniform mandate wins once it keeps everyone in and leaks less than
        // the services of the high-cost platforms are worth.
        let winning: Vec<f64> = sigma_bar_grid
            .iter()
            .copied()
            .filter(|&s| {
                let info = info_raw(&params.gamma, &vec![s; params.k], params.all());
                params.k as f64 / 2.0 - params.alpha * params.h_user.eval(info) > low as f64 / 2.0
            })
            .filter_map(|s| mandate_entry_threshold(params, s, settings).ok())
            .collect();
        match winning.iter().copied().reduce(f64::min) {
            Some(b) => {
                beta_hat = Some(b);
                if params.beta >= b {
                    PredictedWinner::Uniform
                } else {
                    PredictedWinner::Undetermined
                }
            }
            None => PredictedWinner::Undetermined,
        }
    };
    Ok(PolicyComparison {
        evaluations,
        best,
        predicted,
        beta_hat,
        note: None,
    })
}

/// Compares ban, uniform mandates and bans on low-cost platforms combined
/// with a mandate on high-cost ones, over a grid of mandate levels.
pub fn optimal_nonuniform(
    params: &MarketParams,
    sigma_bar_grid: &[f64],
    settings: &SolverSettings,
) -> Result<PolicyComparison> {
    params.validate()?;
    if params.high_cost().is_empty() {
        let evaluations = evaluate(params, vec![RegulationPolicy::BanAll], settings)?;
        return Ok(PolicyComparison {
            best: argmax_verified(&evaluations),
            evaluations,
            predicted: PredictedWinner::Ban,
            beta_hat: None,
            note: Some("no high-cost platform: banning all data sharing is optimal".into()),
        });
    }
    let mut policies = vec![RegulationPolicy::BanAll];
    for &s in sigma_bar_grid {
        policies.push(RegulationPolicy::Uniform { sigma_bar: s });
        policies.push(RegulationPolicy::ban_low_cost(params, s));
    }
    let evaluations = evaluate(params, policies, settings)?;
    let best = argmax_verified(&evaluations);
    let beta_hat = best.and_then(|b| match &evaluations[b].policy {
        RegulationPolicy::Nonuniform { lower_bounds } => lower_bounds
            .iter()
            .copied()
            .find(|x| x.is_finite())
            .and_then(|s| mandate_entry_threshold(params, s, settings).ok()),
        RegulationPolicy::Uniform { sigma_bar } => {
            mandate_entry_threshold(params, *sigma_bar, settings).ok()
        }
        _ => None,
    });
    let predicted = match beta_hat {
        Some(b) if params.beta >= b => PredictedWinner::Nonuniform,
        _ => PredictedWinner::Undetermined,
    };
    Ok(PolicyComparison {
        evaluations,
        best,
        predicted,
        beta_hat,
        note: None,
    })
}
