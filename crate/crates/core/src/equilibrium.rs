//! Equilibrium candidates, thresholds, deviation verification and the
//! top-level solver.
//!
//! Platforms choose noise and entry anticipating the user's sharing decision
//! and marginal-value prices. Candidates sit on the user's indifference
//! boundary; the verifier then searches every unilateral deviation: raising
//! or lowering own noise (per resulting sharing count), exiting, and entering
//! with the best noise level.

use serde::{Deserialize, Serialize};

use crate::info_kernel::{info_raw, signal_ratio, sigma_for_ratio, MarketParams, NoiseProfile};
use crate::platforms::PlatformSet;
use crate::settings::SolverSettings;
use crate::stage_game::{
    best_response_raw, check_privacy_assumption, subgame_raw, user_utility_raw, welfare,
    ActionProfiles, StageOutcome,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Verified,
    CandidateOnly,
    NoEquilibriumFound,
}

/// How the reported profile was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SinglePlatform,
    EntryBracket,
    FallbackSearch,
    Mandate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDeviation {
    pub platform: usize,
    /// Number of platforms the user shares with after the deviation.
    pub target_share_count: usize,
    pub gain: f64,
    #[serde(with = "crate::serde_inf")]
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryMove {
    Enter,
    Exit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDeviation {
    pub platform: usize,
    pub kind: EntryMove,
    pub gain: f64,
    /// Noise level of the best entry (`inf` for exits).
    #[serde(with = "crate::serde_inf")]
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationCertificate {
    pub user_br_ok: bool,
    pub user_sharing: PlatformSet,
    pub boundary_ok: bool,
    pub u_user: f64,
    pub noise_deviations: Vec<NoiseDeviation>,
    pub entry_deviations: Vec<EntryDeviation>,
    pub tol: f64,
}

impl VerificationCertificate {
    pub fn max_gain(&self) -> f64 {
        self.noise_deviations
            .iter()
            .map(|d| d.gain)
            .chain(self.entry_deviations.iter().map(|d| d.gain))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_verified(&self) -> bool {
        self.user_br_ok && self.boundary_ok && !(self.max_gain() > self.tol)
    }

    /// Largest gain among noise deviations, if any were examined.
    pub fn max_noise_gain(&self) -> Option<f64> {
        self.noise_deviations.iter().map(|d| d.gain).reduce(f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Privacy-weight bound of the general construction.
    pub alpha_bar: f64,
    /// Smallest privacy weight at which the symmetric all-entry candidate
    /// survives every noise deviation (for `K` entrants).
    pub alpha_bar_exact: f64,
    #[serde(with = "crate::serde_inf")]
    pub beta_bar: f64,
    #[serde(with = "crate::serde_inf")]
    pub beta_under: f64,
    /// Sequential-entry thresholds per platform (0 for low-cost platforms).
    #[serde(with = "crate::serde_inf::vec")]
    pub beta_entry: Vec<f64>,
    /// Necessary entry bounds per platform.
    pub entry_lower_bounds: Vec<f64>,
    pub low_cost_count: usize,
    /// Range of buyer valuations with exactly one entrant (two platforms only).
    pub one_entrant_interval: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryThresholds {
    #[serde(with = "crate::serde_inf::vec")]
    pub beta_entry: Vec<f64>,
    pub lower_bounds: Vec<f64>,
    /// Platform indices in entry order (ascending cost).
    pub order: Vec<usize>,
    pub low_cost_count: usize,
}

impl EntryThresholds {
    /// Platforms whose threshold is at most `beta`.
    pub fn entrants_at(&self, beta: f64) -> PlatformSet {
        self.order
            .iter()
            .copied()
            .filter(|&i| beta >= self.beta_entry[i])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub status: Status,
    pub method: Method,
    pub noise: NoiseProfile,
    pub actions: ActionProfiles,
    pub outcome: StageOutcome,
    pub welfare: f64,
    pub certificate: VerificationCertificate,
    pub thresholds: Option<Thresholds>,
    pub note: Option<String>,
}

impl EquilibriumResult {
    pub fn entrants(&self) -> PlatformSet {
        self.actions.entry
    }

    pub fn prices(&self) -> &[f64] {
        &self.outcome.prices
    }
}

// ---------------------------------------------------------------------------
// Candidates

/// Per-entrant signal ratio putting `n` symmetric entrants on the user's indifference boundary.
fn boundary_ratio(params: &MarketParams, n: usize) -> Option<f64> {
    let nf = n as f64;
    if params.h_user.is_identity() {
        let denom = 1.0 + 2.0 * params.alpha - nf;
        return (denom > 0.0).then(|| 1.0 / denom);
    }
    let info = params.h_user.inverse(nf / (2.0 * params.alpha))?;
    let t = info / (nf - (nf - 1.0) * info);
    (t > 0.0 && t.is_finite()).then_some(t)
}

/// Symmetric profile at which the user is exactly indifferent to sharing with every entrant.
pub fn candidate_profile(params: &MarketParams, entrants: PlatformSet) -> Result<NoiseProfile> {
    params.validate()?;
    if !entrants.is_subset(params.all()) {
        return Err(Error::Index {
            index: entrants.upper_bound() - 1,
            reason: format!("entrant set exceeds k = {}", params.k),
        });
    }
    let mut sigma = vec![f64::INFINITY; params.k];
    let n = entrants.len();
    if n == 0 {
        return Ok(NoiseProfile::new(sigma));
    }
    let var_of = |g: f64| -> f64 {
        if params.h_user.is_identity() {
            g * g * (1.0 + 2.0 * params.alpha - n as f64) - 2.0
        } else {
            match boundary_ratio(params, n) {
                Some(t) => g * g / t - 2.0,
                None => f64::NEG_INFINITY,
            }
        }
    };
    let mut worst: Option<(usize, f64)> = None;
    for i in entrants.iter() {
        let v = var_of(params.gamma[i]);
        if v < 0.0 {
            if worst.is_none_or(|(_, w)| v < w) {
                worst = Some((i, v));
            }
        } else {
            sigma[i] = v.sqrt();
        }
    }
    match worst {
        Some((platform, sigma_sq)) => Err(Error::InfeasibleCandidate { platform, sigma_sq }),
        None => Ok(NoiseProfile::new(sigma)),
    }
}

// ---------------------------------------------------------------------------
// Thresholds

/// Smaller root of the two-platform deviation indifference.
pub fn eta(alpha: f64) -> f64 {
    1.0 - 1.0 / (4.0 * alpha) - (16.0 * alpha * alpha - 16.0 * alpha + 1.0).sqrt() / (4.0 * alpha)
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let f_lo = f(lo);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Privacy-weight threshold: the two-platform root for `K = 2`, `(K+1)²/8` otherwise, 0 for `K = 1`.
pub fn alpha_bar(k: usize) -> f64 {
    match k {
        0 | 1 => 0.0,
        2 => {
            let f = |a: f64| eta(a) + 1.0 / (2.0 * a - 1.0) - 1.0 / a;
            bisect(f, 1.5, 3.0, 200)
        }
        _ => ((k + 1) * (k + 1)) as f64 / 8.0,
    }
}

/// Price gain from deviating to the indifference point where the user keeps
/// the deviator and `i − 1` others, minus the candidate price (linear utilities, `β = 1`).
fn symmetric_deviation_gain(alpha: f64, n: usize, i: usize) -> f64 {
    let t = 1.0 / (1.0 + 2.0 * alpha - n as f64);
    let tp = deviation_ratio_bound(alpha, n, i, t);
    let sym = |k: usize, t: f64| {
        if k == 0 {
            0.0
        } else {
            revealed_sym(k, t)
        }
    };
    let dev_price = if i == 1 {
        tp
    } else {
        mixed(i, t, tp) - sym(i - 1, t)
    };
    let base_price = n as f64 / (2.0 * alpha) - sym(n - 1, t);
    dev_price - base_price
}

fn revealed_sym(k: usize, t: f64) -> f64 {
    let kf = k as f64;
    kf * t / (1.0 + (kf - 1.0) * t)
}

fn mixed(k: usize, t: f64, tp: f64) -> f64 {
    let kf = k as f64;
    1.0 - (1.0 - t) * (1.0 - tp) / ((1.0 - t) + (kf - 1.0) * t * (1.0 - tp))
}

/// Smallest privacy weight at which the symmetric candidate with `n` entrants
/// resists every noise deviation of the kind used in the sufficiency argument.
pub fn alpha_bar_exact(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let worst = |a: f64| {
        (1..n)
            .map(|i| symmetric_deviation_gain(a, n, i))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let start = (n as f64 + 1.0) / 2.0 + 1e-9;
    let end = 2.0 * ((n + 1) * (n + 1)) as f64;
    let steps = 4000;
    let h = (end - start) / steps as f64;
    let mut last_bad = None;
    for s in 0..=steps {
        let a = start + h * s as f64;
        if worst(a) > 0.0 {
            last_bad = Some(a);
        }
    }
    match last_bad {
        None => start,
        Some(a) => bisect(worst, a, (a + h).min(end), 200),
    }
}

/// Exact largest deviator ratio at which the user still shares with the
/// deviator and `i − 1` others rather than all `n` (linear utilities).
fn deviation_ratio_bound(alpha: f64, n: usize, i: usize, t: f64) -> f64 {
    if i >= n {
        return t;
    }
    let (nf, jf) = (n as f64, i as f64);
    let disc = 16.0 * alpha * alpha + (nf - jf).powi(2) - 8.0 * alpha * nf;
    if disc < 0.0 {
        return 0.0;
    }
    let r = disc.sqrt();
    let denom = r - (nf + jf - 2.0);
    if denom <= 0.0 {
        return 0.0;
    }
    let tp = (2.0 - 4.0 * alpha + nf - jf + r) / denom;
    tp.clamp(0.0, t)
}

/// Largest deviator signal ratio `t'` at which the user shares with exactly
/// `target` of the `n` symmetric entrants (the deviator included).
pub fn deviation_noise_bound(
    params: &MarketParams,
    entrants: PlatformSet,
    deviator: usize,
    target: usize,
) -> Result<f64> {
    params.validate()?;
    if !entrants.contains(deviator) {
        return Err(Error::Index {
            index: deviator,
            reason: "deviator is not an entrant".into(),
        });
    }
    let n = entrants.len();
    if target == 0 || target > n {
        return Err(Error::InvalidParams(format!(
            "target share count must lie in 1..={n}, got {target}"
        )));
    }
    let t = boundary_ratio(params, n).ok_or_else(|| {
        Error::InvalidParams("no symmetric boundary profile for this entrant count".into())
    })?;
    if params.h_user.is_identity() {
        return Ok(deviation_ratio_bound(params.alpha, n, target, t));
    }
    if target == n {
        return Ok(t);
    }
    let h = &params.h_user;
    let a = params.alpha;
    let u_all = |tp: f64| n as f64 / 2.0 - a * h.eval(mixed(n, t, tp));
    let u_sub = |tp: f64| {
        let info = if target == 1 { tp } else { mixed(target, t, tp) };
        target as f64 / 2.0 - a * h.eval(info)
    };
    let f = |tp: f64| u_all(tp) - u_sub(tp);
    if f(0.0) >= 0.0 {
        return Ok(0.0);
    }
    Ok(bisect(f, 0.0, t, 200))
}

/// Marginal buyer value of the last of `n` symmetric entrants at the boundary profile.
fn symmetric_marginal(params: &MarketParams, n: usize) -> Option<f64> {
    if params.is_linear() {
        let two_a = 2.0 * params.alpha;
        return (two_a > n as f64).then(|| (two_a - n as f64) / (two_a * (two_a - 1.0)));
    }
    let t = boundary_ratio(params, n)?;
    if t > 0.5 {
        return None;
    }
    let h = &params.h_buyer;
    let rest = if n == 1 { 0.0 } else { revealed_sym(n - 1, t) };
    let m = h.eval(revealed_sym(n, t)) - h.eval(rest);
    (m > 0.0).then_some(m)
}

/// Sequential-entry thresholds in cost order.
pub fn entry_threshold_sequence(params: &MarketParams) -> Result<EntryThresholds> {
    params.validate()?;
    let k = params.k;
    if params.is_linear() && 2.0 * params.alpha <= k as f64 {
        return Err(Error::InvalidParams(format!(
            "entry thresholds need 2*alpha > K, got alpha = {} and K = {k}",
            params.alpha
        )));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| params.cost[a].total_cmp(&params.cost[b]).then(a.cmp(&b)));
    let low_cost_count = order.iter().filter(|&&i| params.cost[i] <= 0.5).count();
    let single = symmetric_marginal(params, 1)
        .ok_or_else(|| Error::InvalidParams("no single-entrant boundary profile".into()))?;
    let lower_bounds = (0..k).map(|i| (params.cost[i] - 0.5) / single).collect();
    let mut beta_entry = vec![0.0; k];
    let mut pos = low_cost_count;
    while pos < k {
        // Equal costs enter together at the threshold of the last rank in the group.
        let c = params.cost[order[pos]];
        let mut end = pos;
        while end + 1 < k && params.cost[order[end + 1]] == c {
            end += 1;
        }
        let rank = end + 1;
        let beta = match symmetric_marginal(params, rank) {
            Some(m) => (c - 0.5) / m,
            None => f64::INFINITY,
        };
        for &i in &order[pos..=end] {
            beta_entry[i] = beta;
        }
        pos = end + 1;
    }
    Ok(EntryThresholds {
        beta_entry,
        lower_bounds,
        order,
        low_cost_count,
    })
}

/// All α/β thresholds; requires the zero-noise privacy condition.
pub fn beta_thresholds(params: &MarketParams, settings: &SolverSettings) -> Result<Thresholds> {
    let report = check_privacy_assumption(params, settings)?;
    if !report.holds {
        return Err(Error::AssumptionViolated(format!(
            "at zero noise the user shares with {} (needs alpha > {:.6})",
            report.violating_entry.unwrap_or_default(),
            report.alpha_threshold
        )));
    }
    let k = params.k;
    let high = params.high_cost();
    let beta_bar = high
        .iter()
        .map(|i| {
            let c = params.cost[i] - 0.5;
            (1..=k)
                .map(|n| symmetric_marginal(params, n).map_or(f64::INFINITY, |m| c / m))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let single = symmetric_marginal(params, 1);
    let beta_under = match single {
        Some(m) => high
            .iter()
            .map(|i| (params.cost[i] - 0.5) / m)
            .fold(f64::INFINITY, f64::min),
        None => f64::INFINITY,
    };
    let seq = entry_threshold_sequence(params)?;
    let one_entrant_interval = (k == 2).then(|| {
        let lo = seq.lower_bounds[seq.order[0]].max(0.0);
        let hi = seq.lower_bounds[seq.order[1]].max(0.0);
        (lo, hi)
    });
    Ok(Thresholds {
        alpha_bar: alpha_bar(k),
        alpha_bar_exact: alpha_bar_exact(k),
        beta_bar,
        beta_under,
        beta_entry: seq.beta_entry,
        entry_lower_bounds: seq.lower_bounds,
        low_cost_count: seq.low_cost_count,
        one_entrant_interval,
    })
}

// ---------------------------------------------------------------------------
// Verification

struct Probe {
    sigma: f64,
    sharing: PlatformSet,
    utility: f64,
}

/// Sweeps platform `i`'s signal ratio over its feasible range, returning the
/// right end of every sharing region met. Within a region the platform's
/// utility increases with its signal ratio (its price is a marginal value),
/// so these points carry the best deviation of each region.
fn sweep_platform(
    params: &MarketParams,
    base: &[f64],
    entry: PlatformSet,
    i: usize,
    floor: f64,
    extra: &[f64],
    settings: &SolverSettings,
) -> Vec<Probe> {
    let tol = settings.indifference_tol;
    let g = params.gamma[i];
    let eval_sigma = |s: f64| {
        let mut sigma = base.to_vec();
        sigma[i] = s;
        let (actions, out) = subgame_raw(params, &sigma, entry, tol);
        Probe {
            sigma: s,
            sharing: actions.sharing,
            utility: out.u_platforms[i],
        }
    };
    let mut probes = vec![eval_sigma(f64::INFINITY)];
    if floor.is_infinite() {
        return probes;
    }
    if g == 0.0 {
        probes.push(eval_sigma(floor));
        return probes;
    }
    let sigma_of = |t: f64| sigma_for_ratio(g, t).unwrap_or(0.0).max(floor);
    let t_hi = signal_ratio(g, floor);
    let t_lo = settings.t_min.min(t_hi);
    let m = settings.sweep_points;
    let mut ts: Vec<f64> = (0..m)
        .map(|s| t_lo * (t_hi / t_lo).powf(s as f64 / (m - 1) as f64))
        .collect();
    ts.extend(extra.iter().copied().filter(|&t| t > t_lo && t < t_hi));
    if base[i].is_finite() {
        let cur = signal_ratio(g, base[i]);
        if cur > t_lo && cur < t_hi {
            ts.push(cur);
        }
    }
    ts.push(t_hi);
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let eval_t = |t: f64| {
        let mut p = eval_sigma(sigma_of(t));
        if t == t_hi {
            p.sigma = floor;
        }
        p
    };
    let grid: Vec<Probe> = ts.iter().map(|&t| eval_t(t)).collect();
    for w in 0..grid.len().saturating_sub(1) {
        if grid[w].sharing == grid[w + 1].sharing {
            continue;
        }
        let (mut lo, mut hi) = (ts[w], ts[w + 1]);
        let label = grid[w].sharing;
        for _ in 0..settings.bisection_iters {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if eval_t(mid).sharing == label {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        probes.push(eval_t(lo));
        probes.push(eval_t(hi));
    }
    probes.extend(grid);
    probes
}

/// Ratios at which a symmetric linear profile changes sharing count under a single deviation.
fn symmetric_breakpoints(params: &MarketParams, sigma: &[f64], entry: PlatformSet) -> Vec<f64> {
    if !params.is_linear() || entry.len() < 2 {
        return Vec::new();
    }
    let ts: Vec<f64> = entry
        .iter()
        .map(|i| signal_ratio(params.gamma[i], sigma[i]))
        .collect();
    let t = ts[0];
    if t <= 0.0 || ts.iter().any(|&x| (x - t).abs() > 1e-12 * t) {
        return Vec::new();
    }
    let n = entry.len();
    (1..n)
        .map(|i| deviation_ratio_bound(params.alpha, n, i, t))
        .filter(|&x| x > 0.0)
        .collect()
}

fn is_pinned(params: &MarketParams, sigma: &[f64], floors: &[f64], i: usize) -> bool {
    let f = floors[i];
    params.gamma[i] == 0.0 || f.is_infinite() || sigma[i] <= f * (1.0 + 1e-9) + 1e-12
}

/// Full deviation check with per-platform noise floors. With `fail_fast`
/// the check stops at the first profitable deviation.
pub(crate) fn verify_profile(
    params: &MarketParams,
    sigma: &[f64],
    entry: PlatformSet,
    floors: &[f64],
    settings: &SolverSettings,
    fail_fast: bool,
) -> VerificationCertificate {
    let tol = settings.verify_tol;
    let (actions, current) = subgame_raw(params, sigma, entry, settings.indifference_tol);
    let user_br_ok = actions.sharing == entry;
    let u_user = current.u_user;
    let boundary_ok =
        u_user.abs() <= tol || entry.iter().all(|i| is_pinned(params, sigma, floors, i));
    let mut cert = VerificationCertificate {
        user_br_ok,
        user_sharing: actions.sharing,
        boundary_ok,
        u_user,
        noise_deviations: Vec::new(),
        entry_deviations: Vec::new(),
        tol,
    };
    if fail_fast && !(user_br_ok && boundary_ok) {
        return cert;
    }
    let extra = symmetric_breakpoints(params, sigma, entry);

    let check_platform = |i: usize| -> (Vec<NoiseDeviation>, EntryDeviation) {
        if entry.contains(i) {
            let u0 = current.u_platforms[i];
            let probes = sweep_platform(params, sigma, entry, i, floors[i], &extra, settings);
            let mut best: Vec<Option<(f64, f64)>> = vec![None; entry.len() + 1];
            for p in probes {
                let gain = p.utility - u0;
                let slot = &mut best[p.sharing.len()];
                if slot.is_none_or(|(g, _)| gain > g) {
                    *slot = Some((gain, p.sigma));
                }
            }
            let noise = best
                .into_iter()
                .enumerate()
                .filter_map(|(count, b)| {
                    b.map(|(gain, s)| NoiseDeviation {
                        platform: i,
                        target_share_count: count,
                        gain,
                        sigma: s,
                    })
                })
                .collect();
            let exit = EntryDeviation {
                platform: i,
                kind: EntryMove::Exit,
                gain: -u0,
                sigma: f64::INFINITY,
            };
            (noise, exit)
        } else {
            let probes = sweep_platform(params, sigma, entry.with(i), i, floors[i], &[], settings);
            let best = probes
                .into_iter()
                .max_by(|a, b| a.utility.total_cmp(&b.utility))
                .expect("sweep always probes infinite noise");
            (
                Vec::new(),
                EntryDeviation {
                    platform: i,
                    kind: EntryMove::Enter,
                    gain: best.utility,
                    sigma: best.sigma,
                },
            )
        }
    };

    if fail_fast {
        for i in 0..params.k {
            let (noise, ent) = check_platform(i);
            let bad = ent.gain > tol || noise.iter().any(|d| d.gain > tol);
            cert.noise_deviations.extend(noise);
            cert.entry_deviations.push(ent);
            if bad {
                break;
            }
        }
    } else {
        for (noise, ent) in settings.exec.map_range(params.k, check_platform) {
            cert.noise_deviations.extend(noise);
            cert.entry_deviations.push(ent);
        }
    }
    cert
}

/// Checks a profile against every unilateral deviation.
pub fn verify_equilibrium(
    params: &MarketParams,
    noise: &NoiseProfile,
    entry: PlatformSet,
    settings: &SolverSettings,
) -> Result<VerificationCertificate> {
    params.validate()?;
    noise.validate(params.k)?;
    settings.validate()?;
    if entry.len() + 1 > settings.search_cap.max(1) && entry.len() > settings.search_cap {
        return Err(Error::SearchLimitExceeded {
            k: entry.len(),
            limit: settings.search_cap,
        });
    }
    let floors = vec![0.0; params.k];
    Ok(verify_profile(params, &noise.sigma, entry, &floors, settings, false))
}

// ---------------------------------------------------------------------------
// Solver

pub(crate) fn assemble(
    params: &MarketParams,
    sigma: Vec<f64>,
    entry: PlatformSet,
    certificate: VerificationCertificate,
    status: Status,
    method: Method,
    settings: &SolverSettings,
) -> EquilibriumResult {
    let (actions, outcome) = subgame_raw(params, &sigma, entry, settings.indifference_tol);
    EquilibriumResult {
        status,
        method,
        noise: NoiseProfile::new(sigma),
        actions,
        welfare: welfare(&outcome),
        outcome,
        certificate,
        thresholds: None,
        note: None,
    }
}

/// Single platform: indifference noise when the user would otherwise share at
/// zero noise with positive surplus, zero noise otherwise.
fn single_platform(params: &MarketParams, settings: &SolverSettings) -> EquilibriumResult {
    let all = params.all();
    let sigma = match candidate_profile(params, all) {
        Ok(p) => p.sigma,
        Err(_) => vec![0.0],
    };
    let (_, out) = subgame_raw(params, &sigma, all, settings.indifference_tol);
    let entry = if out.u_platforms[0] >= 0.0 {
        all
    } else {
        PlatformSet::EMPTY
    };
    let floors = vec![0.0];
    let cert = verify_profile(params, &sigma, entry, &floors, settings, false);
    let status = if cert.is_verified() {
        Status::Verified
    } else {
        Status::NoEquilibriumFound
    };
    assemble(params, sigma, entry, cert, status, Method::SinglePlatform, settings)
}

/// Boundary profiles with signal ratios proportional to `weights` over the informative entrants.
fn weighted_boundary(params: &MarketParams, entry: PlatformSet, weights: &[(usize, f64)]) -> Option<Vec<f64>> {
    let mut sigma = vec![f64::INFINITY; params.k];
    for i in entry.iter() {
        sigma[i] = 0.0;
    }
    let lambda_max = weights
        .iter()
        .map(|&(i, w)| params.gamma[i].powi(2) / (2.0 * w))
        .fold(f64::INFINITY, f64::min);
    let set = |sigma: &mut Vec<f64>, lambda: f64| {
        for &(i, w) in weights {
            sigma[i] = sigma_for_ratio(params.gamma[i], lambda * w).unwrap_or(0.0);
        }
    };
    let u_at = |lambda: f64| {
        let mut s = sigma.clone();
        set(&mut s, lambda);
        user_utility_raw(params, &s, entry)
    };
    if u_at(lambda_max) > 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0, lambda_max);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if u_at(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    set(&mut sigma, lo);
    Some(sigma)
}

/// Candidate profiles for one entrant set, most structured first.
fn fallback_profiles(params: &MarketParams, entry: PlatformSet) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    if entry.is_empty() {
        out.push(vec![f64::INFINITY; params.k]);
        return out;
    }
    if let Ok(p) = candidate_profile(params, entry) {
        out.push(p.sigma);
    }
    let mut zero = vec![f64::INFINITY; params.k];
    for i in entry.iter() {
        zero[i] = 0.0;
    }
    out.push(zero);
    let informative: Vec<usize> = entry.iter().filter(|&i| params.gamma[i] > 0.0).collect();
    if informative.len() < 2 {
        return out;
    }
    const LEVELS: [f64; 5] = [0.5, 0.7, 1.0, 1.4, 2.0];
    let m = informative.len();
    let mut weight_sets: Vec<Vec<f64>> = Vec::new();
    // Equal noise on every entrant.
    weight_sets.push(informative.iter().map(|&i| params.gamma[i].powi(2)).collect());
    if LEVELS.len().pow((m - 1) as u32) <= 125 {
        let total = LEVELS.len().pow((m - 1) as u32);
        for code in 0..total {
            let mut w = vec![1.0];
            let mut c = code;
            for _ in 1..m {
                w.push(LEVELS[c % LEVELS.len()]);
                c /= LEVELS.len();
            }
            weight_sets.push(w);
        }
    } else {
        for j in 0..m {
            for &l in &LEVELS {
                let mut w = vec![1.0; m];
                w[j] = l;
                weight_sets.push(w);
            }
        }
    }
    for w in weight_sets {
        let pairs: Vec<(usize, f64)> = informative.iter().copied().zip(w).collect();
        if let Some(s) = weighted_boundary(params, entry, &pairs) {
            out.push(s);
        }
    }
    out
}

/// Entrant sets for the fallback search: `first`, then larger sets and cheaper platforms first.
fn fallback_sets(params: &MarketParams, first: PlatformSet) -> Vec<PlatformSet> {
    let mut sets: Vec<PlatformSet> = params.all().subsets().filter(|&s| s != first).collect();
    let cost_sum = |s: PlatformSet| s.iter().map(|i| params.cost[i]).sum::<f64>();
    sets.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then(cost_sum(*a).total_cmp(&cost_sum(*b)))
            .then(a.bits().cmp(&b.bits()))
    });
    sets.insert(0, first);
    sets
}

/// Computes a subgame-perfect equilibrium.
pub fn solve(params: &MarketParams, settings: &SolverSettings) -> Result<EquilibriumResult> {
    params.validate()?;
    settings.validate()?;
    if params.k > settings.search_cap {
        return Err(Error::SearchLimitExceeded {
            k: params.k,
            limit: settings.search_cap,
        });
    }
    if params.k == 1 {
        let mut result = single_platform(params, settings);
        result.thresholds = beta_thresholds(params, settings).ok();
        return Ok(result);
    }
    let thresholds = beta_thresholds(params, settings);
    let mut note = None;
    let bracket = match entry_threshold_sequence(params) {
        Ok(seq) => seq.entrants_at(params.beta),
        Err(e) => {
            note = Some(format!("entry bracket unavailable: {e}"));
            params.all()
        }
    };
    if let Err(e) = &thresholds {
        note.get_or_insert_with(|| e.to_string());
    }
    let floors = vec![0.0; params.k];
    let candidate = candidate_profile(params, bracket).ok();
    let mut first_attempt = None;
    if let Some(c) = &candidate {
        let cert = verify_profile(params, &c.sigma, bracket, &floors, settings, false);
        if cert.is_verified() {
            let mut r = assemble(
                params,
                c.sigma.clone(),
                bracket,
                cert,
                Status::Verified,
                Method::EntryBracket,
                settings,
            );
            r.thresholds = thresholds.ok();
            r.note = note;
            return Ok(r);
        }
        first_attempt = Some((c.sigma.clone(), cert));
    }

    if params.k <= settings.fallback_cap {
        let sets = fallback_sets(params, bracket);
        let found = settings.exec.map(&sets, |&set| {
            fallback_profiles(params, set)
                .into_iter()
                .find(|s| verify_profile(params, s, set, &floors, settings, true).is_verified())
        });
        if let Some((set, sigma)) = sets
            .iter()
            .zip(found)
            .find_map(|(&set, s)| s.map(|s| (set, s)))
        {
            let cert = verify_profile(params, &sigma, set, &floors, settings, false);
            let status = if cert.is_verified() {
                Status::Verified
            } else {
                Status::NoEquilibriumFound
            };
            let mut r = assemble(params, sigma, set, cert, status, Method::FallbackSearch, settings);
            r.thresholds = thresholds.ok();
            r.note = note;
            return Ok(r);
        }
    }

    let status = if params.k <= settings.fallback_cap || candidate.is_none() {
        Status::NoEquilibriumFound
    } else {
        Status::CandidateOnly
    };
    let (sigma, cert) = match first_attempt {
        Some(x) => x,
        None => {
            let sigma = vec![f64::INFINITY; params.k];
            let cert = verify_profile(params, &sigma, PlatformSet::EMPTY, &floors, settings, false);
            (sigma, cert)
        }
    };
    let entry = if candidate.is_some() {
        bracket
    } else {
        PlatformSet::EMPTY
    };
    let mut r = assemble(params, sigma, entry, cert, status, Method::EntryBracket, settings);
    r.thresholds = thresholds.ok();
    r.note = note;
    Ok(r)
}

/// The user's best response ignoring tolerance settings (exposed for tests).
pub fn sharing_at(params: &MarketParams, noise: &NoiseProfile, entry: PlatformSet) -> PlatformSet {
    best_response_raw(params, &noise.sigma, entry, SolverSettings::default().indifference_tol)
}

/// Total revealed information of a profile restricted to `active`.
pub fn info_of(params: &MarketParams, noise: &NoiseProfile, active: PlatformSet) -> f64 {
    info_raw(&params.gamma, &noise.sigma, active)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(alpha: f64, beta: f64, cost: [f64; 2]) -> MarketParams {
        MarketParams::new(alpha, beta, vec![1.0, 1.0], cost.to_vec()).unwrap()
    }

    #[test]
    fn candidate_examples() {
        let p = two(2.0, 3.0, [0.6, 1.0]);
        let c = candidate_profile(&p, p.all()).unwrap();
        assert_eq!(c.variances(), vec![1.0, 1.0]);

        let p = MarketParams::new(4.0, 1.0, vec![1.0; 3], vec![0.5; 3]).unwrap();
        let c = candidate_profile(&p, p.all()).unwrap();
        assert_eq!(c.sigma, vec![2.0, 2.0, 2.0]);
        assert!((info_of(&p, &c, p.all()) - 0.375).abs() < 1e-15);

        let p = MarketParams::new(2.0, 1.0, vec![1.0], vec![0.6]).unwrap();
        let c = candidate_profile(&p, p.all()).unwrap();
        assert!((c.sigma[0] - 2f64.sqrt()).abs() < 1e-15);

        let p = two(1.0, 1.0, [0.6, 1.0]);
        assert!(matches!(
            candidate_profile(&p, p.all()),
            Err(Error::InfeasibleCandidate { .. })
        ));
    }

    #[test]
    fn alpha_bar_values() {
        assert!((alpha_bar(2) - 1.884646).abs() < 1e-6);
        assert_eq!(alpha_bar(3), 2.0);
        assert_eq!(alpha_bar(7), 8.0);
        assert_eq!(alpha_bar(1), 0.0);
        // The two-platform root agrees with the exact symmetric threshold.
        assert!((alpha_bar_exact(2) - alpha_bar(2)).abs() < 1e-6);
    }

    #[test]
    fn exact_alpha_thresholds_exceed_general_bound_for_small_k() {
        for (n, expected) in [(3, 3.198), (4, 4.507), (5, 5.817)] {
            let a = alpha_bar_exact(n);
            assert!((a - expected).abs() < 2e-3, "n = {n}: {a}");
            assert!(a > alpha_bar(n));
        }
        assert!(alpha_bar_exact(8) < alpha_bar(8));
    }

    #[test]
    fn deviation_bound_closed_form() {
        let p = two(2.0, 3.0, [0.6, 1.0]);
        let t1 = deviation_noise_bound(&p, p.all(), 0, 1).unwrap();
        assert!((t1 - eta(2.0)).abs() < 1e-12);
        assert!((t1 - 0.156930).abs() < 1e-6);
        assert!((deviation_noise_bound(&p, p.all(), 0, 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(deviation_noise_bound(&p, PlatformSet::single(1), 0, 1).is_err());
    }

    #[test]
    fn deviation_bound_is_an_indifference_point() {
        // n = 4, alpha = 5: where the bound is positive the user is indifferent
        // between all four and the deviator plus i - 1 others; where it clamps
        // to zero that subset is never preferred.
        let p = MarketParams::new(5.0, 1.0, vec![1.0; 4], vec![0.5; 4]).unwrap();
        let t = 1.0 / (1.0 + 10.0 - 4.0);
        let gap = |i: usize, tp: f64| {
            let sub = if i == 1 { tp } else { mixed(i, t, tp) };
            (i as f64 / 2.0 - 5.0 * sub) - (2.0 - 5.0 * mixed(4, t, tp))
        };
        for i in 1..4 {
            let tp = deviation_noise_bound(&p, p.all(), 0, i).unwrap();
            if tp > 0.0 {
                assert!(gap(i, tp).abs() < 1e-12, "i = {i}");
            } else {
                assert!((0..=100).all(|s| gap(i, t * s as f64 / 100.0) < 0.0), "i = {i}");
            }
        }
        assert!((deviation_noise_bound(&p, p.all(), 0, 1).unwrap() - 0.061013308).abs() < 1e-8);
        let seq: Vec<f64> = (1..4)
            .map(|i| deviation_noise_bound(&p, p.all(), 0, i).unwrap())
            .collect();
        assert!(seq.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn nonlinear_deviation_bound_matches_linear_when_identity() {
        let p = MarketParams::new(5.0, 1.0, vec![1.0; 4], vec![0.5; 4]).unwrap();
        let table = crate::UtilityShape::Table {
            values: (0..=1000).map(|j| j as f64 / 1000.0).collect(),
        };
        let q = p.clone().with_shapes(table, crate::UtilityShape::Identity);
        for i in 1..4 {
            let a = deviation_noise_bound(&p, p.all(), 0, i).unwrap();
            let b = deviation_noise_bound(&q, q.all(), 0, i).unwrap();
            assert!((a - b).abs() < 1e-9, "i = {i}: {a} vs {b}");
        }
    }

    #[test]
    fn threshold_examples() {
        let s = SolverSettings::default();
        let t = beta_thresholds(&two(2.0, 1.0, [0.6, 1.0]), &s).unwrap();
        assert!((t.beta_bar - 3.0).abs() < 1e-12);
        let alpha: f64 = 2.0;
        let closed = (2.0 + 1.0 / (alpha - 1.0)) * alpha * (1.0 - 0.5);
        assert!((t.beta_bar - closed).abs() < 1e-12);

        let t = beta_thresholds(&two(2.0, 1.0, [0.6, 0.9]), &s).unwrap();
        let (lo, hi) = t.one_entrant_interval.unwrap();
        assert!((lo - 0.4).abs() < 1e-12 && (hi - 1.6).abs() < 1e-12);
        assert!((t.beta_under - 0.4).abs() < 1e-12);

        let t = beta_thresholds(&two(2.0, 1.0, [0.1, 0.4]), &s).unwrap();
        assert_eq!(t.beta_under, f64::INFINITY);
        assert_eq!(t.beta_bar, 0.0);

        let bad = MarketParams::new(1.0, 1.0, vec![1.0, 1.0], vec![0.6, 0.9]).unwrap();
        assert!(matches!(beta_thresholds(&bad, &s), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn entry_sequence_example() {
        let p = MarketParams::new(4.0, 1.0, vec![1.0; 3], vec![0.3, 0.75, 1.0]).unwrap();
        let seq = entry_threshold_sequence(&p).unwrap();
        assert_eq!(seq.beta_entry[0], 0.0);
        assert!((seq.beta_entry[1] - 56.0 / 6.0 * 0.25).abs() < 1e-12);
        assert!((seq.beta_entry[2] - 5.6).abs() < 1e-12);
        for i in 1..3 {
            assert!(seq.beta_entry[i] >= seq.lower_bounds[i]);
        }
        assert_eq!(seq.entrants_at(3.0), PlatformSet::from_indices([0, 1]));

        let low = MarketParams::new(4.0, 1.0, vec![1.0; 3], vec![0.1, 0.2, 0.5]).unwrap();
        let seq = entry_threshold_sequence(&low).unwrap();
        assert_eq!(seq.low_cost_count, 3);
        assert!(seq.beta_entry.iter().all(|&b| b == 0.0));

        let tight = MarketParams::new(1.5, 1.0, vec![1.0; 3], vec![0.6; 3]).unwrap();
        assert!(matches!(entry_threshold_sequence(&tight), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn equal_costs_share_threshold() {
        let p = MarketParams::new(4.0, 1.0, vec![1.0; 3], vec![0.3, 0.8, 0.8]).unwrap();
        let seq = entry_threshold_sequence(&p).unwrap();
        assert_eq!(seq.beta_entry[1], seq.beta_entry[2]);
        let expected = 8.0 * 7.0 / (8.0 - 3.0) * 0.3;
        assert!((seq.beta_entry[1] - expected).abs() < 1e-12);
    }
}
