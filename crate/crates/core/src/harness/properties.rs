//! Seeded randomized checks of the structural properties the solver relies on.
//!
//! Trials are split into fixed-size chunks, each with its own ChaCha stream,
//! so results do not depend on how chunks are scheduled.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::info_kernel::{
    info_raw, revealed_info_pair, revealed_info_symmetric, sherman_morrison, signal_ratio,
    sigma_for_ratio, MarketParams,
};
use crate::platforms::PlatformSet;
use crate::shape::UtilityShape;
use crate::stage_game::{
    best_response_raw, prices_raw, subgame_raw, user_utility_raw, utilities_raw, welfare,
    ActionProfiles,
};

/// Largest platform count drawn by the suite (exhaustive subset checks stay cheap).
pub const MAX_SUITE_K: usize = 6;

const TOL: f64 = 1e-9;
const CLOSED_FORM_TOL: f64 = 1e-12;
const CHUNK: usize = 250;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    /// Failing instance with the fewest platforms, earliest first.
    pub counterexample: Option<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub seed: u64,
    pub trials: usize,
    pub checks: Vec<CheckResult>,
    /// The deliberately broken check, which must fail.
    pub self_test: CheckResult,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed) && !self.self_test.passed()
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().map(|c| c.failures).sum()
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed() { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {} ({} trials, {} failures)", c.name, c.trials, c.failures)?;
            if let Some(cx) = &c.counterexample {
                writeln!(f, "  counterexample: {cx}")?;
            }
        }
        let s = &self.self_test;
        let tag = if s.passed() { "FAIL" } else { "PASS" };
        writeln!(
            f,
            "{tag} {} detects the broken inequality ({} of {} trials flagged)",
            s.name, s.failures, s.trials
        )?;
        if let Some(cx) = &s.counterexample {
            writeln!(f, "  counterexample: {cx}")?;
        }
        let verdict = if self.passed() { "all checks passed" } else { "some checks failed" };
        write!(f, "seed {}: {verdict}", self.seed)
    }
}

type Trial = fn(&mut ChaCha8Rng) -> Option<Failure>;

struct Failure {
    k: usize,
    detail: String,
}

fn fail(k: usize, detail: String) -> Option<Failure> {
    Some(Failure { k, detail })
}

const CHECKS: [(&str, Trial); 11] = [
    ("monotonicity_in_set", monotone_in_set),
    ("monotonicity_in_noise", monotone_in_noise),
    ("submodularity_in_actions", submodular_in_actions),
    ("submodularity_in_noise", submodular_in_noise),
    ("shape_composition", shape_composition),
    ("closed_form_agreement", closed_form_agreement),
    ("range_and_subadditivity", range_and_subadditivity),
    ("buyer_rationality", buyer_rationality),
    ("payment_identity", payment_identity),
    ("lattice_closure", lattice_closure),
    ("permutation_invariance", permutation_invariance),
];

/// Runs every check for `trials` random instances each.
pub fn property_suite(seed: u64, trials: usize, exec: Exec) -> PropertyReport {
    let checks = CHECKS
        .iter()
        .enumerate()
        .map(|(id, (name, trial))| run_check(name, id as u64, *trial, seed, trials, exec))
        .collect();
    PropertyReport {
        seed,
        trials,
        checks,
        self_test: sign_flip_self_test(seed, trials, exec),
    }
}

/// Submodularity in actions with the inequality reversed; a sound suite flags it.
pub fn sign_flip_self_test(seed: u64, trials: usize, exec: Exec) -> CheckResult {
    run_check(
        "flipped_submodularity_in_actions",
        CHECKS.len() as u64,
        flipped_submodularity,
        seed,
        trials,
        exec,
    )
}

fn run_check(name: &str, id: u64, trial: Trial, seed: u64, trials: usize, exec: Exec) -> CheckResult {
    let chunks = trials.div_ceil(CHUNK);
    let per_chunk = exec.map_range(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((id << 32) | c as u64);
        let n = CHUNK.min(trials - c * CHUNK);
        let mut failures = 0;
        let mut best: Option<Failure> = None;
        for _ in 0..n {
            if let Some(f) = trial(&mut rng) {
                failures += 1;
                if best.as_ref().is_none_or(|b| f.k < b.k) {
                    best = Some(f);
                }
            }
        }
        (failures, best)
    });
    let mut failures = 0;
    let mut best: Option<Failure> = None;
    for (n, f) in per_chunk {
        failures += n;
        if let Some(f) = f {
            if best.as_ref().is_none_or(|b| f.k < b.k) {
                best = Some(f);
            }
        }
    }
    CheckResult {
        name: name.to_string(),
        trials,
        failures,
        counterexample: best.map(|f| f.detail),
    }
}

// ---------------------------------------------------------------------------
// Random instances

fn draw_k(rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(1..=MAX_SUITE_K)
}

fn draw_gamma(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..10) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.gen::<f64>(),
    }
}

fn draw_sigma(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..10) {
        0 => f64::INFINITY,
        1 => 0.0,
        _ => 10f64.powf(rng.gen_range(-2.0..2.0)),
    }
}

fn draw_vecs(rng: &mut ChaCha8Rng, k: usize) -> (Vec<f64>, Vec<f64>) {
    let gamma = (0..k).map(|_| draw_gamma(rng)).collect();
    let sigma = (0..k).map(|_| draw_sigma(rng)).collect();
    (gamma, sigma)
}

fn draw_set(rng: &mut ChaCha8Rng, universe: PlatformSet) -> PlatformSet {
    universe.iter().filter(|_| rng.gen_bool(0.5)).collect()
}

fn draw_shape(rng: &mut ChaCha8Rng) -> UtilityShape {
    match rng.gen_range(0..3) {
        0 => UtilityShape::Identity,
        1 => UtilityShape::Log1pNormalized,
        _ => {
            let segs = rng.gen_range(2..=6);
            let mut slopes: Vec<f64> = (0..segs).map(|_| rng.gen_range(0.05..1.0)).collect();
            slopes.sort_by(|a, b| b.total_cmp(a));
            let total: f64 = slopes.iter().sum();
            let mut values = vec![0.0];
            let mut acc = 0.0;
            for s in &slopes {
                acc += s / total;
                values.push(acc.min(1.0));
            }
            let table = UtilityShape::Table { values };
            if table.validate().is_ok() {
                table
            } else {
                UtilityShape::Log1pNormalized
            }
        }
    }
}

fn draw_market(rng: &mut ChaCha8Rng, k: usize) -> (MarketParams, Vec<f64>) {
    let (gamma, sigma) = draw_vecs(rng, k);
    let cost = (0..k).map(|_| rng.gen_range(0.0..1.5)).collect();
    let params = MarketParams {
        k,
        alpha: rng.gen_range(0.2..8.0),
        beta: rng.gen_range(0.0..20.0),
        gamma,
        cost,
        h_user: draw_shape(rng),
        h_buyer: draw_shape(rng),
    };
    (params, sigma)
}

// ---------------------------------------------------------------------------
// Information kernel

fn monotone_in_set(rng: &mut ChaCha8Rng) -> Option<Failure> {
    let k = draw_k(rng);
    let (gamma, sigma) = draw_vecs(rng, k);
    let t = draw_set(rng, PlatformSet::full(k));
    let s = draw_set(rng, t);
    let (is, it) = (info_raw(&gamma, &sigma, s), info_raw(&gamma, &sigma, t));
    (is > it + TOL).then(|| Failure {
        k,
        detail: format!("gamma={gamma:?} sigma={sigma:?} S={s} T={t}: I(S)={is} > I(T)={it}"),
    })
}

fn monotone_in_noise(rng: &mut ChaCha8Rng) -> Option<Failure> {
    let k = draw_k(rng);
    let (gamma, sigma) = draw_vecs(rng, k);
    let s = draw_set(rng, PlatformSet::full(k));
    let i = rng.gen_range(0..k);
    let mut louder = sigma.clone();
    louder[i] = if rng.gen_bool(0.2) {
        f64::INFINITY
    } else {
        sigma[i] * rng.gen_range(1.0..10.0) + rng.gen_range(0.0..1.0)
    };
    let (before, after) = (info_raw(&gamma, &sigma, s), info_raw(&gamma, &louder, s));
    if after > before + TOL {
        return fail(
            k,
            format!("gamma={gamma:?} sigma={sigma:?} S={s}: raising sigma[{i}] to {} increases I from {before} to {after}", louder[i]),
        );
    }
    None
}

/// `(S, T, i)` with `S ⊆ T` and `i ∉ T`.
fn draw_nested(rng: &mut ChaCha8Rng, k: usize) -> (PlatformSet, PlatformSet, usize) {
    let i = rng.gen_range(0..k);
    let t = draw_set(rng, PlatformSet::full(k).without(i));
    let s = draw_set(rng, t);
    (s, t, i)
}

fn gain(gamma: &[f64], sigma: &[f64], h: &UtilityShape, set: PlatformSet, i: usize) -> f64 {
    h.eval(info_raw(gamma, sigma, set.with(i))) - h.eval(info_raw(gamma, sigma, set))
}

fn submodular_in_actions(rng: &mut ChaCha8Rng) -> Option<Failure> {
    let k = draw_k(rng);
    let (gamma, sigma) = draw_vecs(rng, k);
    let (s, t, i) = draw_nested(rng, k);
    let h = UtilityShape::Identity;
    let (ds, dt) = (gain(&gamma, &sigma, &h, s, i), gain(&gamma, &sigma, &h, t, i));
    (ds < dt - TOL).then(|| Failure {
        k,
        detail: format!("gamma={gamma:?} sigma={sigma:?} S={s} T={t} i={i}: gain {ds} < {dt}"),
    })
}

fn flipped_submodularity(rng: &mut ChaCha8Rng) -> Option<Failure> {
    let k = draw_k(rng);
    let (gamma, sigma) = draw_vecs(rng, k);
    let (s, t, i) = draw_nested(rng, k);
    let h = UtilityShape::Identity;
    let (ds, dt) = (gain(&gamma, &sigma, &h, s, i), gain(&gamma, &sigma, &h, t, i));
    (ds > dt + TOL).then(|| Failure {
        k,
        detail: format!("gamma={gamma:?} sigma={sigma:?} S={s} T={t} i={i}: gain {ds} > {dt}"),
    })
}

fn submodular_in_noise(rng: &mut ChaCha8Rng) -> Option<Failure> {
    let k = draw_k(rng);
    let (gamma, sigma) = draw_vecs(rng, k);
    let i = rng.gen_range(0..k);
    let s = draw_set(rng, PlatformSet::full(k).without(i));
    let h = UtilityShape::Identity;
    let base = gain(&gamma, &sigma, &h, s, i);
    let mut own = sigma.clone();
    own[i] = sigma[i] * rng.gen_range(1.0..5.0) + rng.gen_range(0.0..1.0);
    let after = gain(&gamma, &own, &h, s, i);
    if after > base + TOL {
        return fail(
            k,
            format!("gamma={gamma:?} sigma={sigma:?} S={s} i={i}: raising own sigma to {} raises the gain from {base} to {after}", own[i]),
        );
    }
    let members: Vec<usize> = s.iter().collect();
    if members.is_empty() {
        return None;
    }
    let j = members[rng.gen_range(0..members.len())];
    let mut other = sigma.clone();
    other[j] = sigma[j] * rng.gen_range(1.0..5.0) + rng.gen_range(0.0..1.0);
    let after = gain(&gamma, &other, &h, s, i);
    if after < base - TOL {
        return fail(
            k,
            format!("gamma={gamma:?} sigma={sigma:?} S={s} i={i}: raising sigma[{j}] to {} lowers the gain from {base} to {after}", other[j]),
        );
    }
    None
}

fn shape_composition(rng: &mut ChaCha8Rng) -> Option<Failure> {
    let k = draw_k(rng);
    let (gamma, sigma) = draw_vecs(rng, k);
    let (s, t, i) = draw_nested(rng, k);
    let h = draw_shape(rng);
    let (ds, dt) = (gain(&gamma, &sigma, &h, s, i), gain(&gamma, &sigma, &h, t, i));
    (ds < dt - TOL).then(|| Failure {
        k,
        detail: format!("shape={h:?} gamma={gamma:?} sigma={sigma:?} S={s} T={t} i={i}: gain {ds} < {dt}"),
    })
}

fn closed_form_agreement(rng: &mut ChaCha8Rng) -> Option<Failure> {
    let k = draw_k(rng);
    let (gamma, sigma) = draw_vecs(rng, k);
    let all = PlatformSet::full(k);
    let general = info_raw(&gamma, &sigma, all);
    let idx: Vec<usize> = (0..k).collect();
    let sm = sherman_morrison(&gamma, &sigma, &idx);
    if (general - sm).abs() > CLOSED_FORM_TOL {
        return fail(k, format!("gamma={gamma:?} sigma={sigma:?}: general {general} vs rank-one {sm}"));
    }
    if k == 2 {
        let pair = revealed_info_pair(gamma[0], gamma[1], sigma[0], sigma[1]).ok()?;
        if (general - pair).abs() > CLOSED_FORM_TOL {
            return fail(k, format!("gamma={gamma:?} sigma={sigma:?}: general {general} vs pair {pair}"));
        }
    }
    // Symmetric profile with one odd platform.
    let g = rng.gen_range(0.05..=1.0);
    let (s, s_odd) = (draw_sigma(rng), draw_sigma(rng));
    let gamma = vec![g; k];
    let mut sigma = vec![s; k];
    sigma[k - 1] = s_odd;
    let general = info_raw(&gamma, &sigma, all);
    let (t, t_odd) = (signal_ratio(g, s), signal_ratio(g, s_odd));
    let sym = revealed_info_symmetric(k, t, Some(t_odd)).ok()?;
    let uniform = revealed_info_symmetric(k, t, None).ok()?;
    let uniform_general = info_raw(&gamma, &vec![s; k], all);
    if (general - sym).abs() > CLOSED_FORM_TOL || (uniform - uniform_general).abs() > CLOSED_FORM_TOL {
        return fail(
            k,
            format!("gamma={g} sigma={s} odd sigma={s_odd} k={k}: general {general}/{uniform_general} vs closed form {sym}/{uniform}"),
        );
    }
    None
}

fn range_and_subadditivity(rng: &mut ChaCha8Rng) -> Option<Failure> {
    let k = draw_k(rng);
    let (gamma, sigma) = draw_vecs(rng, k);
    let all = PlatformSet::full(k);
    let (a, b) = (draw_set(rng, all), draw_set(rng, all));
    let (ia, ib, iab) = (
        info_raw(&gamma, &sigma, a),
        info_raw(&gamma, &sigma, b),
        info_raw(&gamma, &sigma, a.union(b)),
    );
    if [ia, ib, iab].iter().any(|v| !(0.0..=1.0).contains(v)) {
        return fail(k, format!("gamma={gamma:?} sigma={sigma:?}: info outside [0, 1]: {ia}, {ib}, {iab}"));
    }
    if iab > ia + ib + TOL {
        return fail(
            k,
            format!("gamma={gamma:?} sigma={sigma:?} A={a} B={b}: I(A∪B)={iab} > I(A)+I(B)={}", ia + ib),
        );
    }
    let singles: f64 = a.iter().map(|i| signal_ratio(gamma[i], sigma[i])).sum();
    if ia > singles + TOL {
        return fail(k, format!("gamma={gamma:?} sigma={sigma:?} A={a}: I(A)={ia} exceeds the sum of singletons {singles}"));
    }
    None
}

// ---------------------------------------------------------------------------
// Stage game

fn buyer_rationality(rng: &mut ChaCha8Rng) -> Option<Failure> {
    let k = draw_k(rng);
    let (params, sigma) = draw_market(rng, k);
    let active = draw_set(rng, params.all());
    let prices = prices_raw(&params, &sigma, active);
    let h = &params.h_buyer;
    let value = |b: PlatformSet| {
        params.beta * h.eval(info_raw(&params.gamma, &sigma, b)) - b.iter().map(|i| prices[i]).sum::<f64>()
    };
    let accept_all = value(active);
    for b in active.subsets() {
        let v = value(b);
        if v > accept_all + TOL {
            return fail(
                k,
                format!("{params:?} sigma={sigma:?} offers={active}: buying {b} yields {v} > {accept_all}"),
            );
        }
    }
    // Each price extracts the full marginal value: dropping any single offer leaves the buyer indifferent.
    for i in active.iter() {
        let v = value(active.without(i));
        if (v - accept_all).abs() > TOL {
            return fail(
                k,
                format!("{params:?} sigma={sigma:?} offers={active}: price of {i} leaves slack {}", accept_all - v),
            );
        }
    }
    None
}

fn payment_identity(rng: &mut ChaCha8Rng) -> Option<Failure> {
    let k = draw_k(rng);
    let (params, sigma) = draw_market(rng, k);
    let all = params.all();
    let entry = draw_set(rng, all);
    let sharing = draw_set(rng, all);
    let actions = ActionProfiles::on_path(entry, sharing);
    let active = actions.buyer;
    let prices = prices_raw(&params, &sigma, active);
    let out = utilities_raw(&params, &sigma, actions, &prices);
    let info = info_raw(&params.gamma, &sigma, active);
    let shared = entry.intersection(sharing).len() as f64;
    let expected = shared - entry.iter().map(|i| params.cost[i]).sum::<f64>()
        - params.alpha * params.h_user.eval(info)
        + params.beta * params.h_buyer.eval(info);
    let w = welfare(&out);
    ((w - expected).abs() > TOL).then(|| Failure {
        k,
        detail: format!("{params:?} sigma={sigma:?} entry={entry} sharing={sharing}: welfare {w} vs {expected}"),
    })
}

/// Noise that puts a random entry set on the user's indifference boundary,
/// producing genuine ties, or unstructured noise.
fn draw_user_instance(rng: &mut ChaCha8Rng) -> (MarketParams, Vec<f64>, PlatformSet) {
    let k = draw_k(rng);
    let (mut params, mut sigma) = draw_market(rng, k);
    params.h_user = UtilityShape::Identity;
    let entry = draw_set(rng, params.all());
    if rng.gen_bool(0.5) && !entry.is_empty() {
        let n = entry.len() as f64;
        params.alpha = n / 2.0 + rng.gen_range(0.05..4.0);
        let g = rng.gen_range(0.3..=1.0);
        let t = 1.0 / (1.0 + 2.0 * params.alpha - n);
        let s = sigma_for_ratio(g, t).unwrap_or(0.0);
        for i in entry.iter() {
            params.gamma[i] = g;
            sigma[i] = s;
        }
    }
    (params, sigma, entry)
}

fn lattice_closure(rng: &mut ChaCha8Rng) -> Option<Failure> {
    let (params, sigma, entry) = draw_user_instance(rng);
    let k = params.k;
    let values: Vec<(PlatformSet, f64)> = entry
        .subsets()
        .map(|s| (s, user_utility_raw(&params, &sigma, s)))
        .collect();
    let best = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let argmax: Vec<PlatformSet> = values.iter().filter(|v| v.1 >= best - TOL).map(|v| v.0).collect();
    let slack = 2.0 * TOL + CLOSED_FORM_TOL;
    for (x, &a) in argmax.iter().enumerate() {
        for &b in &argmax[x + 1..] {
            for m in [a.union(b), a.intersection(b)] {
                let u = user_utility_raw(&params, &sigma, m);
                if u < best - slack {
                    return fail(
                        k,
                        format!("{params:?} sigma={sigma:?} entry={entry}: {a} and {b} are optimal but {m} gives {u} < {best}"),
                    );
                }
            }
        }
    }
    let br = best_response_raw(&params, &sigma, entry, TOL);
    if argmax.iter().any(|a| !a.is_subset(br)) {
        return fail(
            k,
            format!("{params:?} sigma={sigma:?} entry={entry}: best response {br} is not the top of {argmax:?}"),
        );
    }
    None
}

fn permutation_invariance(rng: &mut ChaCha8Rng) -> Option<Failure> {
    let k = draw_k(rng);
    let (mut params, sigma) = draw_market(rng, k);
    params.h_user = UtilityShape::Identity;
    let entry = draw_set(rng, params.all());
    let mut perm: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    // Platform i of the original market becomes platform perm[i].
    let mut q = params.clone();
    let mut q_sigma = sigma.clone();
    for i in 0..k {
        q.gamma[perm[i]] = params.gamma[i];
        q.cost[perm[i]] = params.cost[i];
        q_sigma[perm[i]] = sigma[i];
    }
    let q_entry: PlatformSet = entry.iter().map(|i| perm[i]).collect();
    let (a, _) = subgame_raw(&params, &sigma, entry, TOL);
    let (b, _) = subgame_raw(&q, &q_sigma, q_entry, TOL);
    let mapped: PlatformSet = a.sharing.iter().map(|i| perm[i]).collect();
    (mapped != b.sharing).then(|| Failure {
        k,
        detail: format!("{params:?} sigma={sigma:?} entry={entry} perm={perm:?}: labels {} and {}", a.sharing, b.sharing),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_is_deterministic() {
        let a = property_suite(7, 600, Exec::Sequential);
        assert!(a.passed(), "{a}");
        let b = property_suite(7, 600, Exec::Parallel);
        assert_eq!(a, b);
    }

    #[test]
    fn flipped_check_reports_a_counterexample() {
        let r = sign_flip_self_test(3, 300, Exec::Sequential);
        assert!(r.failures > 0);
        assert!(r.counterexample.is_some());
    }
}
