//! One PASS/FAIL line per acceptance criterion.

use std::process::ExitCode;
use std::time::Instant;

use datamarket::equilibrium::{alpha_bar, solve, verify_equilibrium, Status};
use datamarket::harness::{beta_sweep, property_suite, region_grid, Axis, RegionGridSpec};
use datamarket::info_kernel::revealed_info;
use datamarket::regulation::{
    compare_ban_vs_uniform, default_sigma_bar_grid, mandate_entry_threshold, optimal_nonuniform,
    solve_with_policy, RegulationPolicy,
};
use datamarket::stage_game::{equilibrium_prices, stage_utilities, welfare, ActionProfiles};
use datamarket::{Exec, MarketParams, NoiseProfile, PlatformSet, SolverSettings, UtilityShape};

const EXACT_TOL: f64 = 1e-9;
const ALPHA_BAR_TOL: f64 = 1e-3;
const PROPERTY_SEED: u64 = 42;
const PROPERTY_TRIALS: usize = 10_000;
const REGULATION_GAIN_TOL: f64 = 1e-3;
const NONLINEAR_USER_TOL: f64 = 1e-7;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn settings() -> SolverSettings {
    SolverSettings::default()
}

fn criterion_1() -> Outcome {
    let a2 = alpha_bar(2);
    ensure((a2 - 1.884).abs() <= ALPHA_BAR_TOL, || format!("alpha_bar(2) = {a2}"))?;
    for k in 3..=8usize {
        let expect = ((k + 1) * (k + 1)) as f64 / 8.0;
        let got = alpha_bar(k);
        ensure(got == expect, || format!("alpha_bar({k}) = {got}, expected {expect}"))?;
    }
    Ok(format!("alpha_bar(2) = {a2:.6}; (K+1)^2/8 exact for K = 3..8"))
}

fn criterion_2() -> Outcome {
    let p = MarketParams::new(2.0, 3.0, vec![1.0, 1.0], vec![0.6, 1.0]).map_err(|e| e.to_string())?;
    let r = solve(&p, &settings()).map_err(|e| e.to_string())?;
    ensure(r.status == Status::Verified, || format!("status {:?}", r.status))?;
    let var = r.noise.variances();
    ensure(var.iter().all(|v| (v - 1.0).abs() <= EXACT_TOL), || format!("sigma^2 = {var:?}"))?;
    let info = r.outcome.info_to_buyer;
    ensure((info - 0.5).abs() <= EXACT_TOL, || format!("revealed info {info}"))?;
    ensure(r.outcome.u_user.abs() <= EXACT_TOL, || format!("u_user {}", r.outcome.u_user))?;
    ensure(r.outcome.u_buyer > 0.0, || format!("u_buyer {}", r.outcome.u_buyer))?;

    let low = p.clone().with_alpha(1.6);
    let cert = verify_equilibrium(&low, &r.noise, low.all(), &settings()).map_err(|e| e.to_string())?;
    let gain = cert.max_gain();
    ensure(!cert.is_verified() && gain > 0.0, || format!("alpha = 1.6: verified = {}, gain {gain}", cert.is_verified()))?;
    Ok(format!(
        "sigma^2 = (1, 1), I = {info:.12}, u_buyer = {:.6}; at alpha = 1.6 best deviation gains {gain:.6}",
        r.outcome.u_buyer
    ))
}

fn criterion_3() -> Outcome {
    let p = MarketParams::new(0.8, 1.0, vec![1.0], vec![0.4]).map_err(|e| e.to_string())?;
    let r = solve(&p, &settings()).map_err(|e| e.to_string())?;
    ensure(r.status == Status::Verified && r.noise.sigma[0] == 0.0, || format!("{:?} sigma {:?}", r.status, r.noise.sigma))?;
    ensure((r.outcome.u_user - 0.1).abs() <= EXACT_TOL, || format!("u_user {}", r.outcome.u_user))?;
    ensure(r.outcome.u_buyer.abs() <= EXACT_TOL, || format!("u_buyer {}", r.outcome.u_buyer))?;

    let p = MarketParams::new(2.0, 1.0, vec![1.0], vec![0.6]).map_err(|e| e.to_string())?;
    let r = solve(&p, &settings()).map_err(|e| e.to_string())?;
    let s = r.noise.sigma[0];
    ensure(r.status == Status::Verified && (s - 2f64.sqrt()).abs() <= EXACT_TOL, || format!("{:?} sigma {s}", r.status))?;
    ensure(
        r.outcome.u_user.abs() <= EXACT_TOL && r.outcome.u_buyer.abs() <= EXACT_TOL,
        || format!("u_user {} u_buyer {}", r.outcome.u_user, r.outcome.u_buyer),
    )?;
    Ok("alpha = 0.8: sigma = 0, u_user = 0.1; alpha = 2: sigma = sqrt 2, zero surplus".into())
}

fn criterion_4() -> Outcome {
    let report = property_suite(PROPERTY_SEED, PROPERTY_TRIALS, Exec::Parallel);
    ensure(report.passed(), || report.to_string())?;
    Ok(format!(
        "{} checks x {PROPERTY_TRIALS} trials, zero failures; sign-flipped check flagged {} times",
        report.checks.len(),
        report.self_test.failures
    ))
}

fn entry_market() -> MarketParams {
    MarketParams::new(4.0, 0.0, vec![1.0; 3], vec![0.3, 0.75, 1.0]).unwrap()
}

fn criterion_5() -> Outcome {
    let p = entry_market();
    let axis = Axis::new(0.0, 8.0, 401).map_err(|e| e.to_string())?;
    let sweep = beta_sweep(&p, None, &axis, &settings()).map_err(|e| e.to_string())?;
    let step = axis.step();
    let transitions = sweep.verified_transitions();
    let expected = [(2usize, 7.0 / 3.0), (3usize, 5.6)];
    ensure(transitions.len() == expected.len(), || format!("verified transitions {transitions:?}"))?;
    for ((n, beta), (en, eb)) in transitions.iter().zip(expected) {
        ensure(*n == en && (beta - eb).abs() <= step, || format!("transition to {n} at {beta}, expected {en} at {eb}"))?;
    }
    for row in sweep.rows.iter().filter(|r| r.status == Status::Verified) {
        for i in row.entrants.iter().filter(|&i| p.cost[i] > 0.5) {
            let bound = 2.0 * p.alpha * (p.cost[i] - 0.5);
            ensure(row.beta >= bound, || format!("platform {i} enters at beta {} below {bound}", row.beta))?;
        }
    }
    let verified = sweep.rows.iter().filter(|r| r.status == Status::Verified).count();
    Ok(format!(
        "verified transitions {transitions:?} (step {step}); {verified} of {} points verified",
        sweep.rows.len()
    ))
}

fn criterion_6() -> Outcome {
    let mut cases: Vec<MarketParams> = (0..=40)
        .map(|j| entry_market().with_beta(5.6 + 0.1 * j as f64))
        .collect();
    cases.push(MarketParams::new(2.0, 3.0, vec![1.0, 1.0], vec![0.6, 1.0]).unwrap());
    cases.push(MarketParams::new(3.0, 12.0, vec![1.0, 0.9], vec![0.4, 0.9]).unwrap());
    cases.push(MarketParams::new(5.0, 40.0, vec![1.0; 4], vec![0.2, 0.6, 0.7, 0.9]).unwrap());
    let mut checked = 0;
    for p in &cases {
        let r = solve(p, &settings()).map_err(|e| e.to_string())?;
        if r.status != Status::Verified || r.entrants() != p.all() {
            continue;
        }
        let k = p.k as f64;
        let expect = k * (0.5 + p.beta / (2.0 * p.alpha)) - p.cost.iter().sum::<f64>();
        let got = welfare(&r.outcome);
        ensure((got - expect).abs() <= EXACT_TOL, || format!("{p:?}: welfare {got} vs {expect}"))?;
        checked += 1;
    }
    ensure(checked >= 40, || format!("only {checked} verified all-enter equilibria"))?;
    Ok(format!("{checked} verified all-enter equilibria match the closed form"))
}

fn grid_labels(p: &MarketParams, n: usize) -> Result<Vec<(f64, f64, PlatformSet)>, String> {
    let axis = Axis::new(0.0, 10.0, n).map_err(|e| e.to_string())?;
    let rows = region_grid(p, &RegionGridSpec::new(axis, axis), &settings()).map_err(|e| e.to_string())?;
    Ok(rows.into_iter().map(|r| (r.sigma1_sq, r.sigma2_sq, r.label)).collect())
}

fn criterion_7() -> Outcome {
    let p = MarketParams::new(2.5, 1.0, vec![0.8, 0.7], vec![0.6, 0.6]).map_err(|e| e.to_string())?;
    let coarse = grid_labels(&p, 41)?;
    let fine = grid_labels(&p, 81)?;
    let label = |rows: &[(f64, f64, PlatformSet)], s1: f64, s2: f64| {
        rows.iter().find(|r| r.0 == s1 && r.1 == s2).map(|r| r.2)
    };
    ensure(label(&coarse, 0.0, 0.0) == Some(PlatformSet::EMPTY), || "origin not in the no-sharing region".into())?;
    ensure(label(&coarse, 10.0, 10.0) == Some(p.all()), || "far corner not in the share-all region".into())?;
    let count = |s: PlatformSet| coarse.iter().filter(|r| r.2 == s).count();
    let counts = [
        count(PlatformSet::EMPTY),
        count(PlatformSet::single(0)),
        count(PlatformSet::single(1)),
        count(p.all()),
    ];
    ensure(counts.iter().all(|&c| c > 0), || format!("region sizes (00, 10, 01, 11) = {counts:?}"))?;
    for &(s1, s2, l) in &coarse {
        let f = label(&fine, s1, s2);
        ensure(f == Some(l), || format!("label at ({s1}, {s2}) changes from {l} to {f:?} at double resolution"))?;
    }
    Ok(format!("region sizes (00, 10, 01, 11) = {counts:?} on 41x41; stable at 81x81"))
}

fn criterion_8() -> Outcome {
    let s = settings();
    let grid = default_sigma_bar_grid();
    let low = MarketParams::new(3.0, 2.0, vec![1.0, 0.8, 0.6], vec![0.1, 0.3, 0.45]).map_err(|e| e.to_string())?;
    let cmp = compare_ban_vs_uniform(&low, &grid, &s).map_err(|e| e.to_string())?;
    let best = cmp.best_policy().ok_or("no verified policy")?;
    ensure(best.policy == RegulationPolicy::BanAll, || format!("best low-cost policy {:?}", best.policy))?;
    ensure(best.u_user == low.k as f64 / 2.0, || format!("ban utility {}", best.u_user))?;
    let uniform_best = cmp
        .best_utility_where(|q| matches!(q, RegulationPolicy::Uniform { .. }))
        .unwrap_or(f64::NEG_INFINITY);
    ensure(uniform_best < best.u_user, || format!("a uniform mandate reaches {uniform_best}"))?;

    let sigma_bar = 20f64.sqrt();
    let base = MarketParams::new(3.0, 0.0, vec![1.0, 1.0], vec![0.4, 0.9]).map_err(|e| e.to_string())?;
    let beta_tilde = mandate_entry_threshold(&base, sigma_bar, &s).map_err(|e| e.to_string())?;
    let mixed = base.with_beta(beta_tilde.max(10.0));
    let eval = |policy: RegulationPolicy| -> Result<f64, String> {
        let r = solve_with_policy(&mixed, &policy, &s).map_err(|e| e.to_string())?;
        ensure(r.status == Status::Verified, || format!("{policy:?}: {:?}", r.status))?;
        Ok(r.outcome.u_user)
    };
    let ban = eval(RegulationPolicy::BanAll)?;
    let uniform = eval(RegulationPolicy::Uniform { sigma_bar })?;
    let nonuniform = eval(RegulationPolicy::ban_low_cost(&mixed, sigma_bar))?;
    ensure(uniform > ban, || format!("uniform {uniform} vs ban {ban}"))?;
    ensure(nonuniform > uniform, || format!("nonuniform {nonuniform} vs uniform {uniform}"))?;

    let sigma = NoiseProfile::uniform(2, sigma_bar);
    let both = revealed_info(&mixed, &sigma, mixed.all()).map_err(|e| e.to_string())?;
    let one = revealed_info(&mixed, &sigma, PlatformSet::single(1)).map_err(|e| e.to_string())?;
    let predicted = mixed.alpha * (both - one);
    let gain = nonuniform - uniform;
    ensure((gain - predicted).abs() <= REGULATION_GAIN_TOL && (gain - 0.124).abs() <= REGULATION_GAIN_TOL, || {
        format!("gain {gain}, predicted {predicted}")
    })?;

    let cmp = optimal_nonuniform(&mixed, &grid, &s).map_err(|e| e.to_string())?;
    let best = cmp.best_policy().ok_or("no verified policy in the nonuniform comparison")?;
    ensure(matches!(best.policy, RegulationPolicy::Nonuniform { .. }), || format!("best mixed policy {:?}", best.policy))?;
    Ok(format!(
        "all-low-cost ban u = {}; mixed (beta_tilde = {beta_tilde:.4}): ban {ban:.4} < uniform {uniform:.4} < nonuniform {nonuniform:.4}, gain {gain:.4}",
        low.k as f64 / 2.0
    ))
}

fn criterion_9() -> Outcome {
    let s = settings();
    let log = UtilityShape::Log1pNormalized;
    let cases = [
        MarketParams::new(20.0, 200.0, vec![1.0, 1.0], vec![0.6, 0.8]),
        MarketParams::new(30.0, 400.0, vec![1.0; 3], vec![0.6, 0.8, 1.0]),
    ];
    let mut lines = Vec::new();
    for p in cases {
        let p = p.map_err(|e| e.to_string())?.with_shapes(log.clone(), log.clone());
        let r = solve(&p, &s).map_err(|e| e.to_string())?;
        ensure(r.status == Status::Verified && r.entrants() == p.all(), || {
            format!("K = {}: {:?} with entrants {}", p.k, r.status, r.entrants())
        })?;
        ensure(r.outcome.u_user.abs() <= NONLINEAR_USER_TOL, || format!("K = {}: u_user {}", p.k, r.outcome.u_user))?;
        ensure(r.outcome.u_buyer > 0.0, || format!("K = {}: u_buyer {}", p.k, r.outcome.u_buyer))?;
        lines.push(format!("K = {}: u_user = {:.1e}, u_buyer = {:.4}", p.k, r.outcome.u_user, r.outcome.u_buyer));
    }

    // Identity shapes: the general pipeline equals the linear utilities bit for bit.
    let linear = MarketParams::new(3.0, 7.0, vec![1.0, 0.8, 0.6], vec![0.3, 0.7, 0.9]).map_err(|e| e.to_string())?;
    let shaped = linear.clone().with_shapes(UtilityShape::Identity, UtilityShape::Identity);
    ensure(solve(&linear, &s) == solve(&shaped, &s), || "solver output differs under identity shapes".into())?;
    for sigma in [[0.0, 1.0, 2.0], [0.5, f64::INFINITY, 3.0], [1.5, 1.5, 0.1]] {
        let noise = NoiseProfile::new(sigma.to_vec());
        for entry in linear.all().subsets() {
            for sharing in entry.subsets() {
                let prices = equilibrium_prices(&shaped, &noise, entry, sharing);
                let out = stage_utilities(&shaped, &noise, &ActionProfiles::on_path(entry, sharing), &prices);
                let info = revealed_info(&linear, &noise, sharing).map_err(|e| e.to_string())?;
                let u_user = 0.5 * sharing.len() as f64 - linear.alpha * info;
                let u_buyer = linear.beta * info - sharing.iter().map(|i| prices[i]).sum::<f64>();
                ensure(out.u_user.to_bits() == u_user.to_bits() && out.u_buyer.to_bits() == u_buyer.to_bits(), || {
                    format!("sigma {sigma:?}, sharing {sharing}: ({}, {}) vs ({u_user}, {u_buyer})", out.u_user, out.u_buyer)
                })?;
            }
        }
    }
    lines.push("identity shapes bit-identical".into());
    Ok(lines.join("; "))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("privacy-weight threshold", criterion_1),
        ("two-platform symmetric equilibrium", criterion_2),
        ("single-platform closed forms", criterion_3),
        ("randomized property suites", criterion_4),
        ("sequential entry sweep", criterion_5),
        ("welfare closed form", criterion_6),
        ("region grid structure", criterion_7),
        ("regulation comparisons", criterion_8),
        ("nonlinear utilities", criterion_9),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail} [{secs:.1}s]", n + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {reason} [{secs:.1}s]", n + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
