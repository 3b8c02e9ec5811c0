use datamarket::equilibrium::Status;
use datamarket::harness::{
    beta_sweep, load_policy, load_scenario, region_grid, run_scenario, write_region_csv, Axis,
    HarnessError, RegionGridSpec, Scenario, SolveReport,
};
use datamarket::regulation::RegulationPolicy;
use datamarket::stage_game::{stage_utilities, welfare, ActionProfiles};
use datamarket::{Error, Exec, MarketParams, PlatformSet, SolverSettings};

const TWO_PLATFORM: &str = r#"{
  "market": { "k": 2, "alpha": 2.0, "beta": 3.0, "gamma": [1.0, 1.0], "cost": [0.6, 1.0] }
}"#;

#[test]
fn two_platform_scenario_report() {
    let s = Scenario::from_json(TWO_PLATFORM, "two.json").unwrap();
    let r = run_scenario(&s, None).unwrap();
    assert_eq!(r.status, Status::Verified);
    assert_eq!(r.exit_code(), 0);
    assert!(r.sigma_sq.iter().all(|v| (v - 1.0).abs() < 1e-9));
    assert!(r.u_user.abs() < 1e-9);
    assert!(r.certificate.verified);
    assert!(r.certificate.max_gain.unwrap() <= r.certificate.tol);
    assert!(r.thresholds.is_some());
}

#[test]
fn single_platform_scenario_report() {
    let text = r#"{"market": {"k": 1, "alpha": 0.8, "beta": 1.0, "gamma": [1.0], "cost": [0.4]}}"#;
    let r = run_scenario(&Scenario::from_json(text, "one.json").unwrap(), None).unwrap();
    assert!((r.u_user - 0.1).abs() < 1e-9);
    assert_eq!(r.sigma_sq, vec![0.0]);
}

#[test]
fn malformed_gamma_names_the_field() {
    let text = TWO_PLATFORM.replace("[1.0, 1.0]", "[1.2, 1.0]");
    let err = Scenario::from_json(&text, "bad.json").unwrap_err();
    assert_eq!(err.exit_code(), 4);
    let msg = err.to_string();
    assert!(msg.contains("bad.json") && msg.contains("gamma[0]"), "{msg}");
}

#[test]
fn unknown_fields_are_rejected_with_location() {
    for text in [
        TWO_PLATFORM.replace("\"cost\"", "\"colour\": 1, \"cost\""),
        TWO_PLATFORM.replace("\"market\"", "\"extra\": 0, \"market\""),
        r#"{"market": {"k": 1, "alpha": 1, "beta": 1, "gamma": [1], "cost": [0]}, "settings": {"verify_tolerance": 1}}"#.into(),
        r#"{"market": {"k": 1, "alpha": 1, "beta": 1, "gamma": [1], "cost": [0]}, "policy": {"kind": "ban_all", "sigma_bar": 1}}"#.into(),
    ] {
        let err = Scenario::from_json(&text, "x.json").unwrap_err();
        assert!(matches!(err, HarnessError::Parse { .. }), "{err}");
        let (line, column) = err.location().unwrap();
        assert!(line >= 1 && column >= 1);
    }
}

#[test]
fn scenario_round_trips() {
    let mut s = Scenario::from_json(TWO_PLATFORM, "two.json").unwrap();
    s.policy = Some(RegulationPolicy::Nonuniform {
        lower_bounds: vec![f64::INFINITY, 2.0],
    });
    s.settings = SolverSettings::sequential();
    let back = Scenario::from_json(&s.to_json(), "back.json").unwrap();
    assert_eq!(back, s);
}

#[test]
fn report_round_trip_reproduces_utilities() {
    let text = r#"{"market": {"k": 3, "alpha": 4.0, "beta": 6.0, "gamma": [1.0, 0.9, 0.8], "cost": [0.3, 0.75, 1.0]}}"#;
    let s = Scenario::from_json(text, "three.json").unwrap();
    let report = run_scenario(&s, None).unwrap();
    let back: SolveReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);
    let actions = ActionProfiles::on_path(back.entrants, back.sharing);
    let out = stage_utilities(&s.market, &back.noise, &actions, &back.prices);
    assert!((out.u_user - report.u_user).abs() < 1e-12);
    assert!((out.u_buyer - report.u_buyer).abs() < 1e-12);
    for (a, b) in out.u_platforms.iter().zip(&report.u_platforms) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((welfare(&out) - report.welfare).abs() < 1e-12);
}

#[test]
fn policy_argument_overrides_scenario_policy() {
    let text = r#"{"market": {"k": 2, "alpha": 3.0, "beta": 10.0, "gamma": [1.0, 1.0], "cost": [0.4, 0.9]},
                  "policy": {"kind": "ban_all"}}"#;
    let s = Scenario::from_json(text, "reg.json").unwrap();
    let banned = run_scenario(&s, None).unwrap();
    assert_eq!(banned.u_user, 0.5);
    let uniform = RegulationPolicy::Uniform { sigma_bar: 20f64.sqrt() };
    let r = run_scenario(&s, Some(&uniform)).unwrap();
    assert_eq!(r.policy, Some(uniform));
    assert!((r.u_user - 0.7391).abs() < 1e-4);
}

#[test]
fn files_load_and_report_io_errors() {
    let dir = std::env::temp_dir().join(format!("datamarket-harness-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let scenario = dir.join("s.json");
    std::fs::write(&scenario, TWO_PLATFORM).unwrap();
    assert_eq!(load_scenario(&scenario).unwrap().market.k, 2);
    let policy = dir.join("p.json");
    std::fs::write(&policy, r#"{"kind": "uniform", "sigma_bar": "inf"}"#).unwrap();
    assert_eq!(
        load_policy(&policy, 2).unwrap(),
        RegulationPolicy::Uniform { sigma_bar: f64::INFINITY }
    );
    std::fs::write(&policy, r#"{"kind": "nonuniform", "lower_bounds": [1.0]}"#).unwrap();
    assert!(matches!(load_policy(&policy, 2), Err(HarnessError::Invalid { .. })));
    assert!(matches!(load_scenario(dir.join("missing.json")), Err(HarnessError::Io { .. })));
    std::fs::remove_dir_all(&dir).unwrap();
}

fn correlated_pair() -> MarketParams {
    MarketParams::new(2.5, 1.0, vec![0.8, 0.7], vec![0.6, 0.6]).unwrap()
}

#[test]
fn region_grid_rows_and_csv() {
    let grid = RegionGridSpec::new("0:100:3".parse().unwrap(), "0:100:3".parse().unwrap());
    let rows = region_grid(&correlated_pair(), &grid, &SolverSettings::default()).unwrap();
    assert_eq!(rows.len(), 9);
    assert_eq!((rows[1].sigma1_sq, rows[1].sigma2_sq), (0.0, 50.0));
    assert_eq!(rows[0].label, PlatformSet::EMPTY);
    assert_eq!(rows[8].label, PlatformSet::full(2));
    let mut out = Vec::new();
    write_region_csv(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sigma1_sq,sigma2_sq,label"));
    assert_eq!(lines.next(), Some("0.0000000000000000e0,0.0000000000000000e0,00"));
    assert_eq!(lines.last(), Some("1.0000000000000000e2,1.0000000000000000e2,11"));
}

#[test]
fn region_grid_requires_two_platforms() {
    let p = MarketParams::new(3.0, 1.0, vec![1.0; 3], vec![0.6; 3]).unwrap();
    let grid = RegionGridSpec::new("0:1:2".parse().unwrap(), "0:1:2".parse().unwrap());
    let err = region_grid(&p, &grid, &SolverSettings::default()).unwrap_err();
    assert!(matches!(err, HarnessError::Solver(Error::UnsupportedK(3))));
}

#[test]
fn region_grid_is_independent_of_execution_mode() {
    let grid = RegionGridSpec::new("0:12:25".parse().unwrap(), "0:12:25".parse().unwrap());
    let seq = region_grid(&correlated_pair(), &grid, &SolverSettings::sequential()).unwrap();
    let par = region_grid(&correlated_pair(), &grid, &SolverSettings::default()).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn beta_sweep_regimes_and_csv() {
    let p = MarketParams::new(4.0, 0.0, vec![1.0; 3], vec![0.3, 0.75, 1.0]).unwrap();
    let axis: Axis = "0:8:17".parse().unwrap();
    let sweep = beta_sweep(&p, None, &axis, &SolverSettings::default()).unwrap();
    assert_eq!(sweep.rows.len(), 17);
    assert_eq!(sweep.rows[0].entrants, PlatformSet::single(0));
    assert_eq!(sweep.rows[0].status, Status::Verified);
    let thresholds = sweep.beta_entry.as_ref().unwrap();
    assert_eq!(thresholds[0], 0.0);
    assert!((thresholds[1] - 7.0 / 3.0).abs() < 1e-12);
    assert!((thresholds[2] - 5.6).abs() < 1e-12);
    assert_eq!(sweep.rows[16].predicted, Some(p.all()));

    // Welfare increases with the valuation within each verified regime.
    for w in sweep.rows.windows(2) {
        let same = w[0].entrants == w[1].entrants;
        if same && w[0].status == Status::Verified && w[1].status == Status::Verified {
            assert!(w[1].welfare >= w[0].welfare - 1e-12);
        }
    }

    let mut out = Vec::new();
    sweep.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 18);
    assert_eq!(lines[0], "beta,status,entrants,n_entrants,predicted,u_user,u_buyer,welfare");
    assert!(lines[1].starts_with("0.0000000000000000e0,verified,100,1,100,"), "{}", lines[1]);
}

#[test]
fn outputs_are_deterministic() {
    let p = MarketParams::new(4.0, 0.0, vec![1.0, 0.9, 0.8], vec![0.3, 0.75, 1.0]).unwrap();
    let axis: Axis = "0:8:9".parse().unwrap();
    let csv = |exec: Exec| {
        let settings = SolverSettings { exec, ..SolverSettings::default() };
        let mut out = Vec::new();
        beta_sweep(&p, None, &axis, &settings).unwrap().write_csv(&mut out).unwrap();
        out
    };
    assert_eq!(csv(Exec::Parallel), csv(Exec::Parallel));
    assert_eq!(csv(Exec::Parallel), csv(Exec::Sequential));
}
