//! Scenario files, equilibrium reports, region grids, valuation sweeps and
//! the randomized property suite behind the command-line front end.

mod grid;
mod properties;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{EquilibriumResult, Method, Status, Thresholds};
use crate::info_kernel::{MarketParams, NoiseProfile};
use crate::platforms::PlatformSet;
use crate::regulation::{solve_with_policy, RegulationPolicy};
use crate::settings::SolverSettings;

pub use grid::{beta_sweep, region_grid, write_region_csv, BetaRow, BetaSweep, RegionGridSpec, RegionRow};
pub use properties::{property_suite, sign_flip_self_test, CheckResult, PropertyReport, MAX_SUITE_K};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CANDIDATE_ONLY: i32 = 2;
pub const EXIT_NO_EQUILIBRIUM: i32 = 3;
pub const EXIT_INVALID: i32 = 4;

/// Process exit code for a solver status.
pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Verified => EXIT_OK,
        Status::CandidateOnly => EXIT_CANDIDATE_ONLY,
        Status::NoEquilibriumFound => EXIT_NO_EQUILIBRIUM,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {field}: {source}")]
    Invalid {
        path: String,
        field: &'static str,
        #[source]
        source: crate::Error,
    },
    #[error("invalid {what} `{input}`: {reason}")]
    Argument {
        what: &'static str,
        input: String,
        reason: String,
    },
    #[error(transparent)]
    Solver(#[from] crate::Error),
    #[error("writing output: {0}")]
    Output(#[from] csv::Error),
}

impl HarnessError {
    /// Every error is an input problem from the caller's point of view.
    pub fn exit_code(&self) -> i32 {
        EXIT_INVALID
    }

    /// Line and column of a parse error.
    pub fn location(&self) -> Option<(usize, usize)> {
        match self {
            HarnessError::Parse { source, .. } => Some((source.line(), source.column())),
            _ => None,
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

/// A market instance plus optional regulation and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub market: MarketParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<RegulationPolicy>,
    #[serde(default)]
    pub settings: SolverSettings,
}

impl Scenario {
    pub fn new(market: MarketParams) -> Self {
        Scenario {
            market,
            policy: None,
            settings: SolverSettings::default(),
        }
    }

    /// Parses and validates scenario text; `origin` names the source in diagnostics.
    pub fn from_json(text: &str, origin: &str) -> HarnessResult<Self> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|source| HarnessError::Parse {
            path: origin.to_string(),
            source,
        })?;
        scenario.validate(origin)?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn validate(&self, origin: &str) -> HarnessResult<()> {
        let invalid = |field, source| HarnessError::Invalid {
            path: origin.to_string(),
            field,
            source,
        };
        self.market.validate().map_err(|e| invalid("market", e))?;
        self.settings.validate().map_err(|e| invalid("settings", e))?;
        if let Some(policy) = &self.policy {
            policy.validate(self.market.k).map_err(|e| invalid("policy", e))?;
        }
        Ok(())
    }
}

fn read(path: &Path) -> HarnessResult<String> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> HarnessResult<Scenario> {
    let path = path.as_ref();
    Scenario::from_json(&read(path)?, &path.display().to_string())
}

/// Reads a regulation policy and checks it against `k` platforms.
pub fn load_policy(path: impl AsRef<Path>, k: usize) -> HarnessResult<RegulationPolicy> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let policy: RegulationPolicy =
        serde_json::from_str(&read(path)?).map_err(|source| HarnessError::Parse {
            path: origin.clone(),
            source,
        })?;
    policy.validate(k).map_err(|source| HarnessError::Invalid {
        path: origin,
        field: "policy",
        source,
    })?;
    Ok(policy)
}

/// Compact view of a verification certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub verified: bool,
    pub user_br_ok: bool,
    pub boundary_ok: bool,
    pub deviations_checked: usize,
    /// Largest deviation gain found, if any deviation was examined.
    pub max_gain: Option<f64>,
    pub worst_deviation: Option<String>,
    pub tol: f64,
}

impl CertificateSummary {
    fn from_result(r: &EquilibriumResult) -> Self {
        let c = &r.certificate;
        let noise = c.noise_deviations.iter().map(|d| {
            (
                d.gain,
                format!("platform {} noise change to share count {}", d.platform, d.target_share_count),
            )
        });
        let entry = c.entry_deviations.iter().map(|d| {
            let verb = match d.kind {
                crate::equilibrium::EntryMove::Enter => "enters",
                crate::equilibrium::EntryMove::Exit => "exits",
            };
            (d.gain, format!("platform {} {verb}", d.platform))
        });
        let worst = noise.chain(entry).max_by(|a, b| a.0.total_cmp(&b.0));
        CertificateSummary {
            verified: c.is_verified(),
            user_br_ok: c.user_br_ok,
            boundary_ok: c.boundary_ok,
            deviations_checked: c.noise_deviations.len() + c.entry_deviations.len(),
            max_gain: worst.as_ref().map(|w| w.0),
            worst_deviation: worst.map(|w| w.1),
            tol: c.tol,
        }
    }
}

/// Structured output of `solve` and `regulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: Status,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<RegulationPolicy>,
    pub entrants: PlatformSet,
    pub sharing: PlatformSet,
    pub noise: NoiseProfile,
    #[serde(with = "crate::serde_inf::vec")]
    pub sigma_sq: Vec<f64>,
    pub prices: Vec<f64>,
    pub info_to_buyer: f64,
    pub u_user: f64,
    pub u_platforms: Vec<f64>,
    pub u_buyer: f64,
    pub welfare: f64,
    pub thresholds: Option<Thresholds>,
    pub certificate: CertificateSummary,
    pub note: Option<String>,
}

impl SolveReport {
    pub fn new(result: &EquilibriumResult, policy: Option<RegulationPolicy>) -> Self {
        SolveReport {
            status: result.status,
            method: result.method,
            policy,
            entrants: result.entrants(),
            sharing: result.actions.sharing,
            noise: result.noise.clone(),
            sigma_sq: result.noise.variances(),
            prices: result.outcome.prices.clone(),
            info_to_buyer: result.outcome.info_to_buyer,
            u_user: result.outcome.u_user,
            u_platforms: result.outcome.u_platforms.clone(),
            u_buyer: result.outcome.u_buyer,
            welfare: result.welfare,
            thresholds: result.thresholds.clone(),
            certificate: CertificateSummary::from_result(result),
            note: result.note.clone(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        exit_code(self.status)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Solves a scenario, applying `policy` when given and the scenario's own policy otherwise.
pub fn run_scenario(scenario: &Scenario, policy: Option<&RegulationPolicy>) -> HarnessResult<SolveReport> {
    let policy = policy.or(scenario.policy.as_ref()).cloned();
    let applied = policy.clone().unwrap_or(RegulationPolicy::None);
    let result = solve_with_policy(&scenario.market, &applied, &scenario.settings)?;
    Ok(SolveReport::new(&result, policy))
}

/// Evenly spaced axis `lo:hi:n` with `n >= 2` points, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> HarnessResult<Self> {
        let axis = Axis { lo, hi, n };
        axis.check().map_err(|reason| HarnessError::Argument {
            what: "axis",
            input: axis.to_string(),
            reason,
        })?;
        Ok(axis)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Err("bounds must be finite".into());
        }
        if self.lo < 0.0 {
            return Err("bounds must be nonnegative".into());
        }
        if self.hi < self.lo {
            return Err("upper bound is below lower bound".into());
        }
        if self.n < 2 {
            return Err("needs at least 2 points".into());
        }
        Ok(())
    }

    pub fn point(&self, j: usize) -> f64 {
        if j + 1 == self.n {
            return self.hi;
        }
        self.lo + (self.hi - self.lo) * j as f64 / (self.n - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.n)
    }
}

impl FromStr for Axis {
    type Err = HarnessError;

    fn from_str(s: &str) -> HarnessResult<Self> {
        let err = |reason: &str| HarnessError::Argument {
            what: "axis",
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts[..] else {
            return Err(err("expected lo:hi:n"));
        };
        let lo: f64 = lo.trim().parse().map_err(|_| err("lower bound is not a number"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| err("upper bound is not a number"))?;
        let n: usize = n.trim().parse().map_err(|_| err("point count is not an integer"))?;
        let axis = Axis { lo, hi, n };
        axis.check().map_err(|r| err(&r))?;
        Ok(axis)
    }
}

/// Float cell with 17 significant digits; infinities and NaN spelled out.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
