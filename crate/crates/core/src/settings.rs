use serde::{Deserialize, Serialize};

use crate::exec::Exec;

/// Numerical knobs shared by every solver stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Utilities closer than this are treated as tied in the user's problem.
    pub indifference_tol: f64,
    /// Largest deviation gain still accepted when certifying an equilibrium.
    pub verify_tol: f64,
    /// Grid points per deviator in the safety noise sweep.
    pub sweep_points: usize,
    /// Smallest per-platform signal ratio `gamma^2 / (2 + sigma^2)` visited by the sweep.
    pub t_min: f64,
    /// Bisection steps used to locate region boundaries.
    pub bisection_iters: usize,
    /// Largest entrant count for exhaustive user search.
    pub search_cap: usize,
    /// Largest K for which `solve` runs the fallback search over entrant sets.
    pub fallback_cap: usize,
    /// Mandate entry thresholds above this are reported as degenerate.
    pub mandate_cap: f64,
    pub exec: Exec,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            indifference_tol: 1e-9,
            verify_tol: 1e-7,
            sweep_points: 200,
            t_min: 1e-6,
            bisection_iters: 60,
            search_cap: 16,
            fallback_cap: 6,
            mandate_cap: 1e12,
            exec: Exec::Parallel,
        }
    }
}

impl SolverSettings {
    pub fn sequential() -> Self {
        SolverSettings {
            exec: Exec::Sequential,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let positive = [
            ("indifference_tol", self.indifference_tol),
            ("verify_tol", self.verify_tol),
            ("t_min", self.t_min),
            ("mandate_cap", self.mandate_cap),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(crate::Error::InvalidParams(format!(
                    "settings.{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.sweep_points < 2 {
            return Err(crate::Error::InvalidParams(
                "settings.sweep_points must be at least 2".into(),
            ));
        }
        if self.search_cap == 0 || self.search_cap > 24 {
            return Err(crate::Error::InvalidParams(
                "settings.search_cap must lie in 1..=24".into(),
            ));
        }
        Ok(())
    }
}
