//! Region grids over two noise variances and sweeps over the buyer's valuation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{fmt_float, Axis, HarnessResult};
use crate::equilibrium::{entry_threshold_sequence, Status};
use crate::info_kernel::{MarketParams, NoiseProfile};
use crate::platforms::PlatformSet;
use crate::regulation::{solve_with_policy, RegulationPolicy};
use crate::settings::SolverSettings;
use crate::stage_game::region_of;
use crate::Error;

/// Axes for `(σ₁², σ₂²)` and the entry profile held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionGridSpec {
    pub sigma1_sq: Axis,
    pub sigma2_sq: Axis,
    #[serde(default = "both")]
    pub entry: PlatformSet,
}

fn both() -> PlatformSet {
    PlatformSet::full(2)
}

impl RegionGridSpec {
    pub fn new(sigma1_sq: Axis, sigma2_sq: Axis) -> Self {
        RegionGridSpec {
            sigma1_sq,
            sigma2_sq,
            entry: both(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    /// Sharing profile chosen by the user.
    pub label: PlatformSet,
}

/// Region label at every grid point, row-major with `σ₁²` outermost.
pub fn region_grid(
    params: &MarketParams,
    grid: &RegionGridSpec,
    settings: &SolverSettings,
) -> HarnessResult<Vec<RegionRow>> {
    params.validate()?;
    settings.validate()?;
    if params.k != 2 {
        return Err(Error::UnsupportedK(params.k).into());
    }
    for axis in [&grid.sigma1_sq, &grid.sigma2_sq] {
        Axis::new(axis.lo, axis.hi, axis.n)?;
    }
    if !grid.entry.is_subset(params.all()) {
        return Err(Error::InvalidParams(format!("grid entry set {} exceeds k = 2", grid.entry)).into());
    }
    let (n1, n2) = (grid.sigma1_sq.n, grid.sigma2_sq.n);
    let rows = settings.exec.map_range(n1 * n2, |idx| {
        let (s1, s2) = (grid.sigma1_sq.point(idx / n2), grid.sigma2_sq.point(idx % n2));
        let noise = NoiseProfile::from_variances(&[s1, s2]);
        region_of(params, &noise, grid.entry, settings).map(|label| RegionRow {
            sigma1_sq: s1,
            sigma2_sq: s2,
            label: label.sharing(),
        })
    });
    Ok(rows.into_iter().collect::<crate::Result<_>>()?)
}

pub fn write_region_csv<W: Write>(rows: &[RegionRow], out: W) -> HarnessResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sigma1_sq", "sigma2_sq", "label"])?;
    for r in rows {
        w.write_record([fmt_float(r.sigma1_sq), fmt_float(r.sigma2_sq), r.label.flag_string(2)])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub beta: f64,
    pub status: Status,
    pub entrants: PlatformSet,
    /// Entrants predicted by the sequential-entry thresholds.
    pub predicted: Option<PlatformSet>,
    pub u_user: f64,
    pub u_buyer: f64,
    pub welfare: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSweep {
    pub k: usize,
    pub rows: Vec<BetaRow>,
    /// Valuation at which each platform enters in the sequential-entry ordering.
    pub beta_entry: Option<Vec<f64>>,
}

impl BetaSweep {
    /// Valuations at which the verified entrant count first reaches each new value.
    pub fn verified_transitions(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let mut last = None;
        for r in self.rows.iter().filter(|r| r.status == Status::Verified) {
            let n = r.entrants.len();
            if last != Some(n) {
                if last.is_some() {
                    out.push((n, r.beta));
                }
                last = Some(n);
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> HarnessResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "beta",
            "status",
            "entrants",
            "n_entrants",
            "predicted",
            "u_user",
            "u_buyer",
            "welfare",
        ])?;
        for r in &self.rows {
            let status = serde_json::to_value(r.status).expect("status serializes");
            w.write_record([
                fmt_float(r.beta),
                status.as_str().unwrap_or_default().to_string(),
                r.entrants.flag_string(self.k),
                r.entrants.len().to_string(),
                r.predicted.map(|p| p.flag_string(self.k)).unwrap_or_default(),
                fmt_float(r.u_user),
                fmt_float(r.u_buyer),
                fmt_float(r.welfare),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Solves the game at every valuation on `betas`, in ascending order.
pub fn beta_sweep(
    params: &MarketParams,
    policy: Option<&RegulationPolicy>,
    betas: &Axis,
    settings: &SolverSettings,
) -> HarnessResult<BetaSweep> {
    params.validate()?;
    settings.validate()?;
    Axis::new(betas.lo, betas.hi, betas.n)?;
    let policy = policy.cloned().unwrap_or(RegulationPolicy::None);
    let sequence = entry_threshold_sequence(params).ok();
    let rows = settings.exec.map_range(betas.n, |j| {
        let beta = betas.point(j);
        let p = params.clone().with_beta(beta);
        solve_with_policy(&p, &policy, settings).map(|r| BetaRow {
            beta,
            status: r.status,
            entrants: r.entrants(),
            predicted: sequence.as_ref().map(|s| s.entrants_at(beta)),
            u_user: r.outcome.u_user,
            u_buyer: r.outcome.u_buyer,
            welfare: r.welfare,
        })
    });
    Ok(BetaSweep {
        k: params.k,
        rows: rows.into_iter().collect::<crate::Result<_>>()?,
        beta_entry: sequence.map(|s| s.beta_entry),
    })
}
