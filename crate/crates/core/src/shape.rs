//! Concave utility-of-information shapes `H: [0,1] -> [0,1]`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "ShapeRepr")]
pub enum UtilityShape {
    /// `H(x) = x`.
    #[default]
    Identity,
    /// `H(x) = ln(1 + x) / ln 2`.
    Log1pNormalized,
    /// Piecewise-linear interpolation of `values` on a uniform grid over `[0, 1]`.
    Table { values: Vec<f64> },
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum ShapeKind {
    Identity,
    Log1pNormalized,
    Table,
}

/// Strict wire form: unknown fields are rejected for every kind.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeRepr {
    kind: ShapeKind,
    values: Option<Vec<f64>>,
}

impl TryFrom<ShapeRepr> for UtilityShape {
    type Error = String;

    fn try_from(repr: ShapeRepr) -> std::result::Result<Self, String> {
        match (repr.kind, repr.values) {
            (ShapeKind::Identity, None) => Ok(UtilityShape::Identity),
            (ShapeKind::Log1pNormalized, None) => Ok(UtilityShape::Log1pNormalized),
            (ShapeKind::Table, Some(values)) => Ok(UtilityShape::Table { values }),
            (ShapeKind::Table, None) => Err("table shape requires `values`".into()),
            (_, Some(_)) => Err("`values` is only allowed for the table shape".into()),
        }
    }
}

const TABLE_TOL: f64 = 1e-12;

impl UtilityShape {
    pub fn is_identity(&self) -> bool {
        matches!(self, UtilityShape::Identity)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            UtilityShape::Identity => x,
            UtilityShape::Log1pNormalized => x.ln_1p() / LN_2,
            UtilityShape::Table { values } => {
                let segs = values.len() - 1;
                let pos = x.clamp(0.0, 1.0) * segs as f64;
                let idx = (pos.floor() as usize).min(segs - 1);
                let frac = pos - idx as f64;
                values[idx] + frac * (values[idx + 1] - values[idx])
            }
        }
    }

    /// Smallest `x` in `[0, 1]` with `H(x) = y`, or `None` when `y` lies outside the range of `H`.
    pub fn inverse(&self, y: f64) -> Option<f64> {
        if !(y >= 0.0) {
            return None;
        }
        match self {
            UtilityShape::Identity => (y <= 1.0).then_some(y),
            UtilityShape::Log1pNormalized => {
                (y <= 1.0).then(|| (y * LN_2).exp_m1().min(1.0))
            }
            UtilityShape::Table { values } => {
                let segs = values.len() - 1;
                if y > values[segs] {
                    return None;
                }
                let idx = values.partition_point(|&v| v < y).saturating_sub(1).min(segs - 1);
                let (lo, hi) = (values[idx], values[idx + 1]);
                let frac = if hi > lo { (y - lo) / (hi - lo) } else { 0.0 };
                Some(((idx as f64 + frac.clamp(0.0, 1.0)) / segs as f64).min(1.0))
            }
        }
    }

    /// Checks `H(0) = 0`, strictly positive slope, concavity and `H(1) <= 1`.
    pub fn validate(&self) -> Result<()> {
        let UtilityShape::Table { values } = self else {
            return Ok(());
        };
        if values.len() < 2 {
            return Err(Error::InvalidParams(
                "table shape needs at least two values".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("table shape values must be finite".into()));
        }
        if values[0].abs() > TABLE_TOL {
            return Err(Error::InvalidParams(format!(
                "table shape must start at H(0) = 0, got {}",
                values[0]
            )));
        }
        if *values.last().unwrap() > 1.0 + TABLE_TOL {
            return Err(Error::InvalidParams("table shape must satisfy H(1) <= 1".into()));
        }
        let slopes: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        if slopes.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidParams(
                "table shape must be strictly increasing".into(),
            ));
        }
        if slopes.windows(2).any(|w| w[1] > w[0] + TABLE_TOL) {
            return Err(Error::InvalidParams("table shape must be concave".into()));
        }
        Ok(())
    }
}
