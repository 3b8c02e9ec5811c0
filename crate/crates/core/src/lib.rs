//! Subgame-perfect equilibria of a three-layer data market: one user, `K`
//! competing platforms that relay noisy user data, and one data buyer.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod linalg;
mod serde_inf;
mod shape;

pub mod equilibrium;
pub mod exec;
pub mod harness;
pub mod info_kernel;
pub mod platforms;
pub mod regulation;
pub mod settings;
pub mod stage_game;

pub use error::{Error, Result};
pub use exec::Exec;
pub use info_kernel::{MarketParams, NoiseProfile};
pub use platforms::PlatformSet;
pub use settings::SolverSettings;
pub use shape::UtilityShape;
