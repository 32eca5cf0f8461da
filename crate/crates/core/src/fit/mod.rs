//! Fitting the mixed-behavior model to observed cut-ins, QQ diagnostics and
//! synthetic situation generation.

mod generate;
mod model;
mod observations;
mod solver;

pub use generate::{filtered_params, generate_situations, synthesize, BandTruth, SyntheticDatasetSpec};
pub use model::{empirical_cdf, model_cdf, pearson_r, qq_points, BandModel, EmpiricalCdf, Metric, ModelMarginals, QqResult};
pub use observations::{Observation, ObservationSet, SpeedBand};
pub use solver::{fit_band, fit_params, BandFit, FitResult, KNOTS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{GridSpec, UtilitySpec, DEFAULT_LAMBDA_MAX};

/// Settings shared by fitting, QQ analysis and generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub grid: GridSpec,
    pub utility: UtilitySpec,
    /// Histogram bins for the per-band subject-speed marginal.
    pub speed_bins: usize,
    /// TTC values above this (including infinite ones) are clipped here, s.
    pub ttc_cap: f64,
    /// Midpoint-rule points per dimension for the TTC marginal.
    pub ttc_quadrature: usize,
    /// Lower bound on `|λ|` during fitting.
    pub lambda_min_abs: f64,
    pub lambda_max: f64,
    pub max_iters: usize,
    /// Bands with fewer observations are skipped.
    pub min_observations: usize,
    /// Seeded random starts added to the eight category corners.
    pub random_starts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec { v_min: 0.0, v_max: 45.0, nv: 64, gap_min: 0.0, gap_max: 60.0, ng: 64 },
            utility: UtilitySpec::default(),
            speed_bins: 10,
            ttc_cap: 20.0,
            ttc_quadrature: 1,
            lambda_min_abs: 0.01,
            lambda_max: DEFAULT_LAMBDA_MAX,
            max_iters: 100,
            min_observations: 200,
            random_starts: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.utility.validate()?;
        if self.speed_bins == 0 || self.ttc_quadrature == 0 {
            return Err(Error::Config("speed_bins and ttc_quadrature must be >= 1".into()));
        }
        if !(self.ttc_cap > 0.0 && self.ttc_cap.is_finite()) {
            return Err(Error::Config("ttc_cap must be finite and > 0".into()));
        }
        if !(self.lambda_min_abs > 0.0 && self.lambda_min_abs < self.lambda_max) {
            return Err(Error::Config("need 0 < lambda_min_abs < lambda_max".into()));
        }
        if self.max_iters == 0 || self.min_observations < 2 {
            return Err(Error::Config("max_iters must be >= 1 and min_observations >= 2".into()));
        }
        Ok(())
    }
}
