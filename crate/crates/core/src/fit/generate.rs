use serde::{Deserialize, Serialize};

use super::model::BandModel;
use super::observations::{Observation, ObservationSet, SpeedBand};
use super::FitConfig;
use crate::error::{Error, Result};
use crate::policy::{sample_action, BehaviorCategory, MixedPolicyParams};
use crate::rng;
use crate::scenario::SpeedMarginal;

/// Restrict a mixed policy to the sign patterns of `filter`.
///
/// Per utility, if the filtered categories only use the positive (negative)
/// branch, the other branch is dropped by setting `α` to 1 (0).
pub fn filtered_params(params: &MixedPolicyParams, filter: &[BehaviorCategory]) -> Result<MixedPolicyParams> {
    if filter.is_empty() {
        return Err(Error::Config("category filter must not be empty".into()));
    }
    let mut out = *params;
    for i in 0..3 {
        let pos = filter.iter().any(|c| c.signs()[i]);
        let neg = filter.iter().any(|c| !c.signs()[i]);
        out.alpha[i] = match (pos, neg) {
            (true, false) => 1.0,
            (false, true) => 0.0,
            _ => params.alpha[i],
        };
    }
    Ok(out)
}

/// Draw `n` situations: subject speed from `marginal`, action from the mixed
/// policy grid at that speed bin, both jittered within their cells.
pub fn generate_situations(
    params: &MixedPolicyParams,
    n: usize,
    marginal: &SpeedMarginal,
    cfg: &FitConfig,
    seed: u64,
    filter: Option<&[BehaviorCategory]>,
) -> Result<ObservationSet> {
    let params = match filter {
        Some(f) => filtered_params(params, f)?,
        None => *params,
    };
    params.validate(cfg.lambda_max)?;
    if n == 0 {
        return Ok(ObservationSet::default());
    }
    let model = BandModel::new(cfg, marginal.clone())?;
    let grids = model.tables().iter().map(|t| t.mixed_grid(&params)).collect::<Result<Vec<_>>>()?;
    let mut r = rng::stream(seed, "generate", 0);
    let records = (0..n)
        .map(|_| {
            let (s, v_s) = marginal.sample(&mut r, true);
            let a = sample_action(&grids[s], &mut r, true);
            Observation::from_action(v_s, &a)
        })
        .collect();
    Ok(ObservationSet::new(records))
}

/// Ground truth for one band of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTruth {
    pub band: SpeedBand,
    pub params: MixedPolicyParams,
    pub n: usize,
    pub speeds: SpeedMarginal,
}

/// Known-parameter stand-in for a naturalistic cut-in dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub bands: Vec<BandTruth>,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        let band = |band, lp, lm, alpha, lo, hi| BandTruth {
            band,
            params: MixedPolicyParams { lambda_plus: lp, lambda_minus: lm, alpha },
            n: 10_000,
            speeds: SpeedMarginal::uniform(lo, hi, 10).expect("valid marginal"),
        };
        Self {
            bands: vec![
                band(SpeedBand::Low, [4.0, 3.0, 2.0], [-3.0, -2.0, -4.0], [0.7, 0.5, 0.4], 5.0, 15.0),
                band(SpeedBand::Med, [6.0, 2.0, 3.0], [-2.0, -5.0, -3.0], [0.6, 0.7, 0.5], 15.0, 25.0),
                band(SpeedBand::High, [3.0, 5.0, 6.0], [-4.0, -2.0, -2.0], [0.5, 0.6, 0.7], 25.0, 35.0),
            ],
        }
    }
}

impl SyntheticDatasetSpec {
    pub fn validate(&self, cfg: &FitConfig) -> Result<()> {
        for b in &self.bands {
            b.params.validate(cfg.lambda_max)?;
            b.speeds.validate()?;
            let lo = b.speeds.values.iter().map(|v| v - 0.5 * b.speeds.bin_width).fold(f64::INFINITY, f64::min);
            let hi = b.speeds.max_speed();
            if SpeedBand::of(lo + 1e-9) != b.band || SpeedBand::of(hi) != b.band {
                return Err(Error::Config(format!("speeds [{lo}, {hi}] leave band {}", b.band)));
            }
        }
        Ok(())
    }
}

/// All bands of `spec`, concatenated in band order.
pub fn synthesize(spec: &SyntheticDatasetSpec, cfg: &FitConfig, seed: u64) -> Result<ObservationSet> {
    spec.validate(cfg)?;
    let mut records = Vec::new();
    for (i, b) in spec.bands.iter().enumerate() {
        let set = generate_situations(&b.params, b.n, &b.speeds, cfg, rng::derive_seed(seed, "synth-band", i as u64), None)?;
        records.extend(set.records);
    }
    Ok(ObservationSet::new(records))
}
