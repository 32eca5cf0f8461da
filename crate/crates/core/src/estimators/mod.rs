//! Crude Monte Carlo and importance-sampling estimators of the near-crash
//! probability, with the cross-entropy baseline proposal.

pub mod ce;
pub mod oracle;
pub mod proposal;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scenario::Scene;

pub use ce::{ce_optimize, CeIteration, CeOutcome, CeParams};
pub use oracle::{grid_oracle, EventTable};
pub use proposal::{GridProposal, ProposalDescriptor, TruncatedNormal};

const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Cmc,
    IsCe,
    IsBr,
    /// Importance sampling with any other proposal.
    Is,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub p_hat: f64,
    pub n: usize,
    /// Sample variance of `I_ε · w`.
    pub weight_variance: f64,
    /// Half-width of the 95% confidence interval.
    pub ci95: f64,
    pub seed: u64,
    pub method: Method,
    /// Number of samples that hit the event.
    pub event_count: usize,
    /// Fraction of samples that hit the event.
    pub event_rate: f64,
    /// Samples whose geometry was infeasible, counted as non-events.
    pub infeasible_count: usize,
}

/// One drawn input with its indicator and importance weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: u64,
    pub v_s: f64,
    pub v_lc: f64,
    pub gap: f64,
    pub severity: f64,
    pub event: bool,
    pub weight: f64,
    /// `false` when the cut-in geometry was infeasible.
    pub feasible: bool,
}

/// `⌈1.96 / (rel_err² · p)⌉`.
pub fn required_sample_size(rel_err: f64, p: f64) -> Result<u64> {
    if !(rel_err > 0.0 && rel_err < 1.0) || !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("need 0 < rel_err < 1 and 0 < p < 1, got ({rel_err}, {p})")));
    }
    let x = Z95 / (rel_err * rel_err * p);
    let r = x.round();
    // Exact products like 1.96e7 pick up a few ulps of error.
    let n = if (x - r).abs() <= 1e-9 * r { r } else { x.ceil() };
    Ok(n as u64)
}

/// Draw `n` inputs from `proposal`, roll them out, and weight by
/// `nominal / proposal` masses.
pub fn draw_samples(
    nominal: &GridProposal,
    proposal: &GridProposal,
    scene: &Scene,
    n: usize,
    seed: u64,
) -> Result<Vec<SampleRecord>> {
    if n == 0 {
        return Err(Error::Config("sample count must be >= 1".into()));
    }
    nominal.check_compatible(proposal)?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, "sample", i);
            let (s, cell) = proposal.sample(&mut r);
            let action = proposal.conditional(s).center(cell);
            let v_s = proposal.speeds()[s];
            let (severity, feasible) = scene.checked_severity(v_s, &action, rng::derive_seed(seed, "rollout", i));
            let event = scene.is_event_severity(severity);
            let q = proposal.mass(s, cell);
            let p = nominal.mass(s, cell);
            if !(q > 0.0) {
                return Err(Error::AbsoluteContinuity(format!(
                    "proposal mass is zero at sampled input v_s={v_s}, v_lc={}, gap={}",
                    action.v_lc, action.gap
                )));
            }
            Ok(SampleRecord { index: i, v_s, v_lc: action.v_lc, gap: action.gap, severity, event, weight: p / q, feasible })
        })
        .collect()
}

/// Aggregates records in index order.
pub fn summarize(records: &[SampleRecord], seed: u64, method: Method) -> EstimateResult {
    let n = records.len();
    let (mut mean, mut m2) = (0.0, 0.0);
    let mut events = 0;
    for (k, r) in records.iter().enumerate() {
        let y = if r.event { r.weight } else { 0.0 };
        events += r.event as usize;
        let d = y - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (y - mean);
    }
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    let ci95 = match method {
        Method::Cmc => Z95 * (mean * (1.0 - mean) / n as f64).max(0.0).sqrt(),
        _ => Z95 * (var / n as f64).sqrt(),
    };
    let infeasible_count = records.iter().filter(|r| !r.feasible).count();
    EstimateResult {
        p_hat: mean.clamp(0.0, 1.0),
        n,
        weight_variance: var,
        ci95,
        seed,
        method,
        event_count: events,
        event_rate: events as f64 / n as f64,
        infeasible_count,
    }
}

/// Crude Monte Carlo: sample the nominal policy and count events.
pub fn cmc_estimate(nominal: &GridProposal, n: usize, scene: &Scene, seed: u64) -> Result<EstimateResult> {
    let recs = draw_samples(nominal, nominal, scene, n, seed)?;
    Ok(summarize(&recs, seed, Method::Cmc))
}

/// Importance sampling with `proposal`.
pub fn is_estimate(
    nominal: &GridProposal,
    proposal: &GridProposal,
    n: usize,
    scene: &Scene,
    seed: u64,
    method: Method,
) -> Result<EstimateResult> {
    let recs = draw_samples(nominal, proposal, scene, n, seed)?;
    Ok(summarize(&recs, seed, method))
}

/// CSV audit dump: `index,v_s,v_lc,gap,severity,event,weight`.
pub fn write_samples_csv<W: Write>(records: &[SampleRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "index,v_s,v_lc,gap,severity,event,weight")?;
    for r in records {
        writeln!(w, "{},{:e},{:e},{:e},{:e},{},{:e}", r.index, r.v_s, r.v_lc, r.gap, r.severity, r.event as u8, r.weight)?;
    }
    Ok(())
}
