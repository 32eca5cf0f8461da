//! Utility functions of the cut-in maneuver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State seen by the target vehicle when it starts the maneuver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectState {
    /// Subject vehicle speed at maneuver start, m/s.
    pub v_s: f64,
}

impl SubjectState {
    pub fn new(v_s: f64) -> Result<Self> {
        if !v_s.is_finite() || v_s < 0.0 {
            return Err(Error::Domain(format!("subject speed must be finite and >= 0, got {v_s}")));
        }
        Ok(Self { v_s })
    }
}

/// Decision of the target vehicle: speed at lane crossing and distance gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutInAction {
    /// Target speed when crossing the lane boundary, m/s.
    pub v_lc: f64,
    /// Longitudinal distance gap at lane crossing, m.
    pub gap: f64,
}

impl CutInAction {
    pub fn new(v_lc: f64, gap: f64) -> Result<Self> {
        if !v_lc.is_finite() || v_lc < 0.0 {
            return Err(Error::Domain(format!("v_lc must be finite and >= 0, got {v_lc}")));
        }
        if !gap.is_finite() || gap < 0.0 {
            return Err(Error::Domain(format!("gap must be finite and >= 0, got {gap}")));
        }
        Ok(Self { v_lc, gap })
    }
}

/// Reference values of the three utilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    /// Reference gap, m.
    pub gap_star: f64,
    /// Reference time-to-collision, s.
    pub ttc_star: f64,
    /// Reference speed, m/s.
    pub v_star: f64,
}

impl UtilitySpec {
    pub fn new(gap_star: f64, ttc_star: f64, v_star: f64) -> Result<Self> {
        let spec = Self { gap_star, ttc_star, v_star };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gap_star", self.gap_star), ("ttc_star", self.ttc_star), ("v_star", self.v_star)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!("utility {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for UtilitySpec {
    fn default() -> Self {
        Self { gap_star: 10.0, ttc_star: 4.0, v_star: crate::scenario::DEFAULT_V_LIMIT }
    }
}

/// Standard logistic sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Safety-type utility `S(x - x*) + 0.5 S(x* - x)`, valued in (0.5, 1).
#[inline]
pub(crate) fn safety_utility(x: f64, reference: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    sigmoid(x - reference) + 0.5 * sigmoid(reference - x)
}

/// Gap utility; equals 0.75 at the reference gap.
pub fn utility_gap(gap: f64, spec: &UtilitySpec) -> Result<f64> {
    if !gap.is_finite() || gap < 0.0 {
        return Err(Error::Domain(format!("gap must be finite and >= 0, got {gap}")));
    }
    Ok(safety_utility(gap, spec.gap_star))
}

/// Time-to-collision utility. `ttc = +inf` (no closing speed) maps to 1.
pub fn utility_ttc(ttc: f64, spec: &UtilitySpec) -> Result<f64> {
    if ttc.is_nan() || ttc < 0.0 {
        return Err(Error::Domain(format!("ttc must be >= 0 or +inf, got {ttc}")));
    }
    Ok(safety_utility(ttc, spec.ttc_star))
}

/// Progress utility `S(2v - 2v*) - S(2v* - 2v)`, which is `tanh(v - v*)`.
pub fn utility_progress(v_lc: f64, spec: &UtilitySpec) -> Result<f64> {
    if !v_lc.is_finite() || v_lc < 0.0 {
        return Err(Error::Domain(format!("v_lc must be finite and >= 0, got {v_lc}")));
    }
    Ok((v_lc - spec.v_star).tanh())
}

/// Time-to-collision at lane crossing; `+inf` when the gap is not closing.
pub fn ttc_of(state: &SubjectState, action: &CutInAction) -> f64 {
    ttc_raw(state.v_s, action.v_lc, action.gap)
}

#[inline]
pub(crate) fn ttc_raw(v_s: f64, v_lc: f64, gap: f64) -> f64 {
    if v_s > v_lc {
        gap / (v_s - v_lc)
    } else {
        f64::INFINITY
    }
}

/// The three utility values of an action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Utilities {
    pub gap: f64,
    pub ttc: f64,
    pub progress: f64,
}

impl Utilities {
    pub fn of(state: &SubjectState, action: &CutInAction, spec: &UtilitySpec) -> Result<Self> {
        Ok(Self {
            gap: utility_gap(action.gap, spec)?,
            ttc: utility_ttc(ttc_of(state, action), spec)?,
            progress: utility_progress(action.v_lc, spec)?,
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.gap, self.ttc, self.progress]
    }
}
