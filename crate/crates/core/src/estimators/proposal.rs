//! Sampling distributions over the discrete input space
//! (subject-speed bin × action-grid cell).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{ActionGrid, CutInAction, MixedPolicyParams, RationalityVector, SubjectState};
use crate::scenario::InputSpace;

/// Audit record of how a proposal was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProposalDescriptor {
    Nominal { params: MixedPolicyParams },
    BoundedRational { lambda: RationalityVector },
    CrossEntropy { v_lc: TruncatedNormal, gap: TruncatedNormal },
    Optimal { p_eps: f64 },
}

/// Normal distribution truncated to `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub std: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !(std > 0.0 && std.is_finite()) {
            return Err(Error::Config(format!("truncated normal needs finite mean and std > 0, got ({mean}, {std})")));
        }
        Ok(Self { mean, std })
    }

    fn log_kernel(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        -0.5 * z * z
    }
}

/// Joint distribution over speed bins and grid cells:
/// `q(s, c) = speed_probs[s] · conditionals[s].mass[c]`.
#[derive(Debug, Clone)]
pub struct GridProposal {
    pub descriptor: ProposalDescriptor,
    speeds: Vec<f64>,
    speed_probs: Vec<f64>,
    speed_cdf: Vec<f64>,
    conditionals: Vec<ActionGrid>,
}

impl GridProposal {
    pub fn new(
        descriptor: ProposalDescriptor,
        speeds: Vec<f64>,
        speed_probs: Vec<f64>,
        conditionals: Vec<ActionGrid>,
    ) -> Result<Self> {
        if speeds.is_empty() || speeds.len() != speed_probs.len() || speeds.len() != conditionals.len() {
            return Err(Error::Config("proposal needs one conditional grid per speed bin".into()));
        }
        let total: f64 = speed_probs.iter().sum();
        if speed_probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || !(total > 0.0) {
            return Err(Error::DegenerateGrid("speed probabilities must be >= 0 with positive sum".into()));
        }
        let speed_probs: Vec<f64> = speed_probs.iter().map(|p| p / total).collect();
        let mut acc = 0.0;
        let mut speed_cdf: Vec<f64> = speed_probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let last = speed_probs.iter().rposition(|&p| p > 0.0).expect("positive total");
        for c in &mut speed_cdf[last..] {
            *c = 1.0;
        }
        Ok(Self { descriptor, speeds, speed_probs, speed_cdf, conditionals })
    }

    /// Mixed-behavior policy playing the role of the nominal density.
    pub fn nominal(space: &InputSpace, params: &MixedPolicyParams) -> Result<Self> {
        Self::new(
            ProposalDescriptor::Nominal { params: *params },
            space.speeds.values.clone(),
            space.speed_probs.clone(),
            space.mixed_grids(params)?,
        )
    }

    /// Λ-policy proposal; the subject-speed marginal is not under the target's
    /// control and stays nominal.
    pub fn bounded_rational(space: &InputSpace, lam: &RationalityVector) -> Result<Self> {
        Self::new(
            ProposalDescriptor::BoundedRational { lambda: *lam },
            space.speeds.values.clone(),
            space.speed_probs.clone(),
            space.mixture_grids(lam)?,
        )
    }

    /// Product of truncated normals over `(v_lc, gap)` discretized at cell
    /// centers, independent of the subject speed. Cell masses are floored so
    /// the support is the whole grid.
    pub fn cross_entropy(space: &InputSpace, v_lc: TruncatedNormal, gap: TruncatedNormal) -> Result<Self> {
        let table = &space.tables()[0];
        let (va, ga) = (table.v_axis(), table.gap_axis());
        let lv: Vec<f64> = va.centers().iter().map(|&v| v_lc.log_kernel(v)).collect();
        let lg: Vec<f64> = ga.centers().iter().map(|&g| gap.log_kernel(g)).collect();
        let top = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + lg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut w = Vec::with_capacity(va.n * ga.n);
        for &a in &lv {
            for &b in &lg {
                w.push((a + b - top).exp().max(CE_MASS_FLOOR));
            }
        }
        let grid = ActionGrid::from_weights(va, ga, w)?;
        Self::new(
            ProposalDescriptor::CrossEntropy { v_lc, gap },
            space.speeds.values.clone(),
            space.speed_probs.clone(),
            vec![grid; space.speeds.len()],
        )
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn speed_probs(&self) -> &[f64] {
        &self.speed_probs
    }

    pub fn conditional(&self, s: usize) -> &ActionGrid {
        &self.conditionals[s]
    }

    pub fn num_speeds(&self) -> usize {
        self.speeds.len()
    }

    /// Probability mass of speed bin `s` and cell `cell`.
    pub fn mass(&self, s: usize, cell: usize) -> f64 {
        self.speed_probs[s] * self.conditionals[s].mass()[cell]
    }

    /// Mass of the cell containing `(state, action)`; zero off the grid or
    /// for a speed that is not one of the bins.
    pub fn density(&self, state: &SubjectState, action: &CutInAction) -> f64 {
        let Some(s) = self.speeds.iter().position(|&v| v == state.v_s) else {
            return 0.0;
        };
        self.conditionals[s].cell_of(action).map_or(0.0, |c| self.mass(s, c))
    }

    /// Draw `(speed bin, cell)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let u: f64 = rng.gen();
        let s = self.speed_cdf.partition_point(|&c| c <= u).min(self.speeds.len() - 1);
        (s, self.conditionals[s].sample_cell(rng))
    }

    /// Checks that both proposals live on the same input space.
    pub fn check_compatible(&self, other: &GridProposal) -> Result<()> {
        let same = self.speeds == other.speeds
            && self
                .conditionals
                .iter()
                .zip(&other.conditionals)
                .all(|(a, b)| a.v_axis() == b.v_axis() && a.gap_axis() == b.gap_axis());
        if same {
            Ok(())
        } else {
            Err(Error::Config("nominal and proposal are defined on different grids".into()))
        }
    }

    /// Mass-weighted mean and standard deviation of `(v_lc, gap)`.
    pub fn action_moments(&self) -> ([f64; 2], [f64; 2]) {
        let mut m = [0.0; 2];
        let mut m2 = [0.0; 2];
        for (s, grid) in self.conditionals.iter().enumerate() {
            let ps = self.speed_probs[s];
            for (c, &q) in grid.mass().iter().enumerate() {
                let a = grid.center(c);
                for (k, x) in [a.v_lc, a.gap].into_iter().enumerate() {
                    m[k] += ps * q * x;
                    m2[k] += ps * q * x * x;
                }
            }
        }
        let sd = [0, 1].map(|k| (m2[k] - m[k] * m[k]).max(0.0).sqrt());
        (m, sd)
    }
}

/// Relative floor applied to discretized cross-entropy cell masses.
pub const CE_MASS_FLOOR: f64 = 1e-300;
