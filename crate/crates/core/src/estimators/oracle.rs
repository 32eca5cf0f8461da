//! Exhaustive evaluation of the event indicator over the input space.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::policy::SubjectState;
use crate::scenario::{rollout_min_moving_gap, InputSpace, Scene};

use super::proposal::{GridProposal, ProposalDescriptor};

/// Event indicator at every (speed bin, cell center).
///
/// Exact for a deterministic follower; with imperfection each cell uses one
/// fixed rollout seed.
#[derive(Debug, Clone)]
pub struct EventTable {
    events: Vec<Vec<bool>>,
}

impl EventTable {
    pub fn compute(scene: &Scene, space: &InputSpace) -> Result<Self> {
        if scene.scenario.follower.sigma_imperfection > 0.0 {
            log::warn!("event table with a stochastic follower uses one rollout per cell");
        }
        let events = space
            .speeds
            .values
            .iter()
            .enumerate()
            .map(|(s, &v_s)| {
                let table = &space.tables()[s];
                let (va, ga) = (table.v_axis(), table.gap_axis());
                (0..va.n * ga.n)
                    .into_par_iter()
                    .map(|c| {
                        let a = crate::policy::CutInAction { v_lc: va.center(c / ga.n), gap: ga.center(c % ga.n) };
                        let seed = crate::rng::derive_seed(0, "oracle", (s * va.n * ga.n + c) as u64);
                        rollout_min_moving_gap(&SubjectState { v_s }, &a, &scene.scenario, &scene.rare_event, seed)
                            .is_ok_and(|g| scene.is_event_severity(g))
                    })
                    .collect()
            })
            .collect();
        Ok(Self { events })
    }

    pub fn is_event(&self, s: usize, cell: usize) -> bool {
        self.events[s][cell]
    }

    pub fn count(&self) -> usize {
        self.events.iter().map(|r| r.iter().filter(|&&e| e).count()).sum()
    }

    /// `Σ I_ε · q` over the whole input space.
    pub fn probability(&self, q: &GridProposal) -> f64 {
        let mut p = 0.0;
        for (s, row) in self.events.iter().enumerate() {
            let ps = q.speed_probs()[s];
            let grid = q.conditional(s);
            let inner: f64 = row.iter().zip(grid.mass()).filter(|(e, _)| **e).map(|(_, m)| m).sum();
            p += ps * inner;
        }
        p
    }

    /// The zero-variance proposal `I_ε · p / p_ε`.
    pub fn optimal_proposal(&self, nominal: &GridProposal) -> Result<GridProposal> {
        let p_eps = self.probability(nominal);
        if !(p_eps > 0.0) {
            return Err(Error::AbsoluteContinuity("no event has positive nominal mass".into()));
        }
        let mut speed_probs = Vec::with_capacity(self.events.len());
        let mut conds = Vec::with_capacity(self.events.len());
        for (s, row) in self.events.iter().enumerate() {
            let grid = nominal.conditional(s);
            let w: Vec<f64> = row.iter().zip(grid.mass()).map(|(&e, &m)| if e { m } else { 0.0 }).collect();
            let inner: f64 = w.iter().sum();
            speed_probs.push(nominal.speed_probs()[s] * inner);
            if inner > 0.0 {
                conds.push(crate::policy::ActionGrid::from_weights(*grid.v_axis(), *grid.gap_axis(), w)?);
            } else {
                conds.push(grid.clone());
            }
        }
        GridProposal::new(ProposalDescriptor::Optimal { p_eps }, nominal.speeds().to_vec(), speed_probs, conds)
    }
}

/// `p_ε` of `nominal` by exhaustive summation.
pub fn grid_oracle(scene: &Scene, space: &InputSpace, nominal: &GridProposal) -> Result<f64> {
    Ok(EventTable::compute(scene, space)?.probability(nominal))
}
