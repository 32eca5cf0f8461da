//! Two-level simulated annealing over behavior categories and rationality
//! vectors, maximizing the simulated near-crash rate.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{behavior_category_of, sample_lambda_in_category, BehaviorCategory, RationalityVector};
use crate::rng::{self, StreamRng};
use crate::scenario::{simulate_scene, InputSpace, Scene};

/// Exploration floor added to every category rate before sampling.
pub const EXPLORATION_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaConfig {
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub n_rollouts_per_eval: usize,
    pub t_out_init: f64,
    pub t_inn_init: f64,
    pub cooling_factor: f64,
    pub seed: u64,
    /// Use the acceptance inequalities exactly as printed in the algorithm
    /// listing instead of Metropolis.
    #[serde(default)]
    pub literal_acceptance: bool,
    /// Stop after this many scene evaluations.
    #[serde(default)]
    pub max_evaluations: Option<usize>,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self {
            outer_iters: 40,
            inner_iters: 5,
            n_rollouts_per_eval: 1000,
            t_out_init: 0.01,
            t_inn_init: 0.01,
            cooling_factor: 0.95,
            seed: 0,
            literal_acceptance: false,
            max_evaluations: None,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 || self.n_rollouts_per_eval == 0 {
            return Err(Error::Config("outer_iters and n_rollouts_per_eval must be >= 1".into()));
        }
        if !(self.t_out_init > 0.0 && self.t_inn_init > 0.0) {
            return Err(Error::Config("initial temperatures must be > 0".into()));
        }
        if !(self.cooling_factor > 0.0 && self.cooling_factor < 1.0) {
            return Err(Error::Config(format!("cooling_factor must lie in (0, 1), got {}", self.cooling_factor)));
        }
        if self.max_evaluations == Some(0) {
            return Err(Error::Config("max_evaluations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaTraceRow {
    pub iteration: usize,
    pub bid: BehaviorCategory,
    pub lambda: RationalityVector,
    pub rate: f64,
    pub accepted: bool,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaState {
    pub p_max_per_bid: [f64; 8],
    pub lambda_max_per_bid: [RationalityVector; 8],
    pub best_bid: BehaviorCategory,
    pub trace: Vec<SaTraceRow>,
    pub evaluations: usize,
    /// Set when `max_evaluations` cut the search short.
    pub budget_exhausted: bool,
}

impl SaState {
    /// CSV with columns `iteration,bid,lambda_gap,lambda_ttc,lambda_progress,rate,accepted,temperature`.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,bid,lambda_gap,lambda_ttc,lambda_progress,rate,accepted,temperature")?;
        for r in &self.trace {
            let l = r.lambda.lambdas();
            writeln!(
                w,
                "{},{},{:e},{:e},{:e},{:e},{},{:e}",
                r.iteration, r.bid, l[0], l[1], l[2], r.rate, r.accepted as u8, r.temperature
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SaOutcome {
    pub best_lambda: RationalityVector,
    pub best_bid: BehaviorCategory,
    pub state: SaState,
}

/// One random Λ per category, in category order.
pub fn init_lambda(seed: u64, lambda_max: f64) -> [RationalityVector; 8] {
    let mut r = rng::stream(seed, "sa-init", 0);
    BehaviorCategory::ALL.map(|c| sample_lambda_in_category(c, lambda_max, &mut r))
}

/// Sample a category with probability `(rate + κ) / Σ(rate + κ)`.
pub fn weighted_sample_bid<R: Rng + ?Sized>(rates: &[f64; 8], rng: &mut R) -> BehaviorCategory {
    let w: Vec<f64> = rates.iter().map(|r| r.max(0.0) + EXPLORATION_FLOOR).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return BehaviorCategory::ALL[i];
        }
        u -= wi;
    }
    BehaviorCategory::B8
}

/// Metropolis rule: always accept an improvement, otherwise accept with
/// probability `exp((candidate − incumbent) / T)`.
pub fn sa_accept<R: Rng + ?Sized>(candidate: f64, incumbent: f64, temperature: f64, rng: &mut R) -> bool {
    if candidate > incumbent {
        return true;
    }
    rng.gen::<f64>() < ((candidate - incumbent) / temperature).exp()
}

/// The printed variant: accept when `exp(Δ / T) < u`, or additionally on
/// improvement for the inner loop.
pub fn sa_accept_literal<R: Rng + ?Sized>(candidate: f64, incumbent: f64, temperature: f64, or_improved: bool, rng: &mut R) -> bool {
    ((candidate - incumbent) / temperature).exp() < rng.gen::<f64>() || (or_improved && candidate > incumbent)
}

struct Search<'a> {
    cfg: &'a SaConfig,
    scene: &'a Scene,
    space: &'a InputSpace,
    rng: StreamRng,
    state: SaState,
}

impl Search<'_> {
    fn budget_left(&self) -> bool {
        self.cfg.max_evaluations.is_none_or(|m| self.state.evaluations < m)
    }

    fn evaluate(&mut self, lam: &RationalityVector) -> Result<f64> {
        let seed = rng::derive_seed(self.cfg.seed, "sa-eval", self.state.evaluations as u64);
        self.state.evaluations += 1;
        Ok(simulate_scene(lam, self.cfg.n_rollouts_per_eval, self.scene, self.space, seed)?.rate)
    }

    fn accept(&mut self, candidate: f64, incumbent: f64, t: f64, inner: bool) -> bool {
        if self.cfg.literal_acceptance {
            sa_accept_literal(candidate, incumbent, t, inner, &mut self.rng)
        } else {
            sa_accept(candidate, incumbent, t, &mut self.rng)
        }
    }

    fn record(&mut self, bid: BehaviorCategory, lambda: RationalityVector, rate: f64, accepted: bool, temperature: f64) {
        let iteration = self.state.trace.len();
        self.state.trace.push(SaTraceRow { iteration, bid, lambda, rate, accepted, temperature });
    }

    fn global_best(&self) -> BehaviorCategory {
        let p = &self.state.p_max_per_bid;
        let i = (0..8).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        BehaviorCategory::ALL[i]
    }
}

/// Run the annealing search and return the category and Λ with the highest
/// recorded rate.
pub fn optimize(cfg: &SaConfig, scene: &Scene, space: &InputSpace) -> Result<SaOutcome> {
    cfg.validate()?;
    let init = init_lambda(cfg.seed, scene.lambda_max);
    let mut s = Search {
        cfg,
        scene,
        space,
        rng: rng::stream(cfg.seed, "sa-chain", 0),
        state: SaState {
            p_max_per_bid: [0.0; 8],
            lambda_max_per_bid: init,
            best_bid: BehaviorCategory::B1,
            trace: Vec::new(),
            evaluations: 0,
            budget_exhausted: false,
        },
    };
    for (i, lam) in init.iter().enumerate() {
        let rate = s.evaluate(lam)?;
        s.state.p_max_per_bid[i] = rate;
        s.record(BehaviorCategory::ALL[i], *lam, rate, true, cfg.t_out_init);
    }
    let mut current = s.state.p_max_per_bid;
    let mut current_lambda = init;
    let (mut t_out, mut t_inn) = (cfg.t_out_init, cfg.t_inn_init);

    'outer: for _ in 0..cfg.outer_iters {
        let best = s.global_best();
        let bid = weighted_sample_bid(&s.state.p_max_per_bid, &mut s.rng);
        let b = bid.index();
        if s.accept(s.state.p_max_per_bid[b], s.state.p_max_per_bid[best.index()], t_out, false) {
            for _ in 0..cfg.inner_iters {
                if !s.budget_left() {
                    s.state.budget_exhausted = true;
                    break 'outer;
                }
                let lam = sample_lambda_in_category(bid, scene.lambda_max, &mut s.rng);
                let rate = s.evaluate(&lam)?;
                let accepted = s.accept(rate, current[b], t_inn, true);
                if accepted {
                    current[b] = rate;
                    current_lambda[b] = lam;
                    if rate > s.state.p_max_per_bid[b] {
                        s.state.p_max_per_bid[b] = rate;
                        s.state.lambda_max_per_bid[b] = lam;
                    }
                }
                s.record(bid, lam, rate, accepted, t_inn);
                t_inn *= cfg.cooling_factor;
            }
        }
        t_out *= cfg.cooling_factor;
    }
    log::debug!("final chain states: {current_lambda:?}");
    for (i, lam) in s.state.lambda_max_per_bid.iter().enumerate() {
        debug_assert_eq!(behavior_category_of(lam).ok(), Some(BehaviorCategory::ALL[i]));
    }
    s.state.best_bid = s.global_best();
    Ok(SaOutcome {
        best_lambda: s.state.lambda_max_per_bid[s.state.best_bid.index()],
        best_bid: s.state.best_bid,
        state: s.state,
    })
}
