//! Cut-in rollouts.
//!
//! The target vehicle ramps its speed linearly to `v_lc` while changing lanes
//! and crosses the lane boundary at `lane_change_duration` with exactly the
//! sampled gap. From then on it holds `v_lc` and the subject vehicle follows it
//! with a Krauss controller.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{
    ActionGrid, CutInAction, GridSpec, MixedPolicyParams, RationalityVector, SubjectState,
    UtilitySpec, UtilityTable, DEFAULT_LAMBDA_MAX,
};
use crate::rng;

pub const DEFAULT_V_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KraussParams {
    /// Maximum acceleration, m/s².
    pub a_max: f64,
    /// Comfortable deceleration, m/s².
    pub b_max: f64,
    /// Reaction time, s.
    pub tau_react: f64,
    /// Driver imperfection in [0, 1].
    pub sigma_imperfection: f64,
}

impl Default for KraussParams {
    fn default() -> Self {
        Self { a_max: 2.0, b_max: 2.0, tau_react: 1.0, sigma_imperfection: 0.2 }
    }
}

impl KraussParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_max > 0.0 && self.b_max > 0.0) {
            return Err(Error::Config("krauss a_max and b_max must be > 0".into()));
        }
        if !(self.tau_react >= 0.0) {
            return Err(Error::Config("krauss tau_react must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.sigma_imperfection) {
            return Err(Error::Config("krauss sigma_imperfection must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Discrete distribution of subject speeds: bin centers with weights.
///
/// With `bin_width > 0` a jittered draw is uniform inside the chosen bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedMarginal {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub bin_width: f64,
}

impl SpeedMarginal {
    pub fn new(values: Vec<f64>, weights: Vec<f64>, bin_width: f64) -> Result<Self> {
        let m = Self { values, weights, bin_width };
        m.validate()?;
        Ok(m.normalized())
    }

    pub fn point(v: f64) -> Self {
        Self { values: vec![v], weights: vec![1.0], bin_width: 0.0 }
    }

    /// `bins` equal-weight bins covering `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo) || bins == 0 {
            return Err(Error::Config(format!("invalid speed range [{lo}, {hi}] with {bins} bins")));
        }
        let w = (hi - lo) / bins as f64;
        let values = (0..bins).map(|i| lo + (i as f64 + 0.5) * w).collect();
        Self::new(values, vec![1.0; bins], w)
    }

    /// Equal-width histogram of observed speeds; empty bins are dropped.
    pub fn histogram(data: &[f64], bins: usize) -> Result<Self> {
        if data.is_empty() || bins == 0 {
            return Err(Error::Data("speed histogram needs data and at least one bin".into()));
        }
        let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 {
            return Err(Error::Data("speed histogram needs finite nonnegative data".into()));
        }
        if hi - lo < 1e-9 {
            return Ok(Self::point(lo));
        }
        let w = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &v in data {
            let i = (((v - lo) / w).floor() as usize).min(bins - 1);
            counts[i] += 1;
        }
        let (values, weights) = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (lo + (i as f64 + 0.5) * w, c as f64))
            .unzip();
        Self::new(values, weights, w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.values.len() != self.weights.len() {
            return Err(Error::Config("speed marginal needs matching nonempty values/weights".into()));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("speed marginal values must be finite and >= 0".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) || self.weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("speed marginal weights must be >= 0 with positive sum".into()));
        }
        if !(self.bin_width >= 0.0 && self.bin_width.is_finite()) {
            return Err(Error::Config("speed marginal bin_width must be >= 0".into()));
        }
        if self.values.iter().any(|&v| v - 0.5 * self.bin_width < -1e-12) {
            return Err(Error::Config("speed marginal bins extend below zero".into()));
        }
        Ok(())
    }

    fn normalized(mut self) -> Self {
        let s: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= s;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Probability of each bin.
    pub fn probabilities(&self) -> Vec<f64> {
        let s: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / s).collect()
    }

    pub fn max_speed(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max) + 0.5 * self.bin_width
    }

    /// Draw a bin index and a speed.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, jitter: bool) -> (usize, f64) {
        let total: f64 = self.weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut idx = self.weights.len() - 1;
        for (i, &w) in self.weights.iter().enumerate() {
            if u < w {
                idx = i;
                break;
            }
            u -= w;
        }
        let mut v = self.values[idx];
        if jitter && self.bin_width > 0.0 {
            v += (rng.gen::<f64>() - 0.5) * self.bin_width;
            v = v.max(0.0);
        }
        (idx, v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Simulation step, s.
    pub dt: f64,
    /// Rollout duration, s.
    pub horizon: f64,
    /// Time from maneuver start to lane-boundary crossing, s.
    pub lane_change_duration: f64,
    /// Road speed limit, m/s.
    pub v_limit: f64,
    /// Vehicle length used to turn positions into gaps, m.
    pub vehicle_length: f64,
    pub follower: KraussParams,
    /// Distribution of the subject speed at maneuver start.
    pub subject_speed_sampler: SpeedMarginal,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            horizon: 5.0,
            lane_change_duration: 2.0,
            v_limit: DEFAULT_V_LIMIT,
            vehicle_length: 4.5,
            follower: KraussParams::default(),
            subject_speed_sampler: SpeedMarginal::uniform(15.0, 35.0, 8).expect("valid default"),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.lane_change_duration > 0.0 && self.horizon >= self.lane_change_duration) {
            return Err(Error::Config("need horizon >= lane_change_duration > 0".into()));
        }
        for (name, x) in [("lane_change_duration", self.lane_change_duration), ("horizon", self.horizon)] {
            let k = x / self.dt;
            if (k - k.round()).abs() > 1e-6 {
                return Err(Error::Config(format!("{name} must be a multiple of dt")));
            }
        }
        if !(self.v_limit > 0.0) || !(self.vehicle_length >= 0.0) {
            return Err(Error::Config("v_limit must be > 0 and vehicle_length >= 0".into()));
        }
        self.follower.validate()?;
        self.subject_speed_sampler.validate()?;
        if self.subject_speed_sampler.max_speed() > 1.5 * self.v_limit + 1e-9 {
            return Err(Error::Config("subject speeds must stay within 1.5 x v_limit".into()));
        }
        Ok(())
    }

    fn steps(&self) -> (usize, usize) {
        let crossing = (self.lane_change_duration / self.dt).round() as usize;
        let total = (self.horizon / self.dt).round() as usize;
        (crossing, total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Longitudinal front position, m.
    pub pos: f64,
    /// Speed, m/s.
    pub vel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub subject: Vec<VehicleState>,
    pub target: Vec<VehicleState>,
    pub gap_series: Vec<f64>,
    /// Step at which the target crosses into the subject's lane.
    pub crossing_index: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `t,subject_pos,subject_vel,target_pos,target_vel,gap`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,subject_pos,subject_vel,target_pos,target_vel,gap")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.times[k],
                self.subject[k].pos,
                self.subject[k].vel,
                self.target[k].pos,
                self.target[k].vel,
                self.gap_series[k]
            )?;
        }
        Ok(())
    }
}

/// Near-crash definition: gap at or below `gap_threshold` while the subject
/// is moving faster than `stopped_speed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RareEventSpec {
    pub gap_threshold: f64,
    pub stopped_speed: f64,
}

impl Default for RareEventSpec {
    fn default() -> Self {
        Self { gap_threshold: 0.01, stopped_speed: 0.1 }
    }
}

impl RareEventSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_threshold >= 0.0 && self.stopped_speed >= 0.0) {
            return Err(Error::Config("rare-event thresholds must be >= 0".into()));
        }
        Ok(())
    }
}

/// Krauss safe speed, floored at zero.
pub fn krauss_safe_speed(leader: &VehicleState, follower: &VehicleState, gap: f64, params: &KraussParams) -> f64 {
    let vl = leader.vel;
    let denom = (vl + follower.vel) / (2.0 * params.b_max) + params.tau_react;
    let v = if denom > 0.0 { vl + (gap - vl * params.tau_react) / denom } else { vl };
    v.max(0.0)
}

/// One follower step. `xi` is the U(0,1) imperfection draw.
pub fn step_follower(subject: &VehicleState, target: &VehicleState, cfg: &ScenarioConfig, xi: f64) -> VehicleState {
    let p = &cfg.follower;
    let gap = target.pos - subject.pos - cfg.vehicle_length;
    let v_safe = krauss_safe_speed(target, subject, gap, p);
    let v_des = cfg.v_limit.min(subject.vel + p.a_max * cfg.dt).min(v_safe);
    let v_next = (v_des - p.sigma_imperfection * p.a_max * cfg.dt * xi).max(0.0);
    VehicleState { pos: subject.pos + 0.5 * (subject.vel + v_next) * cfg.dt, vel: v_next }
}

/// Drive the two-phase simulation, reporting every step to `visit` as
/// `(step, time, subject, target)`.
fn simulate(
    state: &SubjectState,
    action: &CutInAction,
    cfg: &ScenarioConfig,
    seed: u64,
    mut visit: impl FnMut(usize, f64, &VehicleState, &VehicleState),
) -> Result<usize> {
    let (crossing, total) = cfg.steps();
    let dt = cfg.dt;
    let lc = crossing as f64 * dt;
    let (vs, vlc, len) = (state.v_s, action.v_lc, cfg.vehicle_length);
    let gap0 = action.gap + lc * (vs - vlc) / 2.0;
    if gap0 < 0.0 {
        return Err(Error::InfeasibleScenario(format!(
            "initial gap {gap0:.3} m < 0 for v_s={vs}, v_lc={vlc}, gap={}",
            action.gap
        )));
    }
    // Phase 1: subject cruises, target ramps its speed towards v_lc.
    let mut subject = VehicleState { pos: 0.0, vel: vs };
    let mut target = VehicleState { pos: 0.0, vel: vs };
    for k in 0..=crossing {
        let t = k as f64 * dt;
        subject = VehicleState { pos: vs * t, vel: vs };
        let gap = action.gap + (vs - vlc) * (lc * lc - t * t) / (2.0 * lc);
        target = VehicleState { pos: subject.pos + len + gap, vel: vs + (vlc - vs) * t / lc };
        visit(k, t, &subject, &target);
    }
    target.vel = vlc;
    // Phase 2: subject follows the target that holds v_lc.
    let mut rng = (cfg.follower.sigma_imperfection > 0.0).then(|| rng::stream(seed, "follower", 0));
    for k in crossing + 1..=total {
        let xi = rng.as_mut().map_or(0.0, |r| r.gen::<f64>());
        subject = step_follower(&subject, &target, cfg, xi);
        target.pos += vlc * dt;
        visit(k, k as f64 * dt, &subject, &target);
    }
    Ok(crossing)
}

/// Full trajectory of one cut-in.
pub fn rollout(state: &SubjectState, action: &CutInAction, cfg: &ScenarioConfig, seed: u64) -> Result<Trajectory> {
    let (_, total) = cfg.steps();
    let mut traj = Trajectory {
        times: Vec::with_capacity(total + 1),
        subject: Vec::with_capacity(total + 1),
        target: Vec::with_capacity(total + 1),
        gap_series: Vec::with_capacity(total + 1),
        crossing_index: 0,
    };
    let len = cfg.vehicle_length;
    traj.crossing_index = simulate(state, action, cfg, seed, |_, t, s, g| {
        traj.times.push(t);
        traj.subject.push(*s);
        traj.target.push(*g);
        traj.gap_series.push(g.pos - s.pos - len);
    })?;
    Ok(traj)
}

/// Smallest gap after the lane crossing among steps where the subject is
/// moving; `+inf` if it never moves.
pub fn min_moving_gap(traj: &Trajectory, spec: &RareEventSpec) -> f64 {
    (traj.crossing_index..traj.len())
        .filter(|&k| traj.subject[k].vel > spec.stopped_speed)
        .map(|k| traj.gap_series[k])
        .fold(f64::INFINITY, f64::min)
}

/// Near-crash indicator over the part of the trajectory after lane crossing.
pub fn is_rare_event(traj: &Trajectory, spec: &RareEventSpec) -> bool {
    min_moving_gap(traj, spec) <= spec.gap_threshold
}

/// Severity of a rollout without materializing the trajectory.
pub fn rollout_min_moving_gap(
    state: &SubjectState,
    action: &CutInAction,
    cfg: &ScenarioConfig,
    spec: &RareEventSpec,
    seed: u64,
) -> Result<f64> {
    let (crossing, _) = cfg.steps();
    let len = cfg.vehicle_length;
    let mut min_gap = f64::INFINITY;
    simulate(state, action, cfg, seed, |k, _, s, g| {
        if k >= crossing && s.vel > spec.stopped_speed {
            min_gap = min_gap.min(g.pos - s.pos - len);
        }
    })?;
    Ok(min_gap)
}

/// Everything that defines the sampled input space and the event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scenario: ScenarioConfig,
    pub utility: UtilitySpec,
    pub grid: GridSpec,
    pub rare_event: RareEventSpec,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
}

fn default_lambda_max() -> f64 {
    DEFAULT_LAMBDA_MAX
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            utility: UtilitySpec::default(),
            grid: GridSpec::default(),
            rare_event: RareEventSpec::default(),
            lambda_max: DEFAULT_LAMBDA_MAX,
        }
    }
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.utility.validate()?;
        self.grid.validate()?;
        self.rare_event.validate()?;
        if !(self.lambda_max > 0.0 && self.lambda_max <= 350.0) {
            return Err(Error::Config(format!("lambda_max must lie in (0, 350], got {}", self.lambda_max)));
        }
        Ok(())
    }

    /// Severity (minimum moving gap) of one sample; infeasible geometry
    /// yields `+inf`, i.e. a non-event.
    pub fn severity(&self, v_s: f64, action: &CutInAction, seed: u64) -> f64 {
        self.checked_severity(v_s, action, seed).0
    }

    /// Severity together with a feasibility flag.
    pub fn checked_severity(&self, v_s: f64, action: &CutInAction, seed: u64) -> (f64, bool) {
        let state = SubjectState { v_s };
        match rollout_min_moving_gap(&state, action, &self.scenario, &self.rare_event, seed) {
            Ok(g) => (g, true),
            Err(e) => {
                log::debug!("counted as non-event: {e}");
                (f64::INFINITY, false)
            }
        }
    }

    pub fn is_event_severity(&self, severity: f64) -> bool {
        severity <= self.rare_event.gap_threshold
    }
}

/// Subject-speed bins with per-bin utility tables over the action grid.
#[derive(Debug, Clone)]
pub struct InputSpace {
    pub speeds: SpeedMarginal,
    pub speed_probs: Vec<f64>,
    tables: Vec<UtilityTable>,
}

impl InputSpace {
    pub fn new(scene: &Scene) -> Result<Self> {
        scene.validate()?;
        let speeds = scene.scenario.subject_speed_sampler.clone();
        let tables = speeds
            .values
            .iter()
            .map(|&v| UtilityTable::new(v, &scene.grid, &scene.utility))
            .collect::<Result<Vec<_>>>()?;
        let speed_probs = speeds.probabilities();
        Ok(Self { speeds, speed_probs, tables })
    }

    pub fn tables(&self) -> &[UtilityTable] {
        &self.tables
    }

    pub fn mixture_grids(&self, lam: &RationalityVector) -> Result<Vec<ActionGrid>> {
        self.tables.iter().map(|t| t.mixture_grid(lam)).collect()
    }

    pub fn mixed_grids(&self, params: &MixedPolicyParams) -> Result<Vec<ActionGrid>> {
        self.tables.iter().map(|t| t.mixed_grid(params)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneStats {
    pub rate: f64,
    pub events: usize,
    pub infeasible: usize,
    pub n: usize,
}

/// Fraction of `n` rollouts under the Λ-policy that end in a near-crash.
pub fn simulate_scene(lam: &RationalityVector, n: usize, scene: &Scene, space: &InputSpace, seed: u64) -> Result<SceneStats> {
    if n == 0 {
        return Err(Error::Config("simulate_scene needs n >= 1".into()));
    }
    let grids = space.mixture_grids(lam)?;
    let results: Vec<(bool, bool)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, "scene", i);
            let (s, v_s) = space.speeds.sample(&mut r, false);
            let action = crate::policy::sample_action(&grids[s], &mut r, false);
            let state = SubjectState { v_s };
            match rollout_min_moving_gap(&state, &action, &scene.scenario, &scene.rare_event, rng::derive_seed(seed, "scene-rollout", i)) {
                Ok(g) => (scene.is_event_severity(g), false),
                Err(e) => {
                    log::debug!("simulate_scene sample {i}: {e}");
                    (false, true)
                }
            }
        })
        .collect();
    let events = results.iter().filter(|r| r.0).count();
    let infeasible = results.iter().filter(|r| r.1).count();
    Ok(SceneStats { rate: events as f64 / n as f64, events, infeasible, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn deterministic() -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.follower.sigma_imperfection = 0.0;
        c
    }

    #[test]
    fn safe_speed_examples() {
        let p = KraussParams { a_max: 2.0, b_max: 2.0, tau_react: 1.0, sigma_imperfection: 0.0 };
        let leader = VehicleState { pos: 0.0, vel: 12.0 };
        let follower = VehicleState { pos: 0.0, vel: 20.0 };
        assert_abs_diff_eq!(krauss_safe_speed(&leader, &follower, 12.0, &p), 12.0, epsilon = 1e-12);
        let still = VehicleState { pos: 0.0, vel: 0.0 };
        assert_abs_diff_eq!(krauss_safe_speed(&still, &still, 10.0, &p), 10.0, epsilon = 1e-12);
        assert_eq!(krauss_safe_speed(&still, &follower, 0.0, &p), 0.0);
    }

    #[test]
    fn free_flow_keeps_speed_limit() {
        let cfg = deterministic();
        let s = VehicleState { pos: 0.0, vel: cfg.v_limit };
        let t = VehicleState { pos: 1e4, vel: cfg.v_limit };
        let next = step_follower(&s, &t, &cfg, 0.7);
        assert_eq!(next.vel, cfg.v_limit);
    }

    #[test]
    fn braking_engages_below_reaction_gap() {
        let cfg = deterministic();
        // v = 20, leader at 15, gap 10 < v * tau = 20:
        // v_safe = 15 + (10 - 15) / (35/4 + 1) = 14.4872
        let s = VehicleState { pos: 0.0, vel: 20.0 };
        let t = VehicleState { pos: 10.0 + cfg.vehicle_length, vel: 15.0 };
        let next = step_follower(&s, &t, &cfg, 0.0);
        assert_abs_diff_eq!(next.vel, 15.0 - 5.0 / 9.75, epsilon = 1e-12);
        assert!(next.vel < s.vel);
        assert_abs_diff_eq!(next.pos, 0.5 * (20.0 + next.vel) * cfg.dt, epsilon = 1e-12);
    }

    #[test]
    fn crossing_realizes_action() {
        let cfg = deterministic();
        let st = SubjectState::new(25.0).unwrap();
        let a = CutInAction::new(18.0, 7.5).unwrap();
        let tr = rollout(&st, &a, &cfg, 1).unwrap();
        let c = tr.crossing_index;
        assert_eq!(c, 20);
        assert_abs_diff_eq!(tr.gap_series[c], 7.5, epsilon = 1e-9);
        assert_abs_diff_eq!(tr.target[c].vel, 18.0, epsilon = 1e-12);
        assert_eq!(tr.len(), 51);
        for k in 0..tr.len() {
            assert_abs_diff_eq!(
                tr.gap_series[k],
                tr.target[k].pos - tr.subject[k].pos - cfg.vehicle_length,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn matched_speeds_hold_gap() {
        let cfg = deterministic();
        let st = SubjectState::new(cfg.v_limit).unwrap();
        let a = CutInAction::new(cfg.v_limit, 40.0).unwrap();
        let tr = rollout(&st, &a, &cfg, 0).unwrap();
        for k in tr.crossing_index..tr.len() {
            assert_abs_diff_eq!(tr.gap_series[k], 40.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn closing_reduces_gap() {
        let cfg = deterministic();
        let st = SubjectState::new(30.0).unwrap();
        let a = CutInAction::new(10.0, 8.0).unwrap();
        let tr = rollout(&st, &a, &cfg, 0).unwrap();
        let min = tr.gap_series[tr.crossing_index..].iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min < 8.0);
    }

    #[test]
    fn infeasible_geometry_detected() {
        let cfg = deterministic();
        let st = SubjectState::new(5.0).unwrap();
        let a = CutInAction::new(40.0, 1.0).unwrap();
        assert!(matches!(rollout(&st, &a, &cfg, 0), Err(Error::InfeasibleScenario(_))));
    }

    #[test]
    fn rollout_is_deterministic() {
        let cfg = ScenarioConfig::default();
        let st = SubjectState::new(28.0).unwrap();
        let a = CutInAction::new(20.0, 6.0).unwrap();
        let x = rollout(&st, &a, &cfg, 42).unwrap();
        let y = rollout(&st, &a, &cfg, 42).unwrap();
        assert_eq!(x, y);
        let z = rollout(&st, &a, &cfg, 43).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn rare_event_predicate() {
        let mk = |gaps: &[f64], vels: &[f64]| Trajectory {
            times: (0..gaps.len()).map(|k| k as f64).collect(),
            subject: vels.iter().map(|&v| VehicleState { pos: 0.0, vel: v }).collect(),
            target: vels.iter().map(|_| VehicleState { pos: 0.0, vel: 0.0 }).collect(),
            gap_series: gaps.to_vec(),
            crossing_index: 0,
        };
        let spec = RareEventSpec::default();
        assert!(!is_rare_event(&mk(&[5.0, 2.0, 1.5], &[10.0, 10.0, 10.0]), &spec));
        assert!(is_rare_event(&mk(&[5.0, 0.005, 1.5], &[10.0, 10.0, 10.0]), &spec));
        assert!(!is_rare_event(&mk(&[5.0, 0.005, 1.5], &[10.0, 0.0, 10.0]), &spec));
    }

    #[test]
    fn fast_path_matches_trajectory() {
        let cfg = ScenarioConfig::default();
        let spec = RareEventSpec { gap_threshold: 0.5, stopped_speed: 0.1 };
        for (vs, vlc, g) in [(30.0, 10.0, 0.4), (25.0, 24.0, 3.0), (20.0, 2.0, 1.0), (33.0, 30.0, 0.1)] {
            let st = SubjectState::new(vs).unwrap();
            let a = CutInAction::new(vlc, g).unwrap();
            let tr = rollout(&st, &a, &cfg, 9).unwrap();
            let fast = rollout_min_moving_gap(&st, &a, &cfg, &spec, 9).unwrap();
            assert_eq!(min_moving_gap(&tr, &spec), fast);
        }
    }

    #[test]
    fn dt_halving_converges() {
        let mut fine = deterministic();
        fine.dt = 0.05;
        let coarse = deterministic();
        let st = SubjectState::new(25.0).unwrap();
        let a = CutInAction::new(20.0, 15.0).unwrap();
        let g1 = *rollout(&st, &a, &coarse, 0).unwrap().gap_series.last().unwrap();
        let g2 = *rollout(&st, &a, &fine, 0).unwrap().gap_series.last().unwrap();
        assert!(((g1 - g2) / g2).abs() < 0.01, "{g1} vs {g2}");
    }

    #[test]
    fn config_validation() {
        let mut c = ScenarioConfig::default();
        c.dt = 0.0;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::default();
        c.horizon = 1.0;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::default();
        c.lane_change_duration = 0.25;
        c.dt = 0.1;
        assert!(c.validate().is_err());
        assert!(ScenarioConfig::default().validate().is_ok());
    }

    #[test]
    fn speed_histogram() {
        let h = SpeedMarginal::histogram(&[1.0, 1.5, 2.0, 9.0], 4).unwrap();
        assert_eq!(h.len(), 2);
        assert_abs_diff_eq!(h.probabilities()[0], 0.75, epsilon = 1e-15);
        let u = SpeedMarginal::uniform(10.0, 20.0, 5).unwrap();
        assert_eq!(u.values, vec![11.0, 13.0, 15.0, 17.0, 19.0]);
        let mut r = rng::stream(0, "t", 0);
        for _ in 0..1000 {
            let (i, v) = u.sample(&mut r, true);
            assert!((v - u.values[i]).abs() <= 1.0);
        }
    }
}
