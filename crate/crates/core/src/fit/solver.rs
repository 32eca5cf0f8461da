use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{BandModel, EmpiricalCdf, Metric};
use super::observations::{Observation, ObservationSet, SpeedBand};
use super::FitConfig;
use crate::error::{Error, Result};
use crate::policy::{BehaviorCategory, MixedPolicyParams};
use crate::rng;
use crate::scenario::SpeedMarginal;
use rand::Rng;

/// Probability levels matched by the fit: 0.05, 0.10, ..., 0.95.
pub const KNOTS: [f64; 19] =
    [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

const START_MAGNITUDE: f64 = 5.0;
const START_ALPHA: (f64, f64) = (0.8, 0.2);

/// Fit of one speed band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandFit {
    pub band: SpeedBand,
    pub n_obs: usize,
    pub params: MixedPolicyParams,
    /// Euclidean norm of the scaled quantile residuals.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the winning start: 0..8 are the category corners B1..B8.
    pub best_start: usize,
    /// Objective after every accepted step of the winning start.
    pub objective_trace: Vec<f64>,
    pub speed_marginal: SpeedMarginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub bands: Vec<BandFit>,
    pub seed: u64,
}

impl FitResult {
    pub fn band(&self, band: SpeedBand) -> Option<&BandFit> {
        self.bands.iter().find(|b| b.band == band)
    }
}

/// Fit every band with at least `min_observations` rows.
pub fn fit_params(obs: &ObservationSet, cfg: &FitConfig, seed: u64) -> Result<FitResult> {
    cfg.validate()?;
    let mut bands = Vec::new();
    for band in SpeedBand::ALL {
        let rows = obs.band(band);
        if rows.len() < cfg.min_observations {
            if !rows.is_empty() {
                log::warn!("skipping band {band}: {} observations < {}", rows.len(), cfg.min_observations);
            }
            continue;
        }
        bands.push(fit_band(band, &rows, cfg, seed)?);
    }
    if bands.is_empty() {
        return Err(Error::Data(format!("no speed band has >= {} observations", cfg.min_observations)));
    }
    Ok(FitResult { bands, seed })
}

struct Problem<'a> {
    model: &'a BandModel,
    targets: [Vec<f64>; 2],
    scales: [f64; 2],
    lo: [f64; 9],
    hi: [f64; 9],
}

impl Problem<'_> {
    /// Parameters are `ln λ⁺`, `ln |λ⁻|` and `α`.
    fn params(z: &[f64]) -> MixedPolicyParams {
        MixedPolicyParams {
            lambda_plus: [z[0].exp(), z[1].exp(), z[2].exp()],
            lambda_minus: [-z[3].exp(), -z[4].exp(), -z[5].exp()],
            alpha: [z[6], z[7], z[8]],
        }
    }

    fn encode(p: &MixedPolicyParams) -> [f64; 9] {
        let mut z = [0.0; 9];
        for i in 0..3 {
            z[i] = p.lambda_plus[i].ln();
            z[3 + i] = (-p.lambda_minus[i]).ln();
            z[6 + i] = p.alpha[i];
        }
        z
    }

    fn clamp(&self, z: &mut [f64]) {
        for (i, v) in z.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    fn residuals(&self, z: &[f64]) -> Result<DVector<f64>> {
        let m = self.model.marginals(&Self::params(z))?;
        let mut r = DVector::zeros(2 * KNOTS.len());
        for (mi, metric) in Metric::ALL.iter().enumerate() {
            for (k, &q) in KNOTS.iter().enumerate() {
                r[mi * KNOTS.len() + k] = (m.quantile(*metric, q) - self.targets[mi][k]) / self.scales[mi];
            }
        }
        Ok(r)
    }

    fn jacobian(&self, z: &[f64], r0: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(r0.len(), 9);
        for j in 0..9 {
            let h = if j < 6 { 1e-3 } else { 1e-4 };
            let h = if z[j] + h > self.hi[j] { -h } else { h };
            let mut zp = z.to_vec();
            zp[j] += h;
            let rp = self.residuals(&zp)?;
            jac.set_column(j, &((rp - r0) / h));
        }
        Ok(jac)
    }
}

struct Run {
    z: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn solve(problem: &Problem, start: &[f64; 9], max_iters: usize) -> Result<Run> {
    let mut z = start.to_vec();
    problem.clamp(&mut z);
    let mut r = problem.residuals(&z)?;
    let mut f = r.norm_squared();
    let mut trace = vec![f];
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let jac = problem.jacobian(&z, &r)?;
        let g = jac.transpose() * &r;
        // Variables pinned at a bound with the gradient pointing outward stay fixed.
        let free: Vec<usize> = (0..9)
            .filter(|&j| {
                let at_lo = z[j] <= problem.lo[j] + 1e-12 && g[j] > 0.0;
                let at_hi = z[j] >= problem.hi[j] - 1e-12 && g[j] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        if free.is_empty() || free.iter().map(|&j| g[j].abs()).fold(0.0, f64::max) < 1e-12 {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let mut improved = false;
        while mu < 1e10 {
            let k = free.len();
            let mut a = DMatrix::zeros(k, k);
            let mut b = DVector::zeros(k);
            for (p, &i) in free.iter().enumerate() {
                b[p] = -g[i];
                for (q, &j) in free.iter().enumerate() {
                    a[(p, q)] = jtj[(i, j)];
                }
                a[(p, p)] += mu * (jtj[(i, i)] + 1e-9);
            }
            let step = match a.cholesky() {
                Some(c) => c.solve(&b),
                None => {
                    mu *= 4.0;
                    continue;
                }
            };
            let mut zn = z.clone();
            for (p, &i) in free.iter().enumerate() {
                zn[i] += step[p];
            }
            problem.clamp(&mut zn);
            let rn = problem.residuals(&zn)?;
            let fn_ = rn.norm_squared();
            if fn_ < f {
                let gain = f - fn_;
                let moved = zn.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                z = zn;
                r = rn;
                f = fn_;
                trace.push(f);
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                if gain <= 1e-12 * (1.0 + f) || moved < 1e-10 {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    Ok(Run { z, objective: f, iterations, converged, trace })
}

fn corner_start(cat: BehaviorCategory) -> MixedPolicyParams {
    let alpha = cat.signs().map(|s| if s { START_ALPHA.0 } else { START_ALPHA.1 });
    MixedPolicyParams { lambda_plus: [START_MAGNITUDE; 3], lambda_minus: [-START_MAGNITUDE; 3], alpha }
}

/// Quantile-matching least squares for one band, multistarted from the
/// eight category corners (plus seeded random starts).
pub fn fit_band(band: SpeedBand, rows: &[Observation], cfg: &FitConfig, seed: u64) -> Result<BandFit> {
    cfg.validate()?;
    if rows.len() < cfg.min_observations {
        return Err(Error::Data(format!("band {band} has {} observations, need {}", rows.len(), cfg.min_observations)));
    }
    let speeds: Vec<f64> = rows.iter().map(|o| o.v_s).collect();
    let model = BandModel::from_speeds(cfg, &speeds)?;
    let ttc: Vec<f64> = rows.iter().map(|o| o.ttc.min(cfg.ttc_cap)).collect();
    let gap: Vec<f64> = rows.iter().map(|o| o.gap).collect();
    let mut targets: [Vec<f64>; 2] = Default::default();
    let mut scales = [1.0; 2];
    for (mi, values) in [ttc, gap].iter().enumerate() {
        let e = EmpiricalCdf::new(values)?;
        targets[mi] = KNOTS.iter().map(|&q| e.quantile(q)).collect();
        scales[mi] = (targets[mi][KNOTS.len() - 1] - targets[mi][0]).max(1e-3);
    }
    let (lmin, lmax) = (cfg.lambda_min_abs.ln(), cfg.lambda_max.ln());
    let problem = Problem {
        model: &model,
        targets,
        scales,
        lo: [lmin, lmin, lmin, lmin, lmin, lmin, 0.0, 0.0, 0.0],
        hi: [lmax, lmax, lmax, lmax, lmax, lmax, 1.0, 1.0, 1.0],
    };
    let mut starts: Vec<[f64; 9]> = BehaviorCategory::ALL.iter().map(|&c| Problem::encode(&corner_start(c))).collect();
    let mut r = rng::stream(seed, "fit-start", band as u64);
    for _ in 0..cfg.random_starts {
        let mut z = [0.0; 9];
        for (i, v) in z.iter_mut().enumerate() {
            *v = problem.lo[i] + (problem.hi[i] - problem.lo[i]) * r.gen::<f64>();
        }
        starts.push(z);
    }
    let runs = starts
        .par_iter()
        .map(|s| solve(&problem, s, cfg.max_iters))
        .collect::<Result<Vec<_>>>()?;
    let (best_start, best) = runs
        .iter()
        .enumerate()
        .fold(None::<(usize, &Run)>, |acc, (i, run)| match acc {
            Some((_, b)) if b.objective <= run.objective => acc,
            _ => Some((i, run)),
        })
        .expect("at least eight starts");
    let mut params = Problem::params(&best.z);
    for i in 0..3 {
        params.lambda_plus[i] = params.lambda_plus[i].clamp(cfg.lambda_min_abs, cfg.lambda_max);
        params.lambda_minus[i] = params.lambda_minus[i].clamp(-cfg.lambda_max, -cfg.lambda_min_abs);
        params.alpha[i] = params.alpha[i].clamp(0.0, 1.0);
    }
    Ok(BandFit {
        band,
        n_obs: rows.len(),
        params,
        residual_norm: best.objective.sqrt(),
        iterations: best.iterations,
        converged: best.converged,
        best_start,
        objective_trace: best.trace.clone(),
        speed_marginal: model.marginal().clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::generate_situations;
    use crate::policy::GridSpec;

    fn cfg() -> FitConfig {
        FitConfig { grid: GridSpec { nv: 32, ng: 32, ..FitConfig::default().grid }, max_iters: 30, ..FitConfig::default() }
    }

    #[test]
    fn encode_round_trip() {
        let p = MixedPolicyParams::new([1.0, 2.0, 3.0], [-4.0, -5.0, -6.0], [0.1, 0.2, 0.3]).unwrap();
        let q = Problem::params(&Problem::encode(&p));
        for (a, b) in p.to_vec().iter().zip(q.to_vec()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_is_bounded_monotone_and_deterministic() {
        let c = cfg();
        let truth = MixedPolicyParams::new([3.0, 2.0, 4.0], [-2.0, -3.0, -1.0], [0.7, 0.4, 0.6]).unwrap();
        let marginal = SpeedMarginal::uniform(15.0, 25.0, 5).unwrap();
        let obs = generate_situations(&truth, 2000, &marginal, &c, 3, None).unwrap();
        let a = fit_params(&obs, &c, 11).unwrap();
        let b = fit_params(&obs, &c, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bands.len(), 1);
        let f = &a.bands[0];
        assert_eq!(f.band, SpeedBand::Med);
        f.params.validate(c.lambda_max).unwrap();
        assert!(f.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(f.residual_norm < 0.5, "{}", f.residual_norm);
    }

    #[test]
    fn too_few_observations() {
        let err = fit_params(&ObservationSet::default(), &cfg(), 0).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
