use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FitConfig;
use crate::error::{Error, Result};
use crate::policy::{MixedPolicyParams, UtilityTable};
use crate::scenario::SpeedMarginal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ttc,
    Gap,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Ttc, Metric::Gap];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Ttc => "ttc",
            Metric::Gap => "gap",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ttc" => Ok(Metric::Ttc),
            "gap" => Ok(Metric::Gap),
            _ => Err(Error::Config(format!("unknown metric {s:?}"))),
        }
    }
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

pub fn empirical_cdf(values: &[f64]) -> Result<EmpiricalCdf> {
    EmpiricalCdf::new(values)
}

impl EmpiricalCdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Data(format!("empirical CDF needs >= 2 values, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("empirical CDF needs finite values".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Plotting position of the `i`-th order statistic, `(i + 0.5) / n`.
    pub fn position(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.sorted.len() as f64
    }

    /// Quantile by linear interpolation between plotting positions.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        let h = q * n as f64 - 0.5;
        if h <= 0.0 {
            return self.sorted[0];
        }
        if h >= (n - 1) as f64 {
            return self.sorted[n - 1];
        }
        let i = h.floor() as usize;
        let f = h - i as f64;
        self.sorted[i] + f * (self.sorted[i + 1] - self.sorted[i])
    }
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson_r(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Mixed policy of one speed band: utility tables at each speed-bin center
/// plus the TTC atoms presorted once.
///
/// TTC atoms come from a midpoint quadrature over subject speed (within its
/// bin), `v_lc` and gap (within the cell), since TTC is strongly nonlinear
/// when the closing speed is small.
#[derive(Debug, Clone)]
pub struct BandModel {
    marginal: SpeedMarginal,
    probs: Vec<f64>,
    tables: Vec<UtilityTable>,
    ttc_cap: f64,
    ttc_sorted: Vec<f64>,
    ttc_cell: Vec<u32>,
}

impl BandModel {
    pub fn new(cfg: &FitConfig, marginal: SpeedMarginal) -> Result<Self> {
        cfg.validate()?;
        marginal.validate()?;
        let tables = marginal
            .values
            .iter()
            .map(|&v| UtilityTable::new(v, &cfg.grid, &cfg.utility))
            .collect::<Result<Vec<_>>>()?;
        let (va, ga) = (cfg.grid.v_axis()?, cfg.grid.gap_axis()?);
        let q = cfg.ttc_quadrature;
        let offsets: Vec<f64> = (0..q).map(|k| (k as f64 + 0.5) / q as f64 - 0.5).collect();
        let cells = cfg.grid.cells();
        let mut atoms: Vec<(f64, u32)> = Vec::with_capacity(tables.len() * cells * q * q * q);
        for (s, &v_center) in marginal.values.iter().enumerate() {
            for &ov in &offsets {
                let v_s = (v_center + ov * marginal.bin_width).max(0.0);
                for iv in 0..va.n {
                    for ig in 0..ga.n {
                        let cell = (s * cells + iv * ga.n + ig) as u32;
                        for &ol in &offsets {
                            let v_lc = va.center(iv) + ol * va.width();
                            for &og in &offsets {
                                let gap = ga.center(ig) + og * ga.width();
                                let t = if v_s > v_lc { gap / (v_s - v_lc) } else { f64::INFINITY };
                                atoms.push((t.min(cfg.ttc_cap), cell));
                            }
                        }
                    }
                }
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (ttc_sorted, ttc_cell) = atoms.into_iter().unzip();
        Ok(Self { probs: marginal.probabilities(), marginal, tables, ttc_cap: cfg.ttc_cap, ttc_sorted, ttc_cell })
    }

    /// Model built on the speed histogram of observed subject speeds.
    pub fn from_speeds(cfg: &FitConfig, speeds: &[f64]) -> Result<Self> {
        Self::new(cfg, SpeedMarginal::histogram(speeds, cfg.speed_bins)?)
    }

    pub fn marginal(&self) -> &SpeedMarginal {
        &self.marginal
    }

    pub fn tables(&self) -> &[UtilityTable] {
        &self.tables
    }

    pub fn ttc_cap(&self) -> f64 {
        self.ttc_cap
    }

    /// GAP and TTC marginals of the mixed policy averaged over the band's
    /// speed marginal.
    pub fn marginals(&self, params: &MixedPolicyParams) -> Result<ModelMarginals> {
        let gap_axis = self.tables[0].gap_axis();
        let ng = gap_axis.n;
        let mut gap_mass = vec![0.0; ng];
        let mut cell_mass = Vec::with_capacity(self.tables.len() * gap_axis.n * self.tables[0].v_axis().n);
        for (t, &p) in self.tables.iter().zip(&self.probs) {
            let w = t.mixed_weights(params);
            let total: f64 = w.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                return Err(Error::DegenerateGrid(format!("mixed policy mass {total}")));
            }
            let s = p / total;
            for (c, &wc) in w.iter().enumerate() {
                gap_mass[c % ng] += wc * s;
                cell_mass.push(wc * s);
            }
        }
        let mut gap_edges = Vec::with_capacity(ng + 1);
        let mut gap_cum = Vec::with_capacity(ng + 1);
        gap_edges.push(gap_axis.lo);
        gap_cum.push(0.0);
        let mut acc = 0.0;
        for (j, m) in gap_mass.iter().enumerate() {
            acc += m;
            gap_edges.push(gap_axis.edges(j).1);
            gap_cum.push(acc);
        }
        let mut ttc_cum = Vec::with_capacity(self.ttc_cell.len());
        let mut acc = 0.0;
        for &c in &self.ttc_cell {
            acc += cell_mass[c as usize];
            ttc_cum.push(acc);
        }
        let total_gap = *gap_cum.last().expect("nonempty");
        let total_ttc = *ttc_cum.last().expect("nonempty");
        gap_cum.iter_mut().for_each(|c| *c /= total_gap);
        ttc_cum.iter_mut().for_each(|c| *c /= total_ttc);
        Ok(ModelMarginals { gap_edges, gap_cum, ttc_values: self.ttc_sorted.clone(), ttc_cum })
    }
}

/// Marginal distributions of GAP and (capped) TTC.
///
/// GAP mass is spread uniformly within each grid cell. TTC mass sits on the
/// cell-center atoms, each atom's mass spread over the interval back to the
/// previous atom.
#[derive(Debug, Clone)]
pub struct ModelMarginals {
    gap_edges: Vec<f64>,
    gap_cum: Vec<f64>,
    ttc_values: Vec<f64>,
    ttc_cum: Vec<f64>,
}

impl ModelMarginals {
    pub fn cdf(&self, metric: Metric, x: f64) -> f64 {
        match metric {
            Metric::Gap => {
                let e = &self.gap_edges;
                if x <= e[0] {
                    return 0.0;
                }
                if x >= e[e.len() - 1] {
                    return 1.0;
                }
                let j = e.partition_point(|&b| b <= x) - 1;
                let f = (x - e[j]) / (e[j + 1] - e[j]);
                self.gap_cum[j] + f * (self.gap_cum[j + 1] - self.gap_cum[j])
            }
            Metric::Ttc => {
                let t = &self.ttc_values;
                let k = t.partition_point(|&v| v <= x);
                if k == 0 {
                    return 0.0;
                }
                if k == t.len() {
                    return 1.0;
                }
                let (c0, c1) = (self.ttc_cum[k - 1], self.ttc_cum[k]);
                (c0 + (x - t[k - 1]) / (t[k] - t[k - 1]) * (c1 - c0)).min(1.0)
            }
        }
    }

    /// Inverse CDF with linear interpolation inside cells (GAP) or between
    /// consecutive atoms (TTC).
    pub fn quantile(&self, metric: Metric, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        match metric {
            Metric::Gap => {
                let c = &self.gap_cum;
                let j = c.partition_point(|&v| v < q).clamp(1, c.len() - 1);
                let dm = c[j] - c[j - 1];
                let f = if dm > 0.0 { (q - c[j - 1]) / dm } else { 0.0 };
                self.gap_edges[j - 1] + f.clamp(0.0, 1.0) * (self.gap_edges[j] - self.gap_edges[j - 1])
            }
            Metric::Ttc => {
                let c = &self.ttc_cum;
                let k = c.partition_point(|&v| v < q).min(c.len() - 1);
                if k == 0 {
                    return self.ttc_values[0];
                }
                let dm = c[k] - c[k - 1];
                let f = if dm > 0.0 { (q - c[k - 1]) / dm } else { 1.0 };
                let (a, b) = (self.ttc_values[k - 1], self.ttc_values[k]);
                a + f.clamp(0.0, 1.0) * (b - a)
            }
        }
    }
}

/// CDF of `metric` at `x` under `params` for the band described by `model`.
pub fn model_cdf(metric: Metric, x: f64, params: &MixedPolicyParams, model: &BandModel) -> Result<f64> {
    Ok(model.marginals(params)?.cdf(metric, x))
}

/// Paired theoretical and empirical quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqResult {
    pub metric: Metric,
    pub prob_levels: Vec<f64>,
    pub theoretical: Vec<f64>,
    pub empirical: Vec<f64>,
    pub pearson_r: f64,
}

impl QqResult {
    /// CSV with columns `prob_level,theoretical,empirical`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "prob_level,theoretical,empirical")?;
        for i in 0..self.prob_levels.len() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", self.prob_levels[i], self.theoretical[i], self.empirical[i])?;
        }
        Ok(())
    }
}

/// QQ comparison of observed metric values (TTC already uncapped is fine;
/// values are clipped at the model's cap) against the model.
pub fn qq_points(values: &[f64], marginals: &ModelMarginals, metric: Metric, n_points: usize, ttc_cap: f64) -> Result<QqResult> {
    if n_points < 2 || values.len() < n_points {
        return Err(Error::Data(format!("QQ needs 2 <= n_points <= observations, got {n_points} and {}", values.len())));
    }
    let clipped: Vec<f64> = match metric {
        Metric::Ttc => values.iter().map(|&t| t.min(ttc_cap)).collect(),
        Metric::Gap => values.to_vec(),
    };
    let ecdf = EmpiricalCdf::new(&clipped)?;
    let prob_levels: Vec<f64> = (0..n_points).map(|i| (i as f64 + 0.5) / n_points as f64).collect();
    let theoretical: Vec<f64> = prob_levels.iter().map(|&q| marginals.quantile(metric, q)).collect();
    let empirical: Vec<f64> = prob_levels.iter().map(|&q| ecdf.quantile(q)).collect();
    let pearson_r = pearson_r(&theoretical, &empirical);
    Ok(QqResult { metric, prob_levels, theoretical, empirical, pearson_r })
}
