//! Discretized action distributions.
//!
//! Densities over `(v_lc, gap)` are evaluated at cell centers and normalized
//! to probability masses. Every proposal and the nominal policy live on the
//! same grid, so likelihood ratios are ratios of cell masses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::density::{MixedPolicyParams, RationalityVector};
use super::utility::{
    safety_utility, ttc_raw, CutInAction, SubjectState, UtilitySpec,
};
use crate::error::{Error, Result};

/// Minimum cells per axis for density grids.
pub const MIN_RESOLUTION: usize = 16;

/// Uniform axis of `n` cells over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || n == 0 {
            return Err(Error::Config(format!("invalid axis [{lo}, {hi}] with {n} cells")));
        }
        Ok(Self { lo, hi, n })
    }

    #[inline]
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.center(i)).collect()
    }

    #[inline]
    pub fn edges(&self, i: usize) -> (f64, f64) {
        let h = self.width();
        (self.lo + i as f64 * h, self.lo + (i + 1) as f64 * h)
    }

    /// Cell containing `x`; the upper edge belongs to the last cell.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        let i = ((x - self.lo) / self.width()).floor() as usize;
        Some(i.min(self.n - 1))
    }
}

/// Extent and resolution of the action grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub v_min: f64,
    pub v_max: f64,
    pub nv: usize,
    pub gap_min: f64,
    pub gap_max: f64,
    pub ng: usize,
}

impl GridSpec {
    /// Default extent for a road with speed limit `v_limit`.
    pub fn for_speed_limit(v_limit: f64) -> Self {
        Self { v_min: 0.0, v_max: 1.5 * v_limit, nv: 128, gap_min: 0.0, gap_max: 60.0, ng: 128 }
    }

    pub fn v_axis(&self) -> Result<Axis> {
        Axis::new(self.v_min, self.v_max, self.nv)
    }

    pub fn gap_axis(&self) -> Result<Axis> {
        Axis::new(self.gap_min, self.gap_max, self.ng)
    }

    pub fn validate(&self) -> Result<()> {
        self.v_axis()?;
        self.gap_axis()?;
        if self.v_min < 0.0 || self.gap_min < 0.0 {
            return Err(Error::Config("grid ranges must be nonnegative".into()));
        }
        if self.nv < MIN_RESOLUTION || self.ng < MIN_RESOLUTION {
            return Err(Error::Config(format!(
                "grid resolution must be >= {MIN_RESOLUTION} per axis, got {}x{}",
                self.nv, self.ng
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.nv * self.ng
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::for_speed_limit(crate::scenario::DEFAULT_V_LIMIT)
    }
}

/// Normalized probability masses over `(v_lc, gap)` cells, row-major in speed.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    v_axis: Axis,
    gap_axis: Axis,
    mass: Vec<f64>,
    cdf: Vec<f64>,
}

impl ActionGrid {
    /// Normalize nonnegative cell weights into a grid.
    pub fn from_weights(v_axis: Axis, gap_axis: Axis, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != v_axis.n * gap_axis.n {
            return Err(Error::Domain(format!(
                "expected {} weights, got {}",
                v_axis.n * gap_axis.n,
                weights.len()
            )));
        }
        let mut total = 0.0;
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::DegenerateGrid(format!("invalid cell weight {w}")));
            }
            total += w;
        }
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::DegenerateGrid(format!("total weight {total}")));
        }
        let mass: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        let mut cdf = Vec::with_capacity(mass.len());
        let mut acc = 0.0;
        for &m in &mass {
            acc += m;
            cdf.push(acc);
        }
        // Pin the last nonzero cell at exactly 1 so sampling never runs off the end.
        if let Some(last) = mass.iter().rposition(|&m| m > 0.0) {
            for c in &mut cdf[last..] {
                *c = 1.0;
            }
        }
        Ok(Self { v_axis, gap_axis, mass, cdf })
    }

    pub fn v_axis(&self) -> &Axis {
        &self.v_axis
    }

    pub fn gap_axis(&self) -> &Axis {
        &self.gap_axis
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    #[inline]
    pub fn cell(&self, iv: usize, ig: usize) -> usize {
        iv * self.gap_axis.n + ig
    }

    #[inline]
    pub fn cell_indices(&self, cell: usize) -> (usize, usize) {
        (cell / self.gap_axis.n, cell % self.gap_axis.n)
    }

    pub fn center(&self, cell: usize) -> CutInAction {
        let (iv, ig) = self.cell_indices(cell);
        CutInAction { v_lc: self.v_axis.center(iv), gap: self.gap_axis.center(ig) }
    }

    pub fn cell_of(&self, action: &CutInAction) -> Option<usize> {
        Some(self.cell(self.v_axis.index_of(action.v_lc)?, self.gap_axis.index_of(action.gap)?))
    }

    /// Mass of the cell containing `action`, zero outside the grid.
    pub fn mass_at(&self, action: &CutInAction) -> f64 {
        self.cell_of(action).map_or(0.0, |c| self.mass[c])
    }

    /// Draw a cell index proportionally to its mass.
    pub fn sample_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u).min(self.mass.len() - 1)
    }

    /// Grid expectation of `f` evaluated at cell centers.
    pub fn expectation(&self, f: impl Fn(&CutInAction) -> f64) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(c, &m)| m * f(&self.center(c)))
            .sum()
    }

    /// Marginal mass per speed cell.
    pub fn v_marginal(&self) -> Vec<f64> {
        self.mass.chunks(self.gap_axis.n).map(|row| row.iter().sum()).collect()
    }

    /// Marginal mass per gap cell.
    pub fn gap_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.gap_axis.n];
        for row in self.mass.chunks(self.gap_axis.n) {
            for (o, m) in out.iter_mut().zip(row) {
                *o += m;
            }
        }
        out
    }
}

/// Evaluate `density_fn` at every cell center of `grid` and normalize.
pub fn build_action_grid(
    state: &SubjectState,
    density_fn: impl Fn(&SubjectState, &CutInAction) -> Result<f64>,
    grid: &GridSpec,
) -> Result<ActionGrid> {
    grid.validate()?;
    let (va, ga) = (grid.v_axis()?, grid.gap_axis()?);
    let area = va.width() * ga.width();
    let mut weights = Vec::with_capacity(grid.cells());
    for iv in 0..va.n {
        for ig in 0..ga.n {
            let a = CutInAction { v_lc: va.center(iv), gap: ga.center(ig) };
            weights.push(density_fn(state, &a)? * area);
        }
    }
    ActionGrid::from_weights(va, ga, weights)
}

/// Draw an action: a cell proportional to mass, then its center or, with
/// `jitter`, a uniform point inside the cell.
pub fn sample_action<R: Rng + ?Sized>(grid: &ActionGrid, rng: &mut R, jitter: bool) -> CutInAction {
    let cell = grid.sample_cell(rng);
    if !jitter {
        return grid.center(cell);
    }
    let (iv, ig) = grid.cell_indices(cell);
    let (v0, v1) = grid.v_axis.edges(iv);
    let (g0, g1) = grid.gap_axis.edges(ig);
    CutInAction { v_lc: v0 + (v1 - v0) * rng.gen::<f64>(), gap: g0 + (g1 - g0) * rng.gen::<f64>() }
}

/// Utility values at every cell center for one subject speed.
///
/// Gap and progress utilities depend on one axis only, so policy grids for
/// many parameter vectors can be rebuilt with few exponentials.
#[derive(Debug, Clone)]
pub struct UtilityTable {
    v_axis: Axis,
    gap_axis: Axis,
    u_gap: Vec<f64>,
    u_progress: Vec<f64>,
    u_ttc: Vec<f64>,
    ttc: Vec<f64>,
}

impl UtilityTable {
    pub fn new(v_s: f64, grid: &GridSpec, spec: &UtilitySpec) -> Result<Self> {
        grid.validate()?;
        let (va, ga) = (grid.v_axis()?, grid.gap_axis()?);
        let u_gap: Vec<f64> = ga.centers().iter().map(|&g| safety_utility(g, spec.gap_star)).collect();
        let u_progress: Vec<f64> = va.centers().iter().map(|&v| (v - spec.v_star).tanh()).collect();
        let mut u_ttc = Vec::with_capacity(grid.cells());
        let mut ttc = Vec::with_capacity(grid.cells());
        for iv in 0..va.n {
            let v = va.center(iv);
            for ig in 0..ga.n {
                let t = ttc_raw(v_s, v, ga.center(ig));
                ttc.push(t);
                u_ttc.push(safety_utility(t, spec.ttc_star));
            }
        }
        Ok(Self { v_axis: va, gap_axis: ga, u_gap, u_progress, u_ttc, ttc })
    }

    pub fn v_axis(&self) -> Axis {
        self.v_axis
    }

    pub fn gap_axis(&self) -> Axis {
        self.gap_axis
    }

    /// Time-to-collision at each cell center.
    pub fn ttc(&self) -> &[f64] {
        &self.ttc
    }

    fn weights_from(&self, gap_term: &[f64], progress_term: &[f64], ttc_term: impl Fn(f64) -> f64) -> Vec<f64> {
        let ng = self.gap_axis.n;
        let mut w = Vec::with_capacity(self.u_ttc.len());
        for (iv, &pt) in progress_term.iter().enumerate() {
            let row = &self.u_ttc[iv * ng..(iv + 1) * ng];
            for (ig, &ut) in row.iter().enumerate() {
                w.push((gap_term[ig] + ttc_term(ut) + pt) / 3.0);
            }
        }
        w
    }

    /// Unnormalized mixture density of the Λ-policy at every cell.
    pub fn mixture_weights(&self, lam: &RationalityVector) -> Vec<f64> {
        let d = lam.densities();
        let gap_term: Vec<f64> = self.u_gap.iter().map(|&u| d[0].eval(u)).collect();
        let prog_term: Vec<f64> = self.u_progress.iter().map(|&u| d[2].eval(u)).collect();
        self.weights_from(&gap_term, &prog_term, |u| d[1].eval(u))
    }

    /// Unnormalized mixed-behavior density at every cell.
    pub fn mixed_weights(&self, params: &MixedPolicyParams) -> Vec<f64> {
        let d = params.densities();
        let gap_term: Vec<f64> = self.u_gap.iter().map(|&u| d.term(0, u)).collect();
        let prog_term: Vec<f64> = self.u_progress.iter().map(|&u| d.term(2, u)).collect();
        self.weights_from(&gap_term, &prog_term, |u| d.term(1, u))
    }

    pub fn mixture_grid(&self, lam: &RationalityVector) -> Result<ActionGrid> {
        ActionGrid::from_weights(self.v_axis, self.gap_axis, self.mixture_weights(lam))
    }

    pub fn mixed_grid(&self, params: &MixedPolicyParams) -> Result<ActionGrid> {
        ActionGrid::from_weights(self.v_axis, self.gap_axis, self.mixed_weights(params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::density::{mixed_density, mixture_density};
    use crate::rng;
    use approx::assert_abs_diff_eq;

    fn small_grid() -> GridSpec {
        GridSpec { v_min: 0.0, v_max: 30.0, nv: 32, gap_min: 0.0, gap_max: 60.0, ng: 32 }
    }

    #[test]
    fn axis_lookup() {
        let a = Axis::new(0.0, 10.0, 10).unwrap();
        assert_eq!(a.center(0), 0.5);
        assert_eq!(a.index_of(0.0), Some(0));
        assert_eq!(a.index_of(9.99), Some(9));
        assert_eq!(a.index_of(10.0), Some(9));
        assert_eq!(a.index_of(10.01), None);
        assert_eq!(a.index_of(-0.01), None);
        assert!(Axis::new(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn uniform_density_gives_equal_masses() {
        let st = SubjectState::new(10.0).unwrap();
        let g = build_action_grid(&st, |_, _| Ok(0.5), &small_grid()).unwrap();
        let expect = 1.0 / (32.0 * 32.0);
        assert!(g.mass().iter().all(|&m| (m - expect).abs() < 1e-15));
        assert_abs_diff_eq!(g.mass().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_density_is_degenerate() {
        let st = SubjectState::new(10.0).unwrap();
        let r = build_action_grid(&st, |_, _| Ok(0.0), &small_grid());
        assert!(matches!(r, Err(Error::DegenerateGrid(_))));
    }

    #[test]
    fn low_resolution_rejected() {
        let st = SubjectState::new(10.0).unwrap();
        let mut g = small_grid();
        g.nv = 8;
        assert!(build_action_grid(&st, |_, _| Ok(1.0), &g).is_err());
    }

    #[test]
    fn utility_table_matches_pointwise_densities() {
        let spec = UtilitySpec::new(10.0, 4.0, 20.0).unwrap();
        let st = SubjectState::new(18.0).unwrap();
        let lam = RationalityVector::new(-3.0, 2.0, 5.0).unwrap();
        let params = MixedPolicyParams::new([4.0, 2.0, 6.0], [-3.0, -1.0, -8.0], [0.3, 0.6, 0.8]).unwrap();
        let table = UtilityTable::new(st.v_s, &small_grid(), &spec).unwrap();
        let a = build_action_grid(&st, |s, x| mixture_density(s, x, &lam, &spec), &small_grid()).unwrap();
        let b = table.mixture_grid(&lam).unwrap();
        for (x, y) in a.mass().iter().zip(b.mass()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
        let a = build_action_grid(&st, |s, x| mixed_density(s, x, &params, &spec), &small_grid()).unwrap();
        let b = table.mixed_grid(&params).unwrap();
        for (x, y) in a.mass().iter().zip(b.mass()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn refinement_converges() {
        let spec = UtilitySpec::new(10.0, 4.0, 20.0).unwrap();
        let lam = RationalityVector::new(1.0, 1.0, 2.0).unwrap();
        let mean_up = |n: usize| {
            let g = GridSpec { nv: n, ng: n, ..GridSpec::for_speed_limit(20.0) };
            let t = UtilityTable::new(20.0, &g, &spec).unwrap();
            t.mixture_grid(&lam).unwrap().expectation(|a| (a.v_lc - spec.v_star).tanh())
        };
        assert!((mean_up(64) - mean_up(128)).abs() < 1e-3);
    }

    #[test]
    fn single_cell_sampling_returns_center() {
        let va = Axis::new(4.0, 6.0, 1).unwrap();
        let ga = Axis::new(10.0, 12.0, 1).unwrap();
        let g = ActionGrid::from_weights(va, ga, vec![3.0]).unwrap();
        let mut r = rng::stream(1, "t", 0);
        let a = sample_action(&g, &mut r, false);
        assert_eq!((a.v_lc, a.gap), (5.0, 11.0));
        let a = sample_action(&g, &mut r, true);
        assert!((4.0..=6.0).contains(&a.v_lc) && (10.0..=12.0).contains(&a.gap));
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let va = Axis::new(0.0, 1.0, 4).unwrap();
        let ga = Axis::new(0.0, 1.0, 4).unwrap();
        let g = ActionGrid::from_weights(va, ga, vec![1.0; 16]).unwrap();
        let mut r = rng::stream(2, "t", 0);
        let n = 100_000;
        let mut counts = [0usize; 16];
        for _ in 0..n {
            counts[g.sample_cell(&mut r)] += 1;
        }
        let p = 1.0 / 16.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn zero_mass_cells_never_sampled() {
        let va = Axis::new(0.0, 1.0, 2).unwrap();
        let ga = Axis::new(0.0, 1.0, 2).unwrap();
        let g = ActionGrid::from_weights(va, ga, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let mut r = rng::stream(3, "t", 0);
        for _ in 0..10_000 {
            let c = g.sample_cell(&mut r);
            assert!(c == 1 || c == 3);
        }
    }

    #[test]
    fn rational_progress_pulls_speed_up() {
        let spec = UtilitySpec::new(10.0, 4.0, 20.0).unwrap();
        let lam = RationalityVector::new(1.0, 1.0, 100.0).unwrap();
        let t = UtilityTable::new(20.0, &GridSpec::for_speed_limit(20.0), &spec).unwrap();
        let g = t.mixture_grid(&lam).unwrap();
        let mut r = rng::stream(4, "t", 0);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_action(&g, &mut r, true).v_lc).sum::<f64>() / n as f64;
        let exact = g.expectation(|a| a.v_lc);
        assert!(mean > spec.v_star);
        assert!((mean - exact).abs() < 0.05, "{mean} vs {exact}");
    }
}
