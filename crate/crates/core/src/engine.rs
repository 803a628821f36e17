//! Sub-density recursion over the interim z-statistics.
//!
//! With `S_j = z_j √n_j / σ`-scaled partial sums, the interim statistics form
//! a Gaussian Markov chain. The joint sub-density of `z_j` on the event
//! "no boundary crossed before analysis j" is propagated one analysis at a
//! time: truncate at the previous boundary, then convolve with the Gaussian
//! increment kernel.
//!
//! After the truncation step is discretised on a Simpson grid the
//! sub-density at the next analysis is *exactly* a finite mixture of
//! Gaussians sharing one scale (one component per grid node). [`SubDensity`]
//! stores that mixture, so it can be evaluated at any abscissa, and upper
//! tail masses (stopping probabilities) are computed in closed form instead
//! of by quadrature over the rejection region.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{self, Grid};

/// Masses below this are treated as an empty continuation region.
pub const UNDERFLOW_MASS: f64 = 1e-12;

/// Component means further than this many scales away contribute nothing
/// at double precision.
const WINDOW_SDS: f64 = 9.0;

/// Analysis schedule: cumulative sample sizes and the outcome SD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSchedule {
    sizes: Vec<u64>,
    sigma: f64,
}

impl DesignSchedule {
    pub fn new(sizes: Vec<u64>, sigma: f64) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::invalid("schedule needs at least one analysis"));
        }
        if sizes[0] == 0 || sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "cumulative sample sizes must be positive and strictly increasing, got {sizes:?}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        Ok(DesignSchedule { sizes, sigma })
    }

    /// `k` analyses in equal groups of `n_max / k`.
    pub fn equal(k: usize, n_max: u64, sigma: f64) -> Result<Self> {
        if k == 0 || n_max % k as u64 != 0 {
            return Err(Error::invalid(format!(
                "n_max = {n_max} is not divisible into {k} equal groups"
            )));
        }
        let g = n_max / k as u64;
        Self::new((1..=k as u64).map(|j| j * g).collect(), sigma)
    }

    /// Number of analyses K.
    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Cumulative sample size at a 1-based analysis index.
    pub fn n(&self, analysis: usize) -> f64 {
        self.sizes[analysis - 1] as f64
    }

    pub fn n_max(&self) -> f64 {
        *self.sizes.last().unwrap() as f64
    }

    /// Patients enrolled between `analysis - 1` and `analysis`.
    pub fn increment(&self, analysis: usize) -> f64 {
        if analysis == 1 {
            self.n(1)
        } else {
            self.n(analysis) - self.n(analysis - 1)
        }
    }

    pub fn is_equally_spaced(&self) -> bool {
        let g = self.sizes[0];
        self.sizes
            .iter()
            .enumerate()
            .all(|(i, &n)| n == (i as u64 + 1) * g)
    }

    /// Mean of `z_j` under effect `theta`.
    pub fn drift(&self, analysis: usize, theta: f64) -> f64 {
        theta * self.n(analysis).sqrt() / self.sigma
    }

    /// Schedule truncated to its first `k` analyses.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        Self::new(self.sizes[..k].to_vec(), self.sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundarySource {
    Pocock,
    Obf,
    Spending,
    BayesPp,
    BayesPpos,
    Decision,
    Custom,
}

impl BoundarySource {
    pub fn label(self) -> &'static str {
        match self {
            BoundarySource::Pocock => "pocock",
            BoundarySource::Obf => "obf",
            BoundarySource::Spending => "spending",
            BoundarySource::BayesPp => "bayes-pp",
            BoundarySource::BayesPpos => "bayes-ppos",
            BoundarySource::Decision => "decision",
            BoundarySource::Custom => "custom",
        }
    }
}

/// Efficacy thresholds on the z-scale, one per analysis. `+∞` disables
/// stopping at that analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySet {
    pub c: Vec<f64>,
    pub source: BoundarySource,
}

impl BoundarySet {
    pub fn new(c: Vec<f64>, source: BoundarySource) -> Result<Self> {
        if let Some(bad) = c.iter().find(|x| x.is_nan() || **x == f64::NEG_INFINITY) {
            return Err(Error::invalid(format!("boundary value {bad} is not allowed")));
        }
        Ok(BoundarySet { c, source })
    }

    pub fn constant(value: f64, k: usize, source: BoundarySource) -> Result<Self> {
        Self::new(vec![value; k], source)
    }

    pub fn k(&self) -> usize {
        self.c.len()
    }

    fn check(&self, schedule: &DesignSchedule) -> Result<()> {
        if self.c.len() != schedule.k() {
            return Err(Error::invalid(format!(
                "{} boundaries for a {}-analysis schedule",
                self.c.len(),
                schedule.k()
            )));
        }
        Ok(())
    }
}

/// Discretisation controls for the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Simpson points across the full `±half_width` span.
    pub points: usize,
    pub half_width: f64,
    /// Upper bound on node spacing as a fraction of the narrowest
    /// Gaussian scale the grid has to resolve.
    pub kernel_fraction: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points: 513,
            half_width: 8.0,
            kernel_fraction: 0.25,
        }
    }
}

impl GridSpec {
    pub fn with_points(points: usize) -> Self {
        GridSpec {
            points,
            ..Self::default()
        }
    }

    /// The CLI default: coarser grids once K is large.
    pub fn for_analyses(k: usize) -> Self {
        if k > 64 {
            Self::with_points(257)
        } else {
            Self::default()
        }
    }
}

/// Sub-density `f̃(j, z | θ)` of `z_j` on the continuation event.
///
/// Represented as `Σ_i m_i · φ((z − μ_i)/s) / s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubDensity {
    analysis: usize,
    theta: f64,
    scale: f64,
    means: Vec<f64>,
    masses: Vec<f64>,
    underflow: bool,
}

impl SubDensity {
    /// `f̃(1, z | θ) = φ(z − θ√n_1/σ)`.
    pub fn initial(schedule: &DesignSchedule, theta: f64) -> Self {
        SubDensity {
            analysis: 1,
            theta,
            scale: 1.0,
            means: vec![schedule.drift(1, theta)],
            masses: vec![1.0],
            underflow: false,
        }
    }

    pub fn analysis(&self) -> usize {
        self.analysis
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// True when truncation left (numerically) no mass.
    pub fn underflow(&self) -> bool {
        self.underflow
    }

    /// `P(no stop before this analysis | θ)`.
    pub fn mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn density(&self, z: f64) -> f64 {
        let reach = WINDOW_SDS * self.scale;
        let start = self.means.partition_point(|&m| m < z - reach);
        let end = self.means.partition_point(|&m| m <= z + reach);
        let s = self.scale;
        self.means[start..end]
            .iter()
            .zip(&self.masses[start..end])
            .map(|(&m, &w)| w * num::norm_pdf((z - m) / s))
            .sum::<f64>()
            / s
    }

    /// Density at each point of an ascending slice.
    pub fn density_at_sorted(&self, points: &[f64]) -> Vec<f64> {
        let reach = WINDOW_SDS * self.scale;
        let s = self.scale;
        let (mut start, mut end) = (0usize, 0usize);
        points
            .iter()
            .map(|&z| {
                while start < self.means.len() && self.means[start] < z - reach {
                    start += 1;
                }
                end = end.max(start);
                while end < self.means.len() && self.means[end] <= z + reach {
                    end += 1;
                }
                self.means[start..end]
                    .iter()
                    .zip(&self.masses[start..end])
                    .map(|(&m, &w)| w * num::norm_pdf((z - m) / s))
                    .sum::<f64>()
                    / s
            })
            .collect()
    }

    /// Values of the sub-density on a grid.
    pub fn values_on(&self, grid: &Grid) -> Vec<f64> {
        self.density_at_sorted(&grid.points)
    }

    /// `∫_c^∞ f̃(j, z | θ) dz`, exact for the mixture.
    pub fn tail_mass(&self, c: f64) -> f64 {
        if c == f64::INFINITY {
            return 0.0;
        }
        let s = self.scale;
        self.means
            .iter()
            .zip(&self.masses)
            .map(|(&m, &w)| w * num::norm_sf((c - m) / s))
            .sum()
    }

    /// Grid centre `θ√n_j/σ` of the untruncated marginal of `z_j`.
    fn centre(&self, schedule: &DesignSchedule) -> f64 {
        schedule.drift(self.analysis, self.theta)
    }

    /// Simpson grid over the continuation region `z ≤ c` at this analysis.
    fn continuation_grid(
        &self,
        schedule: &DesignSchedule,
        c: f64,
        spec: &GridSpec,
        next_scale: f64,
    ) -> Option<Grid> {
        let centre = self.centre(schedule);
        let lo = centre - spec.half_width;
        let hi = (centre + spec.half_width).min(c);
        if hi <= lo {
            return None;
        }
        let base_step = 2.0 * spec.half_width / (spec.points - 1) as f64;
        let fine_step = spec.kernel_fraction * self.scale.min(next_scale);
        Grid::with_max_step(lo, hi, base_step.min(fine_step)).ok()
    }

    /// Sub-density at the next analysis, truncating this one at `c_prev`.
    pub fn propagate(
        &self,
        schedule: &DesignSchedule,
        c_prev: f64,
        spec: &GridSpec,
    ) -> Result<SubDensity> {
        let next = self.analysis + 1;
        if next > schedule.k() {
            return Err(Error::NoFutureData {
                analysis: self.analysis,
            });
        }
        let n_prev = schedule.n(self.analysis);
        let n_next = schedule.n(next);
        let delta = n_next - n_prev;
        // scale of the increment kernel in units of the previous z
        let kernel_scale_prev = (delta / n_prev).sqrt();
        let next_scale = (delta / n_next).sqrt();
        let shift = delta * self.theta / schedule.sigma();

        let empty = SubDensity {
            analysis: next,
            theta: self.theta,
            scale: next_scale,
            means: Vec::new(),
            masses: Vec::new(),
            underflow: true,
        };
        if self.underflow {
            return Ok(empty);
        }
        let Some(grid) = self.continuation_grid(schedule, c_prev, spec, kernel_scale_prev) else {
            return Ok(empty);
        };
        let values = self.values_on(&grid);
        let masses: Vec<f64> = grid
            .weights
            .iter()
            .zip(&values)
            .map(|(w, v)| w * v)
            .collect();
        if masses.iter().sum::<f64>() < UNDERFLOW_MASS {
            return Ok(empty);
        }
        let (sqrt_prev, sqrt_next) = (n_prev.sqrt(), n_next.sqrt());
        let means = grid
            .points
            .iter()
            .map(|&u| (u * sqrt_prev + shift) / sqrt_next)
            .collect();
        Ok(SubDensity {
            analysis: next,
            theta: self.theta,
            scale: next_scale,
            means,
            masses,
            underflow: false,
        })
    }
}

/// Sub-densities at every analysis for one boundary set and effect.
pub fn sub_densities(
    schedule: &DesignSchedule,
    c: &BoundarySet,
    theta: f64,
    spec: &GridSpec,
) -> Result<Vec<SubDensity>> {
    c.check(schedule)?;
    let mut out = Vec::with_capacity(schedule.k());
    let mut sub = SubDensity::initial(schedule, theta);
    for j in 1..schedule.k() {
        let next = sub.propagate(schedule, c.c[j - 1], spec)?;
        out.push(sub);
        sub = next;
    }
    out.push(sub);
    Ok(out)
}

/// Per-analysis probabilities of crossing the boundary, `P(t = j, z_j > c_j | θ)`.
pub fn crossing_probs(
    schedule: &DesignSchedule,
    c: &BoundarySet,
    theta: f64,
    spec: &GridSpec,
) -> Result<Vec<f64>> {
    c.check(schedule)?;
    let mut out = Vec::with_capacity(schedule.k());
    let mut sub = SubDensity::initial(schedule, theta);
    for j in 1..=schedule.k() {
        out.push(sub.tail_mass(c.c[j - 1]));
        if j < schedule.k() {
            sub = sub.propagate(schedule, c.c[j - 1], spec)?;
        }
    }
    Ok(out)
}

/// `P(∃ j: z_j > c_j | θ)`.
pub fn crossing_prob(
    schedule: &DesignSchedule,
    c: &BoundarySet,
    theta: f64,
    spec: &GridSpec,
) -> Result<f64> {
    Ok(crossing_probs(schedule, c, theta, spec)?.iter().sum())
}

/// Boundaries whose incremental crossing masses under `θ = 0` equal `kappa`.
pub fn solve_spending_boundaries(
    schedule: &DesignSchedule,
    kappa: &[f64],
    spec: &GridSpec,
) -> Result<BoundarySet> {
    if kappa.len() != schedule.k() {
        return Err(Error::invalid(format!(
            "{} spend increments for a {}-analysis schedule",
            kappa.len(),
            schedule.k()
        )));
    }
    if kappa.iter().any(|&k| !(k > 0.0)) || kappa.iter().sum::<f64>() >= 1.0 {
        return Err(Error::invalid(
            "spend increments must be positive and sum to less than 1",
        ));
    }
    let mut c = Vec::with_capacity(schedule.k());
    let mut sub = SubDensity::initial(schedule, 0.0);
    for (idx, &target) in kappa.iter().enumerate() {
        let j = idx + 1;
        let available = sub.mass();
        if target >= available {
            return Err(Error::InfeasibleSpend {
                analysis: j,
                requested: target,
                available,
            });
        }
        let centre = schedule.drift(j, 0.0);
        let cj = num::find_root(
            |x| sub.tail_mass(x) - target,
            centre - spec.half_width - 2.0,
            centre + spec.half_width + 2.0,
            num::Z_TOL,
        )?;
        c.push(cj);
        if j < schedule.k() {
            sub = sub.propagate(schedule, cj, spec)?;
        }
    }
    BoundarySet::new(c, crate::engine::BoundarySource::Spending)
}

/// Distribution of the stopping outcome `(t, z_t)`.
#[derive(Debug, Clone)]
pub struct StoppingDensity {
    boundaries: Vec<f64>,
    subs: Vec<SubDensity>,
    /// `P(t = j | θ)` for each analysis.
    pub stop_probs: Vec<f64>,
}

impl StoppingDensity {
    /// `f(t, z | θ)`: the sub-density on the rejection region for `t < K`,
    /// and on the whole line at the final analysis.
    pub fn density(&self, t: usize, z: f64) -> f64 {
        let k = self.subs.len();
        if t == k || z > self.boundaries[t - 1] {
            self.subs[t - 1].density(z)
        } else {
            0.0
        }
    }

    pub fn sub_density(&self, t: usize) -> &SubDensity {
        &self.subs[t - 1]
    }

    pub fn total_mass(&self) -> f64 {
        self.stop_probs.iter().sum()
    }

    pub fn underflow(&self) -> bool {
        self.subs.iter().any(SubDensity::underflow)
    }
}

pub fn stopping_density(
    schedule: &DesignSchedule,
    c: &BoundarySet,
    theta: f64,
    spec: &GridSpec,
) -> Result<StoppingDensity> {
    let subs = sub_densities(schedule, c, theta, spec)?;
    let k = schedule.k();
    let stop_probs = subs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if i + 1 == k {
                s.mass()
            } else {
                s.tail_mass(c.c[i])
            }
        })
        .collect();
    Ok(StoppingDensity {
        boundaries: c.c.clone(),
        subs,
        stop_probs,
    })
}

/// Observed stopping outcome `(t, z_t)`, with `t` 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopOutcome {
    pub analysis: usize,
    pub z: f64,
}

impl StopOutcome {
    fn check(&self, schedule: &DesignSchedule, c: &BoundarySet) -> Result<()> {
        c.check(schedule)?;
        let k = schedule.k();
        if self.analysis == 0 || self.analysis > k || !self.z.is_finite() {
            return Err(Error::invalid(format!(
                "outcome (t = {}, z = {}) is outside a {k}-analysis design",
                self.analysis, self.z
            )));
        }
        let boundary = c.c[self.analysis - 1];
        if self.analysis < k && self.z <= boundary {
            return Err(Error::UnattainableOutcome {
                analysis: self.analysis,
                z: self.z,
                boundary,
            });
        }
        Ok(())
    }
}

/// Probability, under `theta`, of an outcome above `obs` in the stage-wise
/// ordering: an earlier stop, or the same stop with a larger z.
pub fn prob_above(
    schedule: &DesignSchedule,
    c: &BoundarySet,
    obs: StopOutcome,
    theta: f64,
    spec: &GridSpec,
) -> Result<f64> {
    let mut total = 0.0;
    let mut sub = SubDensity::initial(schedule, theta);
    for j in 1..obs.analysis {
        total += sub.tail_mass(c.c[j - 1]);
        sub = sub.propagate(schedule, c.c[j - 1], spec)?;
    }
    Ok(total + sub.tail_mass(obs.z))
}

/// Stage-wise ordering confidence interval `(θ_L, θ_U)` at level `1 − alpha`.
pub fn stagewise_ci(
    schedule: &DesignSchedule,
    c: &BoundarySet,
    obs: StopOutcome,
    alpha: f64,
    spec: &GridSpec,
) -> Result<(f64, f64)> {
    obs.check(schedule, c)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain {
            value: alpha,
            domain: "(0, 1)",
        });
    }
    let centre = mle_at_stop(obs, schedule);
    let unit = schedule.sigma() / schedule.n(1).sqrt();
    let tol = 1e-9 * schedule.sigma() / schedule.n_max().sqrt();
    let solve = |level: f64| -> Result<f64> {
        let mut failure = None;
        let root = num::find_root_increasing(
            |theta| match prob_above(schedule, c, obs, theta, spec) {
                Ok(p) => p - level,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            centre - unit,
            centre + unit,
            tol,
        );
        match failure {
            Some(e) => Err(e),
            None => root,
        }
    };
    let lower = solve(alpha / 2.0)?;
    let upper = solve(1.0 - alpha / 2.0)?;
    Ok((lower, upper))
}

/// Sample mean at stopping, `z_t σ / √n_t`.
pub fn mle_at_stop(obs: StopOutcome, schedule: &DesignSchedule) -> f64 {
    obs.z * schedule.sigma() / schedule.n(obs.analysis).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sched(k: usize, n: u64) -> DesignSchedule {
        DesignSchedule::equal(k, n, 1.0).unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(DesignSchedule::new(vec![], 1.0).is_err());
        assert!(DesignSchedule::new(vec![10, 10], 1.0).is_err());
        assert!(DesignSchedule::new(vec![0, 10], 1.0).is_err());
        assert!(DesignSchedule::new(vec![10, 20], 0.0).is_err());
        assert!(DesignSchedule::equal(3, 1000, 1.0).is_err());
        let s = sched(5, 1000);
        assert_eq!(s.sizes(), &[200, 400, 600, 800, 1000]);
        assert!(s.is_equally_spaced());
        assert!(!DesignSchedule::new(vec![100, 300], 1.0)
            .unwrap()
            .is_equally_spaced());
    }

    #[test]
    fn boundary_validation() {
        assert!(BoundarySet::new(vec![1.0, f64::NAN], BoundarySource::Custom).is_err());
        assert!(BoundarySet::new(vec![f64::NEG_INFINITY], BoundarySource::Custom).is_err());
        assert!(BoundarySet::new(vec![f64::INFINITY, 2.0], BoundarySource::Custom).is_ok());
        let s = sched(2, 100);
        let c = BoundarySet::constant(2.0, 3, BoundarySource::Custom).unwrap();
        assert!(crossing_prob(&s, &c, 0.0, &GridSpec::default()).is_err());
    }

    #[test]
    fn initial_density_is_shifted_normal() {
        let s = DesignSchedule::new(vec![100, 200], 2.0).unwrap();
        let sub = SubDensity::initial(&s, 0.3);
        let mean = 0.3 * 10.0 / 2.0;
        for z in [-1.0, 0.5, 1.5, 3.0] {
            assert_abs_diff_eq!(sub.density(z), num::norm_pdf(z - mean), epsilon = 1e-15);
        }
        let null = SubDensity::initial(&s, 0.0);
        assert_abs_diff_eq!(null.density(0.7), num::norm_pdf(0.7), epsilon = 1e-15);
    }

    #[test]
    fn no_truncation_keeps_gaussian_marginal() {
        let s = sched(3, 300);
        let spec = GridSpec::default();
        let theta = 0.12;
        let mut sub = SubDensity::initial(&s, theta);
        for j in 2..=3 {
            sub = sub.propagate(&s, f64::INFINITY, &spec).unwrap();
            assert_abs_diff_eq!(sub.mass(), 1.0, epsilon = 1e-10);
            let mean = s.drift(j, theta);
            for z in [-1.0, 0.0, 1.3, 2.9, 4.0] {
                assert_abs_diff_eq!(sub.density(z), num::norm_pdf(z - mean), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn symmetric_truncation_halves_mass() {
        let s = sched(2, 200);
        let sub = SubDensity::initial(&s, 0.0)
            .propagate(&s, 0.0, &GridSpec::default())
            .unwrap();
        assert_abs_diff_eq!(sub.mass(), 0.5, epsilon = 1e-8);
    }

    #[test]
    fn propagation_loses_exactly_the_stopping_mass() {
        let s = sched(4, 400);
        let spec = GridSpec::default();
        let mut sub = SubDensity::initial(&s, 0.05);
        for c in [2.5, 2.0, 1.8] {
            let before = sub.mass();
            let stop = sub.tail_mass(c);
            sub = sub.propagate(&s, c, &spec).unwrap();
            assert_abs_diff_eq!(before - stop, sub.mass(), epsilon = 1e-8);
        }
    }

    #[test]
    fn truncation_far_below_support_underflows() {
        let s = sched(3, 300);
        let spec = GridSpec::default();
        let sub = SubDensity::initial(&s, 0.0).propagate(&s, -20.0, &spec).unwrap();
        assert!(sub.underflow());
        assert_eq!(sub.mass(), 0.0);
        let next = sub.propagate(&s, 1.0, &spec).unwrap();
        assert!(next.underflow());
        assert_eq!(next.tail_mass(0.0), 0.0);
    }

    #[test]
    fn single_look_tail() {
        let s = sched(1, 100);
        let c = BoundarySet::constant(1.645, 1, BoundarySource::Custom).unwrap();
        let a = crossing_prob(&s, &c, 0.0, &GridSpec::default()).unwrap();
        assert_abs_diff_eq!(a, num::norm_sf(1.645), epsilon = 1e-15);
        assert_abs_diff_eq!(a, 0.05, epsilon = 1e-4);
    }

    /// `P(z_1 > c1 or z_2 > c2)` for correlated standard normals by a 2-D
    /// tensor Simpson rule over the continuation rectangle.
    fn bivariate_upper_union(c1: f64, c2: f64, rho: f64) -> f64 {
        let det = 1.0 - rho * rho;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
        let gx = num::Grid::simpson(-9.0, c1, 1201).unwrap();
        let gy = num::Grid::simpson(-9.0, c2, 1201).unwrap();
        let mut acc = 0.0;
        for (&x, &wx) in gx.points.iter().zip(&gx.weights) {
            for (&y, &wy) in gy.points.iter().zip(&gy.weights) {
                let q = (x * x - 2.0 * rho * x * y + y * y) / det;
                acc += wx * wy * norm * (-0.5 * q).exp();
            }
        }
        1.0 - acc
    }

    #[test]
    fn two_look_crossing_matches_bivariate_quadrature() {
        let s = sched(2, 200);
        let c = BoundarySet::constant(2.18, 2, BoundarySource::Custom).unwrap();
        let rec = crossing_prob(&s, &c, 0.0, &GridSpec::default()).unwrap();
        let oracle = bivariate_upper_union(2.18, 2.18, (0.5f64).sqrt());
        assert_abs_diff_eq!(rec, oracle, epsilon = 1e-7);
    }

    #[test]
    fn spending_single_look() {
        let s = sched(1, 100);
        let b = solve_spending_boundaries(&s, &[0.05], &GridSpec::default()).unwrap();
        assert_abs_diff_eq!(b.c[0], 1.644_853_626_951_472_2, epsilon = 1e-6);
    }

    #[test]
    fn spending_is_self_consistent() {
        let s = DesignSchedule::new(vec![120, 250, 400, 700], 1.3).unwrap();
        let spec = GridSpec::default();
        let kappa = [0.004, 0.01, 0.012, 0.02];
        let b = solve_spending_boundaries(&s, &kappa, &spec).unwrap();
        let probs = crossing_probs(&s, &b, 0.0, &spec).unwrap();
        for (p, k) in probs.iter().zip(kappa) {
            assert_abs_diff_eq!(*p, k, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(probs.iter().sum::<f64>(), 0.046, epsilon = 1e-6);
    }

    #[test]
    fn spending_rejects_infeasible_requests() {
        let s = sched(2, 200);
        let spec = GridSpec::default();
        assert!(solve_spending_boundaries(&s, &[0.0, 0.1], &spec).is_err());
        assert!(solve_spending_boundaries(&s, &[0.6, 0.5], &spec).is_err());
        assert!(solve_spending_boundaries(&s, &[0.1], &spec).is_err());
    }

    #[test]
    fn stopping_density_normalises() {
        let s = sched(1, 50);
        let c = BoundarySet::constant(1.0, 1, BoundarySource::Custom).unwrap();
        let d = stopping_density(&s, &c, 0.2, &GridSpec::default()).unwrap();
        let mean = s.drift(1, 0.2);
        assert_abs_diff_eq!(d.density(1, -0.4), num::norm_pdf(-0.4 - mean), epsilon = 1e-14);
        assert_abs_diff_eq!(d.total_mass(), 1.0, epsilon = 1e-12);

        let s = sched(5, 1000);
        let c = BoundarySet::constant(2.4132, 5, BoundarySource::Custom).unwrap();
        let d = stopping_density(&s, &c, 0.1, &GridSpec::default()).unwrap();
        assert_abs_diff_eq!(d.total_mass(), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(
            d.stop_probs[0],
            num::norm_sf(2.4132 - s.drift(1, 0.1)),
            epsilon = 1e-14
        );
        assert_eq!(d.density(2, 1.0), 0.0);
        assert!(d.density(2, 3.0) > 0.0);
        assert!(d.density(5, 1.0) > 0.0);
    }

    #[test]
    fn fixed_sample_interval_when_k_is_one() {
        let s = sched(1, 100);
        let c = BoundarySet::constant(1.96, 1, BoundarySource::Custom).unwrap();
        let obs = StopOutcome { analysis: 1, z: 1.96 };
        let (lo, hi) = stagewise_ci(&s, &c, obs, 0.05, &GridSpec::default()).unwrap();
        let q = num::upper_quantile(0.025).unwrap();
        assert_abs_diff_eq!(lo, (1.96 - q) / 10.0, epsilon = 1e-8);
        assert_abs_diff_eq!(hi, (1.96 + q) / 10.0, epsilon = 1e-8);
    }

    #[test]
    fn unattainable_outcomes_are_rejected() {
        let s = sched(2, 200);
        let c = BoundarySet::constant(2.18, 2, BoundarySource::Custom).unwrap();
        let spec = GridSpec::default();
        let obs = StopOutcome { analysis: 1, z: 1.0 };
        assert!(matches!(
            stagewise_ci(&s, &c, obs, 0.05, &spec),
            Err(Error::UnattainableOutcome { .. })
        ));
        let obs = StopOutcome { analysis: 2, z: 1.0 };
        assert!(stagewise_ci(&s, &c, obs, 0.05, &spec).is_ok());
        let obs = StopOutcome { analysis: 3, z: 3.0 };
        assert!(stagewise_ci(&s, &c, obs, 0.05, &spec).is_err());
    }

    #[test]
    fn mle_examples() {
        let s = sched(2, 400);
        assert_eq!(mle_at_stop(StopOutcome { analysis: 1, z: 0.0 }, &s), 0.0);
        assert_abs_diff_eq!(
            mle_at_stop(StopOutcome { analysis: 2, z: 2.0 }, &s),
            0.1,
            epsilon = 1e-15
        );
    }
}
