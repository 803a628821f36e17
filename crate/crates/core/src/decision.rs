//! Decision-theoretic sequential design solved by backward induction.
//!
//! At an interim analysis the trial either stops and rejects `H₀`, paying
//! `ξ_{1j}` if `θ ≤ 0`, or enrolls the next group at a cost per patient.
//! At the final analysis it rejects (loss `ξ_{1K}` if `θ ≤ 0`) or accepts
//! (loss `ξ₀` if `θ > 0`). The Bayes risk `L̃_j` is tabulated on a fixed
//! z-grid and carried backwards as a piecewise-linear function, which is
//! integrated exactly against the Gaussian predictive law of `z_{j+1}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{self, GaussianPrior};
use crate::engine::{BoundarySet, BoundarySource, DesignSchedule};
use crate::error::{Error, Result};
use crate::num;

pub const GRID_POINTS: usize = 1025;
pub const GRID_HALF_WIDTH: f64 = 10.0;

/// Predictive mass further out than this many SDs is dropped.
const PREDICTIVE_WINDOW: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    /// False-rejection loss at each analysis.
    pub xi1: Vec<f64>,
    /// False-acceptance loss at the final analysis.
    pub xi0: f64,
    /// Loss per enrolled patient.
    pub patient_cost: f64,
}

impl LossSpec {
    pub fn new(xi1: Vec<f64>, xi0: f64, patient_cost: f64) -> Result<Self> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if xi1.is_empty() || !xi1.iter().all(|&x| positive(x)) || !positive(xi0) || !positive(patient_cost) {
            return Err(Error::invalid(format!(
                "losses must be positive and finite, got xi1 = {xi1:?}, xi0 = {xi0}, patient_cost = {patient_cost}"
            )));
        }
        Ok(LossSpec {
            xi1,
            xi0,
            patient_cost,
        })
    }

    /// Same `ξ₁` at every analysis and unit patient cost.
    pub fn constant(xi1: f64, k: usize, xi0: f64) -> Result<Self> {
        Self::new(vec![xi1; k], xi0, 1.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.xi1.iter().map(|x| x * factor).collect(),
            self.xi0 * factor,
            self.patient_cost * factor,
        )
    }
}

/// `ξ₁ / (ξ₀ + ξ₁)`: the posterior-probability threshold that minimises
/// the one-shot expected loss.
pub fn subjective_threshold(xi1: f64, xi0: f64) -> Result<f64> {
    if !(xi1 > 0.0 && xi0 > 0.0) {
        return Err(Error::invalid(format!(
            "losses must be positive, got xi1 = {xi1}, xi0 = {xi0}"
        )));
    }
    Ok(xi1 / (xi0 + xi1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    /// Stop and reject `H₀`.
    Reject,
    /// Enrol the next group.
    Continue,
    /// Final analysis without rejection.
    Accept,
}

impl Action {
    pub fn label(self) -> &'static str {
        match self {
            Action::Reject => "stop",
            Action::Continue => "continue",
            Action::Accept => "accept",
        }
    }
}

/// Risks at one analysis, tabulated on the shared z-grid.
///
/// At the final analysis `continue_risk` holds the risk of accepting `H₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRisk {
    pub analysis: usize,
    pub stop_risk: Vec<f64>,
    pub continue_risk: Vec<f64>,
    pub risk: Vec<f64>,
    pub reject: Vec<bool>,
    /// z above which rejection is optimal; `+∞` when it never is on the grid.
    pub boundary: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    z: Vec<f64>,
    stages: Vec<AnalysisRisk>,
    schedule: DesignSchedule,
    prior: GaussianPrior,
    loss: LossSpec,
    pub warnings: Vec<String>,
}

impl RiskTable {
    pub fn z_grid(&self) -> &[f64] {
        &self.z
    }

    /// 1-based.
    pub fn analysis(&self, j: usize) -> &AnalysisRisk {
        &self.stages[j - 1]
    }

    pub fn boundaries(&self) -> Result<BoundarySet> {
        BoundarySet::new(
            self.stages.iter().map(|s| s.boundary).collect(),
            BoundarySource::Decision,
        )
    }

    pub fn stop_risk_at(&self, j: usize, z: f64) -> Result<f64> {
        self.check(j)?;
        reject_risk(&self.schedule, &self.prior, &self.loss, j, z)
    }

    /// Risk of enrolling the next group (accepting `H₀` at the final analysis).
    pub fn continue_risk_at(&self, j: usize, z: f64) -> Result<f64> {
        self.check(j)?;
        if j == self.schedule.k() {
            return accept_risk(&self.schedule, &self.prior, &self.loss, z);
        }
        continuation_risk(
            &self.schedule,
            &self.prior,
            &self.loss,
            j,
            z,
            &self.z,
            &self.stages[j].risk,
        )
    }

    /// Optimal action at analysis `j` given `z_j`; ties go to not rejecting.
    pub fn decide(&self, j: usize, z: f64) -> Result<Action> {
        let stop = self.stop_risk_at(j, z)?;
        let other = self.continue_risk_at(j, z)?;
        Ok(match (stop < other, j == self.schedule.k()) {
            (true, _) => Action::Reject,
            (false, true) => Action::Accept,
            (false, false) => Action::Continue,
        })
    }

    fn check(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.schedule.k() {
            return Err(Error::invalid(format!(
                "analysis {j} outside 1..={}",
                self.schedule.k()
            )));
        }
        Ok(())
    }
}

fn decision_grid() -> Vec<f64> {
    let h = 2.0 * GRID_HALF_WIDTH / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS)
        .map(|i| -GRID_HALF_WIDTH + i as f64 * h)
        .collect()
}

fn check_inputs(schedule: &DesignSchedule, loss: &LossSpec) -> Result<()> {
    if loss.xi1.len() != schedule.k() {
        return Err(Error::invalid(format!(
            "{} false-rejection losses for a {}-analysis schedule",
            loss.xi1.len(),
            schedule.k()
        )));
    }
    Ok(())
}

fn posterior_at(
    schedule: &DesignSchedule,
    prior: &GaussianPrior,
    j: usize,
    z: f64,
) -> Result<bayes::NormalPosterior> {
    let n = schedule.n(j);
    let sigma = schedule.sigma();
    bayes::posterior(prior, z * sigma / n.sqrt(), n, sigma)
}

fn reject_risk(
    schedule: &DesignSchedule,
    prior: &GaussianPrior,
    loss: &LossSpec,
    j: usize,
    z: f64,
) -> Result<f64> {
    let post = posterior_at(schedule, prior, j, z)?;
    Ok(loss.xi1[j - 1] * num::norm_cdf(-post.mean / post.sd))
}

fn accept_risk(
    schedule: &DesignSchedule,
    prior: &GaussianPrior,
    loss: &LossSpec,
    z: f64,
) -> Result<f64> {
    let post = posterior_at(schedule, prior, schedule.k(), z)?;
    Ok(loss.xi0 * post.prob_positive())
}

/// `L̃_K(z)` on `z_grid`: the smaller of the reject and accept risks.
pub fn terminal_risk(
    z_grid: &[f64],
    schedule: &DesignSchedule,
    prior: &GaussianPrior,
    loss: &LossSpec,
) -> Result<Vec<f64>> {
    check_inputs(schedule, loss)?;
    z_grid
        .iter()
        .map(|&z| {
            let r = reject_risk(schedule, prior, loss, schedule.k(), z)?;
            let a = accept_risk(schedule, prior, loss, z)?;
            Ok(r.min(a))
        })
        .collect()
}

/// `E[f(Z)]` for `Z ~ N(m, s²)` where `f` linearly interpolates `values`
/// on the uniform grid `z` and is constant beyond its ends.
fn expect_piecewise_linear(z: &[f64], values: &[f64], m: f64, s: f64) -> f64 {
    let last = z.len() - 1;
    let h = z[1] - z[0];
    let index = |x: f64| ((x - z[0]) / h).clamp(0.0, last as f64);
    let lo = index(m - PREDICTIVE_WINDOW * s).floor() as usize;
    let hi = index(m + PREDICTIVE_WINDOW * s).ceil() as usize;
    if lo == hi {
        return values[lo];
    }
    let std = |x: f64| (x - m) / s;
    let mut cdf_a = num::norm_cdf(std(z[lo]));
    let mut pdf_a = num::norm_pdf(std(z[lo]));
    let mut total = values[lo] * cdf_a;
    for i in lo..hi {
        let b = std(z[i + 1]);
        let (cdf_b, pdf_b) = (num::norm_cdf(b), num::norm_pdf(b));
        let mass = cdf_b - cdf_a;
        let slope = (values[i + 1] - values[i]) / h;
        total += values[i] * mass + slope * ((m - z[i]) * mass + s * (pdf_a - pdf_b));
        cdf_a = cdf_b;
        pdf_a = pdf_b;
    }
    total + values[hi] * num::norm_sf(std(z[hi]))
}

/// Enrolment cost plus the expected next-analysis Bayes risk under the
/// posterior predictive law of `z_{j+1}` given `z_j = z`.
fn continuation_risk(
    schedule: &DesignSchedule,
    prior: &GaussianPrior,
    loss: &LossSpec,
    j: usize,
    z: f64,
    grid: &[f64],
    next_risk: &[f64],
) -> Result<f64> {
    let post = posterior_at(schedule, prior, j, z)?;
    let sigma = schedule.sigma();
    let delta = schedule.increment(j + 1);
    let n_next = schedule.n(j + 1);
    let mean = (z * schedule.n(j).sqrt() + delta * post.mean / sigma) / n_next.sqrt();
    let var = (delta * delta * post.sd * post.sd / (sigma * sigma) + delta) / n_next;
    Ok(loss.patient_cost * delta + expect_piecewise_linear(grid, next_risk, mean, var.sqrt()))
}

/// Point where `stop − continue` turns negative, scanning from the top of
/// the grid. `diff_grid` holds the difference on `grid`.
fn switch_point<F>(grid: &[f64], diff_grid: &[f64], mut diff: F, j: usize, warnings: &mut Vec<String>) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let last_continue = diff_grid.iter().rposition(|&d| d >= 0.0);
    let h = grid[1] - grid[0];
    let Some(i) = last_continue else {
        warnings.push(format!("analysis {j}: rejection is optimal over the whole z-grid"));
        return Ok(grid[0]);
    };
    if i == grid.len() - 1 {
        warnings.push(format!("analysis {j}: rejection is never optimal on the z-grid"));
        return Ok(f64::INFINITY);
    }
    if diff_grid[..i].iter().any(|&d| d < 0.0) {
        warnings.push(format!("analysis {j}: rejection region is not an upper set in z"));
    }
    let mut failure = None;
    let root = num::find_root(
        |x| match diff(x) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        grid[i],
        grid[i + 1],
        num::Z_TOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let root = root?;
    if root - grid[0] < h || grid[grid.len() - 1] - root < h {
        warnings.push(format!(
            "analysis {j}: boundary {root:.4} lies within one grid step of the grid edge"
        ));
    }
    Ok(root)
}

/// Optimal stop/continue rule by backward induction from the final analysis.
pub fn backward_induction(
    schedule: &DesignSchedule,
    prior: &GaussianPrior,
    loss: &LossSpec,
) -> Result<RiskTable> {
    check_inputs(schedule, loss)?;
    let k = schedule.k();
    let z = decision_grid();
    let mut warnings = Vec::new();
    let mut stages: Vec<AnalysisRisk> = Vec::with_capacity(k);

    // final analysis: reject vs accept, closed-form switch point
    let stop_k = z
        .iter()
        .map(|&x| reject_risk(schedule, prior, loss, k, x))
        .collect::<Result<Vec<_>>>()?;
    let accept_k = z
        .iter()
        .map(|&x| accept_risk(schedule, prior, loss, x))
        .collect::<Result<Vec<_>>>()?;
    let gamma = subjective_threshold(loss.xi1[k - 1], loss.xi0)?;
    let boundary_k = bayes::pp_boundary(gamma, prior, schedule.n(k), schedule.sigma())?;
    stages.push(stage(k, stop_k, accept_k, boundary_k));

    for j in (1..k).rev() {
        let next = &stages.last().expect("final stage present").risk;
        let stop = z
            .par_iter()
            .map(|&x| reject_risk(schedule, prior, loss, j, x))
            .collect::<Result<Vec<_>>>()?;
        let cont = z
            .par_iter()
            .map(|&x| continuation_risk(schedule, prior, loss, j, x, &z, next))
            .collect::<Result<Vec<_>>>()?;
        let diff: Vec<f64> = stop.iter().zip(&cont).map(|(s, c)| s - c).collect();
        let boundary = switch_point(
            &z,
            &diff,
            |x| {
                Ok(reject_risk(schedule, prior, loss, j, x)?
                    - continuation_risk(schedule, prior, loss, j, x, &z, next)?)
            },
            j,
            &mut warnings,
        )?;
        stages.push(stage(j, stop, cont, boundary));
    }
    stages.reverse();
    Ok(RiskTable {
        z,
        stages,
        schedule: schedule.clone(),
        prior: *prior,
        loss: loss.clone(),
        warnings,
    })
}

fn stage(analysis: usize, stop: Vec<f64>, cont: Vec<f64>, boundary: f64) -> AnalysisRisk {
    let reject: Vec<bool> = stop.iter().zip(&cont).map(|(s, c)| s < c).collect();
    let risk = stop.iter().zip(&cont).map(|(s, c)| s.min(*c)).collect();
    AnalysisRisk {
        analysis,
        stop_risk: stop,
        continue_risk: cont,
        risk,
        reject,
        boundary,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub z: f64,
    pub stop_risk: f64,
    pub continue_risk: f64,
}

/// Stop and continue risk curves at analysis `j` on the decision grid.
/// At the final analysis the second curve is the risk of accepting `H₀`.
pub fn expected_loss_curves(
    schedule: &DesignSchedule,
    prior: &GaussianPrior,
    loss: &LossSpec,
    j: usize,
) -> Result<Vec<LossPoint>> {
    let table = backward_induction(schedule, prior, loss)?;
    table.check(j)?;
    let a = table.analysis(j);
    Ok(table
        .z
        .iter()
        .zip(a.stop_risk.iter().zip(&a.continue_risk))
        .map(|(&z, (&s, &c))| LossPoint {
            z,
            stop_risk: s,
            continue_risk: c,
        })
        .collect())
}
