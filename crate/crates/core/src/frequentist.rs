//! Frequentist boundary families: Pocock, O'Brien–Fleming, error spending
//! and stochastic curtailment.

use serde::{Deserialize, Serialize};

use crate::engine::{self, BoundarySet, BoundarySource, DesignSchedule, GridSpec};
use crate::error::{Error, Result};
use crate::num;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            value: alpha,
            domain: "(0, 1)",
        })
    }
}

/// Solve for the scale `C` of a boundary shape `c_j = C · shape_j` that
/// spends exactly `alpha` at `θ = 0`.
fn shaped_boundary(
    schedule: &DesignSchedule,
    alpha: f64,
    shape: &[f64],
    source: BoundarySource,
    spec: &GridSpec,
) -> Result<BoundarySet> {
    check_alpha(alpha)?;
    if !schedule.is_equally_spaced() {
        return Err(Error::UnequalGroups);
    }
    let k = schedule.k();
    // Crossing at C = q_α is at least α; the Bonferroni point q_{α/K}
    // spends at most α since every shape_j >= 1.
    let lo = num::upper_quantile(alpha)? - 1e-6;
    let hi = num::upper_quantile(alpha / k as f64)? + 1e-6;
    let mut failure = None;
    let scale = num::find_root(
        |x| {
            let c = BoundarySet::new(shape.iter().map(|s| x * s).collect(), source)
                .expect("finite boundaries");
            match engine::crossing_prob(schedule, &c, 0.0, spec) {
                Ok(p) => p - alpha,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        lo,
        hi,
        num::Z_TOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let scale = scale?;
    BoundarySet::new(shape.iter().map(|s| scale * s).collect(), source)
}

/// Constant boundary `c_P(K, α)` at every analysis.
pub fn pocock(schedule: &DesignSchedule, alpha: f64, spec: &GridSpec) -> Result<BoundarySet> {
    let shape = vec![1.0; schedule.k()];
    shaped_boundary(schedule, alpha, &shape, BoundarySource::Pocock, spec)
}

/// Decreasing boundary `c_OBF(K, α) · √(K / j)`.
pub fn obrien_fleming(
    schedule: &DesignSchedule,
    alpha: f64,
    spec: &GridSpec,
) -> Result<BoundarySet> {
    let k = schedule.k() as f64;
    let shape: Vec<f64> = (1..=schedule.k()).map(|j| (k / j as f64).sqrt()).collect();
    shaped_boundary(schedule, alpha, &shape, BoundarySource::Obf, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpendingKind {
    /// `α log(1 + (e − 1) u)`, Pocock-like.
    LogE,
    /// `2 − 2Φ(q_{α/2} / √u)`, O'Brien–Fleming-like.
    ObfLike,
    /// `α u^b`.
    Power { b: f64 },
}

/// Cumulative error spending function `h(u)` with `h(0) = 0`, `h(1) = α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpendingFunction {
    pub kind: SpendingKind,
    pub alpha: f64,
}

impl SpendingFunction {
    pub fn new(kind: SpendingKind, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if let SpendingKind::Power { b } = kind {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::invalid(format!("power spending needs b > 0, got {b}")));
            }
        }
        Ok(SpendingFunction { kind, alpha })
    }

    pub fn linear(alpha: f64) -> Result<Self> {
        Self::new(SpendingKind::Power { b: 1.0 }, alpha)
    }

    /// Cumulative error spent by information fraction `u`.
    pub fn spend(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain {
                value: u,
                domain: "[0, 1]",
            });
        }
        if u == 0.0 {
            return Ok(0.0);
        }
        if u == 1.0 {
            return Ok(self.alpha);
        }
        let a = self.alpha;
        Ok(match self.kind {
            SpendingKind::LogE => a * (1.0 + (std::f64::consts::E - 1.0) * u).ln(),
            SpendingKind::ObfLike => {
                let q = num::upper_quantile(a / 2.0)?;
                2.0 * num::norm_sf(q / u.sqrt())
            }
            SpendingKind::Power { b } => a * u.powf(b),
        })
    }

    /// Increments `κ_j = h(n_j/n_K) − h(n_{j−1}/n_K)`.
    pub fn increments(&self, schedule: &DesignSchedule) -> Result<Vec<f64>> {
        let n_max = schedule.n_max();
        let mut prev = 0.0;
        (1..=schedule.k())
            .map(|j| {
                let cum = self.spend(schedule.n(j) / n_max)?;
                let kappa = cum - prev;
                prev = cum;
                Ok(kappa)
            })
            .collect()
    }
}

pub fn spending_boundaries(
    schedule: &DesignSchedule,
    h: &SpendingFunction,
    spec: &GridSpec,
) -> Result<BoundarySet> {
    let kappa = h.increments(schedule)?;
    engine::solve_spending_boundaries(schedule, &kappa, spec)
}

fn check_interim(schedule: &DesignSchedule, analysis: usize) -> Result<()> {
    if analysis == 0 || analysis > schedule.k() {
        return Err(Error::invalid(format!(
            "analysis {analysis} outside 1..={}",
            schedule.k()
        )));
    }
    if analysis == schedule.k() {
        return Err(Error::NoFutureData { analysis });
    }
    Ok(())
}

/// Conditional power `CP_j(θ) = P(z_K > q_η | θ, ȳ_j)`.
pub fn conditional_power(
    theta: f64,
    ybar: f64,
    schedule: &DesignSchedule,
    analysis: usize,
    eta: f64,
) -> Result<f64> {
    check_interim(schedule, analysis)?;
    check_alpha(eta)?;
    let sigma = schedule.sigma();
    let (nj, nk) = (schedule.n(analysis), schedule.n_max());
    let q = num::upper_quantile(eta)?;
    let remaining = nk - nj;
    let needed_mean = (q * sigma * nk.sqrt() - nj * ybar) / remaining;
    Ok(num::norm_sf((needed_mean - theta) / (sigma / remaining.sqrt())))
}

/// z-threshold at analysis `j` equivalent to `CP_j(0) > γ`.
///
/// When `n_j = n_K` no data remain and the threshold is `q_η`.
pub fn curtailment_boundary(
    schedule: &DesignSchedule,
    analysis: usize,
    eta: f64,
    gamma: f64,
) -> Result<f64> {
    check_alpha(eta)?;
    check_alpha(gamma)?;
    if analysis == 0 || analysis > schedule.k() {
        return Err(Error::invalid(format!(
            "analysis {analysis} outside 1..={}",
            schedule.k()
        )));
    }
    let (nj, nk) = (schedule.n(analysis), schedule.n_max());
    let q_eta = num::upper_quantile(eta)?;
    if nj >= nk {
        return Ok(q_eta);
    }
    let q_gamma = num::upper_quantile(1.0 - gamma)?;
    Ok(q_eta * (nk / nj).sqrt() + q_gamma * ((nk - nj) / nj).sqrt())
}

/// Stochastic-curtailment design: interim thresholds from `CP_j(0) > γ`,
/// final threshold `q_η`.
pub fn curtailment_boundaries(
    schedule: &DesignSchedule,
    eta: f64,
    gamma: f64,
) -> Result<BoundarySet> {
    let c = (1..=schedule.k())
        .map(|j| curtailment_boundary(schedule, j, eta, gamma))
        .collect::<Result<Vec<_>>>()?;
    BoundarySet::new(c, BoundarySource::Custom)
}
