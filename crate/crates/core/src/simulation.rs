//! Seeded Monte Carlo operating characteristics for posterior-probability
//! designs: false discovery rate, false positive rate and credible-interval
//! coverage over a population of trials with randomly drawn effects.
//!
//! Each trial draws from its own ChaCha stream keyed by `(seed, trial
//! index)`, so results do not depend on how trials are spread over threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{self, GaussianPrior, PosteriorSummary};
use crate::engine::DesignSchedule;
use crate::error::{Error, Result};
use crate::num;

/// Population distribution of true effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EffectModel {
    /// Every trial has the same effect.
    Point { theta: f64 },
    Normal { mean: f64, sd: f64 },
    /// `N(mean, sd²)` restricted to `θ ≤ 0`.
    NonPositive { mean: f64, sd: f64 },
}

impl EffectModel {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            EffectModel::Point { theta } => theta.is_finite(),
            EffectModel::Normal { mean, sd } | EffectModel::NonPositive { mean, sd } => {
                mean.is_finite() && sd > 0.0 && sd.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid effect model {self:?}")))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            EffectModel::Point { theta } => theta,
            EffectModel::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            EffectModel::NonPositive { mean, sd } => {
                // inverse CDF on the truncated support; u ∈ (0, 1)
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                let p = u * num::norm_cdf(-mean / sd);
                mean + sd * num::norm_quantile(p).unwrap_or(-40.0)
            }
        }
    }
}

/// One simulated population of trials under a posterior-probability design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub gen_prior: EffectModel,
    pub analysis_prior: GaussianPrior,
    pub schedule: DesignSchedule,
    /// Posterior-probability thresholds `γ_j`, one per analysis.
    pub gamma: Vec<f64>,
    pub n_trials: usize,
    pub seed: u64,
    /// Credible intervals are reported at level `1 − ci_alpha`.
    pub ci_alpha: f64,
}

impl Scenario {
    fn validate(&self) -> Result<()> {
        self.gen_prior.validate()?;
        if self.n_trials == 0 {
            return Err(Error::invalid("scenario needs at least one trial"));
        }
        if self.gamma.len() != self.schedule.k() {
            return Err(Error::invalid(format!(
                "{} thresholds for a {}-analysis schedule",
                self.gamma.len(),
                self.schedule.k()
            )));
        }
        if !(self.ci_alpha > 0.0 && self.ci_alpha < 1.0) {
            return Err(Error::Domain {
                value: self.ci_alpha,
                domain: "(0, 1)",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub theta_true: f64,
    /// 1-based analysis at which the trial stopped.
    pub stop_analysis: usize,
    pub k: usize,
    pub z_at_stop: f64,
    pub ybar: f64,
    pub n: u64,
    pub sigma: f64,
    pub rejected: bool,
    pub posterior: PosteriorSummary,
    pub ci_covers: bool,
}

/// Proportion with its binomial Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    fn ratio(hits: usize, total: usize) -> Option<Self> {
        (total > 0).then(|| {
            let p = hits as f64 / total as f64;
            Estimate {
                value: p,
                se: (p * (1.0 - p) / total as f64).sqrt(),
            }
        })
    }

    /// `value ≤ bound + 3·se`.
    pub fn within(&self, bound: f64) -> bool {
        self.value <= bound + 3.0 * self.se
    }
}

/// `None` marks an estimator whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OCReport {
    pub n_trials: usize,
    pub rejection_count: usize,
    pub null_count: usize,
    pub false_rejection_count: usize,
    pub fdr: Option<Estimate>,
    pub fpr: Option<Estimate>,
    pub coverage: Estimate,
}

fn simulate_trial(sc: &Scenario, c: &[f64], index: u64) -> Result<TrialRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    rng.set_stream(index);
    let theta = sc.gen_prior.sample(&mut rng);
    let schedule = &sc.schedule;
    let sigma = schedule.sigma();
    let k = schedule.k();

    let mut sum = 0.0;
    let mut stop = (k, 0.0, false);
    for j in 1..=k {
        let delta = schedule.increment(j);
        sum += theta * delta + sigma * delta.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let z = sum / (sigma * schedule.n(j).sqrt());
        if z > c[j - 1] {
            stop = (j, z, true);
            break;
        }
        stop = (j, z, false);
    }
    let (t, z, rejected) = stop;
    let n = schedule.n(t);
    let ybar = sum / n;
    let posterior = bayes::posterior(&sc.analysis_prior, ybar, n, sigma)?.summary(sc.ci_alpha)?;
    Ok(TrialRecord {
        theta_true: theta,
        stop_analysis: t,
        k,
        z_at_stop: z,
        ybar,
        n: schedule.sizes()[t - 1],
        sigma,
        rejected,
        ci_covers: posterior.ci.0 <= theta && theta <= posterior.ci.1,
        posterior,
    })
}

/// Simulates `n_trials` trials; trial `s` uses stream `s` of `seed`.
pub fn run_scenario(sc: &Scenario) -> Result<Vec<TrialRecord>> {
    sc.validate()?;
    let c = bayes::pp_boundaries(&sc.gamma, &sc.analysis_prior, &sc.schedule)?.c;
    (0..sc.n_trials as u64)
        .into_par_iter()
        .map(|s| simulate_trial(sc, &c, s))
        .collect()
}

pub fn estimate_oc(records: &[TrialRecord]) -> Result<OCReport> {
    if records.is_empty() {
        return Err(Error::invalid("no trial records"));
    }
    let rejection_count = records.iter().filter(|r| r.rejected).count();
    let null_count = records.iter().filter(|r| r.theta_true <= 0.0).count();
    let false_rejection_count = records
        .iter()
        .filter(|r| r.rejected && r.theta_true <= 0.0)
        .count();
    let covered = records.iter().filter(|r| r.ci_covers).count();
    Ok(OCReport {
        n_trials: records.len(),
        rejection_count,
        null_count,
        false_rejection_count,
        fdr: Estimate::ratio(false_rejection_count, rejection_count),
        fpr: Estimate::ratio(false_rejection_count, null_count),
        coverage: Estimate::ratio(covered, records.len()).expect("records are non-empty"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub nu0: f64,
    pub nu: f64,
    pub k: usize,
    pub report: OCReport,
}

/// Crosses generative SDs `nu0`, analysis-prior SDs `nu` and analysis counts
/// `k` around `base`, keeping its means, `n_max`, σ, first threshold, trial
/// count and seed. Cells come back ordered by `(nu0, k, nu)`.
pub fn scenario_grid(
    base: &Scenario,
    nu0_list: &[f64],
    nu_list: &[f64],
    k_list: &[usize],
) -> Result<Vec<GridCell>> {
    let gen_mean = match base.gen_prior {
        EffectModel::Normal { mean, .. } => mean,
        _ => return Err(Error::invalid("scenario grid needs a normal generative model")),
    };
    let gamma = *base
        .gamma
        .first()
        .ok_or_else(|| Error::invalid("scenario has no thresholds"))?;
    let n_max = *base.schedule.sizes().last().expect("schedule is non-empty");
    let sigma = base.schedule.sigma();

    let mut cells = Vec::new();
    for &nu0 in nu0_list {
        for &k in k_list {
            for &nu in nu_list {
                cells.push((nu0, k, nu));
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(nu0, k, nu)| {
            let sc = Scenario {
                gen_prior: EffectModel::Normal {
                    mean: gen_mean,
                    sd: nu0,
                },
                analysis_prior: GaussianPrior::new(base.analysis_prior.mean, nu)?,
                schedule: DesignSchedule::equal(k, n_max, sigma)?,
                gamma: vec![gamma; k],
                ..base.clone()
            };
            Ok(GridCell {
                nu0,
                nu,
                k,
                report: estimate_oc(&run_scenario(&sc)?)?,
            })
        })
        .collect()
}

/// FDR and FPR ceilings when analysis and generative priors coincide:
/// `1 − γ_min` and `(1 − γ_min) P(θ > 0) / (γ_min P(θ ≤ 0))`.
pub fn fdr_fpr_bounds(prior: &GaussianPrior, gamma: &[f64]) -> (f64, f64) {
    let g = gamma.iter().copied().fold(f64::INFINITY, f64::min);
    let p1 = prior.prob_positive();
    (1.0 - g, (1.0 - g) * p1 / (g * (1.0 - p1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// Rejection frequency among trials with `θ` drawn from the prior on `θ ≤ 0`.
    pub empirical: Estimate,
    pub bound: f64,
    pub holds: bool,
}

/// Simulates `n_trials` null trials with effects from `prior` truncated to
/// `θ ≤ 0` and compares the rejection frequency with the FPR ceiling.
pub fn universal_bound_check(
    prior: &GaussianPrior,
    gamma: &[f64],
    schedule: &DesignSchedule,
    n_trials: usize,
    seed: u64,
) -> Result<BoundCheck> {
    if prior.flat {
        return Err(Error::invalid("bound check needs a proper prior"));
    }
    let sc = Scenario {
        gen_prior: EffectModel::NonPositive {
            mean: prior.mean,
            sd: prior.sd,
        },
        analysis_prior: *prior,
        schedule: schedule.clone(),
        gamma: gamma.to_vec(),
        n_trials,
        seed,
        ci_alpha: 0.05,
    };
    let records = run_scenario(&sc)?;
    let rejected = records.iter().filter(|r| r.rejected).count();
    let empirical = Estimate::ratio(rejected, records.len()).expect("n_trials > 0");
    let bound = fdr_fpr_bounds(prior, gamma).1;
    Ok(BoundCheck {
        empirical,
        bound,
        holds: empirical.within(bound),
    })
}
