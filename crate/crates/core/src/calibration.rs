//! Tuning Bayesian designs to a type I error target at `θ = 0`.
//!
//! Each calibration evaluates the exact crossing probability of the design
//! it builds, checks that this is monotone across the search bracket, and
//! root-finds the parameter. Scale parameters (prior SD, loss) are searched
//! on the log scale.

use serde::{Deserialize, Serialize};

use crate::bayes::{self, GaussianPrior};
use crate::decision::{self, LossSpec};
use crate::engine::{crossing_prob, BoundarySet, DesignSchedule, GridSpec};
use crate::error::{Error, Result};
use crate::num;

/// Distance from the flat-prior α within which a prior-SD calibration
/// returns the flat limit.
pub const FLAT_LIMIT_TOL: f64 = 1e-6;

const MONOTONE_SAMPLES: usize = 5;
const MONOTONE_SLACK: f64 = 1e-10;

/// A solved design parameter and the type I error of the design it gives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// `+∞` when the flat limit already meets the target.
    pub value: f64,
    pub achieved_alpha: f64,
    pub flat_limit: bool,
}

fn check_target(target: f64) -> Result<()> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain {
            value: target,
            domain: "(0, 1)",
        });
    }
    Ok(())
}

/// Root of `alpha(x) = target` on `[lo, hi]`, after checking on a few
/// evenly spaced points that `alpha` is monotone there.
fn solve_scalar<F>(mut alpha: F, lo: f64, hi: f64, target: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let xs: Vec<f64> = (0..MONOTONE_SAMPLES)
        .map(|i| lo + (hi - lo) * i as f64 / (MONOTONE_SAMPLES - 1) as f64)
        .collect();
    let vals = xs.iter().map(|&x| alpha(x)).collect::<Result<Vec<_>>>()?;
    let rising = vals.windows(2).all(|w| w[1] >= w[0] - MONOTONE_SLACK);
    let falling = vals.windows(2).all(|w| w[1] <= w[0] + MONOTONE_SLACK);
    if !(rising || falling) || vals[0] == vals[MONOTONE_SAMPLES - 1] {
        return Err(Error::NotMonotone);
    }
    let (amin, amax) = (
        vals[0].min(vals[MONOTONE_SAMPLES - 1]),
        vals[0].max(vals[MONOTONE_SAMPLES - 1]),
    );
    if !(amin..=amax).contains(&target) {
        return Err(Error::InfeasibleTarget {
            target,
            lo: amin,
            hi: amax,
        });
    }
    // narrow to the sampled sub-bracket holding the target
    let i = vals
        .windows(2)
        .position(|w| (w[0] - target) * (w[1] - target) <= 0.0)
        .expect("target lies between the end values");
    let mut failure = None;
    let root = num::find_root(
        |x| match alpha(x) {
            Ok(a) => a - target,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        xs[i],
        xs[i + 1],
        tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let x = root?;
    Ok((x, alpha(x)?))
}

fn alpha_of(schedule: &DesignSchedule, c: &BoundarySet, spec: &GridSpec) -> Result<f64> {
    crossing_prob(schedule, c, 0.0, spec)
}

/// Prior-SD calibration shared by the PP and PPOS designs: `alpha(ν)` is
/// increasing, with the flat prior as its supremum.
fn calibrate_sd<F>(mut alpha: F, target: f64) -> Result<Calibration>
where
    F: FnMut(&GaussianPrior) -> Result<f64>,
{
    check_target(target)?;
    let flat = alpha(&GaussianPrior::flat())?;
    if (target - flat).abs() <= FLAT_LIMIT_TOL {
        return Ok(Calibration {
            value: f64::INFINITY,
            achieved_alpha: flat,
            flat_limit: true,
        });
    }
    let (lo, hi) = (1e-3f64.ln(), 1e3f64.ln());
    if target > flat {
        let floor = alpha(&GaussianPrior::new(0.0, lo.exp())?)?;
        return Err(Error::InfeasibleTarget {
            target,
            lo: floor,
            hi: flat,
        });
    }
    let (log_nu, achieved) = solve_scalar(
        |log_nu| alpha(&GaussianPrior::new(0.0, log_nu.exp())?),
        lo,
        hi,
        target,
        1e-10,
    )?;
    Ok(Calibration {
        value: log_nu.exp(),
        achieved_alpha: achieved,
        flat_limit: false,
    })
}

/// Prior SD `ν` of a `N(0, ν²)` prior for which the posterior-probability
/// design with constant threshold `gamma` has type I error `target`.
pub fn calibrate_prior_sd(
    schedule: &DesignSchedule,
    gamma: f64,
    target: f64,
    spec: &GridSpec,
) -> Result<Calibration> {
    let gammas = vec![gamma; schedule.k()];
    calibrate_sd(
        |prior| alpha_of(schedule, &bayes::pp_boundaries(&gammas, prior, schedule)?, spec),
        target,
    )
}

/// Constant posterior-probability threshold meeting `target` under `prior`.
pub fn calibrate_threshold(
    schedule: &DesignSchedule,
    prior: &GaussianPrior,
    target: f64,
    spec: &GridSpec,
) -> Result<Calibration> {
    check_target(target)?;
    let k = schedule.k();
    // search the threshold's normal quantile
    let (q, achieved) = solve_scalar(
        |q| {
            let gammas = vec![num::norm_cdf(q); k];
            alpha_of(schedule, &bayes::pp_boundaries(&gammas, prior, schedule)?, spec)
        },
        -2.0,
        8.0,
        target,
        1e-11,
    )?;
    Ok(Calibration {
        value: num::norm_cdf(q),
        achieved_alpha: achieved,
        flat_limit: false,
    })
}

/// Prior SD for the predictive-probability design with interim threshold
/// `gamma` and final level `1 − eta`.
pub fn calibrate_ppos(
    schedule: &DesignSchedule,
    gamma: f64,
    eta: f64,
    target: f64,
    spec: &GridSpec,
) -> Result<Calibration> {
    let gammas = vec![gamma; schedule.k()];
    calibrate_sd(
        |prior| {
            alpha_of(
                schedule,
                &bayes::ppos_boundaries(&gammas, eta, prior, schedule)?,
                spec,
            )
        },
        target,
    )
}

/// Constant false-rejection loss `ξ₁` for the decision-theoretic design
/// with final false-acceptance loss `xi0` and unit patient cost.
pub fn calibrate_loss(
    schedule: &DesignSchedule,
    prior: &GaussianPrior,
    xi0: f64,
    target: f64,
    spec: &GridSpec,
) -> Result<Calibration> {
    check_target(target)?;
    let k = schedule.k();
    let (log_xi1, achieved) = solve_scalar(
        |log_xi1| {
            let loss = LossSpec::constant(log_xi1.exp(), k, xi0)?;
            let c = decision::backward_induction(schedule, prior, &loss)?.boundaries()?;
            alpha_of(schedule, &c, spec)
        },
        (xi0 * 1e-2).ln(),
        (xi0 * 1e5).ln(),
        target,
        1e-9,
    )?;
    Ok(Calibration {
        value: log_xi1.exp(),
        achieved_alpha: achieved,
        flat_limit: false,
    })
}

/// Posterior-probability thresholds `γ_j` whose boundaries under `prior`
/// are exactly `c`.
pub fn thresholds_from_boundaries(
    c: &BoundarySet,
    prior: &GaussianPrior,
    schedule: &DesignSchedule,
) -> Result<Vec<f64>> {
    if c.k() != schedule.k() {
        return Err(Error::invalid(format!(
            "{} boundaries for a {}-analysis schedule",
            c.k(),
            schedule.k()
        )));
    }
    let sigma = schedule.sigma();
    Ok(c.c
        .iter()
        .enumerate()
        .map(|(i, &cj)| {
            let info = schedule.n(i + 1) / (sigma * sigma);
            let (prec, wm) = if prior.flat {
                (0.0, 0.0)
            } else {
                let p = prior.precision();
                (p, prior.mean * p)
            };
            num::norm_cdf((cj + wm / info.sqrt()) / (1.0 + prec / info).sqrt())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::BoundarySource;
    use crate::frequentist;
    use approx::assert_abs_diff_eq;

    fn k5() -> DesignSchedule {
        DesignSchedule::equal(5, 1000, 1.0).unwrap()
    }

    #[test]
    fn prior_sd_table_value() {
        let spec = GridSpec::default();
        let cal = calibrate_prior_sd(&k5(), 0.95, 0.05, &spec).unwrap();
        assert_abs_diff_eq!(cal.value, 0.054, epsilon = 0.001);
        assert_abs_diff_eq!(cal.achieved_alpha, 0.05, epsilon = 1e-5);
        let c = bayes::pp_boundaries(&[0.95; 5], &GaussianPrior::new(0.0, cal.value).unwrap(), &k5()).unwrap();
        assert_abs_diff_eq!(alpha_of(&k5(), &c, &spec).unwrap(), 0.05, epsilon = 1e-5);
    }

    #[test]
    fn prior_sd_flat_limit_and_infeasible() {
        let spec = GridSpec::default();
        let s = DesignSchedule::equal(1, 1000, 1.0).unwrap();
        let cal = calibrate_prior_sd(&s, 0.95, 0.05, &spec).unwrap();
        assert!(cal.flat_limit && cal.value.is_infinite());
        assert!(matches!(
            calibrate_prior_sd(&s, 0.95, 0.2, &spec),
            Err(Error::InfeasibleTarget { .. })
        ));
        assert!(calibrate_prior_sd(&s, 0.95, 0.0, &spec).is_err());
    }

    #[test]
    fn threshold_table_value() {
        let spec = GridSpec::default();
        let n01 = GaussianPrior::new(0.0, 1.0).unwrap();
        let cal = calibrate_threshold(&k5(), &n01, 0.05, &spec).unwrap();
        assert_abs_diff_eq!(cal.value, 0.983, epsilon = 0.001);
        assert_abs_diff_eq!(cal.achieved_alpha, 0.05, epsilon = 1e-5);
        let s1 = DesignSchedule::equal(1, 100, 1.0).unwrap();
        let flat = calibrate_threshold(&s1, &GaussianPrior::flat(), 0.05, &spec).unwrap();
        assert_abs_diff_eq!(flat.value, 0.95, epsilon = 1e-9);
    }

    #[test]
    fn ppos_table_value() {
        let spec = GridSpec::default();
        let cal = calibrate_ppos(&k5(), 0.8, 0.05, 0.05, &spec).unwrap();
        assert_abs_diff_eq!(cal.value, 0.063, epsilon = 0.001);
        assert_abs_diff_eq!(cal.achieved_alpha, 0.05, epsilon = 1e-5);
    }

    #[test]
    fn ppos_flat_target_is_a_no_op() {
        let spec = GridSpec::default();
        let s = DesignSchedule::equal(3, 300, 1.0).unwrap();
        let c = bayes::ppos_boundaries(&[0.8; 3], 0.05, &GaussianPrior::flat(), &s).unwrap();
        let flat = alpha_of(&s, &c, &spec).unwrap();
        let cal = calibrate_ppos(&s, 0.8, 0.05, flat, &spec).unwrap();
        assert!(cal.flat_limit);
    }

    #[test]
    fn loss_table_value() {
        let spec = GridSpec::default();
        let n01 = GaussianPrior::new(0.0, 1.0).unwrap();
        let cal = calibrate_loss(&k5(), &n01, 1000.0, 0.05, &spec).unwrap();
        assert!((cal.value / 34890.0 - 1.0).abs() < 0.02, "{}", cal.value);
        assert_abs_diff_eq!(cal.achieved_alpha, 0.05, epsilon = 2e-3);
    }

    #[test]
    fn loss_single_analysis_closed_form() {
        let spec = GridSpec::default();
        let s = DesignSchedule::equal(1, 1000, 1.0).unwrap();
        let n01 = GaussianPrior::new(0.0, 1.0).unwrap();
        let cal = calibrate_loss(&s, &n01, 1000.0, 0.05, &spec).unwrap();
        let c = BoundarySet::constant(num::upper_quantile(0.05).unwrap(), 1, BoundarySource::Custom).unwrap();
        let g = thresholds_from_boundaries(&c, &n01, &s).unwrap()[0];
        assert_abs_diff_eq!(cal.value / (1000.0 * g / (1.0 - g)), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn threshold_round_trips() {
        let s = k5();
        let obf = frequentist::obrien_fleming(&s, 0.05, &GridSpec::default()).unwrap();
        for prior in [GaussianPrior::new(0.0, 1.0).unwrap(), GaussianPrior::new(0.2, 0.1).unwrap()] {
            let g = thresholds_from_boundaries(&obf, &prior, &s).unwrap();
            let back = bayes::pp_boundaries(&g, &prior, &s).unwrap();
            for (a, b) in obf.c.iter().zip(&back.c) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
        let flat = thresholds_from_boundaries(&obf, &GaussianPrior::flat(), &s).unwrap();
        for (g, c) in flat.iter().zip(&obf.c) {
            assert_abs_diff_eq!(*g, num::norm_cdf(*c), epsilon = 1e-15);
        }
        let zero = BoundarySet::constant(0.0, 5, BoundarySource::Custom).unwrap();
        let g = thresholds_from_boundaries(&zero, &GaussianPrior::new(0.0, 0.3).unwrap(), &s).unwrap();
        assert!(g.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn non_monotone_objective_is_reported() {
        let r = solve_scalar(|x: f64| Ok((x - 1.0).powi(2)), 0.0, 2.0, 0.5, 1e-9);
        assert_eq!(r, Err(Error::NotMonotone));
        let r = solve_scalar(|x: f64| Ok(x), 0.0, 1.0, 2.0, 1e-9);
        assert!(matches!(r, Err(Error::InfeasibleTarget { .. })));
        let (x, v) = solve_scalar(|x: f64| Ok(x * x), 0.0, 2.0, 2.0, 1e-12).unwrap();
        assert_abs_diff_eq!(x, 2f64.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-10);
    }
}
