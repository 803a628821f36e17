//! Conjugate-normal Bayesian machinery for the single-arm Gaussian model:
//! posterior updates, posterior-probability and predictive-probability
//! stopping thresholds, hypothesis-testing mixture priors, the two-arm
//! difference model and the end-of-trial posterior report.

use serde::{Deserialize, Serialize};

use crate::engine::{BoundarySet, BoundarySource, DesignSchedule};
use crate::error::{Error, Result};
use crate::num;
use crate::simulation::TrialRecord;

/// `θ ~ N(mean, sd²)`, or the flat limit `sd → ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: f64,
    pub sd: f64,
    pub flat: bool,
}

impl GaussianPrior {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() || !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::invalid(format!(
                "prior needs a finite mean and positive sd, got N({mean}, {sd}^2)"
            )));
        }
        Ok(GaussianPrior {
            mean,
            sd,
            flat: false,
        })
    }

    pub fn flat() -> Self {
        GaussianPrior {
            mean: 0.0,
            sd: f64::INFINITY,
            flat: true,
        }
    }

    /// `ν⁻²`, zero in the flat limit.
    pub fn precision(&self) -> f64 {
        if self.flat {
            0.0
        } else {
            1.0 / (self.sd * self.sd)
        }
    }

    /// `μ ν⁻²`, zero in the flat limit.
    fn weighted_mean(&self) -> f64 {
        if self.flat {
            0.0
        } else {
            self.mean * self.precision()
        }
    }

    /// Prior mass of `θ > 0`.
    pub fn prob_positive(&self) -> f64 {
        if self.flat {
            0.5
        } else {
            num::norm_cdf(self.mean / self.sd)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPosterior {
    pub mean: f64,
    pub sd: f64,
}

impl NormalPosterior {
    /// `Pr(θ > 0 | data)`.
    pub fn prob_positive(&self) -> f64 {
        num::norm_sf(-self.mean / self.sd)
    }

    /// Equal-tailed credible interval at level `1 − alpha`.
    pub fn credible_interval(&self, alpha: f64) -> Result<(f64, f64)> {
        let q = num::upper_quantile(alpha / 2.0)?;
        Ok((self.mean - q * self.sd, self.mean + q * self.sd))
    }

    pub fn summary(&self, alpha: f64) -> Result<PosteriorSummary> {
        Ok(PosteriorSummary {
            mean: self.mean,
            sd: self.sd,
            prob_positive: self.prob_positive(),
            ci: self.credible_interval(alpha)?,
            level: 1.0 - alpha,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub sd: f64,
    pub prob_positive: f64,
    pub ci: (f64, f64),
    pub level: f64,
}

/// Posterior of `θ` after `n` observations with mean `ybar`.
///
/// `n` may be fractional (effective sample sizes); `n = 0` returns the prior.
pub fn posterior(prior: &GaussianPrior, ybar: f64, n: f64, sigma: f64) -> Result<NormalPosterior> {
    if !(n >= 0.0) || !(sigma > 0.0) {
        return Err(Error::invalid(format!(
            "posterior needs n >= 0 and sigma > 0, got n = {n}, sigma = {sigma}"
        )));
    }
    if n == 0.0 {
        if prior.flat {
            return Err(Error::ImproperPosterior);
        }
        return Ok(NormalPosterior {
            mean: prior.mean,
            sd: prior.sd,
        });
    }
    let data_precision = n / (sigma * sigma);
    let precision = prior.precision() + data_precision;
    Ok(NormalPosterior {
        mean: (prior.weighted_mean() + ybar * data_precision) / precision,
        sd: precision.sqrt().recip(),
    })
}

/// z-threshold equivalent to `Pr(θ > 0 | y_j) > γ`:
/// `c = q_{1−γ} √(1 + ν⁻²σ²/n) − μν⁻² σ/√n`.
pub fn pp_boundary(gamma: f64, prior: &GaussianPrior, n: f64, sigma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain {
            value: gamma,
            domain: "(0, 1)",
        });
    }
    let q = num::norm_quantile(gamma)?;
    let info = n / (sigma * sigma);
    Ok(q * (1.0 + prior.precision() / info).sqrt() - prior.weighted_mean() / info.sqrt())
}

pub fn pp_boundaries(
    gammas: &[f64],
    prior: &GaussianPrior,
    schedule: &DesignSchedule,
) -> Result<BoundarySet> {
    check_len(gammas, schedule)?;
    let c = gammas
        .iter()
        .enumerate()
        .map(|(i, &g)| pp_boundary(g, prior, schedule.n(i + 1), schedule.sigma()))
        .collect::<Result<Vec<_>>>()?;
    BoundarySet::new(c, BoundarySource::BayesPp)
}

fn check_len(gammas: &[f64], schedule: &DesignSchedule) -> Result<()> {
    if gammas.len() != schedule.k() {
        return Err(Error::invalid(format!(
            "{} thresholds for a {}-analysis schedule",
            gammas.len(),
            schedule.k()
        )));
    }
    Ok(())
}

/// Posterior predictive probability that the final analysis declares
/// `Pr(θ > 0 | y_K) > 1 − η`, given `ȳ_j` at interim `analysis`.
pub fn ppos(
    ybar: f64,
    analysis: usize,
    schedule: &DesignSchedule,
    prior: &GaussianPrior,
    eta: f64,
) -> Result<f64> {
    if analysis == 0 || analysis > schedule.k() {
        return Err(Error::invalid(format!(
            "analysis {analysis} outside 1..={}",
            schedule.k()
        )));
    }
    if analysis == schedule.k() {
        return Err(Error::NoFutureData { analysis });
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Domain {
            value: eta,
            domain: "(0, 1)",
        });
    }
    let sigma = schedule.sigma();
    let s2 = sigma * sigma;
    let (nj, nk) = (schedule.n(analysis), schedule.n_max());
    let post = posterior(prior, ybar, nj, sigma)?;

    // final success threshold on the overall mean ȳ_K
    let final_info = nk / s2;
    let q_eta = num::upper_quantile(eta)?;
    let final_cut =
        (q_eta * (prior.precision() + final_info).sqrt() - prior.weighted_mean()) / final_info;

    let remaining = nk - nj;
    let future_cut = (nk * final_cut - nj * ybar) / remaining;
    let pred_sd = (post.sd * post.sd + s2 / remaining).sqrt();
    Ok(num::norm_sf((future_cut - post.mean) / pred_sd))
}

/// z-threshold at `analysis` equivalent to `PPOS_j > γ`; at the final
/// analysis the posterior-probability threshold at level `1 − η`.
pub fn ppos_boundary(
    gamma: f64,
    eta: f64,
    analysis: usize,
    schedule: &DesignSchedule,
    prior: &GaussianPrior,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain {
            value: gamma,
            domain: "(0, 1)",
        });
    }
    let sigma = schedule.sigma();
    if analysis == schedule.k() {
        return pp_boundary(1.0 - eta, prior, schedule.n(analysis), sigma);
    }
    let scale = sigma / schedule.n(analysis).sqrt();
    let mut failure = None;
    let root = num::find_root_increasing(
        |z| match ppos(z * scale, analysis, schedule, prior, eta) {
            Ok(p) => p - gamma,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        -1.0,
        4.0,
        num::Z_TOL,
    );
    match failure {
        Some(e) => Err(e),
        None => root,
    }
}

/// PPOS design boundaries with interim thresholds `gammas[..K-1]`; the last
/// entry of `gammas` is ignored in favour of the final `1 − η` rule.
pub fn ppos_boundaries(
    gammas: &[f64],
    eta: f64,
    prior: &GaussianPrior,
    schedule: &DesignSchedule,
) -> Result<BoundarySet> {
    check_len(gammas, schedule)?;
    let c = gammas
        .iter()
        .enumerate()
        .map(|(i, &g)| ppos_boundary(g, eta, i + 1, schedule, prior))
        .collect::<Result<Vec<_>>>()?;
    BoundarySet::new(c, BoundarySource::BayesPpos)
}

/// Hypothesis-testing prior `(1 − ω) π⁽⁰⁾ + ω π⁽¹⁾`, with `π⁽⁰⁾` the
/// Gaussian `pi0` truncated to `θ ≤ 0` and `π⁽¹⁾` the Gaussian `pi1`
/// truncated to `θ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixturePrior {
    pub omega: f64,
    pub pi0: GaussianPrior,
    pub pi1: GaussianPrior,
}

impl MixturePrior {
    pub fn new(omega: f64, pi0: GaussianPrior, pi1: GaussianPrior) -> Result<Self> {
        if !(omega > 0.0 && omega < 1.0) {
            return Err(Error::Domain {
                value: omega,
                domain: "(0, 1)",
            });
        }
        if pi0.flat || pi1.flat {
            return Err(Error::invalid("mixture components must be proper"));
        }
        Ok(MixturePrior { omega, pi0, pi1 })
    }

    /// The mixture that reproduces a single Gaussian prior.
    pub fn from_single(prior: &GaussianPrior) -> Result<Self> {
        Self::new(prior.prob_positive(), *prior, *prior)
    }
}

/// `Pr(H₁ | data)` under a truncated-normal mixture prior.
///
/// Each marginal likelihood is closed form: the Gaussian prior predictive
/// times the ratio of posterior to prior mass on the component's support.
/// Everything is carried in log space, so extreme z stay finite.
pub fn mixture_posterior_prob(mix: &MixturePrior, ybar: f64, n: f64, sigma: f64) -> Result<f64> {
    if n == 0.0 {
        return Ok(mix.omega);
    }
    let log_marginal = |prior: &GaussianPrior, positive: bool| -> Result<f64> {
        let pred_var = prior.sd * prior.sd + sigma * sigma / n;
        let d = ybar - prior.mean;
        let log_pred = -0.5 * d * d / pred_var - 0.5 * (2.0 * std::f64::consts::PI * pred_var).ln();
        let post = posterior(prior, ybar, n, sigma)?;
        let sign = if positive { 1.0 } else { -1.0 };
        Ok(log_pred + num::log_norm_cdf(sign * post.mean / post.sd)
            - num::log_norm_cdf(sign * prior.mean / prior.sd))
    };
    let l1 = mix.omega.ln() + log_marginal(&mix.pi1, true)?;
    let l0 = (1.0 - mix.omega).ln() + log_marginal(&mix.pi0, false)?;
    Ok(1.0 / (1.0 + (l0 - l1).exp()))
}

/// Posterior of `θ = θ₁ − θ₀` for a two-arm trial with a prior on the
/// difference.
#[allow(clippy::too_many_arguments)]
pub fn two_arm_posterior(
    prior: &GaussianPrior,
    ybar1: f64,
    n1: f64,
    sigma1: f64,
    ybar0: f64,
    n0: f64,
    sigma0: f64,
) -> Result<NormalPosterior> {
    if !(n1 >= 1.0 && n0 >= 1.0 && sigma1 > 0.0 && sigma0 > 0.0) {
        return Err(Error::invalid("two-arm posterior needs n >= 1 and sigma > 0 in each arm"));
    }
    let data_precision = (sigma1 * sigma1 / n1 + sigma0 * sigma0 / n0).recip();
    let precision = prior.precision() + data_precision;
    Ok(NormalPosterior {
        mean: (prior.weighted_mean() + (ybar1 - ybar0) * data_precision) / precision,
        sd: precision.sqrt().recip(),
    })
}

/// Posterior summary at the stopping time. Depends only on the data
/// accumulated by then, not on the stopping rule that produced them.
pub fn posterior_report(
    trial: &TrialRecord,
    prior: &GaussianPrior,
    alpha: f64,
) -> Result<PosteriorSummary> {
    posterior(prior, trial.ybar, trial.n as f64, trial.sigma)?.summary(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn n01() -> GaussianPrior {
        GaussianPrior::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn posterior_limits() {
        let p = GaussianPrior::new(0.3, 0.7).unwrap();
        let post = posterior(&p, 5.0, 0.0, 1.0).unwrap();
        assert_eq!((post.mean, post.sd), (0.3, 0.7));
        let flat = posterior(&GaussianPrior::flat(), 0.2, 100.0, 1.0).unwrap();
        assert_abs_diff_eq!(flat.mean, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(flat.sd, 0.1, epsilon = 1e-15);
        assert_eq!(
            posterior(&GaussianPrior::flat(), 0.2, 0.0, 1.0),
            Err(Error::ImproperPosterior)
        );
        assert!(GaussianPrior::new(0.0, 0.0).is_err());
    }

    /// Self-normalised importance sampling from the prior.
    #[test]
    fn posterior_matches_importance_sampling() {
        let n: f64 = 200.0;
        let ybar = 1.75 / n.sqrt();
        let post = posterior(&n01(), ybar, n, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut sw, mut swx, mut swx2) = (0.0, 0.0, 0.0);
        for _ in 0..1_000_000 {
            let theta: f64 = rng.sample(StandardNormal);
            let d = ybar - theta;
            let w = (-0.5 * d * d * n).exp();
            sw += w;
            swx += w * theta;
            swx2 += w * theta * theta;
        }
        let mean = swx / sw;
        let sd = (swx2 / sw - mean * mean).sqrt();
        assert_abs_diff_eq!(post.mean, mean, epsilon = 2e-3);
        assert_abs_diff_eq!(post.sd, sd, epsilon = 2e-3);
    }

    #[test]
    fn pp_boundary_examples() {
        let flat = GaussianPrior::flat();
        let q = num::norm_quantile(0.95).unwrap();
        assert_eq!(pp_boundary(0.95, &flat, 200.0, 1.0).unwrap(), q);
        let s = DesignSchedule::equal(5, 1000, 1.0).unwrap();
        let v1 = pp_boundaries(&[0.95; 5], &GaussianPrior::new(0.0, 0.054).unwrap(), &s).unwrap();
        for (c, e) in v1.c.iter().zip([2.71, 2.24, 2.06, 1.97, 1.91]) {
            assert_abs_diff_eq!(*c, e, epsilon = 0.01);
        }
        let v2 = pp_boundaries(&[0.983; 5], &n01(), &s).unwrap();
        for (c, e) in v2.c.iter().zip([2.13, 2.12, 2.12, 2.12, 2.12]) {
            assert_abs_diff_eq!(*c, e, epsilon = 0.01);
        }
        assert!(pp_boundary(1.0, &flat, 10.0, 1.0).is_err());
    }

    #[test]
    fn pp_boundary_rises_as_prior_tightens() {
        let sds = [10.0, 3.0, 1.0, 0.3, 0.1, 0.05, 0.01];
        for n in [50.0, 200.0, 1000.0] {
            let c: Vec<f64> = sds
                .iter()
                .map(|&sd| pp_boundary(0.95, &GaussianPrior::new(0.0, sd).unwrap(), n, 1.0).unwrap())
                .collect();
            assert!(c.windows(2).all(|w| w[1] > w[0]), "{c:?}");
        }
    }

    #[test]
    fn ppos_extremes() {
        let s = DesignSchedule::equal(2, 400, 1.0).unwrap();
        let p = n01();
        assert!(ppos(1.0, 1, &s, &p, 0.05).unwrap() > 1.0 - 1e-12);
        assert!(ppos(-1.0, 1, &s, &p, 0.05).unwrap() < 1e-12);
        assert!(matches!(ppos(0.0, 2, &s, &p, 0.05), Err(Error::NoFutureData { .. })));
        let mut prev = 0.0;
        for i in -40..=40 {
            let v = ppos(i as f64 * 0.005, 1, &s, &p, 0.05).unwrap();
            assert!((0.0..=1.0).contains(&v) && v >= prev);
            prev = v;
        }
    }

    #[test]
    fn ppos_approaches_pp_with_unbounded_remaining_data() {
        let p = GaussianPrior::new(0.05, 0.5).unwrap();
        let nj = 10u64;
        let ybar = 0.2;
        let pp = posterior(&p, ybar, nj as f64, 1.0).unwrap().prob_positive();
        let s = DesignSchedule::new(vec![nj, 10_000_000], 1.0).unwrap();
        let v = ppos(ybar, 1, &s, &p, 0.05).unwrap();
        assert_abs_diff_eq!(v, pp, epsilon = 1e-3);
        // and the gap shrinks like (n_j / n_K)^{1/2}
        let gap = |nk: u64| {
            let s = DesignSchedule::new(vec![nj, nk], 1.0).unwrap();
            (ppos(ybar, 1, &s, &p, 0.05).unwrap() - pp).abs()
        };
        assert!(gap(100_000_000) < gap(1_000_000) / 5.0);
    }

    /// Predictive simulation: draw θ from the interim posterior, then the
    /// mean of the remaining observations, and apply the final rule.
    #[test]
    fn ppos_matches_predictive_simulation() {
        let s = DesignSchedule::equal(5, 1000, 1.0).unwrap();
        let p = GaussianPrior::new(0.0, 0.063).unwrap();
        let (j, ybar) = (2usize, 0.11);
        let exact = ppos(ybar, j, &s, &p, 0.05).unwrap();
        let post = posterior(&p, ybar, s.n(j), 1.0).unwrap();
        let remaining = s.n_max() - s.n(j);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reps = 100_000;
        let mut hits = 0u32;
        for _ in 0..reps {
            let theta = post.mean + post.sd * rng.sample::<f64, _>(StandardNormal);
            let future = theta + rng.sample::<f64, _>(StandardNormal) / remaining.sqrt();
            let total = (s.n(j) * ybar + remaining * future) / s.n_max();
            let pp = posterior(&p, total, s.n_max(), 1.0).unwrap().prob_positive();
            if pp > 0.95 {
                hits += 1;
            }
        }
        let est = hits as f64 / reps as f64;
        let se = (exact * (1.0 - exact) / reps as f64).sqrt();
        assert!((est - exact).abs() < 3.0 * se, "exact {exact}, sim {est}");
    }

    #[test]
    fn ppos_boundaries_k5() {
        let s = DesignSchedule::equal(5, 1000, 1.0).unwrap();
        let p = GaussianPrior::new(0.0, 0.063).unwrap();
        let b = ppos_boundaries(&[0.8; 5], 0.05, &p, &s).unwrap();
        for (c, e) in b.c.iter().zip([2.50, 2.26, 2.18, 2.11, 1.84]) {
            assert_abs_diff_eq!(*c, e, epsilon = 0.01);
        }
        assert_abs_diff_eq!(b.c[4], pp_boundary(0.95, &p, 1000.0, 1.0).unwrap(), epsilon = 1e-15);
        for j in 1..5 {
            let v = ppos(b.c[j - 1] / s.n(j).sqrt(), j, &s, &p, 0.05).unwrap();
            assert_abs_diff_eq!(v, 0.8, epsilon = 1e-6);
        }
    }

    #[test]
    fn flat_ppos_boundary_approaches_pp_threshold() {
        let s = DesignSchedule::new(vec![100, 1_000_000_000], 1.0).unwrap();
        let c = ppos_boundary(0.9, 0.05, 1, &s, &GaussianPrior::flat()).unwrap();
        assert_abs_diff_eq!(c, num::norm_quantile(0.9).unwrap(), epsilon = 1e-3);
    }

    /// `Pr(H₁ | data)` by brute-force quadrature of both truncated integrals.
    fn mixture_by_quadrature(mix: &MixturePrior, ybar: f64, n: f64, sigma: f64) -> f64 {
        let se = sigma / n.sqrt();
        let lik = |t: f64| num::norm_pdf((ybar - t) / se);
        let dens = |p: &GaussianPrior, t: f64| num::norm_pdf((t - p.mean) / p.sd) / p.sd;
        let lo = (ybar - 12.0 * se).min(-12.0 * mix.pi0.sd + mix.pi0.mean).min(-1e-9);
        let hi = (ybar + 12.0 * se).max(12.0 * mix.pi1.sd + mix.pi1.mean).max(1e-9);
        let g0 = num::Grid::simpson(lo.min(0.0 - 1e-9), 0.0, 40_001).unwrap();
        let g1 = num::Grid::simpson(0.0, hi, 40_001).unwrap();
        let m0 = g0.integrate(|t| lik(t) * dens(&mix.pi0, t)) / num::norm_cdf(-mix.pi0.mean / mix.pi0.sd);
        let m1 = g1.integrate(|t| lik(t) * dens(&mix.pi1, t)) / num::norm_cdf(mix.pi1.mean / mix.pi1.sd);
        mix.omega * m1 / (mix.omega * m1 + (1.0 - mix.omega) * m0)
    }

    #[test]
    fn mixture_examples() {
        let p = GaussianPrior::new(0.0, 1.0).unwrap();
        let mix = MixturePrior::new(0.5, p, p).unwrap();
        assert_abs_diff_eq!(mixture_posterior_prob(&mix, 0.0, 50.0, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        let mix = MixturePrior::new(0.3, p, GaussianPrior::new(0.2, 0.4).unwrap()).unwrap();
        assert_eq!(mixture_posterior_prob(&mix, 1.0, 0.0, 1.0).unwrap(), 0.3);
        for (ybar, n) in [(0.05, 40.0), (-0.1, 200.0), (0.3, 10.0)] {
            let exact = mixture_posterior_prob(&mix, ybar, n, 1.0).unwrap();
            let quad = mixture_by_quadrature(&mix, ybar, n, 1.0);
            assert_abs_diff_eq!(exact, quad, epsilon = 1e-8);
        }
        // extreme data stay finite
        let v = mixture_posterior_prob(&mix, 5.0, 1000.0, 1.0).unwrap();
        assert!(v.is_finite() && v > 0.999_999);
        let v = mixture_posterior_prob(&mix, -5.0, 1000.0, 1.0).unwrap();
        assert!(v.is_finite() && (0.0..1e-6).contains(&v));
    }

    #[test]
    fn two_arm_examples() {
        let p = GaussianPrior::new(0.0, 0.5).unwrap();
        let post = two_arm_posterior(&p, 0.4, 30.0, 1.0, 0.4, 50.0, 2.0).unwrap();
        assert_abs_diff_eq!(post.mean, 0.0, epsilon = 1e-15);
        let flat = two_arm_posterior(&GaussianPrior::flat(), 0.5, 40.0, 1.0, 0.2, 60.0, 1.5).unwrap();
        assert_abs_diff_eq!(flat.mean, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(flat.sd * flat.sd, 1.0 / 40.0 + 2.25 / 60.0, epsilon = 1e-15);
        // reduction to the single-arm update with an effective sample size
        let sigma = 1.3;
        let (s1, n1, s0, n0) = (1.0, 40.0, 1.5, 60.0);
        let two = two_arm_posterior(&p, 0.5, n1, s1, 0.2, n0, s0).unwrap();
        let n_eff = sigma * sigma / (s1 * s1 / n1 + s0 * s0 / n0);
        let one = posterior(&p, 0.3, n_eff, sigma).unwrap();
        assert_abs_diff_eq!(two.mean, one.mean, epsilon = 1e-14);
        assert_abs_diff_eq!(two.sd, one.sd, epsilon = 1e-14);
    }

    #[test]
    fn report_ignores_the_stopping_rule() {
        let p = GaussianPrior::new(0.0, 0.5).unwrap();
        let rec = |k: usize, t: usize| TrialRecord {
            theta_true: 0.1,
            stop_analysis: t,
            k,
            z_at_stop: 2.3,
            ybar: 0.115,
            n: 400,
            sigma: 1.0,
            rejected: true,
            posterior: posterior(&p, 0.115, 400.0, 1.0).unwrap().summary(0.05).unwrap(),
            ci_covers: true,
        };
        let a = posterior_report(&rec(1, 1), &p, 0.05).unwrap();
        let b = posterior_report(&rec(5, 2), &p, 0.05).unwrap();
        assert_eq!(a, b);
        let q = num::upper_quantile(0.025).unwrap();
        assert_abs_diff_eq!(a.ci.0, a.mean - q * a.sd, epsilon = 1e-12);
        assert_abs_diff_eq!(a.ci.1, a.mean + q * a.sd, epsilon = 1e-12);
        assert_abs_diff_eq!(q, 1.96, epsilon = 1e-3);
        let flat = posterior(&GaussianPrior::flat(), 0.0, 100.0, 1.0).unwrap().summary(0.05).unwrap();
        assert_abs_diff_eq!(flat.ci.0, -0.196, epsilon = 1e-4);
        assert_abs_diff_eq!(flat.ci.1, 0.196, epsilon = 1e-4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn threshold_and_posterior_rule_agree(
                mean in -0.5f64..0.5, sd in 0.01f64..5.0, gamma in 0.5f64..0.999,
                n in 1u32..5000, z in -4.0f64..6.0,
            ) {
                let p = GaussianPrior::new(mean, sd).unwrap();
                let n = n as f64;
                let c = pp_boundary(gamma, &p, n, 1.0).unwrap();
                let pp = posterior(&p, z / n.sqrt(), n, 1.0).unwrap().prob_positive();
                prop_assume!((z - c).abs() > 1e-9);
                prop_assert_eq!(z > c, pp > gamma);
            }

            #[test]
            fn mixture_of_truncations_equals_single_prior(
                t in -1.0f64..1.0, sd in 0.05f64..3.0, ybar in -0.5f64..0.5, n in 1u32..2000,
            ) {
                // both hypotheses keep prior mass: |μ/ν| ≤ 5
                let p = GaussianPrior::new(t * (5.0 * sd).min(1.0), sd).unwrap();
                let mix = MixturePrior::from_single(&p).unwrap();
                let n = n as f64;
                let a = mixture_posterior_prob(&mix, ybar, n, 1.0).unwrap();
                let b = posterior(&p, ybar, n, 1.0).unwrap().prob_positive();
                prop_assert!((a - b).abs() < 1e-6);
            }

            #[test]
            fn ppos_is_monotone_in_interim_mean(y1 in -0.5f64..0.5, dy in 0.0f64..0.2, sd in 0.05f64..2.0) {
                let s = DesignSchedule::equal(4, 400, 1.0).unwrap();
                let p = GaussianPrior::new(0.0, sd).unwrap();
                let a = ppos(y1, 2, &s, &p, 0.05).unwrap();
                let b = ppos(y1 + dy, 2, &s, &p, 0.05).unwrap();
                prop_assert!((0.0..=1.0).contains(&a) && b >= a);
            }
        }
    }
}
