use anyhow::Result;

use seqdesign::bayes::{self, GaussianPrior};
use seqdesign::calibration::{self, Calibration};
use seqdesign::decision::{self, LossSpec};
use seqdesign::engine::crossing_prob;
use seqdesign::frequentist::{self, SpendingFunction, SpendingKind};
use seqdesign::simulation::{self, EffectModel, GridCell, OCReport, Scenario};
use seqdesign::{BoundarySet, DesignSchedule, GridSpec};

use crate::config::{
    self, config_error, CalibrationTarget, Config, Family, OneOrMany, PriorConfig, ScheduleConfig,
};
use crate::output::{self, Cell, Table};
use crate::{Cli, Command, PriorArgs, ScheduleArgs, SpendingArg};

const DEFAULT_K: usize = 5;
const DEFAULT_N_MAX: u64 = 1000;
const DEFAULT_ALPHA: f64 = 0.05;
const DEFAULT_TRIALS: usize = 10_000;

pub const GRID_NU0: [f64; 3] = [0.1, 0.5, 1.0];
pub const GRID_NU: [f64; 4] = [0.1, 0.5, 1.0, 10.0];
pub const GRID_K: [usize; 6] = [1, 2, 5, 10, 100, 1000];

pub fn run(cli: Cli) -> Result<()> {
    let cfg = config::load(cli.config.as_deref())?;
    let table = match cli.command {
        Command::Boundaries {
            schedule,
            prior,
            family,
            alpha,
            gamma,
            eta,
            spending,
            power_b,
            xi0,
            xi1,
            all,
        } => {
            let schedule = resolve_schedule(&schedule, cfg.schedule.as_ref())?;
            let design = cfg.design.clone().unwrap_or_default();
            let alpha = alpha.or(design.alpha).unwrap_or(DEFAULT_ALPHA);
            if all {
                all_boundaries(&schedule, alpha)?
            } else {
                let family = family
                    .or(design.family)
                    .ok_or_else(|| config_error("boundaries needs --family, --all or design.family"))?;
                let spending = match spending {
                    Some(SpendingArg::LogE) => Some(SpendingKind::LogE),
                    Some(SpendingArg::ObfLike) => Some(SpendingKind::ObfLike),
                    Some(SpendingArg::Power) => Some(SpendingKind::Power {
                        b: power_b.unwrap_or(1.0),
                    }),
                    None => design.spending,
                };
                let params = DesignParams {
                    alpha,
                    gamma: gamma.or(design.gamma),
                    eta: eta.or(design.eta),
                    spending,
                    prior: resolve_prior(&prior, cfg.prior.as_ref(), None)?,
                    loss: resolve_loss(xi0, xi1.map(|x| vec![x]), None, &cfg, schedule.k())?,
                };
                let (c, label, name, value) = family_boundaries(family, &schedule, &params)?;
                boundary_table(&[(label, name, value, c)], schedule.k())
            }
        }
        Command::Calibrate {
            schedule,
            prior,
            target,
            alpha,
            gamma,
            eta,
            xi0,
        } => {
            let schedule = resolve_schedule(&schedule, cfg.schedule.as_ref())?;
            let cal_cfg = cfg.calibration.clone().unwrap_or_default();
            let target = target
                .or(cal_cfg.target)
                .ok_or_else(|| config_error("calibrate needs --target or calibration.target"))?;
            let alpha = alpha.or(cal_cfg.alpha).unwrap_or(DEFAULT_ALPHA);
            let design = cfg.design.clone().unwrap_or_default();
            let gamma = gamma.or(design.gamma);
            let eta = eta.or(design.eta);
            let xi0 = xi0.or(cfg.loss.as_ref().and_then(|l| l.xi0));
            let prior = resolve_prior(&prior, cfg.prior.as_ref(), Some(n01()))?;
            calibrate(target, &schedule, &prior, alpha, gamma, eta, xi0)?
        }
        Command::OcSim {
            schedule,
            prior,
            grid,
            seed,
            trials,
            nu0,
            mu0,
            theta,
            gamma,
            records,
            wide,
            workers,
        } => {
            let sim = cfg.simulation.clone().unwrap_or_default();
            let seed = seed
                .or(sim.seed)
                .ok_or_else(|| config_error("oc-sim needs --seed or simulation.seed"))?;
            let trials = trials.or(sim.trials).unwrap_or(DEFAULT_TRIALS);
            let gamma = gamma
                .or(cfg.design.as_ref().and_then(|d| d.gamma))
                .unwrap_or(0.95);
            let schedule = resolve_schedule(&schedule, cfg.schedule.as_ref())?;
            let analysis_prior = resolve_prior(&prior, cfg.prior.as_ref(), Some(n01()))?;
            let gen_prior = match (theta.or(sim.theta), nu0.or(sim.nu0)) {
                (Some(theta), _) => EffectModel::Point { theta },
                (None, Some(sd)) => EffectModel::Normal {
                    mean: mu0.or(sim.mu0).unwrap_or(0.0),
                    sd,
                },
                (None, None) if analysis_prior.flat => {
                    return Err(config_error("oc-sim with a flat analysis prior needs --nu0 or --theta"))
                }
                (None, None) => EffectModel::Normal {
                    mean: analysis_prior.mean,
                    sd: analysis_prior.sd,
                },
            };
            let scenario = Scenario {
                gen_prior,
                analysis_prior,
                gamma: vec![gamma; schedule.k()],
                schedule,
                n_trials: trials,
                seed,
                ci_alpha: sim.ci_alpha.unwrap_or(0.05),
            };
            let mode = SimMode {
                grid: grid.or(sim.grid).is_some(),
                records: records || sim.records,
                wide,
            };
            match workers {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()?
                    .install(|| oc_sim(&scenario, mode))?,
                None => oc_sim(&scenario, mode)?,
            }
        }
        Command::Decide {
            schedule,
            prior,
            xi0,
            xi1,
            patient_cost,
            analysis,
            z,
            curves,
        } => {
            let schedule = resolve_schedule(&schedule, cfg.schedule.as_ref())?;
            let prior = resolve_prior(&prior, cfg.prior.as_ref(), Some(n01()))?;
            let loss = resolve_loss(xi0, xi1, patient_cost, &cfg, schedule.k())?
                .ok_or_else(|| config_error("decide needs xi0 and xi1 (flags or [loss])"))?;
            let dcfg = cfg.decision.clone().unwrap_or_default();
            let analysis = analysis.or(dcfg.analysis).unwrap_or(1);
            let z = z.or(dcfg.z);
            decide(&schedule, &prior, &loss, analysis, z, curves)?
        }
        Command::Report {
            prior,
            ybar,
            n,
            sigma,
            k,
            stop_analysis,
            alpha,
        } => {
            let obs = cfg.observed.clone().unwrap_or_default();
            let ybar = ybar
                .or(obs.ybar)
                .ok_or_else(|| config_error("report needs --ybar or observed.ybar"))?;
            let n = n
                .or(obs.n)
                .ok_or_else(|| config_error("report needs --n or observed.n"))?;
            let sigma = sigma.or(obs.sigma).unwrap_or(1.0);
            if let (Some(k), Some(t)) = (k.or(obs.k), stop_analysis.or(obs.stop_analysis)) {
                if t == 0 || t > k {
                    return Err(config_error(format!("stop analysis {t} outside 1..={k}")));
                }
            }
            let prior = resolve_prior(&prior, cfg.prior.as_ref(), Some(GaussianPrior::flat()))?;
            let alpha = alpha.or(obs.alpha).unwrap_or(DEFAULT_ALPHA);
            report(&prior, ybar, n, sigma, alpha)?
        }
    };
    output::emit(&table.render(cli.format), cli.out.as_deref())
}

fn n01() -> GaussianPrior {
    GaussianPrior::new(0.0, 1.0).expect("valid prior")
}

fn resolve_schedule(args: &ScheduleArgs, cfg: Option<&ScheduleConfig>) -> Result<DesignSchedule> {
    let cfg = cfg.cloned().unwrap_or_default();
    let sigma = args.sigma.or(cfg.sigma).unwrap_or(1.0);
    let explicit = args.sizes.clone().or_else(|| {
        if args.k.is_some() || args.nmax.is_some() {
            None
        } else {
            cfg.sizes.clone()
        }
    });
    let schedule = match explicit {
        Some(sizes) => DesignSchedule::new(sizes, sigma),
        None => DesignSchedule::equal(
            args.k.or(cfg.k).unwrap_or(DEFAULT_K),
            args.nmax.or(cfg.n_max).unwrap_or(DEFAULT_N_MAX),
            sigma,
        ),
    };
    schedule.map_err(|e| config_error(format!("schedule: {e}")))
}

fn resolve_prior(
    args: &PriorArgs,
    cfg: Option<&PriorConfig>,
    default: Option<GaussianPrior>,
) -> Result<GaussianPrior> {
    let cfg = cfg.cloned().unwrap_or_default();
    if args.flat || (cfg.flat && args.prior_sd.is_none()) {
        return Ok(GaussianPrior::flat());
    }
    let mean = args.prior_mean.or(cfg.mean);
    match args.prior_sd.or(cfg.sd) {
        Some(sd) => GaussianPrior::new(mean.unwrap_or(0.0), sd)
            .map_err(|e| config_error(format!("prior: {e}"))),
        None => match default {
            Some(mut p) => {
                if let (Some(m), false) = (mean, p.flat) {
                    p.mean = m;
                }
                Ok(p)
            }
            None => Ok(n01()),
        },
    }
}

fn resolve_loss(
    xi0: Option<f64>,
    xi1: Option<Vec<f64>>,
    patient_cost: Option<f64>,
    cfg: &Config,
    k: usize,
) -> Result<Option<LossSpec>> {
    let lc = cfg.loss.clone().unwrap_or_default();
    let xi0 = xi0.or(lc.xi0);
    let xi1 = xi1.or(lc.xi1.map(|x| match x {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    }));
    let (Some(xi0), Some(xi1)) = (xi0, xi1) else {
        return Ok(None);
    };
    let xi1 = if xi1.len() == 1 { vec![xi1[0]; k] } else { xi1 };
    let cost = patient_cost.or(lc.patient_cost).unwrap_or(1.0);
    LossSpec::new(xi1, xi0, cost)
        .map(Some)
        .map_err(|e| config_error(format!("loss: {e}")))
}

struct DesignParams {
    alpha: f64,
    gamma: Option<f64>,
    eta: Option<f64>,
    spending: Option<SpendingKind>,
    prior: GaussianPrior,
    loss: Option<LossSpec>,
}

/// Boundaries for one family, with a label and its headline parameter.
fn family_boundaries(
    family: Family,
    schedule: &DesignSchedule,
    p: &DesignParams,
) -> Result<(BoundarySet, String, &'static str, f64)> {
    let spec = GridSpec::for_analyses(schedule.k());
    Ok(match family {
        Family::Pocock => (
            frequentist::pocock(schedule, p.alpha, &spec)?,
            "pocock".into(),
            "alpha",
            p.alpha,
        ),
        Family::Obf => (
            frequentist::obrien_fleming(schedule, p.alpha, &spec)?,
            "obf".into(),
            "alpha",
            p.alpha,
        ),
        Family::Spending => {
            let kind = p.spending.unwrap_or(SpendingKind::Power { b: 1.0 });
            let h = SpendingFunction::new(kind, p.alpha)?;
            let label = match kind {
                SpendingKind::LogE => "spending-log-e".to_string(),
                SpendingKind::ObfLike => "spending-obf-like".to_string(),
                SpendingKind::Power { b } if b == 1.0 => "spending-linear".to_string(),
                SpendingKind::Power { b } => format!("spending-power-{b}"),
            };
            (frequentist::spending_boundaries(schedule, &h, &spec)?, label, "alpha", p.alpha)
        }
        Family::Pp => {
            let g = p.gamma.unwrap_or(0.95);
            (
                bayes::pp_boundaries(&vec![g; schedule.k()], &p.prior, schedule)?,
                "pp".into(),
                "gamma",
                g,
            )
        }
        Family::Ppos => {
            let g = p.gamma.unwrap_or(0.8);
            let eta = p.eta.unwrap_or(0.05);
            (
                bayes::ppos_boundaries(&vec![g; schedule.k()], eta, &p.prior, schedule)?,
                "ppos".into(),
                "gamma",
                g,
            )
        }
        Family::Decision => {
            let loss = p
                .loss
                .as_ref()
                .ok_or_else(|| config_error("decision boundaries need xi0 and xi1"))?;
            let table = decision::backward_induction(schedule, &p.prior, loss)?;
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            (table.boundaries()?, "decision".into(), "xi1", loss.xi1[0])
        }
        Family::Curtailment => {
            let eta = p.eta.unwrap_or(p.alpha);
            let g = p.gamma.unwrap_or(0.8);
            (
                frequentist::curtailment_boundaries(schedule, eta, g)?,
                "curtailment".into(),
                "gamma",
                g,
            )
        }
    })
}

fn boundary_table(rows: &[(String, &str, f64, BoundarySet)], k: usize) -> Table {
    let mut header = vec!["design".to_string(), "parameter".into(), "value".into()];
    header.extend((1..=k).map(|j| format!("c{j}")));
    let mut t = Table::new(header);
    for (label, name, value, c) in rows {
        let mut row: Vec<Cell> = vec![label.as_str().into(), (*name).into(), (*value).into()];
        row.extend(c.c.iter().map(|&x| Cell::Num(x)));
        t.push(row);
    }
    t
}

/// All seven families, the Bayesian ones calibrated to `alpha`.
fn all_boundaries(schedule: &DesignSchedule, alpha: f64) -> Result<Table> {
    let spec = GridSpec::for_analyses(schedule.k());
    let k = schedule.k();
    let n01 = n01();
    let mut rows = Vec::new();
    rows.push(("pocock".to_string(), "alpha", alpha, frequentist::pocock(schedule, alpha, &spec)?));
    rows.push(("obf".into(), "alpha", alpha, frequentist::obrien_fleming(schedule, alpha, &spec)?));
    rows.push((
        "spending-linear".into(),
        "alpha",
        alpha,
        frequentist::spending_boundaries(schedule, &SpendingFunction::linear(alpha)?, &spec)?,
    ));

    let nu = calibration::calibrate_prior_sd(schedule, 0.95, alpha, &spec)?;
    let prior = calibrated_prior(&nu)?;
    rows.push(("pp-prior".into(), "nu", nu.value, bayes::pp_boundaries(&vec![0.95; k], &prior, schedule)?));

    let g = calibration::calibrate_threshold(schedule, &n01, alpha, &spec)?;
    rows.push(("pp-threshold".into(), "gamma", g.value, bayes::pp_boundaries(&vec![g.value; k], &n01, schedule)?));

    let nu = calibration::calibrate_ppos(schedule, 0.8, 0.05, alpha, &spec)?;
    let prior = calibrated_prior(&nu)?;
    rows.push((
        "ppos".into(),
        "nu",
        nu.value,
        bayes::ppos_boundaries(&vec![0.8; k], 0.05, &prior, schedule)?,
    ));

    let xi = calibration::calibrate_loss(schedule, &n01, 1000.0, alpha, &spec)?;
    let loss = LossSpec::constant(xi.value, k, 1000.0)?;
    rows.push((
        "decision".into(),
        "xi1",
        xi.value,
        decision::backward_induction(schedule, &n01, &loss)?.boundaries()?,
    ));
    Ok(boundary_table(&rows, k))
}

fn calibrated_prior(cal: &Calibration) -> Result<GaussianPrior> {
    Ok(if cal.flat_limit {
        GaussianPrior::flat()
    } else {
        GaussianPrior::new(0.0, cal.value)?
    })
}

fn calibrate(
    target: CalibrationTarget,
    schedule: &DesignSchedule,
    prior: &GaussianPrior,
    alpha: f64,
    gamma: Option<f64>,
    eta: Option<f64>,
    xi0: Option<f64>,
) -> Result<Table> {
    let spec = GridSpec::for_analyses(schedule.k());
    let (name, cal) = match target {
        CalibrationTarget::PriorSd => (
            "nu",
            calibration::calibrate_prior_sd(schedule, gamma.unwrap_or(0.95), alpha, &spec)?,
        ),
        CalibrationTarget::Threshold => (
            "gamma",
            calibration::calibrate_threshold(schedule, prior, alpha, &spec)?,
        ),
        CalibrationTarget::Ppos => (
            "nu",
            calibration::calibrate_ppos(
                schedule,
                gamma.unwrap_or(0.8),
                eta.unwrap_or(0.05),
                alpha,
                &spec,
            )?,
        ),
        CalibrationTarget::Loss => (
            "xi1",
            calibration::calibrate_loss(schedule, prior, xi0.unwrap_or(1000.0), alpha, &spec)?,
        ),
    };
    let mut t = Table::new([
        "parameter",
        "value",
        "target_alpha",
        "achieved_alpha",
        "flat_limit",
    ]);
    t.push(vec![
        name.into(),
        cal.value.into(),
        alpha.into(),
        cal.achieved_alpha.into(),
        cal.flat_limit.into(),
    ]);
    t.single = true;
    Ok(t)
}

#[derive(Debug, Clone, Copy)]
struct SimMode {
    grid: bool,
    records: bool,
    wide: bool,
}

fn pct(e: Option<simulation::Estimate>) -> (Cell, Cell) {
    match e {
        Some(e) => ((100.0 * e.value).into(), (100.0 * e.se).into()),
        None => (Cell::Missing, Cell::Missing),
    }
}

fn report_row(nu0: Cell, nu: Cell, k: usize, r: &OCReport, exact: Cell) -> Vec<Cell> {
    let (fdr, fdr_se) = pct(r.fdr);
    let (fpr, fpr_se) = pct(r.fpr);
    let (cov, cov_se) = pct(Some(r.coverage));
    vec![
        nu0,
        nu,
        k.into(),
        r.n_trials.into(),
        r.rejection_count.into(),
        r.null_count.into(),
        r.false_rejection_count.into(),
        (r.rejection_count as f64 / r.n_trials as f64).into(),
        exact,
        fdr,
        fdr_se,
        fpr,
        fpr_se,
        cov,
        cov_se,
    ]
}

const REPORT_HEADER: [&str; 15] = [
    "nu0",
    "nu",
    "k",
    "trials",
    "rejections",
    "nulls",
    "false_rejections",
    "rejection_rate",
    "exact_rejection_rate",
    "fdr_pct",
    "fdr_se_pct",
    "fpr_pct",
    "fpr_se_pct",
    "coverage_pct",
    "coverage_se_pct",
];

fn oc_sim(sc: &Scenario, mode: SimMode) -> Result<Table> {
    if mode.grid {
        let base = Scenario {
            gen_prior: EffectModel::Normal { mean: 0.0, sd: 1.0 },
            analysis_prior: n01(),
            ..sc.clone()
        };
        let cells = simulation::scenario_grid(&base, &GRID_NU0, &GRID_NU, &GRID_K)?;
        return Ok(if mode.wide {
            wide_grid(&cells)
        } else {
            let mut t = Table::new(REPORT_HEADER);
            for c in &cells {
                t.push(report_row(c.nu0.into(), c.nu.into(), c.k, &c.report, Cell::Missing));
            }
            t
        });
    }
    let records = simulation::run_scenario(sc)?;
    if mode.records {
        let mut t = Table::new([
            "trial",
            "theta",
            "stop_analysis",
            "z",
            "ybar",
            "n",
            "rejected",
            "post_mean",
            "post_sd",
            "prob_positive",
            "ci_lower",
            "ci_upper",
            "ci_covers",
        ]);
        for (i, r) in records.iter().enumerate() {
            t.push(vec![
                (i + 1).into(),
                r.theta_true.into(),
                r.stop_analysis.into(),
                r.z_at_stop.into(),
                r.ybar.into(),
                r.n.into(),
                r.rejected.into(),
                r.posterior.mean.into(),
                r.posterior.sd.into(),
                r.posterior.prob_positive.into(),
                r.posterior.ci.0.into(),
                r.posterior.ci.1.into(),
                r.ci_covers.into(),
            ]);
        }
        return Ok(t);
    }
    let report = simulation::estimate_oc(&records)?;
    let (nu0, exact) = match sc.gen_prior {
        EffectModel::Point { theta } => {
            let c = bayes::pp_boundaries(&sc.gamma, &sc.analysis_prior, &sc.schedule)?;
            let spec = GridSpec::for_analyses(sc.schedule.k());
            (Cell::Num(0.0), Cell::Num(crossing_prob(&sc.schedule, &c, theta, &spec)?))
        }
        EffectModel::Normal { sd, .. } | EffectModel::NonPositive { sd, .. } => {
            (Cell::Num(sd), Cell::Missing)
        }
    };
    let nu = if sc.analysis_prior.flat {
        Cell::Num(f64::INFINITY)
    } else {
        Cell::Num(sc.analysis_prior.sd)
    };
    let mut t = Table::new(REPORT_HEADER);
    t.push(report_row(nu0, nu, sc.schedule.k(), &report, exact));
    Ok(t)
}

/// One row per (nu0, K); FDR, FPR and coverage blocks over nu, in percent.
fn wide_grid(cells: &[GridCell]) -> Table {
    let mut header = vec!["nu0".to_string(), "k".into()];
    for metric in ["fdr", "fpr", "coverage"] {
        header.extend(GRID_NU.iter().map(|nu| format!("{metric}_nu{nu}")));
    }
    let mut t = Table::new(header);
    for chunk in cells.chunks(GRID_NU.len()) {
        let mut row: Vec<Cell> = vec![chunk[0].nu0.into(), chunk[0].k.into()];
        row.extend(chunk.iter().map(|c| pct(c.report.fdr).0));
        row.extend(chunk.iter().map(|c| pct(c.report.fpr).0));
        row.extend(chunk.iter().map(|c| pct(Some(c.report.coverage)).0));
        t.push(row);
    }
    t
}

fn decide(
    schedule: &DesignSchedule,
    prior: &GaussianPrior,
    loss: &LossSpec,
    analysis: usize,
    z: Option<f64>,
    curves: bool,
) -> Result<Table> {
    let k = schedule.k();
    if analysis == 0 || analysis > k {
        return Err(config_error(format!("analysis {analysis} outside 1..={k}")));
    }
    let table = decision::backward_induction(schedule, prior, loss)?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    let stage = table.analysis(analysis);
    if curves {
        let mut t = Table::new(["z", "stop_risk", "continue_risk"]);
        for (i, &zi) in table.z_grid().iter().enumerate() {
            t.push(vec![
                zi.into(),
                stage.stop_risk[i].into(),
                stage.continue_risk[i].into(),
            ]);
        }
        return Ok(t);
    }
    let z = z.ok_or_else(|| config_error("decide needs --z or decision.z"))?;
    let threshold = decision::subjective_threshold(loss.xi1[k - 1], loss.xi0)?;
    let mut t = Table::new([
        "analysis",
        "z",
        "action",
        "stop_risk",
        "continue_risk",
        "boundary",
        "final_threshold",
    ]);
    t.push(vec![
        analysis.into(),
        z.into(),
        table.decide(analysis, z)?.label().into(),
        table.stop_risk_at(analysis, z)?.into(),
        table.continue_risk_at(analysis, z)?.into(),
        stage.boundary.into(),
        threshold.into(),
    ]);
    t.single = true;
    Ok(t)
}

fn report(prior: &GaussianPrior, ybar: f64, n: u64, sigma: f64, alpha: f64) -> Result<Table> {
    let s = bayes::posterior(prior, ybar, n as f64, sigma)?.summary(alpha)?;
    let mut t = Table::new([
        "mean",
        "sd",
        "prob_positive",
        "ci_lower",
        "ci_upper",
        "level",
    ]);
    t.push(vec![
        s.mean.into(),
        s.sd.into(),
        s.prob_positive.into(),
        s.ci.0.into(),
        s.ci.1.into(),
        s.level.into(),
    ]);
    t.single = true;
    Ok(t)
}
