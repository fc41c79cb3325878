//! One function per subcommand. Shared resolution order everywhere:
//! command-line flag, then config file entry, then built-in default.

use nalgebra::DVector;
use std::path::Path;

use gridge::causal::{
    diagnostics, fit_propensity, ipw_mean, ipw_quantile, CausalDataset, PropensityConfig,
};
use gridge::dataset::{read_csv_columns, Dataset};
use gridge::estimator::fit_mle;
use gridge::family::Family;
use gridge::mclab::{run_study, DgpSpec, MetricsReport, StudyOptions, StudySpec, TailRanking};
use gridge::penalty::{build_template, PenaltyTemplate, Weighting};
use gridge::risk::{ImprovementRange, MomentInputs};
use gridge::tuner::{
    build_grid, lambda_max, refit_at, select_cv, select_sure, SelectorSpec, SureInputs,
};

use crate::config::{CausalSection, ConfigFile, RiskSection, SimulateSection};
use crate::reports::{
    emit_json, write_curve_csv, write_propensity_histogram, write_records_csv, CausalReport,
    FitBlock, FitReport, RiskPoint, RiskReport, SimulateReport, ThresholdReport, TuneReport,
};
use crate::{CausalArgs, CliError, FitArgs, RiskArgs, SimulateArgs, TuneArgs};

fn parse_family(name: &str) -> Result<Family, CliError> {
    name.parse::<Family>()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn parse_weighting(name: &str) -> Result<Weighting, CliError> {
    name.parse::<Weighting>()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn require<T>(value: Option<T>, what: &str) -> Result<T, CliError> {
    value.ok_or_else(|| {
        CliError::Config(format!(
            "{what} must be given on the command line or in the config"
        ))
    })
}

/// Loads a modeling dataset, shaping the outcome column for the family.
fn load_dataset(path: &Path, family: Family) -> Result<Dataset, CliError> {
    let columns = read_csv_columns(path)?;
    let ds = match family {
        Family::MultinomialLogit | Family::BinaryLogit => {
            Dataset::categorical_auto(columns.outcomes, columns.covariates)?
        }
        Family::PoissonLog | Family::LinearGaussian => {
            Dataset::continuous(columns.outcomes, columns.covariates)?
        }
    };
    family.check_dataset(&ds)?;
    Ok(ds)
}

fn resolve_target(p: usize, target: Option<Vec<f64>>) -> Result<DVector<f64>, CliError> {
    match target {
        None => Ok(DVector::zeros(p)),
        Some(values) => {
            if values.len() != p {
                return Err(CliError::Config(format!(
                    "target has {} entries but the model has {p} parameters",
                    values.len()
                )));
            }
            Ok(DVector::from_vec(values))
        }
    }
}

pub fn run_fit(args: FitArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let section = file.fit.unwrap_or_default();
    let data = require(args.data.or(section.data), "data path")?;
    let family = parse_family(&require(args.family.or(section.family), "family")?)?;
    let lambda = args.lambda.or(section.lambda).unwrap_or(0.0);
    let weighting = parse_weighting(
        &args
            .weighting
            .or(section.weighting)
            .unwrap_or_else(|| "identity".into()),
    )?;

    let ds = load_dataset(&data, family)?;
    let mle = fit_mle(family, &ds, &family.zero_params(&ds))?;
    let p = mle.theta_hat.len();
    let target = resolve_target(p, section.target)?;
    let template = build_template(
        weighting,
        family,
        &ds,
        &mle.theta_hat.values,
        target,
        section.mask,
    )?;
    let fitted = refit_at(family, &ds, &template, lambda, &mle.theta_hat)?;

    eprintln!(
        "fit: {} n={} p={} lambda={} converged={} iterations={}",
        family.name(),
        ds.n(),
        p,
        lambda,
        fitted.converged,
        fitted.iterations
    );
    let report = FitReport {
        schema_version: crate::config::SCHEMA_VERSION,
        family: family.to_string(),
        n: ds.n(),
        p,
        lambda,
        weighting: weighting.name().to_string(),
        fit: FitBlock::from_fit(&fitted),
    };
    emit_json(args.out.as_deref(), &report)
}

pub fn run_tune(args: TuneArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let section = file.tune.unwrap_or_default();
    let data = require(args.data.or(section.data), "data path")?;
    let family = parse_family(&require(args.family.or(section.family), "family")?)?;
    let selector = args
        .selector
        .or(section.selector)
        .unwrap_or_else(|| "sure".into());
    let weighting = parse_weighting(
        &args
            .weighting
            .or(section.weighting)
            .unwrap_or_else(|| "hessian".into()),
    )?;
    let folds = args.folds.or(section.folds).unwrap_or(5);
    let grid_size = args.grid_size.or(section.grid_size).unwrap_or(50);
    let r = args.r.or(section.r).unwrap_or(0.1);
    let seed = args.seed.or(section.seed).unwrap_or(0);

    let ds = load_dataset(&data, family)?;
    let mle = fit_mle(family, &ds, &family.zero_params(&ds))?;
    let p = mle.theta_hat.len();
    let target = resolve_target(p, section.target)?;
    let template = build_template(
        weighting,
        family,
        &ds,
        &mle.theta_hat.values,
        target,
        section.mask,
    )?;
    let grid = match section.grid {
        Some(explicit) => explicit,
        None => build_grid(lambda_max(ds.n(), &template, r)?, grid_size)?,
    };

    let curve = match selector.as_str() {
        "sure" => {
            let inputs = SureInputs::from_fit(family, &ds, &mle, template.clone())?;
            select_sure(&inputs, &grid)?
        }
        "cv" => select_cv(family, &ds, &template, &grid, folds, seed)?,
        other => {
            return Err(CliError::Config(format!(
                "unknown selector '{other}' (expected 'sure' or 'cv')"
            )))
        }
    };
    let refit = refit_at(family, &ds, &template, curve.lambda_hat, &mle.theta_hat)?;

    if let Some(curve_path) = &args.curve_out {
        write_curve_csv(curve_path, &curve)?;
    }
    eprintln!(
        "tune: {} selector={selector} n={} lambda_hat={} (grid index {} of {})",
        family.name(),
        ds.n(),
        curve.lambda_hat,
        curve.selected_index,
        curve.grid.len()
    );
    let report = TuneReport {
        schema_version: crate::config::SCHEMA_VERSION,
        family: family.to_string(),
        selector,
        weighting: weighting.name().to_string(),
        n: ds.n(),
        p,
        lambda_hat: curve.lambda_hat,
        selected_index: curve.selected_index,
        unconverged_fits: curve.unconverged_fits,
        suspect_separation: curve.suspect_separation,
        grid: curve.grid.clone(),
        r_hat: curve.r_hat.clone(),
        refit: FitBlock::from_fit(&refit),
    };
    emit_json(args.out.as_deref(), &report)
}

fn parse_tail_ranking(name: &str) -> Result<TailRanking, CliError> {
    match name {
        "mle_loss" => Ok(TailRanking::MleLoss),
        "mle_max_coef" => Ok(TailRanking::MleMaxCoef),
        other => Err(CliError::Config(format!(
            "unknown tail ranking '{other}' (expected 'mle_loss' or 'mle_max_coef')"
        ))),
    }
}

pub fn run_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let section: SimulateSection = file.simulate.unwrap_or_default();
    let n = require(args.n.or(section.n), "sample size n")?;
    let replications = require(args.replications.or(section.replications), "replications")?;
    let base_seed = args.seed.or(section.base_seed).unwrap_or(1);
    let estimators = require(section.estimators, "an estimators list in the config")?;

    let mut dgp = match &section.dgp {
        None => DgpSpec::rare_category(n)?,
        Some(custom) => DgpSpec::custom(
            n,
            custom.covariate_sd.clone(),
            custom.slopes.clone(),
            custom.target_probs.clone(),
            section.calibration_draws.unwrap_or(1_000_000),
            section.dgp_seed.unwrap_or(7_113_001),
        )?,
    };
    if let Some(draws) = section.calibration_draws {
        dgp.calibration_draws = draws;
    }
    if let Some(seed) = section.dgp_seed {
        dgp.seed = seed;
    }

    let defaults = StudyOptions::default();
    let spec = StudySpec {
        dgp,
        estimators,
        replications,
        base_seed,
        options: StudyOptions {
            grid_size: section.grid_size.unwrap_or(defaults.grid_size),
            r: section.r.unwrap_or(defaults.r),
            folds: section.folds.unwrap_or(defaults.folds),
            extreme_threshold: section
                .extreme_threshold
                .unwrap_or(defaults.extreme_threshold),
            tail_alpha: section.tail_alpha.unwrap_or(defaults.tail_alpha),
        },
    };
    let ranking = parse_tail_ranking(section.tail_ranking.as_deref().unwrap_or("mle_loss"))?;

    let output = run_study(&spec)?;
    let metrics = MetricsReport::from_output(&output, ranking)?;
    if let Some(records_path) = &args.records_out {
        write_records_csv(records_path, &output)?;
    }
    eprintln!(
        "simulate: n={n} replications={replications} estimators={}",
        spec.estimators.len()
    );
    for config in &metrics.per_config {
        eprintln!(
            "  {}: risk_ratio={:.4} extremes={} tail_loss_ratio={:.4}",
            config.name,
            config.coefficient_risk_ratio,
            config.extreme_count,
            config.tail_prediction_loss_ratio
        );
    }
    let report = SimulateReport {
        schema_version: crate::config::SCHEMA_VERSION,
        n,
        replications,
        base_seed,
        theta0: output.theta0.clone(),
        intercepts: output.intercepts.clone(),
        achieved_probs: output.achieved_probs.clone(),
        metrics,
    };
    emit_json(args.out.as_deref(), &report)
}

fn parse_selector(name: &str, lambda: Option<f64>, folds: usize) -> Result<SelectorSpec, CliError> {
    match name {
        "mle" => Ok(SelectorSpec::Mle),
        "fixed" => {
            let lambda = lambda.ok_or_else(|| {
                CliError::Config("the fixed selector needs a lambda value".into())
            })?;
            Ok(SelectorSpec::Fixed { lambda })
        }
        "sure" => Ok(SelectorSpec::Sure),
        "cv" => Ok(SelectorSpec::Cv { folds }),
        other => Err(CliError::Config(format!(
            "unknown selector '{other}' (expected 'mle', 'fixed', 'sure' or 'cv')"
        ))),
    }
}

pub fn run_causal(args: CausalArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let section: CausalSection = file.causal.unwrap_or_default();
    let data = require(args.data.or(section.data), "data path")?;
    let groups = args.groups.or(section.groups);
    let defaults = PropensityConfig::default();
    let selector_name = args
        .selector
        .or(section.selector)
        .unwrap_or_else(|| "sure".into());
    let folds = args.folds.or(section.folds).unwrap_or(5);
    let selector = parse_selector(&selector_name, args.lambda.or(section.lambda), folds)?;
    let weighting = parse_weighting(
        &args
            .weighting
            .or(section.weighting)
            .unwrap_or_else(|| "hessian".into()),
    )?;
    let config = PropensityConfig {
        selector,
        weighting,
        grid_size: args
            .grid_size
            .or(section.grid_size)
            .unwrap_or(defaults.grid_size),
        r: args.r.or(section.r).unwrap_or(defaults.r),
        floor: args.floor.or(section.floor).unwrap_or(defaults.floor),
        fold_seed: args.seed.or(section.fold_seed).unwrap_or(0),
    };
    let taus = match args.taus.is_empty() {
        false => args.taus.clone(),
        true => section.taus.unwrap_or_else(|| vec![0.25, 0.5, 0.75]),
    };

    let cds = CausalDataset::from_csv(&data, groups)?;
    let pfit = fit_propensity(&cds, &config)?;

    let mut means = Vec::new();
    let mut quantiles = Vec::new();
    for group in 1..=cds.groups() {
        means.push(ipw_mean(&pfit, &cds, group)?);
        for &tau in &taus {
            quantiles.push(ipw_quantile(&pfit, &cds, group, tau)?);
        }
    }
    let diag = diagnostics(&pfit, &cds, &taus)?;

    if let Some(hist_path) = &args.hist_out {
        let assigned: Vec<f64> = (0..cds.n())
            .map(|i| pfit.raw_probs()[(i, cds.group(i) - 1)])
            .collect();
        write_propensity_histogram(hist_path, &assigned)?;
    }
    if let Some(curve_path) = &args.curve_out {
        match &pfit.risk_curve {
            Some(curve) => write_curve_csv(curve_path, curve)?,
            None => {
                return Err(CliError::Config(
                    "no risk curve to write: the selector did not scan a grid".into(),
                ))
            }
        }
    }

    eprintln!(
        "causal: n={} groups={} selected_lambda={:?} floored={} misclassification={:.4}",
        cds.n(),
        cds.groups(),
        pfit.selected_lambda,
        pfit.floored_count,
        diag.misclassification_rate
    );
    for m in &means {
        eprintln!(
            "  group {}: mean={:.6} se={:.6}",
            m.group, m.value, m.std_error
        );
    }
    let report = CausalReport {
        schema_version: crate::config::SCHEMA_VERSION,
        n: cds.n(),
        groups: cds.groups(),
        selected_lambda: pfit.selected_lambda,
        diagnostics: diag,
        means,
        quantiles,
    };
    emit_json(args.out.as_deref(), &report)
}

pub fn run_risk(args: RiskArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let section: RiskSection = file.risk.unwrap_or_default();
    let data = require(args.data.or(section.data), "data path")?;
    let family = parse_family(&require(args.family.or(section.family), "family")?)?;
    let weighting = parse_weighting(
        &args
            .weighting
            .or(section.weighting)
            .unwrap_or_else(|| "hessian".into()),
    )?;
    let grid_size = args.grid_size.or(section.grid_size).unwrap_or(50);
    let r = args.r.or(section.r).unwrap_or(0.1);

    let ds = load_dataset(&data, family)?;
    let mle = fit_mle(family, &ds, &family.zero_params(&ds))?;
    let p = mle.theta_hat.len();
    let target = resolve_target(p, section.target)?;
    let template: PenaltyTemplate = build_template(
        weighting,
        family,
        &ds,
        &mle.theta_hat.values,
        target,
        section.mask,
    )?;
    let inputs = MomentInputs::from_sample(family, &ds, &mle.theta_hat.values, template.clone())?;

    let lambdas = match args.lambdas.is_empty() {
        false => args.lambdas.clone(),
        true => match section.lambdas {
            Some(explicit) => explicit,
            None => build_grid(lambda_max(ds.n(), &template, r)?, grid_size)?,
        },
    };

    let mut points = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let approx = inputs.mse_first_order(lambda)?;
        points.push(RiskPoint {
            lambda,
            trace_risk: approx.trace_risk,
            variance_trace: approx.variance.trace(),
            bias_sq_trace: approx.bias_sq.trace(),
        });
    }

    let bound = inputs.improvement_bound();
    let always_improves = if weighting == Weighting::Hessian {
        match inputs.prop1_threshold()? {
            ImprovementRange::All => ThresholdReport {
                applies: true,
                improves_for_all: Some(true),
                threshold: None,
            },
            ImprovementRange::Bounded(t) => ThresholdReport {
                applies: true,
                improves_for_all: Some(false),
                threshold: Some(t),
            },
        }
    } else {
        ThresholdReport {
            applies: false,
            improves_for_all: None,
            threshold: None,
        }
    };

    eprintln!(
        "risk: {} n={} p={} improvement_bound={} points={}",
        family.name(),
        ds.n(),
        p,
        if bound.is_finite() {
            bound.to_string()
        } else {
            "unbounded".into()
        },
        points.len()
    );
    let report = RiskReport {
        schema_version: crate::config::SCHEMA_VERSION,
        family: family.to_string(),
        weighting: weighting.name().to_string(),
        n: ds.n(),
        p,
        improvement_bound: if bound.is_finite() { Some(bound) } else { None },
        improvement_unbounded: !bound.is_finite(),
        always_improves,
        points,
    };
    emit_json(args.out.as_deref(), &report)
}

pub fn run(command: crate::Command) -> Result<(), CliError> {
    match command {
        crate::Command::Fit(args) => run_fit(args),
        crate::Command::Tune(args) => run_tune(args),
        crate::Command::Simulate(args) => run_simulate(args),
        crate::Command::Causal(args) => run_causal(args),
        crate::Command::Risk(args) => run_risk(args),
    }
}
