//! The Monte Carlo sweep engine: one task per (estimator, n, replication),
//! each with a derived seed, executed in parallel when the `parallel`
//! feature is active and sequentially otherwise. Aggregation is
//! order-fixed, so both execution modes produce identical reports.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::estimators::{
    both_worlds_mu, evaluate, fit_bennett_flip, fit_both_worlds, fit_dikkala, fit_liao,
    fit_penalized_minimax, liao_alpha_schedule, pop_bennett_flip, pop_penalized_minimax,
    EmpiricalTable, FitResult,
};
use crate::funclass::{
    make_ladder_families, make_misspecified_families, make_realizable_families, FiniteFamily,
};
use crate::harness::config::{EstimatorSpec, FamilySpec, RunConfig};
use crate::harness::report::{fit_loglog_slope, quantile, RateCell, RateReport, SlopeRow};
use crate::harness::seed::{rep_seed, sub_seed};
use crate::scenario::{sample, Scenario};
use crate::theory::{check_main_bound, check_misspec_bound, empirical_sup};
use crate::{Error, Result};

/// Builds the configured families around the scenario's truth.
pub fn build_families(
    scenario: &Scenario,
    spec: &FamilySpec,
    seed: u64,
) -> Result<(FiniteFamily, FiniteFamily)> {
    let truth = scenario.truth();
    match spec {
        FamilySpec::Realizable { distractors, perturbation_scale, .. } => {
            make_realizable_families(truth, *distractors, *perturbation_scale, seed)
        }
        FamilySpec::Misspecified { distractors, perturbation_scale, eps_h, eps_g, .. } => {
            make_misspecified_families(truth, *distractors, *perturbation_scale, seed, *eps_h, *eps_g)
        }
        FamilySpec::Ladder(ladder) => make_ladder_families(truth, scenario.op(), ladder),
    }
}

/// The family seed for a replication: fresh per rep when the family spec
/// asks for it, otherwise shared across the whole sweep.
pub fn family_seed(config: &RunConfig, rep_seed: u64) -> u64 {
    let per_rep = match &config.families {
        FamilySpec::Realizable { per_rep, .. } | FamilySpec::Misspecified { per_rep, .. } => {
            *per_rep
        }
        FamilySpec::Ladder(_) => false,
    };
    if per_rep {
        sub_seed(rep_seed, "family")
    } else {
        sub_seed(config.master_seed, "family")
    }
}

/// Runs one configured estimator on a prepared table.
pub fn fit_estimator(
    spec: &EstimatorSpec,
    table: &EmpiricalTable,
    h_fam: &FiniteFamily,
    g_fam: &FiniteFamily,
    n: usize,
) -> Result<FitResult> {
    match spec.name.as_str() {
        "penalized_minimax" => fit_penalized_minimax(table, h_fam, g_fam),
        "dikkala" => fit_dikkala(table, h_fam, g_fam),
        "liao" => {
            let alpha = match spec.hyperparams.get("alpha") {
                Some(&a) => a,
                None => liao_alpha_schedule(spec.param("alpha_scale", 1.0), n),
            };
            fit_liao(table, h_fam, g_fam, alpha)
        }
        "bennett_flip" => fit_bennett_flip(table, h_fam, g_fam),
        "both_worlds" => {
            let mu = match spec.hyperparams.get("mu") {
                Some(&m) => m,
                None => both_worlds_mu(
                    spec.param("mu_scale", 1.0),
                    h_fam.sup_bound(),
                    g_fam.sup_bound(),
                    h_fam.len(),
                    g_fam.len(),
                    spec.param("delta", 0.1),
                    n,
                ),
            };
            fit_both_worlds(table, h_fam, g_fam, mu)
        }
        other => Err(Error::Config(format!("unknown estimator {other:?}"))),
    }
}

/// Population-mode counterpart for the estimators that have one.
pub fn fit_estimator_population(
    spec: &EstimatorSpec,
    scenario: &Scenario,
    h_fam: &FiniteFamily,
    g_fam: &FiniteFamily,
) -> Result<FitResult> {
    let op = scenario.op();
    let r0 = &scenario.truth().r0;
    match spec.name.as_str() {
        "penalized_minimax" => pop_penalized_minimax(op, r0, h_fam, g_fam),
        "bennett_flip" => pop_bennett_flip(op, r0, h_fam, g_fam),
        other => Err(Error::Config(format!("estimator {other:?} has no population mode"))),
    }
}

#[derive(Debug, Clone)]
struct Outcome {
    ok: bool,
    l2: f64,
    proj_sq: f64,
    violation: bool,
    truth_in_candidates: bool,
}

fn run_one(
    scenario: &Scenario,
    config: &RunConfig,
    est: &EstimatorSpec,
    n: usize,
    rep: usize,
) -> Outcome {
    let failed = Outcome {
        ok: false,
        l2: 0.0,
        proj_sq: 0.0,
        violation: false,
        truth_in_candidates: false,
    };
    let rseed = rep_seed(config.master_seed, &est.name, n, rep);
    let fam_seed = family_seed(config, rseed);
    let Ok((h_fam, g_fam)) = build_families(scenario, &config.families, fam_seed) else {
        return failed;
    };
    let truth = scenario.truth();

    if config.mode.population {
        let Ok(fit) = fit_estimator_population(est, scenario, &h_fam, &g_fam) else {
            return failed;
        };
        let Ok(metrics) = evaluate(scenario.op(), truth, &fit.h_hat) else {
            return failed;
        };
        // With no sampling the deviation term is zero, so the bound
        // degenerates to exact recovery.
        let violation = config.mode.check_bounds
            && est.name == "penalized_minimax"
            && config.families.realizable()
            && !check_main_bound(&fit, truth, 0.0).map(|r| r.passed).unwrap_or(false);
        return Outcome {
            ok: true,
            l2: metrics.l2_error,
            proj_sq: metrics.projected_rmse * metrics.projected_rmse,
            violation,
            truth_in_candidates: false,
        };
    }

    let ds = sample(scenario, n, sub_seed(rseed, "data"));
    let Ok(table) = EmpiricalTable::from_dataset(&ds) else {
        return failed;
    };
    let Ok(fit) = fit_estimator(est, &table, &h_fam, &g_fam, n) else {
        return failed;
    };
    let Ok(metrics) = evaluate(scenario.op(), truth, &fit.h_hat) else {
        return failed;
    };

    let mut violation = false;
    if config.mode.check_bounds && est.name == "penalized_minimax" {
        if let Ok(m) = empirical_sup(scenario, &ds, &h_fam, &g_fam) {
            let passed = match config.families.injected_errors() {
                None => check_main_bound(&fit, truth, m).map(|r| r.passed),
                Some((eps_h, eps_g)) => check_misspec_bound(
                    &fit,
                    truth,
                    m,
                    eps_h,
                    eps_g,
                    h_fam.sup_bound(),
                    g_fam.sup_bound(),
                )
                .map(|r| r.passed),
            };
            violation = !passed.unwrap_or(false);
        } else {
            violation = true;
        }
    }

    let truth_in_candidates = match (&fit.candidate_set, h_fam.index_of(&truth.h0, 1e-9)) {
        (Some(cands), Some(idx)) => cands.contains(&idx),
        _ => false,
    };

    Outcome {
        ok: true,
        l2: metrics.l2_error,
        proj_sq: metrics.projected_rmse * metrics.projected_rmse,
        violation,
        truth_in_candidates,
    }
}

/// Runs the sweep with the build's default execution mode.
pub fn run_rate_sweep(config: &RunConfig) -> Result<RateReport> {
    run_rate_sweep_with(config, cfg!(feature = "parallel"))
}

/// Runs the sweep, choosing the execution mode explicitly. Results are
/// identical in both modes; `parallel = true` without the `parallel`
/// feature falls back to sequential execution.
pub fn run_rate_sweep_with(config: &RunConfig, parallel: bool) -> Result<RateReport> {
    config.validate()?;
    let scenario = config.scenario.materialize()?;

    let mut tasks = Vec::new();
    for ei in 0..config.estimators.len() {
        for (ni, &n) in config.n_grid.iter().enumerate() {
            for rep in 0..config.reps {
                tasks.push((ei, ni, n, rep));
            }
        }
    }

    let run = |&(ei, _ni, n, rep): &(usize, usize, usize, usize)| {
        run_one(&scenario, config, &config.estimators[ei], n, rep)
    };
    let outcomes: Vec<Outcome> = if parallel {
        #[cfg(feature = "parallel")]
        {
            tasks.par_iter().map(run).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            tasks.iter().map(run).collect()
        }
    } else {
        tasks.iter().map(run).collect()
    };

    let mut cells = Vec::new();
    let mut slopes = Vec::new();
    let reps = config.reps;
    for (ei, est) in config.estimators.iter().enumerate() {
        let mut mean_points = Vec::new();
        let mut proj_points = Vec::new();
        let mut log_points = Vec::new();
        let mut proj_log_points = Vec::new();
        for (ni, &n) in config.n_grid.iter().enumerate() {
            let base = (ei * config.n_grid.len() + ni) * reps;
            let slot = &outcomes[base..base + reps];
            let done: Vec<&Outcome> = slot.iter().filter(|o| o.ok).collect();
            let l2: Vec<f64> = done.iter().map(|o| o.l2).collect();
            let proj: Vec<f64> = done.iter().map(|o| o.proj_sq).collect();
            let completed = done.len();
            let mean = |v: &[f64]| {
                if v.is_empty() {
                    0.0
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            };
            let cell = RateCell {
                estimator: est.name.clone(),
                n,
                reps,
                completed,
                l2_mean: mean(&l2),
                l2_median: quantile(&l2, 0.5),
                l2_q25: quantile(&l2, 0.25),
                l2_q75: quantile(&l2, 0.75),
                proj_mse_mean: mean(&proj),
                proj_mse_median: quantile(&proj, 0.5),
                violations: done.iter().filter(|o| o.violation).count(),
                truth_in_candidates: done.iter().filter(|o| o.truth_in_candidates).count(),
            };
            if completed > 0 {
                mean_points.push((n, cell.l2_mean));
                proj_points.push((n, cell.proj_mse_mean));
                if l2.iter().all(|&v| v > 0.0) {
                    log_points.push((n, (l2.iter().map(|v| v.ln()).sum::<f64>()
                        / completed as f64)
                        .exp()));
                }
                if proj.iter().all(|&v| v > 0.0) {
                    proj_log_points.push((n, (proj.iter().map(|v| v.ln()).sum::<f64>()
                        / completed as f64)
                        .exp()));
                }
            }
            cells.push(cell);
        }
        for (metric, points) in [
            ("l2_mean", &mean_points),
            ("proj_mse_mean", &proj_points),
            ("l2_log_mean", &log_points),
            ("proj_mse_log_mean", &proj_log_points),
        ] {
            if points.len() == config.n_grid.len() {
                if let Ok((slope, stderr)) = fit_loglog_slope(points) {
                    slopes.push(SlopeRow {
                        estimator: est.name.clone(),
                        metric: metric.into(),
                        slope,
                        stderr,
                    });
                }
            }
        }
    }

    Ok(RateReport {
        config_hash: config.config_hash(),
        master_seed: config.master_seed,
        cells,
        slopes,
    })
}
