//! Acceptance gate: one test per release criterion, each printing a single
//! pass/fail line. Every quantitative claim the library makes is verified
//! here end to end, at the stated tolerances, against independently coded
//! oracles where a reimplementation is feasible.

use std::sync::OnceLock;

use minimax_iv::estimators::{
    fit_bennett_flip, fit_both_worlds, fit_dikkala, fit_liao, fit_penalized_minimax,
    fit_rkhs_penalized, pop_penalized_minimax, EmpiricalTable, SubgradientOptions,
};
use minimax_iv::funclass::{
    embed_labels, make_misspecified_families, make_realizable_families, FiniteFamily,
    LadderSpec, LinearFamily, RKHSBall,
};
use minimax_iv::harness::{
    run_rate_sweep, EstimatorSpec, FamilySpec, ModeFlags, RateReport, RunConfig, ScenarioSource,
    Tolerances,
};
use minimax_iv::npivop::JointDesign;
use minimax_iv::probspace::{SpaceFun, WeightedSpace};
use minimax_iv::scenario::{
    attach_truth, build_spectral_design, random_spectral_scenario, sample, Dataset, NoiseSpec,
    RandomScenarioParams, Scenario, SpectralSpec, SystemKind,
};
use minimax_iv::theory::{
    check_main_bound, check_misspec_bound, check_saddle, empirical_sup, exact_rademacher_fixed,
    lemma2_witness, mc_rademacher, source_norm_gap,
};

/// Population recovery must be this close in L2.
const IDENTIFICATION_TOL: f64 = 1e-9;
/// Additive slack already granted inside the bound checks.
const BOUND_SLACK: f64 = 1e-9;
/// Window for slopes expected near n^(-1/4).
const SLOW_WINDOW: (f64, f64) = (-0.40, -0.15);
/// Window for slopes expected near n^(-1/2).
const FAST_WINDOW: (f64, f64) = (-0.70, -0.30);
/// Minimum fraction of replications whose screened set keeps the truth.
const RETENTION_MIN: f64 = 0.95;
/// Gap allowed between the two source-norm computations.
const SOURCE_TOL: f64 = 1e-6;
/// Objective gap allowed between the kernel solver and the grid oracle.
const GRID_ORACLE_TOL: f64 = 1e-4;
/// Monte Carlo agreement budget in combined standard errors.
const MC_SIGMA: f64 = 3.0;

fn report(idx: usize, name: &str, pass: bool, detail: &str) {
    println!("[criterion {idx}] {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {idx} ({name}) failed: {detail}");
}

/// 3x2 design with a one-dimensional null space; exercised all over the
/// unit tests, kept here as the small shipped fixture.
fn small_fixture() -> Scenario {
    let design = JointDesign::from_indexed_table(vec![
        vec![0.2, 0.1],
        vec![0.1, 0.2],
        vec![0.2, 0.2],
    ])
    .unwrap();
    attach_truth(
        design,
        SpaceFun::new(vec![1.0, 2.0, 3.0]),
        NoiseSpec::Uniform { half_width: 0.5 },
    )
    .unwrap()
}

/// 8x4 Walsh scenario with a sharply decaying spectrum and a
/// four-dimensional null space: the non-identified rate fixture.
fn rate_fixture() -> Scenario {
    let x = WeightedSpace::uniform(8).unwrap();
    let z = WeightedSpace::uniform(4).unwrap();
    let spec = SpectralSpec::with_systems(
        x,
        z,
        SystemKind::Walsh,
        vec![0.6, 0.3, 0.05],
        vec![1.0, 0.6, 0.3],
        NoiseSpec::Uniform { half_width: 0.5 },
    )
    .unwrap();
    let design = build_spectral_design(&spec).unwrap();
    attach_truth(design, spec.baseline_structural(), NoiseSpec::Uniform { half_width: 0.5 })
        .unwrap()
}

fn random_params() -> RandomScenarioParams {
    RandomScenarioParams::default()
}

/// The shared non-identified sweep behind the three rate criteria: ladder
/// families around the truth, 50 replications per cell, and a screening
/// constant calibrated so the two-stage screen actually binds at these
/// sample sizes.
fn rate_sweep() -> &'static RateReport {
    static REPORT: OnceLock<RateReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let mut both = EstimatorSpec::named("both_worlds");
        both.hyperparams.insert("mu_scale".into(), 0.03);
        let config = RunConfig {
            scenario: ScenarioSource::Inline { scenario: Box::new(rate_fixture()) },
            estimators: vec![
                EstimatorSpec::named("penalized_minimax"),
                EstimatorSpec::named("dikkala"),
                both,
            ],
            n_grid: vec![512, 1024, 2048, 4096, 8192, 16384, 32768],
            reps: 50,
            master_seed: 20260814,
            out_dir: None,
            families: FamilySpec::Ladder(LadderSpec { null_top: 0.95, ..Default::default() }),
            mode: ModeFlags { population: false, check_bounds: true },
            tolerances: Tolerances::default(),
        };
        run_rate_sweep(&config).expect("rate sweep")
    })
}

fn slope_of(report: &RateReport, estimator: &str, metric: &str) -> f64 {
    report
        .slope(estimator, metric)
        .unwrap_or_else(|| panic!("missing slope row {estimator}/{metric}"))
        .slope
}

fn in_window(slope: f64, window: (f64, f64)) -> bool {
    window.0 <= slope && slope <= window.1
}

#[test]
fn criterion_1_identification() {
    let mut max_err = 0.0f64;
    let scenarios = 20;
    for s in 0..scenarios {
        let scenario = random_spectral_scenario(&random_params(), 1000 + s).unwrap();
        let truth = scenario.truth();
        assert!(truth.nullspace_dim >= 1, "scenario {s} unexpectedly identified");
        let (h_fam, g_fam) = make_realizable_families(truth, 7, 1.0, 5000 + s).unwrap();
        assert!(h_fam.len() <= 16 && g_fam.len() <= 16, "families exceed 16 members");
        let fit =
            pop_penalized_minimax(scenario.op(), &truth.r0, &h_fam, &g_fam).unwrap();
        max_err = max_err.max(truth.l2_error(&fit.h_hat).unwrap());
    }
    report(
        1,
        "population identification",
        max_err < IDENTIFICATION_TOL,
        &format!("{scenarios} non-identified scenarios, max l2 error {max_err:.2e}"),
    );
}

#[test]
fn criterion_2_main_bound() {
    let mut scenarios: Vec<Scenario> = vec![small_fixture(), rate_fixture()];
    for s in 0..4u64 {
        scenarios.push(random_spectral_scenario(&random_params(), 200 + s).unwrap());
    }
    let n_grid = [32usize, 64, 128, 256];
    let reps = 42;
    let mut total = 0usize;
    let mut violations = 0usize;
    let mut min_slack = f64::INFINITY;
    let start = std::time::Instant::now();
    for (si, scenario) in scenarios.iter().enumerate() {
        let truth = scenario.truth();
        for &n in &n_grid {
            for rep in 0..reps {
                let seed = 91 * 7919 + (si as u64) * 100_000 + (n as u64) * 101 + rep;
                let (h_fam, g_fam) = make_realizable_families(truth, 7, 0.8, seed).unwrap();
                let ds = sample(scenario, n, seed ^ 0x5bd1e995);
                let table = EmpiricalTable::from_dataset(&ds).unwrap();
                let fit = fit_penalized_minimax(&table, &h_fam, &g_fam).unwrap();
                let m = empirical_sup(scenario, &ds, &h_fam, &g_fam).unwrap();
                let check = check_main_bound(&fit, truth, m).unwrap();
                total += 1;
                if !check.passed {
                    violations += 1;
                }
                min_slack = min_slack.min(check.slack);
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        2,
        "finite-sample error bound",
        total >= 1000 && violations == 0 && elapsed.as_secs() < 300,
        &format!(
            "{total} replications, {violations} violations of l2 <= sqrt(2M) + {BOUND_SLACK:.0e}, \
             min slack {min_slack:.3}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_3_misspecification_bound() {
    let scenario = small_fixture();
    let truth = scenario.truth();
    let mut total = 0usize;
    let mut violations = 0usize;
    let mut min_slack = f64::INFINITY;
    for (ei, &eps_h) in [0.05, 0.1, 0.2].iter().enumerate() {
        for (ej, &eps_g) in [0.0, 0.1].iter().enumerate() {
            for rep in 0..60u64 {
                let seed = 7_300_000 + (ei as u64) * 10_000 + (ej as u64) * 1_000 + rep;
                let (h_fam, g_fam) =
                    make_misspecified_families(truth, 5, 0.5, seed, eps_h, eps_g).unwrap();
                let ds = sample(&scenario, 96, seed ^ 0x9e3779b9);
                let table = EmpiricalTable::from_dataset(&ds).unwrap();
                let fit = fit_penalized_minimax(&table, &h_fam, &g_fam).unwrap();
                let m = empirical_sup(&scenario, &ds, &h_fam, &g_fam).unwrap();
                let check = check_misspec_bound(
                    &fit,
                    truth,
                    m,
                    eps_h,
                    eps_g,
                    h_fam.sup_bound(),
                    g_fam.sup_bound(),
                )
                .unwrap();
                total += 1;
                if !check.passed {
                    violations += 1;
                }
                min_slack = min_slack.min(check.slack);
            }
        }
    }
    report(
        3,
        "misspecification bound",
        total >= 300 && violations == 0,
        &format!(
            "{total} replications over eps_h x eps_g grid, {violations} violations, \
             min slack {min_slack:.3}"
        ),
    );
}

#[test]
fn criterion_4_l2_rate() {
    let fixture = rate_fixture();
    assert!(fixture.truth().nullspace_dim >= 1, "rate fixture must be non-identified");
    let slope = slope_of(rate_sweep(), "penalized_minimax", "l2_mean");
    report(
        4,
        "penalized minimax l2 rate",
        in_window(slope, SLOW_WINDOW),
        &format!("mean l2 slope {slope:.4} in [{}, {}]", SLOW_WINDOW.0, SLOW_WINDOW.1),
    );
}

#[test]
fn criterion_5_projected_mse_rate() {
    let slope = slope_of(rate_sweep(), "dikkala", "proj_mse_mean");
    report(
        5,
        "quadratically penalized projected-MSE rate",
        in_window(slope, FAST_WINDOW),
        &format!("mean projected-MSE slope {slope:.4} in [{}, {}]", FAST_WINDOW.0, FAST_WINDOW.1),
    );
}

#[test]
fn criterion_6_both_worlds() {
    let sweep = rate_sweep();
    let proj = slope_of(sweep, "both_worlds", "proj_mse_mean");
    let l2 = slope_of(sweep, "both_worlds", "l2_mean");
    let (kept, completed) = sweep
        .cells
        .iter()
        .filter(|c| c.estimator == "both_worlds")
        .fold((0usize, 0usize), |(k, t), c| (k + c.truth_in_candidates, t + c.completed));
    let retention = kept as f64 / completed as f64;
    report(
        6,
        "two-stage estimator rates and screening",
        in_window(proj, FAST_WINDOW) && in_window(l2, SLOW_WINDOW) && retention >= RETENTION_MIN,
        &format!(
            "proj slope {proj:.4} in [{}, {}], l2 slope {l2:.4} in [{}, {}], \
             truth kept in {kept}/{completed} screened sets",
            FAST_WINDOW.0, FAST_WINDOW.1, SLOW_WINDOW.0, SLOW_WINDOW.1
        ),
    );
}

#[test]
fn criterion_7_saddle_characterization() {
    let mut scenarios: Vec<Scenario> = vec![small_fixture(), rate_fixture()];
    for s in 0..20u64 {
        scenarios.push(random_spectral_scenario(&random_params(), 300 + s).unwrap());
    }
    let mut checked = 0usize;
    let mut rejected = 0usize;
    let mut ok = true;
    for (si, scenario) in scenarios.iter().enumerate() {
        let truth = scenario.truth();
        let witness = lemma2_witness(scenario.op(), &truth.r0).unwrap();
        ok &= witness.passed;
        let (h_fam, g_fam) = make_realizable_families(truth, 6, 1.0, 400 + si as u64).unwrap();
        let saddle = check_saddle(
            scenario,
            &truth.h0,
            &truth.gbar0,
            h_fam.members(),
            g_fam.members(),
        )
        .unwrap();
        ok &= saddle.passed;
        checked += 1;
        assert!(!truth.null_basis().is_empty(), "saddle fixtures must be non-identified");
        let shifted = truth.h0.add(&truth.null_basis()[0]);
        let bad = check_saddle(
            scenario,
            &shifted,
            &truth.gbar0,
            h_fam.members(),
            g_fam.members(),
        )
        .unwrap();
        if !bad.passed && bad.h_violation > 1e-9 {
            rejected += 1;
        }
    }
    report(
        7,
        "saddle point characterization",
        ok && rejected == checked,
        &format!(
            "{checked} scenarios: witness + saddle hold at the truth, \
             null-shifted candidate strictly rejected {rejected}/{checked}"
        ),
    );
}

#[test]
fn criterion_8_source_norm_identity() {
    // Spectral scenarios: the multiplier norm must match the spectral sum.
    let mut scenarios: Vec<Scenario> = vec![rate_fixture()];
    for s in 0..20u64 {
        scenarios.push(random_spectral_scenario(&random_params(), 300 + s).unwrap());
    }
    let mut max_gap = 0.0f64;
    for scenario in &scenarios {
        max_gap = max_gap.max(source_norm_gap(scenario.op(), &scenario.truth().r0).unwrap());
    }

    // Decaying spectrum sigma_i = 2^-i with source coefficients held at
    // one: gamma_i = sigma_i^2 beta_i, so the spectral sum telescopes to
    // sum beta_i^2 and must grow with the truncation level even as the
    // sigma^-4 amplification reaches 4^8.
    let mut norms = Vec::new();
    let mut decay_ok = true;
    for k in 2..=8usize {
        let x = WeightedSpace::uniform(16).unwrap();
        let z = WeightedSpace::uniform(16).unwrap();
        let sigma: Vec<f64> = (1..=k).map(|i| 0.5f64.powi(i as i32)).collect();
        let beta = vec![1.0; k];
        let spec = SpectralSpec::with_systems(
            x,
            z,
            SystemKind::Walsh,
            sigma.clone(),
            beta,
            NoiseSpec::Uniform { half_width: 0.5 },
        )
        .unwrap();
        let design = build_spectral_design(&spec).unwrap();
        let scenario = attach_truth(
            design,
            spec.baseline_structural(),
            NoiseSpec::Uniform { half_width: 0.5 },
        )
        .unwrap();
        let truth = scenario.truth();
        let direct = truth.source_norm * truth.source_norm;
        let prescribed = k as f64;
        decay_ok &= (direct - prescribed).abs() <= SOURCE_TOL * prescribed.max(1.0);
        max_gap = max_gap.max(source_norm_gap(scenario.op(), &truth.r0).unwrap());
        norms.push(direct);
    }
    let monotone = norms.windows(2).all(|w| w[1] > w[0]);
    report(
        8,
        "source norm identity",
        max_gap < SOURCE_TOL && decay_ok && monotone,
        &format!(
            "max |direct - spectral| gap {max_gap:.2e} over {} scenarios; \
             decaying spectrum grows {:.1} -> {:.1} monotonically",
            scenarios.len() + norms.len(),
            norms.first().unwrap(),
            norms.last().unwrap()
        ),
    );
}

// Independent naive reimplementations of the enumeration estimators,
// computed straight off the raw dataset with double loops.

fn naive_h_sq(ds: &Dataset, h: &SpaceFun) -> f64 {
    ds.xs.iter().map(|&x| h.at(x) * h.at(x)).sum::<f64>() / ds.n() as f64
}

fn naive_g_sq(ds: &Dataset, g: &SpaceFun) -> f64 {
    ds.zs.iter().map(|&z| g.at(z) * g.at(z)).sum::<f64>() / ds.n() as f64
}

fn naive_resid_g(ds: &Dataset, h: &SpaceFun, g: &SpaceFun) -> f64 {
    (0..ds.n())
        .map(|i| (ds.ys[i] - h.at(ds.xs[i])) * g.at(ds.zs[i]))
        .sum::<f64>()
        / ds.n() as f64
}

fn naive_pm_value(ds: &Dataset, h: &SpaceFun, g: &SpaceFun) -> f64 {
    0.5 * naive_h_sq(ds, h) + naive_resid_g(ds, h, g)
}

fn naive_dik_value(ds: &Dataset, h: &SpaceFun, g: &SpaceFun) -> f64 {
    naive_resid_g(ds, h, g) - 0.5 * naive_g_sq(ds, g)
}

/// Best response index and value: strict improvement, earliest index wins.
fn naive_argmax(g_fam: &FiniteFamily, mut payoff: impl FnMut(&SpaceFun) -> f64) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (j, g) in g_fam.members().iter().enumerate() {
        let v = payoff(g);
        if v > best.1 {
            best = (j, v);
        }
    }
    best
}

/// Outer minimization with the documented tie rule: objective value, then
/// L2 norm in the family's space, then earliest index.
fn naive_argmin(h_fam: &FiniteFamily, mut value: impl FnMut(&SpaceFun) -> f64) -> (usize, f64) {
    let mut best_i = 0usize;
    let mut best_v = f64::INFINITY;
    let mut best_norm = f64::INFINITY;
    for (i, h) in h_fam.members().iter().enumerate() {
        let v = value(h);
        let norm = h_fam.space().norm(h).unwrap();
        if v < best_v || (v == best_v && norm < best_norm) {
            best_i = i;
            best_v = v;
            best_norm = norm;
        }
    }
    (best_i, best_v)
}

fn naive_minimax(
    ds: &Dataset,
    h_fam: &FiniteFamily,
    g_fam: &FiniteFamily,
    value: impl Fn(&Dataset, &SpaceFun, &SpaceFun) -> f64,
) -> (usize, usize) {
    let (h_index, _) =
        naive_argmin(h_fam, |h| naive_argmax(g_fam, |g| value(ds, h, g)).1);
    let (g_index, _) = naive_argmax(g_fam, |g| value(ds, h_fam.member(h_index), g));
    (h_index, g_index)
}

fn naive_both_worlds(
    ds: &Dataset,
    h_fam: &FiniteFamily,
    g_fam: &FiniteFamily,
    mu: f64,
) -> (usize, usize, Vec<usize>) {
    let outer: Vec<f64> = h_fam
        .members()
        .iter()
        .map(|h| naive_argmax(g_fam, |g| naive_pm_value(ds, h, g)).1)
        .collect();
    let m_star = outer.iter().copied().fold(f64::INFINITY, f64::min);
    let candidates: Vec<usize> =
        (0..h_fam.len()).filter(|&i| outer[i] - m_star <= mu).collect();
    let mut best_i = candidates[0];
    let mut best_v = f64::INFINITY;
    let mut best_norm = f64::INFINITY;
    for &i in &candidates {
        let h = h_fam.member(i);
        let v = naive_argmax(g_fam, |g| naive_dik_value(ds, h, g)).1;
        let norm = h_fam.space().norm(h).unwrap();
        if v < best_v || (v == best_v && norm < best_norm) {
            best_i = i;
            best_v = v;
            best_norm = norm;
        }
    }
    let (g_index, _) = naive_argmax(g_fam, |g| naive_dik_value(ds, h_fam.member(best_i), g));
    (best_i, g_index, candidates)
}

#[test]
fn criterion_9_oracle_equivalences() {
    // Part 1: every enumeration estimator agrees exactly with its naive
    // double-loop oracle on 100 random small instances.
    let params = RandomScenarioParams {
        x_card: 4,
        z_card: 3,
        systems: 2,
        ..RandomScenarioParams::default()
    };
    let mut agree = 0usize;
    let instances = 100u64;
    for s in 0..instances {
        let scenario = random_spectral_scenario(&params, 9_000 + s).unwrap();
        let truth = scenario.truth();
        let (h_fam, g_fam) = make_realizable_families(truth, 5, 1.0, 9_500 + s).unwrap();
        let ds = sample(&scenario, 24, 9_900 + s);
        let table = EmpiricalTable::from_dataset(&ds).unwrap();
        let alpha = 0.1 * (1 + s % 3) as f64;
        let mu = 0.005 * (1 + s % 5) as f64;

        let pm = fit_penalized_minimax(&table, &h_fam, &g_fam).unwrap();
        let pm_naive = naive_minimax(&ds, &h_fam, &g_fam, naive_pm_value);
        let dik = fit_dikkala(&table, &h_fam, &g_fam).unwrap();
        let dik_naive = naive_minimax(&ds, &h_fam, &g_fam, naive_dik_value);
        let liao = fit_liao(&table, &h_fam, &g_fam, alpha).unwrap();
        let liao_naive = naive_minimax(&ds, &h_fam, &g_fam, |ds, h, g| {
            naive_dik_value(ds, h, g) + alpha * naive_h_sq(ds, h)
        });
        let flip = fit_bennett_flip(&table, &h_fam, &g_fam).unwrap();
        let flip_g = naive_argmax(&g_fam, |g| {
            naive_argmin(&h_fam, |h| naive_pm_value(&ds, h, g)).1
        })
        .0;
        let flip_h =
            naive_argmin(&h_fam, |h| naive_pm_value(&ds, h, g_fam.member(flip_g))).0;
        let both = fit_both_worlds(&table, &h_fam, &g_fam, mu).unwrap();
        let both_naive = naive_both_worlds(&ds, &h_fam, &g_fam, mu);

        let same = (pm.h_index, pm.g_index) == (pm_naive.0, Some(pm_naive.1))
            && (dik.h_index, dik.g_index) == (dik_naive.0, Some(dik_naive.1))
            && (liao.h_index, liao.g_index) == (liao_naive.0, Some(liao_naive.1))
            && (flip.h_index, flip.g_index) == (flip_h, Some(flip_g))
            && (both.h_index, both.g_index) == (both_naive.0, Some(both_naive.1))
            && both.candidate_set.as_deref() == Some(both_naive.2.as_slice());
        agree += usize::from(same);
    }

    // Part 2: the kernel-ball solver lands on the one-dimensional grid
    // oracle's minimum.
    let scenario = small_fixture();
    let ds = sample(&scenario, 40, 777);
    let basis = vec![SpaceFun::new(vec![1.0, -0.5, 0.25])];
    let h_fam = LinearFamily::new(scenario.x_space().clone(), basis.clone(), 2.0).unwrap();
    let ball = RKHSBall::gaussian(None);
    let opts = SubgradientOptions { budget: 120_000, tol: 1e-12, step_scale: 0.5 };
    let fit = fit_rkhs_penalized(&ds, scenario.z_space(), &h_fam, &ball, &opts).unwrap();

    let embedded = embed_labels(scenario.z_space());
    let points: Vec<f64> = ds.zs.iter().map(|&z| embedded[z]).collect();
    let gram = ball.gram(&points).unwrap();
    let n = ds.n();
    let grid_objective = |theta: f64| -> f64 {
        let mut quad = 0.0;
        let mut r = vec![0.0; n];
        for i in 0..n {
            let hx = theta * basis[0].at(ds.xs[i]);
            quad += hx * hx;
            r[i] = ds.ys[i] - hx;
        }
        let mut rkr = 0.0;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += gram[(i, j)] * r[j];
            }
            rkr += r[i] * s;
        }
        0.5 * quad / n as f64 + rkr.max(0.0).sqrt() / n as f64
    };
    let mut lo = -2.0f64;
    let mut hi = 2.0f64;
    let mut grid_theta = 0.0f64;
    let mut grid_val = f64::INFINITY;
    for _ in 0..4 {
        let step = (hi - lo) / 4000.0;
        for k in 0..=4000 {
            let t = lo + step * k as f64;
            let v = grid_objective(t);
            if v < grid_val {
                grid_val = v;
                grid_theta = t;
            }
        }
        lo = (grid_theta - step).max(-2.0);
        hi = (grid_theta + step).min(2.0);
    }
    let solver_val = grid_objective(fit.theta[0]);
    let obj_gap = (solver_val - grid_val).abs();

    // Part 3: the Monte Carlo Rademacher estimate agrees with exact sign
    // enumeration; both average over datasets of the fixture scenario.
    let truth = scenario.truth();
    let (rad_fam, _) = make_realizable_families(truth, 7, 1.0, 4242).unwrap();
    let exact_reps = 3000usize;
    let mut exact_vals = Vec::with_capacity(exact_reps);
    for r in 0..exact_reps {
        let ds = sample(&scenario, 10, 50_000 + r as u64);
        exact_vals.push(exact_rademacher_fixed(&rad_fam, &ds.xs).unwrap());
    }
    let exact_mean = exact_vals.iter().sum::<f64>() / exact_reps as f64;
    let exact_var = exact_vals.iter().map(|v| (v - exact_mean).powi(2)).sum::<f64>()
        / (exact_reps - 1) as f64;
    let exact_se = (exact_var / exact_reps as f64).sqrt();
    let mc = mc_rademacher(&rad_fam, &scenario, 10, 3000, 31337).unwrap();
    let combined_se = (mc.std_error * mc.std_error + exact_se * exact_se).sqrt();
    let z = (mc.mean - exact_mean).abs() / combined_se;

    report(
        9,
        "oracle equivalences",
        agree == instances as usize && obj_gap <= GRID_ORACLE_TOL && z <= MC_SIGMA,
        &format!(
            "naive double-loop agreement {agree}/{instances}; kernel solve vs grid \
             objective gap {obj_gap:.2e}; Monte Carlo vs exact signs z = {z:.2}"
        ),
    );
}
