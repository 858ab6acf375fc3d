//! Machine-checkable forms of the identification and finite-sample
//! guarantees: the uniform objective deviation, the main and misspecified
//! error bounds, Rademacher complexity estimates, saddle-point and
//! restriction diagnostics, and the multiplier witness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::estimators::{population_lagrangian, EmpiricalTable, FitResult};
use crate::funclass::FiniteFamily;
use crate::npivop::{
    lagrange_multiplier, least_norm_solution, source_diagnostics, CondExpOp, ScenarioTruth,
};
use crate::probspace::SpaceFun;
use crate::scenario::{sample, Scenario};
use crate::{Error, Result};

/// Additive slack absorbing float error on exact inequalities.
const BOUND_SLACK: f64 = 1e-9;
/// Tolerance on saddle-point inequalities and argmin ties.
const SADDLE_TOL: f64 = 1e-9;
/// Tolerance on the multiplier witness residuals.
const WITNESS_TOL: f64 = 1e-8;
/// Exact sign enumeration is limited to 2^24 patterns.
const EXACT_SIGN_LIMIT: usize = 24;

/// One checked inequality: lhs <= rhs + slack tolerance, together with the
/// quantities the right-hand side was assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    /// rhs - lhs; negative means the inequality failed outright.
    pub slack: f64,
    pub passed: bool,
    pub sup_deviation: f64,
    pub eps_h: f64,
    pub eps_g: f64,
    pub c_h: f64,
    pub c_g: f64,
}

/// Exact supremum over H x G of |(E_n - E)[(Y - h)g + 0.5 h^2]|.
///
/// The population side uses the scenario's joint table and the fact that
/// its noise families are conditionally mean zero, so E[(Y - h)g] reduces
/// to a finite sum over cells.
pub fn empirical_sup(
    scenario: &Scenario,
    dataset: &crate::scenario::Dataset,
    h_fam: &FiniteFamily,
    g_fam: &FiniteFamily,
) -> Result<f64> {
    let table = EmpiricalTable::from_dataset(dataset)?;
    let op = scenario.op();
    let r0 = &scenario.truth().r0;
    let mut sup = 0.0f64;
    for h in h_fam.members() {
        for g in g_fam.members() {
            let emp = crate::estimators::empirical_lagrangian(&table, h, g)?;
            let pop = population_lagrangian(op, r0, h, g)?;
            sup = sup.max((emp - pop).abs());
        }
    }
    Ok(sup)
}

/// Checks ||h_hat - h0|| <= sqrt(2 M) for a realizable minimax fit.
pub fn check_main_bound(fit: &FitResult, truth: &ScenarioTruth, m: f64) -> Result<BoundReport> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::Config(format!("sup deviation must be finite and nonnegative, got {m}")));
    }
    let lhs = truth.l2_error(&fit.h_hat)?;
    let rhs = (2.0 * m).sqrt();
    Ok(BoundReport {
        lhs,
        rhs,
        slack: rhs - lhs,
        passed: lhs <= rhs + BOUND_SLACK,
        sup_deviation: m,
        eps_h: 0.0,
        eps_g: 0.0,
        c_h: 0.0,
        c_g: 0.0,
    })
}

/// Checks the misspecified version:
/// ||h_hat - h0|| <= sqrt((2 C_H + C_G) eps_h + C_H eps_g + 2 M).
pub fn check_misspec_bound(
    fit: &FitResult,
    truth: &ScenarioTruth,
    m: f64,
    eps_h: f64,
    eps_g: f64,
    c_h: f64,
    c_g: f64,
) -> Result<BoundReport> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::Config(format!("sup deviation must be finite and nonnegative, got {m}")));
    }
    if eps_h < 0.0 || eps_g < 0.0 {
        return Err(Error::Config("approximation errors must be nonnegative".into()));
    }
    if !(c_h > 0.0 && c_g > 0.0) {
        return Err(Error::Config("sup-norm bounds must be positive".into()));
    }
    let lhs = truth.l2_error(&fit.h_hat)?;
    let rhs = ((2.0 * c_h + c_g) * eps_h + c_h * eps_g + 2.0 * m).sqrt();
    Ok(BoundReport {
        lhs,
        rhs,
        slack: rhs - lhs,
        passed: lhs <= rhs + BOUND_SLACK,
        sup_deviation: m,
        eps_h,
        eps_g,
        c_h,
        c_g,
    })
}

/// Monte Carlo estimate with a standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub reps: usize,
}

/// Monte Carlo Rademacher complexity of a family on draws from the
/// scenario: mean over replications of sup_f (1/n) sum_i sigma_i f(W_i),
/// where W is X or Z depending on which space the family lives on.
pub fn mc_rademacher(
    family: &FiniteFamily,
    scenario: &Scenario,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    if n == 0 || reps == 0 {
        return Err(Error::Config("mc_rademacher needs n >= 1 and reps >= 1".into()));
    }
    let on_x = family.space() == scenario.x_space();
    if !on_x && family.space() != scenario.z_space() {
        return Err(Error::Config(
            "family lives on neither the X nor the Z space of the scenario".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vals = Vec::with_capacity(reps);
    for _ in 0..reps {
        let data_seed = rng.random::<u64>();
        let ds = sample(scenario, n, data_seed);
        let idx = if on_x { &ds.xs } else { &ds.zs };
        let signs: Vec<f64> =
            (0..n).map(|_| if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 }).collect();
        vals.push(sup_signed_mean(family, idx, &signs));
    }
    let mean = vals.iter().sum::<f64>() / reps as f64;
    let std_error = if reps > 1 {
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps - 1) as f64;
        (var / reps as f64).sqrt()
    } else {
        0.0
    };
    Ok(RademacherEstimate { mean, std_error, reps })
}

/// Exact sign average for a fixed point set: averages
/// sup_f (1/n) sum_i sigma_i f(w_i) over all 2^n sign patterns.
pub fn exact_rademacher_fixed(family: &FiniteFamily, idx: &[usize]) -> Result<f64> {
    let n = idx.len();
    if n == 0 || n > EXACT_SIGN_LIMIT {
        return Err(Error::Config(format!(
            "exact enumeration supports 1..={EXACT_SIGN_LIMIT} points, got {n}"
        )));
    }
    for &i in idx {
        if i >= family.space().len() {
            return Err(Error::Config(format!("point index {i} outside the family's space")));
        }
    }
    let mut total = 0.0;
    let patterns = 1usize << n;
    let mut signs = vec![1.0; n];
    for mask in 0..patterns {
        for (i, s) in signs.iter_mut().enumerate() {
            *s = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
        }
        total += sup_signed_mean(family, idx, &signs);
    }
    Ok(total / patterns as f64)
}

fn sup_signed_mean(family: &FiniteFamily, idx: &[usize], signs: &[f64]) -> f64 {
    let n = idx.len() as f64;
    family
        .members()
        .iter()
        .map(|f| idx.iter().zip(signs).map(|(&i, s)| s * f.at(i)).sum::<f64>() / n)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Worst-case violations of the two saddle inequalities at a candidate
/// pair: positive h_violation means some probe h improves on the candidate
/// against g_cand; positive g_violation means some probe g improves the
/// inner value at h_cand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleReport {
    pub h_violation: f64,
    pub g_violation: f64,
    pub passed: bool,
}

pub fn check_saddle(
    scenario: &Scenario,
    h_cand: &SpaceFun,
    g_cand: &SpaceFun,
    h_probes: &[SpaceFun],
    g_probes: &[SpaceFun],
) -> Result<SaddleReport> {
    let op = scenario.op();
    let r0 = &scenario.truth().r0;
    let base = population_lagrangian(op, r0, h_cand, g_cand)?;
    let mut h_violation = f64::NEG_INFINITY;
    for h in h_probes {
        h_violation = h_violation.max(base - population_lagrangian(op, r0, h, g_cand)?);
    }
    let mut g_violation = f64::NEG_INFINITY;
    for g in g_probes {
        g_violation = g_violation.max(population_lagrangian(op, r0, h_cand, g)? - base);
    }
    if h_probes.is_empty() {
        h_violation = 0.0;
    }
    if g_probes.is_empty() {
        g_violation = 0.0;
    }
    Ok(SaddleReport {
        h_violation,
        g_violation,
        passed: h_violation <= SADDLE_TOL && g_violation <= SADDLE_TOL,
    })
}

/// Result of the restricted-argmin check. When the precondition fails
/// (no true saddle point inside the given families) no claim is made and
/// `verdict` is None.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictionReport {
    pub precondition_met: bool,
    pub restricted_argmin: Vec<usize>,
    pub argmin_is_truth: bool,
    pub inclusions_hold: bool,
}

impl RestrictionReport {
    pub fn verdict(&self) -> Option<bool> {
        if self.precondition_met {
            Some(self.argmin_is_truth && self.inclusions_hold)
        } else {
            None
        }
    }
}

/// Enumerates the restricted minimax argmin over finite families and
/// verifies it is exactly the least-norm solution, provided the families
/// contain a true saddle point (h0 together with some multiplier g
/// satisfying T* g = h0).
///
/// In the full-space game the minimax argmin is {h0} and the outer-flip
/// argmin set is also {h0}, so both inclusion directions reduce to: the
/// h0 member is a restricted argmin, and every restricted argmin equals
/// h0.
pub fn check_restriction_lemma(
    scenario: &Scenario,
    h_sub: &FiniteFamily,
    g_sub: &FiniteFamily,
) -> Result<RestrictionReport> {
    let op = scenario.op();
    let truth = scenario.truth();
    let r0 = &truth.r0;

    let mut h0_idx = None;
    for (i, h) in h_sub.members().iter().enumerate() {
        if op.x_space().distance(h, &truth.h0)? <= SADDLE_TOL {
            h0_idx = Some(i);
            break;
        }
    }
    let mut has_multiplier = false;
    for g in g_sub.members() {
        let tg = op.apply_adjoint(g)?;
        if op.x_space().distance(&tg, &truth.h0)? <= 1e-8 {
            has_multiplier = true;
            break;
        }
    }
    let Some(h0_idx) = h0_idx else {
        return Ok(RestrictionReport {
            precondition_met: false,
            restricted_argmin: vec![],
            argmin_is_truth: false,
            inclusions_hold: false,
        });
    };
    if !has_multiplier {
        return Ok(RestrictionReport {
            precondition_met: false,
            restricted_argmin: vec![],
            argmin_is_truth: false,
            inclusions_hold: false,
        });
    }

    let outer: Vec<f64> = h_sub
        .members()
        .iter()
        .map(|h| {
            let mut worst = f64::NEG_INFINITY;
            for g in g_sub.members() {
                worst = worst.max(population_lagrangian(op, r0, h, g)?);
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let min_v = outer.iter().copied().fold(f64::INFINITY, f64::min);
    let restricted_argmin: Vec<usize> =
        (0..h_sub.len()).filter(|&i| outer[i] - min_v <= SADDLE_TOL).collect();

    let mut all_truth = !restricted_argmin.is_empty();
    for &i in &restricted_argmin {
        if op.x_space().distance(h_sub.member(i), &truth.h0)? > 1e-8 {
            all_truth = false;
        }
    }
    let contains_h0 = restricted_argmin.contains(&h0_idx);
    Ok(RestrictionReport {
        precondition_met: true,
        restricted_argmin,
        argmin_is_truth: all_truth,
        inclusions_hold: contains_h0 && all_truth,
    })
}

/// Exhaustive saddle characterization on a finite payoff table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRestrictionReport {
    pub precondition_met: bool,
    /// Full-game minimax argmins inside the row mask stay argmins of the
    /// restricted game.
    pub one_direction: bool,
    /// Restricted argmins are outer-flip argmins of the full game.
    pub second_direction: bool,
}

/// Checks the constrained saddle characterization on an explicit finite
/// game: rows minimize, columns maximize, `rows`/`cols` mask the
/// restricted sets. Values are compared exactly, so integer-valued
/// payoffs are the intended input.
pub fn check_game_restriction(
    payoff: &[Vec<f64>],
    rows: &[bool],
    cols: &[bool],
) -> Result<GameRestrictionReport> {
    let nr = payoff.len();
    if nr == 0 {
        return Err(Error::Config("empty payoff table".into()));
    }
    let nc = payoff[0].len();
    if nc == 0 || payoff.iter().any(|r| r.len() != nc) {
        return Err(Error::Config("payoff table must be rectangular and nonempty".into()));
    }
    if rows.len() != nr || cols.len() != nc {
        return Err(Error::DimensionMismatch { expected: nr + nc, got: rows.len() + cols.len() });
    }
    if !rows.iter().any(|&b| b) || !cols.iter().any(|&b| b) {
        return Err(Error::Config("row and column masks must keep at least one index".into()));
    }

    // Saddle points of the full game: f(i, j') <= f(i, j) <= f(i', j).
    let mut saddles = Vec::new();
    for i in 0..nr {
        for j in 0..nc {
            let row_max = (0..nc).all(|j2| payoff[i][j2] <= payoff[i][j]);
            let col_min = (0..nr).all(|i2| payoff[i][j] <= payoff[i2][j]);
            if row_max && col_min {
                saddles.push((i, j));
            }
        }
    }
    let precondition_met = saddles.iter().any(|&(i, j)| rows[i] && cols[j]);
    if !precondition_met {
        return Ok(GameRestrictionReport {
            precondition_met,
            one_direction: false,
            second_direction: false,
        });
    }

    let full_outer: Vec<f64> = (0..nr)
        .map(|i| (0..nc).map(|j| payoff[i][j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let full_min = full_outer.iter().copied().fold(f64::INFINITY, f64::min);
    let full_argmin: Vec<usize> = (0..nr).filter(|&i| full_outer[i] == full_min).collect();

    // Outer flip: rows that best-respond to some maximin column.
    let col_inner: Vec<f64> = (0..nc)
        .map(|j| (0..nr).map(|i| payoff[i][j]).fold(f64::INFINITY, f64::min))
        .collect();
    let maximin = col_inner.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut flip_rows = vec![false; nr];
    for j in 0..nc {
        if col_inner[j] == maximin {
            for i in 0..nr {
                if payoff[i][j] == col_inner[j] {
                    flip_rows[i] = true;
                }
            }
        }
    }

    let restr_outer: Vec<Option<f64>> = (0..nr)
        .map(|i| {
            if !rows[i] {
                return None;
            }
            Some(
                (0..nc)
                    .filter(|&j| cols[j])
                    .map(|j| payoff[i][j])
                    .fold(f64::NEG_INFINITY, f64::max),
            )
        })
        .collect();
    let restr_min = restr_outer
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let restr_argmin: Vec<usize> =
        (0..nr).filter(|&i| restr_outer[i] == Some(restr_min)).collect();

    let one_direction = full_argmin
        .iter()
        .filter(|&&i| rows[i])
        .all(|i| restr_argmin.contains(i));
    let second_direction = restr_argmin.iter().all(|&i| flip_rows[i] && rows[i]);

    Ok(GameRestrictionReport { precondition_met, one_direction, second_direction })
}

/// Residuals of the multiplier equivalence at a design: the computed
/// multiplier must map back to the least-norm solution under T*, and
/// every null(T*) shift of it must still solve T T* g = r0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub forward_residual: f64,
    pub reverse_residual: f64,
    pub passed: bool,
}

pub fn lemma2_witness(op: &CondExpOp, r0: &SpaceFun) -> Result<WitnessReport> {
    let h0 = least_norm_solution(op, r0)?;
    let gbar0 = lagrange_multiplier(op, r0)?;
    let forward_residual = op.x_space().distance(&op.apply_adjoint(&gbar0)?, &h0)?;

    let svd = op.svd()?;
    let mut candidates = vec![gbar0.clone()];
    for (k, nu) in svd.null_z().iter().enumerate() {
        candidates.push(gbar0.add(&nu.scale(1.0 + k as f64)));
        candidates.push(gbar0.sub(&nu.scale(0.5)));
    }
    let mut reverse_residual = 0.0f64;
    for g in &candidates {
        let image = op.apply(&op.apply_adjoint(g)?)?;
        reverse_residual = reverse_residual.max(op.z_space().distance(&image, r0)?);
    }
    Ok(WitnessReport {
        forward_residual,
        reverse_residual,
        passed: forward_residual <= WITNESS_TOL && reverse_residual <= WITNESS_TOL,
    })
}

/// Gap between the two ways of computing the squared source norm: the
/// multiplier's norm directly versus the spectral sum of gamma_i^2 /
/// sigma_i^4.
pub fn source_norm_gap(op: &CondExpOp, r0: &SpaceFun) -> Result<f64> {
    let gbar0 = lagrange_multiplier(op, r0)?;
    let direct = op.z_space().inner_product(&gbar0, &gbar0)?;
    let svd = op.svd()?;
    let diag = source_diagnostics(&svd, r0, 1e-10)?;
    Ok((direct - diag.source_norm_sq).abs())
}
