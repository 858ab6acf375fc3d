//! Estimators over finite families, plus a kernel-ball variant.
//!
//! All enumeration estimators consume the same sufficient statistics
//! (per-cell counts and response sums), so a fit costs O(|H| |G| |X| |Z|)
//! regardless of sample size. Ties are broken deterministically: by
//! objective value, then by smaller L2(X) norm, then by member index,
//! all under exact float comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::funclass::{embed_labels, FiniteFamily, LinearFamily, RKHSBall};
use crate::npivop::{CondExpOp, ScenarioTruth};
use crate::probspace::{SpaceFun, WeightedSpace};
use crate::scenario::Dataset;
use crate::{Error, Result};

/// Per-cell sufficient statistics of a dataset.
///
/// Response sums are accumulated in sorted order within each cell, so the
/// table (and everything computed from it) is exactly invariant under
/// permutations of the observations.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTable {
    x_card: usize,
    z_card: usize,
    n: usize,
    count: Vec<Vec<f64>>,
    sum_y: Vec<Vec<f64>>,
    count_x: Vec<f64>,
    count_z: Vec<f64>,
}

impl EmpiricalTable {
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        ds.validate()?;
        let (xc, zc, n) = (ds.x_card, ds.z_card, ds.n());
        if n == 0 {
            return Err(Error::InvalidDesign("dataset is empty".into()));
        }
        let mut cells: Vec<Vec<f64>> = vec![Vec::new(); xc * zc];
        for i in 0..n {
            cells[ds.xs[i] * zc + ds.zs[i]].push(ds.ys[i]);
        }
        let mut count = vec![vec![0.0; zc]; xc];
        let mut sum_y = vec![vec![0.0; zc]; xc];
        for x in 0..xc {
            for z in 0..zc {
                let bucket = &mut cells[x * zc + z];
                bucket.sort_by(f64::total_cmp);
                count[x][z] = bucket.len() as f64;
                sum_y[x][z] = bucket.iter().sum();
            }
        }
        let count_x: Vec<f64> = count.iter().map(|row| row.iter().sum()).collect();
        let count_z: Vec<f64> = (0..zc).map(|z| count.iter().map(|row| row[z]).sum()).collect();
        Ok(EmpiricalTable { x_card: xc, z_card: zc, n, count, sum_y, count_x, count_z })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check_h(&self, h: &SpaceFun) -> Result<()> {
        if h.len() != self.x_card {
            return Err(Error::DimensionMismatch { expected: self.x_card, got: h.len() });
        }
        Ok(())
    }

    fn check_g(&self, g: &SpaceFun) -> Result<()> {
        if g.len() != self.z_card {
            return Err(Error::DimensionMismatch { expected: self.z_card, got: g.len() });
        }
        Ok(())
    }

    /// E_n[h(X)^2].
    pub fn mean_h_sq(&self, h: &SpaceFun) -> Result<f64> {
        self.check_h(h)?;
        let s: f64 = (0..self.x_card).map(|x| self.count_x[x] * h.at(x) * h.at(x)).sum();
        Ok(s / self.n as f64)
    }

    /// E_n[g(Z)^2].
    pub fn mean_g_sq(&self, g: &SpaceFun) -> Result<f64> {
        self.check_g(g)?;
        let s: f64 = (0..self.z_card).map(|z| self.count_z[z] * g.at(z) * g.at(z)).sum();
        Ok(s / self.n as f64)
    }

    /// E_n[(Y - h(X)) g(Z)].
    pub fn mean_resid_g(&self, h: &SpaceFun, g: &SpaceFun) -> Result<f64> {
        self.check_h(h)?;
        self.check_g(g)?;
        let mut s = 0.0;
        for x in 0..self.x_card {
            for z in 0..self.z_card {
                s += (self.sum_y[x][z] - self.count[x][z] * h.at(x)) * g.at(z);
            }
        }
        Ok(s / self.n as f64)
    }
}

/// Sample objective 0.5 E_n[h^2] + E_n[(Y - h) g].
pub fn empirical_lagrangian(table: &EmpiricalTable, h: &SpaceFun, g: &SpaceFun) -> Result<f64> {
    Ok(0.5 * table.mean_h_sq(h)? + table.mean_resid_g(h, g)?)
}

/// Population objective 0.5 <h, h>_X + <r0 - T h, g>_Z.
pub fn population_lagrangian(
    op: &CondExpOp,
    r0: &SpaceFun,
    h: &SpaceFun,
    g: &SpaceFun,
) -> Result<f64> {
    let th = op.apply(h)?;
    let resid = r0.sub(&th);
    Ok(0.5 * op.x_space().inner_product(h, h)? + op.z_space().inner_product(&resid, g)?)
}

/// Outcome of one fit over finite families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimator: String,
    pub h_index: usize,
    pub h_hat: SpaceFun,
    /// Inner maximizer at the chosen h, when the estimator has one.
    pub g_index: Option<usize>,
    pub objective: f64,
    pub hyperparams: BTreeMap<String, f64>,
    pub diagnostics: BTreeMap<String, f64>,
    /// Indices surviving the near-optimality screen, when one is used.
    pub candidate_set: Option<Vec<usize>>,
}

/// Quality of a fitted h against the truth: L2(X) distance and the RMS of
/// the instrument-side image T(h - h0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub l2_error: f64,
    pub projected_rmse: f64,
}

pub fn evaluate(op: &CondExpOp, truth: &ScenarioTruth, h_hat: &SpaceFun) -> Result<Metrics> {
    let diff = h_hat.sub(&truth.h0);
    let l2_error = op.x_space().norm(&diff)?;
    let projected = op.apply(&diff)?;
    let projected_rmse = op.z_space().norm(&projected)?;
    Ok(Metrics { l2_error, projected_rmse })
}

/// First-index argmax of a payoff over a family.
fn argmax_over<F>(fam: &FiniteFamily, payoff: F) -> Result<(usize, f64)>
where
    F: Fn(&SpaceFun) -> Result<f64>,
{
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, g) in fam.members().iter().enumerate() {
        let v = payoff(g)?;
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(best)
}

/// Lexicographic argmin over a family: value, then L2 norm, then index.
fn argmin_lexi<F>(fam: &FiniteFamily, value: F) -> Result<(usize, f64)>
where
    F: Fn(usize, &SpaceFun) -> Result<f64>,
{
    let mut best_i = 0usize;
    let mut best_v = f64::INFINITY;
    let mut best_norm = f64::INFINITY;
    for (i, h) in fam.members().iter().enumerate() {
        let v = value(i, h)?;
        let norm = fam.space().norm(h)?;
        if v < best_v || (v == best_v && norm < best_norm) {
            best_i = i;
            best_v = v;
            best_norm = norm;
        }
    }
    Ok((best_i, best_v))
}

fn check_families(table: &EmpiricalTable, h_fam: &FiniteFamily, g_fam: &FiniteFamily) -> Result<()> {
    if h_fam.space().len() != table.x_card {
        return Err(Error::DimensionMismatch { expected: table.x_card, got: h_fam.space().len() });
    }
    if g_fam.space().len() != table.z_card {
        return Err(Error::DimensionMismatch { expected: table.z_card, got: g_fam.space().len() });
    }
    Ok(())
}

fn minimax_core<F>(h_fam: &FiniteFamily, g_fam: &FiniteFamily, payoff: F, name: &str) -> Result<FitResult>
where
    F: Fn(&SpaceFun, &SpaceFun) -> Result<f64>,
{
    let (h_index, objective) =
        argmin_lexi(h_fam, |_, h| Ok(argmax_over(g_fam, |g| payoff(h, g))?.1))?;
    let h_hat = h_fam.member(h_index).clone();
    let (g_index, _) = argmax_over(g_fam, |g| payoff(&h_hat, g))?;
    Ok(FitResult {
        estimator: name.into(),
        h_index,
        h_hat,
        g_index: Some(g_index),
        objective,
        hyperparams: BTreeMap::new(),
        diagnostics: BTreeMap::new(),
        candidate_set: None,
    })
}

/// Penalized minimax fit: argmin_H max_G 0.5 E_n[h^2] + E_n[(Y - h) g].
pub fn fit_penalized_minimax(
    table: &EmpiricalTable,
    h_fam: &FiniteFamily,
    g_fam: &FiniteFamily,
) -> Result<FitResult> {
    check_families(table, h_fam, g_fam)?;
    minimax_core(h_fam, g_fam, |h, g| empirical_lagrangian(table, h, g), "penalized_minimax")
}

/// Adversarial fit with a quadratic discriminator penalty:
/// argmin_H max_G E_n[(Y - h) g] - 0.5 E_n[g^2].
pub fn fit_dikkala(
    table: &EmpiricalTable,
    h_fam: &FiniteFamily,
    g_fam: &FiniteFamily,
) -> Result<FitResult> {
    check_families(table, h_fam, g_fam)?;
    minimax_core(
        h_fam,
        g_fam,
        |h, g| Ok(table.mean_resid_g(h, g)? - 0.5 * table.mean_g_sq(g)?),
        "dikkala",
    )
}

/// Default decay for the extra structural penalty weight.
pub fn liao_alpha_schedule(c: f64, n: usize) -> f64 {
    c * (n as f64).powf(-1.0 / 3.0)
}

/// Doubly penalized fit:
/// argmin_H max_G E_n[(Y - h) g] - 0.5 E_n[g^2] + alpha E_n[h^2].
pub fn fit_liao(
    table: &EmpiricalTable,
    h_fam: &FiniteFamily,
    g_fam: &FiniteFamily,
    alpha: f64,
) -> Result<FitResult> {
    check_families(table, h_fam, g_fam)?;
    let mut out = minimax_core(
        h_fam,
        g_fam,
        |h, g| {
            Ok(table.mean_resid_g(h, g)? - 0.5 * table.mean_g_sq(g)?
                + alpha * table.mean_h_sq(h)?)
        },
        "liao",
    )?;
    out.hyperparams.insert("alpha".into(), alpha);
    Ok(out)
}

/// Order-flipped fit: pick the discriminator by argmax_G min_H of the
/// penalized objective, then minimize against that fixed discriminator.
pub fn fit_bennett_flip(
    table: &EmpiricalTable,
    h_fam: &FiniteFamily,
    g_fam: &FiniteFamily,
) -> Result<FitResult> {
    check_families(table, h_fam, g_fam)?;
    let (g_index, _) = argmax_over(g_fam, |g| {
        Ok(argmin_lexi(h_fam, |_, h| empirical_lagrangian(table, h, g))?.1)
    })?;
    let g_hat = g_fam.member(g_index).clone();
    let (h_index, objective) =
        argmin_lexi(h_fam, |_, h| empirical_lagrangian(table, h, &g_hat))?;
    Ok(FitResult {
        estimator: "bennett_flip".into(),
        h_index,
        h_hat: h_fam.member(h_index).clone(),
        g_index: Some(g_index),
        objective,
        hyperparams: BTreeMap::new(),
        diagnostics: BTreeMap::new(),
        candidate_set: None,
    })
}

/// Near-optimality slack sqrt(ln(|H| |G| / delta) / n) scaled by
/// c (C_H + C_G)^2.
pub fn both_worlds_mu(
    c: f64,
    c_h: f64,
    c_g: f64,
    h_card: usize,
    g_card: usize,
    delta: f64,
    n: usize,
) -> f64 {
    let bound = c_h + c_g;
    c * bound * bound * ((h_card as f64 * g_card as f64 / delta).ln() / n as f64).sqrt()
}

/// Two-stage fit: screen H down to near-minimax members (slack mu on the
/// penalized objective), then run the quadratically penalized adversarial
/// criterion over the survivors.
pub fn fit_both_worlds(
    table: &EmpiricalTable,
    h_fam: &FiniteFamily,
    g_fam: &FiniteFamily,
    mu: f64,
) -> Result<FitResult> {
    check_families(table, h_fam, g_fam)?;
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::Config(format!("slack mu must be finite and nonnegative, got {mu}")));
    }
    let outer: Vec<f64> = h_fam
        .members()
        .iter()
        .map(|h| Ok(argmax_over(g_fam, |g| empirical_lagrangian(table, h, g))?.1))
        .collect::<Result<_>>()?;
    let m_star = outer.iter().copied().fold(f64::INFINITY, f64::min);
    let candidates: Vec<usize> =
        (0..h_fam.len()).filter(|&i| outer[i] - m_star <= mu).collect();

    let mut best_i = candidates[0];
    let mut best_v = f64::INFINITY;
    let mut best_norm = f64::INFINITY;
    for &i in &candidates {
        let h = h_fam.member(i);
        let v = argmax_over(g_fam, |g| {
            Ok(table.mean_resid_g(h, g)? - 0.5 * table.mean_g_sq(g)?)
        })?
        .1;
        let norm = h_fam.space().norm(h)?;
        if v < best_v || (v == best_v && norm < best_norm) {
            best_i = i;
            best_v = v;
            best_norm = norm;
        }
    }
    let h_hat = h_fam.member(best_i).clone();
    let (g_index, _) = argmax_over(g_fam, |g| {
        Ok(table.mean_resid_g(&h_hat, g)? - 0.5 * table.mean_g_sq(g)?)
    })?;
    let mut hyperparams = BTreeMap::new();
    hyperparams.insert("mu".into(), mu);
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("m_star".into(), m_star);
    diagnostics.insert("candidates".into(), candidates.len() as f64);
    Ok(FitResult {
        estimator: "both_worlds".into(),
        h_index: best_i,
        h_hat,
        g_index: Some(g_index),
        objective: best_v,
        hyperparams,
        diagnostics,
        candidate_set: Some(candidates),
    })
}

/// Population analogue of the penalized minimax fit.
pub fn pop_penalized_minimax(
    op: &CondExpOp,
    r0: &SpaceFun,
    h_fam: &FiniteFamily,
    g_fam: &FiniteFamily,
) -> Result<FitResult> {
    minimax_core(h_fam, g_fam, |h, g| population_lagrangian(op, r0, h, g), "pop_penalized_minimax")
}

/// Population analogue of the order-flipped fit.
pub fn pop_bennett_flip(
    op: &CondExpOp,
    r0: &SpaceFun,
    h_fam: &FiniteFamily,
    g_fam: &FiniteFamily,
) -> Result<FitResult> {
    let (g_index, _) = argmax_over(g_fam, |g| {
        Ok(argmin_lexi(h_fam, |_, h| population_lagrangian(op, r0, h, g))?.1)
    })?;
    let g_hat = g_fam.member(g_index).clone();
    let (h_index, objective) =
        argmin_lexi(h_fam, |_, h| population_lagrangian(op, r0, h, &g_hat))?;
    Ok(FitResult {
        estimator: "pop_bennett_flip".into(),
        h_index,
        h_hat: h_fam.member(h_index).clone(),
        g_index: Some(g_index),
        objective,
        hyperparams: BTreeMap::new(),
        diagnostics: BTreeMap::new(),
        candidate_set: None,
    })
}

/// Knobs for the projected subgradient solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgradientOptions {
    pub budget: usize,
    pub tol: f64,
    pub step_scale: f64,
}

impl Default for SubgradientOptions {
    fn default() -> Self {
        SubgradientOptions { budget: 5000, tol: 1e-6, step_scale: 0.5 }
    }
}

/// Outcome of the kernel-ball fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RkhsFit {
    pub theta: Vec<f64>,
    pub h_hat: SpaceFun,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub bandwidth: f64,
}

/// Penalized fit against the unit ball of an RKHS over embedded Z points:
/// minimizes 0.5 E_n[h_theta^2] + (1/n) sqrt(r' K r) over the parameter
/// box, where r is the residual vector, by projected subgradient descent
/// with step c/sqrt(t). Returns the better of the best iterate and the
/// suffix average.
pub fn fit_rkhs_penalized(
    ds: &Dataset,
    z_space: &WeightedSpace,
    h_fam: &LinearFamily,
    ball: &RKHSBall,
    opts: &SubgradientOptions,
) -> Result<RkhsFit> {
    ds.validate()?;
    let n = ds.n();
    if n == 0 {
        return Err(Error::InvalidDesign("dataset is empty".into()));
    }
    if h_fam.space().len() != ds.x_card {
        return Err(Error::DimensionMismatch { expected: ds.x_card, got: h_fam.space().len() });
    }
    if z_space.len() != ds.z_card {
        return Err(Error::DimensionMismatch { expected: ds.z_card, got: z_space.len() });
    }
    let embedded = embed_labels(z_space);
    let points: Vec<f64> = ds.zs.iter().map(|&z| embedded[z]).collect();
    let k = ball.gram(&points)?;
    let bandwidth = ball.kernel.resolved_bandwidth(&points);

    let p = h_fam.dim();
    let nf = n as f64;
    // Design matrix rows phi_j(x_i).
    let phi: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..p).map(|j| h_fam.basis()[j].at(ds.xs[i])).collect())
        .collect();

    let objective = |theta: &[f64]| -> f64 {
        let mut quad = 0.0;
        let mut r = vec![0.0; n];
        for i in 0..n {
            let hx: f64 = (0..p).map(|j| theta[j] * phi[i][j]).sum();
            quad += hx * hx;
            r[i] = ds.ys[i] - hx;
        }
        let mut rkr = 0.0;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += k[(i, j)] * r[j];
            }
            rkr += r[i] * s;
        }
        0.5 * quad / nf + rkr.max(0.0).sqrt() / nf
    };

    let mut theta = vec![0.0; p];
    let mut best_theta = theta.clone();
    let mut best_obj = objective(&theta);
    let mut suffix_sum = vec![0.0; p];
    let mut suffix_count = 0usize;
    let mut stale = 0usize;
    let mut iterations = 0usize;

    for t in 1..=opts.budget {
        iterations = t;
        // Residuals and h values at the current parameter.
        let mut r = vec![0.0; n];
        let mut hx = vec![0.0; n];
        for i in 0..n {
            hx[i] = (0..p).map(|j| theta[j] * phi[i][j]).sum();
            r[i] = ds.ys[i] - hx[i];
        }
        let mut kr = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += k[(i, j)] * r[j];
            }
            kr[i] = s;
        }
        let rkr: f64 = (0..n).map(|i| r[i] * kr[i]).sum();
        let denom = rkr.max(0.0).sqrt();
        let mut grad = vec![0.0; p];
        for j in 0..p {
            let mut gq = 0.0;
            let mut gp = 0.0;
            for i in 0..n {
                gq += hx[i] * phi[i][j];
                gp += phi[i][j] * kr[i];
            }
            grad[j] = gq / nf;
            if denom > 0.0 {
                grad[j] -= gp / (nf * denom);
            }
        }
        let step = opts.step_scale / (t as f64).sqrt();
        for j in 0..p {
            theta[j] -= step * grad[j];
        }
        h_fam.clamp_params(&mut theta);

        if t > opts.budget / 2 {
            for j in 0..p {
                suffix_sum[j] += theta[j];
            }
            suffix_count += 1;
        }
        let obj = objective(&theta);
        if obj < best_obj - opts.tol {
            best_obj = obj;
            best_theta = theta.clone();
            stale = 0;
        } else {
            if obj < best_obj {
                best_obj = obj;
                best_theta = theta.clone();
            }
            stale += 1;
            if stale >= 250 && t > opts.budget / 2 {
                break;
            }
        }
    }

    if suffix_count > 0 {
        let avg: Vec<f64> = suffix_sum.iter().map(|s| s / suffix_count as f64).collect();
        let avg_obj = objective(&avg);
        if avg_obj < best_obj {
            best_obj = avg_obj;
            best_theta = avg;
        }
    }

    let h_hat = h_fam.evaluate(&best_theta)?;
    Ok(RkhsFit {
        theta: best_theta,
        h_hat,
        objective: best_obj,
        iterations,
        converged: iterations < opts.budget,
        bandwidth,
    })
}
