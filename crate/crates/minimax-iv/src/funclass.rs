//! Hypothesis and discriminator families.
//!
//! Enumeration estimators work over finite families with recorded sup-norm
//! bounds; the kernel estimator works over a linear parameter class paired
//! with an RKHS discriminator ball of radius one. Builders produce
//! realizable families (the true solution and multiplier are members),
//! deliberately misspecified variants with exact approximation error, and
//! geometric ladders of shifted copies for rate sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::npivop::{CondExpOp, ScenarioTruth};
use crate::probspace::{SpaceFun, WeightedSpace};
use crate::{Error, Result};

/// Eigenvalue tolerance when declaring a Gram matrix positive semidefinite.
const PSD_TOL: f64 = -1e-10;

/// Finite list of candidate functions on one space.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteFamily {
    space: WeightedSpace,
    members: Vec<SpaceFun>,
    sup_bound: f64,
}

impl FiniteFamily {
    pub fn new(space: WeightedSpace, members: Vec<SpaceFun>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidFamily("family has no members".into()));
        }
        for m in &members {
            space.check_fun(m).map_err(|e| Error::InvalidFamily(e.to_string()))?;
        }
        let sup_bound = members.iter().map(SpaceFun::sup_norm).fold(0.0, f64::max);
        Ok(FiniteFamily { space, members, sup_bound })
    }

    pub fn space(&self) -> &WeightedSpace {
        &self.space
    }

    pub fn members(&self) -> &[SpaceFun] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &SpaceFun {
        &self.members[i]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Exact supremum norm over the family.
    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    /// Index of the member closest to `f` in L2, with its distance.
    pub fn nearest(&self, f: &SpaceFun) -> Result<(usize, f64)> {
        let mut best = (0usize, f64::INFINITY);
        for (i, m) in self.members.iter().enumerate() {
            let d = self.space.distance(m, f)?;
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best)
    }

    /// Index of a member equal to `f` up to `tol` in every coordinate.
    pub fn index_of(&self, f: &SpaceFun, tol: f64) -> Option<usize> {
        self.members.iter().position(|m| {
            m.values()
                .iter()
                .zip(f.values())
                .all(|(a, b)| (a - b).abs() <= tol)
        })
    }
}

/// Linear span of a basis intersected with a parameter box of the given
/// radius.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFamily {
    space: WeightedSpace,
    basis: Vec<SpaceFun>,
    radius: f64,
}

impl LinearFamily {
    pub fn new(space: WeightedSpace, basis: Vec<SpaceFun>, radius: f64) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::InvalidFamily("linear family has no basis".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidFamily(format!("invalid parameter radius {radius}")));
        }
        for b in &basis {
            space.check_fun(b).map_err(|e| Error::InvalidFamily(e.to_string()))?;
        }
        Ok(LinearFamily { space, basis, radius })
    }

    pub fn space(&self) -> &WeightedSpace {
        &self.space
    }

    pub fn basis(&self) -> &[SpaceFun] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Member at parameter theta: sum_j theta_j phi_j.
    pub fn evaluate(&self, theta: &[f64]) -> Result<SpaceFun> {
        if theta.len() != self.basis.len() {
            return Err(Error::DimensionMismatch { expected: self.basis.len(), got: theta.len() });
        }
        let mut out = SpaceFun::zeros(self.space.len());
        for (t, b) in theta.iter().zip(&self.basis) {
            out = out.add(&b.scale(*t));
        }
        Ok(out)
    }

    /// Projects a parameter vector onto the box of radius B.
    pub fn clamp_params(&self, theta: &mut [f64]) {
        for t in theta.iter_mut() {
            *t = t.clamp(-self.radius, self.radius);
        }
    }

    /// Induced sup-norm bound: B * max_x sum_j |phi_j(x)|.
    pub fn sup_bound(&self) -> f64 {
        let m = self.space.len();
        let mut worst: f64 = 0.0;
        for x in 0..m {
            let s: f64 = self.basis.iter().map(|b| b.at(x).abs()).sum();
            worst = worst.max(s);
        }
        self.radius * worst
    }
}

/// Kernel specification for the discriminator ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// Gaussian kernel exp(-d^2 / (2 gamma^2)). A missing bandwidth is
    /// resolved per point set by the median heuristic: gamma = median
    /// pairwise distance, falling back to 1 when degenerate.
    Gaussian { bandwidth: Option<f64> },
}

impl KernelSpec {
    /// Bandwidth actually used on a point set: the configured value, or the
    /// median heuristic.
    pub fn resolved_bandwidth(&self, points: &[f64]) -> f64 {
        match self {
            KernelSpec::Gaussian { bandwidth: Some(b) } => *b,
            KernelSpec::Gaussian { bandwidth: None } => {
                let n = points.len();
                let mut dists = Vec::with_capacity(n.saturating_sub(1) * n / 2);
                for i in 0..n {
                    for j in (i + 1)..n {
                        dists.push((points[i] - points[j]).abs());
                    }
                }
                if dists.is_empty() {
                    return 1.0;
                }
                dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mid = dists.len() / 2;
                let med = if dists.len() % 2 == 1 {
                    dists[mid]
                } else {
                    0.5 * (dists[mid - 1] + dists[mid])
                };
                if med > 0.0 {
                    med
                } else {
                    1.0
                }
            }
        }
    }

    fn eval(&self, a: f64, b: f64, gamma: f64) -> f64 {
        match self {
            KernelSpec::Gaussian { .. } => {
                let d = a - b;
                (-d * d / (2.0 * gamma * gamma)).exp()
            }
        }
    }
}

/// Unit ball of the RKHS induced by a kernel on embedded Z points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RKHSBall {
    pub kernel: KernelSpec,
}

impl RKHSBall {
    pub fn gaussian(bandwidth: Option<f64>) -> Self {
        RKHSBall { kernel: KernelSpec::Gaussian { bandwidth } }
    }

    /// The ball radius is pinned to one; scale lives in the kernel.
    pub fn radius(&self) -> f64 {
        1.0
    }

    /// Gram matrix K[i][j] = k(p_i, p_j), validated symmetric PSD.
    pub fn gram(&self, points: &[f64]) -> Result<nalgebra::DMatrix<f64>> {
        let n = points.len();
        let gamma = self.kernel.resolved_bandwidth(points);
        let mut k = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.kernel.eval(points[i], points[j], gamma);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        if n > 0 {
            let min_eig = k
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b));
            if min_eig < PSD_TOL {
                return Err(Error::NotPsd { min_eig });
            }
        }
        Ok(k)
    }
}

/// Embeds support labels into the reals: labels that all parse as numbers
/// are used directly, otherwise points embed by index.
pub fn embed_labels(space: &WeightedSpace) -> Vec<f64> {
    let parsed: Option<Vec<f64>> = space
        .labels()
        .iter()
        .map(|l| l.parse::<f64>().ok())
        .collect();
    parsed.unwrap_or_else(|| (0..space.len()).map(|i| i as f64).collect())
}

fn clip_fun(f: &SpaceFun, cap: f64) -> SpaceFun {
    SpaceFun::new(f.values().iter().map(|v| v.clamp(-cap, cap)).collect())
}

/// Distractor recipe shared by the realizable and misspecified builders:
/// cycles through null-space shifts of the anchor, rescalings, and
/// independent draws, everything clipped to a cap of twice the anchor's sup
/// norm (at least one).
fn distractors_around(
    rng: &mut ChaCha8Rng,
    space: &WeightedSpace,
    anchor: &SpaceFun,
    null_basis: &[SpaceFun],
    count: usize,
    scale: f64,
) -> Vec<SpaceFun> {
    let cap = (2.0 * anchor.sup_norm()).max(1.0);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let kind = if null_basis.is_empty() { 1 + k % 2 } else { k % 3 };
        let f = match kind {
            0 => {
                let nu = &null_basis[(k / 3) % null_basis.len()];
                let c = (0.5 + rng.random::<f64>()) * scale;
                let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
                anchor.add(&nu.scale(sign * c))
            }
            1 => {
                let u = (2.0 * rng.random::<f64>() - 1.0) * scale;
                anchor.scale(1.0 + u)
            }
            _ => SpaceFun::new(
                (0..space.len())
                    .map(|_| (2.0 * rng.random::<f64>() - 1.0) * cap)
                    .collect(),
            ),
        };
        out.push(clip_fun(&f, cap));
    }
    out
}

/// Builds realizable families: H contains the least-norm solution exactly
/// and G contains the minimal multiplier exactly, each padded with
/// `distractors` deterministic pseudo-random alternatives. When null(T) is
/// nontrivial at least one H distractor is a null-space shift of h0.
pub fn make_realizable_families(
    truth: &ScenarioTruth,
    distractors: usize,
    perturbation_scale: f64,
    seed: u64,
) -> Result<(FiniteFamily, FiniteFamily)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h_members = vec![truth.h0.clone()];
    h_members.extend(distractors_around(
        &mut rng,
        truth.x_space(),
        &truth.h0,
        truth.null_basis(),
        distractors,
        perturbation_scale,
    ));
    let mut g_members = vec![truth.gbar0.clone()];
    g_members.extend(distractors_around(
        &mut rng,
        truth.z_space(),
        &truth.gbar0,
        truth.null_z_basis(),
        distractors,
        perturbation_scale,
    ));
    Ok((
        FiniteFamily::new(truth.x_space().clone(), h_members)?,
        FiniteFamily::new(truth.z_space().clone(), g_members)?,
    ))
}

/// Builds misspecified families: the anchors are h0 + delta_h and
/// gbar0 + delta_g with ||delta_h|| = eps_h and ||delta_g|| = eps_g exactly
/// (up to float rounding), and no member equals the dropped truth. Shift
/// directions are orthogonal to the respective null spaces so null shifts
/// of the anchor cannot drift back to the truth.
pub fn make_misspecified_families(
    truth: &ScenarioTruth,
    distractors: usize,
    perturbation_scale: f64,
    seed: u64,
    eps_h: f64,
    eps_g: f64,
) -> Result<(FiniteFamily, FiniteFamily)> {
    if eps_h < 0.0 || eps_g < 0.0 {
        return Err(Error::InvalidFamily("approximation errors must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta_h = unit_direction(
        &mut rng,
        truth.x_space(),
        truth.null_basis(),
    )?;
    let delta_g = unit_direction(
        &mut rng,
        truth.z_space(),
        truth.null_z_basis(),
    )?;
    let h_anchor = truth.h0.add(&delta_h.scale(eps_h));
    let g_anchor = truth.gbar0.add(&delta_g.scale(eps_g));

    let mut h_members = vec![h_anchor.clone()];
    h_members.extend(distractors_around(
        &mut rng,
        truth.x_space(),
        &h_anchor,
        truth.null_basis(),
        distractors,
        perturbation_scale,
    ));
    let mut g_members = vec![g_anchor.clone()];
    g_members.extend(distractors_around(
        &mut rng,
        truth.z_space(),
        &g_anchor,
        truth.null_z_basis(),
        distractors,
        perturbation_scale,
    ));
    Ok((
        FiniteFamily::new(truth.x_space().clone(), h_members)?,
        FiniteFamily::new(truth.z_space().clone(), g_members)?,
    ))
}

/// Draws a unit-norm direction orthogonal to the given null basis.
fn unit_direction(
    rng: &mut ChaCha8Rng,
    space: &WeightedSpace,
    null_basis: &[SpaceFun],
) -> Result<SpaceFun> {
    for _ in 0..32 {
        let raw = SpaceFun::new(
            (0..space.len())
                .map(|_| 2.0 * rng.random::<f64>() - 1.0)
                .collect(),
        );
        let off = space.orthogonal_projection(&raw, null_basis)?;
        let res = raw.sub(&off);
        let norm = space.norm(&res)?;
        if norm > 1e-6 {
            return Ok(res.scale(1.0 / norm));
        }
    }
    Err(Error::InvalidFamily(
        "could not draw a direction orthogonal to the null space".into(),
    ))
}

/// Deterministic geometric ladder of shifted copies of the truth, used by
/// rate sweeps on non-identified designs.
///
/// Rung k = 0..rungs-1 shifts h0 along three channels at geometric scales
/// `*_top * *_ratio^k`:
///
/// - a null channel (cycling through a null(T) basis) that the operator
///   erases, so it carries L2 error only;
/// - a silent channel along the second nonconstant right singular
///   direction, whose image is orthogonal to every witness, so it carries
///   projected error the discriminators cannot see directly;
/// - a visible channel along the first nonconstant right singular
///   direction, whose image the witnesses lie on.
///
/// Decoupling how fast detectability decays (visible_ratio) from how fast
/// the carried errors decay (null_ratio, silent_ratio) is what lets one
/// sweep exhibit different L2 and projected-error rates per estimator.
///
/// G holds gbar0, the zero function, and symmetric geometric multiples of
/// the first nonconstant left singular function. The anchors h0 and gbar0
/// are always members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    pub rungs: usize,
    pub null_top: f64,
    pub null_ratio: f64,
    pub silent_top: f64,
    pub silent_ratio: f64,
    pub visible_top: f64,
    pub visible_ratio: f64,
    pub g_rungs: usize,
    pub g_top: f64,
    pub g_ratio: f64,
}

impl Default for LadderSpec {
    fn default() -> Self {
        LadderSpec {
            rungs: 10,
            null_top: 0.8,
            null_ratio: 0.5,
            silent_top: 0.9,
            silent_ratio: 0.5,
            visible_top: 0.65,
            visible_ratio: 0.25,
            g_rungs: 9,
            g_top: 0.8,
            g_ratio: 0.5,
        }
    }
}

fn check_ladder_scale(name: &str, top: f64, ratio: f64) -> Result<()> {
    if top < 0.0 || !top.is_finite() {
        return Err(Error::InvalidFamily(format!("{name} scale must be finite and nonnegative")));
    }
    if top > 0.0 && !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidFamily(format!("{name} ratio must lie in (0, 1]")));
    }
    Ok(())
}

/// Builds ladder families around the truth. The null channel needs a
/// nontrivial null space; the singular-direction channels need the
/// corresponding nonconstant singular triples to exist.
pub fn make_ladder_families(
    truth: &ScenarioTruth,
    op: &CondExpOp,
    spec: &LadderSpec,
) -> Result<(FiniteFamily, FiniteFamily)> {
    if spec.rungs == 0 {
        return Err(Error::InvalidFamily("ladder needs at least one rung".into()));
    }
    check_ladder_scale("null", spec.null_top, spec.null_ratio)?;
    check_ladder_scale("silent", spec.silent_top, spec.silent_ratio)?;
    check_ladder_scale("visible", spec.visible_top, spec.visible_ratio)?;
    check_ladder_scale("witness", spec.g_top, spec.g_ratio)?;
    if spec.null_top + spec.silent_top + spec.visible_top <= 0.0 {
        return Err(Error::InvalidFamily("ladder needs at least one active channel".into()));
    }
    if spec.null_top > 0.0 && truth.null_basis().is_empty() {
        return Err(Error::InvalidFamily(
            "null channel needs a nontrivial null space".into(),
        ));
    }
    let svd = op.svd()?;
    // Index 0 is the constant singular pair at sigma = 1; the ladder works
    // in the nonconstant directions 1 and 2.
    if (spec.visible_top > 0.0 || spec.g_rungs > 0) && svd.rank() < 2 {
        return Err(Error::InvalidFamily(
            "visible channel needs a nonconstant singular direction".into(),
        ));
    }
    if spec.silent_top > 0.0 && svd.rank() < 3 {
        return Err(Error::InvalidFamily(
            "silent channel needs two nonconstant singular directions".into(),
        ));
    }

    let mut h_members = vec![truth.h0.clone()];
    let zeros_x = SpaceFun::new(vec![0.0; truth.x_space().len()]);
    for k in 0..spec.rungs {
        let mut shift = zeros_x.clone();
        if spec.null_top > 0.0 {
            let nu = &truth.null_basis()[k % truth.null_basis().len()];
            shift = shift.add(&nu.scale(spec.null_top * spec.null_ratio.powi(k as i32)));
        }
        if spec.visible_top > 0.0 {
            let scale = spec.visible_top * spec.visible_ratio.powi(k as i32);
            shift = shift.add(&svd.right()[1].scale(scale));
        }
        if spec.silent_top > 0.0 {
            let scale = spec.silent_top * spec.silent_ratio.powi(k as i32);
            shift = shift.add(&svd.right()[2].scale(scale));
        }
        h_members.push(truth.h0.add(&shift));
        h_members.push(truth.h0.sub(&shift));
    }

    let mut g_members = vec![
        truth.gbar0.clone(),
        SpaceFun::new(vec![0.0; truth.z_space().len()]),
    ];
    for j in 0..spec.g_rungs {
        let c = spec.g_top * spec.g_ratio.powi(j as i32);
        g_members.push(svd.left()[1].scale(c));
        g_members.push(svd.left()[1].scale(-c));
    }

    Ok((
        FiniteFamily::new(truth.x_space().clone(), h_members)?,
        FiniteFamily::new(truth.z_space().clone(), g_members)?,
    ))
}
