//! Conditional expectation operator on a finite joint design and the
//! population objects built from it.
//!
//! Given a joint table p(x, z), the operator T maps h in L2(X) to
//! E[h(X) | Z = z], and its adjoint T* maps g in L2(Z) to E[g(Z) | X = x].
//! Both are small dense matrices of conditional probabilities. The singular
//! value decomposition is taken in the weighted geometry by whitening:
//!
//! ```text
//!     A = V^(1/2) T W^(-1/2)
//! ```
//!
//! with V, W the diagonal marginal weight matrices; orthonormal singular
//! vectors of A map back to weighted-orthonormal singular functions. The
//! largest singular value of a conditional expectation operator is exactly 1
//! (attained by constants), so sigma_1 <= 1 is a structural check on every
//! factorization.
//!
//! From the SVD come the population oracles: the least-norm solution of
//! T h = r0, the minimal-norm Lagrange multiplier solving T T* g = r0, the
//! source-condition diagnostics, and an ill-posedness measure over candidate
//! function families.

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::probspace::{SpaceFun, WeightedSpace};
use crate::{Error, Result};

/// Tolerance for conditional probability rows summing to one.
const STOCHASTIC_TOL: f64 = 1e-10;
/// Tolerance on marginal consistency between the joint table and the spaces.
const MARGINAL_TOL: f64 = 1e-10;
/// Relative singular value cutoff defining numerical rank.
const RANK_CUTOFF: f64 = 1e-10;
/// Orthonormality and reconstruction tolerance for factorizations.
const SVD_TOL: f64 = 1e-8;
/// Relative residual above which a response is declared outside the range.
const RANGE_TOL: f64 = 1e-8;

/// Joint distribution of (X, Z) on finite supports.
///
/// The joint table is indexed `[x][z]`; row and column sums must reproduce
/// the space weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointDesignRaw", into = "JointDesignRaw")]
pub struct JointDesign {
    x_space: WeightedSpace,
    z_space: WeightedSpace,
    joint: Vec<Vec<f64>>,
    metadata: Option<serde_json::Value>,
}

/// Serialized form: support labels plus the joint table in row-major order.
/// Validation reruns on load.
#[derive(Serialize, Deserialize)]
struct JointDesignRaw {
    x_labels: Vec<String>,
    z_labels: Vec<String>,
    joint: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<serde_json::Value>,
}

impl TryFrom<JointDesignRaw> for JointDesign {
    type Error = Error;
    fn try_from(raw: JointDesignRaw) -> Result<Self> {
        let mut d = JointDesign::from_table(raw.x_labels, raw.z_labels, raw.joint)?;
        d.metadata = raw.metadata;
        Ok(d)
    }
}

impl From<JointDesign> for JointDesignRaw {
    fn from(d: JointDesign) -> Self {
        JointDesignRaw {
            x_labels: d.x_space.labels().to_vec(),
            z_labels: d.z_space.labels().to_vec(),
            joint: d.joint,
            metadata: d.metadata,
        }
    }
}

impl JointDesign {
    /// Builds a design from pre-validated marginal spaces and a joint table,
    /// checking nonnegativity, unit mass, and marginal consistency.
    pub fn new(x_space: WeightedSpace, z_space: WeightedSpace, joint: Vec<Vec<f64>>) -> Result<Self> {
        let nx = x_space.len();
        let nz = z_space.len();
        if joint.len() != nx {
            return Err(Error::DimensionMismatch { expected: nx, got: joint.len() });
        }
        for (x, row) in joint.iter().enumerate() {
            if row.len() != nz {
                return Err(Error::DimensionMismatch { expected: nz, got: row.len() });
            }
            for (z, &p) in row.iter().enumerate() {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::InvalidDesign(format!(
                        "joint mass at cell (x={x}, z={z}) is {p:e}"
                    )));
                }
            }
        }
        let mass: f64 = joint.iter().flatten().sum();
        if (mass - 1.0).abs() > MARGINAL_TOL {
            return Err(Error::InvalidDesign(format!(
                "joint mass sums to {mass:.15} instead of 1"
            )));
        }
        for x in 0..nx {
            let row: f64 = joint[x].iter().sum();
            if (row - x_space.weight(x)).abs() > MARGINAL_TOL {
                return Err(Error::InvalidDesign(format!(
                    "row {x} sums to {row:.15}, expected marginal {:.15}",
                    x_space.weight(x)
                )));
            }
        }
        for z in 0..nz {
            let col: f64 = (0..nx).map(|x| joint[x][z]).sum();
            if (col - z_space.weight(z)).abs() > MARGINAL_TOL {
                return Err(Error::InvalidDesign(format!(
                    "column {z} sums to {col:.15}, expected marginal {:.15}",
                    z_space.weight(z)
                )));
            }
        }
        Ok(JointDesign { x_space, z_space, joint, metadata: None })
    }

    /// Builds a design from labels and a joint table, deriving the marginal
    /// spaces from row and column sums.
    pub fn from_table(
        x_labels: Vec<String>,
        z_labels: Vec<String>,
        joint: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let nx = x_labels.len();
        let nz = z_labels.len();
        if joint.len() != nx {
            return Err(Error::DimensionMismatch { expected: nx, got: joint.len() });
        }
        let mut x_weights = vec![0.0; nx];
        let mut z_weights = vec![0.0; nz];
        for (x, row) in joint.iter().enumerate() {
            if row.len() != nz {
                return Err(Error::DimensionMismatch { expected: nz, got: row.len() });
            }
            for (z, &p) in row.iter().enumerate() {
                x_weights[x] += p;
                z_weights[z] += p;
            }
        }
        let x_space = WeightedSpace::new(x_labels, x_weights)
            .map_err(|e| Error::InvalidDesign(format!("x marginal: {e}")))?;
        let z_space = WeightedSpace::new(z_labels, z_weights)
            .map_err(|e| Error::InvalidDesign(format!("z marginal: {e}")))?;
        Self::new(x_space, z_space, joint)
    }

    /// Convenience constructor with index labels "0", "1", ....
    pub fn from_indexed_table(joint: Vec<Vec<f64>>) -> Result<Self> {
        let nx = joint.len();
        let nz = joint.first().map_or(0, |r| r.len());
        let x_labels = (0..nx).map(|i| i.to_string()).collect();
        let z_labels = (0..nz).map(|i| i.to_string()).collect();
        Self::from_table(x_labels, z_labels, joint)
    }

    pub fn x_space(&self) -> &WeightedSpace {
        &self.x_space
    }

    pub fn z_space(&self) -> &WeightedSpace {
        &self.z_space
    }

    /// Joint mass at cell (x, z).
    pub fn mass(&self, x: usize, z: usize) -> f64 {
        self.joint[x][z]
    }

    pub fn joint(&self) -> &[Vec<f64>] {
        &self.joint
    }

    pub fn set_metadata(&mut self, metadata: serde_json::Value) {
        self.metadata = Some(metadata);
    }

    pub fn metadata(&self) -> Option<&serde_json::Value> {
        self.metadata.as_ref()
    }
}

/// Conditional expectation operator T: L2(X) -> L2(Z) together with its
/// adjoint, both stored as conditional probability tables.
#[derive(Debug, Clone, PartialEq)]
pub struct CondExpOp {
    design: JointDesign,
    /// t[z][x] = p(x | z); rows are stochastic.
    t: Vec<Vec<f64>>,
    /// t_star[x][z] = p(z | x); rows are stochastic.
    t_star: Vec<Vec<f64>>,
}

/// Builds the conditional expectation operator from a design by Bayes
/// division of the joint table by the marginals.
pub fn build_operator(design: &JointDesign) -> Result<CondExpOp> {
    let nx = design.x_space().len();
    let nz = design.z_space().len();
    let mut t = vec![vec![0.0; nx]; nz];
    let mut t_star = vec![vec![0.0; nz]; nx];
    for x in 0..nx {
        for z in 0..nz {
            let p = design.mass(x, z);
            t[z][x] = p / design.z_space().weight(z);
            t_star[x][z] = p / design.x_space().weight(x);
        }
    }
    for (z, row) in t.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidDesign(format!(
                "conditional row given z={z} sums to {sum:.15}"
            )));
        }
    }
    for (x, row) in t_star.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidDesign(format!(
                "conditional row given x={x} sums to {sum:.15}"
            )));
        }
    }
    Ok(CondExpOp { design: design.clone(), t, t_star })
}

impl CondExpOp {
    pub fn design(&self) -> &JointDesign {
        &self.design
    }

    pub fn x_space(&self) -> &WeightedSpace {
        self.design.x_space()
    }

    pub fn z_space(&self) -> &WeightedSpace {
        self.design.z_space()
    }

    /// Conditional probability table p(x | z), rows indexed by z.
    pub fn t_table(&self) -> &[Vec<f64>] {
        &self.t
    }

    /// Conditional probability table p(z | x), rows indexed by x.
    pub fn t_star_table(&self) -> &[Vec<f64>] {
        &self.t_star
    }

    /// Applies T: (T h)(z) = E[h(X) | Z = z].
    pub fn apply(&self, h: &SpaceFun) -> Result<SpaceFun> {
        self.x_space().check_fun(h)?;
        let out = self
            .t
            .iter()
            .map(|row| row.iter().zip(h.values()).map(|(p, v)| p * v).sum())
            .collect();
        Ok(SpaceFun::new(out))
    }

    /// Applies T*: (T* g)(x) = E[g(Z) | X = x].
    pub fn apply_adjoint(&self, g: &SpaceFun) -> Result<SpaceFun> {
        self.z_space().check_fun(g)?;
        let out = self
            .t_star
            .iter()
            .map(|row| row.iter().zip(g.values()).map(|(p, v)| p * v).sum())
            .collect();
        Ok(SpaceFun::new(out))
    }

    /// Singular value decomposition in the weighted geometry.
    pub fn svd(&self) -> Result<OperatorSVD> {
        OperatorSVD::compute(self)
    }
}

/// Singular system of T in the weighted geometry.
///
/// `right` is a complete weighted-orthonormal basis of L2(X) and `left` one
/// of L2(Z); the first `min(|X|, |Z|)` entries of each pair with the
/// singular values, and entries past `rank` span the null spaces of T and
/// T* respectively.
#[derive(Debug, Clone)]
pub struct OperatorSVD {
    x_space: WeightedSpace,
    z_space: WeightedSpace,
    singular_values: Vec<f64>,
    left: Vec<SpaceFun>,
    right: Vec<SpaceFun>,
    rank: usize,
}

impl OperatorSVD {
    fn compute(op: &CondExpOp) -> Result<Self> {
        let nx = op.x_space().len();
        let nz = op.z_space().len();
        let wx = op.x_space().weights();
        let wz = op.z_space().weights();

        // Whitened operator A = V^(1/2) T W^(-1/2).
        let mut a = nalgebra::DMatrix::zeros(nz, nx);
        for z in 0..nz {
            for x in 0..nx {
                a[(z, x)] = wz[z].sqrt() * op.t[z][x] / wx[x].sqrt();
            }
        }

        let (u, singular_values, v) = linalg::svd_desc(&a);
        let sigma_max = singular_values.first().copied().unwrap_or(0.0);
        let cutoff = RANK_CUTOFF * sigma_max;
        let rank = singular_values.iter().filter(|s| **s > cutoff).count();

        // Unwhiten each side and complete it to a full orthonormal basis of
        // its space; the appended directions span the respective null space.
        let unwhiten = |col: nalgebra::DVectorView<f64>, w: &[f64]| {
            SpaceFun::new((0..w.len()).map(|i| col[i] / w[i].sqrt()).collect())
        };
        let mut right: Vec<SpaceFun> =
            (0..v.ncols()).map(|i| unwhiten(v.column(i), wx)).collect();
        if v.ncols() < nx {
            let extra = linalg::complete_orthonormal(&v);
            right.extend((0..extra.ncols()).map(|i| unwhiten(extra.column(i), wx)));
        }
        let mut left: Vec<SpaceFun> =
            (0..u.ncols()).map(|i| unwhiten(u.column(i), wz)).collect();
        if u.ncols() < nz {
            let extra = linalg::complete_orthonormal(&u);
            left.extend((0..extra.ncols()).map(|i| unwhiten(extra.column(i), wz)));
        }

        let svd = OperatorSVD {
            x_space: op.x_space().clone(),
            z_space: op.z_space().clone(),
            singular_values,
            left,
            right,
            rank,
        };
        svd.validate(Some(op))?;
        Ok(svd)
    }

    /// Assembles a singular system from parts, validating orthonormality and
    /// ordering. Intended for synthetic systems in diagnostics and tests;
    /// without an operator the reconstruction identity is not checked.
    pub fn from_parts(
        x_space: WeightedSpace,
        z_space: WeightedSpace,
        singular_values: Vec<f64>,
        left: Vec<SpaceFun>,
        right: Vec<SpaceFun>,
        rank: usize,
    ) -> Result<Self> {
        let svd = OperatorSVD { x_space, z_space, singular_values, left, right, rank };
        svd.validate(None)?;
        Ok(svd)
    }

    fn validate(&self, op: Option<&CondExpOp>) -> Result<()> {
        let k = self.singular_values.len();
        if k != self.x_space.len().min(self.z_space.len()) {
            return Err(Error::Factorization(format!(
                "expected {} singular values, got {k}",
                self.x_space.len().min(self.z_space.len())
            )));
        }
        if self.left.len() != self.z_space.len() || self.right.len() != self.x_space.len() {
            return Err(Error::Factorization("singular function count mismatch".into()));
        }
        if self.rank > k {
            return Err(Error::Factorization("rank exceeds singular value count".into()));
        }
        for w in self.singular_values.windows(2) {
            if w[1] > w[0] + SVD_TOL {
                return Err(Error::Factorization("singular values are not sorted".into()));
            }
        }
        if let Some(&s) = self.singular_values.first() {
            if s > 1.0 + SVD_TOL {
                return Err(Error::Factorization(format!(
                    "largest singular value {s:.12} exceeds 1"
                )));
            }
        }
        for (space, funs) in [(&self.x_space, &self.right), (&self.z_space, &self.left)] {
            for i in 0..funs.len() {
                for j in i..funs.len() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    let got = space.inner_product(&funs[i], &funs[j])?;
                    if (got - want).abs() > SVD_TOL {
                        return Err(Error::Factorization(format!(
                            "singular functions {i},{j} have inner product {got:.3e}, want {want}"
                        )));
                    }
                }
            }
        }
        if let Some(op) = op {
            for i in 0..k {
                let tv = op.apply(&self.right[i])?;
                let target = self.left[i].scale(self.singular_values[i]);
                if self.z_space.distance(&tv, &target)? > SVD_TOL {
                    return Err(Error::Factorization(format!(
                        "T v_{i} deviates from sigma_{i} u_{i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn x_space(&self) -> &WeightedSpace {
        &self.x_space
    }

    pub fn z_space(&self) -> &WeightedSpace {
        &self.z_space
    }

    /// Singular values in descending order, length min(|X|, |Z|).
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Numerical rank at the relative cutoff 1e-10.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Left singular functions on Z; entries past `rank` span null(T*).
    pub fn left(&self) -> &[SpaceFun] {
        &self.left
    }

    /// Right singular functions on X; entries past `rank` span null(T).
    pub fn right(&self) -> &[SpaceFun] {
        &self.right
    }

    /// Orthonormal basis of the null space of T.
    pub fn null_x(&self) -> &[SpaceFun] {
        &self.right[self.rank..]
    }

    /// Orthonormal basis of the null space of T*.
    pub fn null_z(&self) -> &[SpaceFun] {
        &self.left[self.rank..]
    }

    /// Coefficients of `g` on the left singular functions, one per singular
    /// value.
    pub fn left_coefficients(&self, g: &SpaceFun) -> Result<Vec<f64>> {
        (0..self.singular_values.len())
            .map(|i| self.z_space.inner_product(g, &self.left[i]))
            .collect()
    }

    /// Relative distance from `g` to the range of T (the span of the first
    /// `rank` left singular functions). Zero-norm inputs count as inside.
    pub fn range_residual(&self, g: &SpaceFun) -> Result<f64> {
        let norm = self.z_space.norm(g)?;
        if norm == 0.0 {
            return Ok(0.0);
        }
        let mut inside = SpaceFun::zeros(g.len());
        for i in 0..self.rank {
            let c = self.z_space.inner_product(g, &self.left[i])?;
            inside = inside.add(&self.left[i].scale(c));
        }
        Ok(self.z_space.distance(g, &inside)? / norm)
    }
}

/// Least-norm solution of T h = r0, i.e. the weighted pseudoinverse applied
/// to r0. Errors when r0 is not in the range of T.
pub fn least_norm_solution(op: &CondExpOp, r0: &SpaceFun) -> Result<SpaceFun> {
    let svd = op.svd()?;
    least_norm_from_svd(&svd, r0)
}

pub(crate) fn least_norm_from_svd(svd: &OperatorSVD, r0: &SpaceFun) -> Result<SpaceFun> {
    let residual = svd.range_residual(r0)?;
    if residual > RANGE_TOL {
        return Err(Error::NoSolution { residual });
    }
    let mut h = SpaceFun::zeros(svd.x_space().len());
    for i in 0..svd.rank() {
        let c = svd.z_space().inner_product(r0, &svd.left()[i])?;
        h = h.add(&svd.right()[i].scale(c / svd.singular_values()[i]));
    }
    Ok(h)
}

/// Minimal-norm g solving T T* g = r0, the Lagrange multiplier of the
/// least-norm program. Errors when r0 is outside the range of T T*, which
/// on finite designs coincides with the range of T.
pub fn lagrange_multiplier(op: &CondExpOp, r0: &SpaceFun) -> Result<SpaceFun> {
    let svd = op.svd()?;
    lagrange_from_svd(&svd, r0)
}

pub(crate) fn lagrange_from_svd(svd: &OperatorSVD, r0: &SpaceFun) -> Result<SpaceFun> {
    let residual = svd.range_residual(r0)?;
    if residual > RANGE_TOL {
        return Err(Error::SourceCondition { residual });
    }
    let mut g = SpaceFun::zeros(svd.z_space().len());
    for i in 0..svd.rank() {
        let c = svd.z_space().inner_product(r0, &svd.left()[i])?;
        let s = svd.singular_values()[i];
        g = g.add(&svd.left()[i].scale(c / (s * s)));
    }
    Ok(g)
}

/// Spectral decomposition of a response against a singular system.
#[derive(Debug, Clone, Serialize)]
pub struct SourceDiagnostics {
    /// gamma_i = <r0, u_i> for each singular value.
    pub gamma: Vec<f64>,
    /// sum over retained components of gamma_i^2 / sigma_i^4; equals the
    /// squared norm of the minimal Lagrange multiplier when r0 is in range.
    pub source_norm_sq: f64,
    /// Indices whose singular value fell at or below the cutoff while the
    /// component gamma_i was nonzero; mass there breaks the source condition.
    pub dropped: Vec<usize>,
}

/// Projects r0 onto the singular system and accumulates the source-condition
/// sum. Components on singular values at or below `cutoff` are flagged
/// rather than accumulated.
pub fn source_diagnostics(svd: &OperatorSVD, r0: &SpaceFun, cutoff: f64) -> Result<SourceDiagnostics> {
    let gamma = svd.left_coefficients(r0)?;
    let norm = svd.z_space().norm(r0)?;
    let gamma_tol = 1e-12 * norm.max(1.0);
    let mut source_norm_sq = 0.0;
    let mut dropped = Vec::new();
    for (i, (&g, &s)) in gamma.iter().zip(svd.singular_values()).enumerate() {
        if s > cutoff {
            source_norm_sq += g * g / (s * s * s * s);
        } else if g.abs() > gamma_tol {
            dropped.push(i);
        }
    }
    Ok(SourceDiagnostics { gamma, source_norm_sq, dropped })
}

/// Ill-posedness of a family relative to a reference point: the supremum of
/// squared L2(X) distance over squared image distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IllPosedness {
    /// Supremum over the family; 0 for a family with no point distinct from
    /// the reference.
    Finite(f64),
    /// Some direction in the family lies in the null space of T.
    Infinite,
}

/// Measures sup over h in `family`, h distinct from `h_ref`, of
/// ||h - h_ref||^2 / ||T(h - h_ref)||^2. Directions annihilated by T make
/// the measure infinite.
pub fn illposedness_measure(
    op: &CondExpOp,
    family: &[SpaceFun],
    h_ref: &SpaceFun,
) -> Result<IllPosedness> {
    let mut sup: f64 = 0.0;
    let mut any = false;
    for h in family {
        let d = h.sub(h_ref);
        let dn = op.x_space().norm(&d)?;
        if dn <= 1e-12 * h_ref.sup_norm().max(1.0) {
            continue;
        }
        let img = op.z_space().norm(&op.apply(&d)?)?;
        if img <= RANK_CUTOFF * dn {
            return Ok(IllPosedness::Infinite);
        }
        sup = sup.max(dn * dn / (img * img));
        any = true;
    }
    Ok(IllPosedness::Finite(if any { sup } else { 0.0 }))
}

/// Population ground truth attached to a design and a structural function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioTruth {
    /// Least-norm solution of T h = r0.
    pub h0: SpaceFun,
    /// Reduced-form response r0 = T h_star.
    pub r0: SpaceFun,
    /// Minimal-norm Lagrange multiplier solving T T* g = r0.
    pub gbar0: SpaceFun,
    /// Dimension of null(T); positive means the design does not identify.
    pub nullspace_dim: usize,
    /// L2(Z) norm of gbar0; finite exactly when the source condition holds.
    pub source_norm: f64,
    #[serde(skip)]
    x_space: WeightedSpace,
    #[serde(skip)]
    z_space: WeightedSpace,
    #[serde(skip)]
    null_basis: Vec<SpaceFun>,
    #[serde(skip)]
    null_z_basis: Vec<SpaceFun>,
}

impl ScenarioTruth {
    /// Computes the full ground truth for the response r0 = T h_star.
    pub fn from_structural(op: &CondExpOp, h_star: &SpaceFun) -> Result<Self> {
        let r0 = op.apply(h_star)?;
        Self::from_response(op, &r0)
    }

    /// Computes the full ground truth for a response already in L2(Z).
    pub fn from_response(op: &CondExpOp, r0: &SpaceFun) -> Result<Self> {
        let svd = op.svd()?;
        let h0 = least_norm_from_svd(&svd, r0)?;
        let gbar0 = lagrange_from_svd(&svd, r0)?;
        let source_norm = svd.z_space().norm(&gbar0)?;
        Ok(ScenarioTruth {
            h0,
            r0: r0.clone(),
            gbar0,
            nullspace_dim: svd.null_x().len(),
            source_norm,
            x_space: svd.x_space().clone(),
            z_space: svd.z_space().clone(),
            null_basis: svd.null_x().to_vec(),
            null_z_basis: svd.null_z().to_vec(),
        })
    }

    pub fn x_space(&self) -> &WeightedSpace {
        &self.x_space
    }

    pub fn z_space(&self) -> &WeightedSpace {
        &self.z_space
    }

    /// Orthonormal basis of null(T); empty when the design identifies.
    pub fn null_basis(&self) -> &[SpaceFun] {
        &self.null_basis
    }

    /// Orthonormal basis of null(T*).
    pub fn null_z_basis(&self) -> &[SpaceFun] {
        &self.null_z_basis
    }

    /// L2(X) distance from `h` to the least-norm solution.
    pub fn l2_error(&self, h: &SpaceFun) -> Result<f64> {
        self.x_space.distance(h, &self.h0)
    }
}
