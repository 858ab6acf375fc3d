//! Data-generating scenarios: designs with known ground truth, outcome
//! noise, and seeded sampling.
//!
//! The spectral construction prescribes the singular system of the design
//! directly. Given marginal weights w, v, orthonormal systems {vt_i} on X
//! and {ut_i} on Z (each orthogonal to constants), and factors sigma_i in
//! (0, 1), the joint table
//!
//! ```text
//!     p(x, z) = w_x v_z (1 + sum_i sigma_i vt_i(x) ut_i(z))
//! ```
//!
//! has exactly the prescribed marginals and operator spectrum
//! {1} u {sigma_i}. Positivity of every cell is guaranteed by
//! sum_i sigma_i |vt_i|_inf |ut_i|_inf < 1 and is checked cell by cell at
//! build time. Coefficients beta_i then pin the whole truth chain:
//! gbar0 = sum beta_i ut_i, h0 = sum beta_i sigma_i vt_i, and
//! r0 = sum beta_i sigma_i^2 ut_i.
//!
//! A scenario couples a design with a structural function h_star and a
//! noise law for Y = h_star(X) + eps, E[eps | Z] = 0. Ground truth is always
//! recomputed from the design; h_star itself is not assumed least-norm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::npivop::{build_operator, CondExpOp, JointDesign, ScenarioTruth};
use crate::probspace::{SpaceFun, WeightedSpace};
use crate::{Error, Result};

/// Orthonormality tolerance for prescribed systems.
const SYSTEM_TOL: f64 = 1e-8;

/// Outcome noise law; always mean zero and independent of (X, Z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Deterministic outcomes.
    None,
    /// Uniform on [-half_width, half_width].
    Uniform { half_width: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::Uniform { half_width } => {
                if half_width.is_finite() && *half_width >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("invalid noise half width {half_width}")))
                }
            }
        }
    }

    /// Almost-sure bound on |eps|.
    pub fn bound(&self) -> f64 {
        match self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Uniform { half_width } => *half_width,
        }
    }

    /// Var(eps).
    pub fn variance(&self) -> f64 {
        match self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Uniform { half_width } => half_width * half_width / 3.0,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Uniform { half_width } => (2.0 * rng.random::<f64>() - 1.0) * half_width,
        }
    }
}

/// Families of raw functions fed to Gram-Schmidt when building orthonormal
/// systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// Discrete-cosine profiles; works on any support.
    Cosine,
    /// Sign patterns (-1/+1 valued on uniform dyadic supports); sup norm
    /// exactly 1, which maximizes the admissible spectrum.
    Walsh,
}

/// Builds `count` functions orthonormal in the weighted inner product and
/// orthogonal to constants, by Gram-Schmidt over the raw family.
pub fn orthonormal_system(
    space: &WeightedSpace,
    kind: SystemKind,
    count: usize,
) -> Result<Vec<SpaceFun>> {
    let m = space.len();
    if count + 1 > m {
        return Err(Error::Config(format!(
            "cannot build {count} orthonormal non-constant functions on {m} points"
        )));
    }
    if kind == SystemKind::Walsh && !m.is_power_of_two() {
        return Err(Error::Config(format!(
            "sign systems need a dyadic support, got {m} points"
        )));
    }
    let raw: Vec<SpaceFun> = (1..=count)
        .map(|k| match kind {
            SystemKind::Cosine => SpaceFun::new(
                (0..m)
                    .map(|i| (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / m as f64).cos())
                    .collect(),
            ),
            SystemKind::Walsh => SpaceFun::new(
                (0..m)
                    .map(|i| if (k & i).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
                    .collect(),
            ),
        })
        .collect();

    let mut done: Vec<SpaceFun> = vec![SpaceFun::constant(1.0, m)];
    for f in raw {
        let proj = space.orthogonal_projection(&f, &done)?;
        let res = f.sub(&proj);
        let norm = space.norm(&res)?;
        if norm < 1e-10 {
            return Err(Error::Config(
                "raw system is degenerate under the given weights".into(),
            ));
        }
        done.push(res.scale(1.0 / norm));
    }
    Ok(done.split_off(1))
}

/// Prescription of a joint design through its singular system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectralSpecRaw", into = "SpectralSpecRaw")]
pub struct SpectralSpec {
    x_space: WeightedSpace,
    z_space: WeightedSpace,
    x_system: Vec<SpaceFun>,
    z_system: Vec<SpaceFun>,
    sigma: Vec<f64>,
    beta: Vec<f64>,
    noise: NoiseSpec,
}

#[derive(Serialize, Deserialize)]
struct SpectralSpecRaw {
    x_space: WeightedSpace,
    z_space: WeightedSpace,
    x_system: Vec<SpaceFun>,
    z_system: Vec<SpaceFun>,
    sigma: Vec<f64>,
    beta: Vec<f64>,
    noise: NoiseSpec,
}

impl TryFrom<SpectralSpecRaw> for SpectralSpec {
    type Error = Error;
    fn try_from(raw: SpectralSpecRaw) -> Result<Self> {
        SpectralSpec::new(
            raw.x_space,
            raw.z_space,
            raw.x_system,
            raw.z_system,
            raw.sigma,
            raw.beta,
            raw.noise,
        )
    }
}

impl From<SpectralSpec> for SpectralSpecRaw {
    fn from(s: SpectralSpec) -> Self {
        SpectralSpecRaw {
            x_space: s.x_space,
            z_space: s.z_space,
            x_system: s.x_system,
            z_system: s.z_system,
            sigma: s.sigma,
            beta: s.beta,
            noise: s.noise,
        }
    }
}

impl SpectralSpec {
    /// Validates dimensions, orthonormality of the prescribed systems (and
    /// their orthogonality to constants), and the singular factor range.
    pub fn new(
        x_space: WeightedSpace,
        z_space: WeightedSpace,
        x_system: Vec<SpaceFun>,
        z_system: Vec<SpaceFun>,
        sigma: Vec<f64>,
        beta: Vec<f64>,
        noise: NoiseSpec,
    ) -> Result<Self> {
        let k = sigma.len();
        if x_system.len() != k || z_system.len() != k || beta.len() != k {
            return Err(Error::Config(format!(
                "system/coefficient lengths disagree: sigma {k}, x {}, z {}, beta {}",
                x_system.len(),
                z_system.len(),
                beta.len()
            )));
        }
        for &s in &sigma {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::Config(format!(
                    "singular factor {s} outside the open interval (0, 1)"
                )));
            }
        }
        for &b in &beta {
            if !b.is_finite() {
                return Err(Error::Config("non-finite coefficient".into()));
            }
        }
        noise.validate()?;
        for (space, system) in [(&x_space, &x_system), (&z_space, &z_system)] {
            let one = SpaceFun::constant(1.0, space.len());
            for (i, f) in system.iter().enumerate() {
                if space.inner_product(f, &one)?.abs() > SYSTEM_TOL {
                    return Err(Error::Config(format!(
                        "system function {i} is not orthogonal to constants"
                    )));
                }
                for (j, g) in system.iter().enumerate().skip(i) {
                    let want = if i == j { 1.0 } else { 0.0 };
                    let got = space.inner_product(f, g)?;
                    if (got - want).abs() > SYSTEM_TOL {
                        return Err(Error::Config(format!(
                            "system functions {i},{j} have inner product {got:.3e}, want {want}"
                        )));
                    }
                }
            }
        }
        Ok(SpectralSpec { x_space, z_space, x_system, z_system, sigma, beta, noise })
    }

    /// Convenience constructor: builds both orthonormal systems of the given
    /// kind from the marginals.
    pub fn with_systems(
        x_space: WeightedSpace,
        z_space: WeightedSpace,
        kind: SystemKind,
        sigma: Vec<f64>,
        beta: Vec<f64>,
        noise: NoiseSpec,
    ) -> Result<Self> {
        let k = sigma.len();
        let x_system = orthonormal_system(&x_space, kind, k)?;
        let z_system = orthonormal_system(&z_space, kind, k)?;
        Self::new(x_space, z_space, x_system, z_system, sigma, beta, noise)
    }

    pub fn x_space(&self) -> &WeightedSpace {
        &self.x_space
    }

    pub fn z_space(&self) -> &WeightedSpace {
        &self.z_space
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    pub fn x_system(&self) -> &[SpaceFun] {
        &self.x_system
    }

    pub fn z_system(&self) -> &[SpaceFun] {
        &self.z_system
    }

    /// 1 - sum_i sigma_i |vt_i|_inf |ut_i|_inf; positive margin guarantees
    /// every joint cell is positive.
    pub fn positivity_margin(&self) -> f64 {
        let s: f64 = self
            .sigma
            .iter()
            .zip(self.x_system.iter().zip(&self.z_system))
            .map(|(sig, (v, u))| sig * v.sup_norm() * u.sup_norm())
            .sum();
        1.0 - s
    }

    /// The least-norm structural function this spectrum prescribes:
    /// h0 = sum_i beta_i sigma_i vt_i.
    pub fn baseline_structural(&self) -> SpaceFun {
        let mut h = SpaceFun::zeros(self.x_space.len());
        for ((b, s), v) in self.beta.iter().zip(&self.sigma).zip(&self.x_system) {
            h = h.add(&v.scale(b * s));
        }
        h
    }
}

/// Materializes the joint table of a spectral prescription, checking every
/// cell for positivity.
pub fn build_spectral_design(spec: &SpectralSpec) -> Result<JointDesign> {
    let nx = spec.x_space.len();
    let nz = spec.z_space.len();
    let mut joint = vec![vec![0.0; nz]; nx];
    for x in 0..nx {
        for z in 0..nz {
            let mut bump = 1.0;
            for ((sig, v), u) in spec.sigma.iter().zip(&spec.x_system).zip(&spec.z_system) {
                bump += sig * v.at(x) * u.at(z);
            }
            let cell = spec.x_space.weight(x) * spec.z_space.weight(z) * bump;
            if cell < 0.0 {
                return Err(Error::NegativeCell { x, z, value: cell });
            }
            joint[x][z] = cell;
        }
    }
    JointDesign::from_table(
        spec.x_space.labels().to_vec(),
        spec.z_space.labels().to_vec(),
        joint,
    )
}

/// A design plus structural function and noise law, with ground truth
/// recomputed from the design.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ScenarioRaw", into = "ScenarioRaw")]
pub struct Scenario {
    design: JointDesign,
    h_star: SpaceFun,
    noise: NoiseSpec,
    op: CondExpOp,
    truth: ScenarioTruth,
}

#[derive(Serialize, Deserialize)]
struct ScenarioRaw {
    design: JointDesign,
    h_star: SpaceFun,
    noise: NoiseSpec,
}

impl TryFrom<ScenarioRaw> for Scenario {
    type Error = Error;
    fn try_from(raw: ScenarioRaw) -> Result<Self> {
        attach_truth(raw.design, raw.h_star, raw.noise)
    }
}

impl From<Scenario> for ScenarioRaw {
    fn from(s: Scenario) -> Self {
        ScenarioRaw { design: s.design, h_star: s.h_star, noise: s.noise }
    }
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.design == other.design && self.h_star == other.h_star && self.noise == other.noise
    }
}

/// Couples a design with a structural function and noise law, computing the
/// full ground-truth chain from the design.
pub fn attach_truth(design: JointDesign, h_star: SpaceFun, noise: NoiseSpec) -> Result<Scenario> {
    design.x_space().check_fun(&h_star)?;
    noise.validate()?;
    let op = build_operator(&design)?;
    let truth = ScenarioTruth::from_structural(&op, &h_star)?;
    Ok(Scenario { design, h_star, noise, op, truth })
}

impl Scenario {
    pub fn design(&self) -> &JointDesign {
        &self.design
    }

    pub fn x_space(&self) -> &WeightedSpace {
        self.design.x_space()
    }

    pub fn z_space(&self) -> &WeightedSpace {
        self.design.z_space()
    }

    pub fn h_star(&self) -> &SpaceFun {
        &self.h_star
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    pub fn op(&self) -> &CondExpOp {
        &self.op
    }

    pub fn truth(&self) -> &ScenarioTruth {
        &self.truth
    }
}

/// One sampled dataset: index triples plus the seed that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x_card: usize,
    pub z_card: usize,
    pub seed: u64,
    pub xs: Vec<usize>,
    pub ys: Vec<f64>,
    pub zs: Vec<usize>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.xs.len()
    }

    /// Checks index bounds and column lengths.
    pub fn validate(&self) -> Result<()> {
        if self.ys.len() != self.xs.len() || self.zs.len() != self.xs.len() {
            return Err(Error::Config("dataset columns have unequal length".into()));
        }
        if self.xs.iter().any(|&x| x >= self.x_card) || self.zs.iter().any(|&z| z >= self.z_card) {
            return Err(Error::Config("dataset index outside support".into()));
        }
        if self.ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::Config("dataset outcome is not finite".into()));
        }
        Ok(())
    }

    /// Writes rows as CSV with header `x,y,z`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,z")?;
        for i in 0..self.n() {
            writeln!(w, "{},{},{}", self.xs[i], self.ys[i], self.zs[i])?;
        }
        Ok(())
    }

    /// Empirical frequency of each (x, z) cell.
    pub fn cell_frequencies(&self) -> Vec<Vec<f64>> {
        let mut freq = vec![vec![0.0; self.z_card]; self.x_card];
        for (&x, &z) in self.xs.iter().zip(&self.zs) {
            freq[x][z] += 1.0;
        }
        let n = self.n().max(1) as f64;
        for row in &mut freq {
            for c in row.iter_mut() {
                *c /= n;
            }
        }
        freq
    }
}

/// Draws n observations i.i.d. from the scenario: (X, Z) from the joint
/// table by inverse CDF, Y = h_star(X) + eps. The same (scenario, n, seed)
/// always reproduces the same dataset bit for bit.
pub fn sample(scenario: &Scenario, n: usize, seed: u64) -> Dataset {
    let nx = scenario.x_space().len();
    let nz = scenario.z_space().len();
    let mut cum = Vec::with_capacity(nx * nz);
    let mut acc = 0.0;
    for x in 0..nx {
        for z in 0..nz {
            acc += scenario.design.mass(x, z);
            cum.push(acc);
        }
    }
    let total = acc;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut zs = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.random::<f64>() * total;
        let cell = cum.partition_point(|&c| c <= u).min(nx * nz - 1);
        let (x, z) = (cell / nz, cell % nz);
        xs.push(x);
        ys.push(scenario.h_star.at(x) + scenario.noise.draw(&mut rng));
        zs.push(z);
    }
    Dataset { x_card: nx, z_card: nz, seed, xs, ys, zs }
}

/// Knobs for randomized spectral scenarios used by verification sweeps.
/// Fields omitted from a config document keep their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomScenarioParams {
    pub x_card: usize,
    pub z_card: usize,
    /// Number of nonunit singular factors; null space dimension is
    /// x_card - 1 - systems when z_card > systems.
    pub systems: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub beta_max: f64,
    pub noise: NoiseSpec,
    /// Scale of a random null-space shift added to h0 to form h_star; 0
    /// keeps h_star = h0.
    pub null_shift_scale: f64,
}

impl Default for RandomScenarioParams {
    fn default() -> Self {
        RandomScenarioParams {
            x_card: 5,
            z_card: 4,
            systems: 2,
            sigma_min: 0.25,
            sigma_max: 0.75,
            beta_max: 1.0,
            noise: NoiseSpec::Uniform { half_width: 0.5 },
            null_shift_scale: 0.5,
        }
    }
}

/// Draws a random spectral scenario: random non-degenerate marginals,
/// cosine systems, descending random spectrum rescaled to keep the
/// positivity margin, random coefficients, and an optional null shift on
/// the structural function.
pub fn random_spectral_scenario(params: &RandomScenarioParams, seed: u64) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_space = random_space(&mut rng, params.x_card)?;
    let z_space = random_space(&mut rng, params.z_card)?;

    let k = params.systems;
    let x_system = orthonormal_system(&x_space, SystemKind::Cosine, k)?;
    let z_system = orthonormal_system(&z_space, SystemKind::Cosine, k)?;

    let mut sigma: Vec<f64> = (0..k)
        .map(|_| rng.random::<f64>() * (params.sigma_max - params.sigma_min) + params.sigma_min)
        .collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // Rescale so the sufficient positivity condition holds with margin.
    let weight: f64 = sigma
        .iter()
        .zip(x_system.iter().zip(&z_system))
        .map(|(s, (v, u))| s * v.sup_norm() * u.sup_norm())
        .sum();
    if weight >= 0.9 {
        let shrink = 0.9 / weight;
        for s in &mut sigma {
            *s *= shrink;
        }
    }

    let beta: Vec<f64> = (0..k)
        .map(|_| {
            let mag = (0.25 + 0.75 * rng.random::<f64>()) * params.beta_max;
            if rng.random::<f64>() < 0.5 {
                -mag
            } else {
                mag
            }
        })
        .collect();

    let spec = SpectralSpec::new(
        x_space,
        z_space,
        x_system,
        z_system,
        sigma,
        beta,
        params.noise,
    )?;
    let design = build_spectral_design(&spec)?;
    let op = build_operator(&design)?;
    let svd = op.svd()?;

    let mut h_star = spec.baseline_structural();
    if params.null_shift_scale > 0.0 && !svd.null_x().is_empty() {
        for nu in svd.null_x() {
            let c = (2.0 * rng.random::<f64>() - 1.0) * params.null_shift_scale;
            h_star = h_star.add(&nu.scale(c));
        }
    }
    attach_truth(design, h_star, params.noise)
}

fn random_space(rng: &mut ChaCha8Rng, card: usize) -> Result<WeightedSpace> {
    let raw: Vec<f64> = (0..card).map(|_| 0.2 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let head: f64 = w[..card - 1].iter().sum();
    w[card - 1] = 1.0 - head;
    WeightedSpace::from_weights(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn binary_space() -> WeightedSpace {
        WeightedSpace::from_weights(vec![0.5, 0.5]).unwrap()
    }

    fn w1_spec(sigma: f64) -> Result<SpectralSpec> {
        let sys = vec![SpaceFun::new(vec![1.0, -1.0])];
        SpectralSpec::new(
            binary_space(),
            binary_space(),
            sys.clone(),
            sys,
            vec![sigma],
            vec![1.0],
            NoiseSpec::None,
        )
    }

    #[test]
    fn spectral_build_recovers_w1() {
        let spec = w1_spec(0.6).unwrap();
        let design = build_spectral_design(&spec).unwrap();
        assert_abs_diff_eq!(design.mass(0, 0), 0.4, epsilon = 1e-14);
        assert_abs_diff_eq!(design.mass(0, 1), 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(design.mass(1, 0), 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(design.mass(1, 1), 0.4, epsilon = 1e-14);
    }

    #[test]
    fn oversized_singular_factor_is_rejected() {
        assert!(matches!(w1_spec(1.2), Err(Error::Config(_))));
    }

    #[test]
    fn negative_cell_is_named() {
        // Valid sigma but a system with sup norm well above 1 drives a cell
        // negative: cosine systems on 3 points have sup ~ 1.2, and a second
        // system pushes the sum past 1.
        let x = WeightedSpace::uniform(4).unwrap();
        let z = WeightedSpace::uniform(4).unwrap();
        let spec = SpectralSpec::with_systems(
            x,
            z,
            SystemKind::Cosine,
            vec![0.7, 0.6],
            vec![1.0, 1.0],
            NoiseSpec::None,
        )
        .unwrap();
        assert!(spec.positivity_margin() < 0.0);
        match build_spectral_design(&spec) {
            Err(Error::NegativeCell { value, .. }) => assert!(value < 0.0),
            other => panic!("expected a negative cell, got {other:?}"),
        }
    }

    #[test]
    fn spectral_design_has_prescribed_spectrum() {
        let x = WeightedSpace::uniform(5).unwrap();
        let z = WeightedSpace::uniform(4).unwrap();
        // Cosine systems have sup norm about sqrt(2), so the margin needs
        // sum_i 2 sigma_i < 1.
        let spec = SpectralSpec::with_systems(
            x,
            z,
            SystemKind::Cosine,
            vec![0.3, 0.15],
            vec![1.0, -1.0],
            NoiseSpec::None,
        )
        .unwrap();
        assert!(spec.positivity_margin() > 0.0);
        let design = build_spectral_design(&spec).unwrap();
        let op = build_operator(&design).unwrap();
        let svd = op.svd().unwrap();
        assert_abs_diff_eq!(svd.singular_values()[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(svd.singular_values()[1], 0.3, epsilon = 1e-8);
        assert_abs_diff_eq!(svd.singular_values()[2], 0.15, epsilon = 1e-8);
        assert_eq!(svd.rank(), 3);
        assert_eq!(svd.null_x().len(), 2);
    }

    #[test]
    fn walsh_systems_are_sign_valued() {
        let s = WeightedSpace::uniform(8).unwrap();
        let sys = orthonormal_system(&s, SystemKind::Walsh, 5).unwrap();
        for f in &sys {
            for &v in f.values() {
                assert_abs_diff_eq!(v.abs(), 1.0, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(s.norm(f).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn truth_chain_matches_spectral_coefficients() {
        let x = WeightedSpace::uniform(5).unwrap();
        let z = WeightedSpace::uniform(4).unwrap();
        let beta = vec![1.5, -0.75];
        let spec = SpectralSpec::with_systems(
            x,
            z,
            SystemKind::Cosine,
            vec![0.5, 0.25],
            beta.clone(),
            NoiseSpec::None,
        )
        .unwrap();
        let design = build_spectral_design(&spec).unwrap();
        let scenario =
            attach_truth(design, spec.baseline_structural(), NoiseSpec::None).unwrap();
        let truth = scenario.truth();

        // gbar0 = sum beta_i u_i and source_norm = |beta| since E[h*] = 0.
        let mut want_g = SpaceFun::zeros(4);
        for (b, u) in beta.iter().zip(spec.z_system()) {
            want_g = want_g.add(&u.scale(*b));
        }
        assert!(scenario.z_space().distance(&truth.gbar0, &want_g).unwrap() < 1e-8);
        let want_norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert_abs_diff_eq!(truth.source_norm, want_norm, epsilon = 1e-8);
    }

    #[test]
    fn source_norm_includes_mean_component() {
        let x = WeightedSpace::uniform(5).unwrap();
        let z = WeightedSpace::uniform(4).unwrap();
        let beta = vec![1.0, 2.0];
        let spec = SpectralSpec::with_systems(
            x,
            z,
            SystemKind::Cosine,
            vec![0.5, 0.25],
            beta.clone(),
            NoiseSpec::None,
        )
        .unwrap();
        let design = build_spectral_design(&spec).unwrap();
        let mean = 0.7;
        let h_star = spec
            .baseline_structural()
            .add(&SpaceFun::constant(mean, 5));
        let scenario = attach_truth(design, h_star, NoiseSpec::None).unwrap();
        let want = (beta.iter().map(|b| b * b).sum::<f64>() + mean * mean).sqrt();
        assert_abs_diff_eq!(scenario.truth().source_norm, want, epsilon = 1e-8);
    }

    #[test]
    fn truth_ignores_null_component_of_h_star() {
        let params = RandomScenarioParams { null_shift_scale: 1.0, ..Default::default() };
        let scenario = random_spectral_scenario(&params, 7).unwrap();
        assert!(scenario.truth().nullspace_dim >= 1);
        // h_star differs from h0 but maps to the same response.
        let d = scenario
            .x_space()
            .distance(scenario.h_star(), &scenario.truth().h0)
            .unwrap();
        assert!(d > 1e-6);
        let img = scenario.op().apply(scenario.h_star()).unwrap();
        assert!(scenario.z_space().distance(&img, &scenario.truth().r0).unwrap() < 1e-9);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let scenario = random_spectral_scenario(&RandomScenarioParams::default(), 3).unwrap();
        let a = sample(&scenario, 500, 42);
        let b = sample(&scenario, 500, 42);
        let c = sample(&scenario, 500, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate().unwrap();
    }

    #[test]
    fn sampled_frequencies_match_joint_mass() {
        let scenario = random_spectral_scenario(&RandomScenarioParams::default(), 11).unwrap();
        let data = sample(&scenario, 1_000_000, 9);
        let freq = data.cell_frequencies();
        for x in 0..scenario.x_space().len() {
            for z in 0..scenario.z_space().len() {
                assert_abs_diff_eq!(freq[x][z], scenario.design().mass(x, z), epsilon = 0.005);
            }
        }
    }

    #[test]
    fn noise_is_bounded_and_centered() {
        let spec = w1_spec(0.6).unwrap();
        let design = build_spectral_design(&spec).unwrap();
        let scenario = attach_truth(
            design,
            SpaceFun::new(vec![0.6, -0.6]),
            NoiseSpec::Uniform { half_width: 0.25 },
        )
        .unwrap();
        let data = sample(&scenario, 20_000, 5);
        let mut sum = 0.0;
        for i in 0..data.n() {
            let eps = data.ys[i] - scenario.h_star().at(data.xs[i]);
            assert!(eps.abs() <= 0.25 + 1e-12);
            sum += eps;
        }
        assert!(sum.abs() / data.n() as f64 <= 0.005);
    }

    #[test]
    fn scenario_json_round_trip() {
        let scenario = random_spectral_scenario(&RandomScenarioParams::default(), 21).unwrap();
        let text = serde_json::to_string(&scenario).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(scenario, back);
        // Truth is recomputed on load and must agree exactly.
        assert_eq!(scenario.truth().h0, back.truth().h0);
        assert_eq!(scenario.truth().source_norm, back.truth().source_norm);
    }

    #[test]
    fn dataset_json_round_trip_and_csv() {
        let scenario = random_spectral_scenario(&RandomScenarioParams::default(), 2).unwrap();
        let data = sample(&scenario, 50, 8);
        let text = serde_json::to_string(&data).unwrap();
        let back: Dataset = serde_json::from_str(&text).unwrap();
        assert_eq!(data, back);
        let mut csv = Vec::new();
        data.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("x,y,z\n"));
        assert_eq!(csv.lines().count(), 51);
    }
}
