//! Finite-dimensional Poisson phase spaces with a group action.
//!
//! A system is anything implementing [`PhaseSpaceSystem`]: a chart of
//! dimension `n`, a Poisson tensor `B(z)`, a Hamiltonian, an equivariant
//! momentum map, a vector of Casimirs and a group action. Analytic
//! derivatives are optional; central finite differences fill the gaps.
//!
//! Implementations must be re-entrant: every method may be called
//! concurrently from several threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, EmcError, Result};
use crate::lie::{AlgebraElement, DualElement, GroupElement, LieGroup};
use crate::linalg;

pub type Point = DVector<f64>;

/// Base step for first derivatives, scaled by `max(1, |z_i|)`.
pub const FD_STEP_FIRST: f64 = 1e-5;
/// Base step for second derivatives, scaled by `max(1, |z_i|)`.
pub const FD_STEP_SECOND: f64 = 1e-4;

pub trait PhaseSpaceSystem: Send + Sync {
    fn name(&self) -> &str;

    /// Chart dimension `n`.
    fn dim(&self) -> usize;

    fn group(&self) -> &LieGroup;

    /// Number of Casimir components (the dimension of `V`).
    fn casimir_dim(&self) -> usize;

    fn poisson_tensor(&self, z: &Point) -> DMatrix<f64>;

    fn hamiltonian(&self, z: &Point) -> f64;

    /// Momentum map in dual coordinates.
    fn momentum(&self, z: &Point) -> DVector<f64>;

    fn casimirs(&self, z: &Point) -> DVector<f64>;

    fn act(&self, g: &GroupElement, z: &Point) -> Point;

    /// Inner product on the Casimir value space `V`.
    fn casimir_inner_product(&self) -> DMatrix<f64> {
        DMatrix::identity(self.casimir_dim(), self.casimir_dim())
    }

    /// Analytic infinitesimal generator `ζ_M(z)`, when the action is simple
    /// enough to provide one.
    fn generator(&self, _zeta: &AlgebraElement, _z: &Point) -> Option<Point> {
        None
    }

    fn hamiltonian_gradient(&self, _z: &Point) -> Option<DVector<f64>> {
        None
    }

    fn hamiltonian_hessian(&self, _z: &Point) -> Option<DMatrix<f64>> {
        None
    }

    /// `DJ(z)`, of shape `dim_g × n`.
    fn momentum_jacobian(&self, _z: &Point) -> Option<DMatrix<f64>> {
        None
    }

    /// Hessians of the momentum components, one `n × n` matrix each.
    fn momentum_hessians(&self, _z: &Point) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    /// `DC(z)`, of shape `dim_V × n`.
    fn casimir_jacobian(&self, _z: &Point) -> Option<DMatrix<f64>> {
        None
    }

    fn casimir_hessians(&self, _z: &Point) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    /// Draw a point for randomized structure checks.
    fn sample_point(&self, rng: &mut dyn RngCore) -> Point {
        DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal))
    }
}

/// How derivatives are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    /// Analytic when the system provides it, finite differences otherwise.
    #[default]
    Auto,
    FiniteDifference,
}

/// Scalar or vector field that [`differentiate`] can act on.
#[derive(Debug, Clone)]
pub enum Field {
    Hamiltonian,
    Momentum,
    Casimirs,
    /// `H - <J, ξ> + <λ, C>`.
    Emc {
        lambda: DVector<f64>,
        xi: AlgebraElement,
    },
}

#[derive(Debug, Clone)]
pub enum Derivative {
    Gradient(DVector<f64>),
    Jacobian(DMatrix<f64>),
    Hessian(DMatrix<f64>),
    /// Component Hessians of a vector-valued field.
    Hessians(Vec<DMatrix<f64>>),
}

fn step(h0: f64, x: f64) -> f64 {
    h0 * x.abs().max(1.0)
}

pub fn fd_gradient(f: impl Fn(&Point) -> f64, z: &Point) -> DVector<f64> {
    let mut g = DVector::zeros(z.len());
    let mut zp = z.clone();
    for i in 0..z.len() {
        let h = step(FD_STEP_FIRST, z[i]);
        zp[i] = z[i] + h;
        let fp = f(&zp);
        zp[i] = z[i] - h;
        let fm = f(&zp);
        zp[i] = z[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Jacobian of a vector field (`m × n`).
pub fn fd_jacobian(f: impl Fn(&Point) -> DVector<f64>, z: &Point, h0: f64) -> DMatrix<f64> {
    let f0 = f(z);
    let mut jac = DMatrix::zeros(f0.len(), z.len());
    let mut zp = z.clone();
    for i in 0..z.len() {
        let h = step(h0, z[i]);
        zp[i] = z[i] + h;
        let fp = f(&zp);
        zp[i] = z[i] - h;
        let fm = f(&zp);
        zp[i] = z[i];
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Central-difference Hessian, symmetrized.
pub fn fd_hessian(f: impl Fn(&Point) -> f64, z: &Point) -> DMatrix<f64> {
    let n = z.len();
    let mut hess = DMatrix::zeros(n, n);
    let f0 = f(z);
    let mut zp = z.clone();
    for i in 0..n {
        let hi = step(FD_STEP_SECOND, z[i]);
        zp[i] = z[i] + hi;
        let fp = f(&zp);
        zp[i] = z[i] - hi;
        let fm = f(&zp);
        zp[i] = z[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in (i + 1)..n {
            let hj = step(FD_STEP_SECOND, z[j]);
            let mut eval = |si: f64, sj: f64| {
                zp[i] = z[i] + si * hi;
                zp[j] = z[j] + sj * hj;
                let v = f(&zp);
                zp[i] = z[i];
                zp[j] = z[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    linalg::symmetrize(&hess)
}

fn check_point(sys: &dyn PhaseSpaceSystem, z: &Point) -> Result<()> {
    ensure_len(sys.dim(), z.len())?;
    ensure_finite("point", z.as_slice())
}

pub fn hamiltonian_gradient(sys: &dyn PhaseSpaceSystem, z: &Point, mode: DerivativeMode) -> Result<DVector<f64>> {
    check_point(sys, z)?;
    let g = match (mode, sys.hamiltonian_gradient(z)) {
        (DerivativeMode::Auto, Some(g)) => g,
        _ => fd_gradient(|p| sys.hamiltonian(p), z),
    };
    ensure_finite("hamiltonian gradient", g.as_slice())?;
    Ok(g)
}

pub fn hamiltonian_hessian(sys: &dyn PhaseSpaceSystem, z: &Point, mode: DerivativeMode) -> Result<DMatrix<f64>> {
    check_point(sys, z)?;
    let h = match (mode, sys.hamiltonian_hessian(z)) {
        (DerivativeMode::Auto, Some(h)) => linalg::symmetrize(&h),
        _ => fd_hessian(|p| sys.hamiltonian(p), z),
    };
    ensure_finite("hamiltonian hessian", h.as_slice())?;
    Ok(h)
}

pub fn momentum_jacobian(sys: &dyn PhaseSpaceSystem, z: &Point, mode: DerivativeMode) -> Result<DMatrix<f64>> {
    check_point(sys, z)?;
    let j = match (mode, sys.momentum_jacobian(z)) {
        (DerivativeMode::Auto, Some(j)) => j,
        _ => fd_jacobian(|p| sys.momentum(p), z, FD_STEP_FIRST),
    };
    ensure_finite("momentum jacobian", j.as_slice())?;
    Ok(j)
}

pub fn casimir_jacobian(sys: &dyn PhaseSpaceSystem, z: &Point, mode: DerivativeMode) -> Result<DMatrix<f64>> {
    check_point(sys, z)?;
    let j = match (mode, sys.casimir_jacobian(z)) {
        (DerivativeMode::Auto, Some(j)) => j,
        _ => fd_jacobian(|p| sys.casimirs(p), z, FD_STEP_FIRST),
    };
    ensure_finite("casimir jacobian", j.as_slice())?;
    Ok(j)
}

fn component_hessians(
    analytic: Option<Vec<DMatrix<f64>>>,
    mode: DerivativeMode,
    count: usize,
    f: impl Fn(&Point) -> DVector<f64>,
    z: &Point,
) -> Vec<DMatrix<f64>> {
    match (mode, analytic) {
        (DerivativeMode::Auto, Some(h)) => h.iter().map(linalg::symmetrize).collect(),
        _ => (0..count).map(|k| fd_hessian(|p| f(p)[k], z)).collect(),
    }
}

pub fn momentum_hessians(sys: &dyn PhaseSpaceSystem, z: &Point, mode: DerivativeMode) -> Result<Vec<DMatrix<f64>>> {
    check_point(sys, z)?;
    Ok(component_hessians(
        sys.momentum_hessians(z),
        mode,
        sys.group().dim(),
        |p| sys.momentum(p),
        z,
    ))
}

pub fn casimir_hessians(sys: &dyn PhaseSpaceSystem, z: &Point, mode: DerivativeMode) -> Result<Vec<DMatrix<f64>>> {
    check_point(sys, z)?;
    Ok(component_hessians(
        sys.casimir_hessians(z),
        mode,
        sys.casimir_dim(),
        |p| sys.casimirs(p),
        z,
    ))
}

/// First (`order = 1`) or second (`order = 2`) derivative of a field.
pub fn differentiate(
    sys: &dyn PhaseSpaceSystem,
    field: &Field,
    z: &Point,
    order: u8,
    mode: DerivativeMode,
) -> Result<Derivative> {
    match (field, order) {
        (Field::Hamiltonian, 1) => hamiltonian_gradient(sys, z, mode).map(Derivative::Gradient),
        (Field::Hamiltonian, 2) => hamiltonian_hessian(sys, z, mode).map(Derivative::Hessian),
        (Field::Momentum, 1) => momentum_jacobian(sys, z, mode).map(Derivative::Jacobian),
        (Field::Momentum, 2) => momentum_hessians(sys, z, mode).map(Derivative::Hessians),
        (Field::Casimirs, 1) => casimir_jacobian(sys, z, mode).map(Derivative::Jacobian),
        (Field::Casimirs, 2) => casimir_hessians(sys, z, mode).map(Derivative::Hessians),
        (Field::Emc { lambda, xi }, 1) => emc_gradient(sys, z, lambda, xi, mode).map(Derivative::Gradient),
        (Field::Emc { lambda, xi }, 2) => emc_hessian(sys, z, lambda, xi, mode).map(Derivative::Hessian),
        (_, other) => Err(EmcError::InvalidArgument(format!(
            "derivative order {other} is not 1 or 2"
        ))),
    }
}

fn check_multipliers(sys: &dyn PhaseSpaceSystem, lambda: &DVector<f64>, xi: &AlgebraElement) -> Result<()> {
    ensure_len(sys.casimir_dim(), lambda.len())?;
    ensure_len(sys.group().dim(), xi.dim())
}

/// Gradient of `H - <J, ξ> + <λ, C>`.
pub fn emc_gradient(
    sys: &dyn PhaseSpaceSystem,
    z: &Point,
    lambda: &DVector<f64>,
    xi: &AlgebraElement,
    mode: DerivativeMode,
) -> Result<DVector<f64>> {
    check_multipliers(sys, lambda, xi)?;
    let dh = hamiltonian_gradient(sys, z, mode)?;
    let dj = momentum_jacobian(sys, z, mode)?;
    let dc = casimir_jacobian(sys, z, mode)?;
    Ok(dh - dj.transpose() * xi.coeffs() + dc.transpose() * lambda)
}

/// Hessian of `H - <J, ξ> + <λ, C>`.
pub fn emc_hessian(
    sys: &dyn PhaseSpaceSystem,
    z: &Point,
    lambda: &DVector<f64>,
    xi: &AlgebraElement,
    mode: DerivativeMode,
) -> Result<DMatrix<f64>> {
    check_multipliers(sys, lambda, xi)?;
    let mut h = hamiltonian_hessian(sys, z, mode)?;
    for (k, hj) in momentum_hessians(sys, z, mode)?.iter().enumerate() {
        h -= hj * xi.coeffs()[k];
    }
    for (k, hc) in casimir_hessians(sys, z, mode)?.iter().enumerate() {
        h += hc * lambda[k];
    }
    Ok(linalg::symmetrize(&h))
}

/// `X_H(z) = B(z) ∇H(z)`.
pub fn hamiltonian_vector_field(sys: &dyn PhaseSpaceSystem, z: &Point) -> Result<DVector<f64>> {
    let grad = hamiltonian_gradient(sys, z, DerivativeMode::Auto)?;
    let v = sys.poisson_tensor(z) * grad;
    ensure_finite("hamiltonian vector field", v.as_slice())?;
    Ok(v)
}

/// Infinitesimal generator `ζ_M(z) = d/dt|₀ exp(tζ)·z`.
pub fn infinitesimal_generator(sys: &dyn PhaseSpaceSystem, zeta: &AlgebraElement, z: &Point) -> Result<DVector<f64>> {
    ensure_len(sys.group().dim(), zeta.dim())?;
    check_point(sys, z)?;
    if let Some(v) = sys.generator(zeta, z) {
        return Ok(v);
    }
    let group = sys.group();
    if zeta.coeffs().iter().all(|c| *c == 0.0) {
        return Ok(DVector::zeros(sys.dim()));
    }
    let h = 1e-6;
    let fwd = sys.act(&group.exponential(&zeta.scale(h)), z);
    let bwd = sys.act(&group.exponential(&zeta.scale(-h)), z);
    Ok((fwd - bwd) / (2.0 * h))
}

/// Matrix whose column `i` is the generator of basis element `e_i` at `z`.
pub fn generator_matrix(sys: &dyn PhaseSpaceSystem, z: &Point) -> Result<DMatrix<f64>> {
    let group = sys.group();
    let cols = (0..group.dim())
        .map(|i| infinitesimal_generator(sys, &group.basis_element(i), z))
        .collect::<Result<Vec<_>>>()?;
    Ok(linalg::columns(sys.dim(), &cols))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StructureCheckOptions {
    pub n_samples: usize,
    pub seed: u64,
    /// Pass/fail threshold applied to every check.
    pub tol: f64,
    /// Turn a failed check into an error instead of a report.
    pub strict: bool,
}

impl Default for StructureCheckOptions {
    fn default() -> Self {
        Self {
            n_samples: 20,
            seed: 0,
            tol: 1e-6,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct StructureReport {
    pub system: String,
    pub samples: usize,
    pub poisson_antisymmetry: f64,
    pub poisson_jacobi: f64,
    pub action_identity: f64,
    pub hamiltonian_invariance: f64,
    pub casimir_invariance: f64,
    pub casimir_bracket: f64,
    pub momentum_equivariance: f64,
    pub generator_match: f64,
    pub max_violation: f64,
    pub tol: f64,
    pub passed: bool,
}

impl StructureReport {
    fn finish(&mut self, tol: f64) {
        self.max_violation = [
            self.poisson_antisymmetry,
            self.poisson_jacobi,
            self.action_identity,
            self.hamiltonian_invariance,
            self.casimir_invariance,
            self.casimir_bracket,
            self.momentum_equivariance,
            self.generator_match,
        ]
        .into_iter()
        .fold(0.0, f64::max);
        self.tol = tol;
        self.passed = self.max_violation <= tol;
    }

    pub fn failing_checks(&self) -> Vec<&'static str> {
        let tol = self.tol;
        [
            ("poisson_antisymmetry", self.poisson_antisymmetry),
            ("poisson_jacobi", self.poisson_jacobi),
            ("action_identity", self.action_identity),
            ("hamiltonian_invariance", self.hamiltonian_invariance),
            ("casimir_invariance", self.casimir_invariance),
            ("casimir_bracket", self.casimir_bracket),
            ("momentum_equivariance", self.momentum_equivariance),
            ("generator_match", self.generator_match),
        ]
        .into_iter()
        .filter(|(_, v)| *v > tol)
        .map(|(n, _)| n)
        .collect()
    }
}

/// Jacobi identity residual of the Poisson tensor on coordinate triples.
fn poisson_jacobi_residual(sys: &dyn PhaseSpaceSystem, z: &Point) -> f64 {
    let n = sys.dim();
    let b = sys.poisson_tensor(z);
    let mut db = Vec::with_capacity(n);
    let mut zp = z.clone();
    for l in 0..n {
        let h = step(FD_STEP_FIRST, z[l]);
        zp[l] = z[l] + h;
        let bp = sys.poisson_tensor(&zp);
        zp[l] = z[l] - h;
        let bm = sys.poisson_tensor(&zp);
        zp[l] = z[l];
        db.push((bp - bm) / (2.0 * h));
    }
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += b[(i, l)] * db[l][(j, k)] + b[(j, l)] * db[l][(k, i)] + b[(k, l)] * db[l][(i, j)];
                }
                worst = worst.max(s.abs());
            }
        }
    }
    worst
}

/// Randomized consistency checks of a system definition: Poisson tensor,
/// invariance of `H` and `C`, the Casimir property, momentum-map
/// equivariance and `X_{J_ζ} = ζ_M`.
pub fn check_structure(sys: &dyn PhaseSpaceSystem, opts: &StructureCheckOptions) -> Result<StructureReport> {
    if opts.n_samples == 0 {
        return Err(EmcError::InvalidArgument("n_samples must be at least 1".into()));
    }
    let group = sys.group();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = StructureReport {
        system: sys.name().to_string(),
        samples: opts.n_samples,
        ..Default::default()
    };
    let identity = group.identity();
    for _ in 0..opts.n_samples {
        let z = sys.sample_point(&mut rng);
        let b = sys.poisson_tensor(&z);
        report.poisson_antisymmetry = report.poisson_antisymmetry.max(linalg::max_abs(&(&b + b.transpose())));
        report.poisson_jacobi = report.poisson_jacobi.max(poisson_jacobi_residual(sys, &z));
        report.action_identity = report.action_identity.max((sys.act(&identity, &z) - &z).amax());

        let mut elements: Vec<GroupElement> = group.discrete_samples().to_vec();
        let zeta = group.random_algebra(&mut rng, std::f64::consts::PI);
        elements.push(group.exponential(&zeta));

        let h = sys.hamiltonian(&z);
        let j = DualElement(sys.momentum(&z));
        let c = sys.casimirs(&z);
        let mu_iso = group.momentum_isotropy_algebra(&j, 1e-8)?;
        for g in &elements {
            let gz = sys.act(g, &z);
            report.hamiltonian_invariance = report.hamiltonian_invariance.max((sys.hamiltonian(&gz) - h).abs());
            let expected = group.coadjoint_action(g, &j)?;
            report.momentum_equivariance = report
                .momentum_equivariance
                .max((sys.momentum(&gz) - &expected.0).amax());
        }
        // Casimirs need only be invariant under the isotropy group of J(z).
        if !mu_iso.is_empty() {
            let coords: Vec<f64> = (0..mu_iso.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut eta = group.zero();
            for (c_k, b_k) in coords.iter().zip(&mu_iso) {
                eta.0 += &b_k.0 * *c_k;
            }
            let gz = sys.act(&group.exponential(&eta), &z);
            if !c.is_empty() {
                report.casimir_invariance = report.casimir_invariance.max((sys.casimirs(&gz) - &c).amax());
            }
        }
        if sys.casimir_dim() > 0 {
            let dc = casimir_jacobian(sys, &z, DerivativeMode::Auto)?;
            // {C_k, z_i} = (B ∇C_k)_i up to sign.
            let bracket = &b * dc.transpose();
            report.casimir_bracket = report.casimir_bracket.max(linalg::max_abs(&bracket));
        }
        if group.dim() > 0 {
            let dj = momentum_jacobian(sys, &z, DerivativeMode::Auto)?;
            let zeta = group.random_algebra(&mut rng, 1.0);
            let x_j = &b * (dj.transpose() * zeta.coeffs());
            let gen = infinitesimal_generator(sys, &zeta, &z)?;
            report.generator_match = report.generator_match.max((x_j - gen).amax());
        }
    }
    report.finish(opts.tol);
    if opts.strict && !report.passed {
        return Err(EmcError::StructureFailure(format!(
            "{}: {} (max violation {:e})",
            report.system,
            report.failing_checks().join(", "),
            report.max_violation
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::LieGroup;
    use crate::systems::{HarmonicS1, LagrangeTop, RigidBody};
    use approx::assert_relative_eq;

    fn p(v: &[f64]) -> Point {
        DVector::from_column_slice(v)
    }

    /// Counterclockwise rotations of the plane, with zero dynamics.
    struct PlaneRotation {
        group: LieGroup,
    }

    impl PhaseSpaceSystem for PlaneRotation {
        fn name(&self) -> &str {
            "plane_rotation"
        }
        fn dim(&self) -> usize {
            2
        }
        fn group(&self) -> &LieGroup {
            &self.group
        }
        fn casimir_dim(&self) -> usize {
            0
        }
        fn poisson_tensor(&self, _z: &Point) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
        }
        fn hamiltonian(&self, _z: &Point) -> f64 {
            0.0
        }
        fn momentum(&self, z: &Point) -> DVector<f64> {
            DVector::from_element(1, -0.5 * z.norm_squared())
        }
        fn casimirs(&self, _z: &Point) -> DVector<f64> {
            DVector::zeros(0)
        }
        fn act(&self, g: &GroupElement, z: &Point) -> Point {
            g.matrix() * z
        }
    }

    /// Heavy top with the momentum map's sign reversed.
    struct FlippedTop(LagrangeTop);

    impl PhaseSpaceSystem for FlippedTop {
        fn name(&self) -> &str {
            "flipped_top"
        }
        fn dim(&self) -> usize {
            6
        }
        fn group(&self) -> &LieGroup {
            self.0.group()
        }
        fn casimir_dim(&self) -> usize {
            2
        }
        fn poisson_tensor(&self, z: &Point) -> DMatrix<f64> {
            self.0.poisson_tensor(z)
        }
        fn hamiltonian(&self, z: &Point) -> f64 {
            self.0.hamiltonian(z)
        }
        fn momentum(&self, z: &Point) -> DVector<f64> {
            -self.0.momentum(z)
        }
        fn casimirs(&self, z: &Point) -> DVector<f64> {
            self.0.casimirs(z)
        }
        fn act(&self, g: &GroupElement, z: &Point) -> Point {
            self.0.act(g, z)
        }
    }

    #[test]
    fn oscillator_vector_field() {
        let sys = HarmonicS1::new();
        assert_relative_eq!(
            hamiltonian_vector_field(&sys, &p(&[1.0, 0.0])).unwrap(),
            p(&[0.0, -1.0])
        );
        assert_relative_eq!(hamiltonian_vector_field(&sys, &p(&[0.0, 0.0])).unwrap(), p(&[0.0, 0.0]));
    }

    #[test]
    fn rigid_body_axis_is_fixed() {
        let sys = RigidBody::new([1.0, 2.0, 3.0]);
        let z = p(&[0.0, 0.0, 1.0]);
        assert_relative_eq!(hamiltonian_vector_field(&sys, &z).unwrap(), p(&[0.0, 0.0, 0.0]));
        let g = hamiltonian_gradient(&sys, &z, DerivativeMode::FiniteDifference).unwrap();
        assert_relative_eq!(g, p(&[0.0, 0.0, 1.0 / 3.0]), epsilon = 1e-9);
    }

    #[test]
    fn rotation_generator() {
        let sys = PlaneRotation {
            group: LieGroup::torus(1),
        };
        let one = AlgebraElement::from_slice(&[1.0]);
        let v = infinitesimal_generator(&sys, &one, &p(&[1.0, 0.0])).unwrap();
        assert_relative_eq!(v, p(&[0.0, 1.0]), epsilon = 1e-8);
        let zero = AlgebraElement::from_slice(&[0.0]);
        assert_eq!(
            infinitesimal_generator(&sys, &zero, &p(&[1.0, 0.0])).unwrap().norm(),
            0.0
        );
    }

    #[test]
    fn sleeping_top_generator_vanishes() {
        let top = LagrangeTop::new(1.0, 1.0, 1.0);
        let z = p(&[0.0, 0.0, 2.0, 0.0, 0.0, 1.0]);
        let v = infinitesimal_generator(&top, &AlgebraElement::from_slice(&[1.0]), &z).unwrap();
        assert!(v.norm() < 1e-12);
    }

    #[test]
    fn quadratic_hessian_is_exact() {
        let sys = RigidBody::new([1.0, 2.0, 4.0]);
        let exact = DMatrix::from_diagonal(&p(&[1.0, 0.5, 0.25]));
        let h = hamiltonian_hessian(&sys, &p(&[0.01, -0.02, 0.005]), DerivativeMode::FiniteDifference).unwrap();
        assert_relative_eq!(h, exact, epsilon = 1e-9);
        // Away from the origin the error is set by roundoff in H, about eps·|H|/h².
        let h = hamiltonian_hessian(&sys, &p(&[0.3, -1.2, 0.5]), DerivativeMode::FiniteDifference).unwrap();
        assert_relative_eq!(h, exact, epsilon = 1e-7);
    }

    #[test]
    fn doubling_hamiltonian_doubles_field() {
        let sys = RigidBody::new([1.0, 2.0, 3.0]);
        let z = p(&[0.4, -0.2, 0.9]);
        let b = sys.poisson_tensor(&z);
        let g = hamiltonian_gradient(&sys, &z, DerivativeMode::Auto).unwrap();
        assert_relative_eq!(
            &b * (&g * 2.0),
            hamiltonian_vector_field(&sys, &z).unwrap() * 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn oscillator_structure_passes() {
        let report = check_structure(&HarmonicS1::new(), &StructureCheckOptions::default()).unwrap();
        assert!(report.max_violation <= 1e-9, "{report:?}");
    }

    #[test]
    fn flipped_momentum_fails_generator_match() {
        let sys = FlippedTop(LagrangeTop::new(1.0, 1.0, 1.0));
        let report = check_structure(&sys, &StructureCheckOptions::default()).unwrap();
        assert!(!report.passed);
        assert!(report.failing_checks().contains(&"generator_match"));
        assert!(report.generator_match > 0.1, "{report:?}");
        let strict = StructureCheckOptions {
            strict: true,
            ..Default::default()
        };
        assert!(matches!(
            check_structure(&sys, &strict),
            Err(EmcError::StructureFailure(_))
        ));
    }

    #[test]
    fn differentiate_dispatches() {
        let sys = RigidBody::new([1.0, 2.0, 3.0]);
        let z = p(&[0.1, 0.2, 0.3]);
        let d = differentiate(&sys, &Field::Hamiltonian, &z, 1, DerivativeMode::Auto).unwrap();
        assert!(matches!(d, Derivative::Gradient(g) if (g[2] - 0.1).abs() < 1e-15));
        assert!(differentiate(&sys, &Field::Momentum, &z, 3, DerivativeMode::Auto).is_err());
    }
}
