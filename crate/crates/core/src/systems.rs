//! Built-in example systems and the name-keyed registry that serves them.
//!
//! Each catalog entry is a [`SystemFactory`]: it publishes a parameter
//! schema, builds a [`PhaseSpaceSystem`] from validated parameters and lists
//! known relative equilibria usable as seeds.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{EmcError, Result};
use crate::lie::{AlgebraElement, GroupElement, LieGroup};
use crate::phase::{PhaseSpaceSystem, Point};

/// Parameter values by name; scalars are one-element vectors.
pub type ParamValues = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub len: usize,
    pub default: Vec<f64>,
    /// Lower bound applied to every component.
    pub min: f64,
    /// Whether `min` itself is admissible.
    pub min_inclusive: bool,
    pub description: String,
}

impl ParamSpec {
    fn new(name: &str, default: &[f64], min: f64, min_inclusive: bool, description: &str) -> Self {
        Self {
            name: name.into(),
            len: default.len(),
            default: default.to_vec(),
            min,
            min_inclusive,
            description: description.into(),
        }
    }

    fn admissible(&self, v: f64) -> bool {
        v.is_finite() && (v > self.min || (self.min_inclusive && v == self.min))
    }

    pub fn range_text(&self) -> String {
        if self.min == f64::NEG_INFINITY {
            return "(-∞, ∞)".into();
        }
        format!("{}{}, ∞)", if self.min_inclusive { "[" } else { "(" }, self.min)
    }
}

/// A documented relative equilibrium of a catalog system.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KnownEquilibrium {
    pub name: String,
    pub z: Vec<f64>,
    pub xi: Vec<f64>,
    pub description: String,
}

pub trait SystemFactory: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn params(&self) -> Vec<ParamSpec>;
    fn build(&self, params: &ParamValues) -> Result<Arc<dyn PhaseSpaceSystem>>;
    fn known_equilibria(&self, params: &ParamValues) -> Vec<KnownEquilibrium>;

    /// Fill defaults and validate against the schema.
    fn resolve(&self, params: &ParamValues) -> Result<ParamValues> {
        let specs = self.params();
        for key in params.keys() {
            if !specs.iter().any(|s| &s.name == key) {
                let known: Vec<_> = specs.iter().map(|s| s.name.as_str()).collect();
                return Err(EmcError::InvalidParameter {
                    name: key.clone(),
                    reason: format!("not a parameter of {}; admissible: [{}]", self.name(), known.join(", ")),
                });
            }
        }
        let mut out = ParamValues::new();
        for spec in specs {
            let value = params.get(&spec.name).cloned().unwrap_or_else(|| spec.default.clone());
            if value.len() != spec.len {
                return Err(EmcError::InvalidParameter {
                    name: spec.name.clone(),
                    reason: format!("expected {} component(s), got {}", spec.len, value.len()),
                });
            }
            if let Some(bad) = value.iter().find(|v| !spec.admissible(**v)) {
                return Err(EmcError::InvalidParameter {
                    name: spec.name.clone(),
                    reason: format!("value {bad} outside admissible range {}", spec.range_text()),
                });
            }
            out.insert(spec.name, value);
        }
        Ok(out)
    }
}

pub struct SystemRegistry {
    entries: Vec<Box<dyn SystemFactory>>,
}

impl SystemRegistry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(RigidBodyFactory));
        r.register(Box::new(LagrangeTopFactory));
        r.register(Box::new(SymmetricOscillatorFactory));
        r.register(Box::new(HarmonicS1Factory));
        r
    }

    /// Register a factory; a later registration under the same name wins.
    pub fn register(&mut self, factory: Box<dyn SystemFactory>) {
        self.entries.retain(|e| e.name() != factory.name());
        self.entries.push(factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &dyn SystemFactory> {
        self.entries.iter().map(|e| e.as_ref())
    }

    pub fn get(&self, name: &str) -> Result<&dyn SystemFactory> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| EmcError::UnknownName {
                kind: "system",
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn instantiate(&self, name: &str, params: &ParamValues) -> Result<Arc<dyn PhaseSpaceSystem>> {
        let factory = self.get(name)?;
        factory.build(&factory.resolve(params)?)
    }
}

/// Build a catalog system by name with the given parameter overrides.
pub fn instantiate_system(name: &str, params: &ParamValues) -> Result<Arc<dyn PhaseSpaceSystem>> {
    SystemRegistry::builtin().instantiate(name, params)
}

fn scalar(params: &ParamValues, key: &str) -> f64 {
    params[key][0]
}

fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    v.cross_matrix()
}

fn v3(z: &Point, offset: usize) -> Vector3<f64> {
    Vector3::new(z[offset], z[offset + 1], z[offset + 2])
}

fn put3(m: &mut DMatrix<f64>, r: usize, c: usize, block: &Matrix3<f64>) {
    m.view_mut((r, c), (3, 3)).copy_from(block);
}

fn plane_rotation(g: &GroupElement) -> (f64, f64) {
    let m = g.matrix();
    (m[(0, 0)], m[(1, 0)])
}

fn sample_unit_scale(rng: &mut dyn RngCore, n: usize) -> Point {
    DVector::from_fn(n, |_, _| rng.random_range(-1.5..1.5))
}

// ---------------------------------------------------------------------------
// Free rigid body, trivial symmetry group, Casimir ‖Π‖².

#[derive(Debug, Clone)]
pub struct RigidBody {
    inertia: [f64; 3],
    group: LieGroup,
}

impl RigidBody {
    pub fn new(inertia: [f64; 3]) -> Self {
        Self {
            inertia,
            group: LieGroup::trivial(),
        }
    }
}

impl PhaseSpaceSystem for RigidBody {
    fn name(&self) -> &str {
        "rigid_body"
    }

    fn dim(&self) -> usize {
        3
    }

    fn group(&self) -> &LieGroup {
        &self.group
    }

    fn casimir_dim(&self) -> usize {
        1
    }

    fn poisson_tensor(&self, z: &Point) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(3, 3);
        put3(&mut b, 0, 0, &-hat(&v3(z, 0)));
        b
    }

    fn hamiltonian(&self, z: &Point) -> f64 {
        0.5 * (0..3).map(|i| z[i] * z[i] / self.inertia[i]).sum::<f64>()
    }

    fn momentum(&self, _z: &Point) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn casimirs(&self, z: &Point) -> DVector<f64> {
        DVector::from_element(1, z.norm_squared())
    }

    fn act(&self, _g: &GroupElement, z: &Point) -> Point {
        z.clone()
    }

    fn generator(&self, _zeta: &AlgebraElement, _z: &Point) -> Option<Point> {
        Some(DVector::zeros(3))
    }

    fn hamiltonian_gradient(&self, z: &Point) -> Option<DVector<f64>> {
        Some(DVector::from_fn(3, |i, _| z[i] / self.inertia[i]))
    }

    fn hamiltonian_hessian(&self, _z: &Point) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&DVector::from_fn(3, |i, _| {
            1.0 / self.inertia[i]
        })))
    }

    fn momentum_jacobian(&self, _z: &Point) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(0, 3))
    }

    fn momentum_hessians(&self, _z: &Point) -> Option<Vec<DMatrix<f64>>> {
        Some(Vec::new())
    }

    fn casimir_jacobian(&self, z: &Point) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_row_slice(1, 3, &[2.0 * z[0], 2.0 * z[1], 2.0 * z[2]]))
    }

    fn casimir_hessians(&self, _z: &Point) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::identity(3, 3) * 2.0])
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Point {
        sample_unit_scale(rng, 3)
    }
}

struct RigidBodyFactory;

impl SystemFactory for RigidBodyFactory {
    fn name(&self) -> &'static str {
        "rigid_body"
    }

    fn description(&self) -> &'static str {
        "free rigid body in body angular momentum Π; trivial group, Casimir ‖Π‖²"
    }

    fn params(&self) -> Vec<ParamSpec> {
        vec![ParamSpec::new(
            "I",
            &[1.0, 2.0, 3.0],
            0.0,
            false,
            "principal moments of inertia",
        )]
    }

    fn build(&self, params: &ParamValues) -> Result<Arc<dyn PhaseSpaceSystem>> {
        let i = &params["I"];
        Ok(Arc::new(RigidBody::new([i[0], i[1], i[2]])))
    }

    fn known_equilibria(&self, _params: &ParamValues) -> Vec<KnownEquilibrium> {
        let axes = ["e1", "e2", "e3"];
        let mut out = Vec::new();
        for (k, axis) in axes.iter().enumerate() {
            for sign in [1.0, -1.0] {
                let mut z = vec![0.0; 3];
                z[k] = sign;
                out.push(KnownEquilibrium {
                    name: format!("{}{axis}", if sign > 0.0 { "+" } else { "-" }),
                    z,
                    xi: Vec::new(),
                    description: format!("steady rotation about principal axis {axis}"),
                });
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Heavy symmetric (Lagrange) top in body coordinates (Π, Γ).

#[derive(Debug, Clone)]
pub struct LagrangeTop {
    mgl: f64,
    i1: f64,
    i3: f64,
    group: LieGroup,
}

impl LagrangeTop {
    pub fn new(mgl: f64, i1: f64, i3: f64) -> Self {
        Self {
            mgl,
            i1,
            i3,
            group: LieGroup::torus(1),
        }
    }

    fn rotation(g: &GroupElement) -> Matrix3<f64> {
        let (c, s) = plane_rotation(g);
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }
}

impl PhaseSpaceSystem for LagrangeTop {
    fn name(&self) -> &str {
        "lagrange_top"
    }

    fn dim(&self) -> usize {
        6
    }

    fn group(&self) -> &LieGroup {
        &self.group
    }

    fn casimir_dim(&self) -> usize {
        2
    }

    fn poisson_tensor(&self, z: &Point) -> DMatrix<f64> {
        let pi_hat = hat(&v3(z, 0));
        let gamma_hat = hat(&v3(z, 3));
        let mut b = DMatrix::zeros(6, 6);
        put3(&mut b, 0, 0, &-pi_hat);
        put3(&mut b, 0, 3, &-gamma_hat);
        put3(&mut b, 3, 0, &-gamma_hat);
        b
    }

    fn hamiltonian(&self, z: &Point) -> f64 {
        0.5 * (z[0] * z[0] + z[1] * z[1]) / self.i1 + 0.5 * z[2] * z[2] / self.i3 + self.mgl * z[5]
    }

    fn momentum(&self, z: &Point) -> DVector<f64> {
        DVector::from_element(1, z[2])
    }

    fn casimirs(&self, z: &Point) -> DVector<f64> {
        let pi = v3(z, 0);
        let gamma = v3(z, 3);
        DVector::from_vec(vec![gamma.norm_squared(), pi.dot(&gamma)])
    }

    fn act(&self, g: &GroupElement, z: &Point) -> Point {
        let r = Self::rotation(g);
        let pi = r * v3(z, 0);
        let gamma = r * v3(z, 3);
        DVector::from_vec(vec![pi.x, pi.y, pi.z, gamma.x, gamma.y, gamma.z])
    }

    fn generator(&self, zeta: &AlgebraElement, z: &Point) -> Option<Point> {
        let w = Vector3::new(0.0, 0.0, zeta.coeffs()[0]);
        let a = w.cross(&v3(z, 0));
        let b = w.cross(&v3(z, 3));
        Some(DVector::from_vec(vec![a.x, a.y, a.z, b.x, b.y, b.z]))
    }

    fn hamiltonian_gradient(&self, z: &Point) -> Option<DVector<f64>> {
        Some(DVector::from_vec(vec![
            z[0] / self.i1,
            z[1] / self.i1,
            z[2] / self.i3,
            0.0,
            0.0,
            self.mgl,
        ]))
    }

    fn hamiltonian_hessian(&self, _z: &Point) -> Option<DMatrix<f64>> {
        let mut h = DMatrix::zeros(6, 6);
        h[(0, 0)] = 1.0 / self.i1;
        h[(1, 1)] = 1.0 / self.i1;
        h[(2, 2)] = 1.0 / self.i3;
        Some(h)
    }

    fn momentum_jacobian(&self, _z: &Point) -> Option<DMatrix<f64>> {
        let mut j = DMatrix::zeros(1, 6);
        j[(0, 2)] = 1.0;
        Some(j)
    }

    fn momentum_hessians(&self, _z: &Point) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(6, 6)])
    }

    fn casimir_jacobian(&self, z: &Point) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_row_slice(
            2,
            6,
            &[
                0.0,
                0.0,
                0.0,
                2.0 * z[3],
                2.0 * z[4],
                2.0 * z[5],
                z[3],
                z[4],
                z[5],
                z[0],
                z[1],
                z[2],
            ],
        ))
    }

    fn casimir_hessians(&self, _z: &Point) -> Option<Vec<DMatrix<f64>>> {
        let mut gamma = DMatrix::zeros(6, 6);
        for i in 3..6 {
            gamma[(i, i)] = 2.0;
        }
        let mut cross = DMatrix::zeros(6, 6);
        for i in 0..3 {
            cross[(i, i + 3)] = 1.0;
            cross[(i + 3, i)] = 1.0;
        }
        Some(vec![gamma, cross])
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Point {
        sample_unit_scale(rng, 6)
    }
}

struct LagrangeTopFactory;

impl SystemFactory for LagrangeTopFactory {
    fn name(&self) -> &'static str {
        "lagrange_top"
    }

    fn description(&self) -> &'static str {
        "heavy symmetric top in body variables (Π, Γ); S¹ symmetry about the body axis, J = Π₃, \
         Casimirs (‖Γ‖², Π·Γ); omega selects the sleeping-top seed"
    }

    fn params(&self) -> Vec<ParamSpec> {
        vec![
            ParamSpec::new(
                "Mgl",
                &[1.0],
                0.0,
                true,
                "weight times distance from pivot to centre of mass",
            ),
            ParamSpec::new("I1", &[1.0], 0.0, false, "equatorial moment of inertia"),
            ParamSpec::new("I3", &[1.0], 0.0, false, "axial moment of inertia"),
            ParamSpec::new(
                "omega",
                &[2.5],
                f64::NEG_INFINITY,
                false,
                "spin rate of the sleeping-top seed",
            ),
        ]
    }

    fn build(&self, params: &ParamValues) -> Result<Arc<dyn PhaseSpaceSystem>> {
        Ok(Arc::new(LagrangeTop::new(
            scalar(params, "Mgl"),
            scalar(params, "I1"),
            scalar(params, "I3"),
        )))
    }

    fn known_equilibria(&self, params: &ParamValues) -> Vec<KnownEquilibrium> {
        let i3 = scalar(params, "I3");
        let omega = scalar(params, "omega");
        vec![KnownEquilibrium {
            name: "sleeping".into(),
            z: vec![0.0, 0.0, i3 * omega, 0.0, 0.0, 1.0],
            xi: vec![0.0],
            description: "upright top spinning at rate omega about its symmetry axis".into(),
        }]
    }
}

// ---------------------------------------------------------------------------
// Isotropic oscillator in R³ with diagonal SO(3) symmetry, J = q × p.

#[derive(Debug, Clone)]
pub struct SymmetricOscillator {
    group: LieGroup,
}

impl SymmetricOscillator {
    pub fn new() -> Self {
        Self { group: LieGroup::so3() }
    }
}

impl Default for SymmetricOscillator {
    fn default() -> Self {
        Self::new()
    }
}

fn canonical_tensor(half: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(2 * half, 2 * half);
    for i in 0..half {
        b[(i, half + i)] = 1.0;
        b[(half + i, i)] = -1.0;
    }
    b
}

impl PhaseSpaceSystem for SymmetricOscillator {
    fn name(&self) -> &str {
        "symmetric_oscillator"
    }

    fn dim(&self) -> usize {
        6
    }

    fn group(&self) -> &LieGroup {
        &self.group
    }

    fn casimir_dim(&self) -> usize {
        0
    }

    fn poisson_tensor(&self, _z: &Point) -> DMatrix<f64> {
        canonical_tensor(3)
    }

    fn hamiltonian(&self, z: &Point) -> f64 {
        0.5 * z.norm_squared()
    }

    fn momentum(&self, z: &Point) -> DVector<f64> {
        let l = v3(z, 0).cross(&v3(z, 3));
        DVector::from_vec(vec![l.x, l.y, l.z])
    }

    fn casimirs(&self, _z: &Point) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn act(&self, g: &GroupElement, z: &Point) -> Point {
        let r = g.matrix();
        let r = Matrix3::from_iterator(r.iter().copied());
        let q = r * v3(z, 0);
        let p = r * v3(z, 3);
        DVector::from_vec(vec![q.x, q.y, q.z, p.x, p.y, p.z])
    }

    fn generator(&self, zeta: &AlgebraElement, z: &Point) -> Option<Point> {
        let w = Vector3::new(zeta.coeffs()[0], zeta.coeffs()[1], zeta.coeffs()[2]);
        let a = w.cross(&v3(z, 0));
        let b = w.cross(&v3(z, 3));
        Some(DVector::from_vec(vec![a.x, a.y, a.z, b.x, b.y, b.z]))
    }

    fn hamiltonian_gradient(&self, z: &Point) -> Option<DVector<f64>> {
        Some(z.clone())
    }

    fn hamiltonian_hessian(&self, _z: &Point) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(6, 6))
    }

    fn momentum_jacobian(&self, z: &Point) -> Option<DMatrix<f64>> {
        // ∂(q × p)/∂q = -hat(p), ∂(q × p)/∂p = hat(q).
        let mut j = DMatrix::zeros(3, 6);
        put3(&mut j, 0, 0, &-hat(&v3(z, 3)));
        put3(&mut j, 0, 3, &hat(&v3(z, 0)));
        Some(j)
    }

    fn momentum_hessians(&self, _z: &Point) -> Option<Vec<DMatrix<f64>>> {
        // J_k = Σ ε_kij q_i p_j.
        let mut out = Vec::with_capacity(3);
        for k in 0..3 {
            let mut h = DMatrix::zeros(6, 6);
            for i in 0..3 {
                for j in 0..3 {
                    let eps = levi_civita(k, i, j);
                    h[(i, 3 + j)] = eps;
                    h[(3 + j, i)] = eps;
                }
            }
            out.push(h);
        }
        Some(out)
    }

    fn casimir_jacobian(&self, _z: &Point) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(0, 6))
    }

    fn casimir_hessians(&self, _z: &Point) -> Option<Vec<DMatrix<f64>>> {
        Some(Vec::new())
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Point {
        sample_unit_scale(rng, 6)
    }
}

fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

struct SymmetricOscillatorFactory;

impl SystemFactory for SymmetricOscillatorFactory {
    fn name(&self) -> &'static str {
        "symmetric_oscillator"
    }

    fn description(&self) -> &'static str {
        "isotropic harmonic oscillator in R³ (q, p); diagonal SO(3) symmetry, J = q × p, no Casimirs"
    }

    fn params(&self) -> Vec<ParamSpec> {
        vec![ParamSpec::new(
            "radius",
            &[1.0],
            0.0,
            false,
            "radius of the circular-orbit seed",
        )]
    }

    fn build(&self, _params: &ParamValues) -> Result<Arc<dyn PhaseSpaceSystem>> {
        Ok(Arc::new(SymmetricOscillator::new()))
    }

    fn known_equilibria(&self, params: &ParamValues) -> Vec<KnownEquilibrium> {
        let r = scalar(params, "radius");
        vec![KnownEquilibrium {
            name: "circular".into(),
            z: vec![r, 0.0, 0.0, 0.0, r, 0.0],
            xi: vec![0.0, 0.0, 1.0],
            description: "circular orbit in the q1-q2 plane, rotating about e3".into(),
        }]
    }
}

// ---------------------------------------------------------------------------
// One-degree-of-freedom harmonic oscillator with its own flow as S¹ action.

#[derive(Debug, Clone)]
pub struct HarmonicS1 {
    group: LieGroup,
}

impl HarmonicS1 {
    pub fn new() -> Self {
        Self {
            group: LieGroup::torus(1),
        }
    }
}

impl Default for HarmonicS1 {
    fn default() -> Self {
        Self::new()
    }
}

impl PhaseSpaceSystem for HarmonicS1 {
    fn name(&self) -> &str {
        "harmonic_s1"
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
        canonical_tensor(1)
    }

    fn hamiltonian(&self, z: &Point) -> f64 {
        0.5 * z.norm_squared()
    }

    fn momentum(&self, z: &Point) -> DVector<f64> {
        DVector::from_element(1, 0.5 * z.norm_squared())
    }

    fn casimirs(&self, _z: &Point) -> DVector<f64> {
        DVector::zeros(0)
    }

    /// `θ·(q, p) = (q cos θ + p sin θ, -q sin θ + p cos θ)`, the time-θ flow.
    fn act(&self, g: &GroupElement, z: &Point) -> Point {
        let (c, s) = plane_rotation(g);
        DVector::from_vec(vec![c * z[0] + s * z[1], -s * z[0] + c * z[1]])
    }

    fn generator(&self, zeta: &AlgebraElement, z: &Point) -> Option<Point> {
        let w = zeta.coeffs()[0];
        Some(DVector::from_vec(vec![w * z[1], -w * z[0]]))
    }

    fn hamiltonian_gradient(&self, z: &Point) -> Option<DVector<f64>> {
        Some(z.clone())
    }

    fn hamiltonian_hessian(&self, _z: &Point) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(2, 2))
    }

    fn momentum_jacobian(&self, z: &Point) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_row_slice(1, 2, &[z[0], z[1]]))
    }

    fn momentum_hessians(&self, _z: &Point) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::identity(2, 2)])
    }

    fn casimir_jacobian(&self, _z: &Point) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(0, 2))
    }

    fn casimir_hessians(&self, _z: &Point) -> Option<Vec<DMatrix<f64>>> {
        Some(Vec::new())
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Point {
        sample_unit_scale(rng, 2)
    }
}

struct HarmonicS1Factory;

impl SystemFactory for HarmonicS1Factory {
    fn name(&self) -> &'static str {
        "harmonic_s1"
    }

    fn description(&self) -> &'static str {
        "harmonic oscillator on R² with H = J = (q² + p²)/2 and its phase rotation as S¹ action"
    }

    fn params(&self) -> Vec<ParamSpec> {
        Vec::new()
    }

    fn build(&self, _params: &ParamValues) -> Result<Arc<dyn PhaseSpaceSystem>> {
        Ok(Arc::new(HarmonicS1::new()))
    }

    fn known_equilibria(&self, _params: &ParamValues) -> Vec<KnownEquilibrium> {
        vec![KnownEquilibrium {
            name: "unit_circle".into(),
            z: vec![1.0, 0.0],
            xi: vec![1.0],
            description: "any point is a relative equilibrium with ξ = 1".into(),
        }]
    }
}
