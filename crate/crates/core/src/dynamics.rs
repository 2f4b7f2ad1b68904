//! Time integration of `ż = B(z) ∇H(z)`.

use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, EmcError, Result};
use crate::phase::{self, PhaseSpaceSystem, Point};

/// States with a larger norm are treated as a blow-up.
pub const BLOWUP_NORM: f64 = 1e12;

pub trait Integrator: Send + Sync {
    fn name(&self) -> &'static str;

    /// Advance `z` from `t` by `h`.
    fn step(&self, sys: &dyn PhaseSpaceSystem, z: &Point, t: f64, h: f64) -> Result<Point>;
}

/// Classical fourth-order Runge-Kutta.
pub struct Rk4;

impl Integrator for Rk4 {
    fn name(&self) -> &'static str {
        "rk4"
    }

    fn step(&self, sys: &dyn PhaseSpaceSystem, z: &Point, _t: f64, h: f64) -> Result<Point> {
        let f = |y: &Point| phase::hamiltonian_vector_field(sys, y);
        let k1 = f(z)?;
        let k2 = f(&(z + &k1 * (0.5 * h)))?;
        let k3 = f(&(z + &k2 * (0.5 * h)))?;
        let k4 = f(&(z + &k3 * h))?;
        Ok(z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
    }
}

/// Implicit midpoint rule; the stage equation is solved by fixed-point
/// iteration with a Newton fallback.
pub struct ImplicitMidpoint {
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for ImplicitMidpoint {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iterations: 50,
        }
    }
}

impl ImplicitMidpoint {
    fn stage_residual(sys: &dyn PhaseSpaceSystem, z: &Point, y: &Point, h: f64) -> Result<DVector<f64>> {
        let mid = (z + y) * 0.5;
        Ok(y - z - phase::hamiltonian_vector_field(sys, &mid)? * h)
    }
}

impl Integrator for ImplicitMidpoint {
    fn name(&self) -> &'static str {
        "implicit_midpoint"
    }

    fn step(&self, sys: &dyn PhaseSpaceSystem, z: &Point, t: f64, h: f64) -> Result<Point> {
        let tol = self.tol * (1.0 + z.norm());
        let mut y = z + phase::hamiltonian_vector_field(sys, z)? * h;
        for _ in 0..self.max_iterations {
            let next = z + phase::hamiltonian_vector_field(sys, &((z + &y) * 0.5))? * h;
            let change = (&next - &y).norm();
            y = next;
            if change <= tol {
                return Ok(y);
            }
        }
        let n = z.len();
        for _ in 0..self.max_iterations {
            let r = Self::stage_residual(sys, z, &y, h)?;
            if r.norm() <= tol {
                return Ok(y);
            }
            let mut jac = DMatrix::zeros(n, n);
            let mut yp = y.clone();
            for i in 0..n {
                let d = 1e-7 * y[i].abs().max(1.0);
                yp[i] = y[i] + d;
                let rp = Self::stage_residual(sys, z, &yp, h)?;
                yp[i] = y[i] - d;
                let rm = Self::stage_residual(sys, z, &yp, h)?;
                yp[i] = y[i];
                jac.set_column(i, &((rp - rm) / (2.0 * d)));
            }
            let Some(step) = jac.lu().solve(&(-r)) else {
                break;
            };
            y += step;
        }
        Err(EmcError::StepFailure { time: t })
    }
}

pub struct IntegratorRegistry {
    entries: Vec<Box<dyn Integrator>>,
}

impl IntegratorRegistry {
    pub fn builtin() -> Self {
        Self {
            entries: vec![Box::new(Rk4), Box::new(ImplicitMidpoint::default())],
        }
    }

    pub fn register(&mut self, integrator: Box<dyn Integrator>) {
        self.entries.retain(|e| e.name() != integrator.name());
        self.entries.push(integrator);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Integrator> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| EmcError::UnknownName {
                kind: "integrator",
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }
}

pub const DEFAULT_INTEGRATOR: &str = "rk4";

fn check_inputs(sys: &dyn PhaseSpaceSystem, z0: &Point, t_final: f64, h: f64) -> Result<()> {
    ensure_len(sys.dim(), z0.len())?;
    ensure_finite("initial state", z0.as_slice())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(EmcError::InvalidParameter {
            name: "step".into(),
            reason: format!("must be positive and finite, got {h}"),
        });
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(EmcError::InvalidParameter {
            name: "t_final".into(),
            reason: format!("must be non-negative and finite, got {t_final}"),
        });
    }
    Ok(())
}

/// Integrate to `t_final` with `ceil(t_final / h)` steps (the last one
/// shortened to land exactly), calling `observer(step, t, z)` at `t = 0` and
/// after every step. The observer may stop the run early. Returns the final
/// time and state reached.
pub fn integrate_with(
    sys: &dyn PhaseSpaceSystem,
    integrator: &dyn Integrator,
    z0: &Point,
    t_final: f64,
    h: f64,
    mut observer: impl FnMut(usize, f64, &Point) -> ControlFlow<()>,
) -> Result<(f64, Point)> {
    check_inputs(sys, z0, t_final, h)?;
    let n_steps = (t_final / h).ceil() as usize;
    let mut z = z0.clone();
    let mut t = 0.0;
    if observer(0, t, &z).is_break() {
        return Ok((t, z));
    }
    for k in 0..n_steps {
        let dt = if k + 1 == n_steps { t_final - h * k as f64 } else { h };
        z = integrator.step(sys, &z, t, dt)?;
        t = if k + 1 == n_steps { t_final } else { h * (k + 1) as f64 };
        if z.iter().any(|v| !v.is_finite()) || z.norm() > BLOWUP_NORM {
            return Err(EmcError::BlowUp { time: t });
        }
        if observer(k + 1, t, &z).is_break() {
            break;
        }
    }
    Ok((t, z))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Integrate and record every `stride`-th state (plus the final one).
pub fn integrate(
    sys: &dyn PhaseSpaceSystem,
    integrator: &dyn Integrator,
    z0: &Point,
    t_final: f64,
    h: f64,
    stride: usize,
) -> Result<Trajectory> {
    let stride = stride.max(1);
    let n_steps = if h > 0.0 { (t_final / h).ceil() as usize } else { 0 };
    let mut traj = Trajectory::default();
    integrate_with(sys, integrator, z0, t_final, h, |k, t, z| {
        if k % stride == 0 || k == n_steps {
            traj.times.push(t);
            traj.states.push(z.iter().copied().collect());
        }
        ControlFlow::Continue(())
    })?;
    Ok(traj)
}

/// Largest deviation of the conserved quantities from their initial values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub hamiltonian: f64,
    pub momentum: f64,
    pub casimirs: f64,
}

impl DriftReport {
    pub fn max(&self) -> f64 {
        self.hamiltonian.max(self.momentum).max(self.casimirs)
    }
}

/// Streaming drift accumulator.
pub struct DriftTracker<'a> {
    sys: &'a dyn PhaseSpaceSystem,
    h0: f64,
    j0: DVector<f64>,
    c0: DVector<f64>,
    pub report: DriftReport,
}

impl<'a> DriftTracker<'a> {
    pub fn new(sys: &'a dyn PhaseSpaceSystem, z0: &Point) -> Self {
        Self {
            sys,
            h0: sys.hamiltonian(z0),
            j0: sys.momentum(z0),
            c0: sys.casimirs(z0),
            report: DriftReport::default(),
        }
    }

    pub fn observe(&mut self, z: &Point) {
        let r = &mut self.report;
        r.hamiltonian = r.hamiltonian.max((self.sys.hamiltonian(z) - self.h0).abs());
        r.momentum = r.momentum.max((self.sys.momentum(z) - &self.j0).norm());
        r.casimirs = r.casimirs.max((self.sys.casimirs(z) - &self.c0).norm());
    }
}

pub fn conservation_drift(sys: &dyn PhaseSpaceSystem, traj: &Trajectory) -> Result<DriftReport> {
    let Some(first) = traj.states.first() else {
        return Ok(DriftReport::default());
    };
    let mut tracker = DriftTracker::new(sys, &DVector::from_column_slice(first));
    for s in &traj.states {
        ensure_len(sys.dim(), s.len())?;
        tracker.observe(&DVector::from_column_slice(s));
    }
    Ok(tracker.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{HarmonicS1, RigidBody};

    #[test]
    fn rk4_oscillator_matches_rotation() {
        let sys = HarmonicS1::new();
        let z0 = DVector::from_vec(vec![1.0, 0.0]);
        let (t, z) = integrate_with(&sys, &Rk4, &z0, 1.0, 1e-3, |_, _, _| ControlFlow::Continue(())).unwrap();
        assert_eq!(t, 1.0);
        // q̇ = p, ṗ = −q
        assert!((z[0] - 1f64.cos()).abs() < 1e-10);
        assert!((z[1] + 1f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn last_step_lands_on_final_time() {
        let sys = HarmonicS1::new();
        let z0 = DVector::from_vec(vec![1.0, 0.0]);
        let traj = integrate(&sys, &Rk4, &z0, 0.25, 0.1, 1).unwrap();
        assert_eq!(traj.times.len(), 4);
        assert_eq!(*traj.times.last().unwrap(), 0.25);
    }

    #[test]
    fn midpoint_conserves_quadratic_invariants() {
        let sys = RigidBody::new([1.0, 2.0, 3.0]);
        let z0 = DVector::from_vec(vec![0.3, 0.9, 0.2]);
        let traj = integrate(&sys, &ImplicitMidpoint::default(), &z0, 5.0, 0.05, 1).unwrap();
        let drift = conservation_drift(&sys, &traj).unwrap();
        assert!(drift.max() < 1e-10, "{drift:?}");
    }

    #[test]
    fn rejects_bad_step() {
        let sys = HarmonicS1::new();
        let z0 = DVector::from_vec(vec![1.0, 0.0]);
        assert!(integrate(&sys, &Rk4, &z0, 1.0, 0.0, 1).is_err());
        assert!(integrate(&sys, &Rk4, &z0, f64::NAN, 0.1, 1).is_err());
    }

    #[test]
    fn registry_lookup() {
        let reg = IntegratorRegistry::builtin();
        assert_eq!(reg.names(), vec!["rk4", "implicit_midpoint"]);
        let err = reg.get("euler").err().unwrap().to_string();
        assert!(err.contains("rk4"));
    }
}
