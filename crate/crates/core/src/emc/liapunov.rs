//! The Liapunov function `f = ±f₁ + σ f₂` built from a certificate.
//!
//! `f₁(z) = H(z) − <J(z), ξ(z)> + <λ, C(z)>` uses the Patrick velocity
//! field `ξ(z) = Ad_{g*} ξ`, where `g*·z_e` is the point of the `G_μ`-orbit
//! nearest to `z`. `f₂(z) = ‖J(z) − μ‖² + ‖C(z) − C(z_e)‖²`. Both are
//! shifted so that `f(z_e) = 0`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{EmcCertificate, SignBranch};
use crate::error::{ensure_len, EmcError, Result};
use crate::lie::{AlgebraElement, DualElement, GroupElement};
use crate::orbit::{OrbitProjection, OrbitProjector};
use crate::phase::{PhaseSpaceSystem, Point};
use crate::releq::RelativeEquilibrium;

#[derive(Debug, Clone)]
pub struct PatrickVelocity {
    pub xi: AlgebraElement,
    pub projection: OrbitProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiapunovValue {
    pub f: f64,
    pub f1: f64,
    pub f2: f64,
    pub orbit_distance: f64,
}

pub struct LiapunovFunction<'a> {
    sys: &'a dyn PhaseSpaceSystem,
    z_e: Point,
    mu: DualElement,
    xi: AlgebraElement,
    lambda: DVector<f64>,
    branch: SignBranch,
    sigma: f64,
    gmu: Vec<AlgebraElement>,
    discrete: Vec<GroupElement>,
    tube_radius: f64,
    c_e: DVector<f64>,
    f1_ref: f64,
}

impl<'a> LiapunovFunction<'a> {
    /// Build from explicit data. `xi` must be `G_{z_e}`-invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sys: &'a dyn PhaseSpaceSystem,
        re: &RelativeEquilibrium,
        xi: AlgebraElement,
        lambda: DVector<f64>,
        branch: SignBranch,
        sigma: f64,
        tube_radius: f64,
        tol_null: f64,
    ) -> Result<Self> {
        let group = sys.group();
        ensure_len(sys.dim(), re.z_e.len())?;
        ensure_len(group.dim(), xi.dim())?;
        ensure_len(sys.casimir_dim(), lambda.len())?;
        let gmu = group.momentum_isotropy_algebra(&re.mu, tol_null)?;
        let mu_tol = 1e-9 * (1.0 + re.mu.0.norm());
        let mut discrete = Vec::new();
        for g in group.discrete_samples() {
            if (group.coadjoint_action(g, &re.mu)?.0 - &re.mu.0).norm() <= mu_tol {
                discrete.push(g.clone());
            }
        }
        let c_e = sys.casimirs(&re.z_e);
        let f1_ref = sys.hamiltonian(&re.z_e) - re.mu.pair(&xi) + lambda.dot(&c_e);
        Ok(Self {
            sys,
            z_e: re.z_e.clone(),
            mu: re.mu.clone(),
            xi,
            lambda,
            branch,
            sigma,
            gmu,
            discrete,
            tube_radius,
            c_e,
            f1_ref,
        })
    }

    /// Build from a certificate; fails unless it carries a sign branch and `σ`.
    pub fn from_certificate(
        sys: &'a dyn PhaseSpaceSystem,
        re: &RelativeEquilibrium,
        cert: &EmcCertificate,
    ) -> Result<Self> {
        let (Some(branch), Some(sigma)) = (cert.sign_branch, cert.sigma) else {
            return Err(EmcError::InvalidArgument(format!(
                "certificate with verdict {} carries no Liapunov function",
                cert.verdict
            )));
        };
        Self::new(
            sys,
            re,
            AlgebraElement::from_slice(&cert.xi_used),
            DVector::from_column_slice(&cert.lambda),
            branch,
            sigma,
            cert.tube_radius,
            cert.tolerances.null,
        )
    }

    pub fn tube_radius(&self) -> f64 {
        self.tube_radius
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn xi(&self) -> &AlgebraElement {
        &self.xi
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    pub fn branch(&self) -> SignBranch {
        self.branch
    }

    /// Nearest point of `G_μ·z_e` to `z`, without the neighbourhood check.
    pub fn project(&self, z: &Point, warm_start: Option<&DVector<f64>>) -> OrbitProjection {
        let projector = OrbitProjector::new(self.sys, &self.z_e, &self.gmu).with_discrete(self.discrete.clone());
        let mut seeds = vec![DVector::zeros(self.gmu.len())];
        if let Some(w) = warm_start {
            seeds.push(w.clone());
        }
        projector.project(z, &seeds)
    }

    /// `Ad_{g*} ξ` for the nearest orbit point `g*·z_e`.
    pub fn patrick_velocity(&self, z: &Point, warm_start: Option<&DVector<f64>>) -> Result<PatrickVelocity> {
        ensure_len(self.sys.dim(), z.len())?;
        let projection = self.project(z, warm_start);
        if projection.distance > self.tube_radius {
            return Err(EmcError::OutOfNeighborhood {
                distance: projection.distance,
                radius: self.tube_radius,
            });
        }
        if !projection.converged {
            return Err(EmcError::OrbitProjection {
                gradient: projection.gradient_norm,
                distance: projection.distance,
            });
        }
        let xi = self.sys.group().adjoint(&projection.element, &self.xi)?;
        Ok(PatrickVelocity { xi, projection })
    }

    /// `f₂(z)`; defined everywhere.
    pub fn f2(&self, z: &Point) -> f64 {
        let group = self.sys.group();
        let dj = DualElement(self.sys.momentum(z) - &self.mu.0);
        let dc = self.sys.casimirs(z) - &self.c_e;
        let v = self.sys.casimir_inner_product();
        group.dual_norm(&dj).powi(2) + dc.dot(&(v * &dc))
    }

    pub fn eval(&self, z: &Point, warm_start: Option<&DVector<f64>>) -> Result<LiapunovValue> {
        let pv = self.patrick_velocity(z, warm_start)?;
        let sys = self.sys;
        let f1 =
            sys.hamiltonian(z) - sys.momentum(z).dot(pv.xi.coeffs()) + self.lambda.dot(&sys.casimirs(z)) - self.f1_ref;
        let f2 = self.f2(z);
        let f = self.branch.factor() * f1 + self.sigma * f2;
        if !f.is_finite() {
            return Err(EmcError::NonFinite {
                what: "liapunov value",
                index: 0,
            });
        }
        Ok(LiapunovValue {
            f,
            f1,
            f2,
            orbit_distance: pv.projection.distance,
        })
    }
}

/// Patrick velocity `ξ(z)` for the certificate's generator.
pub fn patrick_velocity(
    sys: &dyn PhaseSpaceSystem,
    re: &RelativeEquilibrium,
    cert: &EmcCertificate,
    z: &Point,
) -> Result<PatrickVelocity> {
    let lf = LiapunovFunction::new(
        sys,
        re,
        AlgebraElement::from_slice(&cert.xi_used),
        DVector::from_column_slice(&cert.lambda),
        cert.sign_branch.unwrap_or(SignBranch::Positive),
        cert.sigma.unwrap_or(0.0),
        cert.tube_radius,
        cert.tolerances.null,
    )?;
    lf.patrick_velocity(z, None)
}

/// Evaluate the certified Liapunov function at `z`.
pub fn liapunov_eval(
    sys: &dyn PhaseSpaceSystem,
    re: &RelativeEquilibrium,
    cert: &EmcCertificate,
    z: &Point,
) -> Result<LiapunovValue> {
    LiapunovFunction::from_certificate(sys, re, cert)?.eval(z, None)
}
