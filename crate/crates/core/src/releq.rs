//! Relative equilibria: points `z_e` with `X_H(z_e) = ξ_M(z_e)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, EmcError, Result};
use crate::lie::{AlgebraElement, DualElement, DEFAULT_TOL_NULL};
use crate::phase::{self, PhaseSpaceSystem, Point};

pub const DEFAULT_TOL_RE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeEquilibrium {
    pub z_e: Point,
    pub xi: AlgebraElement,
    pub mu: DualElement,
    pub residual_norm: f64,
}

impl RelativeEquilibrium {
    /// Validate `(z, ξ)` as a relative equilibrium within `tol_re`.
    pub fn new(sys: &dyn PhaseSpaceSystem, z: Point, xi: AlgebraElement, tol_re: f64) -> Result<Self> {
        let residual = relative_equilibrium_residual(sys, &z, &xi)?;
        if residual > tol_re {
            return Err(EmcError::NotRelativeEquilibrium { residual, tol: tol_re });
        }
        Ok(Self::from_parts(sys, z, xi, residual))
    }

    /// Assemble without checking the residual.
    pub fn from_parts(sys: &dyn PhaseSpaceSystem, z: Point, xi: AlgebraElement, residual_norm: f64) -> Self {
        let mu = DualElement(sys.momentum(&z));
        Self {
            z_e: z,
            xi,
            mu,
            residual_norm,
        }
    }

    /// Validate `z` by fitting the minimal-norm generator.
    pub fn at_point(sys: &dyn PhaseSpaceSystem, z: Point, tol_re: f64) -> Result<Self> {
        let (xi, residual) = fit_generator(sys, &z)?;
        if residual > tol_re {
            return Err(EmcError::NotRelativeEquilibrium { residual, tol: tol_re });
        }
        Ok(Self::from_parts(sys, z, xi, residual))
    }
}

/// `‖X_H(z) − ξ_M(z)‖`.
pub fn relative_equilibrium_residual(sys: &dyn PhaseSpaceSystem, z: &Point, xi: &AlgebraElement) -> Result<f64> {
    Ok(residual_vector(sys, z, xi)?.norm())
}

fn residual_vector(sys: &dyn PhaseSpaceSystem, z: &Point, xi: &AlgebraElement) -> Result<DVector<f64>> {
    let xh = phase::hamiltonian_vector_field(sys, z)?;
    let gen = phase::infinitesimal_generator(sys, xi, z)?;
    Ok(xh - gen)
}

/// Orthonormal basis of `𝔤_z`, the null space of `ζ ↦ ζ_M(z)`.
pub fn point_isotropy_algebra(sys: &dyn PhaseSpaceSystem, z: &Point, tol_null: f64) -> Result<Vec<AlgebraElement>> {
    let group = sys.group();
    if group.dim() == 0 {
        return Ok(Vec::new());
    }
    let a = phase::generator_matrix(sys, z)?;
    // Generators scale with |z|; a purely relative threshold would promote
    // roundoff-level generators at near-fixed points to full rank.
    let scale = a.norm().max(1.0 + z.norm());
    Ok(group.algebra_null_space(&a, tol_null, Some(scale)))
}

/// Minimal-norm (in the algebra inner product) `ξ` fitting
/// `ξ_M(z) ≈ X_H(z)` in least squares, with the remaining residual.
pub fn fit_generator(sys: &dyn PhaseSpaceSystem, z: &Point) -> Result<(AlgebraElement, f64)> {
    let group = sys.group();
    let xh = phase::hamiltonian_vector_field(sys, z)?;
    if group.dim() == 0 {
        let r = xh.norm();
        return Ok((group.zero(), r));
    }
    let a = phase::generator_matrix(sys, z)?;
    // Whitening makes the SVD minimum-norm solution minimal in the inner product.
    let l = nalgebra::Cholesky::new(group.inner_product().clone())
        .expect("positive definite")
        .l();
    let l_inv_t = l.try_inverse().expect("invertible").transpose();
    let (y, _) = crate::linalg::min_norm_solve(&(&a * &l_inv_t), &xh, 1e-10);
    let xi = AlgebraElement(l_inv_t * y);
    let residual = relative_equilibrium_residual(sys, z, &xi)?;
    Ok((xi, residual))
}

/// Project `ξ` onto the inner-product orthogonal complement of `𝔤_z`.
pub fn minimal_norm_generator(
    sys: &dyn PhaseSpaceSystem,
    isotropy: &[AlgebraElement],
    xi: &AlgebraElement,
) -> AlgebraElement {
    let group = sys.group();
    let mut out = xi.clone();
    for b in isotropy {
        let c = group.inner(b, xi);
        out.0 -= &b.0 * c;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol_re: f64,
    pub max_iterations: usize,
    pub tol_null: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_re: DEFAULT_TOL_RE,
            max_iterations: 200,
            tol_null: DEFAULT_TOL_NULL,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub equilibrium: RelativeEquilibrium,
    pub iterations: usize,
    /// Dimension of `𝔤_{z_e}`; when positive, `ξ` is only determined up to it
    /// and the reported `ξ` is the minimal-norm representative.
    pub isotropy_dim: usize,
}

impl SolveOutcome {
    pub fn isotropy_nontrivial(&self) -> bool {
        self.isotropy_dim > 0
    }
}

/// Levenberg–Marquardt minimization of `½‖X_H(z) − ξ_M(z)‖²` over `(z, ξ)`.
///
/// The first attempt appends the seed's momentum and Casimir values to the
/// residual, so the iteration stays on the seed's level set instead of
/// sliding to a degenerate equilibrium such as the origin. When that system
/// has no nearby zero (the sleeping top, whose family is thinner than the
/// level set), the plain residual is minimized instead.
///
/// Steps use an SVD-regularized pseudo-inverse, so the neutral directions of
/// the problem (the group orbit in `z`, `𝔤_{z_e}` in `ξ`) are never pinned.
pub fn find_relative_equilibrium(
    sys: &dyn PhaseSpaceSystem,
    z0: &Point,
    xi0: &AlgebraElement,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    let n = sys.dim();
    let m = sys.group().dim();
    ensure_len(n, z0.len())?;
    ensure_len(m, xi0.dim())?;
    ensure_finite("initial point", z0.as_slice())?;
    ensure_finite("initial generator", xi0.coeffs().as_slice())?;

    let split = |x: &DVector<f64>| -> (Point, AlgebraElement) {
        (x.rows(0, n).into_owned(), AlgebraElement(x.rows(n, m).into_owned()))
    };
    let levels = |z: &Point| -> DVector<f64> {
        let (j, c) = (sys.momentum(z), sys.casimirs(z));
        DVector::from_iterator(j.len() + c.len(), j.iter().chain(c.iter()).copied())
    };
    let levels0 = levels(z0);
    let pinned = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let (z, xi) = split(x);
        let r = residual_vector(sys, &z, &xi)?;
        let dl = levels(&z) - &levels0;
        Ok(DVector::from_iterator(
            r.len() + dl.len(),
            r.iter().chain(dl.iter()).copied(),
        ))
    };
    let plain = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let (z, xi) = split(x);
        residual_vector(sys, &z, &xi)
    };

    let mut x0 = DVector::zeros(n + m);
    x0.rows_mut(0, n).copy_from(z0);
    x0.rows_mut(n, m).copy_from(xi0.coeffs());
    let (x, iterations) = match levenberg_marquardt(&pinned, x0.clone(), opts) {
        Ok(found) => found,
        Err(EmcError::NonConvergence { iterations: spent, .. }) => {
            let (x, more) = levenberg_marquardt(&plain, x0, opts)?;
            (x, spent + more)
        }
        Err(e) => return Err(e),
    };

    let (z, xi) = split(&x);
    let isotropy = point_isotropy_algebra(sys, &z, opts.tol_null)?;
    let xi = minimal_norm_generator(sys, &isotropy, &xi);
    let residual_norm = relative_equilibrium_residual(sys, &z, &xi)?;
    Ok(SolveOutcome {
        equilibrium: RelativeEquilibrium::from_parts(sys, z, xi, residual_norm),
        iterations,
        isotropy_dim: isotropy.len(),
    })
}

fn levenberg_marquardt(
    residual: &impl Fn(&DVector<f64>) -> Result<DVector<f64>>,
    mut x: DVector<f64>,
    opts: &SolverOptions,
) -> Result<(DVector<f64>, usize)> {
    let mut r = residual(&x)?;
    let mut cost = r.norm();
    let mut damping = 1e-6;
    let mut iterations = 0;

    while cost > opts.tol_re {
        if iterations >= opts.max_iterations {
            return Err(EmcError::NonConvergence {
                iterations,
                best_residual: cost,
            });
        }
        iterations += 1;
        let jac = jacobian(residual, &x)?;
        let svd = jac.svd(true, true);
        let u = svd.u.as_ref().expect("requested");
        let v_t = svd.v_t.as_ref().expect("requested");
        let utr = u.transpose() * &r;
        let mut accepted = false;
        for _ in 0..30 {
            let mut step = DVector::zeros(x.len());
            for (k, s) in svd.singular_values.iter().enumerate() {
                let w = s / (s * s + damping);
                if w.is_finite() && *s > 0.0 {
                    step -= v_t.row(k).transpose() * (w * utr[k]);
                }
            }
            let candidate = &x + &step;
            if let Ok(rc) = residual(&candidate) {
                let c = rc.norm();
                if c < cost {
                    x = candidate;
                    r = rc;
                    cost = c;
                    damping = (damping * 0.3).max(1e-15);
                    accepted = true;
                    break;
                }
            }
            damping *= 10.0;
        }
        if !accepted {
            return Err(EmcError::NonConvergence {
                iterations,
                best_residual: cost,
            });
        }
    }
    Ok((x, iterations))
}

fn jacobian(f: &impl Fn(&DVector<f64>) -> Result<DVector<f64>>, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let f0 = f(x)?;
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = 1e-7 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp)?;
        xp[i] = x[i] - h;
        let fm = f(&xp)?;
        xp[i] = x[i];
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{HarmonicS1, LagrangeTop, RigidBody, SymmetricOscillator};

    fn p(v: &[f64]) -> Point {
        DVector::from_column_slice(v)
    }

    #[test]
    fn residual_examples() {
        let rb = RigidBody::new([1.0, 2.0, 3.0]);
        let r = relative_equilibrium_residual(&rb, &p(&[0.0, 0.0, 1.0]), &AlgebraElement::from_slice(&[])).unwrap();
        assert_eq!(r, 0.0);

        let top = LagrangeTop::new(1.0, 1.0, 1.0);
        let z = p(&[0.0, 0.0, 2.5, 0.0, 0.0, 1.0]);
        for xi in [-3.0, 0.0, 1.25, 7.0] {
            let r = relative_equilibrium_residual(&top, &z, &AlgebraElement::from_slice(&[xi])).unwrap();
            assert_eq!(r, 0.0);
        }

        let osc = SymmetricOscillator::new();
        let z = p(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let r = relative_equilibrium_residual(&osc, &z, &AlgebraElement::from_slice(&[0.0, 0.0, 1.0])).unwrap();
        assert!(r <= 1e-15);
    }

    #[test]
    fn isotropy_examples() {
        let osc = SymmetricOscillator::new();
        let iso = point_isotropy_algebra(&osc, &p(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]), 1e-8).unwrap();
        assert_eq!(iso.len(), 1);
        assert!((iso[0].0[0].abs() - 1.0).abs() < 1e-14);

        let top = LagrangeTop::new(1.0, 1.0, 1.0);
        let iso = point_isotropy_algebra(&top, &p(&[0.0, 0.0, 2.5, 0.0, 0.0, 1.0]), 1e-8).unwrap();
        assert_eq!(iso.len(), 1);

        let generic = point_isotropy_algebra(&osc, &p(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]), 1e-8).unwrap();
        assert!(generic.is_empty());
    }

    #[test]
    fn every_point_of_harmonic_s1_is_relative_equilibrium() {
        let sys = HarmonicS1::new();
        for z in [p(&[1.0, 0.0]), p(&[0.3, -2.0]), p(&[-1.0, 1.0])] {
            let re = RelativeEquilibrium::at_point(&sys, z, 1e-12).unwrap();
            assert!((re.xi.0[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn solver_converges_to_principal_axis() {
        let rb = RigidBody::new([1.0, 2.0, 3.0]);
        let out = find_relative_equilibrium(
            &rb,
            &p(&[0.1, 0.05, 0.98]),
            &AlgebraElement::from_slice(&[]),
            &SolverOptions::default(),
        )
        .unwrap();
        let z = &out.equilibrium.z_e;
        assert!(out.equilibrium.residual_norm <= 1e-9);
        // Parallel to e3, the nearest principal axis.
        assert!(z[2] > 0.0 && z[0].abs().max(z[1].abs()) < 1e-6, "{z}");
        // The Casimir level of the seed is kept.
        assert!((z.norm() - p(&[0.1, 0.05, 0.98]).norm()).abs() < 1e-9);
    }

    #[test]
    fn solver_fixed_point_takes_no_iterations() {
        let osc = SymmetricOscillator::new();
        let z = p(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let out = find_relative_equilibrium(
            &osc,
            &z,
            &AlgebraElement::from_slice(&[0.0, 0.0, 1.0]),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(out.iterations <= 1);
        assert_eq!(out.equilibrium.z_e, z);
    }

    #[test]
    fn sleeping_top_reports_minimal_norm_generator() {
        let top = LagrangeTop::new(1.0, 1.0, 1.0);
        let seed = p(&[1e-4, -2e-4, 2.5, 3e-4, 1e-4, 1.0]);
        let out = find_relative_equilibrium(
            &top,
            &seed,
            &AlgebraElement::from_slice(&[0.7]),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(out.equilibrium.residual_norm <= 1e-9);
        assert!(out.isotropy_nontrivial(), "{out:?}");
        assert_eq!(out.equilibrium.xi.0[0], 0.0);
    }

    #[test]
    fn non_convergence_carries_best_residual() {
        let rb = RigidBody::new([1.0, 2.0, 3.0]);
        let opts = SolverOptions {
            max_iterations: 0,
            ..Default::default()
        };
        let err =
            find_relative_equilibrium(&rb, &p(&[0.3, 0.4, 0.5]), &AlgebraElement::from_slice(&[]), &opts).unwrap_err();
        match err {
            EmcError::NonConvergence { best_residual, .. } => assert!(best_residual > 0.0),
            other => panic!("{other:?}"),
        }
    }
}
