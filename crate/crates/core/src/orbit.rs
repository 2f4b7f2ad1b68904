//! Nearest point on a group orbit `{g·z_e : g ∈ exp(span B)·D}`, where `B` is
//! a subalgebra basis and `D` a set of discrete group elements.

use nalgebra::{DMatrix, DVector};

use crate::lie::{AlgebraElement, GroupElement};
use crate::phase::{PhaseSpaceSystem, Point};

#[derive(Debug, Clone)]
pub struct OrbitProjection {
    /// Coordinates of the optimal `η` in the subalgebra basis.
    pub coords: DVector<f64>,
    /// `g* = exp(η*)·d*`.
    pub element: GroupElement,
    pub nearest: Point,
    pub distance: f64,
    /// Norm of the gradient of `½‖g·z_e − z‖²` at the optimum.
    pub gradient_norm: f64,
    pub converged: bool,
}

pub struct OrbitProjector<'a> {
    sys: &'a dyn PhaseSpaceSystem,
    z_e: &'a Point,
    basis: &'a [AlgebraElement],
    discrete: Vec<GroupElement>,
    pub max_iterations: usize,
}

impl<'a> OrbitProjector<'a> {
    pub fn new(sys: &'a dyn PhaseSpaceSystem, z_e: &'a Point, basis: &'a [AlgebraElement]) -> Self {
        Self {
            sys,
            z_e,
            basis,
            discrete: Vec::new(),
            max_iterations: 100,
        }
    }

    pub fn with_discrete(mut self, discrete: Vec<GroupElement>) -> Self {
        self.discrete = discrete;
        self
    }

    fn element(&self, c: &DVector<f64>, d: Option<&GroupElement>) -> GroupElement {
        let group = self.sys.group();
        let mut eta = group.zero();
        for (k, b) in self.basis.iter().enumerate() {
            eta.0 += &b.0 * c[k];
        }
        let g = group.exponential(&eta);
        match d {
            Some(d) => g.compose(d),
            None => g,
        }
    }

    fn residual(&self, c: &DVector<f64>, d: Option<&GroupElement>, z: &Point) -> DVector<f64> {
        self.sys.act(&self.element(c, d), self.z_e) - z
    }

    fn jacobian(&self, c: &DVector<f64>, d: Option<&GroupElement>, z: &Point) -> DMatrix<f64> {
        let k = c.len();
        let mut jac = DMatrix::zeros(z.len(), k);
        let mut cp = c.clone();
        for i in 0..k {
            let h = 1e-7 * c[i].abs().max(1.0);
            cp[i] = c[i] + h;
            let fp = self.residual(&cp, d, z);
            cp[i] = c[i] - h;
            let fm = self.residual(&cp, d, z);
            cp[i] = c[i];
            jac.set_column(i, &((fp - fm) / (2.0 * h)));
        }
        jac
    }

    fn descend(&self, seed: &DVector<f64>, d: Option<&GroupElement>, z: &Point) -> OrbitProjection {
        let mut c = seed.clone();
        let mut r = self.residual(&c, d, z);
        let mut cost = 0.5 * r.norm_squared();
        let mut damping = 1e-8;
        let scale = 1.0 + z.norm();
        let mut grad_norm = f64::INFINITY;
        let mut converged = false;
        for _ in 0..self.max_iterations {
            let jac = self.jacobian(&c, d, z);
            let grad = jac.transpose() * &r;
            grad_norm = grad.norm();
            if grad_norm <= 1e-11 * scale * scale {
                converged = true;
                break;
            }
            let jtj = jac.transpose() * &jac;
            let mut improved = false;
            for _ in 0..40 {
                let mut a = jtj.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += damping * (1.0 + jtj[(i, i)]);
                }
                let Some(step) = a.lu().solve(&(-&grad)) else {
                    damping *= 10.0;
                    continue;
                };
                let cand = &c + &step;
                let rc = self.residual(&cand, d, z);
                let cc = 0.5 * rc.norm_squared();
                if cc <= cost {
                    let small = step.norm() <= 1e-15 * (1.0 + c.norm());
                    c = cand;
                    r = rc;
                    cost = cc;
                    damping = (damping * 0.1).max(1e-15);
                    improved = !small;
                    break;
                }
                damping *= 10.0;
            }
            if !improved {
                let jac = self.jacobian(&c, d, z);
                grad_norm = (jac.transpose() * &r).norm();
                // Stalled at roundoff level: accept if the gradient is tiny relative to the residual.
                converged = grad_norm <= 1e-7 * scale * (r.norm() + 1e-12);
                break;
            }
        }
        OrbitProjection {
            element: self.element(&c, d),
            nearest: &r + z,
            distance: r.norm(),
            coords: c,
            gradient_norm: grad_norm,
            converged,
        }
    }

    /// Best local projection over the given seeds (coordinates in the
    /// subalgebra basis), each combined with every discrete element.
    pub fn project(&self, z: &Point, seeds: &[DVector<f64>]) -> OrbitProjection {
        let k = self.basis.len();
        let mut all_seeds: Vec<DVector<f64>> = seeds.iter().filter(|s| s.len() == k).cloned().collect();
        if all_seeds.is_empty() {
            all_seeds.push(DVector::zeros(k));
        }
        let mut candidates = Vec::new();
        for seed in &all_seeds {
            candidates.push(self.project_from(z, seed, None));
            for d in &self.discrete {
                candidates.push(self.project_from(z, seed, Some(d)));
            }
        }
        candidates
            .into_iter()
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
            .expect("at least one seed")
    }

    fn project_from(&self, z: &Point, seed: &DVector<f64>, d: Option<&GroupElement>) -> OrbitProjection {
        if self.basis.is_empty() {
            let element = match d {
                Some(d) => d.clone(),
                None => self.sys.group().identity(),
            };
            let nearest = self.sys.act(&element, self.z_e);
            return OrbitProjection {
                coords: DVector::zeros(0),
                distance: (&nearest - z).norm(),
                nearest,
                element,
                gradient_norm: 0.0,
                converged: true,
            };
        }
        self.descend(seed, d, z)
    }
}
