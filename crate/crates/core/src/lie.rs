//! Finite-dimensional matrix Lie groups and their algebras.
//!
//! A [`LieGroup`] is described by a basis of generator matrices. Structure
//! constants are derived from matrix commutators and checked for
//! antisymmetry and the Jacobi identity on construction. Algebra and dual
//! elements are plain coordinate vectors in the basis and dual basis.
//!
//! Conventions: `[e_i, e_j] = Σ_k c[i][j][k] e_k`, `Ad_g ζ = g ζ g⁻¹`,
//! `<ad*_ζ μ, η> = -<μ, [ζ, η]>` and the coadjoint group action
//! `Ad*_{g⁻¹}` is the transpose of `Ad_{g⁻¹}` in coordinates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, EmcError, Result};
use crate::linalg;

/// Tolerance for group-membership checks on construction of group elements.
pub const GROUP_TOL: f64 = 1e-9;
/// Tolerance on structure-constant identities.
pub const STRUCTURE_TOL: f64 = 1e-12;
/// Relative singular-value threshold for algebra null spaces.
pub const DEFAULT_TOL_NULL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GroupConstraint {
    /// `gᵀg = I` and `det g = 1`.
    #[default]
    SpecialOrthogonal,
    /// Any invertible matrix.
    Invertible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraElement(pub DVector<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualElement(pub DVector<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    matrix: DMatrix<f64>,
}

impl AlgebraElement {
    pub fn from_slice(coeffs: &[f64]) -> Self {
        Self(DVector::from_column_slice(coeffs))
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }
}

impl DualElement {
    pub fn from_slice(coeffs: &[f64]) -> Self {
        Self(DVector::from_column_slice(coeffs))
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Natural pairing `<μ, ζ>`.
    pub fn pair(&self, zeta: &AlgebraElement) -> f64 {
        self.0.dot(&zeta.0)
    }
}

impl GroupElement {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement {
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn inverse(&self) -> GroupElement {
        let matrix = self
            .matrix
            .clone()
            .try_inverse()
            .expect("group elements are invertible");
        GroupElement { matrix }
    }
}

/// Serializable description of a matrix Lie group, as read from a
/// system-definition file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LieGroupDef {
    pub name: String,
    /// Generator matrices, each given as a list of rows.
    pub basis: Vec<Vec<Vec<f64>>>,
    /// Matrix size; only needed when `basis` is empty.
    #[serde(default)]
    pub matrix_dim: Option<usize>,
    /// Optional structure constants `c[i][j][k]`; checked against commutators.
    #[serde(default)]
    pub structure_constants: Option<Vec<Vec<Vec<f64>>>>,
    /// Inner product on algebra coordinates, identity when absent.
    #[serde(default)]
    pub inner_product: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub discrete_samples: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub constraint: GroupConstraint,
}

#[derive(Debug, Clone)]
pub struct LieGroup {
    name: String,
    matrix_dim: usize,
    basis: Vec<DMatrix<f64>>,
    /// Flattened `c[i][j][k]` at index `(i * dim + j) * dim + k`.
    structure: Vec<f64>,
    inner_product: DMatrix<f64>,
    inner_product_inv: DMatrix<f64>,
    /// Lower Cholesky factor `L` of the inner product, `M = L Lᵀ`.
    chol: DMatrix<f64>,
    /// Pseudo-inverse of the vectorized basis, maps `vec(X)` to coordinates.
    basis_pinv: DMatrix<f64>,
    basis_matrix: DMatrix<f64>,
    discrete_samples: Vec<GroupElement>,
    constraint: GroupConstraint,
}

fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(EmcError::InvalidGroup("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl LieGroup {
    /// Build a group from generator matrices, deriving structure constants.
    pub fn new(
        name: impl Into<String>,
        matrix_dim: usize,
        basis: Vec<DMatrix<f64>>,
        inner_product: Option<DMatrix<f64>>,
        constraint: GroupConstraint,
    ) -> Result<Self> {
        let name = name.into();
        let dim = basis.len();
        for b in &basis {
            if b.nrows() != matrix_dim || b.ncols() != matrix_dim {
                return Err(EmcError::InvalidGroup(format!(
                    "basis matrix is {}x{}, expected {matrix_dim}x{matrix_dim}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        let inner_product = inner_product.unwrap_or_else(|| DMatrix::identity(dim, dim));
        if inner_product.nrows() != dim || inner_product.ncols() != dim {
            return Err(EmcError::InvalidGroup(
                "inner product size does not match algebra dimension".into(),
            ));
        }
        if linalg::max_abs(&(&inner_product - inner_product.transpose())) > 1e-12 {
            return Err(EmcError::InvalidGroup("inner product is not symmetric".into()));
        }
        let chol = if dim == 0 {
            DMatrix::zeros(0, 0)
        } else {
            Cholesky::<f64, Dyn>::new(inner_product.clone())
                .ok_or_else(|| EmcError::InvalidGroup("inner product is not positive definite".into()))?
                .l()
        };
        let inner_product_inv = if dim == 0 {
            DMatrix::zeros(0, 0)
        } else {
            inner_product.clone().try_inverse().expect("positive definite")
        };

        let d2 = matrix_dim * matrix_dim;
        let basis_matrix = if dim == 0 {
            DMatrix::zeros(d2, 0)
        } else {
            DMatrix::from_fn(d2, dim, |r, c| basis[c].as_slice()[r])
        };
        let basis_pinv = if dim == 0 {
            DMatrix::zeros(0, d2)
        } else {
            basis_matrix
                .clone()
                .pseudo_inverse(1e-12)
                .map_err(|e| EmcError::InvalidGroup(e.to_string()))?
        };
        if dim > 0 {
            let gram = basis_matrix.transpose() * &basis_matrix;
            let rank = gram.clone().svd(false, false).rank(1e-10 * linalg::max_abs(&gram));
            if rank < dim {
                return Err(EmcError::InvalidGroup("basis matrices are linearly dependent".into()));
            }
        }

        let mut group = LieGroup {
            name,
            matrix_dim,
            basis,
            structure: vec![0.0; dim * dim * dim],
            inner_product,
            inner_product_inv,
            chol,
            basis_pinv,
            basis_matrix,
            discrete_samples: Vec::new(),
            constraint,
        };
        for i in 0..dim {
            for j in 0..dim {
                let comm = &group.basis[i] * &group.basis[j] - &group.basis[j] * &group.basis[i];
                let coeffs = group
                    .expand_with_tol(&comm, STRUCTURE_TOL)
                    .map_err(|_| EmcError::InvalidGroup(format!("[e{i}, e{j}] leaves the span of the basis")))?;
                for k in 0..dim {
                    group.structure[(i * dim + j) * dim + k] = coeffs.0[k];
                }
            }
        }
        let jacobi = group.jacobi_residual();
        if jacobi > STRUCTURE_TOL {
            return Err(EmcError::InvalidGroup(format!("Jacobi identity residual {jacobi:e}")));
        }
        Ok(group)
    }

    pub fn with_discrete_samples(mut self, samples: Vec<DMatrix<f64>>) -> Result<Self> {
        let mut elems = Vec::with_capacity(samples.len());
        for m in samples {
            elems.push(self.element(m)?);
        }
        self.discrete_samples = elems;
        Ok(self)
    }

    pub fn with_inner_product(self, inner_product: DMatrix<f64>) -> Result<Self> {
        let samples = self.discrete_samples.iter().map(|g| g.matrix.clone()).collect();
        LieGroup::new(
            self.name,
            self.matrix_dim,
            self.basis,
            Some(inner_product),
            self.constraint,
        )?
        .with_discrete_samples(samples)
    }

    pub fn from_def(def: &LieGroupDef) -> Result<Self> {
        let basis = def
            .basis
            .iter()
            .map(|rows| from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        let matrix_dim = match (basis.first(), def.matrix_dim) {
            (Some(b), _) => b.nrows(),
            (None, Some(d)) => d,
            (None, None) => 1,
        };
        let inner = def.inner_product.as_deref().map(from_rows).transpose()?;
        let group = LieGroup::new(def.name.clone(), matrix_dim, basis, inner, def.constraint)?;
        if let Some(c) = &def.structure_constants {
            let dim = group.dim();
            let mut worst: f64 = 0.0;
            if c.len() != dim || c.iter().any(|m| m.len() != dim || m.iter().any(|v| v.len() != dim)) {
                return Err(EmcError::InvalidGroup(
                    "structure constants have the wrong shape".into(),
                ));
            }
            for i in 0..dim {
                for j in 0..dim {
                    for k in 0..dim {
                        worst = worst.max((c[i][j][k] - group.structure_constant(i, j, k)).abs());
                    }
                }
            }
            if worst > STRUCTURE_TOL {
                return Err(EmcError::InvalidGroup(format!(
                    "declared structure constants disagree with commutators by {worst:e}"
                )));
            }
        }
        let samples = def
            .discrete_samples
            .iter()
            .map(|rows| from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        group.with_discrete_samples(samples)
    }

    /// Built-in groups: `trivial`, `so3`, `torus1`, `torus2`.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "trivial" => Ok(Self::trivial()),
            "so3" => Ok(Self::so3()),
            "torus1" => Ok(Self::torus(1)),
            "torus2" => Ok(Self::torus(2)),
            other => Err(EmcError::UnknownName {
                kind: "group",
                name: other.to_string(),
                available: "trivial, so3, torus1, torus2".into(),
            }),
        }
    }

    pub fn trivial() -> Self {
        LieGroup::new("trivial", 1, Vec::new(), None, GroupConstraint::SpecialOrthogonal)
            .expect("trivial group is valid")
    }

    /// Rotation group with the hat-map basis `hat(e_i) v = e_i × v`.
    pub fn so3() -> Self {
        let basis = (0..3)
            .map(|i| {
                let mut e = nalgebra::Vector3::zeros();
                e[i] = 1.0;
                DMatrix::from_iterator(3, 3, e.cross_matrix().iter().copied())
            })
            .collect();
        LieGroup::new("so3", 3, basis, None, GroupConstraint::SpecialOrthogonal).expect("so(3) is valid")
    }

    /// `k` commuting plane rotations acting block-diagonally on `R^{2k}`.
    pub fn torus(k: usize) -> Self {
        let d = 2 * k;
        let basis = (0..k)
            .map(|i| {
                let mut m = DMatrix::zeros(d, d);
                m[(2 * i, 2 * i + 1)] = -1.0;
                m[(2 * i + 1, 2 * i)] = 1.0;
                m
            })
            .collect();
        LieGroup::new(format!("torus{k}"), d, basis, None, GroupConstraint::SpecialOrthogonal).expect("torus is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn matrix_dim(&self) -> usize {
        self.matrix_dim
    }

    pub fn basis(&self) -> &[DMatrix<f64>] {
        &self.basis
    }

    pub fn constraint(&self) -> GroupConstraint {
        self.constraint
    }

    pub fn discrete_samples(&self) -> &[GroupElement] {
        &self.discrete_samples
    }

    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        let d = self.dim();
        self.structure[(i * d + j) * d + k]
    }

    pub fn inner_product(&self) -> &DMatrix<f64> {
        &self.inner_product
    }

    /// Inner product on dual coordinates, the inverse of [`Self::inner_product`].
    pub fn dual_inner_product(&self) -> &DMatrix<f64> {
        &self.inner_product_inv
    }

    pub fn zero(&self) -> AlgebraElement {
        AlgebraElement(DVector::zeros(self.dim()))
    }

    pub fn basis_element(&self, i: usize) -> AlgebraElement {
        let mut v = DVector::zeros(self.dim());
        v[i] = 1.0;
        AlgebraElement(v)
    }

    pub fn algebra(&self, coeffs: &[f64]) -> Result<AlgebraElement> {
        ensure_len(self.dim(), coeffs.len())?;
        Ok(AlgebraElement::from_slice(coeffs))
    }

    pub fn dual(&self, coeffs: &[f64]) -> Result<DualElement> {
        ensure_len(self.dim(), coeffs.len())?;
        Ok(DualElement::from_slice(coeffs))
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement {
            matrix: DMatrix::identity(self.matrix_dim, self.matrix_dim),
        }
    }

    /// Wrap a matrix as a group element after checking the group constraints.
    pub fn element(&self, matrix: DMatrix<f64>) -> Result<GroupElement> {
        let d = self.matrix_dim;
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(EmcError::DimensionMismatch {
                expected: d,
                got: matrix.nrows(),
            });
        }
        let violation = match self.constraint {
            GroupConstraint::SpecialOrthogonal => {
                let orth = linalg::max_abs(&(matrix.transpose() * &matrix - DMatrix::identity(d, d)));
                orth.max((matrix.determinant() - 1.0).abs())
            }
            GroupConstraint::Invertible => {
                if matrix.determinant().abs() > GROUP_TOL {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        };
        if violation > GROUP_TOL || !violation.is_finite() {
            return Err(EmcError::NotInGroup { violation });
        }
        Ok(GroupElement { matrix })
    }

    fn check_algebra(&self, z: &AlgebraElement) -> Result<()> {
        ensure_len(self.dim(), z.dim())
    }

    /// `Σ ζ_i e_i` as a matrix.
    pub fn to_matrix(&self, zeta: &AlgebraElement) -> DMatrix<f64> {
        let d = self.matrix_dim;
        let mut m = DMatrix::zeros(d, d);
        for (c, b) in zeta.0.iter().zip(&self.basis) {
            m += b * *c;
        }
        m
    }

    fn expand_with_tol(&self, m: &DMatrix<f64>, tol: f64) -> Result<AlgebraElement> {
        if self.dim() == 0 {
            let residual = m.norm();
            return if residual <= tol * (1.0 + residual) {
                Ok(self.zero())
            } else {
                Err(EmcError::BasisExpansion { residual, tol })
            };
        }
        let v = DVector::from_column_slice(m.as_slice());
        let coeffs = &self.basis_pinv * &v;
        let residual = (&self.basis_matrix * &coeffs - &v).norm();
        if residual > tol * (1.0 + v.norm()) {
            return Err(EmcError::BasisExpansion { residual, tol });
        }
        Ok(AlgebraElement(coeffs))
    }

    /// Coordinates of a matrix in the algebra basis (least squares with a
    /// residual check).
    pub fn expand(&self, m: &DMatrix<f64>) -> Result<AlgebraElement> {
        self.expand_with_tol(m, GROUP_TOL)
    }

    pub fn bracket(&self, zeta: &AlgebraElement, eta: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_algebra(zeta)?;
        self.check_algebra(eta)?;
        let d = self.dim();
        let mut out = DVector::zeros(d);
        for i in 0..d {
            if zeta.0[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                let w = zeta.0[i] * eta.0[j];
                if w == 0.0 {
                    continue;
                }
                for k in 0..d {
                    out[k] += self.structure_constant(i, j, k) * w;
                }
            }
        }
        Ok(AlgebraElement(out))
    }

    /// Matrix of `ad_ζ` in algebra coordinates: column `j` holds `[ζ, e_j]`.
    pub fn ad_matrix(&self, zeta: &AlgebraElement) -> Result<DMatrix<f64>> {
        self.check_algebra(zeta)?;
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            let col = self.bracket(zeta, &self.basis_element(j))?;
            m.set_column(j, &col.0);
        }
        Ok(m)
    }

    /// Matrix exponential of `Σ ζ_i e_i` (scaling and squaring with Padé).
    pub fn exponential(&self, zeta: &AlgebraElement) -> GroupElement {
        if self.dim() == 0 || zeta.0.iter().all(|c| *c == 0.0) {
            return self.identity();
        }
        GroupElement {
            matrix: self.to_matrix(zeta).exp(),
        }
    }

    pub fn adjoint(&self, g: &GroupElement, zeta: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_algebra(zeta)?;
        if self.dim() == 0 {
            return Ok(self.zero());
        }
        let conj = g.matrix() * self.to_matrix(zeta) * g.inverse().matrix();
        self.expand(&conj)
    }

    /// Matrix of `Ad_g` in algebra coordinates.
    pub fn adjoint_matrix(&self, g: &GroupElement) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            let col = self.adjoint(g, &self.basis_element(j))?;
            m.set_column(j, &col.0);
        }
        Ok(m)
    }

    /// Infinitesimal coadjoint action `ad*_ζ μ`, defined by
    /// `<ad*_ζ μ, η> = -<μ, [ζ, η]>`.
    pub fn coadjoint_algebra(&self, zeta: &AlgebraElement, mu: &DualElement) -> Result<DualElement> {
        ensure_len(self.dim(), mu.dim())?;
        let ad = self.ad_matrix(zeta)?;
        Ok(DualElement(-(ad.transpose() * &mu.0)))
    }

    /// Coadjoint group action `Ad*_{g⁻¹} μ`, the action under which momentum
    /// maps are equivariant.
    pub fn coadjoint_action(&self, g: &GroupElement, mu: &DualElement) -> Result<DualElement> {
        ensure_len(self.dim(), mu.dim())?;
        let ad_inv = self.adjoint_matrix(&g.inverse())?;
        Ok(DualElement(ad_inv.transpose() * &mu.0))
    }

    pub fn norm(&self, zeta: &AlgebraElement) -> f64 {
        zeta.0.dot(&(&self.inner_product * &zeta.0)).max(0.0).sqrt()
    }

    pub fn dual_norm(&self, alpha: &DualElement) -> f64 {
        alpha.0.dot(&(&self.inner_product_inv * &alpha.0)).max(0.0).sqrt()
    }

    pub fn inner(&self, a: &AlgebraElement, b: &AlgebraElement) -> f64 {
        a.0.dot(&(&self.inner_product * &b.0))
    }

    /// Basis of the null space of a linear map `A` on algebra coordinates,
    /// orthonormal with respect to the algebra inner product. The map is
    /// measured in whitened coordinates `ζ = L⁻ᵀ y`; singular values at most
    /// `tol_rel · scale` count as zero, where `scale` defaults to `σ_max`.
    pub fn algebra_null_space(&self, a: &DMatrix<f64>, tol_rel: f64, scale: Option<f64>) -> Vec<AlgebraElement> {
        let d = self.dim();
        if d == 0 {
            return Vec::new();
        }
        let l_inv_t = self
            .chol
            .clone()
            .try_inverse()
            .expect("Cholesky factor is invertible")
            .transpose();
        let whitened = a * &l_inv_t;
        let null = match scale {
            Some(s) if s > 0.0 => {
                let threshold = tol_rel * s;
                null_with_threshold(&whitened, threshold)
            }
            Some(_) => DMatrix::identity(d, d),
            None => linalg::null_space(&whitened, tol_rel, 1e-14),
        };
        null.column_iter().map(|y| AlgebraElement(&l_inv_t * y)).collect()
    }

    /// Orthonormal basis of `𝔤_μ = {ζ : ad*_ζ μ = 0}`.
    pub fn momentum_isotropy_algebra(&self, mu: &DualElement, tol_null: f64) -> Result<Vec<AlgebraElement>> {
        ensure_len(self.dim(), mu.dim())?;
        let d = self.dim();
        let mu_norm = self.dual_norm(mu);
        if d == 0 {
            return Ok(Vec::new());
        }
        if mu_norm == 0.0 {
            return Ok(self.algebra_null_space(&DMatrix::zeros(1, d), tol_null, Some(0.0)));
        }
        // Column i is ad*_{e_i} μ, measured in the dual norm.
        let mut a = DMatrix::zeros(d, d);
        for i in 0..d {
            let col = self.coadjoint_algebra(&self.basis_element(i), mu)?;
            a.set_column(i, &col.0);
        }
        let l_inv = self.chol.clone().try_inverse().expect("invertible");
        let a_dual = l_inv * a;
        Ok(self.algebra_null_space(&a_dual, tol_null, Some(mu_norm)))
    }

    /// Residual of the Jacobi identity over all basis triples.
    pub fn jacobi_residual(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for m in 0..d {
                        let mut s = 0.0;
                        for l in 0..d {
                            s += self.structure_constant(j, k, l) * self.structure_constant(i, l, m)
                                + self.structure_constant(k, i, l) * self.structure_constant(j, l, m)
                                + self.structure_constant(i, j, l) * self.structure_constant(k, l, m);
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest violation of `Ad_g`-invariance of the inner product over the
    /// Lie algebra spanned by `subalgebra` (infinitesimally) and the given
    /// group elements.
    pub fn inner_product_invariance_violation(
        &self,
        subalgebra: &[AlgebraElement],
        elements: &[GroupElement],
    ) -> Result<f64> {
        let m = &self.inner_product;
        let mut worst: f64 = 0.0;
        for zeta in subalgebra {
            let ad = self.ad_matrix(zeta)?;
            let skew = m * &ad + ad.transpose() * m;
            worst = worst.max(linalg::max_abs(&skew));
        }
        for g in elements {
            let ad = self.adjoint_matrix(g)?;
            worst = worst.max(linalg::max_abs(&(ad.transpose() * m * &ad - m)));
        }
        Ok(worst)
    }

    /// Random algebra element with coordinates uniform in `[-scale, scale]`.
    pub fn random_algebra(&self, rng: &mut impl Rng, scale: f64) -> AlgebraElement {
        AlgebraElement(DVector::from_fn(self.dim(), |_, _| rng.random_range(-scale..=scale)))
    }

    /// Check that the inner product and its dual are invariant under `Ad` and
    /// `Ad*` for `n_samples` random group elements plus the discrete samples.
    pub fn check_invariant_inner_products(&self, n_samples: usize, seed: u64) -> Result<InvarianceReport> {
        if n_samples == 0 {
            return Err(EmcError::InvalidArgument("n_samples must be at least 1".into()));
        }
        let tol = 1e-8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut elements: Vec<(String, GroupElement)> = (0..n_samples)
            .map(|i| {
                let zeta = self.random_algebra(&mut rng, std::f64::consts::PI);
                (
                    format!("random sample {i} (exp of {:?})", zeta.0.as_slice()),
                    self.exponential(&zeta),
                )
            })
            .collect();
        for (i, g) in self.discrete_samples.iter().enumerate() {
            elements.push((format!("discrete sample {i}"), g.clone()));
        }

        let mut report = InvarianceReport::default();
        let mut worst_sample = None;
        let mut worst = 0.0;
        for (label, g) in &elements {
            for _ in 0..4 {
                let zeta = self.random_algebra(&mut rng, 1.0);
                let alpha = DualElement(self.random_algebra(&mut rng, 1.0).0);
                let ad = self.adjoint(g, &zeta)?;
                let co = self.coadjoint_action(g, &alpha)?;
                let v_ad = (self.norm(&ad) - self.norm(&zeta)).abs();
                let v_co = (self.dual_norm(&co) - self.dual_norm(&alpha)).abs();
                let excess = alpha.pair(&zeta) - self.dual_norm(&alpha) * self.norm(&zeta);
                report.max_adjoint_violation = report.max_adjoint_violation.max(v_ad);
                report.max_coadjoint_violation = report.max_coadjoint_violation.max(v_co);
                report.max_pairing_excess = report.max_pairing_excess.max(excess);
                let v = v_ad.max(v_co);
                if v > worst {
                    worst = v;
                    worst_sample = Some(label.clone());
                }
            }
        }
        report.samples_checked = elements.len();
        report.max_violation = worst;
        if worst > tol || report.max_pairing_excess > tol {
            return Err(EmcError::InvarianceFailure {
                sample: worst_sample.unwrap_or_else(|| "pairing inequality".into()),
                violation: worst.max(report.max_pairing_excess),
                tol,
            });
        }
        Ok(report)
    }
}

fn null_with_threshold(a: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    let n = a.ncols();
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= threshold)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    linalg::columns(n, &cols)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub samples_checked: usize,
    pub max_adjoint_violation: f64,
    pub max_coadjoint_violation: f64,
    /// Largest value of `<α, ζ> - ‖α‖* ‖ζ‖` (should be ≤ 0).
    pub max_pairing_excess: f64,
    pub max_violation: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rodrigues(axis: [f64; 3], angle: f64) -> DMatrix<f64> {
        let k = nalgebra::Vector3::from(axis).normalize().cross_matrix();
        let k = DMatrix::from_iterator(3, 3, k.iter().copied());
        DMatrix::identity(3, 3) + &k * angle.sin() + &k * &k * (1.0 - angle.cos())
    }

    #[test]
    fn so3_bracket_is_cross_product() {
        let g = LieGroup::so3();
        let e3 = g.bracket(&g.basis_element(0), &g.basis_element(1)).unwrap();
        assert_relative_eq!(e3.0, g.basis_element(2).0, epsilon = 1e-15);
        let z = AlgebraElement::from_slice(&[0.3, -1.2, 0.7]);
        assert_relative_eq!(g.bracket(&z, &z).unwrap().0.norm(), 0.0);
    }

    #[test]
    fn trivial_group_is_empty() {
        let g = LieGroup::trivial();
        assert_eq!(g.dim(), 0);
        assert_eq!(g.bracket(&g.zero(), &g.zero()).unwrap().dim(), 0);
        assert!(g
            .momentum_isotropy_algebra(&g.dual(&[]).unwrap(), 1e-8)
            .unwrap()
            .is_empty());
        assert_eq!(g.exponential(&g.zero()).matrix(), &DMatrix::identity(1, 1));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = LieGroup::so3();
        let err = g.bracket(&AlgebraElement::from_slice(&[1.0]), &g.zero());
        assert!(matches!(err, Err(EmcError::DimensionMismatch { expected: 3, got: 1 })));
    }

    #[test]
    fn exponential_matches_rodrigues() {
        let g = LieGroup::so3();
        let r = g.exponential(&AlgebraElement::from_slice(&[0.0, 0.0, FRAC_PI_2]));
        assert_relative_eq!(r.matrix(), &rodrigues([0.0, 0.0, 1.0], FRAC_PI_2), epsilon = 1e-14);
        let full = g.exponential(&AlgebraElement::from_slice(&[0.0, 0.0, 2.0 * PI]));
        assert_relative_eq!(full.matrix(), &DMatrix::identity(3, 3), epsilon = 1e-12);
        let id = g.exponential(&g.zero());
        assert_eq!(id.matrix(), &DMatrix::identity(3, 3));
        let generic = g.exponential(&AlgebraElement::from_slice(&[0.4, -0.3, 1.1]));
        let angle = (0.4f64.powi(2) + 0.09 + 1.21).sqrt();
        assert_relative_eq!(generic.matrix(), &rodrigues([0.4, -0.3, 1.1], angle), epsilon = 1e-13);
    }

    #[test]
    fn adjoint_by_conjugation() {
        let g = LieGroup::so3();
        let rz = g.exponential(&AlgebraElement::from_slice(&[0.0, 0.0, FRAC_PI_2]));
        let e1 = g.adjoint(&rz, &g.basis_element(0)).unwrap();
        assert_relative_eq!(e1.0, g.basis_element(1).0, epsilon = 1e-14);
        let rz = g.exponential(&AlgebraElement::from_slice(&[0.0, 0.0, 0.77]));
        let e3 = g.adjoint(&rz, &g.basis_element(2)).unwrap();
        assert_relative_eq!(e3.0, g.basis_element(2).0, epsilon = 1e-14);
        let z = AlgebraElement::from_slice(&[1.0, 2.0, 3.0]);
        assert_relative_eq!(g.adjoint(&g.identity(), &z).unwrap().0, z.0, epsilon = 1e-14);
    }

    #[test]
    fn adjoint_rejects_foreign_matrix() {
        let g = LieGroup::so3();
        let shear = GroupElement {
            matrix: DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
        };
        let err = g.adjoint(&shear, &g.basis_element(0));
        assert!(matches!(err, Err(EmcError::BasisExpansion { .. })));
        assert!(matches!(
            g.element(shear.matrix.clone()),
            Err(EmcError::NotInGroup { .. })
        ));
    }

    #[test]
    fn coadjoint_algebra_is_zeta_cross_mu() {
        let g = LieGroup::so3();
        let mu = DualElement::from_slice(&[0.0, 0.0, 1.0]);
        let along = g.coadjoint_algebra(&g.basis_element(2), &mu).unwrap();
        assert_relative_eq!(along.0.norm(), 0.0);
        // <ad*_ζ μ, η> = -μ·(ζ × η) = η·(ζ × μ); e1 × e3 = -e2.
        let across = g.coadjoint_algebra(&g.basis_element(0), &mu).unwrap();
        assert_relative_eq!(across.0, DVector::from_vec(vec![0.0, -1.0, 0.0]), epsilon = 1e-15);
        let zero = g
            .coadjoint_algebra(&g.basis_element(0), &DualElement::from_slice(&[0.0; 3]))
            .unwrap();
        assert_eq!(zero.0.norm(), 0.0);
    }

    #[test]
    fn momentum_isotropy_of_so3() {
        let g = LieGroup::so3();
        let iso = g
            .momentum_isotropy_algebra(&DualElement::from_slice(&[0.0, 0.0, 1.0]), 1e-8)
            .unwrap();
        assert_eq!(iso.len(), 1);
        assert_relative_eq!(iso[0].0.abs(), DVector::from_vec(vec![0.0, 0.0, 1.0]), epsilon = 1e-14);
        let full = g
            .momentum_isotropy_algebra(&DualElement::from_slice(&[0.0; 3]), 1e-8)
            .unwrap();
        assert_eq!(full.len(), 3);
    }

    #[test]
    fn isotropy_basis_is_orthonormal_in_weighted_product() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 4.0]));
        let g = LieGroup::so3().with_inner_product(m).unwrap();
        let iso = g
            .momentum_isotropy_algebra(&DualElement::from_slice(&[0.0, 0.0, 2.0]), 1e-8)
            .unwrap();
        assert_eq!(iso.len(), 1);
        assert_relative_eq!(g.norm(&iso[0]), 1.0, epsilon = 1e-14);
        assert_relative_eq!(iso[0].0[2].abs(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn invariant_inner_products() {
        let so3 = LieGroup::so3().check_invariant_inner_products(20, 7).unwrap();
        assert!(so3.max_violation <= 1e-12, "{}", so3.max_violation);
        assert!(so3.max_pairing_excess <= 1e-12);
        let torus = LieGroup::torus(2).check_invariant_inner_products(20, 7).unwrap();
        assert!(torus.max_violation <= 1e-14);
        let skewed = LieGroup::so3()
            .with_inner_product(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 4.0])))
            .unwrap();
        match skewed.check_invariant_inner_products(20, 7) {
            Err(EmcError::InvarianceFailure { violation, .. }) => assert!(violation > 1e-8),
            other => panic!("expected invariance failure, got {other:?}"),
        }
    }

    #[test]
    fn definition_round_trip_checks_structure_constants() {
        let def = LieGroupDef {
            name: "so2".into(),
            basis: vec![vec![vec![0.0, -1.0], vec![1.0, 0.0]]],
            matrix_dim: None,
            structure_constants: Some(vec![vec![vec![0.0]]]),
            inner_product: None,
            discrete_samples: vec![vec![vec![-1.0, 0.0], vec![0.0, -1.0]]],
            constraint: GroupConstraint::SpecialOrthogonal,
        };
        let g = LieGroup::from_def(&def).unwrap();
        assert_eq!(g.dim(), 1);
        assert_eq!(g.discrete_samples().len(), 1);
        let bad = LieGroupDef {
            structure_constants: Some(vec![vec![vec![1.0]]]),
            ..def
        };
        assert!(matches!(LieGroup::from_def(&bad), Err(EmcError::InvalidGroup(_))));
    }
}
