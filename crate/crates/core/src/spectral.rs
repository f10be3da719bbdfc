//! Eigendecomposition of `H`, bound/continuum classification, spectral
//! projectors, functional calculus and the genericity margin `δ*`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::grid::{Grid, GridId};
use crate::linalg::{self, CMat, RMat};
use crate::operators::HermitianOperator;
use crate::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralTag {
    Bound,
    Continuum,
    NearThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorKind {
    Continuous,
    Bound,
}

/// Eigenpairs of a Hermitian operator with per-eigenvalue tags.
///
/// Eigenvectors are kept as a real matrix whenever the input is real
/// symmetric, which is the case for every Hamiltonian assembled by this
/// crate; complex inputs go through the generic complex path.
#[derive(Debug, Clone)]
pub struct SpectralData {
    values: DVector<f64>,
    vectors: CMat,
    real_vectors: Option<RMat>,
    tags: Vec<SpectralTag>,
    threshold: f64,
    grid: Option<GridId>,
    scale: f64,
    residual: f64,
}

pub fn diagonalize(h: &HermitianOperator) -> Result<SpectralData> {
    let residual = h.hermiticity_residual();
    if residual > 1e-12 * h.max_abs() {
        return Err(LabError::NotHermitian { label: h.label().to_string(), residual });
    }
    let n = h.dim();
    let (values, vectors, real_vectors) = if h.is_real() {
        let eig = h.real_part().symmetric_eigen();
        let order = ascending_order(&eig.eigenvalues);
        let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
        let vecs = RMat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        (values, linalg::to_complex(&vecs), Some(vecs))
    } else {
        let eig = h.matrix().clone().symmetric_eigen();
        let order = ascending_order(&eig.eigenvalues);
        let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
        let vecs = CMat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        (values, vecs, None)
    };
    let mut spec = SpectralData::assemble(values, vectors, real_vectors, h.grid_id(), h.max_abs());
    let scaled_residual = {
        let hv = match &spec.real_vectors {
            Some(r) => linalg::to_complex(&(h.real_part() * r)),
            None => linalg::cmul(h.matrix(), &spec.vectors),
        };
        let ve = CMat::from_fn(n, n, |i, j| spec.vectors[(i, j)] * spec.values[j]);
        linalg::max_abs(&(hv - ve))
    };
    spec.residual = scaled_residual;
    if scaled_residual > 1e-10 * spec.scale.max(f64::MIN_POSITIVE) {
        return Err(LabError::Numerical(format!(
            "eigen-residual {scaled_residual:e} exceeds 1e-10 * {:e}",
            spec.scale
        )));
    }
    Ok(spec)
}

fn ascending_order(values: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// Half the smallest eigenvalue of the free Dirichlet stencil on `grid`.
pub fn default_threshold(grid: &Grid) -> f64 {
    let h = grid.h();
    let theta = std::f64::consts::PI / (grid.n() + 1) as f64;
    (1.0 - theta.cos()) / (h * h)
}

fn tag_for(e: f64, threshold: f64) -> SpectralTag {
    if e < -threshold {
        SpectralTag::Bound
    } else if e > threshold {
        SpectralTag::Continuum
    } else {
        SpectralTag::NearThreshold
    }
}

impl SpectralData {
    fn assemble(
        values: DVector<f64>,
        vectors: CMat,
        real_vectors: Option<RMat>,
        grid: Option<GridId>,
        scale: f64,
    ) -> Self {
        let tags = values.iter().map(|&e| tag_for(e, 0.0)).collect();
        Self { values, vectors, real_vectors, tags, threshold: 0.0, grid, scale, residual: 0.0 }
    }

    /// Builds spectral data directly from eigenpairs, e.g. for synthetic
    /// level systems. Columns of `vectors` must be orthonormal.
    pub fn from_eigenpairs(values: DVector<f64>, vectors: CMat) -> Result<Self> {
        let n = values.len();
        if vectors.nrows() != n || vectors.ncols() != n {
            return Err(LabError::InvalidArgument("eigenvector matrix has the wrong shape".into()));
        }
        let gram = linalg::cmul(&vectors.adjoint(), &vectors) - CMat::identity(n, n);
        if linalg::max_abs(&gram) > 1e-10 {
            return Err(LabError::Numerical("eigenvectors are not orthonormal".into()));
        }
        let real_vectors = linalg::is_real(&vectors).then(|| vectors.map(|z| z.re));
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&k| values[k]));
        let vectors = CMat::from_fn(n, n, |i, j| vectors[(i, order[j])]);
        let real_vectors = real_vectors.map(|r| RMat::from_fn(n, n, |i, j| r[(i, order[j])]));
        Ok(Self::assemble(values, vectors, real_vectors, None, scale))
    }

    /// Re-tags with threshold `ε_thr`: `E < −ε` bound, `|E| ≤ ε` near
    /// threshold, `E > ε` continuum.
    pub fn classify(mut self, threshold: f64) -> Result<Self> {
        if !(threshold >= 0.0) || !threshold.is_finite() {
            return Err(LabError::InvalidArgument(format!("threshold must be >= 0, got {threshold}")));
        }
        self.threshold = threshold;
        self.tags = self.values.iter().map(|&e| tag_for(e, threshold)).collect();
        Ok(self)
    }

    pub fn classify_default(self, grid: &Grid) -> Result<Self> {
        self.classify(default_threshold(grid))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn vectors(&self) -> &CMat {
        &self.vectors
    }

    pub fn real_vectors(&self) -> Option<&RMat> {
        self.real_vectors.as_ref()
    }

    pub fn tags(&self) -> &[SpectralTag] {
        &self.tags
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn grid_id(&self) -> Option<GridId> {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `‖H‖_max` of the diagonalized operator.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `‖HΦ − ΦE‖_max` measured at diagonalization.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn indices(&self, tag: SpectralTag) -> Vec<usize> {
        (0..self.dim()).filter(|&k| self.tags[k] == tag).collect()
    }

    pub fn count(&self, tag: SpectralTag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }

    pub fn continuum_indices(&self) -> Vec<usize> {
        self.indices(SpectralTag::Continuum)
    }

    pub fn has_near_threshold(&self) -> bool {
        self.count(SpectralTag::NearThreshold) > 0
    }

    pub fn continuum_values(&self) -> DVector<f64> {
        let idx = self.continuum_indices();
        DVector::from_iterator(idx.len(), idx.iter().map(|&k| self.values[k]))
    }

    /// Columns of the continuum eigenvectors: an orthonormal basis of Ran P_c.
    pub fn continuum_basis(&self) -> CMat {
        self.columns(&self.continuum_indices())
    }

    pub fn continuum_basis_real(&self) -> Option<RMat> {
        let idx = self.continuum_indices();
        self.real_vectors
            .as_ref()
            .map(|r| RMat::from_fn(r.nrows(), idx.len(), |i, j| r[(i, idx[j])]))
    }

    fn columns(&self, idx: &[usize]) -> CMat {
        CMat::from_fn(self.dim(), idx.len(), |i, j| self.vectors[(i, idx[j])])
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `‖Φ†Φ − I‖_max`.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.dim();
        let gram = match &self.real_vectors {
            Some(r) => linalg::to_complex(&(r.transpose() * r)),
            None => linalg::cmul(&self.vectors.adjoint(), &self.vectors),
        };
        linalg::max_abs(&(gram - CMat::identity(n, n)))
    }

    /// `Σ_{k ∈ idx} f(k) φ_k φ_k†`.
    fn sandwich(&self, idx: &[usize], f: impl Fn(usize) -> Complex64) -> CMat {
        match &self.real_vectors {
            Some(r) => {
                let cols = RMat::from_fn(r.nrows(), idx.len(), |i, j| r[(i, idx[j])]);
                let fv: Vec<Complex64> = idx.iter().map(|&k| f(k)).collect();
                let re = RMat::from_fn(cols.nrows(), idx.len(), |i, j| cols[(i, j)] * fv[j].re);
                let im = RMat::from_fn(cols.nrows(), idx.len(), |i, j| cols[(i, j)] * fv[j].im);
                let ct = cols.transpose();
                let re_part = re * &ct;
                if fv.iter().all(|z| z.im == 0.0) {
                    linalg::to_complex(&re_part)
                } else {
                    linalg::join(&re_part, &(im * ct))
                }
            }
            None => {
                let cols = self.columns(idx);
                let scaled = CMat::from_fn(cols.nrows(), idx.len(), |i, j| cols[(i, j)] * f(idx[j]));
                linalg::cmul(&scaled, &cols.adjoint())
            }
        }
    }

    /// Coordinates `Φ_S† ψ` of a state on the eigenvectors in `idx`.
    pub fn coefficients(&self, idx: &[usize], state: &State) -> State {
        match &self.real_vectors {
            Some(r) => {
                let cols = RMat::from_fn(r.nrows(), idx.len(), |i, j| r[(i, idx[j])]);
                linalg::real_tr_matvec(&cols, state)
            }
            None => self.columns(idx).ad_mul(state),
        }
    }

    /// `Σ_k c_k φ_k` over the eigenvectors in `idx`.
    pub fn synthesize(&self, idx: &[usize], coefficients: &State) -> State {
        match &self.real_vectors {
            Some(r) => {
                let cols = RMat::from_fn(r.nrows(), idx.len(), |i, j| r[(i, idx[j])]);
                linalg::real_matvec(&cols, coefficients)
            }
            None => self.columns(idx) * coefficients,
        }
    }

    /// `P_c ψ`.
    pub fn project_continuum(&self, state: &State) -> State {
        let idx = self.continuum_indices();
        self.synthesize(&idx, &self.coefficients(&idx, state))
    }

    /// `e^{−iHt} ψ`.
    pub fn evolve(&self, state: &State, t: f64) -> State {
        let all: Vec<usize> = (0..self.dim()).collect();
        let mut coeff = self.coefficients(&all, state);
        for (k, z) in coeff.iter_mut().enumerate() {
            *z *= Complex64::from_polar(1.0, -self.values[k] * t);
        }
        self.synthesize(&all, &coeff)
    }

    /// Mass of bound-tagged eigenvectors outside `|x| ≤ extent / 2`, maximized
    /// over bound states.
    pub fn bound_state_tail(&self, grid: &Grid) -> f64 {
        let half = grid.extent() / 2.0;
        self.indices(SpectralTag::Bound)
            .iter()
            .map(|&k| {
                let total: f64 = (0..self.dim()).map(|i| self.vectors[(i, k)].norm_sqr()).sum();
                let tail: f64 = grid
                    .points()
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| x.abs() > half)
                    .map(|(i, _)| self.vectors[(i, k)].norm_sqr())
                    .sum();
                tail / total
            })
            .fold(0.0, f64::max)
    }

    /// Multiplies eigenvector `k` by `phases[k]`; the spectral content is
    /// unchanged.
    pub fn rephased(&self, phases: &[Complex64]) -> Result<Self> {
        if phases.len() != self.dim() || phases.iter().any(|z| (z.norm() - 1.0).abs() > 1e-12) {
            return Err(LabError::InvalidArgument("need one unit phase per eigenvector".into()));
        }
        let vectors = CMat::from_fn(self.dim(), self.dim(), |i, j| self.vectors[(i, j)] * phases[j]);
        let real_vectors = linalg::is_real(&vectors).then(|| vectors.map(|z| z.re));
        Ok(Self { vectors, real_vectors, ..self.clone() })
    }
}

/// Orthogonal projector onto a spectral subspace.
#[derive(Debug, Clone)]
pub struct Projector {
    pub matrix: CMat,
    pub rank: usize,
    pub which: ProjectorKind,
}

impl Projector {
    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// `‖P² − P‖_max`.
    pub fn idempotency_defect(&self) -> f64 {
        linalg::max_abs(&(linalg::cmul(&self.matrix, &self.matrix) - &self.matrix))
    }
}

/// `P_c` sums continuum-tagged eigenprojections. `P_b = I − P_c` collects
/// bound and near-threshold states, so `P_c + P_b = I` always.
pub fn projector(spec: &SpectralData, which: ProjectorKind) -> Projector {
    let idx: Vec<usize> = match which {
        ProjectorKind::Continuous => spec.continuum_indices(),
        ProjectorKind::Bound => (0..spec.dim()).filter(|&k| spec.tags[k] != SpectralTag::Continuum).collect(),
    };
    Projector {
        matrix: spec.sandwich(&idx, |_| Complex64::new(1.0, 0.0)),
        rank: idx.len(),
        which,
    }
}

/// `f(H) = Φ f(E) Φ†` for real `f`.
pub fn function_of_h(spec: &SpectralData, f: impl Fn(f64) -> f64) -> Result<HermitianOperator> {
    let fv: Vec<f64> = spec.values.iter().map(|&e| f(e)).collect();
    if let Some(k) = fv.iter().position(|v| !v.is_finite()) {
        return Err(LabError::InvalidArgument(format!(
            "function is undefined at eigenvalue {}",
            spec.values[k]
        )));
    }
    let all: Vec<usize> = (0..spec.dim()).collect();
    let m = spec.sandwich(&all, |k| Complex64::new(fv[k], 0.0));
    HermitianOperator::hermitized(m, spec.grid, "f(H)".into())
}

/// `f(H)` for complex `f`, e.g. `e^{−iEt}`. The result is normal but not
/// Hermitian in general.
pub fn function_of_h_complex(spec: &SpectralData, f: impl Fn(f64) -> Complex64) -> Result<CMat> {
    if let Some(e) = spec.values.iter().find(|&&e| !f(e).is_finite()) {
        return Err(LabError::InvalidArgument(format!("function is undefined at eigenvalue {e}")));
    }
    let all: Vec<usize> = (0..spec.dim()).collect();
    Ok(spec.sandwich(&all, |k| f(spec.values[k])))
}

/// `δ* = min_{u ∈ Ran P_c} ⟨u, H u⟩ / ⟨u, K u⟩`, the smallest generalized
/// eigenvalue of `(Φ_c† H Φ_c, Φ_c† K Φ_c)`.
pub fn genericity_margin(spec: &SpectralData, laplacian: &HermitianOperator) -> Result<f64> {
    if laplacian.dim() != spec.dim() {
        return Err(LabError::GridMismatch("laplacian and spectrum have different sizes".into()));
    }
    let idx = spec.continuum_indices();
    if idx.is_empty() {
        return Err(LabError::InvalidArgument("Ran P_c is empty".into()));
    }
    let m = idx.len();
    let e: Vec<f64> = idx.iter().map(|&k| spec.values[k]).collect();
    if let (Some(basis), true) = (spec.continuum_basis_real(), laplacian.is_real()) {
        let lc = basis.transpose() * laplacian.real_part() * &basis;
        let lc = (&lc + lc.transpose()) * 0.5;
        let chol = lc
            .cholesky()
            .ok_or_else(|| LabError::Numerical("restricted laplacian is singular".into()))?;
        // L^{-1} diag(E) L^{-T}
        let linv = chol.l().try_inverse().ok_or_else(|| LabError::Numerical("singular Cholesky factor".into()))?;
        let scaled = DMatrix::from_fn(m, m, |i, j| linv[(i, j)] * e[j]);
        let mut reduced = scaled * linv.transpose();
        reduced = (&reduced + reduced.transpose()) * 0.5;
        Ok(reduced.symmetric_eigenvalues().min())
    } else {
        let basis = spec.continuum_basis();
        let lc = linalg::hermitian_part(&linalg::cmul(&basis.adjoint(), &linalg::cmul(laplacian.matrix(), &basis)));
        let chol = lc
            .cholesky()
            .ok_or_else(|| LabError::Numerical("restricted laplacian is singular".into()))?;
        let linv = chol.l().try_inverse().ok_or_else(|| LabError::Numerical("singular Cholesky factor".into()))?;
        let scaled = CMat::from_fn(m, m, |i, j| linv[(i, j)] * e[j]);
        let reduced = linalg::hermitian_part(&linalg::cmul(&scaled, &linv.adjoint()));
        Ok(linalg::hermitian_eigenvalues(&reduced)[0])
    }
}

/// Number of eigenvalues below `x` of the real symmetric tridiagonal matrix
/// with the given diagonal and off-diagonal, by Sturm sequence.
pub fn tridiagonal_count_below(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for (j, &d) in diag.iter().enumerate() {
        let b2 = if j == 0 { 0.0 } else { off[j - 1] * off[j - 1] };
        q = d - x - if j == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (d.abs() + x.abs()).max(1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{hamiltonian, laplacian, laplacian_spectrum, multiplication};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn diagonal_and_swap_examples() {
        let g = Grid::line(8, 2.0).unwrap();
        let d = DVector::from_vec(vec![3.0, -1.0, 2.0, 0.5, 7.0, -4.0, 1.0, 0.0]);
        let spec = diagonalize(&multiplication(&g, &d, "d").unwrap()).unwrap();
        let mut sorted = d.as_slice().to_vec();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(spec.values().as_slice(), sorted.as_slice());
        for j in 0..8 {
            let col = spec.vectors().column(j);
            assert_eq!(col.iter().filter(|z| z.norm() > 0.5).count(), 1);
        }

        let swap = CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let spec = diagonalize(&HermitianOperator::abstract_space(swap, "swap").unwrap()).unwrap();
        assert!((spec.values()[0] + 1.0).abs() < 1e-14 && (spec.values()[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn free_laplacian_matches_closed_form() {
        let g = Grid::line(128, 10.0).unwrap();
        let spec = diagonalize(&laplacian(&g)).unwrap();
        for (a, b) in spec.values().iter().zip(laplacian_spectrum(&g).iter()) {
            assert!((a - b).abs() <= 1e-10 * b);
        }
        assert!(spec.orthonormality_defect() < 1e-10);
        assert!(spec.residual() <= 1e-10 * spec.scale());
    }

    #[test]
    fn complex_input_path() {
        let g = Grid::line(20, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw = CMat::from_fn(20, 20, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let h = HermitianOperator::new(linalg::hermitian_part(&raw), &g, "random").unwrap();
        let spec = diagonalize(&h).unwrap();
        assert!(spec.real_vectors().is_none());
        assert!(spec.orthonormality_defect() < 1e-10);
        let back = function_of_h(&spec, |e| e).unwrap();
        assert!(linalg::max_abs(&(back.matrix() - h.matrix())) < 1e-9 * h.max_abs());
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(2.0), c(0.0)]);
        assert!(HermitianOperator::abstract_space(m, "bad").is_err());
    }

    #[test]
    fn classification_and_projectors() {
        let g = Grid::line(256, 20.0).unwrap();
        let free = diagonalize(&laplacian(&g)).unwrap().classify_default(&g).unwrap();
        assert_eq!(free.count(SpectralTag::Bound), 0);
        let pc = projector(&free, ProjectorKind::Continuous);
        assert!(linalg::max_abs(&(pc.matrix.clone() - CMat::identity(256, 256))) < 1e-10);

        let v = g.sample(|x| -8.0 * (-x * x).exp());
        let h = hamiltonian(&g, &v).unwrap();
        let spec = diagonalize(&h).unwrap().classify_default(&g).unwrap();
        let bound = spec.count(SpectralTag::Bound);
        assert!(bound >= 1);
        let diag: Vec<f64> = (0..256).map(|i| h.matrix()[(i, i)].re).collect();
        let off: Vec<f64> = (0..255).map(|i| h.matrix()[(i, i + 1)].re).collect();
        assert_eq!(tridiagonal_count_below(&diag, &off, -spec.threshold()), bound);
        assert!(spec.bound_state_tail(&g) <= 1e-6);

        let pc = projector(&spec, ProjectorKind::Continuous);
        let pb = projector(&spec, ProjectorKind::Bound);
        assert_eq!(pb.rank, bound);
        assert!((pb.trace() - bound as f64).abs() < 0.5);
        assert!(pc.idempotency_defect() < 1e-10);
        assert!(linalg::hermiticity_residual(&pc.matrix) < 1e-12);
        assert!(linalg::max_abs(&(&pc.matrix + &pb.matrix - CMat::identity(256, 256))) < 1e-10);
        assert!(linalg::max_abs(&linalg::cmul(&pc.matrix, &pb.matrix)) < 1e-10);

        // Shifting H by c moves the tags with it.
        let shifted = hamiltonian(&g, &v.add_scalar(100.0)).unwrap();
        let spec2 = diagonalize(&shifted).unwrap().classify_default(&g).unwrap();
        assert_eq!(spec2.count(SpectralTag::Bound), 0);
    }

    #[test]
    fn functional_calculus() {
        let g = Grid::line(64, 6.0).unwrap();
        let h = hamiltonian(&g, &g.sample(|x| (-x * x).exp())).unwrap();
        let spec = diagonalize(&h).unwrap();
        let one = function_of_h(&spec, |_| 1.0).unwrap();
        assert!(linalg::max_abs(&(one.matrix() - CMat::identity(64, 64))) < 1e-10);
        let back = function_of_h(&spec, |e| e).unwrap();
        assert!(linalg::max_abs(&(back.matrix() - h.matrix())) < 1e-9 * h.max_abs());
        let u = function_of_h_complex(&spec, |e| Complex64::from_polar(1.0, -e * 0.7)).unwrap();
        assert!(linalg::max_abs(&(linalg::cmul(&u.adjoint(), &u) - CMat::identity(64, 64))) < 1e-10);
        assert!(function_of_h(&spec, |e| 1.0 / (e - spec.values()[3])).is_err());
        let psi = g.sample_complex(|x| c((-x * x).exp()));
        let direct = &u * &psi;
        assert!((spec.evolve(&psi, 0.7) - direct).norm() < 1e-10);
    }

    #[test]
    fn genericity_margin_examples() {
        let g = Grid::line(96, 10.0).unwrap();
        let k = laplacian(&g);
        let free = diagonalize(&k).unwrap().classify_default(&g).unwrap();
        assert!((genericity_margin(&free, &k).unwrap() - 1.0).abs() < 1e-10);

        let bump = diagonalize(&hamiltonian(&g, &g.sample(|x| 2.0 * (-x * x).exp())).unwrap())
            .unwrap()
            .classify_default(&g)
            .unwrap();
        let delta = genericity_margin(&bump, &k).unwrap();
        assert!(delta >= 1.0 - 1e-8);
        // Rayleigh quotients of random elements of Ran P_c stay above δ*.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = hamiltonian(&g, &g.sample(|x| 2.0 * (-x * x).exp())).unwrap();
        for _ in 0..20 {
            let raw = State::from_fn(96, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let u = bump.project_continuum(&raw);
            let q = h.expectation(&g, &u) / k.expectation(&g, &u);
            assert!(q >= delta - 1e-10);
        }

        let v = g.sample(|x| -3.0 * (-x * x).exp() + 2.0 * (-4.0 * (x.abs() - 2.5).powi(2)).exp());
        let well = diagonalize(&hamiltonian(&g, &v).unwrap()).unwrap().classify_default(&g).unwrap();
        assert!(well.count(SpectralTag::Bound) >= 1);
        let d_well = genericity_margin(&well, &k).unwrap();
        assert!(d_well > 0.0 && d_well < 1.0, "{d_well}");

        let phases: Vec<Complex64> = (0..96).map(|j| Complex64::from_polar(1.0, 0.37 * j as f64)).collect();
        let rotated = well.rephased(&phases).unwrap();
        assert!((genericity_margin(&rotated, &k).unwrap() - d_well).abs() < 1e-8);
    }

    #[test]
    fn sturm_count_on_known_spectrum() {
        let g = Grid::line(50, 5.0).unwrap();
        let spectrum = laplacian_spectrum(&g);
        let inv = 1.0 / (g.h() * g.h());
        let diag = vec![2.0 * inv; 50];
        let off = vec![-inv; 49];
        for k in [0usize, 1, 17, 49] {
            let x = spectrum[k] + 1e-6;
            assert_eq!(tridiagonal_count_below(&diag, &off, x), k + 1);
        }
    }
}
