//! Position-basis operators and their commutators.
//!
//! The momentum `P` is `-i` times the central difference and the kinetic
//! operator `K` is the three-point Dirichlet stencil. They are independent
//! discretizations: `i[K, X] = 2P` holds exactly on the lattice, but
//! `K = P²` does not, so continuum identities mixing them hold only weakly
//! on smooth states with `O(h²)` error.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::grid::{Grid, GridId, GridKind};
use crate::linalg::{self, CMat};
use crate::State;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Dense self-adjoint matrix with a grid tag and a provenance label.
#[derive(Clone, Debug)]
pub struct HermitianOperator {
    matrix: CMat,
    grid: Option<GridId>,
    label: String,
}

impl HermitianOperator {
    /// Checks `‖M − M†‖_max ≤ 1e-12 ‖M‖_max`.
    pub fn new(matrix: CMat, grid: &Grid, label: impl Into<String>) -> Result<Self> {
        if matrix.nrows() != grid.n() || matrix.ncols() != grid.n() {
            return Err(LabError::GridMismatch(format!(
                "{}x{} matrix on a grid with {} points",
                matrix.nrows(),
                matrix.ncols(),
                grid.n()
            )));
        }
        Self::checked(matrix, Some(grid.id()), label.into())
    }

    /// Operator on an abstract finite-dimensional space with no grid.
    pub fn abstract_space(matrix: CMat, label: impl Into<String>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(LabError::InvalidArgument("matrix is not square".into()));
        }
        Self::checked(matrix, None, label.into())
    }

    fn checked(matrix: CMat, grid: Option<GridId>, label: String) -> Result<Self> {
        let residual = linalg::hermiticity_residual(&matrix);
        let scale = linalg::max_abs(&matrix);
        if residual > 1e-12 * scale || !residual.is_finite() {
            return Err(LabError::NotHermitian { label, residual });
        }
        Ok(Self { matrix, grid, label })
    }

    /// Symmetrizes an analytically Hermitian matrix that picked up roundoff.
    /// Refuses anything that is far from Hermitian.
    pub(crate) fn hermitized(matrix: CMat, grid: Option<GridId>, label: String) -> Result<Self> {
        let residual = linalg::hermiticity_residual(&matrix);
        let scale = linalg::max_abs(&matrix);
        if residual > 1e-8 * scale.max(f64::MIN_POSITIVE) || !residual.is_finite() {
            return Err(LabError::NotHermitian { label, residual });
        }
        Ok(Self {
            matrix: linalg::hermitian_part(&matrix),
            grid,
            label,
        })
    }

    pub(crate) fn from_real_symmetric(m: DMatrix<f64>, grid: &Grid, label: impl Into<String>) -> Self {
        debug_assert_eq!(m.nrows(), grid.n());
        Self {
            matrix: linalg::to_complex(&m),
            grid: Some(grid.id()),
            label: label.into(),
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn grid_id(&self) -> Option<GridId> {
        self.grid
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_real(&self) -> bool {
        linalg::is_real(&self.matrix)
    }

    pub fn real_part(&self) -> DMatrix<f64> {
        self.matrix.map(|z| z.re)
    }

    pub fn hermiticity_residual(&self) -> f64 {
        linalg::hermiticity_residual(&self.matrix)
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.matrix)
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> DVector<f64> {
        linalg::hermitian_eigenvalues(&self.matrix)
    }

    pub fn apply(&self, state: &State) -> State {
        &self.matrix * state
    }

    /// `⟨ψ, M ψ⟩` with the grid measure; the imaginary part is roundoff.
    pub fn form(&self, grid: &Grid, state: &State) -> Complex64 {
        grid.inner(state, &self.apply(state))
    }

    pub fn expectation(&self, grid: &Grid, state: &State) -> f64 {
        self.form(grid, state).re
    }

    pub fn ensure_compatible(&self, other: &HermitianOperator) -> Result<()> {
        if self.dim() != other.dim() || (self.grid.is_some() && other.grid.is_some() && self.grid != other.grid) {
            return Err(LabError::GridMismatch(format!(
                "'{}' and '{}' live on different grids",
                self.label, other.label
            )));
        }
        Ok(())
    }

    pub fn plus(&self, other: &HermitianOperator) -> Result<Self> {
        self.ensure_compatible(other)?;
        Ok(Self {
            matrix: &self.matrix + &other.matrix,
            grid: self.grid.or(other.grid),
            label: format!("{} + {}", self.label, other.label),
        })
    }

    pub fn minus(&self, other: &HermitianOperator) -> Result<Self> {
        self.ensure_compatible(other)?;
        Ok(Self {
            matrix: &self.matrix - &other.matrix,
            grid: self.grid.or(other.grid),
            label: format!("{} - {}", self.label, other.label),
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * c(factor),
            grid: self.grid,
            label: format!("{factor} * ({})", self.label),
        }
    }

    /// Principal submatrix on `indices`, as a real matrix when possible.
    pub fn compression(&self, indices: &[usize]) -> CMat {
        let k = indices.len();
        CMat::from_fn(k, k, |i, j| self.matrix[(indices[i], indices[j])])
    }
}

/// Tridiagonal Dirichlet stencil `(2δ_ij − δ_|i−j|,1)/h²`.
pub fn laplacian(grid: &Grid) -> HermitianOperator {
    let n = grid.n();
    let inv = 1.0 / (grid.h() * grid.h());
    let m = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0 * inv,
        1 => -inv,
        _ => 0.0,
    });
    HermitianOperator::from_real_symmetric(m, grid, "-laplacian")
}

/// Closed-form spectrum of [`laplacian`], ascending.
pub fn laplacian_spectrum(grid: &Grid) -> DVector<f64> {
    let n = grid.n();
    let h = grid.h();
    DVector::from_fn(n, |k, _| {
        2.0 / (h * h) * (1.0 - ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos())
    })
}

/// Orthonormal sine eigenbasis of [`laplacian`], columns ordered as
/// [`laplacian_spectrum`].
pub fn laplacian_eigenbasis(grid: &Grid) -> DMatrix<f64> {
    let n = grid.n();
    let scale = (2.0 / (n + 1) as f64).sqrt();
    let theta = std::f64::consts::PI / (n + 1) as f64;
    DMatrix::from_fn(n, n, |j, k| scale * (((j + 1) * (k + 1)) as f64 * theta).sin())
}

/// `−i` times the central difference `(f_{j+1} − f_{j−1}) / 2h`.
pub fn momentum(grid: &Grid) -> HermitianOperator {
    let n = grid.n();
    let a = 0.5 / grid.h();
    let m = CMat::from_fn(n, n, |i, j| {
        if j == i + 1 {
            -I * a
        } else if i == j + 1 {
            I * a
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    HermitianOperator {
        matrix: m,
        grid: Some(grid.id()),
        label: "p".into(),
    }
}

pub fn position(grid: &Grid) -> HermitianOperator {
    multiplication(grid, &DVector::from_column_slice(grid.points()), "x").expect("grid points are real")
}

/// `A = (XP + PX) / 2`.
pub fn dilation(grid: &Grid) -> HermitianOperator {
    symmetrized_momentum(grid, &DVector::from_column_slice(grid.points()), "A").scaled(0.5).with_label("A")
}

/// `FP + PF` for a real profile `F`: entries `(f_i + f_j) P_ij`.
pub fn symmetrized_momentum(grid: &Grid, profile: &DVector<f64>, label: &str) -> HermitianOperator {
    let p = momentum(grid);
    let n = grid.n();
    let m = CMat::from_fn(n, n, |i, j| p.matrix[(i, j)] * (profile[i] + profile[j]));
    HermitianOperator {
        matrix: m,
        grid: Some(grid.id()),
        label: label.into(),
    }
}

/// Morawetz multiplier `γ = g X P + P X g`.
pub fn morawetz_multiplier(grid: &Grid, g: &DVector<f64>) -> Result<HermitianOperator> {
    grid_len(grid, g.len())?;
    if let Some(bad) = g.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(LabError::InvalidArgument(format!("Morawetz profile must be positive, found {bad}")));
    }
    let profile = DVector::from_fn(grid.n(), |j, _| g[j] * grid.points()[j]);
    Ok(symmetrized_momentum(grid, &profile, "gamma"))
}

fn grid_len(grid: &Grid, len: usize) -> Result<()> {
    if len != grid.n() {
        return Err(LabError::GridMismatch(format!("{len} samples on a grid with {} points", grid.n())));
    }
    Ok(())
}

/// Diagonal operator with real samples.
pub fn multiplication(grid: &Grid, samples: &DVector<f64>, label: impl Into<String>) -> Result<HermitianOperator> {
    grid_len(grid, samples.len())?;
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(LabError::InvalidArgument("non-finite multiplication samples".into()));
    }
    let diag = samples.map(c);
    Ok(HermitianOperator {
        matrix: CMat::from_diagonal(&diag),
        grid: Some(grid.id()),
        label: label.into(),
    })
}

/// Diagonal operator from complex samples; any imaginary part is an error.
pub fn multiplication_complex(grid: &Grid, samples: &State, label: impl Into<String>) -> Result<HermitianOperator> {
    if let Some(z) = samples.iter().find(|z| z.im != 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "multiplication samples must be real, found {z}"
        )));
    }
    multiplication(grid, &samples.map(|z| z.re), label)
}

pub fn hamiltonian(grid: &Grid, potential: &DVector<f64>) -> Result<HermitianOperator> {
    let v = multiplication(grid, potential, "V")?;
    Ok(laplacian(grid).plus(&v)?.with_label("H"))
}

/// `P²`, the wide stencil `(−u_{j+2} + 2u_j − u_{j−2}) / 4h²` with corrections
/// in the first and last rows.
/// `P²` as the lattice square of the central difference. On radial grids
/// `u = rψ` is odd about the origin, so the first row keeps the term
/// `(Pu)₀ = u₁/(ih)` that truncation would drop.
fn momentum_squared(grid: &Grid) -> DMatrix<f64> {
    let n = grid.n();
    let a2 = 0.25 / (grid.h() * grid.h());
    let origin = match grid.kind() {
        GridKind::Line => a2,
        GridKind::Radial3d => 3.0 * a2,
    };
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            if i == 0 {
                origin
            } else if i == n - 1 {
                a2
            } else {
                2.0 * a2
            }
        } else if i.abs_diff(j) == 2 {
            -a2
        } else {
            0.0
        }
    })
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(LabError::InvalidArgument(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

fn conformal_combination(grid: &Grid, t: f64, quadratic: DMatrix<f64>, label: &str) -> HermitianOperator {
    let x = grid.points();
    let xx = symmetrized_momentum(grid, &DVector::from_column_slice(x), "XP+PX");
    let mut m = xx.matrix * c(-2.0 * t);
    for i in 0..grid.n() {
        m[(i, i)] += c(x[i] * x[i]);
    }
    m += linalg::to_complex(&quadratic) * c(4.0 * t * t);
    HermitianOperator {
        matrix: m,
        grid: Some(grid.id()),
        label: format!("{label}({t})"),
    }
}

/// `C(t) = (X − 2tP)†(X − 2tP)`, positive semidefinite by construction.
/// Exactly conserved by the discrete free flow up to corner terms.
pub fn conformal_factor_operator(grid: &Grid, t: f64) -> Result<HermitianOperator> {
    check_time(t)?;
    Ok(conformal_combination(grid, t, momentum_squared(grid), "C"))
}

/// `X² − 2t(XP + PX) + 4t²K`: the conformal factor with `P²` replaced by
/// the stencil `K`. Since `K − P² ⪰ 0` on the lattice this dominates
/// [`conformal_factor_operator`], and it is the form in which
/// `4t·i[K, V]` cancels against `4t·i[V, K]` exactly.
pub fn conformal_factor_kinetic(grid: &Grid, t: f64) -> Result<HermitianOperator> {
    check_time(t)?;
    Ok(conformal_combination(grid, t, laplacian(grid).real_part(), "C_K"))
}

/// `d/dt` of [`conformal_factor_operator`]: `−2(XP + PX) + 8tP²`.
pub fn conformal_factor_derivative(grid: &Grid, t: f64) -> Result<HermitianOperator> {
    check_time(t)?;
    let x = DVector::from_column_slice(grid.points());
    let m = symmetrized_momentum(grid, &x, "").matrix * c(-2.0) + linalg::to_complex(&momentum_squared(grid)) * c(8.0 * t);
    Ok(HermitianOperator { matrix: m, grid: Some(grid.id()), label: format!("dC/dt({t})") })
}

/// `d/dt` of [`conformal_factor_kinetic`]: `−2(XP + PX) + 8tK`.
pub fn conformal_factor_kinetic_derivative(grid: &Grid, t: f64) -> Result<HermitianOperator> {
    check_time(t)?;
    let x = DVector::from_column_slice(grid.points());
    let m = symmetrized_momentum(grid, &x, "").matrix * c(-2.0) + laplacian(grid).matrix * c(8.0 * t);
    Ok(HermitianOperator { matrix: m, grid: Some(grid.id()), label: format!("dC_K/dt({t})") })
}

/// `i(AB − BA)`.
pub fn commutator_i(a: &HermitianOperator, b: &HermitianOperator) -> Result<HermitianOperator> {
    a.ensure_compatible(b)?;
    let ab = linalg::cmul(&a.matrix, &b.matrix);
    let ba = linalg::cmul(&b.matrix, &a.matrix);
    let m = (ab - ba) * I;
    HermitianOperator::hermitized(m, a.grid.or(b.grid), format!("i[{}, {}]", a.label, b.label))
}

/// Heisenberg derivative `D_H B = i[H, B] + dB/dt`.
pub fn heisenberg_derivative(
    h: &HermitianOperator,
    b: &HermitianOperator,
    db_dt: &HermitianOperator,
) -> Result<HermitianOperator> {
    let comm = commutator_i(h, b)?;
    comm.ensure_compatible(db_dt)?;
    Ok(comm.plus(db_dt)?.with_label(format!("D_{} {}", h.label, b.label)))
}

/// `⟨φ, i[A, B] φ⟩ = −2 Im⟨Aφ, Bφ⟩`, from two matrix-vector products.
pub fn commutator_expectation(grid: &Grid, a: &HermitianOperator, b: &HermitianOperator, state: &State) -> f64 {
    -2.0 * grid.inner(&a.apply(state), &b.apply(state)).im
}

/// Lens phase `e^{i x² / 4t}`.
pub fn lens_phase(grid: &Grid, t: f64) -> State {
    grid.sample_complex(|x| Complex64::from_polar(1.0, x * x / (4.0 * t)))
}
