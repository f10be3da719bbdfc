//! The adaptor operator
//! `B = ∫_0^T e^{iHs} P_c (−Q) P_c e^{−iHs} ds`, built in the continuum
//! eigenbasis, and the weighted norms used to measure local decay.
//!
//! In the eigenbasis `B̃_mn = −Q̃_mn κ(E_m − E_n, T)` with
//! `κ(ω, T) = (e^{iωT} − 1)/(iω)` and `κ(0, T) = T`. Differentiating under
//! the integral gives the exact identity
//! `i[H, B] = P_c Q P_c + R(T)`, `R(T) = e^{iHT} P_c (−Q) P_c e^{−iHT}`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::grid::Grid;
use crate::linalg::{self, CMat, RMat};
use crate::operators::{self, HermitianOperator};
use crate::potential::{negative_part, positive_part, StaticPotential};
use crate::series::ObservableSeries;
use crate::spectral::SpectralData;
use crate::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QPurpose {
    /// `Q = −[4x·∇V + 4V]_+`.
    Conformal,
    /// `Q = 2V + x·∇V`, so that `i[H, A + B] = 2H` on Ran P_c.
    Dilation,
    /// `−Q = 4[V]_+ + [x·∇V]_+`.
    Alternative,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QSelection {
    pub purpose: QPurpose,
    pub samples: DVector<f64>,
    pub provenance: String,
}

impl QSelection {
    pub fn is_nonpositive(&self) -> bool {
        self.samples.iter().all(|&q| q <= 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, q| m.max(q.abs()))
    }

    /// The same profile with the opposite sign, tagged as custom.
    pub fn negated(&self) -> QSelection {
        QSelection {
            purpose: QPurpose::Custom,
            samples: -&self.samples,
            provenance: format!("-({})", self.provenance),
        }
    }
}

pub fn conformal_q(potential: &StaticPotential, grid: &Grid) -> QSelection {
    QSelection {
        purpose: QPurpose::Conformal,
        samples: grid.sample(|x| -positive_part(4.0 * potential.x_gradient(x) + 4.0 * potential.value(x))),
        provenance: "-[4 x.grad V + 4 V]_+".into(),
    }
}

pub fn dilation_q(potential: &StaticPotential, grid: &Grid) -> QSelection {
    QSelection {
        purpose: QPurpose::Dilation,
        samples: grid.sample(|x| 2.0 * potential.value(x) + potential.x_gradient(x)),
        provenance: "2 V + x.grad V".into(),
    }
}

pub fn alternative_q(potential: &StaticPotential, grid: &Grid) -> QSelection {
    QSelection {
        purpose: QPurpose::Alternative,
        samples: grid.sample(|x| -(4.0 * positive_part(potential.value(x)) + positive_part(potential.x_gradient(x)))),
        provenance: "-(4 [V]_+ + [x.grad V]_+)".into(),
    }
}

/// Morawetz choice `Q = −[i[V, γ]]_-`, with `i[V, γ] = −2 g x·∇V` for the
/// multiplier `γ = gXP + PXg`. With this sign `i[H, B] = Q` cancels the
/// negative part: `[i[V, γ]]_- + i[H, B] = 0` up to `R(T)`.
pub fn morawetz_q(potential: &StaticPotential, grid: &Grid, g: &DVector<f64>) -> Result<QSelection> {
    if g.len() != grid.n() {
        return Err(LabError::GridMismatch("profile length differs from grid size".into()));
    }
    let xdv = potential.x_gradient_samples(grid);
    Ok(QSelection {
        purpose: QPurpose::Custom,
        samples: DVector::from_fn(grid.n(), |j, _| -negative_part(-2.0 * g[j] * xdv[j])),
        provenance: "-[i[V, gamma]]_-".into(),
    })
}

pub fn custom_q(samples: DVector<f64>, provenance: impl Into<String>) -> Result<QSelection> {
    if samples.iter().any(|q| !q.is_finite()) {
        return Err(LabError::InvalidArgument("Q samples must be finite".into()));
    }
    Ok(QSelection { purpose: QPurpose::Custom, samples, provenance: provenance.into() })
}

/// `κ(ω, T) = ∫_0^T e^{iωs} ds`.
pub fn kappa(omega: f64, t: f64) -> Complex64 {
    let theta = omega * t;
    if theta.abs() < 1e-4 {
        // Taylor series in θ, accurate to roundoff for |θ| < 1e-4.
        let th2 = theta * theta;
        let re = t * (1.0 - th2 / 6.0 + th2 * th2 / 120.0);
        let im = t * theta * (0.5 - th2 / 24.0 + th2 * th2 / 720.0);
        Complex64::new(re, im)
    } else {
        Complex64::new(theta.sin() / omega, (1.0 - theta.cos()) / omega)
    }
}

fn continuum_energies(spec: &SpectralData) -> Vec<f64> {
    spec.continuum_values().iter().copied().collect()
}

fn real_continuum_basis(spec: &SpectralData) -> Result<RMat> {
    spec.continuum_basis_real()
        .ok_or_else(|| LabError::Unsupported("adaptor construction needs a real eigenbasis".into()))
}

/// `Φ_c^T diag(q) Φ_c`.
fn reduce_profile(basis: &RMat, q: &DVector<f64>) -> RMat {
    let scaled = RMat::from_fn(basis.nrows(), basis.ncols(), |i, j| basis[(i, j)] * q[i]);
    let m = scaled.transpose() * basis;
    (&m + m.transpose()) * 0.5
}

/// `D_T X D_T†` with `D_T = diag(e^{i E T})`, for real symmetric `X`.
fn conjugate_by_phases(x: &RMat, energies: &[f64], t: f64) -> CMat {
    CMat::from_fn(x.nrows(), x.ncols(), |m, n| {
        Complex64::from_polar(1.0, (energies[m] - energies[n]) * t) * x[(m, n)]
    })
}

/// Upper-triangular factor `R` of the QR decomposition of `W_σ Φ_c`, so
/// that `‖W_σ Φ_c X Φ_c^T W_σ‖ = ‖R X R^T‖` for any continuum matrix `X`.
#[derive(Debug, Clone)]
pub struct WeightedBasis {
    sigma: f64,
    factor: RMat,
    energies: Vec<f64>,
}

impl WeightedBasis {
    pub fn new(spec: &SpectralData, grid: &Grid, sigma: f64) -> Result<Self> {
        let basis = real_continuum_basis(spec)?;
        if basis.nrows() != grid.n() {
            return Err(LabError::GridMismatch("spectrum and grid sizes differ".into()));
        }
        let w = grid.weight(sigma)?;
        let weighted = RMat::from_fn(basis.nrows(), basis.ncols(), |i, j| basis[(i, j)] * w.samples[i]);
        let factor = weighted.qr().r();
        Ok(Self { sigma, factor, energies: continuum_energies(spec) })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `‖R X R^T‖` for a continuum-basis operator given by its action.
    pub fn sandwich_norm(
        &self,
        apply: impl Fn(&State) -> State,
        apply_adjoint: impl Fn(&State) -> State,
    ) -> f64 {
        let r = &self.factor;
        linalg::operator_norm(
            r.nrows(),
            |v| linalg::real_matvec(r, &apply(&linalg::real_tr_matvec(r, v))),
            |v| linalg::real_matvec(r, &apply_adjoint(&linalg::real_tr_matvec(r, v))),
        )
    }

    /// `‖W_σ e^{−iHt} P_c W_σ‖`.
    pub fn propagator_norm(&self, t: f64) -> f64 {
        let phase: Vec<Complex64> = self.energies.iter().map(|&e| Complex64::from_polar(1.0, -e * t)).collect();
        self.sandwich_norm(
            |v| v.component_mul(&State::from_column_slice(&phase)),
            |v| v.component_mul(&State::from_iterator(phase.len(), phase.iter().map(|z| z.conj()))),
        )
    }
}

/// `‖⟨x⟩^{−σ} e^{−iHt} P_c ⟨x⟩^{−σ}‖`.
pub fn weighted_propagator_norm(spec: &SpectralData, grid: &Grid, sigma: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(LabError::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    Ok(WeightedBasis::new(spec, grid, sigma)?.propagator_norm(t))
}

/// The constructed `B` with its ingredients and diagnostics.
#[derive(Debug, Clone)]
pub struct AdaptorOperator {
    operator: HermitianOperator,
    reduced: CMat,
    q: QSelection,
    q_reduced: RMat,
    energies: Vec<f64>,
    horizon: f64,
    sigma: f64,
    residual_weighted: f64,
    norm_bound: f64,
    warnings: Vec<String>,
}

/// Builds `B` with horizon `T_B = horizon`. The weighted residual is
/// `‖⟨x⟩^{−σ} R(T_B) ⟨x⟩^{−σ}‖`.
pub fn build_adaptor(
    spec: &SpectralData,
    grid: &Grid,
    q: &QSelection,
    horizon: f64,
    sigma: f64,
) -> Result<AdaptorOperator> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(LabError::InvalidArgument(format!("adaptor horizon must be >= 0, got {horizon}")));
    }
    if q.samples.len() != spec.dim() || grid.n() != spec.dim() {
        return Err(LabError::GridMismatch("Q, spectrum and grid sizes differ".into()));
    }
    let basis = real_continuum_basis(spec)?;
    let energies = continuum_energies(spec);
    let m = energies.len();
    let q_reduced = reduce_profile(&basis, &q.samples);
    let mut re = RMat::zeros(m, m);
    let mut im = RMat::zeros(m, m);
    for j in 0..m {
        for i in 0..m {
            let k = kappa(energies[i] - energies[j], horizon);
            re[(i, j)] = -q_reduced[(i, j)] * k.re;
            im[(i, j)] = -q_reduced[(i, j)] * k.im;
        }
    }
    let bt = basis.transpose();
    let full_re = &basis * (&re * &bt);
    let full_im = &basis * (&im * &bt);
    let operator = HermitianOperator::hermitized(
        linalg::join(&full_re, &full_im),
        Some(grid.id()),
        format!("B[{}; T={horizon}]", q.provenance),
    )?;
    let reduced = linalg::join(&re, &im);

    let mut warnings = Vec::new();
    if horizon > grid.operator_horizon() {
        warnings.push(format!(
            "adaptor horizon {horizon} exceeds the box validity horizon {:.3}",
            grid.operator_horizon()
        ));
    }
    let weighted = WeightedBasis::new(spec, grid, sigma)?;
    let mut adaptor = AdaptorOperator {
        operator,
        reduced,
        q: q.clone(),
        q_reduced,
        energies,
        horizon,
        sigma,
        residual_weighted: 0.0,
        norm_bound: 0.0,
        warnings,
    };
    adaptor.residual_weighted = adaptor.residual_at(&weighted, horizon);
    let red = &adaptor.reduced;
    adaptor.norm_bound = linalg::spectral_norm(red);
    Ok(adaptor)
}

/// Default horizon: half the box validity horizon.
pub fn default_horizon(grid: &Grid) -> f64 {
    0.5 * grid.operator_horizon()
}

impl AdaptorOperator {
    pub fn operator(&self) -> &HermitianOperator {
        &self.operator
    }

    pub fn matrix(&self) -> &CMat {
        self.operator.matrix()
    }

    /// `B` in the continuum eigenbasis.
    pub fn reduced(&self) -> &CMat {
        &self.reduced
    }

    pub fn q(&self) -> &QSelection {
        &self.q
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn residual_weighted(&self) -> f64 {
        self.residual_weighted
    }

    /// `‖B‖`.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `‖W R(t) W‖` for the same `Q`, at any horizon `t`.
    pub fn residual_at(&self, weighted: &WeightedBasis, t: f64) -> f64 {
        let r = conjugate_by_phases(&self.q_reduced, &self.energies, t);
        let ra = r.adjoint();
        weighted.sandwich_norm(|v| -(&r * v), |v| -(&ra * v))
    }

    fn expand(&self, spec: &SpectralData, reduced: &CMat) -> Result<CMat> {
        let basis = real_continuum_basis(spec)?;
        if basis.ncols() != reduced.nrows() {
            return Err(LabError::GridMismatch("spectrum does not match the adaptor".into()));
        }
        Ok(linalg::expand(reduced, &basis))
    }

    /// `P_c Q P_c` in the position basis.
    pub fn projected_q(&self, spec: &SpectralData) -> Result<CMat> {
        self.expand(spec, &linalg::to_complex(&self.q_reduced))
    }

    /// `R(T_B) = e^{iHT} P_c (−Q) P_c e^{−iHT}` in the position basis.
    pub fn remainder(&self, spec: &SpectralData) -> Result<CMat> {
        let r = conjugate_by_phases(&self.q_reduced, &self.energies, self.horizon);
        self.expand(spec, &(-r))
    }

    /// `‖i[H, B] − P_cQP_c − R(T_B)‖_max / ‖Q‖_max`, with the commutator
    /// taken against the position-basis matrix of `H`.
    pub fn commutator_closure(&self, h: &HermitianOperator, spec: &SpectralData) -> Result<f64> {
        let b = self.matrix();
        if h.dim() != b.nrows() {
            return Err(LabError::GridMismatch("H and B sizes differ".into()));
        }
        let bw = linalg::bandwidth(h.matrix());
        let hb = if bw * 8 < h.dim() { linalg::banded_mul(h.matrix(), bw, b) } else { linalg::cmul(h.matrix(), b) };
        let comm = (&hb - hb.adjoint()) * Complex64::new(0.0, 1.0);
        let target = self.projected_q(spec)? + self.remainder(spec)?;
        let scale = self.q.max_abs();
        let diff = linalg::max_abs(&(comm - target));
        Ok(if scale > 0.0 { diff / scale } else { diff })
    }

    /// `‖(I − P_c) B‖_max`.
    pub fn support_defect(&self, spec: &SpectralData) -> f64 {
        let mut in_continuum = vec![false; spec.dim()];
        for k in spec.continuum_indices() {
            in_continuum[k] = true;
        }
        let bound: Vec<usize> = (0..spec.dim()).filter(|&k| !in_continuum[k]).collect();
        if bound.is_empty() {
            return 0.0;
        }
        let b = self.matrix();
        let mut worst: f64 = 0.0;
        for j in 0..b.ncols() {
            let col = b.column(j).into_owned();
            let coeff = spec.coefficients(&bound, &col);
            let back = spec.synthesize(&bound, &coeff);
            worst = worst.max(back.iter().fold(0.0f64, |m, z| m.max(z.norm())));
        }
        worst
    }

    /// Smallest eigenvalue of `B` (zero is included when `P_b ≠ 0`).
    pub fn min_eigenvalue(&self, spec: &SpectralData) -> f64 {
        let reduced_min = if self.reduced.nrows() == 0 {
            0.0
        } else {
            linalg::hermitian_eigenvalues(&self.reduced)[0]
        };
        if self.reduced.nrows() < spec.dim() {
            reduced_min.min(0.0)
        } else {
            reduced_min
        }
    }

    /// `⟨φ, R(T_B) φ⟩` from continuum coordinates `c = Φ_c^T φ`.
    pub fn remainder_form(&self, coefficients: &State, measure: f64) -> Complex64 {
        let r = conjugate_by_phases(&self.q_reduced, &self.energies, self.horizon);
        -coefficients.dotc(&(&r * coefficients)) * measure
    }

    /// `⟨φ, P_c Q P_c φ⟩` from continuum coordinates.
    pub fn projected_q_form(&self, coefficients: &State, measure: f64) -> f64 {
        let q = linalg::to_complex(&self.q_reduced);
        coefficients.dotc(&(&q * coefficients)).re * measure
    }

    /// `⟨φ, B φ⟩` from continuum coordinates `c = Φ_c^T φ`.
    pub fn expectation_reduced(&self, coefficients: &State, measure: f64) -> Complex64 {
        coefficients.dotc(&(&self.reduced * coefficients)) * measure
    }
}

/// `∫_0^T e^{iHs} P_c(−Q)P_c e^{−iHs} ds` by composite three-point
/// Gauss-Legendre on dense matrix exponentials. Independent of the
/// eigenbasis formula; only meant for small systems.
pub fn quadrature_adaptor(
    h: &HermitianOperator,
    spec: &SpectralData,
    q: &QSelection,
    horizon: f64,
    panels: usize,
) -> Result<CMat> {
    let n = h.dim();
    if n > 64 {
        return Err(LabError::InvalidArgument(format!("time quadrature is for small systems, got n = {n}")));
    }
    if q.samples.len() != n || spec.dim() != n || panels == 0 {
        return Err(LabError::GridMismatch("H, spectrum and Q sizes differ".into()));
    }
    let pc = crate::spectral::projector(spec, crate::spectral::ProjectorKind::Continuous).matrix;
    let mq = &pc * CMat::from_diagonal(&q.samples.map(|x| Complex64::new(-x, 0.0))) * &pc;
    let nodes = [-(0.6f64).sqrt(), 0.0, 0.6f64.sqrt()];
    let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let ds = horizon / panels as f64;
    let mut acc = CMat::zeros(n, n);
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * ds;
        for (x, w) in nodes.iter().zip(weights) {
            let s = mid + 0.5 * ds * x;
            let u = (h.matrix() * Complex64::new(0.0, s)).exp();
            acc += (&u * &mq * u.adjoint()) * Complex64::new(0.5 * ds * w, 0.0);
        }
    }
    Ok(acc)
}

/// `Ã = A + B(dilation Q)` and the adaptor it contains.
pub fn adapted_dilation(
    spec: &SpectralData,
    grid: &Grid,
    potential: &StaticPotential,
    horizon: f64,
    sigma: f64,
) -> Result<(HermitianOperator, AdaptorOperator)> {
    let b = build_adaptor(spec, grid, &dilation_q(potential, grid), horizon, sigma)?;
    let a = operators::dilation(grid).plus(b.operator())?.with_label("A + B");
    Ok((a, b))
}

/// `⟨φ(t), B φ(t)⟩` with `φ(t) = e^{−iHt} φ`, for `φ ∈ Ran P_c`.
pub fn adaptor_expectation_series(
    adaptor: &AdaptorOperator,
    spec: &SpectralData,
    grid: &Grid,
    phi: &State,
    times: &[f64],
) -> Result<ObservableSeries> {
    let idx = spec.continuum_indices();
    let coeff = spec.coefficients(&idx, phi);
    let leak = (phi - spec.synthesize(&idx, &coeff)).norm();
    if leak > 1e-8 * phi.norm() {
        return Err(LabError::InvalidArgument(format!(
            "state is not in Ran P_c (bound component {leak:e})"
        )));
    }
    let mut values = Vec::with_capacity(times.len());
    let mut worst_im: f64 = 0.0;
    for &t in times {
        let c = State::from_fn(idx.len(), |k, _| coeff[k] * Complex64::from_polar(1.0, -adaptor.energies[k] * t));
        let z = adaptor.expectation_reduced(&c, grid.measure());
        worst_im = worst_im.max(z.im.abs());
        values.push(z.re);
    }
    Ok(ObservableSeries::new("<B>", times.to_vec(), values)?.with_imaginary(worst_im))
}
