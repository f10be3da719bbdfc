//! Propagation observables and the estimate suites evaluated along
//! computed trajectories.
//!
//! Time derivatives of quadratic forms are always centered differences of
//! the forms themselves; matrices are never differentiated numerically.
//! Forms that only involve `X`, `P`, the stencil `K` and multiplication
//! operators are evaluated with O(n) stencils rather than dense matrices.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::adaptor::AdaptorOperator;
use crate::error::{LabError, Result};
use crate::grid::{Grid, GridKind};
use crate::operators::{self, HermitianOperator};
use crate::potential::{StaticPotential, TimeDependentPotential};
use crate::propagator::Trajectory;
use crate::series::{self, LinearFit, ObservableSeries};
use crate::spectral::SpectralData;
use crate::State;

pub mod adaptor_suite;
pub mod conformal;
pub mod identities;
pub mod morawetz;
pub mod prob;
pub mod report;
pub mod timedep;

pub use report::{Check, EstimateReport, RateReport};

/// Which discrete conformal factor stands in for `|x − 2pt|²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConformalFactor {
    /// `(X − 2tP)†(X − 2tP)`: conserved exactly by the free lattice flow.
    Literal,
    /// `X² − 2t(XP + PX) + 4t²K`: `4t·i[K, V]` cancels exactly against it.
    Kinetic,
}

/// The ingredients a suite may need. Only `grid` and `potential` are mandatory.
#[derive(Debug, Clone, Copy)]
pub struct Setting<'a> {
    pub grid: &'a Grid,
    pub potential: &'a StaticPotential,
    pub time_dependent: Option<&'a TimeDependentPotential>,
    pub spectrum: Option<&'a SpectralData>,
    pub adaptor: Option<&'a AdaptorOperator>,
}

impl<'a> Setting<'a> {
    pub fn new(grid: &'a Grid, potential: &'a StaticPotential) -> Self {
        Self { grid, potential, time_dependent: None, spectrum: None, adaptor: None }
    }

    pub fn with_time_dependent(mut self, w: Option<&'a TimeDependentPotential>) -> Self {
        self.time_dependent = w;
        self
    }

    pub fn with_spectrum(mut self, spec: &'a SpectralData) -> Self {
        self.spectrum = Some(spec);
        self
    }

    pub fn with_adaptor(mut self, adaptor: &'a AdaptorOperator) -> Self {
        self.adaptor = Some(adaptor);
        self
    }

    pub fn v_samples(&self) -> DVector<f64> {
        self.potential.samples(self.grid)
    }

    pub fn w_samples(&self, t: f64) -> DVector<f64> {
        match self.time_dependent {
            Some(w) => w.samples(self.grid, t),
            None => DVector::zeros(self.grid.n()),
        }
    }

    /// `K + V + W(t)` as a dense matrix.
    pub fn hamiltonian_at(&self, t: f64) -> Result<HermitianOperator> {
        operators::hamiltonian(self.grid, &(self.v_samples() + self.w_samples(t)))
    }

    pub(crate) fn spectrum(&self) -> Result<&'a SpectralData> {
        self.spectrum.ok_or_else(|| LabError::InvalidArgument("this evaluation needs spectral data".into()))
    }

    /// `⟨ψ, B_V ψ⟩`, zero without an adaptor.
    pub(crate) fn adaptor_form(&self, psi: &State) -> f64 {
        match self.adaptor {
            Some(b) => b.operator().expectation(self.grid, psi),
            None => 0.0,
        }
    }
}

/// `Pψ = −i(ψ_{j+1} − ψ_{j−1}) / 2h` with Dirichlet ends.
pub(crate) fn apply_momentum(grid: &Grid, psi: &State) -> State {
    let n = grid.n();
    let s = Complex64::new(0.0, -0.5 / grid.h());
    State::from_fn(n, |j, _| {
        let right = if j + 1 < n { psi[j + 1] } else { Complex64::new(0.0, 0.0) };
        let left = if j > 0 { psi[j - 1] } else { Complex64::new(0.0, 0.0) };
        (right - left) * s
    })
}

/// `Σ f_j |ψ_j|² μ`.
pub(crate) fn diagonal_form(grid: &Grid, f: &DVector<f64>, psi: &State) -> f64 {
    psi.iter().zip(f.iter()).map(|(z, v)| v * z.norm_sqr()).sum::<f64>() * grid.measure()
}

pub(crate) fn sample_form(grid: &Grid, psi: &State, f: impl Fn(f64) -> f64) -> f64 {
    psi.iter().zip(grid.points()).map(|(z, &x)| f(x) * z.norm_sqr()).sum::<f64>() * grid.measure()
}

/// Share of `‖Pψ‖²` carried by the origin node on radial grids, where
/// the odd extension gives `(Pu)₀ = u₁/(ih)` with half weight.
pub(crate) fn origin_momentum_sq(grid: &Grid, psi: &State) -> f64 {
    match grid.kind() {
        crate::grid::GridKind::Line => 0.0,
        crate::grid::GridKind::Radial3d => psi[0].norm_sqr() / (2.0 * grid.h() * grid.h()) * grid.measure(),
    }
}

/// `⟨ψ, (XP + PX) ψ⟩ = 2 Re⟨Xψ, Pψ⟩`.
pub(crate) fn dilation_pair_form(grid: &Grid, psi: &State) -> f64 {
    let p = apply_momentum(grid, psi);
    let xs = grid.points();
    2.0 * psi.iter().zip(p.iter()).zip(xs).map(|((z, w), &x)| (z.conj() * w).re * x).sum::<f64>() * grid.measure()
}

/// `⟨ψ, C(t) ψ⟩` for the chosen discrete conformal factor.
pub fn conformal_form(grid: &Grid, factor: ConformalFactor, t: f64, psi: &State) -> f64 {
    match factor {
        ConformalFactor::Literal => {
            let p = apply_momentum(grid, psi);
            let xs = grid.points();
            psi.iter()
                .zip(p.iter())
                .zip(xs)
                .map(|((z, w), &x)| (z * x - w * (2.0 * t)).norm_sqr())
                .sum::<f64>()
                * grid.measure()
                + 4.0 * t * t * origin_momentum_sq(grid, psi)
        }
        ConformalFactor::Kinetic => {
            sample_form(grid, psi, |x| x * x) - 2.0 * t * dilation_pair_form(grid, psi)
                + 4.0 * t * t * grid.kinetic_form(psi)
        }
    }
}

/// `‖ψ‖_{L⁶}` in the physical dimension of the grid.
pub(crate) fn l6_norm(grid: &Grid, psi: &State) -> Result<f64> {
    grid.norm(psi, crate::NormKind::Lp(6.0))
}

/// `‖w ∇ψ‖²` for a real weight profile `w`, with `∇ψ` the forward
/// difference at midpoints. On radial grids this is `|∂_r (u/r)|²` in 3D.
pub(crate) fn weighted_gradient_sq(grid: &Grid, psi: &State, weight: impl Fn(f64) -> f64) -> f64 {
    let n = grid.n();
    let h = grid.h();
    let xs = grid.points();
    let zero = Complex64::new(0.0, 0.0);
    let mut acc = 0.0;
    // Intervals [x_{j-1}, x_j] for j = 0..=n with zero ghost values.
    for j in 0..=n {
        let left = if j > 0 { psi[j - 1] } else { zero };
        let right = if j < n { psi[j] } else { zero };
        let xl = if j > 0 { xs[j - 1] } else { xs[0] - h };
        let xm = xl + 0.5 * h;
        let d = (right - left) / h;
        let value = match grid.kind() {
            GridKind::Line => d.norm_sqr(),
            GridKind::Radial3d => {
                if xm <= 0.0 {
                    continue;
                }
                // ∂_r(u/r) r = u' − u/r at the midpoint.
                (d - (left + right) * (0.5 / xm)).norm_sqr()
            }
        };
        acc += weight(xm).powi(2) * value;
    }
    acc * grid.measure()
}

/// `⟨ψ, (1 + K)^{1/2} ψ⟩`, the squared `H^{1/2}` norm, via the sine basis.
pub(crate) fn half_sobolev_sq(grid: &Grid, psi: &State) -> f64 {
    let transform = crate::propagator::SineTransform::new(grid.n());
    let mut coeffs: Vec<Complex64> = psi.iter().copied().collect();
    transform.apply(&mut coeffs);
    let lambda = operators::laplacian_spectrum(grid);
    coeffs.iter().zip(lambda.iter()).map(|(c, l)| (1.0 + l).sqrt() * c.norm_sqr()).sum::<f64>() * grid.measure()
}

/// Composite trapezoid rule on arbitrary increasing abscissae, returning the
/// running integral (same length as the input, starting at zero).
pub(crate) fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    for k in 0..times.len() {
        if k > 0 {
            acc += 0.5 * (times[k] - times[k - 1]) * (values[k] + values[k - 1]);
        }
        out.push(acc);
    }
    out
}

/// Composite Simpson rule on arbitrary abscissae: each pair of intervals
/// integrates the quadratic through its three samples, and an odd last
/// interval integrates the quadratic through the final three. Exact for
/// quadratics; two samples fall back to the trapezoid rule.
pub(crate) fn integrate_samples(times: &[f64], values: &[f64]) -> f64 {
    let n = times.len().min(values.len());
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * (times[1] - times[0]) * (values[0] + values[1]);
    }
    let mut total = 0.0;
    let mut k = 0;
    while k + 2 < n {
        let (h0, h1) = (times[k + 1] - times[k], times[k + 2] - times[k + 1]);
        let s = h0 + h1;
        total += s / 6.0 * ((2.0 - h1 / h0) * values[k] + s * s / (h0 * h1) * values[k + 1] + (2.0 - h0 / h1) * values[k + 2]);
        k += 2;
    }
    if k + 1 < n {
        let (h0, h1) = (times[n - 2] - times[n - 3], times[n - 1] - times[n - 2]);
        total += -h1 * h1 * h1 / (6.0 * h0 * (h0 + h1)) * values[n - 3]
            + h1 * (h1 + 3.0 * h0) / (6.0 * h0) * values[n - 2]
            + h1 * (2.0 * h1 + 3.0 * h0) / (6.0 * (h0 + h1)) * values[n - 1];
    }
    total
}

/// Trajectory samples inside `[a, b]`, with their indices.
pub(crate) fn samples_in(traj: &Trajectory, window: (f64, f64)) -> Vec<usize> {
    (0..traj.times.len()).filter(|&k| traj.times[k] >= window.0 && traj.times[k] <= window.1).collect()
}

/// Series over the trajectory samples in `window`.
pub(crate) fn series_over(
    label: &str,
    traj: &Trajectory,
    window: (f64, f64),
    mut f: impl FnMut(f64, &State) -> Result<f64>,
) -> Result<ObservableSeries> {
    let idx = samples_in(traj, window);
    let mut times = Vec::with_capacity(idx.len());
    let mut values = Vec::with_capacity(idx.len());
    for k in idx {
        times.push(traj.times[k]);
        values.push(f(traj.times[k], &traj.states[k])?);
    }
    ObservableSeries::new(label, times, values)
}

/// Operational meaning of "stays bounded": the log-log slope over the
/// later half of the window does not exceed `limit`. Returns the fit used.
pub(crate) fn growth_trend(series: &ObservableSeries) -> Result<LinearFit> {
    let (a, b) = series.window;
    let split = if a > 0.0 { (a * b).sqrt() } else { 0.5 * (a + b) };
    series::fit_decay_rate(series, Some((split, b))).or_else(|_| series::fit_decay_rate(series, None))
}
