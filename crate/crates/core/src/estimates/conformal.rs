//! The adapted conformal identity and the estimates drawn from it:
//! positive potentials, general potentials on `Ran P_c` (lens positivity,
//! genericity margin) and the first-level observable
//! `B₁(t) = C(t)/t + 4t(V + W) + B_V`.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use super::prob::{OperatorFamily, PropagationObservable};
use super::report::EstimateReport;
use super::{conformal_form, diagonal_form, growth_trend, l6_norm, sample_form, series_over, ConformalFactor, Setting};
use crate::adaptor::AdaptorOperator;
use crate::error::{LabError, Result};
use crate::grid::{Grid, GridKind, NormKind};
use crate::linalg::{self, CMat};
use crate::operators::{self, HermitianOperator};
use crate::potential::{negative_part, positive_part, StaticPotential, TimeDependentPotential};
use crate::propagator::Trajectory;
use crate::series::{self, ObservableSeries};
use crate::spectral::{genericity_margin, SpectralData};
use crate::State;

/// `⟨ψ, B₁(s) ψ⟩` with `B₁(s) = C(s)/s + 4s(V + W(s)) + B_V`.
pub fn first_level_form(setting: &Setting, factor: ConformalFactor, s: f64, psi: &State) -> f64 {
    let grid = setting.grid;
    let vw = setting.v_samples() + setting.w_samples(s);
    conformal_form(grid, factor, s, psi) / s + 4.0 * s * diagonal_form(grid, &vw, psi) + setting.adaptor_form(psi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConformalResidual {
    pub t: f64,
    pub dt: f64,
    /// Centered difference of `⟨B₁⟩`.
    pub lhs: f64,
    /// `−⟨C⟩/t² + ⟨[4x·∇V + 4V]_-⟩ + ⟨4x·∇W + 4W + 4t∂_tW⟩`.
    pub rhs: f64,
    /// Matrix terms the continuum identity does not display:
    /// `⟨[4x·∇V + 4V]_+⟩ + ⟨i[H₀, B_V]⟩ + ⟨i[W, B_V]⟩`, where
    /// `i[H₀, B_V] = P_cQP_c + R(T_B)` is evaluated exactly.
    pub leftovers: f64,
    /// `⟨R(T_B)⟩`, the truncation part of the leftovers.
    pub truncation: f64,
    pub residual: f64,
}

/// Evaluates the adapted conformal identity at `t`; the trajectory must
/// contain `t − dt`, `t` and `t + dt`.
pub fn conformal_identity_residual(
    setting: &Setting,
    traj: &Trajectory,
    factor: ConformalFactor,
    t: f64,
    dt: f64,
) -> Result<ConformalResidual> {
    if !(t > 0.0) || !(t - dt > 0.0) {
        return Err(LabError::InvalidArgument(format!("the conformal identity needs t − dt > 0, got t = {t}, dt = {dt}")));
    }
    let grid = setting.grid;
    let plus = first_level_form(setting, factor, t + dt, traj.state_at(t + dt)?);
    let minus = first_level_form(setting, factor, t - dt, traj.state_at(t - dt)?);
    let lhs = (plus - minus) / (2.0 * dt);

    let psi = traj.state_at(t)?;
    let v = setting.potential;
    let dilation_term = |x: f64| 4.0 * v.x_gradient(x) + 4.0 * v.value(x);
    let mut rhs = -conformal_form(grid, factor, t, psi) / (t * t) + sample_form(grid, psi, |x| negative_part(dilation_term(x)));
    if let Some(w) = setting.time_dependent {
        rhs += sample_form(grid, psi, |x| 4.0 * w.x_gradient(x, t) + 4.0 * w.value(x, t) + 4.0 * t * w.dt(x, t));
    }

    let mut leftovers = sample_form(grid, psi, |x| positive_part(dilation_term(x)));
    let mut truncation = 0.0;
    if let Some(b) = setting.adaptor {
        let spec = setting.spectrum()?;
        let c = spec.coefficients(&spec.continuum_indices(), psi);
        truncation = b.remainder_form(&c, grid.measure()).re;
        leftovers += b.projected_q_form(&c, grid.measure()) + truncation;
        if setting.time_dependent.is_some() {
            let w = operators::multiplication(grid, &setting.w_samples(t), "W")?;
            leftovers += operators::commutator_expectation(grid, &w, b.operator(), psi);
        }
    }
    let residual = (lhs - rhs - leftovers).abs();
    Ok(ConformalResidual { t, dt, lhs, rhs, leftovers, truncation, residual })
}

/// Owned ingredients of the first-level observable as dense matrices, for
/// Heisenberg-derivative checks.
#[derive(Clone)]
pub struct FirstLevelParts {
    pub grid: Grid,
    pub potential: DVector<f64>,
    pub time_dependent: Option<TimeDependentPotential>,
    pub adaptor: Option<Arc<HermitianOperator>>,
    pub factor: ConformalFactor,
}

impl FirstLevelParts {
    pub fn from_setting(setting: &Setting, factor: ConformalFactor) -> Self {
        Self {
            grid: setting.grid.clone(),
            potential: setting.v_samples(),
            time_dependent: setting.time_dependent.cloned(),
            adaptor: setting.adaptor.map(|b| Arc::new(b.operator().clone())),
            factor,
        }
    }

    fn factor_at(&self, t: f64) -> Result<HermitianOperator> {
        match self.factor {
            ConformalFactor::Literal => operators::conformal_factor_operator(&self.grid, t),
            ConformalFactor::Kinetic => operators::conformal_factor_kinetic(&self.grid, t),
        }
    }

    fn factor_derivative_at(&self, t: f64) -> Result<HermitianOperator> {
        match self.factor {
            ConformalFactor::Literal => operators::conformal_factor_derivative(&self.grid, t),
            ConformalFactor::Kinetic => operators::conformal_factor_kinetic_derivative(&self.grid, t),
        }
    }

    fn w(&self, t: f64) -> DVector<f64> {
        match &self.time_dependent {
            Some(w) => w.samples(&self.grid, t),
            None => DVector::zeros(self.grid.n()),
        }
    }

    fn w_dt(&self, t: f64) -> DVector<f64> {
        match &self.time_dependent {
            Some(w) => self.grid.sample(|x| w.dt(x, t)),
            None => DVector::zeros(self.grid.n()),
        }
    }

    /// `B₁(t)`.
    pub fn observable(&self, t: f64) -> Result<HermitianOperator> {
        check_positive(t)?;
        let vw = operators::multiplication(&self.grid, &((&self.potential + self.w(t)) * (4.0 * t)), "4t(V+W)")?;
        let mut b = self.factor_at(t)?.scaled(1.0 / t).plus(&vw)?;
        if let Some(a) = &self.adaptor {
            b = b.plus(a)?;
        }
        Ok(b.with_label(format!("B1({t})")))
    }

    /// `dB₁/dt = C'(t)/t − C(t)/t² + 4(V + W) + 4t ∂_tW`.
    pub fn derivative(&self, t: f64) -> Result<HermitianOperator> {
        check_positive(t)?;
        let c = self.factor_at(t)?;
        let dc = self.factor_derivative_at(t)?;
        let diag = (&self.potential + self.w(t)) * 4.0 + self.w_dt(t) * (4.0 * t);
        let d = operators::multiplication(&self.grid, &diag, "4(V+W)+4t dW")?;
        Ok(dc.scaled(1.0 / t).minus(&c.scaled(1.0 / (t * t)))?.plus(&d)?.with_label(format!("dB1/dt({t})")))
    }

    /// `H(t) = K + V + W(t)`.
    pub fn hamiltonian(&self, t: f64) -> Result<HermitianOperator> {
        operators::hamiltonian(&self.grid, &(&self.potential + self.w(t)))
    }

    /// The observable with its analytic derivative. `corrupt_derivative`
    /// flips the sign of the derivative, for negative tests.
    pub fn into_observable(self, corrupt_derivative: bool) -> PropagationObservable {
        let parts = Arc::new(self);
        let p = parts.clone();
        let b: OperatorFamily = Arc::new(move |t| p.observable(t));
        let p = parts;
        let db: OperatorFamily = Arc::new(move |t| {
            let d = p.derivative(t)?;
            Ok(if corrupt_derivative { d.scaled(-1.0).with_label("corrupted dB1/dt") } else { d })
        });
        PropagationObservable::new("B1", b, db)
    }
}

fn check_positive(t: f64) -> Result<()> {
    if t > 0.0 {
        Ok(())
    } else {
        Err(LabError::InvalidArgument(format!("1/t-scaled observables need t > 0, got {t}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivePotentialParams {
    /// Declared constant in `sup[‖(x − 2pt)ψ‖² + t²⟨V⟩] ≤ C·Lnorm(ψ₀)²`.
    pub sharp_constant: f64,
    /// Limit on the fitted log-log slope for "no growth".
    pub trend_limit: f64,
    /// Start of the decay-fit window; the end is the trajectory's validity horizon.
    pub fit_start: f64,
    pub l6_band: (f64, f64),
    pub first_level_band: (f64, f64),
    pub factor: ConformalFactor,
}

impl Default for PositivePotentialParams {
    fn default() -> Self {
        Self {
            sharp_constant: 50.0,
            trend_limit: 0.05,
            fit_start: 5.0,
            l6_band: (-1.25, -0.8),
            first_level_band: (-0.7, -0.35),
            factor: ConformalFactor::Kinetic,
        }
    }
}

/// Series `‖(x − 2pt)ψ‖² + t²⟨V⟩` over the trajectory's validity window.
pub fn sharp_series(setting: &Setting, traj: &Trajectory) -> Result<ObservableSeries> {
    let window = traj.validity_window();
    let v = setting.v_samples();
    let grid = setting.grid;
    let s = series_over("|(x-2pt)psi|^2 + t^2 <V>", traj, window, |t, psi| {
        Ok(conformal_form(grid, ConformalFactor::Literal, t, psi) + t * t * diagonal_form(grid, &v, psi))
    })?;
    Ok(s.with_window(window))
}

/// `⟨ψ(t), t²[−x·∇V]_+ ψ(t)⟩`.
pub fn repulsion_series(setting: &Setting, traj: &Trajectory) -> Result<ObservableSeries> {
    let window = traj.validity_window();
    let v = setting.potential;
    let grid = setting.grid;
    let s = series_over("t^2 <[-x.grad V]_+>", traj, window, |t, psi| {
        Ok(t * t * sample_form(grid, psi, |x| positive_part(-v.x_gradient(x))))
    })?;
    Ok(s.with_window(window))
}

/// Consequences of the conformal identity for `V ≥ 0`, `W = 0`.
pub fn positive_potential_suite(
    setting: &Setting,
    traj: &Trajectory,
    params: &PositivePotentialParams,
) -> Result<EstimateReport> {
    let mut report = EstimateReport::new("positive potentials: sharp propagation estimate and decay");
    let grid = setting.grid;
    let v = setting.v_samples();
    let vmin = v.min();
    if vmin < 0.0 {
        report.warn(format!("potential has negative samples (min {vmin:e}); positive-potential suite gated out"));
        report.skip("positive potential suite", "V has negative samples");
        return Ok(report);
    }
    if setting.time_dependent.is_some() {
        report.skip("positive potential suite", "W is present");
        return Ok(report);
    }
    let window = traj.validity_window();
    let psi0 = traj.states.first().ok_or_else(|| LabError::InvalidArgument("empty trajectory".into()))?;
    let lnorm = grid.norm(psi0, NormKind::L)?;

    if let (Some(b), Some(spec)) = (setting.adaptor, setting.spectrum) {
        let min = b.min_eigenvalue(spec);
        report.at_least("B_V >= 0 (min eigenvalue / |B_V|)", min / b.norm_bound().max(f64::MIN_POSITIVE), -1e-8);
    }

    // (a) sharp propagation estimate
    let sharp = sharp_series(setting, traj)?;
    report.at_most("sup[|(x-2pt)psi|^2 + t^2<V>] / Lnorm^2", sharp.max() / (lnorm * lnorm), params.sharp_constant);
    let trend = growth_trend(&sharp)?;
    report.at_most("growth slope of the sharp quantity", trend.slope, params.trend_limit);
    report.fit("sharp quantity, log-log", &trend, sharp.window);
    report.push_series(sharp);

    let fit_window = (params.fit_start, window.1);
    if window.1 <= params.fit_start {
        report.warn(format!("validity window ends at {:.3}, before the fit start {}", window.1, params.fit_start));
    }

    // (b) L⁶ decay along the iterated estimate.
    let l6 = series_over("|psi|_6", traj, window, |_, psi| l6_norm(grid, psi))?.with_window(window);
    match grid.kind() {
        GridKind::Radial3d => match series::fit_decay_rate(&l6, Some(fit_window)) {
            Ok(fit) => {
                report.within("L6 decay slope", fit.slope, params.l6_band.0, params.l6_band.1);
                report.fit("L6 norm", &fit, fit_window);
            }
            Err(e) => {
                report.at_most("L6 decay fit samples", 0.0, -1.0);
                report.warn(format!("L6 fit failed: {e}"));
            }
        },
        GridKind::Line => report.skip("L6 decay slope", "the 1/t rate is a three-dimensional statement"),
    }

    // (c) first level: |ψ|_6² ≲ ⟨C⟩/t² ≤ sup_{s≤t}⟨B₁(s)⟩ / t.
    let mut running: f64 = f64::NEG_INFINITY;
    let mut bound_values = Vec::new();
    let mut ratio_values = Vec::new();
    let mut times = Vec::new();
    for k in super::samples_in(traj, window) {
        let t = traj.times[k];
        if !(t > 0.0) {
            continue;
        }
        let psi = &traj.states[k];
        running = running.max(first_level_form(setting, params.factor, t, psi));
        let bound = (running.max(0.0) / t).sqrt();
        times.push(t);
        bound_values.push(bound);
        ratio_values.push(l6.values[l6.times.iter().position(|&s| s == t).unwrap()] / bound.max(f64::MIN_POSITIVE));
    }
    let first = ObservableSeries::new("sqrt(sup<B1>/t)", times.clone(), bound_values)?.with_window(window);
    match series::fit_decay_rate(&first, Some(fit_window)) {
        Ok(fit) => {
            report.within("first-level decay slope", fit.slope, params.first_level_band.0, params.first_level_band.1);
            report.fit("first-level bound", &fit, fit_window);
        }
        Err(e) => {
            report.at_most("first-level fit samples", 0.0, -1.0);
            report.warn(format!("first-level fit failed: {e}"));
        }
    }
    if grid.kind() == GridKind::Radial3d {
        let ratio = ObservableSeries::new("|psi|_6 / sqrt(sup<B1>/t)", times, ratio_values)?.with_window(window);
        let trend = growth_trend(&ratio)?;
        report.at_most("L6 over first-level bound, growth slope", trend.slope, params.trend_limit);
        report.push_series(ratio);
    }
    report.push_series(first);
    report.push_series(l6);

    // Iterated bound: t²⟨[−x·∇V]_+⟩ does not grow.
    let rep = repulsion_series(setting, traj)?;
    if rep.max() > 0.0 {
        let trend = growth_trend(&rep)?;
        report.at_most("growth slope of t^2<[-x.grad V]_+>", trend.slope, params.trend_limit);
    }
    report.push_series(rep);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LensEntry {
    pub t: f64,
    /// Smallest eigenvalue of `P_c [4tV + C(t)/t] P_c` on `Ran P_c`.
    pub min_eigenvalue: f64,
}

/// `P_c [4tV + C(t)/t] P_c` compressed to `Ran P_c`, and its smallest eigenvalue.
pub fn lens_positivity(
    grid: &Grid,
    potential: &StaticPotential,
    spec: &SpectralData,
    factor: ConformalFactor,
    t: f64,
) -> Result<LensEntry> {
    if !(t > 0.0) {
        return Err(LabError::InvalidArgument(format!("lens positivity needs t > 0, got {t}")));
    }
    let c = match factor {
        ConformalFactor::Literal => operators::conformal_factor_operator(grid, t)?,
        ConformalFactor::Kinetic => operators::conformal_factor_kinetic(grid, t)?,
    };
    let v = operators::multiplication(grid, &(potential.samples(grid) * (4.0 * t)), "4tV")?;
    let m = c.scaled(1.0 / t).plus(&v)?;
    let idx = spec.continuum_indices();
    if idx.is_empty() {
        return Err(LabError::InvalidArgument("Ran P_c is empty".into()));
    }
    let reduced: CMat = match spec.continuum_basis_real() {
        Some(basis) => linalg::compress(m.matrix(), &basis),
        None => {
            let b = spec.continuum_basis();
            linalg::cmul(&b.adjoint(), &linalg::cmul(m.matrix(), &b))
        }
    };
    let reduced = linalg::hermitian_part(&reduced);
    Ok(LensEntry { t, min_eigenvalue: linalg::hermitian_eigenvalues(&reduced)[0] })
}

/// `|⟨ψ, C(t)/t ψ⟩ − 4t‖P U_t† ψ‖²|` with `U_t = e^{ix²/4t}` and the literal factor.
pub fn lens_identity_residual(grid: &Grid, psi: &State, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(LabError::InvalidArgument(format!("lens identity needs t > 0, got {t}")));
    }
    let lhs = conformal_form(grid, ConformalFactor::Literal, t, psi) / t;
    let phase = operators::lens_phase(grid, t);
    let rotated = State::from_fn(grid.n(), |j, _| phase[j].conj() * psi[j]);
    let p = super::apply_momentum(grid, &rotated);
    let p2 = p.norm_squared() * grid.measure() + super::origin_momentum_sq(grid, &rotated);
    Ok((lhs - 4.0 * t * p2).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralPotentialParams {
    pub lens_times: Vec<f64>,
    pub spread_limit: f64,
    /// Declared constant in `sup t²⟨[−x·∇V]_+⟩ ≤ C`.
    pub repulsion_bound: f64,
    pub trend_limit: f64,
    pub ratio_band: (f64, f64),
    /// Width of the Gaussian used for the lens identity convergence check.
    pub probe_width: f64,
    /// Conformal factor of the lens block. The literal form treats the
    /// lattice doubler at `k = π/h` as zero momentum, so only the stencil
    /// form gives a bound that reflects the continuum.
    pub factor: ConformalFactor,
}

impl Default for GeneralPotentialParams {
    fn default() -> Self {
        Self {
            lens_times: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
            spread_limit: 2.0,
            repulsion_bound: 10.0,
            trend_limit: 0.05,
            ratio_band: (3.5, 4.5),
            probe_width: 1.0,
            factor: ConformalFactor::Kinetic,
        }
    }
}

/// General time-independent potentials on `Ran P_c`: genericity margin,
/// lens positivity and the iterated repulsion bound.
pub fn general_potential_suite(
    setting: &Setting,
    traj: &Trajectory,
    params: &GeneralPotentialParams,
) -> Result<EstimateReport> {
    let mut report = EstimateReport::new("general potentials on Ran P_c");
    let grid = setting.grid;
    let spec = setting.spectrum()?;
    if spec.has_near_threshold() {
        report.warn("near-threshold eigenvalues present; they are excluded from Ran P_c");
    }
    let k = operators::laplacian(grid);
    let delta = genericity_margin(spec, &k)?;
    report.at_least("genericity margin delta*", delta, f64::MIN_POSITIVE);

    let mut deficits = Vec::new();
    for &t in &params.lens_times {
        let entry = lens_positivity(grid, setting.potential, spec, params.factor, t)?;
        deficits.push((-entry.min_eigenvalue).max(0.0));
        report.at_least(format!("lens block min eigenvalue at t = {t}"), entry.min_eigenvalue, -f64::INFINITY);
    }
    let (cmax, cmin) = deficits.iter().fold((0.0f64, f64::INFINITY), |(a, b), &c| (a.max(c), b.min(c)));
    let floor = 1e-6;
    report.at_most("lens lower-bound spread max c / min c", (cmax + floor) / (cmin + floor), params.spread_limit);

    let probe = |g: &Grid| {
        let w = params.probe_width;
        g.sample_complex(|x| Complex64::new((-(x / w).powi(2) / 2.0).exp(), 0.0))
    };
    let fine = grid.refined();
    let t_lens = params.lens_times.first().copied().unwrap_or(1.0);
    let r0 = lens_identity_residual(grid, &probe(grid), t_lens)?;
    let r1 = lens_identity_residual(&fine, &probe(&fine), t_lens)?;
    report.within("lens identity residual ratio under h halving", r0 / r1, params.ratio_band.0, params.ratio_band.1);

    let rep = repulsion_series(setting, traj)?;
    report.at_most("sup t^2<[-x.grad V]_+>", rep.max(), params.repulsion_bound);
    if rep.max() > 0.0 {
        let trend = growth_trend(&rep)?;
        report.at_most("growth slope of t^2<[-x.grad V]_+>", trend.slope, params.trend_limit);
        report.fit("t^2<[-x.grad V]_+>", &trend, rep.window);
    }
    report.push_series(rep);
    Ok(report)
}

/// `Q` must cancel the positive part of `4x·∇V + 4V`: `max(Q + [·]_+) ≤ 0`.
pub fn b_trick_defect(adaptor: &AdaptorOperator, grid: &Grid, potential: &StaticPotential) -> f64 {
    let q = &adaptor.q().samples;
    grid.points()
        .iter()
        .zip(q.iter())
        .map(|(&x, &qv)| qv + positive_part(4.0 * potential.x_gradient(x) + 4.0 * potential.value(x)))
        .fold(f64::NEG_INFINITY, f64::max)
}
