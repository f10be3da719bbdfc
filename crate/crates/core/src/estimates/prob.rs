//! Propagation observables `B(t)`, their expectation series, the
//! Heisenberg-derivative consistency check and the integrated estimate
//! `∫‖Cψ‖² ≤ sup⟨B⟩ − ⟨B(t₀)⟩ + ‖g‖₁`.

use std::sync::Arc;

use serde::Serialize;

use super::report::EstimateReport;
use super::{integrate_samples, ConformalFactor};
use crate::error::{LabError, Result};
use crate::grid::Grid;
use crate::operators::{self, HermitianOperator};
use crate::propagator::Trajectory;
use crate::series::ObservableSeries;
use crate::State;

/// `t ↦ operator`.
pub type OperatorFamily = Arc<dyn Fn(f64) -> Result<HermitianOperator> + Send + Sync>;

/// A Hermitian family `B(t)` with its analytic time derivative and,
/// when known, the split `D_H B = C†C + G` of its Heisenberg derivative
/// into a nonnegative part and a remainder whose expectation is `g(t)`.
#[derive(Clone)]
pub struct PropagationObservable {
    label: String,
    builder: OperatorFamily,
    derivative: OperatorFamily,
    positive_part: Option<OperatorFamily>,
    remainder: Option<OperatorFamily>,
}

impl std::fmt::Debug for PropagationObservable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PropagationObservable")
            .field("label", &self.label)
            .field("decomposed", &self.positive_part.is_some())
            .finish()
    }
}

impl PropagationObservable {
    pub fn new(label: impl Into<String>, builder: OperatorFamily, derivative: OperatorFamily) -> Self {
        Self { label: label.into(), builder, derivative, positive_part: None, remainder: None }
    }

    pub fn with_decomposition(mut self, positive_part: OperatorFamily, remainder: OperatorFamily) -> Self {
        self.positive_part = Some(positive_part);
        self.remainder = Some(remainder);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn at(&self, t: f64) -> Result<HermitianOperator> {
        (self.builder)(t)
    }

    pub fn derivative_at(&self, t: f64) -> Result<HermitianOperator> {
        (self.derivative)(t)
    }

    pub fn is_decomposed(&self) -> bool {
        self.positive_part.is_some() && self.remainder.is_some()
    }

    pub fn positive_part_at(&self, t: f64) -> Option<Result<HermitianOperator>> {
        self.positive_part.as_ref().map(|f| f(t))
    }

    pub fn remainder_at(&self, t: f64) -> Option<Result<HermitianOperator>> {
        self.remainder.as_ref().map(|f| f(t))
    }

    /// `B = I`, with `D_H B = 0 = 0 + 0`.
    pub fn identity(grid: &Grid) -> Self {
        let g = grid.clone();
        let one: OperatorFamily = Arc::new(move |_| {
            operators::multiplication(&g, &nalgebra::DVector::from_element(g.n(), 1.0), "I")
        });
        let g = grid.clone();
        let zero: OperatorFamily =
            Arc::new(move |_| operators::multiplication(&g, &nalgebra::DVector::zeros(g.n()), "0"));
        Self::new("I", one, zero.clone()).with_decomposition(zero.clone(), zero)
    }

    /// Free-flow observable `C(t)/t`. Under `H = K` its Heisenberg
    /// derivative is `−C(t)/t²` (exactly for the literal factor), recorded as
    /// a zero positive part and the remainder `−C(t)/t²`.
    pub fn free_conformal(grid: &Grid, factor: ConformalFactor) -> Self {
        let build = move |g: &Grid, t: f64| -> Result<HermitianOperator> {
            match factor {
                ConformalFactor::Literal => operators::conformal_factor_operator(g, t),
                ConformalFactor::Kinetic => operators::conformal_factor_kinetic(g, t),
            }
        };
        let dbuild = move |g: &Grid, t: f64| -> Result<HermitianOperator> {
            match factor {
                ConformalFactor::Literal => operators::conformal_factor_derivative(g, t),
                ConformalFactor::Kinetic => operators::conformal_factor_kinetic_derivative(g, t),
            }
        };
        let positive_t = |t: f64| -> Result<()> {
            if t > 0.0 {
                Ok(())
            } else {
                Err(LabError::InvalidArgument(format!("C(t)/t needs t > 0, got {t}")))
            }
        };
        let g = grid.clone();
        let b: OperatorFamily = Arc::new(move |t| {
            positive_t(t)?;
            Ok(build(&g, t)?.scaled(1.0 / t).with_label(format!("C({t})/t")))
        });
        let g = grid.clone();
        let db: OperatorFamily = Arc::new(move |t| {
            positive_t(t)?;
            let c = build(&g, t)?;
            Ok(dbuild(&g, t)?.scaled(1.0 / t).minus(&c.scaled(1.0 / (t * t)))?.with_label("d/dt C/t"))
        });
        let g = grid.clone();
        let zero: OperatorFamily =
            Arc::new(move |_| operators::multiplication(&g, &nalgebra::DVector::zeros(g.n()), "0"));
        let g = grid.clone();
        let rem: OperatorFamily = Arc::new(move |t| {
            positive_t(t)?;
            Ok(build(&g, t)?.scaled(-1.0 / (t * t)).with_label("-C/t^2"))
        });
        Self::new("C(t)/t", b, db).with_decomposition(zero, rem)
    }
}

fn form_checked(grid: &Grid, op: &HermitianOperator, psi: &State, worst_im: &mut f64) -> Result<f64> {
    let z = op.form(grid, psi);
    let scale = z.re.abs().max(grid.mass(psi) * op.max_abs()).max(f64::MIN_POSITIVE);
    if z.im.abs() > 1e-9 * scale {
        return Err(LabError::Numerical(format!(
            "form of '{}' has imaginary part {:e} (scale {scale:e})",
            op.label(),
            z.im
        )));
    }
    *worst_im = worst_im.max(z.im.abs());
    Ok(z.re)
}

/// `⟨ψ(t), B(t) ψ(t)⟩` at the requested times, each of which must be a
/// trajectory sample.
pub fn observable_series(
    grid: &Grid,
    traj: &Trajectory,
    prob: &PropagationObservable,
    times: &[f64],
) -> Result<ObservableSeries> {
    family_series(grid, traj, prob.label(), |t| prob.at(t), times)
}

fn family_series(
    grid: &Grid,
    traj: &Trajectory,
    label: &str,
    family: impl Fn(f64) -> Result<HermitianOperator>,
    times: &[f64],
) -> Result<ObservableSeries> {
    let mut values = Vec::with_capacity(times.len());
    let mut worst = 0.0;
    for &t in times {
        let psi = traj.state_at(t)?;
        values.push(form_checked(grid, &family(t)?, psi, &mut worst)?);
    }
    Ok(ObservableSeries::new(label, times.to_vec(), values)?.with_imaginary(worst))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeisenbergCheck {
    pub t: f64,
    pub dt: f64,
    /// Centered difference of `⟨B⟩`.
    pub lhs: f64,
    /// `⟨ψ(t), (i[H(t), B(t)] + B'(t)) ψ(t)⟩`.
    pub rhs: f64,
    pub residual: f64,
}

/// Compares the centered difference of `⟨B⟩` across `t ± dt` with the
/// Heisenberg derivative evaluated at `t`.
pub fn heisenberg_consistency(
    grid: &Grid,
    traj: &Trajectory,
    hamiltonian: impl Fn(f64) -> Result<HermitianOperator>,
    prob: &PropagationObservable,
    t: f64,
    dt: f64,
) -> Result<HeisenbergCheck> {
    if !(dt > 0.0) {
        return Err(LabError::InvalidArgument(format!("difference step must be > 0, got {dt}")));
    }
    let mut worst = 0.0;
    let plus = form_checked(grid, &prob.at(t + dt)?, traj.state_at(t + dt)?, &mut worst)?;
    let minus = form_checked(grid, &prob.at(t - dt)?, traj.state_at(t - dt)?, &mut worst)?;
    let lhs = (plus - minus) / (2.0 * dt);
    let psi = traj.state_at(t)?;
    let b = prob.at(t)?;
    let h = hamiltonian(t)?;
    let rhs = operators::commutator_expectation(grid, &h, &b, psi) + prob.derivative_at(t)?.expectation(grid, psi);
    Ok(HeisenbergCheck { t, dt, lhs, rhs, residual: (lhs - rhs).abs() })
}

/// Series needed by [`pres_check`]: `⟨B⟩`, `‖Cψ‖² = ⟨C†C⟩` and `g`.
#[derive(Debug, Clone)]
pub struct PresSeries {
    pub observable: ObservableSeries,
    pub positive: ObservableSeries,
    pub remainder: ObservableSeries,
}

/// Evaluates the three series on trajectory samples. `None` when the
/// observable carries no decomposition.
pub fn pres_series(
    grid: &Grid,
    traj: &Trajectory,
    prob: &PropagationObservable,
    times: &[f64],
) -> Result<Option<PresSeries>> {
    if !prob.is_decomposed() {
        return Ok(None);
    }
    let observable = observable_series(grid, traj, prob, times)?;
    let positive = family_series(grid, traj, "|C psi|^2", |t| prob.positive_part_at(t).expect("decomposed"), times)?;
    let remainder = family_series(grid, traj, "g", |t| prob.remainder_at(t).expect("decomposed"), times)?;
    Ok(Some(PresSeries { observable, positive, remainder }))
}

/// Integrated propagation estimate on `[t₀, T]` (the span of the series):
///
/// * bound: `∫‖Cψ‖² ≤ sup⟨B⟩ − ⟨B(t₀)⟩ + ∫|g| + tolerance`;
/// * balance: `|∫‖Cψ‖² + ∫g − (⟨B(T)⟩ − ⟨B(t₀)⟩)| ≤ tolerance`, which is
///   what exposes a remainder of the wrong sign.
///
/// Integrals use Simpson's rule on uniform odd-length samples and the
/// trapezoid rule otherwise.
pub fn pres_check(series: Option<&PresSeries>, tolerance: f64) -> EstimateReport {
    let mut report = EstimateReport::new("propagation estimate");
    let Some(s) = series else {
        report.warn("observable has no positive/remainder decomposition; propagation estimate skipped");
        report.skip("propagation estimate", "missing decomposition");
        return report;
    };
    let b = &s.observable.values;
    let times = &s.observable.times;
    if times.len() < 2 || s.positive.times != *times || s.remainder.times != *times {
        report.skip("propagation estimate", "series must share at least two sample times");
        return report;
    }
    let integral_pos = integrate_samples(times, &s.positive.values);
    let integral_g = integrate_samples(times, &s.remainder.values);
    let abs_g: Vec<f64> = s.remainder.values.iter().map(|g| g.abs()).collect();
    let norm_g = integrate_samples(times, &abs_g);
    let sup_b = s.observable.max();
    let b0 = b[0];
    let b_end = *b.last().unwrap();
    report.at_most("integral |C psi|^2 vs sup <B> - <B(t0)> + |g|_1", integral_pos, sup_b - b0 + norm_g + tolerance);
    report.at_most("balance |int C + int g - <B> increment|", (integral_pos + integral_g - (b_end - b0)).abs(), tolerance);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{hamiltonian, laplacian};
    use crate::propagator::{sample_exact, sample_split, SplitStepper, WaveState};
    use crate::series::linear_times;
    use crate::spectral::diagonalize;
    use crate::StaticPotential;
    use num_complex::Complex64;

    fn gaussian(grid: &Grid, width: f64, k: f64) -> State {
        let psi = grid.sample_complex(|x| Complex64::from_polar((-(x / width).powi(2) / 2.0).exp(), k * x));
        let m = grid.mass(&psi).sqrt();
        psi / Complex64::new(m, 0.0)
    }

    fn free_setup(n: usize, l: f64, times: &[f64]) -> (Grid, Trajectory) {
        let grid = Grid::line(n, l).unwrap();
        let spec = diagonalize(&laplacian(&grid)).unwrap();
        let psi0 = WaveState::initial(gaussian(&grid, 1.5, 0.3), 0.0).unwrap();
        let traj = sample_exact(&spec, &grid, &psi0, times).unwrap();
        (grid, traj)
    }

    #[test]
    fn identity_observable_gives_the_mass() {
        let times = [0.0, 0.5, 1.0];
        let (grid, traj) = free_setup(128, 16.0, &times);
        let s = observable_series(&grid, &traj, &PropagationObservable::identity(&grid), &times).unwrap();
        for v in &s.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(s.max_imaginary <= 1e-9);
        let k = laplacian(&grid);
        let c = heisenberg_consistency(&grid, &traj, |_| Ok(k.clone()), &PropagationObservable::identity(&grid), 0.5, 0.5)
            .unwrap();
        assert!(c.residual <= 1e-9);
    }

    #[test]
    fn free_conformal_series_is_constant() {
        let times = linear_times(1.0, 3.0, 5);
        let (grid, traj) = free_setup(256, 24.0, &times);
        // Literal C is conserved, so C(t)/t · t is constant.
        let s = observable_series(&grid, &traj, &PropagationObservable::free_conformal(&grid, ConformalFactor::Literal), &times)
            .unwrap();
        let c0 = s.values[0] * s.times[0];
        for (t, v) in s.times.iter().zip(&s.values) {
            assert!((v * t - c0).abs() < 1e-6 * c0, "{} vs {c0}", v * t);
        }
        assert!(observable_series(&grid, &traj, &PropagationObservable::identity(&grid), &[1.25]).is_err());
    }

    #[test]
    fn conformal_factor_at_zero_is_the_second_moment() {
        let grid = Grid::line(128, 12.0).unwrap();
        let psi = gaussian(&grid, 1.0, 0.0);
        let c = operators::conformal_factor_operator(&grid, 0.0).unwrap().expectation(&grid, &psi);
        let x2 = super::super::sample_form(&grid, &psi, |x| x * x);
        assert!((c - x2).abs() < 1e-12);
    }

    #[test]
    fn heisenberg_residual_matches_free_law() {
        // The centered difference of C/t carries an O((dt/t)²) error.
        let t = 2.0;
        let dt = 1e-3;
        let (grid, traj) = free_setup(256, 24.0, &[t - dt, t, t + dt]);
        let k = laplacian(&grid);
        let prob = PropagationObservable::free_conformal(&grid, ConformalFactor::Literal);
        let c = heisenberg_consistency(&grid, &traj, |_| Ok(k.clone()), &prob, t, dt).unwrap();
        let expected = -operators::conformal_factor_operator(&grid, t).unwrap().expectation(&grid, traj.state_at(t).unwrap())
            / (t * t);
        assert!((c.rhs - expected).abs() < 1e-8 * expected.abs());
        assert!(c.residual < 1e-5 * expected.abs(), "{c:?}");
    }

    #[test]
    fn heisenberg_residual_converges_at_second_order() {
        // Split-step trajectory of H = K + V; halve both the difference step
        // and the time step.
        let grid = Grid::line(256, 16.0).unwrap();
        let v = StaticPotential::gaussian(1.0, 1.0);
        let h = hamiltonian(&grid, &v.samples(&grid)).unwrap();
        let stepper = SplitStepper::new(&grid, &v, None, 0.0).unwrap();
        let psi0 = WaveState::initial(gaussian(&grid, 1.0, 1.0), 0.0).unwrap();
        let prob = PropagationObservable::free_conformal(&grid, ConformalFactor::Kinetic);
        let t = 1.0;
        let residual = |dt: f64| {
            let traj = sample_split(&stepper, &psi0, &[t - dt, t, t + dt], dt / 4.0).unwrap();
            heisenberg_consistency(&grid, &traj, |_| Ok(h.clone()), &prob, t, dt).unwrap().residual
        };
        let (r1, r2) = (residual(0.08), residual(0.04));
        let ratio = r1 / r2;
        assert!((3.5..=4.5).contains(&ratio), "{r1} {r2} {ratio}");
    }

    #[test]
    fn pres_on_free_flow_and_wrong_sign_remainder() {
        let times = linear_times(1.0, 5.0, 401);
        let (grid, traj) = free_setup(512, 48.0, &times);
        let prob = PropagationObservable::free_conformal(&grid, ConformalFactor::Literal);
        let s = pres_series(&grid, &traj, &prob, &times).unwrap().unwrap();
        let report = pres_check(Some(&s), 1e-4);
        assert!(report.passed(), "{}", report.render());
        // Slack: the bound is sup<B> - <B(1)> + |g|_1 with zero left side.
        let c = &report.checks[0];
        assert!(c.bound > 0.1);

        let mut wrong = s.clone();
        for g in wrong.remainder.values.iter_mut() {
            *g = -*g;
        }
        assert!(!pres_check(Some(&wrong), 1e-4).passed());

        let bare = PropagationObservable::new("bare", Arc::new(|_| unreachable!()), Arc::new(|_| unreachable!()));
        assert!(pres_series(&grid, &traj, &bare, &times).unwrap().is_none());
        let skipped = pres_check(None, 1e-4);
        assert!(skipped.passed() && !skipped.warnings.is_empty());
    }

    #[test]
    fn pres_with_zero_parts_is_trivial() {
        let times = linear_times(0.0, 1.0, 11);
        let (grid, traj) = free_setup(64, 10.0, &times);
        let s = pres_series(&grid, &traj, &PropagationObservable::identity(&grid), &times).unwrap().unwrap();
        let r = pres_check(Some(&s), 1e-12);
        assert!(r.passed(), "{}", r.render());
    }
}
