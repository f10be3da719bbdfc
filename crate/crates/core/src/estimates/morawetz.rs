//! The adapted Morawetz estimate on radial grids: positivity of `i[K, γ]`,
//! cancellation of `[i[V, γ]]_-` by the adaptor `B_γ`, the smoothing
//! integral with its constants, and the `t^{−θ}` local decay variant.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::report::EstimateReport;
use super::{cumulative_trapezoid, growth_trend, half_sobolev_sq, l6_norm, samples_in, series_over, weighted_gradient_sq, Setting};
use crate::adaptor::WeightedBasis;
use crate::error::{LabError, Result};
use crate::grid::{Grid, GridKind};
use crate::linalg;
use crate::operators::{self, HermitianOperator};
use crate::potential::negative_part;
use crate::propagator::Trajectory;
use crate::series::{self, ObservableSeries};

/// Radial profile `g` of the multiplier `γ = gXP + PXg`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorawetzProfile {
    /// `g(r) = 1/⟨r⟩`.
    InverseBracket,
    /// `g ≡ 1`, so that `γ = 2A`.
    Constant,
}

impl MorawetzProfile {
    pub fn samples(&self, grid: &Grid) -> DVector<f64> {
        match self {
            MorawetzProfile::InverseBracket => grid.sample(|r| 1.0 / (1.0 + r * r).sqrt()),
            MorawetzProfile::Constant => grid.sample(|_| 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorawetzParams {
    pub profile: MorawetzProfile,
    pub epsilon: f64,
    /// Decay exponent `a` of `∇W ≲ t^{−a}`.
    pub a: f64,
    /// Exponent of the local decay variant; `None` skips it.
    pub theta: Option<f64>,
    pub positivity_tolerance: f64,
    pub cancellation_tolerance: f64,
    pub trend_slack: f64,
    /// Flips the sign of `γ` after construction, for negative tests.
    pub corrupt_sign: bool,
}

impl Default for MorawetzParams {
    fn default() -> Self {
        Self {
            profile: MorawetzProfile::InverseBracket,
            epsilon: 0.1,
            a: 0.4,
            theta: Some(0.5),
            positivity_tolerance: 1e-8,
            cancellation_tolerance: 1e-8,
            trend_slack: 0.05,
            corrupt_sign: false,
        }
    }
}

/// `γ` for the given profile, with the optional sign corruption.
pub fn multiplier(grid: &Grid, params: &MorawetzParams) -> Result<HermitianOperator> {
    let gamma = operators::morawetz_multiplier(grid, &params.profile.samples(grid))?;
    Ok(if params.corrupt_sign { gamma.scaled(-1.0).with_label("-gamma") } else { gamma })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommutatorSpectrum {
    /// Smallest eigenvalue of `i[K, γ]` compressed to `|x| ≤ 0.9 L`.
    pub interior_min: f64,
    /// Smallest eigenvalue of the full matrix, corners included.
    pub full_min: f64,
    pub norm: f64,
}

/// Spectrum of `i[K, γ]`. The Dirichlet truncation adds large negative
/// eigenvalues at the outer corner, so the interior compression carries
/// the positivity statement and the full minimum is reported alongside.
pub fn commutator_spectrum(grid: &Grid, gamma: &HermitianOperator) -> Result<CommutatorSpectrum> {
    let comm = operators::commutator_i(&operators::laplacian(grid), gamma)?;
    let full = comm.eigenvalues();
    let norm = full.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let interior = linalg::hermitian_eigenvalues(&linalg::hermitian_part(&comm.compression(&grid.interior_indices())));
    Ok(CommutatorSpectrum { interior_min: interior[0], full_min: full[0], norm })
}

/// `‖⟨x⟩^{−σ} P_c([i[V, γ]]_- + i[H, B_γ]) P_c ⟨x⟩^{−σ}‖` and the adaptor's
/// own weighted residual `‖⟨x⟩^{−σ} R(T_B) ⟨x⟩^{−σ}‖`, which it must equal.
pub fn cancellation_defect(setting: &Setting, gamma_profile: &DVector<f64>) -> Result<(f64, f64)> {
    let grid = setting.grid;
    let spec = setting.spectrum()?;
    let b = setting
        .adaptor
        .ok_or_else(|| LabError::InvalidArgument("the cancellation check needs B_gamma".into()))?;
    let xdv = setting.potential.x_gradient_samples(grid);
    let neg = DVector::from_fn(grid.n(), |j, _| negative_part(-2.0 * gamma_profile[j] * xdv[j]));
    let h = operators::hamiltonian(grid, &setting.v_samples())?;
    let sum = operators::commutator_i(&h, b.operator())?.plus(&operators::multiplication(grid, &neg, "[i[V,gamma]]_-")?)?;
    let basis = spec
        .continuum_basis_real()
        .ok_or_else(|| LabError::Unsupported("the cancellation check needs a real eigenbasis".into()))?;
    let reduced = linalg::compress(sum.matrix(), &basis);
    let adjoint = reduced.adjoint();
    let weighted = WeightedBasis::new(spec, grid, b.sigma())?;
    let norm = weighted.sandwich_norm(|v| &reduced * v, |v| &adjoint * v);
    Ok((norm, b.residual_weighted()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MorawetzConstants {
    /// `C' = sup_T ∫₀^T |⟨i[W, γ + B_γ]⟩| dt / T^{1−a}`.
    pub c_prime: f64,
    /// `C = max_T (I(T) − C'T^{1−a}) / sup‖ψ‖²_{H^{1/2}}`.
    pub c: f64,
    pub sup_half_sobolev: f64,
}

/// Running smoothing integral
/// `I(T) = ∫₀^T (‖⟨x⟩^{−1/2−ε}∇ψ‖² + ‖⟨x⟩^{−1−ε}ψ‖²) dt` on the validity window.
pub fn smoothing_integral(grid: &Grid, traj: &Trajectory, epsilon: f64) -> Result<ObservableSeries> {
    let window = traj.validity_window();
    let density = series_over("smoothing density", traj, window, |_, psi| {
        Ok(weighted_gradient_sq(grid, psi, |x| (1.0 + x * x).powf(-0.25 - 0.5 * epsilon))
            + super::sample_form(grid, psi, |x| (1.0 + x * x).powf(-1.0 - epsilon)))
    })?;
    let running = cumulative_trapezoid(&density.times, &density.values);
    Ok(ObservableSeries::new("smoothing integral I(T)", density.times, running)?.with_window(window))
}

/// `C` and `C'` from a trajectory; `C' = 0` without `W`.
pub fn morawetz_constants(
    setting: &Setting,
    traj: &Trajectory,
    gamma: &HermitianOperator,
    integral: &ObservableSeries,
    a: f64,
) -> Result<MorawetzConstants> {
    let grid = setting.grid;
    let window = integral.window;
    let t_start = integral.times[0];
    let sup_half_sobolev = samples_in(traj, window).iter().map(|&k| half_sobolev_sq(grid, &traj.states[k])).fold(0.0, f64::max);
    let c_prime = match setting.time_dependent {
        None => 0.0,
        Some(_) => {
            let multiplier = match setting.adaptor {
                Some(b) => gamma.plus(b.operator())?,
                None => gamma.clone(),
            };
            let forcing = series_over("|<i[W, gamma + B]>|", traj, window, |t, psi| {
                let w = operators::multiplication(grid, &setting.w_samples(t), "W")?;
                Ok(operators::commutator_expectation(grid, &w, &multiplier, psi).abs())
            })?;
            let running = cumulative_trapezoid(&forcing.times, &forcing.values);
            forcing
                .times
                .iter()
                .zip(&running)
                .filter(|(t, _)| **t - t_start > 0.0)
                .map(|(t, v)| v / (t - t_start).powf(1.0 - a))
                .fold(0.0, f64::max)
        }
    };
    let c = integral
        .times
        .iter()
        .zip(&integral.values)
        .map(|(t, v)| v - c_prime * (t - t_start).max(0.0).powf(1.0 - a))
        .fold(f64::NEG_INFINITY, f64::max)
        / sup_half_sobolev.max(f64::MIN_POSITIVE);
    Ok(MorawetzConstants { c_prime, c, sup_half_sobolev })
}

/// Adapted Morawetz estimate on a radial grid with `V ≥ 0`.
pub fn morawetz_suite(setting: &Setting, traj: &Trajectory, params: &MorawetzParams) -> Result<(EstimateReport, MorawetzConstants)> {
    let grid = setting.grid;
    if grid.kind() != GridKind::Radial3d {
        return Err(LabError::Unsupported("the Morawetz suite runs on radial grids".into()));
    }
    let mut report = EstimateReport::new("adapted Morawetz estimate: local smoothing");
    let vmin = setting.v_samples().min();
    if vmin < 0.0 {
        report.warn(format!("V has negative samples (min {vmin:e})"));
    }
    let profile = params.profile.samples(grid);
    let gamma = multiplier(grid, params)?;

    // (a) positivity of i[K, γ].
    let spectrum = commutator_spectrum(grid, &gamma)?;
    report.at_least(
        "min eig of i[K, gamma] on |x| <= 0.9L, relative",
        spectrum.interior_min / spectrum.norm.max(f64::MIN_POSITIVE),
        -params.positivity_tolerance,
    );
    if spectrum.full_min < -params.positivity_tolerance * spectrum.norm {
        report.warn(format!(
            "i[K, gamma] has corner eigenvalue {:.4e} from the Dirichlet truncation at r = L",
            spectrum.full_min
        ));
    }

    // (b) cancellation by B_γ.
    if setting.adaptor.is_some() {
        let (defect, residual) = cancellation_defect(setting, &profile)?;
        let h_scale = 4.0 / (grid.h() * grid.h()) + setting.v_samples().amax();
        let scale = setting.adaptor.map(|b| b.norm_bound()).unwrap_or(0.0) * h_scale;
        report.at_most(
            "|[i[V,gamma]]_- + i[H,B_gamma]|_w - |R(T_B)|_w, relative",
            (defect - residual).abs() / scale.max(f64::MIN_POSITIVE),
            params.cancellation_tolerance,
        );
    } else {
        report.skip("adaptor cancellation", "no B_gamma supplied");
    }

    // (c) smoothing integral and its constants.
    let integral = smoothing_integral(grid, traj, params.epsilon)?;
    let constants = morawetz_constants(setting, traj, &gamma, &integral, params.a)?;
    report.at_least("Morawetz constant C (finite, >= 0)", constants.c, 0.0);
    report.at_most("Morawetz constant C' (finite)", constants.c_prime, f64::MAX);
    let allowed = if setting.time_dependent.is_some() { 1.0 - params.a } else { 0.0 };
    let tail = ObservableSeries::new("I(T) tail", integral.times.clone(), integral.values.clone())?
        .with_window((integral.window.0.max(1.0), integral.window.1));
    let trend = growth_trend(&tail)?;
    report.at_most("smoothing integral growth slope vs 1 - a", trend.slope, allowed + params.trend_slack);
    report.fit("smoothing integral", &trend, tail.window);
    report.push_series(integral);

    // (d) local decay with t^{−θ} weight.
    if let Some(theta) = params.theta {
        let window = traj.validity_window();
        let l6 = series_over("|psi|_6^2", traj, window, |_, psi| Ok(l6_norm(grid, psi)?.powi(2)))?.with_window(window);
        let fit_window = (window.0.max(1.0), window.1);
        match series::fit_decay_rate(&l6, Some(fit_window)) {
            Ok(fit) => {
                report.at_most("|psi|_6^2 decay slope vs -theta + 0.1", fit.slope, -theta + 0.1);
                report.fit("|psi|_6^2", &fit, fit_window);
            }
            Err(e) => {
                report.at_most("|psi|_6^2 fit samples", 0.0, -1.0);
                report.warn(format!("L6 fit failed: {e}"));
            }
        }
        report.push_series(l6);
    }
    Ok((report, constants))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptor::{build_adaptor, morawetz_q};
    use crate::propagator::{sample_exact, WaveState};
    use crate::series::linear_times;
    use crate::spectral::diagonalize;
    use crate::{PotentialTerm, StaticPotential, State};
    use num_complex::Complex64;

    fn gaussian(grid: &Grid, width: f64) -> State {
        let psi = grid.sample_complex(|x| Complex64::new(x * (-(x / width).powi(2) / 2.0).exp(), 0.0));
        let m = grid.mass(&psi).sqrt();
        psi / Complex64::new(m, 0.0)
    }

    #[test]
    fn constant_profile_gives_four_k() {
        let grid = Grid::radial(48, 12.0).unwrap();
        let params = MorawetzParams { profile: MorawetzProfile::Constant, ..Default::default() };
        let s = commutator_spectrum(&grid, &multiplier(&grid, &params).unwrap()).unwrap();
        assert!(s.interior_min >= -1e-8 * s.norm, "{s:?}");
    }

    #[test]
    fn inverse_bracket_is_positive_inside_and_sign_flip_is_not() {
        let grid = Grid::radial(96, 20.0).unwrap();
        let s = commutator_spectrum(&grid, &multiplier(&grid, &MorawetzParams::default()).unwrap()).unwrap();
        assert!(s.interior_min >= -1e-8 * s.norm, "{s:?}");
        let flipped = MorawetzParams { corrupt_sign: true, ..Default::default() };
        let s = commutator_spectrum(&grid, &multiplier(&grid, &flipped).unwrap()).unwrap();
        assert!(s.interior_min < -1e-3 * s.norm, "{s:?}");
        assert!(operators::morawetz_multiplier(&grid, &grid.sample(|x| -1.0 / (1.0 + x))).is_err());
    }

    #[test]
    fn shell_potential_has_nonzero_q_and_b_cancels_it() {
        let grid = Grid::radial(64, 12.0).unwrap();
        let v = StaticPotential::new(vec![PotentialTerm::Shell { amplitude: 1.0, width: 0.7, center: 2.0 }]).unwrap();
        let g = MorawetzProfile::InverseBracket.samples(&grid);
        let q = morawetz_q(&v, &grid, &g).unwrap();
        assert!(q.samples.iter().all(|&x| x >= 0.0) && q.max_abs() > 0.1);
        // A Gaussian bump has x·∇V ≤ 0 everywhere, so its Q vanishes.
        let bump = morawetz_q(&StaticPotential::gaussian(1.0, 1.0), &grid, &g).unwrap();
        assert_eq!(bump.max_abs(), 0.0);

        let h = operators::hamiltonian(&grid, &v.samples(&grid)).unwrap();
        let spec = diagonalize(&h).unwrap().classify_default(&grid).unwrap();
        let b = build_adaptor(&spec, &grid, &q, 2.0, 1.0).unwrap();
        let setting = Setting::new(&grid, &v).with_spectrum(&spec).with_adaptor(&b);
        let (defect, residual) = cancellation_defect(&setting, &g).unwrap();
        assert!((defect - residual).abs() < 1e-8 * (1.0 + residual), "{defect} {residual}");
    }

    #[test]
    fn free_suite_has_zero_forcing_constant() {
        let grid = Grid::radial(128, 40.0).unwrap();
        let v = StaticPotential::free();
        let spec = diagonalize(&operators::laplacian(&grid)).unwrap();
        let psi0 = WaveState::initial(gaussian(&grid, 2.0), 0.0).unwrap();
        let traj = sample_exact(&spec, &grid, &psi0, &linear_times(0.0, 10.0, 101)).unwrap();
        let setting = Setting::new(&grid, &v);
        let (report, constants) = morawetz_suite(&setting, &traj, &MorawetzParams { theta: None, ..Default::default() }).unwrap();
        assert_eq!(constants.c_prime, 0.0);
        assert!(constants.c > 0.0);
        assert!(report.check("min eig of i[K, gamma] on |x| <= 0.9L, relative").unwrap().pass, "{}", report.render());
    }

    #[test]
    fn line_grids_are_rejected() {
        let grid = Grid::line(32, 5.0).unwrap();
        let v = StaticPotential::free();
        let spec = diagonalize(&operators::laplacian(&grid)).unwrap();
        let traj = sample_exact(&spec, &grid, &WaveState::initial(gaussian(&grid, 1.0), 0.0).unwrap(), &[0.0, 1.0]).unwrap();
        assert!(morawetz_suite(&Setting::new(&grid, &v), &traj, &MorawetzParams::default()).is_err());
    }
}
