//! Structural checks on a constructed adaptor `B_V` and the pointwise
//! weighted decay of `e^{−iHt} P_c`.

use serde::Serialize;

use super::conformal::b_trick_defect;
use super::report::EstimateReport;
use crate::adaptor::{quadrature_adaptor, AdaptorOperator, QSelection, WeightedBasis};
use crate::error::{LabError, Result};
use crate::grid::Grid;
use crate::linalg;
use crate::operators;
use crate::potential::StaticPotential;
use crate::series::{self, log_times, linear_times, ObservableSeries};
use crate::spectral::{diagonalize, SpectralData};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptorSuiteParams {
    pub hermiticity_tolerance: f64,
    pub support_tolerance: f64,
    pub positivity_tolerance: f64,
    pub closure_tolerance: f64,
    pub quadrature_tolerance: f64,
    /// Size of the brute-force comparison system (at most 16).
    pub quadrature_points: usize,
    pub quadrature_panels: usize,
    /// Number of horizons at which `residual_weighted` is sampled.
    pub monotone_samples: usize,
    /// Whether `B` serves the conformal identity, so that `Q` must cancel
    /// `[4x·∇V + 4V]_+`.
    pub conformal_cancellation: bool,
}

impl Default for AdaptorSuiteParams {
    fn default() -> Self {
        Self {
            hermiticity_tolerance: 1e-10,
            support_tolerance: 1e-10,
            positivity_tolerance: 1e-8,
            closure_tolerance: 1e-8,
            quadrature_tolerance: 1e-6,
            quadrature_points: 16,
            quadrature_panels: 200,
            monotone_samples: 12,
            conformal_cancellation: true,
        }
    }
}

/// `q_rule` rebuilds the same `Q` on the small comparison grid.
pub fn adaptor_suite(
    grid: &Grid,
    potential: &StaticPotential,
    spec: &SpectralData,
    adaptor: &AdaptorOperator,
    q_rule: impl Fn(&Grid) -> Result<QSelection>,
    params: &AdaptorSuiteParams,
) -> Result<EstimateReport> {
    let mut report = EstimateReport::new("adaptor operator B_V");
    for w in adaptor.warnings() {
        report.warn(w.clone());
    }
    let scale = adaptor.operator().max_abs().max(f64::MIN_POSITIVE);
    // The position-basis matrix is symmetrized on construction; the
    // continuum-basis matrix is not, so its defect is the honest one.
    let reduced = adaptor.reduced();
    let herm = linalg::hermiticity_residual(reduced) / linalg::max_abs(reduced).max(f64::MIN_POSITIVE);
    report.at_most("hermiticity defect of B (relative)", herm, params.hermiticity_tolerance);
    report.at_most("|(I - P_c) B| (relative)", adaptor.support_defect(spec) / scale, params.support_tolerance);

    if adaptor.q().is_nonpositive() {
        let min = adaptor.min_eigenvalue(spec);
        report.at_least("min eig of B / |B|", min / adaptor.norm_bound().max(f64::MIN_POSITIVE), -params.positivity_tolerance);
    } else {
        report.skip("positivity of B", "-Q is not nonnegative");
    }

    let h = operators::hamiltonian(grid, &potential.samples(grid))?;
    report.at_most("i[H,B] - P_cQP_c - R(T_B) (relative)", adaptor.commutator_closure(&h, spec)?, params.closure_tolerance);

    if params.conformal_cancellation {
        report.at_most("B-trick: max(Q + [4x.grad V + 4V]_+)", b_trick_defect(adaptor, grid, potential), 0.0);
    }

    // Brute-force time quadrature on a small system of the same kind.
    let n = params.quadrature_points.min(16);
    let small = Grid::new(grid.kind(), n, grid.extent())?;
    let h_small = operators::hamiltonian(&small, &potential.samples(&small))?;
    let spec_small = diagonalize(&h_small)?.classify(spec.threshold())?;
    let q_small = q_rule(&small)?;
    let b_small = crate::adaptor::build_adaptor(&spec_small, &small, &q_small, adaptor.horizon(), adaptor.sigma())?;
    let brute = quadrature_adaptor(&h_small, &spec_small, &q_small, adaptor.horizon(), params.quadrature_panels)?;
    let diff = linalg::max_abs(&(b_small.matrix() - &brute)) / linalg::max_abs(&brute).max(f64::MIN_POSITIVE);
    report.at_most(&format!("eigenbasis vs time quadrature, n = {n} (relative)"), diff, params.quadrature_tolerance);

    // residual_weighted(T) non-increasing over admissible horizons. Past
    // about 0.7 of the wall-return time reflected lattice waves re-enter
    // the weighted region and the residual grows again.
    let weighted = WeightedBasis::new(spec, grid, adaptor.sigma())?;
    let horizons = linear_times(0.0, 0.5 * grid.operator_horizon(), params.monotone_samples.max(2));
    let residuals: Vec<f64> = horizons.iter().map(|&t| adaptor.residual_at(&weighted, t)).collect();
    let top = residuals.iter().copied().fold(0.0, f64::max);
    let rise = residuals.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    report.at_most("residual_weighted(T) rise over T <= horizon/2", rise, 1e-9 * top);
    report.push_series(ObservableSeries::new("residual_weighted(T_B)", horizons, residuals)?);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedDecayParams {
    pub sigma: f64,
    pub window: (f64, f64),
    pub samples: usize,
    pub band: (f64, f64),
}

impl Default for WeightedDecayParams {
    fn default() -> Self {
        Self { sigma: 1.0, window: (5.0, 50.0), samples: 24, band: (-1.25, -0.8) }
    }
}

/// `‖⟨x⟩^{−σ} e^{−iHt} P_c ⟨x⟩^{−σ}‖` at log-spaced times.
pub fn weighted_decay_series(spec: &SpectralData, grid: &Grid, params: &WeightedDecayParams) -> Result<ObservableSeries> {
    if !(params.window.0 > 0.0) || params.window.1 <= params.window.0 {
        return Err(LabError::InvalidArgument(format!("bad decay window {:?}", params.window)));
    }
    let weighted = WeightedBasis::new(spec, grid, params.sigma)?;
    let times = log_times(params.window.0, params.window.1, params.samples);
    let values = times.iter().map(|&t| weighted.propagator_norm(t)).collect();
    Ok(ObservableSeries::new("|<x>^-s e^{-iHt} P_c <x>^-s|", times, values)?.with_window(params.window))
}

/// Fitted log-log slope of the weighted propagator norm.
pub fn weighted_decay_suite(spec: &SpectralData, grid: &Grid, params: &WeightedDecayParams) -> Result<EstimateReport> {
    let mut report = EstimateReport::new("pointwise weighted decay");
    let horizon = grid.operator_horizon();
    if params.window.1 > horizon {
        report.warn(format!(
            "decay window ends at {} beyond the box horizon {horizon:.3}; reflected waves enter the fit",
            params.window.1
        ));
    }
    let s = weighted_decay_series(spec, grid, params)?;
    let fit = series::fit_decay_rate(&s, Some(params.window))?;
    report.within("weighted decay slope", fit.slope, params.band.0, params.band.1);
    report.fit("weighted propagator norm", &fit, params.window);
    report.push_series(s);
    Ok(report)
}
