//! Weak-form operator identities: `i[H, A] = 2K − x·∇V` and conservation
//! of the conformal factor under the free flow, with their behavior under
//! grid refinement.

use serde::Serialize;

use super::report::EstimateReport;
use super::{conformal_form, sample_form, ConformalFactor};
use crate::error::Result;
use crate::grid::Grid;
use crate::operators::{self, commutator_expectation};
use crate::potential::StaticPotential;
use crate::propagator::evolve_free;
use crate::State;

/// `|⟨ψ, i[H, A] ψ⟩ − ⟨ψ, (2K − x·∇V) ψ⟩|`.
pub fn dilation_commutator_residual(grid: &Grid, potential: &StaticPotential, psi: &State) -> Result<f64> {
    let h = operators::hamiltonian(grid, &potential.samples(grid))?;
    let a = operators::dilation(grid);
    let lhs = commutator_expectation(grid, &h, &a, psi);
    let rhs = 2.0 * grid.kinetic_form(psi) - sample_form(grid, psi, |x| potential.x_gradient(x));
    Ok((lhs - rhs).abs())
}

/// `|d/dt ⟨C(t)⟩|` at `t` along the free flow from `psi0` at time zero,
/// by a centered difference with step `dt`.
pub fn free_conformal_residual(grid: &Grid, factor: ConformalFactor, psi0: &State, t: f64, dt: f64) -> Result<f64> {
    let plus = evolve_free(grid, psi0, t + dt)?;
    let minus = evolve_free(grid, psi0, t - dt)?;
    let d = (conformal_form(grid, factor, t + dt, &plus) - conformal_form(grid, factor, t - dt, &minus)) / (2.0 * dt);
    Ok(d.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityParams {
    pub time: f64,
    pub step: f64,
    pub tolerance: f64,
    pub ratio_band: (f64, f64),
}

impl Default for IdentityParams {
    fn default() -> Self {
        Self { time: 1.0, step: 1e-3, tolerance: 1e-4, ratio_band: (3.5, 4.5) }
    }
}

/// Both identities on `grid` and on its refinement. `state` builds the
/// test state on a given grid, so the same profile is sampled twice.
pub fn operator_identity_suite(
    grid: &Grid,
    potential: &StaticPotential,
    state: impl Fn(&Grid) -> State,
    params: &IdentityParams,
) -> Result<EstimateReport> {
    let mut report = EstimateReport::new("dilation commutator and free conformal conservation");
    let fine = grid.refined();
    let (psi, psi_fine) = (state(grid), state(&fine));

    let r0 = dilation_commutator_residual(grid, potential, &psi)?;
    let r1 = dilation_commutator_residual(&fine, potential, &psi_fine)?;
    report.at_most("i[H,A] weak residual", r0, params.tolerance);
    report.within("i[H,A] residual ratio under h halving", r0 / r1, params.ratio_band.0, params.ratio_band.1);

    let (t, dt) = (params.time, params.step);
    let lit = free_conformal_residual(grid, ConformalFactor::Literal, &psi, t, dt)?;
    report.at_most("free conformal conservation, literal factor", lit, params.tolerance);
    let k0 = free_conformal_residual(grid, ConformalFactor::Kinetic, &psi, t, dt)?;
    let k1 = free_conformal_residual(&fine, ConformalFactor::Kinetic, &psi_fine, t, dt)?;
    report.at_most("free conformal conservation, stencil factor", k0, params.tolerance);
    report.within("stencil-factor residual ratio under h halving", k0 / k1, params.ratio_band.0, params.ratio_band.1);
    Ok(report)
}
