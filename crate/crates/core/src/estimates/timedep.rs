//! Time-dependent potentials and the defocusing cubic equation: dispersive
//! integral, `H¹` bound, asymptotic energy, the integration-by-parts
//! identity for `∂_tW`, the Gronwall monitor and the semilinear bookkeeping
//! `G = F − F₁`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::report::EstimateReport;
use super::{conformal_form, cumulative_trapezoid, growth_trend, integrate_samples, l6_norm, sample_form, samples_in, series_over, ConformalFactor, Setting};
use crate::error::{LabError, Result};
use crate::grid::{Grid, NormKind};
use crate::potential::StaticPotential;
use crate::propagator::{nls_energy, SplitStepper, Trajectory, WaveState};
use crate::series::{self, ObservableSeries};
use crate::State;

const GAUSS_NODES: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GAUSS_WEIGHTS: [f64; 5] = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];

/// `G(ρ) = F(ρ) − (1/ρ)∫₀^ρ F(z) dz`, with `G(0) = 0`. The integral uses
/// composite five-point Gauss-Legendre on 16 panels.
pub fn semilinear_g(f: impl Fn(f64) -> f64, rho: f64) -> f64 {
    if rho == 0.0 {
        return 0.0;
    }
    let panels = 16;
    let w = rho / panels as f64;
    let mut integral = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * w;
        for (x, g) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
            integral += g * f(mid + 0.5 * w * x);
        }
    }
    f(rho) - 0.5 * w * integral / rho
}

/// Which statement the suite asserts: uniform bounds for small coupling,
/// at most logarithmic growth otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Small,
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeDepParams {
    pub t0: f64,
    pub coupling: Coupling,
    /// Declared `C` in `∫₁^T[‖ψ‖²_{L⁶} + ‖(x − 2pt)ψ/t‖²] dt/t ≤ C·Lnorm(ψ(1))²`.
    pub dispersive_constant: f64,
    /// Declared bound on `sup ‖ψ(t)‖²_{H¹} / ‖ψ(t₀)‖²_{H¹}`.
    pub h1_constant: f64,
    pub trend_limit: f64,
    pub ibp_tolerance: f64,
    /// Support of the energy cutoff `f` used for the asymptotic energy.
    pub energy_window: (f64, f64),
    /// Fraction of the largest dyadic increment by which later ones may exceed earlier ones.
    pub increment_slack: f64,
    /// Bound on the last dyadic increment relative to the largest one.
    pub increment_tail_ratio: f64,
    /// Declared `d` in `|∂_tW| ≤ d t⁻¹⟨x⟩^{−σ}`; `None` accepts the measured one.
    pub declared_envelope: Option<f64>,
    pub sigma: f64,
    pub log_power_limit: f64,
}

impl Default for TimeDepParams {
    fn default() -> Self {
        Self {
            t0: 1.0,
            coupling: Coupling::Small,
            dispersive_constant: 50.0,
            h1_constant: 2.0,
            trend_limit: 0.05,
            ibp_tolerance: 1e-4,
            energy_window: (0.05, 2.0),
            increment_slack: 0.1,
            increment_tail_ratio: 0.5,
            declared_envelope: None,
            sigma: 2.0,
            log_power_limit: 0.1,
        }
    }
}

/// Smooth bump supported on `(lo, hi)`.
pub fn energy_cutoff(window: (f64, f64)) -> impl Fn(f64) -> f64 {
    let (lo, hi) = window;
    move |e| {
        let s = (2.0 * e - lo - hi) / (hi - lo);
        if s.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s * s)).exp()
        }
    }
}

/// `⟨ψ, f(H₀) ψ⟩` with `H₀` the time-independent part, from its spectrum.
fn energy_form(setting: &Setting, f: &impl Fn(f64) -> f64, psi: &State) -> Result<f64> {
    let spec = setting.spectrum()?;
    let all: Vec<usize> = (0..spec.dim()).collect();
    let c = spec.coefficients(&all, psi);
    Ok(c.iter().zip(spec.values().iter()).map(|(z, &e)| f(e) * z.norm_sqr()).sum::<f64>() * setting.grid.measure())
}

/// `Kψ` with the three-point stencil.
fn apply_kinetic(grid: &Grid, psi: &State) -> State {
    let n = grid.n();
    let inv = 1.0 / (grid.h() * grid.h());
    let zero = Complex64::new(0.0, 0.0);
    State::from_fn(n, |j, _| {
        let left = if j > 0 { psi[j - 1] } else { zero };
        let right = if j + 1 < n { psi[j + 1] } else { zero };
        (psi[j] * 2.0 - left - right) * inv
    })
}

/// `⟨ψ, i[K, f] ψ⟩ = −2 Im⟨Kψ, fψ⟩` for a multiplication operator `f`.
fn kinetic_commutator_form(grid: &Grid, psi: &State, f: impl Fn(f64) -> f64) -> f64 {
    let k = apply_kinetic(grid, psi);
    let s: Complex64 = k.iter().zip(psi.iter()).zip(grid.points()).map(|((a, b), &x)| a.conj() * b * f(x)).sum();
    -2.0 * s.im * grid.measure()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IbpBalance {
    /// `∫⟨4∂_tW⟩ dt`.
    pub accumulated: f64,
    /// `4⟨W⟩|_{t₀}^T − 4∫⟨i[K, W]⟩ dt`.
    pub boundary_form: f64,
    pub residual: f64,
    pub scale: f64,
}

/// The integration by parts of `⟨4∂_tW⟩` over the samples in `window`.
/// Uniform samples with an odd count get Simpson quadrature.
pub fn ibp_balance(setting: &Setting, traj: &Trajectory, window: (f64, f64)) -> Result<IbpBalance> {
    let w = setting
        .time_dependent
        .ok_or_else(|| LabError::InvalidArgument("the integration-by-parts identity needs W".into()))?;
    let grid = setting.grid;
    let idx = samples_in(traj, window);
    if idx.len() < 3 {
        return Err(LabError::InvalidArgument("too few samples for the integration-by-parts identity".into()));
    }
    let times: Vec<f64> = idx.iter().map(|&k| traj.times[k]).collect();
    let mut dw = Vec::with_capacity(idx.len());
    let mut comm = Vec::with_capacity(idx.len());
    for &k in &idx {
        let (t, psi) = (traj.times[k], &traj.states[k]);
        dw.push(4.0 * sample_form(grid, psi, |x| w.dt(x, t)));
        comm.push(4.0 * kinetic_commutator_form(grid, psi, |x| w.value(x, t)));
    }
    let (first, last) = (idx[0], *idx.last().unwrap());
    let w_first = 4.0 * sample_form(grid, &traj.states[first], |x| w.value(x, traj.times[first]));
    let w_last = 4.0 * sample_form(grid, &traj.states[last], |x| w.value(x, traj.times[last]));
    let accumulated = integrate_samples(&times, &dw);
    let boundary_form = w_last - w_first - integrate_samples(&times, &comm);
    let scale = accumulated.abs().max(w_first.abs()).max(w_last.abs());
    Ok(IbpBalance { accumulated, boundary_form, residual: (accumulated - boundary_form).abs(), scale })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GronwallMonitor {
    #[serde(skip)]
    pub series: ObservableSeries,
    pub d: f64,
    /// `min_t [M(t₀) e^{d(t − t₀)} − M(t)]`.
    pub margin: f64,
    pub respected: bool,
}

/// `M(s) = ⟨ψ(s), [|x − 2ps|²/s² + ⟨x⟩^{−2σ}] ψ(s)⟩` on the samples with
/// `s > 0`, and whether `M(t) ≤ M(t₀) e^{d(t − t₀)}`.
pub fn gronwall_monitor(grid: &Grid, traj: &Trajectory, sigma: f64, d: f64) -> Result<GronwallMonitor> {
    let start = traj.times.iter().copied().find(|&t| t > 0.0).ok_or_else(|| LabError::InvalidArgument("no positive sample times".into()))?;
    let window = (start, traj.times.last().copied().unwrap_or(start));
    let series = series_over("M(s)", traj, window, |s, psi| {
        Ok(conformal_form(grid, ConformalFactor::Literal, s, psi) / (s * s)
            + sample_form(grid, psi, |x| (1.0 + x * x).powf(-sigma)))
    })?
    .with_window(traj.validity_window());
    let (t0, m0) = (series.times[0], series.values[0]);
    let margin = series
        .times
        .iter()
        .zip(&series.values)
        .map(|(&t, &m)| m0 * (d * (t - t0)).exp() - m)
        .fold(f64::INFINITY, f64::min);
    Ok(GronwallMonitor { series, d, margin, respected: margin >= -1e-12 * m0.abs().max(1.0) })
}

/// Dyadic increments `|E(2^{j+1}t₀) − E(2^j t₀)|` of a series, using the
/// nearest samples.
fn dyadic_increments(series: &ObservableSeries, t0: f64) -> Vec<f64> {
    let nearest = |t: f64| {
        series
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(k, _)| series.values[k])
            .unwrap_or(0.0)
    };
    let end = series.window.1;
    let mut out = Vec::new();
    let mut a = t0;
    while 2.0 * a <= end * (1.0 + 1e-12) {
        out.push((nearest(2.0 * a) - nearest(a)).abs());
        a *= 2.0;
    }
    out
}

/// Dispersive integral, `H¹` bound, asymptotic energy and the
/// integration-by-parts identity for `H = K + V + W(t)`.
pub fn timedep_suite(setting: &Setting, traj: &Trajectory, params: &TimeDepParams) -> Result<EstimateReport> {
    let mut report = EstimateReport::new("time-dependent potentials: dispersive estimate and asymptotic energy");
    let grid = setting.grid;
    let valid = traj.validity_window();
    let window = (valid.0.max(params.t0), valid.1);
    if window.1 <= window.0 {
        report.warn(format!("validity window {valid:?} ends before t0 = {}", params.t0));
        report.skip("time-dependent suite", "empty validity window after t0");
        return Ok(report);
    }
    if valid.1 < traj.times.last().copied().unwrap_or(valid.1) {
        report.warn(format!("boundary mass exceeds its limit after t = {:.3}; later samples ignored", valid.1));
    }

    if let Some(w) = setting.time_dependent {
        let measured = w.envelope_constant(grid, params.sigma);
        if let Some(d) = params.declared_envelope {
            if measured > d * (1.0 + 1e-12) {
                report.warn(format!("W violates its declared envelope: measured d = {measured:.4e} > declared {d:.4e}"));
                report.skip("time-dependent suite", "W outside the declared envelope");
                return Ok(report);
            }
        }
        let gron = gronwall_monitor(grid, traj, params.sigma, params.declared_envelope.unwrap_or(measured))?;
        report.at_least("Gronwall envelope margin M(t0)e^{d(t-t0)} - M(t)", gron.margin, -1e-12);
        report.push_series(gron.series);
    }

    let k0 = traj.index_of(window.0).or_else(|_| {
        samples_in(traj, window).first().copied().ok_or_else(|| LabError::InvalidArgument("no samples after t0".into()))
    })?;
    let psi_start = &traj.states[k0];
    let lnorm = grid.norm(psi_start, NormKind::L)?;

    // (a) running dispersive integral.
    let integrand = series_over("|psi|_6^2 + |(x-2pt)psi/t|^2", traj, window, |t, psi| {
        Ok(l6_norm(grid, psi)?.powi(2) + conformal_form(grid, ConformalFactor::Literal, t, psi) / (t * t))
    })?;
    let weighted: Vec<f64> = integrand.times.iter().zip(&integrand.values).map(|(t, v)| v / t).collect();
    let running = cumulative_trapezoid(&integrand.times, &weighted);
    let dispersive = ObservableSeries::new("dispersive integral I(T)", integrand.times.clone(), running)?.with_window(window);

    // (b) H¹ norm.
    let h1 = series_over("|psi|_H1^2", traj, window, |_, psi| Ok(grid.norm(psi, NormKind::H1)?.powi(2)))?.with_window(window);

    // (c) asymptotic energy.
    let f = energy_cutoff(params.energy_window);
    let energy = series_over("<f(H0)>", traj, window, |_, psi| energy_form(setting, &f, psi))?.with_window(window);
    let increments = dyadic_increments(&energy, window.0);

    match params.coupling {
        Coupling::Small => {
            report.at_most("dispersive integral / Lnorm(psi(t0))^2", dispersive.max() / (lnorm * lnorm), params.dispersive_constant);
            let tail = ObservableSeries::new("I(T) tail", dispersive.times.clone(), dispersive.values.clone())?
                .with_window((window.0 + 1.0, window.1));
            let trend = growth_trend(&tail)?;
            report.at_most("dispersive integral growth slope", trend.slope, params.trend_limit);
            report.fit("dispersive integral", &trend, tail.window);

            let h1_0 = h1.values[0];
            report.at_most("sup |psi|_H1^2 / |psi(t0)|_H1^2", h1.max() / h1_0, params.h1_constant);
            let trend = growth_trend(&h1)?;
            report.at_most("H1 growth slope", trend.slope, params.trend_limit);

            // Early blocks may still see the packet crossing W; convergence
            // shows from the largest increment on.
            let (peak, largest) = increments
                .iter()
                .copied()
                .enumerate()
                .fold((0, 0.0), |best, (k, v)| if v > best.1 { (k, v) } else { best });
            if increments.len() >= 2 {
                let worst = increments[peak..].windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
                report.at_most(
                    "dyadic energy increments non-increasing after the largest (max rise)",
                    worst,
                    params.increment_slack * largest + 1e-12,
                );
                let last = increments.last().copied().unwrap_or(0.0);
                let ratio = if largest > 1e-12 { last / largest } else { 0.0 };
                report.at_most("last dyadic energy increment / largest", ratio, params.increment_tail_ratio);
            } else {
                report.skip("dyadic energy increments", "window shorter than two dyadic blocks");
            }
        }
        Coupling::Large => {
            let remainder = series_over("|<4x.grad W + 4W + 4t dW>|", traj, window, |t, psi| {
                Ok(match setting.time_dependent {
                    Some(w) => sample_form(grid, psi, |x| 4.0 * w.x_gradient(x, t) + 4.0 * w.value(x, t) + 4.0 * t * w.dt(x, t)).abs(),
                    None => 0.0,
                })
            })?;
            let weighted: Vec<f64> = remainder.times.iter().zip(&remainder.values).map(|(t, v)| v / t).collect();
            let running = cumulative_trapezoid(&remainder.times, &weighted);
            let forcing = ObservableSeries::new("forcing integral", remainder.times.clone(), running)?.with_window(window);
            for side in [&dispersive, &forcing] {
                let late = (window.0 + 1.0, window.1);
                let log_fit = series::fit_log_growth(side, Some(late))?;
                report.at_most(format!("{} log-t coefficient |c| (finite)", side.label), log_fit.slope.abs(), f64::MAX);
                report.fit(format!("{} against log t", side.label), &log_fit, late);
                let power = series::fit_decay_rate(side, Some(late))?;
                report.at_most(format!("{} power-law slope", side.label), power.slope, params.log_power_limit);
            }
            report.skip("uniform H1 and energy bounds", "coupling is not small; only logarithmic growth is asserted");
            report.push_series(forcing);
        }
    }

    // (d) integration by parts of ⟨4∂_tW⟩.
    if setting.time_dependent.is_some() {
        let b = ibp_balance(setting, traj, window)?;
        report.at_most("integration-by-parts identity, relative residual", b.residual / b.scale.max(f64::MIN_POSITIVE), params.ibp_tolerance);
    } else {
        report.skip("integration-by-parts identity", "W = 0");
    }
    report.push_series(dispersive);
    report.push_series(h1);
    report.push_series(energy);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlsParams {
    pub lnorm_limit: f64,
    pub mass_tolerance: f64,
    pub energy_tolerance: f64,
    /// Time and coarsest step of the self-convergence test.
    pub convergence_time: f64,
    pub convergence_dt: f64,
    pub ratio_band: (f64, f64),
    pub fit_window: (f64, f64),
    pub sup_slope_limit: f64,
    pub balance_tolerance: f64,
}

impl Default for NlsParams {
    fn default() -> Self {
        Self {
            lnorm_limit: 0.2,
            mass_tolerance: 1e-10,
            energy_tolerance: 1e-3,
            convergence_time: 2.0,
            convergence_dt: 0.05,
            ratio_band: (3.5, 4.5),
            fit_window: (1.0, 30.0),
            sup_slope_limit: -0.3,
            balance_tolerance: 1e-3,
        }
    }
}

/// `Q(t) = ‖(x − 2pt)ψ‖² + 4t²⟨V⟩ + 4t²∫F₁(|ψ|²)|ψ|²` and its rate
/// `4t⟨2V + x·∇V⟩ + 4t∫G(|ψ|²)|ψ|²` for `F(ρ) = λρ` in one dimension.
pub fn pseudo_conformal_terms(grid: &Grid, potential: &StaticPotential, lambda: f64, t: f64, psi: &State) -> (f64, f64) {
    let f = |rho: f64| lambda * rho;
    let mu = grid.measure();
    let (mut f1, mut g) = (0.0, 0.0);
    for z in psi.iter() {
        let rho = z.norm_sqr();
        let gv = semilinear_g(f, rho);
        g += gv * rho;
        f1 += (f(rho) - gv) * rho;
    }
    let q = conformal_form(grid, ConformalFactor::Literal, t, psi)
        + 4.0 * t * t * sample_form(grid, psi, |x| potential.value(x))
        + 4.0 * t * t * f1 * mu;
    let rate = 4.0 * t * sample_form(grid, psi, |x| 2.0 * potential.value(x) + potential.x_gradient(x)) + 4.0 * t * g * mu;
    (q, rate)
}

/// Defocusing cubic equation on a line grid: conservation, order of the
/// splitting, `L^∞` decay and the pseudo-conformal balance.
pub fn nls_suite(
    stepper: &SplitStepper,
    potential: &StaticPotential,
    psi0: &WaveState,
    traj: &Trajectory,
    params: &NlsParams,
) -> Result<EstimateReport> {
    let mut report = EstimateReport::new("defocusing cubic equation: conservation and decay");
    let grid = stepper.grid();
    let lambda = stepper.lambda();
    let lnorm = grid.norm(&psi0.amplitudes, NormKind::L)?;
    report.at_most("Lnorm(psi0)", lnorm, params.lnorm_limit);
    let vmin = potential.samples(grid).min();
    if vmin < 0.0 {
        report.warn(format!("V has negative samples (min {vmin:e})"));
    }

    let window = traj.validity_window();
    let idx = samples_in(traj, window);
    let m0 = grid.mass(&psi0.amplitudes);
    let e0 = nls_energy(grid, potential, lambda, &psi0.amplitudes);
    let mass_drift = idx.iter().map(|&k| (grid.mass(&traj.states[k]) - m0).abs()).fold(0.0, f64::max);
    let energy_drift = idx.iter().map(|&k| (nls_energy(grid, potential, lambda, &traj.states[k]) - e0).abs()).fold(0.0, f64::max);
    report.at_most("mass drift", mass_drift, params.mass_tolerance);
    report.at_most("relative energy drift", energy_drift / e0.abs().max(f64::MIN_POSITIVE), params.energy_tolerance);

    let (t_c, dt) = (params.convergence_time, params.convergence_dt);
    let run = |step: f64| stepper.evolve(psi0, psi0.time + t_c, step).map(|s| s.amplitudes);
    let (a, b, c) = (run(dt)?, run(dt / 2.0)?, run(dt / 4.0)?);
    let ratio = (&a - &b).norm() / (&b - &c).norm();
    report.within("splitting self-convergence ratio", ratio, params.ratio_band.0, params.ratio_band.1);

    let sup = series_over("|psi|_inf", traj, window, |_, psi| grid.norm(psi, NormKind::Sup))?.with_window(window);
    let fit_window = (params.fit_window.0, params.fit_window.1.min(window.1));
    if fit_window.1 < params.fit_window.1 {
        report.warn(format!("sup-norm fit window cut to {fit_window:?} by boundary mass"));
    }
    let fit = series::fit_decay_rate(&sup, Some(fit_window))?;
    report.at_most("sup-norm decay slope", fit.slope, params.sup_slope_limit);
    report.fit("|psi|_inf", &fit, fit_window);
    report.push_series(sup);

    if grid.kind() == crate::grid::GridKind::Line {
        let mut times = Vec::with_capacity(idx.len());
        let mut q = Vec::with_capacity(idx.len());
        let mut rate = Vec::with_capacity(idx.len());
        for &k in &idx {
            let (qk, rk) = pseudo_conformal_terms(grid, potential, lambda, traj.times[k], &traj.states[k]);
            times.push(traj.times[k]);
            q.push(qk);
            rate.push(rk);
        }
        let integral = *cumulative_trapezoid(&times, &rate).last().unwrap_or(&0.0);
        let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let increment = q.last().unwrap_or(&0.0) - q.first().unwrap_or(&0.0);
        report.at_most(
            "pseudo-conformal balance, relative residual",
            (increment - integral).abs() / scale.max(f64::MIN_POSITIVE),
            params.balance_tolerance,
        );
        report.push_series(ObservableSeries::new("pseudo-conformal Q(t)", times, q)?.with_window(window));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators;
    use crate::propagator::{sample_exact, sample_split};
    use crate::series::linear_times;
    use crate::spectral::diagonalize;
    use crate::TimeDependentPotential;

    fn gaussian(grid: &Grid, width: f64, amplitude: f64) -> State {
        let psi = grid.sample_complex(|x| Complex64::new((-(x / width).powi(2) / 2.0).exp(), 0.0));
        let m = grid.mass(&psi).sqrt();
        psi * Complex64::new(amplitude / m, 0.0)
    }

    #[test]
    fn semilinear_g_closed_forms() {
        for rho in [0.0, 0.3, 1.0, 7.5] {
            assert!((semilinear_g(|r| 2.0 * r, rho) - rho).abs() < 1e-12);
            assert!(semilinear_g(|_| 3.0, rho).abs() < 1e-12);
            assert!((semilinear_g(|r| r * r, rho) - 2.0 * rho * rho / 3.0).abs() < 1e-12 * (1.0 + rho * rho));
        }
    }

    #[test]
    fn cutoff_is_compactly_supported() {
        let f = energy_cutoff((1.0, 3.0));
        assert_eq!(f(1.0), 0.0);
        assert_eq!(f(3.5), 0.0);
        assert!((f(2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kinetic_commutator_matches_dense_operator() {
        let grid = Grid::line(64, 8.0).unwrap();
        let psi = grid.sample_complex(|x| Complex64::from_polar((-x * x / 4.0).exp(), 0.7 * x));
        let w = grid.sample(|x| (-x * x).exp());
        let k = operators::laplacian(&grid);
        let m = operators::multiplication(&grid, &w, "w").unwrap();
        let dense = operators::commutator_expectation(&grid, &k, &m, &psi);
        assert!((kinetic_commutator_form(&grid, &psi, |x| (-x * x).exp()) - dense).abs() < 1e-10);
    }

    #[test]
    fn gronwall_monitor_free_flow_and_zero_sigma() {
        let grid = Grid::line(256, 30.0).unwrap();
        let spec = diagonalize(&operators::laplacian(&grid)).unwrap();
        let psi0 = WaveState::initial(gaussian(&grid, 1.5, 1.0), 0.0).unwrap();
        let traj = sample_exact(&spec, &grid, &psi0, &linear_times(1.0, 4.0, 31)).unwrap();
        let m = gronwall_monitor(&grid, &traj, 1.0, 0.0).unwrap();
        assert!(m.series.values.windows(2).all(|w| w[1] < w[0]));
        assert!(m.respected);
        let flat = gronwall_monitor(&grid, &traj, 0.0, 0.0).unwrap();
        let c = conformal_form(&grid, ConformalFactor::Literal, 1.0, &traj.states[0]);
        for (t, v) in flat.series.times.iter().zip(&flat.series.values) {
            assert!((v - c / (t * t) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ibp_identity_holds_on_split_step_trajectory() {
        let grid = Grid::radial(256, 30.0).unwrap();
        let v = StaticPotential::gaussian(1.0, 1.0);
        let w = TimeDependentPotential::new(0.05, 1.0, 0.5).unwrap();
        let stepper = SplitStepper::new(&grid, &v, Some(&w), 0.0).unwrap();
        let psi0 = WaveState::initial(gaussian(&grid, 1.0, 1.0), 1.0).unwrap();
        let traj = sample_split(&stepper, &psi0, &linear_times(1.0, 6.0, 251), 0.005).unwrap();
        let setting = Setting::new(&grid, &v).with_time_dependent(Some(&w));
        let b = ibp_balance(&setting, &traj, (1.0, 6.0)).unwrap();
        assert!(b.residual <= 1e-4 * b.scale, "{b:?}");
        // Dropping the commutator term breaks the balance.
        let w_end = 4.0 * sample_form(&grid, traj.states.last().unwrap(), |x| w.value(x, 6.0));
        let w_start = 4.0 * sample_form(&grid, &traj.states[0], |x| w.value(x, 1.0));
        assert!((b.accumulated - (w_end - w_start)).abs() > 1e-2 * b.scale);
    }

    #[test]
    fn suite_without_w_has_constant_energy() {
        let grid = Grid::radial(256, 60.0).unwrap();
        let v = StaticPotential::gaussian(1.0, 1.0);
        let h = operators::hamiltonian(&grid, &v.samples(&grid)).unwrap();
        let spec = diagonalize(&h).unwrap().classify_default(&grid).unwrap();
        let psi0 = WaveState::initial(gaussian(&grid, 2.0, 1.0), 0.0).unwrap();
        let traj = sample_exact(&spec, &grid, &psi0, &linear_times(0.0, 12.0, 121)).unwrap();
        let setting = Setting::new(&grid, &v).with_spectrum(&spec);
        let report = timedep_suite(&setting, &traj, &TimeDepParams::default()).unwrap();
        let energy = report.series.iter().find(|s| s.label == "<f(H0)>").unwrap();
        for e in &energy.values {
            assert!((e - energy.values[0]).abs() < 1e-10);
        }
        for name in ["dispersive integral / Lnorm(psi(t0))^2", "sup |psi|_H1^2 / |psi(t0)|_H1^2", "dyadic energy increments non-increasing after the largest (max rise)"] {
            assert!(report.check(name).is_some_and(|c| c.pass), "{name}\n{}", report.render());
        }
        assert!(report.skipped.iter().any(|s| s.name == "integration-by-parts identity"));
    }

    #[test]
    fn pseudo_conformal_balance_on_cubic_flow() {
        let grid = Grid::line(512, 40.0).unwrap();
        let v = StaticPotential::gaussian(0.1, 1.0);
        let stepper = SplitStepper::new(&grid, &v, None, 1.0).unwrap();
        let psi0 = WaveState::initial(gaussian(&grid, 1.0, 1.0), 0.0).unwrap();
        let traj = sample_split(&stepper, &psi0, &linear_times(0.0, 3.0, 301), 0.002).unwrap();
        let (mut times, mut q, mut rate) = (vec![], vec![], vec![]);
        for (t, psi) in traj.times.iter().zip(&traj.states) {
            let (a, b) = pseudo_conformal_terms(&grid, &v, 1.0, *t, psi);
            times.push(*t);
            q.push(a);
            rate.push(b);
        }
        let integral = *cumulative_trapezoid(&times, &rate).last().unwrap();
        let increment = q.last().unwrap() - q[0];
        assert!(integral.abs() > 1e-2);
        assert!((increment - integral).abs() < 1e-3 * q.iter().fold(0.0f64, |m, v| m.max(v.abs())), "{increment} {integral}");
    }
}
