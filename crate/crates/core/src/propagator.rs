//! Time evolution: exact in the eigenbasis for time-independent `H`, and
//! Strang splitting for `H(t) = K + V + W(t)` and the defocusing cubic NLS.
//!
//! The kinetic half of the splitting is diagonal in the sine basis of the
//! Dirichlet stencil, applied with an orthonormal DST-I through an FFT of
//! length `2(n + 1)`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{Grid, GridKind};
use crate::operators::laplacian_spectrum;
use crate::potential::{StaticPotential, TimeDependentPotential};
use crate::spectral::SpectralData;
use crate::State;

/// Mass beyond `0.9 * extent` above which a sample is outside the validity window.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    EigenbasisExact,
    SplitStep2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Initial,
    Evolved { method: Method, dt: Option<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub amplitudes: State,
    pub time: f64,
    pub provenance: Provenance,
}

impl WaveState {
    pub fn initial(amplitudes: State, time: f64) -> Result<Self> {
        if amplitudes.iter().any(|z| !z.is_finite()) {
            return Err(LabError::Numerical("initial state has non-finite entries".into()));
        }
        Ok(Self { amplitudes, time, provenance: Provenance::Initial })
    }
}

/// How a trajectory is produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionSpec {
    pub method: Method,
    pub dt: Option<f64>,
    pub lambda: f64,
    pub time_dependent: Option<TimeDependentPotential>,
}

impl EvolutionSpec {
    pub fn exact() -> Self {
        Self { method: Method::EigenbasisExact, dt: None, lambda: 0.0, time_dependent: None }
    }

    pub fn split(dt: f64) -> Self {
        Self { method: Method::SplitStep2, dt: Some(dt), lambda: 0.0, time_dependent: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(LabError::InvalidArgument(format!(
                "nonlinearity must be >= 0 (defocusing only), got {}",
                self.lambda
            )));
        }
        match self.method {
            Method::SplitStep2 => match self.dt {
                Some(dt) if dt > 0.0 && dt.is_finite() => Ok(()),
                other => Err(LabError::InvalidArgument(format!("split-step needs dt > 0, got {other:?}"))),
            },
            Method::EigenbasisExact => {
                if self.lambda != 0.0 || self.time_dependent.is_some() {
                    Err(LabError::InvalidArgument(
                        "exact eigenbasis evolution needs a time-independent linear H".into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// `ψ(t) = Φ e^{−iE(t − t0)} Φ† ψ(t0)`; `t` may precede the state's time.
pub fn evolve_linear(spec: &SpectralData, psi0: &WaveState, t: f64) -> WaveState {
    WaveState {
        amplitudes: spec.evolve(&psi0.amplitudes, t - psi0.time),
        time: t,
        provenance: Provenance::Evolved { method: Method::EigenbasisExact, dt: None },
    }
}

/// Orthonormal DST-I, its own inverse.
#[derive(Clone)]
pub struct SineTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SineTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SineTransform").field("n", &self.n).finish()
    }
}

impl SineTransform {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Self { n, fft }
    }

    /// `out_k = sqrt(2/(n+1)) Σ_j x_j sin(π (j+1)(k+1) / (n+1))`.
    pub fn apply(&self, x: &mut [Complex64]) {
        let n = self.n;
        let m = 2 * (n + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..n {
            buf[j + 1] = x[j];
            buf[m - 1 - j] = -x[j];
        }
        self.fft.process(&mut buf);
        // FFT of the odd extension is −2i Σ x_j sin(·).
        let scale = Complex64::new(0.0, 0.5 * (2.0 / (n + 1) as f64).sqrt());
        for k in 0..n {
            x[k] = buf[k + 1] * scale;
        }
    }
}

/// `e^{−iKt} ψ` for the free stencil, exact up to roundoff via the sine basis.
pub fn evolve_free(grid: &Grid, psi: &State, t: f64) -> Result<State> {
    grid.check_len(psi)?;
    let transform = SineTransform::new(grid.n());
    let mut out: Vec<Complex64> = psi.iter().copied().collect();
    transform.apply(&mut out);
    for (z, e) in out.iter_mut().zip(laplacian_spectrum(grid).iter()) {
        *z *= Complex64::from_polar(1.0, -e * t);
    }
    transform.apply(&mut out);
    Ok(State::from_vec(out))
}

/// One Strang step `e^{−iΦ dt/2} e^{−iK dt} e^{−iΦ dt/2}`, where the
/// potential phase `Φ = V + W(t_mid) + λ|ψ|²` is evaluated with `W` frozen
/// at the step midpoint.
#[derive(Debug, Clone)]
pub struct SplitStepper {
    grid: Grid,
    transform: SineTransform,
    kinetic: Vec<f64>,
    potential: Vec<f64>,
    time_dependent: Option<TimeDependentPotential>,
    lambda: f64,
}

impl SplitStepper {
    pub fn new(
        grid: &Grid,
        potential: &StaticPotential,
        time_dependent: Option<&TimeDependentPotential>,
        lambda: f64,
    ) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(LabError::InvalidArgument(format!(
                "nonlinearity must be >= 0 (defocusing only), got {lambda}"
            )));
        }
        if lambda > 0.0 && grid.kind() != GridKind::Line {
            return Err(LabError::Unsupported("the cubic equation is only evolved on line grids".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            transform: SineTransform::new(grid.n()),
            kinetic: laplacian_spectrum(grid).as_slice().to_vec(),
            potential: potential.samples(grid).as_slice().to_vec(),
            time_dependent: time_dependent.cloned(),
            lambda,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn phase_half(&self, psi: &mut State, t_mid: f64, half: f64) {
        let w = self.time_dependent.as_ref();
        for (j, z) in psi.iter_mut().enumerate() {
            let mut phi = self.potential[j];
            if let Some(w) = w {
                phi += w.value(self.grid.points()[j], t_mid);
            }
            if self.lambda > 0.0 {
                phi += self.lambda * z.norm_sqr();
            }
            *z *= Complex64::from_polar(1.0, -phi * half);
        }
    }

    /// Advances `psi` from `t` to `t + dt` (`dt` may be negative).
    pub fn step(&self, psi: &mut State, t: f64, dt: f64) {
        let t_mid = t + 0.5 * dt;
        self.phase_half(psi, t_mid, 0.5 * dt);
        let slice = psi.as_mut_slice();
        self.transform.apply(slice);
        for (z, &e) in slice.iter_mut().zip(&self.kinetic) {
            *z *= Complex64::from_polar(1.0, -e * dt);
        }
        self.transform.apply(slice);
        self.phase_half(psi, t_mid, 0.5 * dt);
    }

    /// Evolves from `psi0.time` to `t_final` with steps of size at most
    /// `dt`, shortened uniformly so that they tile the interval.
    pub fn evolve(&self, psi0: &WaveState, t_final: f64, dt: f64) -> Result<WaveState> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(LabError::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        self.grid.check_len(&psi0.amplitudes)?;
        let span = t_final - psi0.time;
        let steps = step_count(span, dt);
        let mut psi = psi0.amplitudes.clone();
        if steps > 0 {
            let h = span / steps as f64;
            for k in 0..steps {
                self.step(&mut psi, psi0.time + k as f64 * h, h);
            }
        }
        Ok(WaveState {
            amplitudes: psi,
            time: t_final,
            provenance: Provenance::Evolved { method: Method::SplitStep2, dt: Some(dt) },
        })
    }
}

fn step_count(span: f64, dt: f64) -> usize {
    let raw = span.abs() / dt;
    // Tolerate rounding when dt divides the span.
    let rounded = raw.round();
    if (raw - rounded).abs() <= 1e-9 * raw.max(1.0) {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

/// Strang splitting for `K + V + W(t)`.
pub fn evolve_timedep(
    grid: &Grid,
    potential: &StaticPotential,
    time_dependent: Option<&TimeDependentPotential>,
    psi0: &WaveState,
    t_final: f64,
    dt: f64,
) -> Result<WaveState> {
    SplitStepper::new(grid, potential, time_dependent, 0.0)?.evolve(psi0, t_final, dt)
}

/// Strang splitting for the defocusing cubic equation
/// `i∂_t ψ = (K + V)ψ + λ|ψ|²ψ` on a line grid.
pub fn evolve_nls(
    grid: &Grid,
    potential: &StaticPotential,
    lambda: f64,
    psi0: &WaveState,
    t_final: f64,
    dt: f64,
) -> Result<WaveState> {
    if grid.kind() != GridKind::Line {
        return Err(LabError::Unsupported("the cubic equation is only evolved on line grids".into()));
    }
    SplitStepper::new(grid, potential, None, lambda)?.evolve(psi0, t_final, dt)
}

/// `⟨K⟩ + ⟨V⟩ + (λ/2) ∫|ψ|⁴`.
pub fn nls_energy(grid: &Grid, potential: &StaticPotential, lambda: f64, psi: &State) -> f64 {
    let v = potential.samples(grid);
    let pot: f64 = psi.iter().zip(v.iter()).map(|(z, v)| v * z.norm_sqr()).sum::<f64>() * grid.measure();
    let quartic: f64 = psi.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() * grid.measure();
    grid.kinetic_form(psi) + pot + 0.5 * lambda * quartic
}

/// States sampled at increasing times, with the boundary-mass monitor.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub boundary_mass: Vec<f64>,
    pub method: Method,
    pub dt: Option<f64>,
}

impl Trajectory {
    fn assemble(grid: &Grid, times: Vec<f64>, states: Vec<State>, method: Method, dt: Option<f64>) -> Self {
        let boundary_mass = states.iter().map(|s| grid.boundary_mass(s) / grid.mass(s).max(f64::MIN_POSITIVE)).collect();
        Self { times, states, boundary_mass, method, dt }
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .ok_or_else(|| LabError::InvalidArgument(format!("time {t} is not a trajectory sample")))
    }

    pub fn state_at(&self, t: f64) -> Result<&State> {
        Ok(&self.states[self.index_of(t)?])
    }

    /// `[t_first, t_last_valid]`, where the relative boundary mass stays at
    /// or below [`BOUNDARY_MASS_LIMIT`] for every sample up to `t_last_valid`.
    pub fn validity_window(&self) -> (f64, f64) {
        let first = self.times.first().copied().unwrap_or(0.0);
        let mut last = first;
        for (t, m) in self.times.iter().zip(&self.boundary_mass) {
            if *m > BOUNDARY_MASS_LIMIT {
                break;
            }
            last = *t;
        }
        (first, last)
    }

    pub fn max_boundary_mass(&self) -> f64 {
        self.boundary_mass.iter().copied().fold(0.0, f64::max)
    }
}

fn check_times(times: &[f64], start: f64) -> Result<()> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LabError::InvalidArgument("sample times must be strictly increasing".into()));
    }
    if times.first().is_some_and(|&t| t < start - 1e-12) {
        return Err(LabError::InvalidArgument(format!("sample times must start at or after {start}")));
    }
    Ok(())
}

/// Exact samples `e^{−iH(t − t0)} ψ0`.
pub fn sample_exact(spec: &SpectralData, grid: &Grid, psi0: &WaveState, times: &[f64]) -> Result<Trajectory> {
    grid.check_len(&psi0.amplitudes)?;
    check_times(times, f64::NEG_INFINITY)?;
    let all: Vec<usize> = (0..spec.dim()).collect();
    let coeff = spec.coefficients(&all, &psi0.amplitudes);
    let states = times
        .iter()
        .map(|&t| {
            let c = State::from_fn(coeff.len(), |k, _| coeff[k] * Complex64::from_polar(1.0, -spec.values()[k] * (t - psi0.time)));
            spec.synthesize(&all, &c)
        })
        .collect();
    Ok(Trajectory::assemble(grid, times.to_vec(), states, Method::EigenbasisExact, None))
}

/// Split-step samples: the state is carried forward from `psi0.time`
/// through each requested time in turn.
pub fn sample_split(stepper: &SplitStepper, psi0: &WaveState, times: &[f64], dt: f64) -> Result<Trajectory> {
    check_times(times, psi0.time)?;
    let mut current = psi0.clone();
    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        current = stepper.evolve(&current, t, dt)?;
        states.push(current.amplitudes.clone());
    }
    Ok(Trajectory::assemble(stepper.grid(), times.to_vec(), states, Method::SplitStep2, Some(dt)))
}
