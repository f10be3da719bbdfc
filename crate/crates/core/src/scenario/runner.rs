//! Scenario pipeline: grid, potential, spectrum, adaptor, trajectory, then
//! the selected suites, with every artifact written under one run directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{InitialState, ObservableKind, QRule, ScenarioConfig, Spacing, SuiteName};
use crate::adaptor::{
    alternative_q, build_adaptor, conformal_q, default_horizon, dilation_q, morawetz_q, AdaptorOperator, QSelection,
};
use crate::error::{LabError, Result};
use crate::estimates::adaptor_suite::{adaptor_suite, weighted_decay_suite, AdaptorSuiteParams, WeightedDecayParams};
use crate::estimates::conformal::{
    conformal_identity_residual, general_potential_suite, positive_potential_suite, FirstLevelParts,
    GeneralPotentialParams, PositivePotentialParams,
};
use crate::estimates::identities::{operator_identity_suite, IdentityParams};
use crate::estimates::morawetz::{morawetz_suite, MorawetzConstants, MorawetzParams};
use crate::estimates::prob::{heisenberg_consistency, pres_check, pres_series, OperatorFamily, PropagationObservable};
use crate::estimates::timedep::{nls_suite, timedep_suite, NlsParams, TimeDepParams};
use crate::estimates::report::Relation;
use crate::estimates::{apply_momentum, conformal_form, EstimateReport, Setting};
use crate::grid::{Grid, GridKind};
use crate::operators;
use crate::potential::{StaticPotential, TimeDependentPotential};
use crate::propagator::{sample_exact, sample_split, Method, SplitStepper, Trajectory, WaveState};
use crate::series::{log_times, linear_times, ObservableSeries};
use crate::spectral::{diagonalize, SpectralData};
use crate::State;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Relative mass outside the support radius of the box policy.
const SUPPORT_TAIL: f64 = 1e-8;

/// Deterministic run id: scenario name and a digest of the effective
/// configuration and tool version.
pub fn run_id(config: &ScenarioConfig) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(super::config::to_toml(config)?.as_bytes());
    hasher.update(TOOL_VERSION.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    Ok(format!("{}-{hex}", config.name))
}

/// Applies the command-line overrides and re-validates.
pub fn with_overrides(mut config: ScenarioConfig, grid_n: Option<usize>, t_max: Option<f64>) -> Result<ScenarioConfig> {
    if let Some(n) = grid_n {
        config.grid.n = n;
    }
    if let Some(t) = t_max {
        config.evolution.t_max = t;
    }
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxPolicy {
    /// `|⟨P⟩| + 2 Δp` of the initial state.
    pub p_max: f64,
    pub support_radius: f64,
    /// `2 (t_max − t_start) p_max + support radius`.
    pub required_extent: f64,
    pub extent: f64,
    pub waived: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub measured: f64,
    pub relation: String,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub name: String,
    pub slope: f64,
    pub width: f64,
    pub samples: usize,
    pub window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRecord {
    pub suite: String,
    pub title: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub checks: Vec<CheckRecord>,
    pub fits: Vec<FitRecord>,
    pub skipped: Vec<SkipRecord>,
    pub warnings: Vec<String>,
    pub series: Vec<String>,
}

impl SuiteRecord {
    fn from_report(suite: SuiteName, report: &EstimateReport, error: Option<String>, series: Vec<String>) -> Self {
        Self {
            suite: suite.as_str().to_string(),
            title: report.theorem.clone(),
            passed: error.is_none() && report.passed(),
            error,
            checks: report
                .checks
                .iter()
                .map(|c| CheckRecord {
                    name: c.name.clone(),
                    measured: c.measured,
                    relation: match c.relation {
                        Relation::AtMost => "<=".into(),
                        Relation::AtLeast => ">=".into(),
                    },
                    bound: c.bound,
                    pass: c.pass,
                })
                .collect(),
            fits: report
                .fits
                .iter()
                .map(|f| FitRecord { name: f.name.clone(), slope: f.slope, width: f.width, samples: f.samples, window: f.window })
                .collect(),
            skipped: report.skipped.iter().map(|s| SkipRecord { name: s.name.clone(), reason: s.reason.clone() }).collect(),
            warnings: report.warnings.clone(),
            series,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantRecord {
    pub suite: String,
    pub name: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pass,
    Fail,
    ConfigError,
    Error,
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Pass => 0,
            RunStatus::Fail | RunStatus::Error => 1,
            RunStatus::ConfigError => 2,
        }
    }
}

/// Everything the run directory records about a run, in structured text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub scenario: String,
    pub tool_version: String,
    pub status: RunStatus,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validity_window: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_boundary_mass: Option<f64>,
    pub warnings: Vec<String>,
    pub series: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_policy: Option<BoxPolicy>,
    pub suites: Vec<SuiteRecord>,
    pub constants: Vec<ConstantRecord>,
    pub config: ScenarioConfig,
}

/// Output of [`run_scenario`].
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub reports: Vec<(SuiteName, EstimateReport)>,
}

impl RunArtifact {
    pub fn run_id(&self) -> &str {
        &self.manifest.run_id
    }

    pub fn status(&self) -> RunStatus {
        self.manifest.status
    }

    pub fn exit_code(&self) -> i32 {
        self.manifest.exit_code
    }

    pub fn report(&self, suite: SuiteName) -> Option<&EstimateReport> {
        self.reports.iter().find(|(s, _)| *s == suite).map(|(_, r)| r)
    }

    pub fn series_dir(&self) -> PathBuf {
        self.dir.join("series")
    }
}

/// Ingredients shared by the suites, built once per grid.
struct Model {
    grid: Grid,
    potential: StaticPotential,
    w: Option<TimeDependentPotential>,
    lambda: f64,
    spec: Option<SpectralData>,
    adaptor: Option<AdaptorOperator>,
    psi0: WaveState,
    traj: Trajectory,
    stepper: Option<SplitStepper>,
    box_policy: BoxPolicy,
}

impl Model {
    fn setting(&self) -> Setting<'_> {
        let mut s = Setting::new(&self.grid, &self.potential).with_time_dependent(self.w.as_ref());
        if let Some(spec) = &self.spec {
            s = s.with_spectrum(spec);
        }
        if let Some(b) = &self.adaptor {
            s = s.with_adaptor(b);
        }
        s
    }

    fn spec(&self) -> Result<&SpectralData> {
        self.spec.as_ref().ok_or_else(|| LabError::InvalidArgument("spectral data was not computed".into()))
    }
}

fn needs_spectrum(config: &ScenarioConfig) -> bool {
    config.evolution.method == Method::EigenbasisExact
        || matches!(config.initial, InitialState::Eigenstate { .. } | InitialState::Gaussian { project_continuum: true, .. })
        || config.suites.iter().any(|s| !matches!(s, SuiteName::Nls | SuiteName::OperatorIdentities))
}

fn needs_adaptor(config: &ScenarioConfig) -> bool {
    if config.potential.is_zero() {
        return false;
    }
    config.suites.iter().any(|s| match s {
        SuiteName::Adaptor | SuiteName::ConformalIdentity | SuiteName::PositivePotential => true,
        SuiteName::Heisenberg | SuiteName::PropagationEstimate => config.prob.observable == ObservableKind::FirstLevel,
        _ => false,
    })
}

fn q_for(rule: QRule, flip: bool, potential: &StaticPotential, grid: &Grid) -> QSelection {
    let q = match rule {
        QRule::Conformal => conformal_q(potential, grid),
        QRule::Dilation => dilation_q(potential, grid),
        QRule::Alternative => alternative_q(potential, grid),
    };
    if flip {
        q.negated()
    } else {
        q
    }
}

fn horizon(config: &ScenarioConfig, grid: &Grid) -> f64 {
    config.adaptor.t_b.unwrap_or_else(|| default_horizon(grid))
}

/// The sampled profile of a Gaussian recipe, before projection.
fn gaussian_profile(grid: &Grid, center: f64, width: f64, momentum: f64) -> State {
    match grid.kind() {
        GridKind::Line => grid.sample_complex(|x| {
            let s = (x - center) / width;
            Complex64::from_polar((-0.5 * s * s).exp(), momentum * x)
        }),
        GridKind::Radial3d => grid.sample_complex(|r| {
            let s = (r - center) / width;
            Complex64::new(r * (-0.5 * s * s).exp(), 0.0)
        }),
    }
}

fn scaled_to(grid: &Grid, psi: State, norm: f64) -> Result<State> {
    let m = grid.mass(&psi).sqrt();
    if !(m > 0.0) {
        return Err(LabError::config("initial", "initial state vanishes on the grid"));
    }
    Ok(psi * Complex64::new(norm / m, 0.0))
}

fn initial_state(config: &ScenarioConfig, grid: &Grid, spec: Option<&SpectralData>) -> Result<State> {
    let need = || spec.ok_or_else(|| LabError::InvalidArgument("initial state needs spectral data".into()));
    match &config.initial {
        InitialState::Gaussian { center, width, momentum, norm, project_continuum } => {
            let mut psi = gaussian_profile(grid, *center, *width, *momentum);
            if *project_continuum {
                psi = need()?.project_continuum(&psi);
            }
            scaled_to(grid, psi, *norm)
        }
        InitialState::Eigenstate { k } => {
            let spec = need()?;
            if *k >= spec.dim() {
                return Err(LabError::config("initial.k", format!("index {k} out of range")));
            }
            scaled_to(grid, spec.vectors().column(*k).into_owned(), 1.0)
        }
        InitialState::Samples { re, im } => {
            if re.len() != grid.n() {
                return Err(LabError::config("initial.re", "sample count differs from the grid (refinement needs a recipe)"));
            }
            Ok(State::from_fn(grid.n(), |j, _| Complex64::new(re[j], im.get(j).copied().unwrap_or(0.0))))
        }
    }
}

/// `p_max = |⟨P⟩| + 2Δp` and the support radius of `ψ`; the box must hold
/// `2 t p_max + support` over the evolution span.
fn box_policy(config: &ScenarioConfig, grid: &Grid, psi: &State) -> BoxPolicy {
    let mass = grid.mass(psi).max(f64::MIN_POSITIVE);
    let p = apply_momentum(grid, psi);
    let mean_p = grid.inner(psi, &p).re / mass;
    let p2 = grid.kinetic_form(psi) / mass;
    let p_max = mean_p.abs() + 2.0 * (p2 - mean_p * mean_p).max(0.0).sqrt();

    let mut order: Vec<usize> = (0..grid.n()).collect();
    let xs = grid.points();
    order.sort_by(|&a, &b| xs[b].abs().total_cmp(&xs[a].abs()));
    let mut tail = 0.0;
    let mut support_radius = 0.0;
    for &j in &order {
        tail += psi[j].norm_sqr() * grid.measure();
        if tail > SUPPORT_TAIL * mass {
            support_radius = xs[j].abs();
            break;
        }
    }
    let span = config.evolution.t_max - config.evolution.t_start;
    BoxPolicy {
        p_max,
        support_radius,
        required_extent: 2.0 * span * p_max + support_radius,
        extent: grid.extent(),
        waived: config.evolution.waive_box_policy,
    }
}

fn regular_times(config: &ScenarioConfig) -> Vec<f64> {
    let (a, b) = (config.clock_start(), config.clock_end());
    let n = config.evolution.samples;
    match config.evolution.spacing {
        Spacing::Linear => linear_times(a, b, n),
        Spacing::Log => log_times(a, b, n),
    }
}

fn sample_times(config: &ScenarioConfig) -> Vec<f64> {
    let (a, b) = (config.clock_start(), config.clock_end());
    let ev = &config.evolution;
    let mut times = regular_times(config);
    let shift = config.clock_shift();
    times.extend(ev.extra_times.iter().map(|t| t + shift));
    if ev.t0 >= a && ev.t0 <= b {
        times.push(ev.t0);
    }
    if config.has_suite(SuiteName::ConformalIdentity) || config.has_suite(SuiteName::Heisenberg) {
        let h = config.parameters.check_step;
        for &t in &config.parameters.check_times {
            times.extend([t - h, t, t + h]);
        }
    }
    times.retain(|&t| t >= a && t <= b);
    times.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(times.len());
    for t in times {
        match out.last() {
            Some(&last) if t - last <= 1e-12 * t.abs().max(1.0) => {}
            _ => out.push(t),
        }
    }
    out
}

fn prepare(config: &ScenarioConfig, grid: Grid, warnings: &mut Vec<String>) -> Result<Model> {
    let potential = config.potential.clone();
    let w = config.w.time_dependent()?;
    let lambda = config.w.lambda();
    let spec = if needs_spectrum(config) {
        let h = operators::hamiltonian(&grid, &potential.samples(&grid))?;
        let spec = diagonalize(&h)?.classify_default(&grid)?;
        if spec.has_near_threshold() {
            warnings.push(format!(
                "{} near-threshold eigenvalue(s) within {:.3e} of zero; excluded from Ran P_c",
                spec.count(crate::spectral::SpectralTag::NearThreshold),
                spec.threshold()
            ));
        }
        Some(spec)
    } else {
        None
    };

    let adaptor = if needs_adaptor(config) {
        let spec = spec.as_ref().expect("spectrum computed whenever an adaptor is");
        let q = q_for(config.adaptor.q, config.negative.flip_q, &potential, &grid);
        let b = build_adaptor(spec, &grid, &q, horizon(config, &grid), config.adaptor.sigma)?;
        warnings.extend(b.warnings().iter().map(|w| format!("adaptor: {w}")));
        Some(b)
    } else {
        None
    };

    let psi = initial_state(config, &grid, spec.as_ref())?;
    let policy = box_policy(config, &grid, &psi);
    if policy.required_extent > policy.extent {
        if policy.waived {
            warnings.push(format!(
                "box policy waived: the span needs extent {:.3} but the box has {:.3}",
                policy.required_extent, policy.extent
            ));
        } else {
            return Err(LabError::config(
                "evolution.t_max",
                format!(
                    "box policy needs extent >= {:.3} (2 t p_max + support), box has {:.3}; shorten t_max, enlarge the box or set waive_box_policy",
                    policy.required_extent, policy.extent
                ),
            ));
        }
    }
    let psi0 = WaveState::initial(psi, config.clock_start())?;
    let times = sample_times(config);

    let (traj, stepper) = match config.evolution.method {
        Method::EigenbasisExact => {
            let spec = spec.as_ref().expect("exact evolution computes the spectrum");
            (sample_exact(spec, &grid, &psi0, &times)?, None)
        }
        Method::SplitStep2 => {
            let dt = config.evolution.dt.expect("validated");
            let stepper = SplitStepper::new(&grid, &potential, w.as_ref(), lambda)?;
            (sample_split(&stepper, &psi0, &times, dt)?, Some(stepper))
        }
    };
    let window = traj.validity_window();
    if let Some(&last) = traj.times.last() {
        if window.1 < last {
            warnings.push(format!(
                "boundary mass exceeds its limit after t = {:.4}; validity window [{:.4}, {:.4}] (max relative boundary mass {:.3e})",
                window.1,
                window.0,
                window.1,
                traj.max_boundary_mass()
            ));
        }
    }
    Ok(Model { grid, potential, w, lambda, spec, adaptor, psi0, traj, stepper, box_policy: policy })
}

fn corrupted(obs: PropagationObservable) -> PropagationObservable {
    let obs = Arc::new(obs);
    let o = obs.clone();
    let b: OperatorFamily = Arc::new(move |t| o.at(t));
    let o = obs;
    let db: OperatorFamily = Arc::new(move |t| Ok(o.derivative_at(t)?.scaled(-1.0).with_label("corrupted dB/dt")));
    PropagationObservable::new("corrupted observable", b, db)
}

fn observable(config: &ScenarioConfig, model: &Model) -> PropagationObservable {
    let factor = config.prob.factor;
    match config.prob.observable {
        ObservableKind::FirstLevel => {
            FirstLevelParts::from_setting(&model.setting(), factor).into_observable(config.negative.corrupt_derivative)
        }
        ObservableKind::ConformalOverT => {
            let obs = PropagationObservable::free_conformal(&model.grid, factor);
            if config.negative.corrupt_derivative {
                corrupted(obs)
            } else {
                obs
            }
        }
    }
}

fn identities(config: &ScenarioConfig, model: &Model) -> Result<EstimateReport> {
    let InitialState::Gaussian { center, width, momentum, .. } = config.initial.clone() else {
        let mut r = EstimateReport::new("dilation commutator and free conformal conservation");
        r.skip("operator identities", "needs a Gaussian recipe that can be resampled on the refined grid");
        return Ok(r);
    };
    let params = IdentityParams {
        time: config.parameters.identity_time,
        step: config.parameters.identity_step,
        tolerance: config.tolerances.identity,
        ratio_band: config.tolerances.ratio_band,
    };
    let state = move |g: &Grid| {
        let psi = gaussian_profile(g, center, width, momentum);
        let m = g.mass(&psi).sqrt();
        psi * Complex64::new(1.0 / m, 0.0)
    };
    operator_identity_suite(&model.grid, &model.potential, state, &params)
}

fn adaptor(config: &ScenarioConfig, model: &Model) -> Result<EstimateReport> {
    let Some(b) = &model.adaptor else {
        let mut r = EstimateReport::new("adaptor operator B_V");
        r.skip("adaptor suite", "V = 0, so B_V = 0");
        return Ok(r);
    };
    let t = &config.tolerances;
    let params = AdaptorSuiteParams {
        hermiticity_tolerance: t.hermiticity,
        support_tolerance: t.support,
        positivity_tolerance: t.positivity,
        closure_tolerance: t.closure,
        quadrature_tolerance: t.quadrature,
        conformal_cancellation: config.adaptor.q == QRule::Conformal,
        ..Default::default()
    };
    let (rule, flip, v) = (config.adaptor.q, config.negative.flip_q, &model.potential);
    adaptor_suite(&model.grid, v, model.spec()?, b, |g| Ok(q_for(rule, flip, v, g)), &params)
}

fn weighted_decay(config: &ScenarioConfig, model: &Model) -> Result<EstimateReport> {
    let p = &config.parameters;
    let params = WeightedDecayParams {
        sigma: p.sigma,
        window: p.decay_window,
        samples: p.decay_samples,
        band: config.tolerances.decay_band,
    };
    weighted_decay_suite(model.spec()?, &model.grid, &params)
}

/// With `V` or `W` present the identity holds to `O(h² + δt²)`, so the
/// residual is also compared against the run with `h` and `δt` halved.
fn conformal_needs_refinement(config: &ScenarioConfig) -> bool {
    config.has_suite(SuiteName::ConformalIdentity) && (!config.potential.is_zero() || config.w.time_dependent().ok().flatten().is_some())
}

fn conformal_identity(config: &ScenarioConfig, model: &Model, fine: Option<std::result::Result<&Model, String>>) -> Result<EstimateReport> {
    let mut report = EstimateReport::new("adapted conformal identity");
    let setting = model.setting();
    let factor = config.prob.factor;
    let step = config.parameters.check_step;
    let (mut times, mut residuals) = (Vec::new(), Vec::new());
    for &t in &config.parameters.check_times {
        let r = conformal_identity_residual(&setting, &model.traj, factor, t, step)?;
        report.at_most(format!("conformal identity residual at t = {t}"), r.residual, config.tolerances.conformal_identity);
        if r.truncation != 0.0 {
            report.warn(format!("truncation term <R(T_B)> at t = {t}: {:.3e}", r.truncation));
        }
        match &fine {
            Some(Ok(m)) => {
                let r1 = conformal_identity_residual(&m.setting(), &m.traj, factor, t, step / 2.0)?;
                let band = config.tolerances.ratio_band;
                report.within(&format!("residual ratio under h, dt halving at t = {t}"), r.residual / r1.residual, band.0, band.1);
            }
            Some(Err(e)) => report.warn(format!("refined run failed: {e}")),
            None => {}
        }
        times.push(t);
        residuals.push(r.residual);
    }
    if !times.is_empty() {
        report.push_series(ObservableSeries::new("conformal identity residual", times, residuals)?);
    }

    // Under the free flow the literal factor is conserved.
    let window = model.traj.validity_window();
    let idx: Vec<usize> = (0..model.traj.times.len()).filter(|&k| model.traj.times[k] <= window.1).collect();
    let ts: Vec<f64> = idx.iter().map(|&k| model.traj.times[k]).collect();
    let cs: Vec<f64> = idx
        .iter()
        .map(|&k| conformal_form(&model.grid, factor, model.traj.times[k], &model.traj.states[k]))
        .collect();
    if model.potential.is_zero() && model.w.is_none() && factor == crate::estimates::ConformalFactor::Literal && !cs.is_empty() {
        let c0 = cs[0];
        let spread = cs.iter().map(|c| (c - c0).abs()).fold(0.0, f64::max) / c0.abs().max(f64::MIN_POSITIVE);
        report.at_most("relative variation of <C(t)> under the free flow", spread, 1e-8);
    }
    report.push_series(ObservableSeries::new("<C(t)>", ts, cs)?.with_window(window));
    Ok(report)
}

fn heisenberg(config: &ScenarioConfig, model: &Model) -> Result<EstimateReport> {
    let mut report = EstimateReport::new("Heisenberg derivative of the propagation observable");
    let obs = observable(config, model);
    let parts = FirstLevelParts::from_setting(&model.setting(), config.prob.factor);
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for &t in &config.parameters.check_times {
        let c = heisenberg_consistency(&model.grid, &model.traj, |s| parts.hamiltonian(s), &obs, t, config.parameters.check_step)?;
        let rel = c.residual / c.lhs.abs().max(c.rhs.abs()).max(1.0);
        report.at_most(format!("d<B>/dt vs <i[H,B] + dB/dt> at t = {t}, relative"), rel, config.tolerances.heisenberg);
        times.push(t);
        values.push(rel);
    }
    if !times.is_empty() {
        report.push_series(ObservableSeries::new(format!("{} Heisenberg residual", obs.label()), times, values)?);
    }
    Ok(report)
}

fn propagation_estimate(config: &ScenarioConfig, model: &Model) -> Result<EstimateReport> {
    let obs = observable(config, model);
    let window = model.traj.validity_window();
    let t0 = config.evolution.t0.max(window.0);
    // The regular schedule only, so that the quadrature sees uniform steps.
    let times: Vec<f64> = regular_times(config)
        .into_iter()
        .filter(|&t| t >= t0 && t <= window.1 && t > 0.0)
        .filter(|&t| model.traj.index_of(t).is_ok())
        .collect();
    let series = pres_series(&model.grid, &model.traj, &obs, &times)?;
    let mut report = pres_check(series.as_ref(), config.tolerances.propagation_estimate);
    if let Some(s) = series {
        report.push_series(s.observable);
        report.push_series(s.positive);
        report.push_series(s.remainder);
    }
    Ok(report)
}

fn positive_potential(config: &ScenarioConfig, model: &Model) -> Result<EstimateReport> {
    let t = &config.tolerances;
    let params = PositivePotentialParams {
        sharp_constant: t.sharp_constant,
        trend_limit: t.trend_limit,
        fit_start: config.parameters.fit_start,
        l6_band: t.l6_band,
        first_level_band: t.first_level_band,
        factor: config.prob.factor,
    };
    positive_potential_suite(&model.setting(), &model.traj, &params)
}

const SHARP_CHECK: &str = "sup[|(x-2pt)psi|^2 + t^2<V>] / Lnorm^2";

fn general_potential(config: &ScenarioConfig, model: &Model) -> Result<EstimateReport> {
    let spec = model.spec()?;
    if spec.has_near_threshold() {
        let mut r = EstimateReport::new("general potentials on Ran P_c");
        r.warn("near-threshold eigenvalues present; the suite assumes no zero eigenvalues");
        r.skip("general potential suite", "H has eigenvalues within the threshold tolerance of zero");
        return Ok(r);
    }
    let t = &config.tolerances;
    let p = &config.parameters;
    let params = GeneralPotentialParams {
        lens_times: p.lens_times.clone(),
        spread_limit: t.lens_spread,
        repulsion_bound: t.repulsion_bound,
        trend_limit: t.trend_limit,
        ratio_band: t.ratio_band,
        probe_width: p.probe_width,
        ..Default::default()
    };
    general_potential_suite(&model.setting(), &model.traj, &params)
}

fn time_dependent(config: &ScenarioConfig, model: &Model) -> Result<EstimateReport> {
    let t = &config.tolerances;
    let p = &config.parameters;
    let params = TimeDepParams {
        t0: config.evolution.t0,
        coupling: p.coupling,
        dispersive_constant: t.dispersive_constant,
        h1_constant: t.h1_constant,
        trend_limit: t.trend_limit,
        ibp_tolerance: t.ibp,
        energy_window: p.energy_window,
        increment_slack: p.increment_slack,
        increment_tail_ratio: p.increment_tail_ratio,
        declared_envelope: p.declared_envelope,
        sigma: config.w.sigma().unwrap_or(p.sigma),
        log_power_limit: t.log_power_limit,
    };
    timedep_suite(&model.setting(), &model.traj, &params)
}

fn nls(config: &ScenarioConfig, model: &Model) -> Result<EstimateReport> {
    let stepper = model
        .stepper
        .as_ref()
        .ok_or_else(|| LabError::config("evolution.method", "the nls suite needs split_step2"))?;
    let t = &config.tolerances;
    let p = &config.parameters;
    let params = NlsParams {
        lnorm_limit: t.lnorm_limit,
        mass_tolerance: t.mass,
        energy_tolerance: t.energy,
        convergence_time: p.convergence_time,
        convergence_dt: p.convergence_dt,
        ratio_band: t.ratio_band,
        fit_window: p.nls_fit_window,
        sup_slope_limit: t.sup_slope_limit,
        balance_tolerance: t.balance,
    };
    debug_assert_eq!(stepper.lambda(), model.lambda);
    nls_suite(stepper, &model.potential, &model.psi0, &model.traj, &params)
}

fn morawetz(config: &ScenarioConfig, model: &Model) -> Result<(EstimateReport, MorawetzConstants)> {
    let p = &config.parameters;
    let t = &config.tolerances;
    let params = MorawetzParams {
        profile: p.morawetz_profile,
        epsilon: p.epsilon_m,
        a: config.morawetz_a(),
        theta: p.local_decay.then_some(p.theta),
        positivity_tolerance: t.morawetz_positivity,
        cancellation_tolerance: t.morawetz_cancellation,
        trend_slack: p.trend_slack,
        corrupt_sign: config.negative.corrupt_morawetz_sign,
    };
    let spec = model.spec()?;
    let g = p.morawetz_profile.samples(&model.grid);
    let mut q = morawetz_q(&model.potential, &model.grid, &g)?;
    if config.negative.flip_q {
        q = q.negated();
    }
    let b = build_adaptor(spec, &model.grid, &q, horizon(config, &model.grid), config.adaptor.sigma)?;
    let setting = Setting::new(&model.grid, &model.potential)
        .with_time_dependent(model.w.as_ref())
        .with_spectrum(spec)
        .with_adaptor(&b);
    let (mut report, constants) = morawetz_suite(&setting, &model.traj, &params)?;
    for w in b.warnings() {
        report.warn(format!("B_gamma: {w}"));
    }
    Ok((report, constants))
}

fn relative_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

struct SuiteRun {
    suite: SuiteName,
    report: EstimateReport,
    error: Option<String>,
}

/// Evaluates the suites; a suite that errors is recorded as failed with
/// its message and the run continues.
/// The same scenario with the check stencil and the split step halved;
/// the grid is refined by the caller.
fn refined_config(config: &ScenarioConfig) -> ScenarioConfig {
    let mut fine = config.clone();
    fine.parameters.check_step /= 2.0;
    fine.evolution.dt = fine.evolution.dt.map(|dt| dt / 2.0);
    fine
}

fn run_suites(
    config: &ScenarioConfig,
    model: &Model,
    warnings: &mut Vec<String>,
    constants: &mut Vec<ConstantRecord>,
) -> Vec<SuiteRun> {
    let mut out = Vec::new();
    let fine_config = refined_config(config);
    let refined: Option<std::result::Result<Model, String>> = ((config.parameters.refine
        && (config.has_suite(SuiteName::PositivePotential) || config.has_suite(SuiteName::Morawetz)))
        || conformal_needs_refinement(config))
    .then(|| {
        let mut w = Vec::new();
        let r = prepare(&fine_config, model.grid.refined(), &mut w).map_err(|e| e.to_string());
        warnings.extend(w.into_iter().map(|m| format!("refined grid: {m}")));
        r
    });
    let refined_model = |_: &mut Vec<String>| -> std::result::Result<&Model, String> {
        match &refined {
            Some(r) => r.as_ref().map_err(|e| e.clone()),
            None => Err("refinement not prepared".into()),
        }
    };

    let suites: BTreeSet<SuiteName> = config.suites.iter().copied().collect();
    for suite in SuiteName::ALL.iter().copied().filter(|s| suites.contains(s)) {
        let result = match suite {
            SuiteName::OperatorIdentities => identities(config, model),
            SuiteName::Adaptor => adaptor(config, model),
            SuiteName::WeightedDecay => weighted_decay(config, model),
            SuiteName::ConformalIdentity => {
                conformal_identity(config, model, conformal_needs_refinement(config).then(|| refined_model(warnings)))
            }
            SuiteName::Heisenberg => heisenberg(config, model),
            SuiteName::PropagationEstimate => propagation_estimate(config, model),
            SuiteName::PositivePotential => positive_potential(config, model).map(|mut report| {
                if let Some(c) = report.check(SHARP_CHECK).map(|c| c.measured) {
                    let mut record = ConstantRecord { suite: suite.as_str().into(), name: "sharp constant".into(), value: c, refined: None };
                    if config.parameters.refine {
                        match refined_model(warnings).and_then(|m| positive_potential(&fine_config, m).map_err(|e| e.to_string())) {
                            Ok(fine) => {
                                let cf = fine.check(SHARP_CHECK).map(|c| c.measured).unwrap_or(f64::NAN);
                                record.refined = Some(cf);
                                report.at_most("sharp constant change under refinement", relative_change(c, cf), config.tolerances.refinement_change);
                            }
                            Err(e) => report.warn(format!("refinement run failed: {e}")),
                        }
                    }
                    constants.push(record);
                }
                report
            }),
            SuiteName::GeneralPotential => general_potential(config, model),
            SuiteName::TimeDependent => time_dependent(config, model),
            SuiteName::Nls => nls(config, model),
            SuiteName::Morawetz => morawetz(config, model).map(|(mut report, c)| {
                let mut rc = ConstantRecord { suite: suite.as_str().into(), name: "C".into(), value: c.c, refined: None };
                let mut rp = ConstantRecord { suite: suite.as_str().into(), name: "C'".into(), value: c.c_prime, refined: None };
                if config.parameters.refine {
                    match refined_model(warnings).and_then(|m| morawetz(&fine_config, m).map_err(|e| e.to_string())) {
                        Ok((_, fine)) => {
                            rc.refined = Some(fine.c);
                            rp.refined = Some(fine.c_prime);
                            report.at_most("Morawetz C change under refinement", relative_change(c.c, fine.c), config.tolerances.refinement_change);
                            report.at_most("Morawetz C' change under refinement", relative_change(c.c_prime, fine.c_prime), config.tolerances.refinement_change);
                        }
                        Err(e) => report.warn(format!("refinement run failed: {e}")),
                    }
                }
                constants.push(rc);
                constants.push(rp);
                report
            }),
        };
        out.push(match result {
            Ok(report) => SuiteRun { suite, report, error: None },
            Err(e) => SuiteRun { suite, report: EstimateReport::new(suite.as_str()), error: Some(e.to_string()) },
        });
    }
    out
}

fn slug(label: &str) -> String {
    let mut s = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('_') {
            s.push('_');
        }
    }
    let s = s.trim_matches('_').to_string();
    if s.is_empty() {
        "series".into()
    } else {
        s
    }
}

fn write_series(dir: &Path, stem: &str, series: &ObservableSeries, used: &mut BTreeSet<String>) -> Result<String> {
    let base = format!("{stem}__{}", slug(&series.label));
    let mut name = format!("{base}.csv");
    let mut k = 2;
    while used.contains(&name) {
        name = format!("{base}_{k}.csv");
        k += 1;
    }
    fs::write(dir.join(&name), series.to_csv())?;
    used.insert(name.clone());
    Ok(format!("series/{name}"))
}

/// Runs one scenario and writes `manifest.toml`, `report.txt` and
/// `series/*.csv` under `out_dir/<run id>`. The manifest is written even
/// when the pipeline fails; only I/O failures surface as `Err`.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<RunArtifact> {
    let id = run_id(config)?;
    let dir = out_dir.join(&id);
    let series_dir = dir.join("series");
    if series_dir.exists() {
        fs::remove_dir_all(&series_dir)?;
    }
    fs::create_dir_all(&series_dir)?;

    let mut manifest = Manifest {
        run_id: id,
        scenario: config.name.clone(),
        tool_version: TOOL_VERSION.to_string(),
        status: RunStatus::Error,
        exit_code: 1,
        error: None,
        validity_window: None,
        max_boundary_mass: None,
        warnings: Vec::new(),
        series: Vec::new(),
        box_policy: None,
        suites: Vec::new(),
        constants: Vec::new(),
        config: config.clone(),
    };
    let mut reports = Vec::new();
    let mut warnings = Vec::new();

    match config.validate().and_then(|_| config.grid.build()).and_then(|g| prepare(config, g, &mut warnings)) {
        Err(e) => {
            manifest.status = if e.is_config() { RunStatus::ConfigError } else { RunStatus::Error };
            manifest.error = Some(e.to_string());
        }
        Ok(model) => {
            manifest.validity_window = Some(model.traj.validity_window());
            manifest.max_boundary_mass = Some(model.traj.max_boundary_mass());
            manifest.box_policy = Some(model.box_policy.clone());
            let mut used = BTreeSet::new();
            let boundary = ObservableSeries::new("relative boundary mass", model.traj.times.clone(), model.traj.boundary_mass.clone())?;
            manifest.series.push(write_series(&series_dir, "run", &boundary, &mut used)?);

            let mut constants = Vec::new();
            let runs = run_suites(config, &model, &mut warnings, &mut constants);
            let mut all_pass = true;
            for run in runs {
                let stem = run.suite.as_str();
                let mut files = Vec::new();
                for s in &run.report.series {
                    files.push(write_series(&series_dir, stem, s, &mut used)?);
                }
                manifest.series.extend(files.iter().cloned());
                let record = SuiteRecord::from_report(run.suite, &run.report, run.error.clone(), files);
                all_pass &= record.passed;
                warnings.extend(run.report.warnings.iter().map(|w| format!("{stem}: {w}")));
                if let Some(e) = &run.error {
                    warnings.push(format!("{stem}: suite error: {e}"));
                }
                manifest.suites.push(record);
                reports.push((run.suite, run.report));
            }
            manifest.constants = constants;
            manifest.status = if all_pass { RunStatus::Pass } else { RunStatus::Fail };
        }
    }
    manifest.warnings = warnings;
    manifest.exit_code = manifest.status.exit_code();
    let text = toml::to_string(&manifest).map_err(|e| LabError::Numerical(format!("manifest serialization: {e}")))?;
    fs::write(dir.join("manifest.toml"), text)?;
    fs::write(dir.join("report.txt"), render_manifest(&manifest))?;
    Ok(RunArtifact { dir, manifest, reports })
}

/// Reads `out_dir/<run id>/manifest.toml`.
pub fn load_manifest(out_dir: &Path, run_id: &str) -> Result<Manifest> {
    let path = out_dir.join(run_id).join("manifest.toml");
    if run_id.is_empty() || run_id.contains(['/', '\\']) || !path.is_file() {
        return Err(LabError::NotFound(format!("run '{run_id}' under {}", out_dir.display())));
    }
    let text = fs::read_to_string(&path)?;
    toml::from_str(&text).map_err(|e| LabError::Numerical(format!("unreadable manifest {}: {e}", path.display())))
}

/// Suite summary table with the validity window and all warnings.
pub fn render_manifest(m: &Manifest) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "run {}  scenario {}  version {}", m.run_id, m.scenario, m.tool_version);
    let _ = writeln!(out, "status {:?} (exit {})", m.status, m.exit_code);
    if let Some(e) = &m.error {
        let _ = writeln!(out, "error: {e}");
    }
    match m.validity_window {
        Some((a, b)) => {
            let _ = writeln!(out, "validity window [{a:.4}, {b:.4}]  max relative boundary mass {:.3e}", m.max_boundary_mass.unwrap_or(0.0));
        }
        None => {
            let _ = writeln!(out, "validity window: none (no trajectory)");
        }
    }
    if let Some(p) = &m.box_policy {
        let _ = writeln!(
            out,
            "box policy: required extent {:.3}, extent {:.3}{}",
            p.required_extent,
            p.extent,
            if p.waived { " (waived)" } else { "" }
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<22} {:<7} {:>6} {:>6} {:>6}  title", "suite", "verdict", "checks", "failed", "skip");
    for s in &m.suites {
        let failed = s.checks.iter().filter(|c| !c.pass).count();
        let verdict = if s.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{:<22} {:<7} {:>6} {:>6} {:>6}  {}", s.suite, verdict, s.checks.len(), failed, s.skipped.len(), s.title);
    }
    for s in &m.suites {
        let _ = writeln!(out, "\n[{}] {}", s.suite, s.title);
        if let Some(e) = &s.error {
            let _ = writeln!(out, "  error {e}");
        }
        for c in &s.checks {
            let mark = if c.pass { "ok  " } else { "FAIL" };
            let _ = writeln!(out, "  {mark} {:<60} {:>13.6e} {} {:<13.6e}", c.name, c.measured, c.relation, c.bound);
        }
        for f in &s.fits {
            let _ = writeln!(
                out,
                "  fit  {:<60} slope {:+.4} ± {:.4} on [{:.3}, {:.3}] ({} samples)",
                f.name, f.slope, f.width, f.window.0, f.window.1, f.samples
            );
        }
        for k in &s.skipped {
            let _ = writeln!(out, "  skip {}: {}", k.name, k.reason);
        }
    }
    if !m.constants.is_empty() {
        let _ = writeln!(out, "\nconstants");
        for c in &m.constants {
            match c.refined {
                Some(r) => {
                    let _ = writeln!(out, "  {:<12} {:<16} {:.6e}  refined {:.6e}", c.suite, c.name, c.value, r);
                }
                None => {
                    let _ = writeln!(out, "  {:<12} {:<16} {:.6e}", c.suite, c.name, c.value);
                }
            }
        }
    }
    if !m.warnings.is_empty() {
        let _ = writeln!(out, "\nwarnings");
        for w in &m.warnings {
            let _ = writeln!(out, "  {w}");
        }
    }
    out
}

/// Rendered summary of a stored run.
pub fn report(out_dir: &Path, run_id: &str) -> Result<String> {
    Ok(render_manifest(&load_manifest(out_dir, run_id)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::config::parse_config;

    const DOC: &str = r#"
name = "unit_free"
suites = ["conformal_identity", "heisenberg", "propagation_estimate"]
[grid]
kind = "line"
n = 128
extent = 24.0
[initial]
type = "gaussian"
width = 2.0
[evolution]
t_max = 2.0
samples = 21
[prob]
observable = "conformal_over_t"
factor = "literal"
[parameters]
check_times = [1.0]
[tolerances]
propagation_estimate = 1e-3
"#;

    #[test]
    fn sample_times_include_check_stencils() {
        let c = parse_config(DOC).unwrap();
        let t = sample_times(&c);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        for s in [1.0 - 1e-4, 1.0, 1.0 + 1e-4, 0.0, 2.0] {
            assert!(t.iter().any(|&x| (x - s).abs() < 1e-12), "{s} missing");
        }
    }

    #[test]
    fn shifted_clock_moves_the_initial_time() {
        let mut c = parse_config(DOC).unwrap();
        c.evolution.shift_origin = true;
        let t = sample_times(&c);
        assert_eq!(t[0], 1.0);
        assert_eq!(*t.last().unwrap(), 3.0);
    }

    #[test]
    fn run_id_is_stable_and_tracks_the_config() {
        let c = parse_config(DOC).unwrap();
        assert_eq!(run_id(&c).unwrap(), run_id(&c.clone()).unwrap());
        let d = with_overrides(c.clone(), Some(130), None).unwrap();
        assert_ne!(run_id(&c).unwrap(), run_id(&d).unwrap());
        assert!(run_id(&c).unwrap().starts_with("unit_free-"));
    }

    #[test]
    fn free_run_passes_and_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let c = parse_config(DOC).unwrap();
        let art = run_scenario(&c, dir.path()).unwrap();
        assert_eq!(art.status(), RunStatus::Pass, "{}", render_manifest(&art.manifest));
        assert!(art.dir.join("manifest.toml").is_file());
        assert!(!art.manifest.series.is_empty());
        for f in &art.manifest.series {
            let text = fs::read_to_string(art.dir.join(f)).unwrap();
            assert!(text.starts_with("time,"));
        }
        let back = load_manifest(dir.path(), art.run_id()).unwrap();
        assert_eq!(back, art.manifest);
        assert!(report(dir.path(), art.run_id()).unwrap().contains("validity window"));
        assert!(matches!(report(dir.path(), "missing-000000"), Err(LabError::NotFound(_))));
    }

    #[test]
    fn box_policy_violation_is_a_configuration_error_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let c = parse_config(&DOC.replace("t_max = 2.0", "t_max = 60.0")).unwrap();
        let art = run_scenario(&c, dir.path()).unwrap();
        assert_eq!(art.status(), RunStatus::ConfigError);
        assert_eq!(art.exit_code(), 2);
        assert!(art.manifest.error.as_deref().unwrap().contains("box policy"));
        assert!(art.dir.join("manifest.toml").is_file());
    }

    #[test]
    fn corrupted_derivative_fails() {
        let dir = tempfile::tempdir().unwrap();
        let c = parse_config(&format!("{DOC}\n[negative]\ncorrupt_derivative = true\n")).unwrap();
        let art = run_scenario(&c, dir.path()).unwrap();
        assert_eq!(art.status(), RunStatus::Fail);
        assert!(!art.report(SuiteName::Heisenberg).unwrap().passed());
    }

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(slug("|psi|_6^2 + |(x-2pt)psi/t|^2"), "psi_6_2_x_2pt_psi_t_2");
        assert_eq!(slug("***"), "series");
    }
}
