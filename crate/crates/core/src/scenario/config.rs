//! Scenario documents: one TOML document per scenario, unknown keys
//! rejected, defaults filled, cross-field rules checked after parsing.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::estimates::morawetz::MorawetzProfile;
use crate::estimates::timedep::Coupling;
use crate::estimates::ConformalFactor;
use crate::grid::{Grid, GridKind};
use crate::potential::{StaticPotential, TimeDependentPotential};
use crate::propagator::Method;

/// Suites, named after the statements they check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    /// Weak `i[H, A]` identity and free conformal conservation.
    OperatorIdentities,
    /// Structural properties of `B_V`.
    Adaptor,
    /// `‖⟨x⟩^{−σ} e^{−iHt} P_c ⟨x⟩^{−σ}‖` decay rate.
    WeightedDecay,
    /// Adapted conformal identity at the check times.
    ConformalIdentity,
    /// Heisenberg derivative of the selected observable.
    Heisenberg,
    /// Integrated positive-commutator estimate.
    PropagationEstimate,
    PositivePotential,
    GeneralPotential,
    TimeDependent,
    Nls,
    Morawetz,
}

impl SuiteName {
    pub const ALL: [SuiteName; 11] = [
        SuiteName::OperatorIdentities,
        SuiteName::Adaptor,
        SuiteName::WeightedDecay,
        SuiteName::ConformalIdentity,
        SuiteName::Heisenberg,
        SuiteName::PropagationEstimate,
        SuiteName::PositivePotential,
        SuiteName::GeneralPotential,
        SuiteName::TimeDependent,
        SuiteName::Nls,
        SuiteName::Morawetz,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SuiteName::OperatorIdentities => "operator_identities",
            SuiteName::Adaptor => "adaptor",
            SuiteName::WeightedDecay => "weighted_decay",
            SuiteName::ConformalIdentity => "conformal_identity",
            SuiteName::Heisenberg => "heisenberg",
            SuiteName::PropagationEstimate => "propagation_estimate",
            SuiteName::PositivePotential => "positive_potential",
            SuiteName::GeneralPotential => "general_potential",
            SuiteName::TimeDependent => "time_dependent",
            SuiteName::Nls => "nls",
            SuiteName::Morawetz => "morawetz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub kind: GridKind,
    pub n: usize,
    /// Half-width `L` on the line, radius `R` on radial grids.
    pub extent: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.kind, self.n, self.extent)
    }
}

/// The perturbation beyond the static potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    #[default]
    None,
    /// `W = δ(1 + t)^{−a} e^{−(x/width)²}`, checked against the envelope
    /// `⟨x⟩^{−σ}`.
    SelfSimilar {
        delta: f64,
        sigma: f64,
        a: f64,
        #[serde(default = "one")]
        width: f64,
    },
    /// Defocusing cubic term `λ|ψ|²ψ`.
    Semilinear { lambda: f64 },
}

impl Perturbation {
    pub fn time_dependent(&self) -> Result<Option<TimeDependentPotential>> {
        match *self {
            Perturbation::SelfSimilar { delta, a, width, .. } => Ok(Some(TimeDependentPotential::new(delta, width, a)?)),
            _ => Ok(None),
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Perturbation::Semilinear { lambda } => lambda,
            _ => 0.0,
        }
    }

    /// The envelope exponent `σ` when `W` is present.
    pub fn sigma(&self) -> Option<f64> {
        match *self {
            Perturbation::SelfSimilar { sigma, .. } => Some(sigma),
            _ => None,
        }
    }

    pub fn decay(&self) -> Option<f64> {
        match *self {
            Perturbation::SelfSimilar { a, .. } => Some(a),
            _ => None,
        }
    }
}

/// Recipe for `ψ(t_start)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// `e^{−(x−c)²/2w²} e^{ikx}` on the line; `r e^{−(r−c)²/2w²}` as the
    /// reduced amplitude on radial grids. Scaled to L² norm `norm`.
    Gaussian {
        #[serde(default)]
        center: f64,
        width: f64,
        #[serde(default)]
        momentum: f64,
        #[serde(default = "one")]
        norm: f64,
        /// Replace the state by `P_c ψ`, then rescale.
        #[serde(default)]
        project_continuum: bool,
    },
    /// The `k`-th eigenvector of `K + V` (ascending, from 0).
    Eigenstate { k: usize },
    /// Explicit samples, one per grid point.
    Samples {
        re: Vec<f64>,
        #[serde(default)]
        im: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub method: Method,
    /// Step of the splitting; required for `split_step2`.
    pub dt: Option<f64>,
    pub t_start: f64,
    pub t_max: f64,
    pub samples: usize,
    pub spacing: Spacing,
    /// Extra sample times, merged with the regular ones.
    pub extra_times: Vec<f64>,
    /// Initial time of the 1/t-scaled observables.
    pub t0: f64,
    /// Run on the shifted clock `τ = t + 1`, so that `1/τ` is regular at
    /// the initial time.
    pub shift_origin: bool,
    /// Accept `t_max` beyond the box policy; recorded in the manifest.
    pub waive_box_policy: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            method: Method::EigenbasisExact,
            dt: None,
            t_start: 0.0,
            t_max: 10.0,
            samples: 101,
            spacing: Spacing::Linear,
            extra_times: Vec::new(),
            t0: 1.0,
            shift_origin: false,
            waive_box_policy: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    /// `B₁(t) = C(t)/t + 4t(V + W) + B_V`.
    #[default]
    FirstLevel,
    /// `C(t)/t` with its free-flow split into a zero positive part and
    /// the remainder `−C/t²`.
    ConformalOverT,
}

/// Observable used by the Heisenberg and propagation-estimate suites, and
/// the discrete conformal factor used throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbConfig {
    pub observable: ObservableKind,
    pub factor: ConformalFactor,
}

impl Default for ProbConfig {
    fn default() -> Self {
        Self { observable: ObservableKind::FirstLevel, factor: ConformalFactor::Literal }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QRule {
    /// `Q = −[4x·∇V + 4V]_+`.
    #[default]
    Conformal,
    /// `Q = −[2x·∇V]_+`.
    Dilation,
    Alternative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptorConfig {
    pub q: QRule,
    /// Truncation horizon `T_B`; half the box horizon when absent.
    pub t_b: Option<f64>,
    /// Weight exponent of the residual diagnostics.
    pub sigma: f64,
}

impl Default for AdaptorConfig {
    fn default() -> Self {
        Self { q: QRule::Conformal, t_b: None, sigma: 1.0 }
    }
}

/// Scenario-declared bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub identity: f64,
    pub ratio_band: (f64, f64),
    pub conformal_identity: f64,
    /// Relative to `max(|lhs|, |rhs|, 1)`.
    pub heisenberg: f64,
    pub propagation_estimate: f64,
    pub hermiticity: f64,
    pub support: f64,
    pub positivity: f64,
    pub closure: f64,
    pub quadrature: f64,
    pub sharp_constant: f64,
    pub trend_limit: f64,
    pub decay_band: (f64, f64),
    pub l6_band: (f64, f64),
    pub first_level_band: (f64, f64),
    pub lens_spread: f64,
    pub repulsion_bound: f64,
    pub dispersive_constant: f64,
    pub h1_constant: f64,
    pub ibp: f64,
    pub log_power_limit: f64,
    pub lnorm_limit: f64,
    pub mass: f64,
    pub energy: f64,
    pub sup_slope_limit: f64,
    pub balance: f64,
    pub morawetz_positivity: f64,
    pub morawetz_cancellation: f64,
    /// Largest relative change of a constant under grid refinement.
    pub refinement_change: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-4,
            ratio_band: (3.5, 4.5),
            conformal_identity: 1e-6,
            heisenberg: 1e-6,
            propagation_estimate: 1e-6,
            hermiticity: 1e-10,
            support: 1e-10,
            positivity: 1e-8,
            closure: 1e-8,
            quadrature: 1e-6,
            sharp_constant: 50.0,
            trend_limit: 0.05,
            decay_band: (-1.25, -0.8),
            l6_band: (-1.25, -0.8),
            first_level_band: (-0.7, -0.35),
            lens_spread: 2.0,
            repulsion_bound: 10.0,
            dispersive_constant: 50.0,
            h1_constant: 2.0,
            ibp: 1e-4,
            log_power_limit: 0.1,
            lnorm_limit: 0.2,
            mass: 1e-10,
            energy: 1e-3,
            sup_slope_limit: -0.3,
            balance: 1e-3,
            morawetz_positivity: 1e-8,
            morawetz_cancellation: 1e-8,
            refinement_change: 0.2,
        }
    }
}

/// Windows, exponents and other per-suite choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Parameters {
    /// Weight exponent of the pointwise decay.
    pub sigma: f64,
    pub decay_window: (f64, f64),
    pub decay_samples: usize,
    /// Start of the rate fits of the positive-potential suite.
    pub fit_start: f64,
    /// Times of the conformal-identity and Heisenberg checks.
    pub check_times: Vec<f64>,
    /// Centered-difference step at the check times.
    pub check_step: f64,
    /// Time and step of the operator-identity suite.
    pub identity_time: f64,
    pub identity_step: f64,
    pub lens_times: Vec<f64>,
    pub probe_width: f64,
    pub coupling: Coupling,
    pub energy_window: (f64, f64),
    pub increment_slack: f64,
    pub increment_tail_ratio: f64,
    pub declared_envelope: Option<f64>,
    pub nls_fit_window: (f64, f64),
    pub convergence_time: f64,
    pub convergence_dt: f64,
    pub morawetz_profile: MorawetzProfile,
    pub epsilon_m: f64,
    /// Decay exponent `a` declared for the Morawetz bound; taken from `W`
    /// when `W` is self-similar.
    pub a: f64,
    /// Exponent of the local-decay variant.
    pub theta: f64,
    pub local_decay: bool,
    pub trend_slack: f64,
    /// Re-run the constant-producing suites on the refined grid.
    pub refine: bool,
}

impl Default for Parameters {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            decay_window: (5.0, 50.0),
            decay_samples: 24,
            fit_start: 5.0,
            check_times: vec![1.0, 2.0],
            check_step: 1e-4,
            identity_time: 1.0,
            identity_step: 1e-3,
            lens_times: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
            probe_width: 1.0,
            coupling: Coupling::Small,
            energy_window: (0.05, 2.0),
            increment_slack: 0.1,
            increment_tail_ratio: 0.5,
            declared_envelope: None,
            nls_fit_window: (1.0, 30.0),
            convergence_time: 2.0,
            convergence_dt: 0.05,
            morawetz_profile: MorawetzProfile::InverseBracket,
            epsilon_m: 0.1,
            a: 0.4,
            theta: 0.5,
            local_decay: true,
            trend_slack: 0.05,
            refine: false,
        }
    }
}

/// Deliberate corruptions, for runs that must fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct NegativeFlags {
    /// Build `B_V` from `−Q`.
    pub flip_q: bool,
    /// Flip the sign of the analytic `dB/dt`.
    pub corrupt_derivative: bool,
    /// Flip the sign of the Morawetz multiplier after construction.
    pub corrupt_morawetz_sign: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub suites: Vec<SuiteName>,
    pub grid: GridConfig,
    #[serde(default)]
    pub potential: StaticPotential,
    #[serde(default)]
    pub w: Perturbation,
    pub initial: InitialState,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub prob: ProbConfig,
    #[serde(default)]
    pub adaptor: AdaptorConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub negative: NegativeFlags,
}

fn one() -> f64 {
    1.0
}

/// Parses and validates one scenario document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| LabError::config("<document>", e.to_string()))?;
    let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        LabError::config(if path == "." { "<document>".to_string() } else { path }, e.inner().message().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

pub fn to_toml(config: &ScenarioConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| LabError::config("<document>", e.to_string()))
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(LabError::config(path, format!("must be finite and > 0, got {v}")))
    }
}

fn band(path: &str, b: (f64, f64)) -> Result<()> {
    if b.0 <= b.1 && b.0.is_finite() && b.1.is_finite() {
        Ok(())
    } else {
        Err(LabError::config(path, format!("band must satisfy lo <= hi, got {b:?}")))
    }
}

impl ScenarioConfig {
    /// Cross-field rules that the document grammar cannot express.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(LabError::config("name", format!("must be a non-empty [A-Za-z0-9_-] identifier, got {:?}", self.name)));
        }
        self.grid.build().map_err(|e| LabError::config("grid", e.to_string()))?;
        self.potential.validate().map_err(|e| LabError::config("potential", e.to_string()))?;

        match self.w {
            Perturbation::None => {}
            Perturbation::SelfSimilar { delta, sigma, a, width } => {
                if !delta.is_finite() {
                    return Err(LabError::config("w.delta", "must be finite"));
                }
                positive("w.sigma", sigma)?;
                positive("w.width", width)?;
                if !(a > 0.0 && a < 1.0) {
                    return Err(LabError::config("w.a", format!("decay exponent must satisfy 0 < a < 1, got {a}")));
                }
            }
            Perturbation::Semilinear { lambda } => {
                if !(lambda >= 0.0) || !lambda.is_finite() {
                    return Err(LabError::config(
                        "w.lambda",
                        format!("only the defocusing equation (lambda >= 0) is supported, got {lambda}"),
                    ));
                }
                if self.grid.kind != GridKind::Line {
                    return Err(LabError::config("w.lambda", "the cubic equation runs on line grids"));
                }
            }
        }

        match &self.initial {
            InitialState::Gaussian { center, width, momentum, norm, .. } => {
                positive("initial.width", *width)?;
                positive("initial.norm", *norm)?;
                if !center.is_finite() || !momentum.is_finite() {
                    return Err(LabError::config("initial", "center and momentum must be finite"));
                }
                if self.grid.kind == GridKind::Radial3d && *momentum != 0.0 {
                    return Err(LabError::config("initial.momentum", "radial states carry no momentum parameter"));
                }
            }
            InitialState::Eigenstate { k } => {
                if *k >= self.grid.n {
                    return Err(LabError::config("initial.k", format!("index {k} out of range for n = {}", self.grid.n)));
                }
            }
            InitialState::Samples { re, im } => {
                if re.len() != self.grid.n || !(im.is_empty() || im.len() == self.grid.n) {
                    return Err(LabError::config("initial.re", format!("expected {} samples", self.grid.n)));
                }
            }
        }

        let ev = &self.evolution;
        if !ev.t_start.is_finite() || !(ev.t_max > ev.t_start) || !ev.t_max.is_finite() {
            return Err(LabError::config("evolution.t_max", format!("need t_start < t_max, got [{}, {}]", ev.t_start, ev.t_max)));
        }
        if ev.samples < 2 {
            return Err(LabError::config("evolution.samples", "need at least two samples"));
        }
        positive("evolution.t0", ev.t0)?;
        if ev.spacing == Spacing::Log && !(self.clock_start() > 0.0) {
            return Err(LabError::config("evolution.spacing", "log spacing needs a positive start time"));
        }
        let dynamic = self.w != Perturbation::None;
        match ev.method {
            Method::EigenbasisExact if dynamic => {
                return Err(LabError::config("evolution.method", "exact eigenbasis evolution needs W = 0 and no nonlinearity"));
            }
            Method::SplitStep2 => positive("evolution.dt", ev.dt.unwrap_or(f64::NAN))?,
            _ => {}
        }

        positive("adaptor.sigma", self.adaptor.sigma)?;
        if let Some(t_b) = self.adaptor.t_b {
            positive("adaptor.t_b", t_b)?;
        }

        let t = &self.tolerances;
        for (path, b) in [
            ("tolerances.ratio_band", t.ratio_band),
            ("tolerances.decay_band", t.decay_band),
            ("tolerances.l6_band", t.l6_band),
            ("tolerances.first_level_band", t.first_level_band),
        ] {
            band(path, b)?;
        }

        let p = &self.parameters;
        positive("parameters.sigma", p.sigma)?;
        positive("parameters.check_step", p.check_step)?;
        positive("parameters.identity_step", p.identity_step)?;
        positive("parameters.epsilon_m", p.epsilon_m)?;
        if !(p.a > 0.0 && p.a < 1.0) {
            return Err(LabError::config("parameters.a", format!("decay exponent must satisfy 0 < a < 1, got {}", p.a)));
        }
        if self.has_suite(SuiteName::Morawetz) && p.local_decay && !(p.theta > 0.0 && p.theta < 1.0 - self.morawetz_a()) {
            return Err(LabError::config(
                "parameters.theta",
                format!("need 0 < theta < 1 - a = {}, got {}", 1.0 - self.morawetz_a(), p.theta),
            ));
        }
        for &s in &p.check_times {
            if !(s - p.check_step > 0.0) {
                return Err(LabError::config("parameters.check_times", format!("check time {s} must exceed the step")));
            }
        }
        band("parameters.decay_window", p.decay_window)?;

        let needs_line = [SuiteName::Nls];
        let needs_radial = [SuiteName::Morawetz];
        for s in &self.suites {
            if needs_line.contains(s) && self.grid.kind != GridKind::Line {
                return Err(LabError::config("suites", format!("{} runs on line grids", s.as_str())));
            }
            if needs_radial.contains(s) && self.grid.kind != GridKind::Radial3d {
                return Err(LabError::config("suites", format!("{} runs on radial grids", s.as_str())));
            }
            let linear_only = [
                SuiteName::ConformalIdentity,
                SuiteName::Heisenberg,
                SuiteName::PropagationEstimate,
                SuiteName::TimeDependent,
                SuiteName::Morawetz,
            ];
            if linear_only.contains(s) && matches!(self.w, Perturbation::Semilinear { .. }) {
                return Err(LabError::config("suites", format!("{} assumes a linear equation", s.as_str())));
            }
            if *s == SuiteName::Nls && !matches!(self.w, Perturbation::Semilinear { .. }) {
                return Err(LabError::config("suites", "nls needs w.type = \"semilinear\""));
            }
        }
        Ok(())
    }

    /// Time at which the initial state is posed, on the run clock.
    pub fn clock_start(&self) -> f64 {
        self.evolution.t_start + self.clock_shift()
    }

    pub fn clock_end(&self) -> f64 {
        self.evolution.t_max + self.clock_shift()
    }

    pub fn clock_shift(&self) -> f64 {
        if self.evolution.shift_origin {
            1.0
        } else {
            0.0
        }
    }

    /// `a` of the Morawetz bound: the decay of `W` when present.
    pub fn morawetz_a(&self) -> f64 {
        self.w.decay().unwrap_or(self.parameters.a)
    }

    pub fn has_suite(&self, s: SuiteName) -> bool {
        self.suites.contains(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tiny"
[grid]
kind = "line"
n = 64
extent = 8.0
[initial]
type = "gaussian"
width = 1.0
"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.evolution.method, Method::EigenbasisExact);
        assert_eq!(c.parameters.sigma, 1.0);
        assert_eq!(c.evolution.t0, 1.0);
        assert_eq!(c.w, Perturbation::None);
        assert!(c.potential.is_zero());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config(&format!("{MINIMAL}\n[potental]\nterms = []\n")).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("potental"), "{err}");
        let err = parse_config(&MINIMAL.replace("width = 1.0", "width = 1.0\nwidht = 2.0")).unwrap_err();
        assert!(err.to_string().contains("initial") && err.to_string().contains("widht"), "{err}");
    }

    #[test]
    fn missing_fields_report_their_path() {
        let err = parse_config(&MINIMAL.replace("n = 64\n", "")).unwrap_err();
        assert!(err.to_string().contains("grid") && err.to_string().contains("n"), "{err}");
    }

    #[test]
    fn decay_exponent_outside_unit_interval_is_rejected() {
        let doc = format!(
            "{MINIMAL}\n[w]\ntype = \"self_similar\"\ndelta = 0.05\nsigma = 2.0\na = 1.5\n[evolution]\nmethod = \"split_step2\"\ndt = 0.01\n"
        );
        let err = parse_config(&doc).unwrap_err();
        assert!(err.to_string().contains("w.a"), "{err}");
        assert!(parse_config(&doc.replace("a = 1.5", "a = 0.5")).is_ok());
    }

    #[test]
    fn focusing_nonlinearity_is_a_configuration_error() {
        let doc = format!("{MINIMAL}\n[w]\ntype = \"semilinear\"\nlambda = -1.0\n[evolution]\nmethod = \"split_step2\"\ndt = 0.01\n");
        assert!(parse_config(&doc).unwrap_err().is_config());
    }

    #[test]
    fn exact_method_with_w_is_rejected() {
        let doc = format!("{MINIMAL}\n[w]\ntype = \"semilinear\"\nlambda = 1.0\n");
        assert!(parse_config(&doc).unwrap_err().to_string().contains("evolution.method"));
    }

    #[test]
    fn round_trip_is_identity() {
        let doc = format!(
            "{MINIMAL}\nsuites_placeholder = 0\n"
        );
        assert!(parse_config(&doc).is_err());
        let mut c = parse_config(MINIMAL).unwrap();
        c.suites = vec![SuiteName::Adaptor, SuiteName::PositivePotential];
        c.parameters.local_decay = false;
        c.parameters.theta = 0.25;
        c.tolerances.ratio_band = (3.25, 4.75);
        let back = parse_config(&to_toml(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
