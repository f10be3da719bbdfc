//! Closed-form potentials `V(x)`, time-dependent perturbations `W(x, t)`
//! and the cubic nonlinearity flag.
//!
//! On radial grids the coordinate is `r` and `∇V` means `V'(r)`, so
//! `x·∇V` is `r V'(r)`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::Grid;
use nalgebra::DVector;

/// One term of a static potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialTerm {
    /// `amplitude * exp(-((x - center) / width)^2)`.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: f64,
    },
    /// `amplitude * exp(-((|x| - center) / width)^2)`, even in `x`.
    /// With `center > 0` this is a pair of barriers on the line.
    Shell {
        amplitude: f64,
        width: f64,
        center: f64,
    },
    /// Mollified Coulomb-like tail `amplitude / sqrt(core^2 + x^2)`.
    /// Homogeneous of degree -1 for `|x| >> core`.
    Soft { amplitude: f64, core: f64 },
}

impl PotentialTerm {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            PotentialTerm::Gaussian { amplitude, width, center } => {
                amplitude.is_finite() && width > 0.0 && width.is_finite() && center.is_finite()
            }
            PotentialTerm::Shell { amplitude, width, center } => {
                amplitude.is_finite() && width > 0.0 && width.is_finite() && center.is_finite()
            }
            PotentialTerm::Soft { amplitude, core } => amplitude.is_finite() && core > 0.0 && core.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(LabError::InvalidArgument(format!("bad potential term {self:?}")))
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            PotentialTerm::Gaussian { amplitude, width, center } => {
                let s = (x - center) / width;
                amplitude * (-s * s).exp()
            }
            PotentialTerm::Shell { amplitude, width, center } => {
                let s = (x.abs() - center) / width;
                amplitude * (-s * s).exp()
            }
            PotentialTerm::Soft { amplitude, core } => amplitude / (core * core + x * x).sqrt(),
        }
    }

    pub fn gradient(&self, x: f64) -> f64 {
        match *self {
            PotentialTerm::Gaussian { amplitude, width, center } => {
                let s = (x - center) / width;
                -2.0 * amplitude * s / width * (-s * s).exp()
            }
            PotentialTerm::Shell { amplitude, width, center } => {
                let s = (x.abs() - center) / width;
                -2.0 * amplitude * s / width * (-s * s).exp() * x.signum()
            }
            PotentialTerm::Soft { amplitude, core } => -amplitude * x / (core * core + x * x).powf(1.5),
        }
    }

    /// `x · ∇V`, evaluated from its own closed form.
    pub fn x_gradient(&self, x: f64) -> f64 {
        match *self {
            PotentialTerm::Gaussian { amplitude, width, center } => {
                let s = (x - center) / width;
                -2.0 * amplitude * (x - center) * x / (width * width) * (-s * s).exp()
            }
            PotentialTerm::Shell { amplitude, width, center } => {
                let s = (x.abs() - center) / width;
                -2.0 * amplitude * (x.abs() - center) * x.abs() / (width * width) * (-s * s).exp()
            }
            PotentialTerm::Soft { amplitude, core } => {
                let q = core * core + x * x;
                -amplitude * x * x / (q * q.sqrt())
            }
        }
    }
}

/// Static potential: a sum of terms. The empty sum is the free case.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticPotential {
    #[serde(default)]
    pub terms: Vec<PotentialTerm>,
}

impl StaticPotential {
    pub fn free() -> Self {
        Self::default()
    }

    pub fn new(terms: Vec<PotentialTerm>) -> Result<Self> {
        for t in &terms {
            t.validate()?;
        }
        Ok(Self { terms })
    }

    pub fn gaussian(amplitude: f64, width: f64) -> Self {
        Self {
            terms: vec![PotentialTerm::Gaussian { amplitude, width, center: 0.0 }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.terms.iter().try_for_each(PotentialTerm::validate)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| match *t {
            PotentialTerm::Gaussian { amplitude, .. }
            | PotentialTerm::Shell { amplitude, .. }
            | PotentialTerm::Soft { amplitude, .. } => amplitude == 0.0,
        })
    }

    /// Family label in the vocabulary used by reports.
    pub fn family(&self) -> &'static str {
        match self.terms.as_slice() {
            [] => "free",
            [PotentialTerm::Gaussian { amplitude, .. }] if *amplitude >= 0.0 => "gaussian_bump",
            [PotentialTerm::Gaussian { .. }] => "gaussian_well",
            _ => "sum",
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.terms.iter().map(|t| t.value(x)).sum()
    }

    pub fn gradient(&self, x: f64) -> f64 {
        self.terms.iter().map(|t| t.gradient(x)).sum()
    }

    pub fn x_gradient(&self, x: f64) -> f64 {
        self.terms.iter().map(|t| t.x_gradient(x)).sum()
    }

    pub fn samples(&self, grid: &Grid) -> DVector<f64> {
        grid.sample(|x| self.value(x))
    }

    pub fn x_gradient_samples(&self, grid: &Grid) -> DVector<f64> {
        grid.sample(|x| self.x_gradient(x))
    }
}

/// Time-dependent perturbation
/// `W(x, t) = delta * (1 + t)^(-decay) * exp(-(x / width)^2)`.
///
/// `decay = 1` is the self-similar envelope `|∂_t W| ≲ delta / t`; with
/// `0 < decay < 1` the gradient decays like `t^(-decay)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeDependentPotential {
    pub delta: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "one")]
    pub decay: f64,
}

fn one() -> f64 {
    1.0
}

impl TimeDependentPotential {
    pub fn new(delta: f64, width: f64, decay: f64) -> Result<Self> {
        let w = Self { delta, width, decay };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() || !(self.width > 0.0) || !(self.decay > 0.0) || !self.decay.is_finite() {
            return Err(LabError::InvalidArgument(format!("bad time-dependent potential {self:?}")));
        }
        Ok(())
    }

    fn envelope(&self, t: f64) -> f64 {
        self.delta * (1.0 + t).powf(-self.decay)
    }

    fn profile(&self, x: f64) -> f64 {
        let s = x / self.width;
        (-s * s).exp()
    }

    pub fn value(&self, x: f64, t: f64) -> f64 {
        self.envelope(t) * self.profile(x)
    }

    pub fn dt(&self, x: f64, t: f64) -> f64 {
        -self.decay / (1.0 + t) * self.value(x, t)
    }

    pub fn gradient(&self, x: f64, t: f64) -> f64 {
        -2.0 * x / (self.width * self.width) * self.value(x, t)
    }

    pub fn x_gradient(&self, x: f64, t: f64) -> f64 {
        -2.0 * x * x / (self.width * self.width) * self.value(x, t)
    }

    pub fn samples(&self, grid: &Grid, t: f64) -> DVector<f64> {
        grid.sample(|x| self.value(x, t))
    }

    /// Smallest `d` with `|∂_t W| ≤ d t^{-1} ⟨x⟩^{-σ}` on the grid for `t > 0`.
    pub fn envelope_constant(&self, grid: &Grid, sigma: f64) -> f64 {
        // t |∂_t W| = decay * t/(1+t)^(1+decay) * delta * profile, maximized at t = 1/decay.
        let t_star = 1.0 / self.decay;
        let time_factor = self.decay * t_star * (1.0 + t_star).powf(-1.0 - self.decay);
        grid.points()
            .iter()
            .map(|&x| time_factor * self.delta.abs() * self.profile(x) * (1.0 + x * x).powf(sigma / 2.0))
            .fold(0.0, f64::max)
    }
}

/// Full model `V + W(t)` with an optional defocusing cubic term `λ|ψ|²`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PotentialModel {
    pub potential: StaticPotential,
    pub time_dependent: Option<TimeDependentPotential>,
    pub cubic: Option<f64>,
}

impl PotentialModel {
    pub fn new(
        potential: StaticPotential,
        time_dependent: Option<TimeDependentPotential>,
        cubic: Option<f64>,
    ) -> Result<Self> {
        potential.validate()?;
        if let Some(w) = &time_dependent {
            w.validate()?;
        }
        if let Some(lambda) = cubic {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(LabError::InvalidArgument(format!(
                    "cubic coefficient must be finite and >= 0 (defocusing), got {lambda}"
                )));
            }
        }
        Ok(Self { potential, time_dependent, cubic })
    }

    pub fn stationary(potential: StaticPotential) -> Self {
        Self { potential, time_dependent: None, cubic: None }
    }

    pub fn family(&self) -> &'static str {
        if self.cubic.is_some() {
            "cubic_nls_flag"
        } else if self.time_dependent.is_some() {
            "separable_timedep"
        } else {
            self.potential.family()
        }
    }

    pub fn w_value(&self, x: f64, t: f64) -> f64 {
        self.time_dependent.as_ref().map_or(0.0, |w| w.value(x, t))
    }

    pub fn w_dt(&self, x: f64, t: f64) -> f64 {
        self.time_dependent.as_ref().map_or(0.0, |w| w.dt(x, t))
    }

    pub fn w_gradient(&self, x: f64, t: f64) -> f64 {
        self.time_dependent.as_ref().map_or(0.0, |w| w.gradient(x, t))
    }

    pub fn w_x_gradient(&self, x: f64, t: f64) -> f64 {
        self.time_dependent.as_ref().map_or(0.0, |w| w.x_gradient(x, t))
    }

    /// `V + W(t)` samples.
    pub fn total_samples(&self, grid: &Grid, t: f64) -> DVector<f64> {
        grid.sample(|x| self.potential.value(x) + self.w_value(x, t))
    }
}

/// `[f]_+`: `f` where `f ≥ 0`, else 0.
pub fn positive_part(f: f64) -> f64 {
    if f > 0.0 {
        f
    } else {
        0.0
    }
}

/// `[f]_-`: `f` where `f ≤ 0`, else 0. Note the sign: `f = [f]_+ + [f]_-`.
pub fn negative_part(f: f64) -> f64 {
    if f < 0.0 {
        f
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_terms() -> Vec<PotentialTerm> {
        vec![
            PotentialTerm::Gaussian { amplitude: 2.0, width: 1.0, center: 0.0 },
            PotentialTerm::Gaussian { amplitude: -3.0, width: 0.7, center: 0.4 },
            PotentialTerm::Shell { amplitude: 2.0, width: 0.5, center: 2.5 },
            PotentialTerm::Soft { amplitude: 1.5, core: 0.3 },
        ]
    }

    #[test]
    fn gradients_match_finite_differences() {
        let eps = 1e-6;
        for term in sample_terms() {
            for &x in &[-3.1, -1.0, -0.2, 0.3, 1.7, 4.0] {
                let fd = (term.value(x + eps) - term.value(x - eps)) / (2.0 * eps);
                assert!((fd - term.gradient(x)).abs() < 1e-7, "{term:?} at {x}");
            }
        }
        let w = TimeDependentPotential::new(0.3, 1.2, 0.5).unwrap();
        for &(x, t) in &[(0.5, 1.0), (-2.0, 3.0), (1.1, 0.2)] {
            let fx = (w.value(x + eps, t) - w.value(x - eps, t)) / (2.0 * eps);
            let ft = (w.value(x, t + eps) - w.value(x, t - eps)) / (2.0 * eps);
            assert!((fx - w.gradient(x, t)).abs() < 1e-8);
            assert!((ft - w.dt(x, t)).abs() < 1e-8);
        }
    }

    #[test]
    fn gaussian_conformal_combination() {
        let v = StaticPotential::gaussian(1.0, 1.0);
        for &x in &[0.0, 0.3, 0.9, 2.0] {
            let combo = 4.0 * v.x_gradient(x) + 4.0 * v.value(x);
            let expected = 4.0 * (-x * x).exp() * (1.0 - 2.0 * x * x);
            assert!((combo - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn soft_term_is_asymptotically_homogeneous() {
        let v = StaticPotential::new(vec![PotentialTerm::Soft { amplitude: 1.0, core: 0.1 }]).unwrap();
        let x = 30.0;
        // x V' + V = a c² / (c² + x²)^{3/2}, relatively c² / (c² + x²).
        assert!((v.x_gradient(x) + v.value(x)).abs() <= 1.2e-5 * v.value(x));
    }

    #[test]
    fn family_labels() {
        assert_eq!(StaticPotential::free().family(), "free");
        assert_eq!(StaticPotential::gaussian(1.0, 1.0).family(), "gaussian_bump");
        assert_eq!(StaticPotential::gaussian(-1.0, 1.0).family(), "gaussian_well");
        assert_eq!(StaticPotential::new(sample_terms()).unwrap().family(), "sum");
        let nls = PotentialModel::new(StaticPotential::free(), None, Some(1.0)).unwrap();
        assert_eq!(nls.family(), "cubic_nls_flag");
    }

    #[test]
    fn focusing_cubic_rejected() {
        assert!(PotentialModel::new(StaticPotential::free(), None, Some(-1.0)).is_err());
        assert!(StaticPotential::new(vec![PotentialTerm::Gaussian { amplitude: 1.0, width: 0.0, center: 0.0 }]).is_err());
    }

    #[test]
    fn envelope_constant_bounds_time_derivative() {
        let grid = Grid::line(64, 10.0).unwrap();
        let w = TimeDependentPotential::new(0.05, 1.0, 1.0).unwrap();
        let d = w.envelope_constant(&grid, 2.0);
        for &t in &[0.1, 0.5, 1.0, 2.0, 10.0] {
            for &x in grid.points() {
                let lhs = w.dt(x, t).abs();
                let rhs = d / t * (1.0 + x * x).powf(-1.0);
                assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs} at x={x}, t={t}");
            }
        }
    }

    proptest! {
        #[test]
        fn x_gradient_is_x_times_gradient(x in -20.0f64..20.0, a in -5.0f64..5.0, w in 0.2f64..3.0, c in -2.0f64..2.0) {
            let v = StaticPotential::new(vec![
                PotentialTerm::Gaussian { amplitude: a, width: w, center: c },
                PotentialTerm::Shell { amplitude: a, width: w, center: c.abs() },
                PotentialTerm::Soft { amplitude: a, core: w },
            ]).unwrap();
            let diff = (v.x_gradient(x) - x * v.gradient(x)).abs();
            prop_assert!(diff <= 1e-12 * (1.0 + v.x_gradient(x).abs()));
            let td = TimeDependentPotential::new(a, w, 0.5).unwrap();
            let t = c.abs() * 3.0;
            prop_assert!((td.x_gradient(x, t) - x * td.gradient(x, t)).abs() <= 1e-12);
        }

        #[test]
        fn parts_reassemble(f in -10.0f64..10.0) {
            prop_assert_eq!(positive_part(f) + negative_part(f), f);
            prop_assert!(positive_part(f) >= 0.0 && negative_part(f) <= 0.0);
        }
    }
}
