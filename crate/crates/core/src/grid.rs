//! Uniform Dirichlet grids, weights `<x>^-sigma` and the norms used by the estimates.
//!
//! Two geometries are supported. `Line` discretizes `[-L, L]` with the boundary
//! points removed. `Radial3d` discretizes `(0, R]` and carries the reduced s-wave
//! amplitude `u(r) = r psi(r)`; all inner products on it include the `4 pi`
//! angular factor so that expectations are those of the three dimensional state.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::State;

/// Smallest admissible point count.
pub const MIN_POINTS: usize = 8;

/// Fraction of the extent beyond which mass counts as boundary contamination.
pub const BOUNDARY_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Line,
    Radial3d,
}

impl GridKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GridKind::Line => "line",
            GridKind::Radial3d => "radial3d",
        }
    }
}

/// Identity of a grid, used to refuse mixing operators from different grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridId {
    kind: GridKind,
    n: usize,
    extent_bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    kind: GridKind,
    n: usize,
    h: f64,
    extent: f64,
    points: Vec<f64>,
}

impl Grid {
    pub fn new(kind: GridKind, n: usize, extent: f64) -> Result<Grid> {
        if n < MIN_POINTS {
            return Err(LabError::InvalidGrid(format!(
                "n too small: {n} < {MIN_POINTS}"
            )));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(LabError::InvalidGrid(format!(
                "extent must be positive, got {extent}"
            )));
        }
        let (h, origin) = match kind {
            GridKind::Line => (2.0 * extent / (n as f64 + 1.0), -extent),
            GridKind::Radial3d => (extent / (n as f64 + 1.0), 0.0),
        };
        let points = (1..=n).map(|j| origin + j as f64 * h).collect();
        Ok(Grid {
            kind,
            n,
            h,
            extent,
            points,
        })
    }

    pub fn line(n: usize, half_width: f64) -> Result<Grid> {
        Grid::new(GridKind::Line, n, half_width)
    }

    pub fn radial(n: usize, radius: f64) -> Result<Grid> {
        Grid::new(GridKind::Radial3d, n, radius)
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn id(&self) -> GridId {
        GridId {
            kind: self.kind,
            n: self.n,
            extent_bits: self.extent.to_bits(),
        }
    }

    /// Quadrature weight per point: `h` on the line, `4 pi h` on the radial grid.
    pub fn measure(&self) -> f64 {
        match self.kind {
            GridKind::Line => self.h,
            GridKind::Radial3d => 4.0 * PI * self.h,
        }
    }

    /// Same grid with the spacing halved (`n -> 2n + 1`), keeping the extent.
    pub fn refined(&self) -> Grid {
        Grid::new(self.kind, 2 * self.n + 1, self.extent).expect("refining a valid grid")
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.n, self.points.iter().map(|&x| f(x)))
    }

    pub fn sample_complex(&self, f: impl Fn(f64) -> Complex64) -> State {
        DVector::from_iterator(self.n, self.points.iter().map(|&x| f(x)))
    }

    /// `<u, v>` including the grid measure.
    pub fn inner(&self, u: &State, v: &State) -> Complex64 {
        u.dotc(v) * self.measure()
    }

    pub fn mass(&self, state: &State) -> f64 {
        state.norm_squared() * self.measure()
    }

    /// `<u, K u>` for the Dirichlet stencil `K`, summed as squared differences.
    pub fn kinetic_form(&self, state: &State) -> f64 {
        let n = self.n;
        let mut acc = state[0].norm_sqr() + state[n - 1].norm_sqr();
        for j in 0..n - 1 {
            acc += (state[j + 1] - state[j]).norm_sqr();
        }
        acc * self.measure() / (self.h * self.h)
    }

    pub fn weight(&self, sigma: f64) -> Result<WeightProfile> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(LabError::InvalidArgument(format!(
                "weight exponent must be non-negative, got {sigma}"
            )));
        }
        Ok(WeightProfile {
            sigma,
            samples: self.sample(|x| (1.0 + x * x).powf(-0.5 * sigma)),
        })
    }

    pub fn norm(&self, state: &State, which: NormKind) -> Result<f64> {
        self.check_len(state)?;
        let value = match which {
            NormKind::L2 => self.mass(state).sqrt(),
            NormKind::Lp(p) => {
                if !(p >= 1.0) {
                    return Err(LabError::InvalidArgument(format!(
                        "Lp norm needs p >= 1, got {p}"
                    )));
                }
                if p.is_infinite() {
                    self.sup_norm(state)
                } else {
                    self.lp_norm(state, p)
                }
            }
            NormKind::Sup => self.sup_norm(state),
            NormKind::H1 => (self.mass(state) + self.kinetic_form(state)).sqrt(),
            NormKind::L => {
                let h1 = (self.mass(state) + self.kinetic_form(state)).sqrt();
                let weighted: f64 = state
                    .iter()
                    .zip(&self.points)
                    .map(|(z, &x)| (1.0 + x * x) * z.norm_sqr())
                    .sum::<f64>()
                    * self.measure();
                h1 + weighted.sqrt()
            }
        };
        Ok(value)
    }

    fn lp_norm(&self, state: &State, p: f64) -> f64 {
        let sum: f64 = match self.kind {
            GridKind::Line => state.iter().map(|z| z.norm().powf(p)).sum::<f64>() * self.h,
            GridKind::Radial3d => {
                state
                    .iter()
                    .zip(&self.points)
                    .map(|(z, &r)| (z.norm() / r).powf(p) * r * r)
                    .sum::<f64>()
                    * 4.0
                    * PI
                    * self.h
            }
        };
        sum.powf(1.0 / p)
    }

    fn sup_norm(&self, state: &State) -> f64 {
        match self.kind {
            GridKind::Line => state.iter().map(|z| z.norm()).fold(0.0, f64::max),
            GridKind::Radial3d => state
                .iter()
                .zip(&self.points)
                .map(|(z, &r)| z.norm() / r)
                .fold(0.0, f64::max),
        }
    }

    /// `int_{|x| > 0.9 L} |psi|^2`.
    pub fn boundary_mass(&self, state: &State) -> f64 {
        let cut = BOUNDARY_FRACTION * self.extent;
        state
            .iter()
            .zip(&self.points)
            .filter(|(_, &x)| x.abs() > cut)
            .map(|(z, _)| z.norm_sqr())
            .sum::<f64>()
            * self.measure()
    }

    /// Indices of points with `|x| <= 0.9 L`.
    pub fn interior_indices(&self) -> Vec<usize> {
        let cut = BOUNDARY_FRACTION * self.extent;
        (0..self.n).filter(|&j| self.points[j].abs() <= cut).collect()
    }

    /// Time for the fastest lattice wave (group velocity `2/h`) to travel from
    /// the origin to the wall and back. Operator-level quantities that are sup
    /// norms over all states lose meaning after this horizon.
    pub fn operator_horizon(&self) -> f64 {
        self.extent * self.h
    }

    pub fn check_len(&self, state: &State) -> Result<()> {
        if state.len() != self.n {
            return Err(LabError::GridMismatch(format!(
                "state has {} entries, grid has {}",
                state.len(),
                self.n
            )));
        }
        Ok(())
    }
}

/// `<x>^{-sigma}` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightProfile {
    pub sigma: f64,
    pub samples: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L2,
    Lp(f64),
    Sup,
    H1,
    /// `H^1` norm plus `||<x> psi||`.
    L,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::assert_close;
    use proptest::prelude::*;

    mod approx_eq {
        macro_rules! assert_close {
            ($a:expr, $b:expr, $tol:expr) => {{
                let (a, b): (f64, f64) = ($a, $b);
                assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
            }};
        }
        pub(crate) use assert_close;
    }

    #[test]
    fn rejects_small_or_degenerate_grids() {
        let err = Grid::line(3, 5.0).unwrap_err();
        assert!(err.to_string().contains("n too small"));
        assert!(Grid::line(16, 0.0).is_err());
        assert!(Grid::radial(16, -1.0).is_err());
    }

    #[test]
    fn line_grid_convention() {
        let g = Grid::line(9, 5.0).unwrap();
        assert_close!(g.h(), 1.0, 1e-15);
        let expected: Vec<f64> = (-4..=4).map(|k| k as f64).collect();
        for (a, b) in g.points().iter().zip(&expected) {
            assert_close!(*a, *b, 1e-14);
        }
    }

    #[test]
    fn radial_grid_convention() {
        // n = 4 is below the point floor, so check the rule on n = 9, R = 10.
        assert!(Grid::radial(4, 5.0).is_err());
        let g = Grid::radial(9, 10.0).unwrap();
        assert_close!(g.h(), 1.0, 1e-15);
        assert_eq!(g.points()[0], 1.0);
        assert_eq!(g.points()[8], 9.0);
    }

    #[test]
    fn weight_examples() {
        let g = Grid::line(9, 5.0).unwrap();
        let w2 = g.weight(2.0).unwrap();
        assert_close!(w2.samples[4], 1.0, 0.0);
        let w1 = g.weight(1.0).unwrap();
        for (w, x) in w1.samples.iter().zip(g.points()) {
            assert_close!(*w, 1.0 / (1.0 + x * x).sqrt(), 1e-15);
        }
        // Spacing sqrt(3) puts x = sqrt(3) at index 5, where <x> = 2.
        let g3 = Grid::line(9, 5.0 * 3f64.sqrt()).unwrap();
        assert_close!(g3.points()[5], 3f64.sqrt(), 1e-12);
        assert_close!(g3.weight(1.0).unwrap().samples[5], 0.5, 1e-12);
        assert!(g.weight(-0.5).is_err());
    }

    #[test]
    fn norm_examples() {
        let g = Grid::line(64, 4.0).unwrap();
        let zero = State::zeros(64);
        for kind in [NormKind::L2, NormKind::Lp(6.0), NormKind::H1, NormKind::L] {
            assert_eq!(g.norm(&zero, kind).unwrap(), 0.0);
        }
        let mut unit = State::zeros(64);
        unit[10] = Complex64::new(1.0, 0.0);
        assert_close!(g.norm(&unit, NormKind::L2).unwrap(), g.h().sqrt(), 1e-15);
        assert!(g.norm(&unit, NormKind::Lp(0.5)).is_err());
    }

    #[test]
    fn gaussian_l2_norm_matches_integral() {
        let g = Grid::line(512, 20.0).unwrap();
        let psi = g.sample_complex(|x| Complex64::new((-x * x / 2.0).exp(), 0.0));
        let target = PI.powf(0.25);
        let got = g.norm(&psi, NormKind::L2).unwrap();
        assert!((got / target - 1.0).abs() <= 1e-6, "{got} vs {target}");
    }

    #[test]
    fn radial_norms_use_reduced_rule() {
        // u = r exp(-r^2/2) is psi = exp(-r^2/2) in 3D: ||psi||_2^2 = pi^{3/2}.
        let g = Grid::radial(600, 15.0).unwrap();
        let u = g.sample_complex(|r| Complex64::new(r * (-r * r / 2.0).exp(), 0.0));
        let l2 = g.norm(&u, NormKind::L2).unwrap();
        assert_close!(l2 * l2, PI.powf(1.5), 1e-9);
        // ||psi||_6^6 = (pi/3)^{3/2}.
        let l6 = g.norm(&u, NormKind::Lp(6.0)).unwrap();
        assert_close!(l6.powi(6), (PI / 3.0).powf(1.5), 1e-9);
        assert_close!(g.norm(&u, NormKind::Sup).unwrap(), 1.0, 1e-3);
    }

    #[test]
    fn quadrature_error_is_second_order_for_kinked_densities() {
        // |f|^2 = (1 - x^2)_+ has a derivative jump at the grid-aligned support
        // ends, so the rectangle rule error is exactly h^2/3.
        let exact = 4.0 / 3.0;
        let err = |n: usize| {
            let g = Grid::line(n, 2.0).unwrap();
            let f = g.sample_complex(|x| Complex64::new((1.0 - x * x).max(0.0).sqrt(), 0.0));
            (g.norm(&f, NormKind::L2).unwrap().powi(2) - exact).abs()
        };
        let (e1, e2, e3) = (err(15), err(31), err(63));
        for ratio in [e1 / e2, e2 / e3] {
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        }
        // Smooth compact data converges at least this fast.
        let smooth = |n: usize| {
            let g = Grid::line(n, 2.0).unwrap();
            let f = g.sample_complex(|x| Complex64::new((1.0 - x * x).max(0.0).powi(3), 0.0));
            let exact = 2048.0 / 3003.0;
            ((g.norm(&f, NormKind::L2).unwrap().powi(2) - exact).abs(), g.h())
        };
        for n in [15, 31, 63] {
            let (e, h) = smooth(n);
            assert!(e <= h * h, "smooth error {e} at h {h}");
        }
    }

    #[test]
    fn boundary_mass_sees_only_the_outer_tenth() {
        let g = Grid::line(99, 10.0).unwrap();
        let inside = g.sample_complex(|x| Complex64::new(if x.abs() < 5.0 { 1.0 } else { 0.0 }, 0.0));
        assert_eq!(g.boundary_mass(&inside), 0.0);
        let outside = g.sample_complex(|x| Complex64::new(if x.abs() > 9.5 { 1.0 } else { 0.0 }, 0.0));
        assert!(g.boundary_mass(&outside) > 0.0);
    }

    proptest! {
        #[test]
        fn weights_are_monotone(s1 in 0.0f64..3.0, ds in 0.0f64..2.0) {
            let g = Grid::line(33, 6.0).unwrap();
            let w1 = g.weight(s1).unwrap();
            let w2 = g.weight(s1 + ds).unwrap();
            for j in 0..g.n() {
                prop_assert!(w1.samples[j] > 0.0 && w1.samples[j] <= 1.0);
                prop_assert!(w2.samples[j] <= w1.samples[j] + 1e-15);
            }
            // Non-increasing in |x| on the right half.
            for j in 16..g.n() - 1 {
                prop_assert!(w1.samples[j + 1] <= w1.samples[j]);
            }
        }

        #[test]
        fn l_norm_dominates(re in proptest::collection::vec(-1.0f64..1.0, 16),
                            im in proptest::collection::vec(-1.0f64..1.0, 16),
                            radial in any::<bool>()) {
            let g = if radial { Grid::radial(16, 4.0) } else { Grid::line(16, 4.0) }.unwrap();
            let psi = State::from_iterator(16, re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)));
            let l = g.norm(&psi, NormKind::L).unwrap();
            prop_assert!(l >= g.norm(&psi, NormKind::H1).unwrap());
            prop_assert!(l >= g.norm(&psi, NormKind::L2).unwrap());
        }
    }
}
