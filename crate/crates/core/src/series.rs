//! Time series of scalar functionals and least-squares rate fits.

use serde::Serialize;

use crate::error::{LabError, Result};

/// Minimum number of usable samples for a rate fit.
pub const MIN_FIT_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableSeries {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Interval on which the values are trusted.
    pub window: (f64, f64),
    /// Largest imaginary part discarded when the values were formed.
    pub max_imaginary: f64,
}

impl ObservableSeries {
    pub fn new(label: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if times.len() != values.len() {
            return Err(LabError::InvalidArgument(format!(
                "series '{label}': {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LabError::InvalidArgument(format!("series '{label}': times not strictly increasing")));
        }
        if let Some(v) = times.iter().chain(values.iter()).find(|v| !v.is_finite()) {
            return Err(LabError::Numerical(format!("series '{label}': non-finite entry {v}")));
        }
        let window = match (times.first(), times.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0.0, 0.0),
        };
        Ok(Self { label, times, values, window, max_imaginary: 0.0 })
    }

    pub fn with_window(mut self, window: (f64, f64)) -> Self {
        self.window = window;
        self
    }

    pub fn with_imaginary(mut self, max_imaginary: f64) -> Self {
        self.max_imaginary = max_imaginary;
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Samples inside the validity window.
    pub fn in_window(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (a, b) = self.window;
        self.times
            .iter()
            .zip(&self.values)
            .filter(move |(t, _)| **t >= a && **t <= b)
            .map(|(t, v)| (*t, *v))
    }

    /// Two-column delimited text with a header naming the observable.
    pub fn to_csv(&self) -> String {
        let mut out = format!("time,{}\n", self.label.replace([',', '\n'], "_"));
        for (t, v) in self.times.iter().zip(&self.values) {
            out.push_str(&format!("{t:.17e},{v:.17e}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Two standard errors of the slope.
    pub width: f64,
    pub samples: usize,
}

/// Ordinary least squares `y ≈ slope * x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return Err(LabError::InvalidArgument(format!("need at least two paired samples, got {n}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(LabError::InvalidArgument("abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let width = if n > 2 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        2.0 * (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(LinearFit { slope, intercept, width, samples: n })
}

/// Slope of `log(value)` against `log(t)` over `window` (defaults to the
/// series window). Non-positive values are dropped.
pub fn fit_decay_rate(series: &ObservableSeries, window: Option<(f64, f64)>) -> Result<LinearFit> {
    let (a, b) = window.unwrap_or(series.window);
    let (xs, ys): (Vec<f64>, Vec<f64>) = series
        .times
        .iter()
        .zip(&series.values)
        .filter(|(t, v)| **t >= a && **t <= b && **t > 0.0 && **v > 0.0)
        .map(|(t, v)| (t.ln(), v.ln()))
        .unzip();
    if xs.len() < MIN_FIT_SAMPLES {
        return Err(LabError::InvalidArgument(format!(
            "series '{}' has {} positive samples in [{a}, {b}], need {MIN_FIT_SAMPLES}",
            series.label,
            xs.len()
        )));
    }
    linear_fit(&xs, &ys)
}

/// Slope of `value` against `log(t)`: the coefficient `c` in `value ≈ c log t`.
pub fn fit_log_growth(series: &ObservableSeries, window: Option<(f64, f64)>) -> Result<LinearFit> {
    let (a, b) = window.unwrap_or(series.window);
    let (xs, ys): (Vec<f64>, Vec<f64>) = series
        .times
        .iter()
        .zip(&series.values)
        .filter(|(t, _)| **t >= a && **t <= b && **t > 0.0)
        .map(|(t, v)| (t.ln(), *v))
        .unzip();
    if xs.len() < MIN_FIT_SAMPLES {
        return Err(LabError::InvalidArgument(format!(
            "series '{}' has {} samples in [{a}, {b}], need {MIN_FIT_SAMPLES}",
            series.label,
            xs.len()
        )));
    }
    linear_fit(&xs, &ys)
}

/// `n` log-spaced times from `a` to `b` inclusive.
pub fn log_times(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|k| (la + (lb - la) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// `n` equally spaced times from `a` to `b` inclusive.
pub fn linear_times(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(mut f: impl FnMut(f64) -> f64) -> ObservableSeries {
        let t = log_times(1.0, 100.0, 20);
        let v = t.iter().map(|&s| f(s)).collect();
        ObservableSeries::new("s", t, v).unwrap()
    }

    #[test]
    fn exact_power_laws() {
        let fit = fit_decay_rate(&series(|t| 3.0 / t), None).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-6);
        let fit = fit_decay_rate(&series(|_| 2.5), None).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn noisy_inverse_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = series(|t| 3.0 / t * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)));
        let fit = fit_decay_rate(&s, None).unwrap();
        assert!((-1.1..=-0.9).contains(&fit.slope), "{}", fit.slope);
        assert!(fit.width > 0.0 && fit.width < 0.05);
    }

    #[test]
    fn non_positive_samples_are_dropped() {
        let t = linear_times(1.0, 12.0, 12);
        let mut v: Vec<f64> = t.iter().map(|s| 1.0 / s).collect();
        v[0] = -1.0;
        v[1] = 0.0;
        let s = ObservableSeries::new("s", t.clone(), v).unwrap();
        assert_eq!(fit_decay_rate(&s, None).unwrap().samples, 10);
        let s = ObservableSeries::new("s", t, vec![-1.0; 12]).unwrap();
        assert!(fit_decay_rate(&s, None).is_err());
    }

    #[test]
    fn log_growth_coefficient() {
        let s = series(|t| 0.7 * t.ln() + 2.0);
        let fit = fit_log_growth(&s, None).unwrap();
        assert!((fit.slope - 0.7).abs() < 1e-12);
    }

    #[test]
    fn series_validation_and_csv() {
        assert!(ObservableSeries::new("s", vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(ObservableSeries::new("s", vec![1.0], vec![f64::NAN]).is_err());
        let s = ObservableSeries::new("mass", vec![0.0, 0.5], vec![1.0, 1.0]).unwrap();
        let csv = s.to_csv();
        assert!(csv.starts_with("time,mass\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    proptest! {
        #[test]
        fn fitted_slope_recovers_exponent(p in -3.0f64..3.0, c in 0.1f64..10.0) {
            let fit = fit_decay_rate(&series(|t| c * t.powf(p)), None).unwrap();
            prop_assert!((fit.slope - p).abs() < 1e-9);
        }
    }
}
