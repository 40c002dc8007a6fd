//! Estimators shared by the simulations: compensated sums, normal-theory
//! confidence intervals and least-squares slopes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neumaier's compensated summation. Adding the same values in the same order
/// always gives the same bits, which is what the determinism contract needs.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// A Monte Carlo mean with its 95% normal-theory half width.
///
/// Failed trials are counted in `failures` and contribute zero to the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub mean: f64,
    pub half_width_95: f64,
    pub trials: u64,
    pub failures: u64,
}

impl EstimateWithCI {
    /// Builds the estimate from per-trial values (already zeroed on failure).
    pub fn from_samples(values: &[f64], failures: u64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("trials", "at least one trial is required"));
        }
        if failures > values.len() as u64 {
            return Err(Error::Dimension(format!(
                "{failures} failures out of {} trials",
                values.len()
            )));
        }
        let t = values.len() as f64;
        let mean = values.iter().copied().collect::<CompensatedSum>().value() / t;
        let ss = values
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .collect::<CompensatedSum>()
            .value();
        let sd = if values.len() > 1 {
            (ss / (t - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(EstimateWithCI {
            mean,
            half_width_95: 1.96 * sd / t.sqrt(),
            trials: values.len() as u64,
            failures,
        })
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        self.half_width_95 / 1.96
    }

    pub fn contains(&self, value: f64) -> bool {
        (self.mean - value).abs() <= self.half_width_95
    }

    /// Half width of the interval on `log2(mean)` by the delta method.
    pub fn log2_half_width(&self) -> f64 {
        if self.mean > 0.0 {
            self.half_width_95 / (self.mean * std::f64::consts::LN_2)
        } else {
            f64::INFINITY
        }
    }
}

/// Least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!(
            "{} abscissae for {} ordinates",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::config("m_sweep", "a fit needs at least two points"));
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::config("m_sweep", "a sweep point has a non-finite value"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::config("m_sweep", "sweep points must be distinct"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        s.add(1.0);
        s.add(-1e16);
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn estimate_of_constant_has_zero_width() {
        let e = EstimateWithCI::from_samples(&[1.0; 100], 0).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.half_width_95, 0.0);
        assert_eq!(e.trials, 100);
    }

    #[test]
    fn estimate_width() {
        let e = EstimateWithCI::from_samples(&[0.0, 2.0, 0.0, 2.0], 2).unwrap();
        assert_eq!(e.mean, 1.0);
        let sd = (4.0f64 / 3.0).sqrt();
        assert!((e.half_width_95 - 1.96 * sd / 2.0).abs() < 1e-15);
        assert!(EstimateWithCI::from_samples(&[], 0).is_err());
        assert!(EstimateWithCI::from_samples(&[1.0], 2).is_err());
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [8.0, 10.0, 12.0, 14.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 + 1.5 * x).collect();
        let f = least_squares(&xs, &ys).unwrap();
        assert!((f.slope - 1.5).abs() < 1e-12);
        assert!((f.intercept - 3.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(least_squares(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(least_squares(&[1.0], &[1.0]).is_err());
    }
}
