//! Small numeric helpers shared by the estimators.

use serde::{Deserialize, Serialize};

/// A point estimate with its standard error. `std_err == 0` marks an exact value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn new(value: f64, std_err: f64) -> Self {
        Self { value, std_err }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, std_err: 0.0 }
    }

    /// Mean and standard error of the mean from a count, a sum and a sum of squares.
    pub fn from_moments(n: u64, sum: f64, sum_sq: f64) -> Self {
        if n == 0 {
            return Self::new(f64::NAN, f64::NAN);
        }
        let nf = n as f64;
        let mean = sum / nf;
        if n < 2 {
            return Self::new(mean, f64::INFINITY);
        }
        let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
        Self::new(mean, (var / nf).sqrt())
    }

    /// Binomial proportion with its standard error.
    pub fn proportion(successes: u64, trials: u64) -> Self {
        let n = trials as f64;
        let q = successes as f64 / n;
        Self::new(q, (q * (1.0 - q) / n).sqrt())
    }

    /// Whether `target` lies within `z` standard errors of the estimate.
    pub fn agrees_with(&self, target: f64, z: f64) -> bool {
        (self.value - target).abs() <= z * self.std_err
    }
}

/// Ordinary least squares fit of `y = intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope; infinite with fewer than three points.
    pub slope_std_err: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    let slope_std_err = if n < 3 {
        f64::INFINITY
    } else {
        ((syy - slope * sxy).max(0.0) / ((nf - 2.0) * sxx)).sqrt()
    };
    Some(LineFit { slope, intercept: my - slope * mx, r_squared, slope_std_err })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let e = Estimate::from_moments(4, 10.0, 30.0);
        assert_eq!(e.value, 2.5);
        assert!((e.std_err - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn line() {
        let f = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.slope_std_err < 1e-7);
        let g = fit_line(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 0.0, 1.0]).unwrap();
        // Residual sum 0.8 over 2 degrees of freedom, sxx = 5.
        assert!((g.slope_std_err - 0.08f64.sqrt()).abs() < 1e-12);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 2.0]).is_none());
    }
}
