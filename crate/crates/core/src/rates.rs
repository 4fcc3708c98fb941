//! Least-squares power-law fits on log-log data.

use serde::{Deserialize, Serialize};

use crate::error::FitError;

/// Fit of `y ~ constant * x^slope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub constant: f64,
    /// Largest absolute deviation of `ln y` from the fitted line.
    pub residual: f64,
    pub points: Vec<(f64, f64)>,
}

impl RateFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.constant * x.powf(self.slope)
    }
}

/// Named fit as written to rate JSON files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub quantity: String,
    pub slope: f64,
    pub constant: f64,
    pub residual: f64,
    pub points: Vec<(f64, f64)>,
}

impl NamedFit {
    pub fn new(quantity: impl Into<String>, fit: &RateFit) -> Self {
        Self {
            quantity: quantity.into(),
            slope: fit.slope,
            constant: fit.constant,
            residual: fit.residual,
            points: fit.points.clone(),
        }
    }
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    for &(x, y) in points {
        if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(FitError::NonPositive { x, y });
        }
    }
    for (i, a) in points.iter().enumerate() {
        if points[i + 1..].iter().any(|b| b.0 == a.0) {
            return Err(FitError::DuplicateAbscissa);
        }
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    Ok(RateFit {
        slope,
        constant: intercept.exp(),
        residual,
        points: points.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [0.4_f64, 0.2, 0.1, 0.05].iter().map(|&x| (x, 3.0 * x.sqrt())).collect();
        let fit = fit_rate(&pts).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!((fit.constant - 3.0).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(fit_rate(&[(1.0, 1.0), (2.0, 2.0)]), Err(FitError::TooFewPoints(2)));
        assert!(matches!(fit_rate(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]), Err(FitError::NonPositive { .. })));
        assert_eq!(fit_rate(&[(1.0, 1.0), (1.0, 2.0), (3.0, 1.0)]), Err(FitError::DuplicateAbscissa));
    }

    #[test]
    fn noisy_fit_matches_brute_force_search() {
        // deterministic "noise" on a slope-2 law
        let noise = [0.07, -0.05, 0.03, -0.08, 0.06, -0.02];
        let pts: Vec<(f64, f64)> = noise
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let x = 0.5 * 1.5_f64.powi(i as i32);
                (x, 1.7 * x * x * (1.0 + e))
            })
            .collect();
        let fit = fit_rate(&pts).unwrap();
        let sse = |s: f64, lc: f64| -> f64 { pts.iter().map(|(x, y)| (y.ln() - lc - s * x.ln()).powi(2)).sum() };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let mut s = 1.5;
        while s <= 2.5 {
            let mut lc = 0.0;
            while lc <= 1.0 {
                let e = sse(s, lc);
                if e < best.0 {
                    best = (e, s, lc);
                }
                lc += 0.0005;
            }
            s += 0.0005;
        }
        assert!((fit.slope - best.1).abs() < 2e-3, "{} vs {}", fit.slope, best.1);
        assert!((fit.constant.ln() - best.2).abs() < 2e-3);
        assert!(sse(fit.slope, fit.constant.ln()) <= best.0 + 1e-12);
    }
}
