//! Log-log least squares for convergence-rate extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Result of a log-log fit value ≈ C ε^slope.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    /// log of the prefactor C.
    pub intercept: f64,
    /// RMS residual of the fit in log space.
    pub residual: f64,
    /// Standard error of the slope.
    pub stderr: f64,
}

/// Least squares on (ln ε, ln value); every value must be positive.
pub fn fit_convergence_rate(pairs: &[(f64, f64)]) -> Result<FitResult> {
    if pairs.len() < 2 {
        return Err(Error::Config("need at least 2 points for a fit".into()));
    }
    for &(e, v) in pairs {
        if !(v > 0.0) || !(e > 0.0) {
            return Err(Error::NonPositiveValue { value: v.min(e) });
        }
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(ys.iter()).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| {
            let d = y - (intercept + slope * x);
            d * d
        })
        .sum();
    let residual = (ss_res / n).sqrt();
    let stderr = if pairs.len() > 2 {
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(FitResult { slope, intercept, residual, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power_law_recovered() {
        let pairs: Vec<(f64, f64)> = [0.1, 0.15, 0.2, 0.3]
            .iter()
            .map(|&e: &f64| (e, 3.0 * e.powf(3.5)))
            .collect();
        let fit = fit_convergence_rate(&pairs).unwrap();
        assert!((fit.slope - 3.5).abs() < 1e-10);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-10);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn two_point_exact_slope() {
        let pairs = vec![(0.1, 10f64.powf(-2.5)), (0.2, 10f64.powf(2.5 * 0.2f64.log10()))];
        let fit = fit_convergence_rate(&pairs).unwrap();
        assert!((fit.slope - 2.5).abs() < 1e-9);
    }

    #[test]
    fn constant_values_give_zero_slope() {
        let pairs = vec![(0.1, 4.0), (0.2, 4.0), (0.3, 4.0)];
        let fit = fit_convergence_rate(&pairs).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn noisy_power_law_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs: Vec<(f64, f64)> = (0..6)
            .map(|i| {
                let e = 0.1 * 1.3f64.powi(i);
                let noise = 1.0 + 0.05 * rng.gen_range(-1.0..1.0);
                (e, 2.0 * e.powf(2.5) * noise)
            })
            .collect();
        let fit = fit_convergence_rate(&pairs).unwrap();
        assert!((fit.slope - 2.5).abs() < 0.1, "slope {}", fit.slope);
    }

    #[test]
    fn non_positive_values_rejected() {
        assert!(matches!(
            fit_convergence_rate(&[(0.1, 1.0), (0.2, 0.0)]),
            Err(Error::NonPositiveValue { .. })
        ));
    }
}
