//! Curve fits for temperature-vs-hyperparameter tables: power law
//! T = a * x^c via least squares in log-log space, and ordinary linear
//! least squares T = a * x + b.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitForm {
    /// T = a * x^c
    PowerLaw,
    /// T = a * x + b
    Linear,
    /// T = a * x^2 + b * x + c, exposed for comparison with the power law
    Quadratic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub layer: String,
    pub form: FitForm,
    /// Scale (power law / linear slope / quadratic x^2 coefficient).
    pub a: f64,
    /// Exponent (power law) or intercept (linear) or x coefficient (quadratic).
    pub c_or_b: f64,
    /// Quadratic constant term; zero for the other forms.
    #[serde(default)]
    pub c2: f64,
    pub r2: f64,
    pub n_points: usize,
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}

/// Fit T = a * x^c by OLS on (ln x, ln y); r2 is in log space.
pub fn fit_power_law(layer: &str, xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::config("power-law fit needs at least 3 points"));
    }
    if xs.iter().chain(ys).any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::config(
            "power-law fit requires strictly positive data; use the linear fit",
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (slope, intercept, r2) = ols(&lx, &ly);
    Ok(FitResult {
        layer: layer.to_string(),
        form: FitForm::PowerLaw,
        a: intercept.exp(),
        c_or_b: slope,
        c2: 0.0,
        r2,
        n_points: xs.len(),
    })
}

/// Ordinary least squares T = a * x + b.
pub fn fit_linear(layer: &str, xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::config("linear fit needs at least 2 points"));
    }
    let spread = xs.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
        - xs.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    if spread == 0.0 {
        return Err(Error::config("degenerate design: all x values identical"));
    }
    let (slope, intercept, r2) = ols(xs, ys);
    Ok(FitResult {
        layer: layer.to_string(),
        form: FitForm::Linear,
        a: slope,
        c_or_b: intercept,
        c2: 0.0,
        r2,
        n_points: xs.len(),
    })
}

/// Quadratic-polynomial alternative T = a x^2 + b x + c (normal equations).
pub fn fit_quadratic(layer: &str, xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::config("quadratic fit needs at least 3 points"));
    }
    // build and solve the 3x3 normal equations by Gaussian elimination
    let n = xs.len() as f64;
    let s: Vec<f64> = (0..5)
        .map(|k| xs.iter().map(|x| x.powi(k as i32)).sum::<f64>())
        .collect();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sx2y: f64 = xs.iter().zip(ys).map(|(x, y)| x * x * y).sum();
    let mut m = [
        [s[4], s[3], s[2], sx2y],
        [s[3], s[2], s[1], sxy],
        [s[2], s[1], n, sy],
    ];
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        if m[col][col].abs() < 1e-300 {
            return Err(Error::config("degenerate design for quadratic fit"));
        }
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let a = m[0][3] / m[0][0];
    let b = m[1][3] / m[1][1];
    let c = m[2][3] / m[2][2];
    let my = sy / n;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (a * x * x + b * x + c);
            e * e
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(FitResult {
        layer: layer.to_string(),
        form: FitForm::Quadratic,
        a,
        c_or_b: b,
        c2: c,
        r2,
        n_points: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RngStream;

    #[test]
    fn power_law_exact() {
        let xs: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x * x).collect();
        let fit = fit_power_law("l", &xs, &ys).unwrap();
        assert!((fit.c_or_b - 2.0).abs() < 1e-9);
        assert!((fit.a - 2.0).abs() < 1e-9);
        assert!(fit.r2 > 1.0 - 1e-12);
    }

    #[test]
    fn power_law_noisy_exponent_recovered() {
        let mut s = RngStream::new(42);
        let xs: Vec<f64> = (1..=20).map(|i| 1e-3 * i as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 3.0 * x.powf(2.4) * (1.0 + 0.01 * s.normal()))
            .collect();
        let fit = fit_power_law("l", &xs, &ys).unwrap();
        assert!(
            (2.3..=2.5).contains(&fit.c_or_b),
            "exponent {}",
            fit.c_or_b
        );
    }

    #[test]
    fn power_law_constant_data_has_zero_exponent() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys = [5.0, 5.0, 5.0, 5.0];
        let fit = fit_power_law("l", &xs, &ys).unwrap();
        assert!(fit.c_or_b.abs() < 1e-12);
        assert!((fit.a - 5.0).abs() < 1e-9);
    }

    #[test]
    fn power_law_rejects_nonpositive() {
        let err = fit_power_law("l", &[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains("linear"));
    }

    #[test]
    fn power_law_scale_equivariance() {
        let xs: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.7 * x.powf(1.3)).collect();
        let scaled: Vec<f64> = ys.iter().map(|y| 100.0 * y).collect();
        let f1 = fit_power_law("l", &xs, &ys).unwrap();
        let f2 = fit_power_law("l", &xs, &scaled).unwrap();
        assert!((f2.a - 100.0 * f1.a).abs() <= 1e-9 * f2.a.abs());
        assert!((f2.c_or_b - f1.c_or_b).abs() <= 1e-9);
    }

    #[test]
    fn linear_exact() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 4.0 * x + 1.0).collect();
        let fit = fit_linear("l", &xs, &ys).unwrap();
        assert!((fit.a - 4.0).abs() < 1e-12);
        assert!((fit.c_or_b - 1.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_two_points_interpolates() {
        let fit = fit_linear("l", &[1.0, 3.0], &[2.0, 8.0]).unwrap();
        assert!((fit.a - 3.0).abs() < 1e-12);
        assert!((fit.c_or_b + 1.0).abs() < 1e-12);
        assert_eq!(fit.r2, 1.0);
    }

    #[test]
    fn linear_noisy_slope_recovered() {
        let mut s = RngStream::new(7);
        let xs: Vec<f64> = (1..=20).map(|i| i as f64 * 0.05).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x * (1.0 + 0.01 * s.normal())).collect();
        let fit = fit_linear("l", &xs, &ys).unwrap();
        assert!((1.9..=2.1).contains(&fit.a), "slope {}", fit.a);
    }

    #[test]
    fn linear_degenerate_design() {
        assert!(fit_linear("l", &[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn quadratic_exact() {
        let xs: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 * x * x - 2.0 * x + 0.5).collect();
        let fit = fit_quadratic("l", &xs, &ys).unwrap();
        assert!((fit.a - 1.5).abs() < 1e-9);
        assert!((fit.c_or_b + 2.0).abs() < 1e-9);
        assert!((fit.c2 - 0.5).abs() < 1e-9);
    }
}
