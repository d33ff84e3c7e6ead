use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

const Z_95: f64 = 1.96;

/// Relative size below which a diagonal entry of R counts as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsResult {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    /// HC1 standard errors.
    pub se: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub n: usize,
}

/// Least squares with HC1 heteroskedasticity-robust standard errors.
///
/// `rows` is the design matrix row by row and should include the intercept
/// column if one is wanted. `names` labels the columns.
pub fn ols_robust(rows: &[Vec<f64>], y: &[f64], names: &[&str]) -> Result<OlsResult> {
    let n = rows.len();
    let p = names.len();
    if y.len() != n {
        return Err(Error::Input(format!("{n} design rows but {} responses", y.len())));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(Error::Input(format!("design row {i} has {} columns, expected {p}", rows[i].len())));
    }
    if n <= p {
        return Err(Error::Input(format!("need more observations than columns, got n={n}, p={p}")));
    }
    if rows.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Input("design matrix and response must be finite".into()));
    }
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let yv = DVector::from_column_slice(y);

    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|j| x.column(j).norm()).fold(0.0, f64::max);
    for j in 0..p {
        if r[(j, j)].abs() <= RANK_TOL * scale.max(1.0) {
            return Err(Error::RankDeficient { column: names[j].to_string() });
        }
    }
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Invariant("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Invariant("triangular inverse failed".into()))?;
    let bread = &r_inv * r_inv.transpose();

    let resid = &yv - &x * &beta;
    let mut meat = DMatrix::zeros(p, p);
    for i in 0..n {
        let xi = x.row(i).transpose();
        meat += (&xi * xi.transpose()) * (resid[i] * resid[i]);
    }
    let cov = &bread * meat * &bread * (n as f64 / (n - p) as f64);
    let se: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let coef: Vec<f64> = beta.iter().copied().collect();
    Ok(OlsResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        ci_lo: coef.iter().zip(&se).map(|(b, s)| b - Z_95 * s).collect(),
        ci_hi: coef.iter().zip(&se).map(|(b, s)| b + Z_95 * s).collect(),
        coef,
        se,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<f64> = (0..6).map(|i| 2.0 * i as f64).collect();
        let fit = ols_robust(&rows, &y, &["intercept", "x"]).unwrap();
        assert!(fit.coef[0].abs() < 1e-12);
        assert!((fit.coef[1] - 2.0).abs() < 1e-12);
        assert!(fit.se.iter().all(|s| *s < 1e-6));
    }

    #[test]
    fn intercept_only_is_mean() {
        let y = [3.0, 1.0, 4.0, 1.0, 5.0];
        let rows = vec![vec![1.0]; 5];
        let fit = ols_robust(&rows, &y, &["intercept"]).unwrap();
        assert!((fit.coef[0] - 2.8).abs() < 1e-12);
    }

    #[test]
    fn names_dependent_column() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
        let y = [1.0, 2.0, 2.0, 3.0, 5.0, 4.0];
        match ols_robust(&rows, &y, &["intercept", "x", "x2"]) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, "x2"),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        assert!(ols_robust(&rows[..3], &y[..3], &["intercept", "x", "x2"]).is_err());
    }
}
