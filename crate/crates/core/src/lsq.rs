//! Dense least squares with column scaling, SVD-based conditioning, and
//! residual-based standard errors.  Shared by the expansion fitters and the
//! verdict harness.

use crate::error::{Result, VpError};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct LsqFit {
    pub coefficients: Vec<f64>,
    /// Standard error per coefficient from the residual variance.
    pub std_errors: Vec<f64>,
    /// Condition number of the column-scaled design matrix.
    pub condition: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
    pub max_residual: f64,
}

pub const DEFAULT_CONDITION_LIMIT: f64 = 1e8;

/// Solve min ||A c - y||_2.  `rows` holds the design matrix row major.
pub fn least_squares(
    rows: &[Vec<f64>],
    y: &[f64],
    condition_limit: f64,
) -> Result<LsqFit> {
    let m = rows.len();
    if m == 0 || m != y.len() {
        return Err(VpError::InvalidArgument("empty or mismatched system".into()));
    }
    let n = rows[0].len();
    if m < n {
        return Err(VpError::InvalidArgument(format!(
            "underdetermined system: {m} rows, {n} columns"
        )));
    }
    // Scale each column to unit max-norm so the condition gate is meaningful
    // for bases like log^p t / t^q with wildly different magnitudes.
    let mut col_scale = vec![0.0f64; n];
    for row in rows {
        for (j, &v) in row.iter().enumerate() {
            col_scale[j] = col_scale[j].max(v.abs());
        }
    }
    for s in col_scale.iter_mut() {
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let a = DMatrix::from_fn(m, n, |i, j| rows[i][j] / col_scale[j]);
    let yv = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > condition_limit {
        return Err(VpError::IllConditioned { cond: condition });
    }
    let sol = svd
        .solve(&yv, 0.0)
        .map_err(|e| VpError::InvalidArgument(e.to_string()))?;
    let resid = &a * &sol - &yv;
    let rms = (resid.norm_squared() / m as f64).sqrt();
    let max_residual = resid.amax();
    // Coefficient covariance ~ sigma^2 (A^T A)^{-1} via the SVD factors.
    let dof = (m - n).max(1) as f64;
    let sigma2 = resid.norm_squared() / dof;
    let v_mat = svd.v_t.as_ref().unwrap().transpose();
    let mut std_errors = vec![0.0; n];
    for j in 0..n {
        let mut var = 0.0;
        for k in 0..n {
            let s = svd.singular_values[k];
            if s > 0.0 {
                let c = v_mat[(j, k)] / s;
                var += c * c;
            }
        }
        std_errors[j] = (sigma2 * var).sqrt() / col_scale[j];
    }
    let coefficients = (0..n).map(|j| sol[j] / col_scale[j]).collect();
    Ok(LsqFit {
        coefficients,
        std_errors,
        condition,
        rms_residual: rms,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn recovers_exact_coefficients() {
        let ts: Vec<f64> = (1..40).map(|k| k as f64).collect();
        let rows: Vec<Vec<f64>> = ts.iter().map(|&t| vec![1.0, 1.0 / t, t.ln() / t]).collect();
        let y: Vec<f64> = ts
            .iter()
            .map(|&t| 2.0 - 3.0 / t + 0.5 * t.ln() / t)
            .collect();
        let fit = least_squares(&rows, &y, 1e8).unwrap();
        assert_relative_eq!(fit.coefficients[0], 2.0, max_relative = 1e-10);
        assert_relative_eq!(fit.coefficients[1], -3.0, max_relative = 1e-8);
        assert_relative_eq!(fit.coefficients[2], 0.5, max_relative = 1e-8);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn condition_gate_trips_on_collinear_columns() {
        let rows: Vec<Vec<f64>> = (1..20)
            .map(|k| {
                let t = k as f64;
                vec![1.0 / t, 2.0 / t]
            })
            .collect();
        let y = vec![1.0; rows.len()];
        assert!(matches!(
            least_squares(&rows, &y, 1e8),
            Err(VpError::IllConditioned { .. })
        ));
    }
}
