//! Deterministic quadrature: Gauss-Legendre rules, adaptive interval
//! subdivision, and tensor-product integration over boxes.

use crate::error::{Result, VpError};

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess for the i-th positive root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_pd(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// P_n(x) and P_n'(x).
fn legendre_pd(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn gl_on<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    let mut s = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        s += w * f(c + h * x);
    }
    s * h
}

/// Adaptive 1-D integration on [a, b]: 16- vs 32-point Gauss-Legendre with
/// bisection until the local error estimate meets the tolerance.
pub fn integrate_1d<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (n16, w16) = gauss_legendre(16);
    let (n32, w32) = gauss_legendre(32);
    let mut total = 0.0;
    // Work stack of (interval, coarse value, depth).
    let mut stack = vec![(a, b, gl_on(&f, a, b, &n16, &w16), 0usize)];
    while let Some((a, b, coarse, depth)) = stack.pop() {
        let fine = gl_on(&f, a, b, &n32, &w32);
        if (fine - coarse).abs() <= tol.max(1e-300) || depth >= 40 {
            if depth >= 40 && (fine - coarse).abs() > 1e3 * tol {
                return Err(VpError::Quadrature(format!(
                    "max depth reached on [{a}, {b}], err = {:.3e}",
                    (fine - coarse).abs()
                )));
            }
            total += fine;
        } else {
            let m = 0.5 * (a + b);
            stack.push((a, m, gl_on(&f, a, m, &n16, &w16), depth + 1));
            stack.push((m, b, gl_on(&f, m, b, &n16, &w16), depth + 1));
        }
    }
    Ok(total)
}

/// Adaptive integration on [a, inf) via the substitution r = a + s/(1-s).
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, a: f64, tol: f64) -> Result<f64> {
    integrate_1d(
        |s| {
            let one_minus = 1.0 - s;
            let r = a + s / one_minus;
            f(r) / (one_minus * one_minus)
        },
        0.0,
        1.0 - 1e-12,
        tol,
    )
}

/// Tensor-product integration of f over the box given by per-axis intervals,
/// by nested adaptive 1-D rules (innermost axis fastest).
pub fn integrate_box<F: Fn([f64; 3]) -> f64>(
    f: F,
    lo: [f64; 3],
    hi: [f64; 3],
    tol: f64,
) -> Result<f64> {
    for i in 0..3 {
        if hi[i] <= lo[i] {
            return Ok(0.0);
        }
    }
    let vol_outer = (hi[0] - lo[0]) * (hi[1] - lo[1]);
    let inner_tol = tol / vol_outer.max(1.0);
    integrate_1d(
        |x| {
            integrate_1d(
                |y| {
                    integrate_1d(|z| f([x, y, z]), lo[2], hi[2], inner_tol / (hi[1] - lo[1]))
                        .unwrap_or(f64::NAN)
                },
                lo[1],
                hi[1],
                inner_tol,
            )
            .unwrap_or(f64::NAN)
        },
        lo[0],
        hi[0],
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gl_nodes_integrate_polynomials_exactly() {
        let (n, w) = gauss_legendre(8);
        // degree 15 is exact for the 8-point rule
        let s: f64 = n.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_relative_eq!(s, 2.0 / 15.0, max_relative = 1e-13);
        let total: f64 = w.iter().sum();
        assert_relative_eq!(total, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn adaptive_gaussian() {
        let v = integrate_1d(|x| (-x * x).exp(), -8.0, 8.0, 1e-13).unwrap();
        assert_relative_eq!(v, std::f64::consts::PI.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn half_line_decay() {
        // int_0^inf dr/(1+r)^3 = 1/2
        let v = integrate_half_line(|r| (1.0 + r).powi(-3), 0.0, 1e-12).unwrap();
        assert_relative_eq!(v, 0.5, max_relative = 1e-10);
    }

    #[test]
    fn box_gaussian() {
        let v = integrate_box(
            |p| (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])).exp(),
            [-7.0; 3],
            [7.0; 3],
            1e-12,
        )
        .unwrap();
        assert_relative_eq!(v, std::f64::consts::PI.powf(1.5), max_relative = 1e-10);
    }
}
