//! Free-space Poisson solver on a uniform grid: lap phi = rho with
//! phi -> 0 at infinity, via zero-padded FFT convolution against the
//! -1/(4 pi |y|) kernel, plus a direct O(n^6) Green sum kept as an oracle.
//! Also the sharp kernel-bound quadratures used to control the force field.

use crate::error::{Result, VpError};
use crate::field::{ScalarField3, VectorField3};
use crate::quad::{integrate_1d, integrate_half_line};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// int_{[-1/2,1/2]^3} dy / |y|, the self-cell factor of the discrete kernel.
const SELF_CELL: f64 = 2.380_077_363_979_553;

fn green(r: f64, h: f64) -> f64 {
    if r == 0.0 {
        -SELF_CELL / (4.0 * std::f64::consts::PI * h)
    } else {
        -1.0 / (4.0 * std::f64::consts::PI * r)
    }
}

/// In-place 3-D FFT over a row-major cube buffer.
fn fft3(data: &mut [Complex<f64>], dims: [usize; 3], inverse: bool) {
    let mut planner = FftPlanner::new();
    for axis in 0..3 {
        let n = dims[axis];
        let fft = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        // (base, stride) pairs describing every line along `axis`
        let stride = match axis {
            0 => dims[1] * dims[2],
            1 => dims[2],
            _ => 1,
        };
        let mut bases = Vec::new();
        match axis {
            0 => {
                for j in 0..dims[1] {
                    for k in 0..dims[2] {
                        bases.push(j * dims[2] + k);
                    }
                }
            }
            1 => {
                for i in 0..dims[0] {
                    for k in 0..dims[2] {
                        bases.push(i * dims[1] * dims[2] + k);
                    }
                }
            }
            _ => {
                for i in 0..dims[0] {
                    for j in 0..dims[1] {
                        bases.push((i * dims[1] + j) * dims[2]);
                    }
                }
            }
        }
        let mut line = vec![Complex::default(); n];
        for base in bases {
            for k in 0..n {
                line[k] = data[base + k * stride];
            }
            fft.process(&mut line);
            for k in 0..n {
                data[base + k * stride] = line[k];
            }
        }
    }
    if inverse {
        let scale = 1.0 / (dims[0] * dims[1] * dims[2]) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// FFT solve on the doubled (zero-padded) domain; equivalent to the direct
/// Green sum up to roundoff, at O(n^3 log n) cost.
pub fn solve_freespace(rho: &ScalarField3) -> Result<ScalarField3> {
    let g = rho.grid;
    let n = g.dims;
    if g.spacing[0] != g.spacing[1] || g.spacing[1] != g.spacing[2] {
        return Err(VpError::InvalidArgument(
            "solver requires isotropic spacing".into(),
        ));
    }
    let h = g.spacing[0];
    let p = [2 * n[0], 2 * n[1], 2 * n[2]];
    let plen = p[0] * p[1] * p[2];
    let vol = g.cell_volume();

    let mut rho_hat = vec![Complex::default(); plen];
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                rho_hat[(i * p[1] + j) * p[2] + k] =
                    Complex::new(rho.values[g.flat(i, j, k)] * vol, 0.0);
            }
        }
    }

    let mut ker = vec![Complex::default(); plen];
    let wrap = |i: usize, np: usize| -> f64 {
        if i <= np / 2 {
            i as f64
        } else {
            i as f64 - np as f64
        }
    };
    for i in 0..p[0] {
        let di = wrap(i, p[0]) * h;
        for j in 0..p[1] {
            let dj = wrap(j, p[1]) * h;
            for k in 0..p[2] {
                let dk = wrap(k, p[2]) * h;
                let r = (di * di + dj * dj + dk * dk).sqrt();
                ker[(i * p[1] + j) * p[2] + k] = Complex::new(green(r, h), 0.0);
            }
        }
    }

    fft3(&mut rho_hat, p, false);
    fft3(&mut ker, p, false);
    for (a, b) in rho_hat.iter_mut().zip(&ker) {
        *a *= *b;
    }
    fft3(&mut rho_hat, p, true);

    let mut out = ScalarField3::zeros(g);
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                out.values[g.flat(i, j, k)] = rho_hat[(i * p[1] + j) * p[2] + k].re;
            }
        }
    }
    Ok(out)
}

/// Direct Green sum, O(n^6).  Oracle for the FFT path on small grids.
pub fn solve_direct(rho: &ScalarField3) -> Result<ScalarField3> {
    let g = rho.grid;
    if g.spacing[0] != g.spacing[1] || g.spacing[1] != g.spacing[2] {
        return Err(VpError::InvalidArgument(
            "solver requires isotropic spacing".into(),
        ));
    }
    let h = g.spacing[0];
    let vol = g.cell_volume();
    let mut out = ScalarField3::zeros(g);
    for a in 0..g.len() {
        let pa = g.point(a);
        let mut acc = 0.0;
        for b in 0..g.len() {
            let pb = g.point(b);
            let r = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2) + (pa[2] - pb[2]).powi(2))
                .sqrt();
            acc += green(r, h) * rho.values[b] * vol;
        }
        out.values[a] = acc;
    }
    Ok(out)
}

/// Second-order gradient: centered in the interior, one-sided at faces.
pub fn gradient(phi: &ScalarField3) -> VectorField3 {
    let g = phi.grid;
    let mut out = VectorField3::zeros(g);
    for flat in 0..g.len() {
        let [i, j, k] = g.unflat(flat);
        let idx = [i, j, k];
        for a in 0..3 {
            let h = g.spacing[a];
            let at = |m: usize| {
                let mut q = idx;
                q[a] = m;
                phi.values[g.flat(q[0], q[1], q[2])]
            };
            let i_a = idx[a];
            let n_a = g.dims[a];
            out.components[a][flat] = if i_a == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
            } else if i_a == n_a - 1 {
                (3.0 * at(n_a - 1) - 4.0 * at(n_a - 2) + at(n_a - 3)) / (2.0 * h)
            } else {
                (at(i_a + 1) - at(i_a - 1)) / (2.0 * h)
            };
        }
    }
    out
}

/// 7-point Laplacian on interior nodes (boundary values are copied from rho
/// so residual checks should be restricted to the interior).
pub fn laplacian(phi: &ScalarField3) -> ScalarField3 {
    let g = phi.grid;
    let mut out = ScalarField3::zeros(g);
    for flat in 0..g.len() {
        let [i, j, k] = g.unflat(flat);
        if i == 0
            || j == 0
            || k == 0
            || i == g.dims[0] - 1
            || j == g.dims[1] - 1
            || k == g.dims[2] - 1
        {
            continue;
        }
        let mut acc = 0.0;
        let idx = [i, j, k];
        for a in 0..3 {
            let h2 = g.spacing[a] * g.spacing[a];
            let mut lo = idx;
            lo[a] -= 1;
            let mut hi = idx;
            hi[a] += 1;
            acc += (phi.values[g.flat(hi[0], hi[1], hi[2])] - 2.0 * phi.values[flat]
                + phi.values[g.flat(lo[0], lo[1], lo[2])])
                / h2;
        }
        out.values[flat] = acc;
    }
    out
}

/// Sharp constant in the kernel bound: the integral below is <= 7 pi.
pub const KERNEL_BOUND: f64 = 7.0 * std::f64::consts::PI;

/// I(x) = int dy / (|y|^2 (1 + |x + y|)^3), reduced to a 2-D quadrature in
/// (r, cos theta).  I(0) = 2 pi exactly, and sup_x I(x) <= 7 pi.
pub fn kernel_integral(x_norm: f64, tol: f64) -> Result<f64> {
    let a = x_norm;
    let two_pi = 2.0 * std::f64::consts::PI;
    let inner = |r: f64| -> f64 {
        integrate_1d(
            |u| {
                let d = (a * a + r * r + 2.0 * a * r * u).max(0.0).sqrt();
                (1.0 + d).powi(-3)
            },
            -1.0,
            1.0,
            tol * 0.5,
        )
        .unwrap_or(f64::NAN)
    };
    let v = integrate_half_line(inner, 0.0, tol)?;
    Ok(two_pi * v)
}

/// Scaled kernel integral int dy / (|y|^2 (1 + s + |x + y|)^3)
///   = (1 + s)^{-2} I(x / (1 + s)),
/// so it is bounded by 7 pi / (1 + s)^2.
pub fn kernel_integral_scaled(x_norm: f64, s: f64, tol: f64) -> Result<f64> {
    if s < 0.0 {
        return Err(VpError::InvalidArgument("scale must be >= 0".into()));
    }
    let q = 1.0 + s;
    Ok(kernel_integral(x_norm / q, tol)? / (q * q))
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct KernelBoundReport {
    pub samples: Vec<(f64, f64)>,
    pub max_value: f64,
    pub bound: f64,
    pub satisfied: bool,
}

/// Evaluate the kernel integral over a sweep of |x| and check the 7 pi bound.
pub fn kernel_bound_check(x_norms: &[f64], tol: f64) -> Result<KernelBoundReport> {
    let mut samples = Vec::with_capacity(x_norms.len());
    let mut max_value: f64 = 0.0;
    for &a in x_norms {
        let v = kernel_integral(a, tol)?;
        max_value = max_value.max(v);
        samples.push((a, v));
    }
    Ok(KernelBoundReport {
        samples,
        max_value,
        bound: KERNEL_BOUND,
        satisfied: max_value <= KERNEL_BOUND,
    })
}
