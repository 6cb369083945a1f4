//! Initial-data families with exact derivatives, weighted norms, particle
//! seeding, velocity grids, and the expansion-order bookkeeping.

use crate::error::{Result, VpError};
use crate::field::Grid3;
use crate::multi_index::{fact, MultiIndex};
use crate::quad::gauss_legendre;
use serde::{Deserialize, Serialize};

pub const MAX_DERIV_ORDER: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// exp(-sum ((x_i-cx_i)/sx_i)^2 - sum ((v_i-cv_i)/sv_i)^2)
    Gaussian,
    /// Compactly supported product bump, b(s) = exp(1 - 1/(1-s^2)) on |s|<1.
    Bump,
}

/// One monomial x^a v^b of the optional polynomial prefactor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonomialTerm {
    pub coeff: f64,
    pub x_pow: MultiIndex,
    pub v_pow: MultiIndex,
}

/// Analytic initial datum f0(x, v) = amplitude * P(x, v) * window(x) * window(v).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialDataSpec {
    pub family: Family,
    pub amplitude: f64,
    #[serde(default)]
    pub x_center: [f64; 3],
    #[serde(default)]
    pub v_center: [f64; 3],
    #[serde(default = "unit_widths")]
    pub x_width: [f64; 3],
    #[serde(default = "unit_widths")]
    pub v_width: [f64; 3],
    #[serde(default)]
    pub polynomial_prefactor: Vec<MonomialTerm>,
}

fn unit_widths() -> [f64; 3] {
    [1.0; 3]
}

impl InitialDataSpec {
    pub fn unit_gaussian() -> Self {
        InitialDataSpec {
            family: Family::Gaussian,
            amplitude: 1.0,
            x_center: [0.0; 3],
            v_center: [0.0; 3],
            x_width: [1.0; 3],
            v_width: [1.0; 3],
            polynomial_prefactor: Vec::new(),
        }
    }

    pub fn gaussian(amplitude: f64) -> Self {
        InitialDataSpec {
            amplitude,
            ..Self::unit_gaussian()
        }
    }

    /// Half-width of the support box used for quadrature and sampling, per
    /// x-axis.  Gaussians are truncated where the tail is below 1e-11 of the
    /// peak; bumps are compactly supported.
    pub fn x_extent(&self) -> [f64; 3] {
        let r = match self.family {
            Family::Gaussian => 5.0,
            Family::Bump => 1.0,
        };
        [
            r * self.x_width[0],
            r * self.x_width[1],
            r * self.x_width[2],
        ]
    }

    pub fn v_extent(&self) -> [f64; 3] {
        let r = match self.family {
            Family::Gaussian => 5.0,
            Family::Bump => 1.0,
        };
        [
            r * self.v_width[0],
            r * self.v_width[1],
            r * self.v_width[2],
        ]
    }

    pub fn x_support(&self) -> ([f64; 3], [f64; 3]) {
        let e = self.x_extent();
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for i in 0..3 {
            lo[i] = self.x_center[i] - e[i];
            hi[i] = self.x_center[i] + e[i];
        }
        (lo, hi)
    }

    pub fn v_support(&self) -> ([f64; 3], [f64; 3]) {
        let e = self.v_extent();
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for i in 0..3 {
            lo[i] = self.v_center[i] - e[i];
            hi[i] = self.v_center[i] + e[i];
        }
        (lo, hi)
    }

    /// True when f0 is a product of one-variable factors (no prefactor, or a
    /// prefactor made of a single monomial).
    pub fn factorizes(&self) -> bool {
        self.polynomial_prefactor.len() <= 1
    }
}

/// d^k/ds^k of the window profile at s, for the scaled variable s.
fn window_deriv(family: Family, k: usize, s: f64) -> f64 {
    match family {
        Family::Gaussian => {
            // d^k/ds^k exp(-s^2) = (-1)^k H_k(s) exp(-s^2)
            let e = (-s * s).exp();
            let mut h0 = 1.0;
            if k == 0 {
                return e;
            }
            let mut h1 = 2.0 * s;
            for j in 1..k {
                let h2 = 2.0 * s * h1 - 2.0 * (j as f64) * h0;
                h0 = h1;
                h1 = h2;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * h1 * e
        }
        Family::Bump => bump_deriv(k, s),
    }
}

/// d^k/ds^k of b(s) = exp(1 - 1/(1-s^2)) on |s| < 1, zero outside.
/// b^(k)(s) = p_k(s) / (1-s^2)^(2k) * b(s) with the polynomial recurrence
/// p_{k+1} = (p_k' u + 4k s p_k) u - 2 s p_k,  u = 1 - s^2.
fn bump_deriv(k: usize, s: f64) -> f64 {
    if s.abs() >= 1.0 - 1e-14 {
        return 0.0;
    }
    let u = 1.0 - s * s;
    let b = (1.0 - 1.0 / u).exp();
    if k == 0 {
        return b;
    }
    let polys = bump_polys();
    let p = poly_eval(&polys[k], s);
    p / u.powi(2 * k as i32) * b
}

fn poly_eval(p: &[f64], s: f64) -> f64 {
    let mut acc = 0.0;
    for &c in p.iter().rev() {
        acc = acc * s + c;
    }
    acc
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, &x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, &y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

fn poly_diff(a: &[f64]) -> Vec<f64> {
    if a.len() <= 1 {
        return vec![0.0];
    }
    a.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| i as f64 * c)
        .collect()
}

fn bump_polys() -> &'static Vec<Vec<f64>> {
    use std::sync::OnceLock;
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let u = vec![1.0, 0.0, -1.0]; // 1 - s^2
        let minus_2s = vec![0.0, -2.0];
        let mut polys: Vec<Vec<f64>> = vec![vec![1.0]];
        for k in 0..MAX_DERIV_ORDER {
            let p = &polys[k];
            let term = poly_add(
                &poly_mul(&poly_diff(p), &u),
                &poly_mul(&[0.0, 4.0 * k as f64], p),
            );
            let next = poly_add(&poly_mul(&term, &u), &poly_mul(&minus_2s, p));
            polys.push(next);
        }
        polys
    })
}

/// d^k/dy^k [ y^p * window((y - c)/w) ] by the Leibniz rule.
pub(crate) fn axis_factor_deriv(family: Family, y: f64, c: f64, w: f64, p: usize, k: usize) -> f64 {
    let s = (y - c) / w;
    let mut sum = 0.0;
    for j in 0..=k.min(p) {
        // j derivatives on the monomial, k-j on the window
        let binom = fact(k) / (fact(j) * fact(k - j));
        let mono = fact(p) / fact(p - j) * y.powi((p - j) as i32);
        let win = window_deriv(family, k - j, s) / w.powi((k - j) as i32);
        sum += binom * mono * win;
    }
    sum
}

/// Exact partial derivative of f0: d_x^dx d_v^dv f0 (x, v).
pub fn evaluate_f0(
    spec: &InitialDataSpec,
    x: [f64; 3],
    v: [f64; 3],
    dx: MultiIndex,
    dv: MultiIndex,
) -> Result<f64> {
    let order = dx.order() + dv.order();
    if order > MAX_DERIV_ORDER {
        return Err(VpError::DerivativeOrder {
            got: order,
            max: MAX_DERIV_ORDER,
        });
    }
    let terms: &[MonomialTerm] = if spec.polynomial_prefactor.is_empty() {
        &[MonomialTerm {
            coeff: 1.0,
            x_pow: MultiIndex::ZERO,
            v_pow: MultiIndex::ZERO,
        }]
    } else {
        &spec.polynomial_prefactor
    };
    let mut total = 0.0;
    for term in terms {
        let mut prod = term.coeff;
        for i in 0..3 {
            prod *= axis_factor_deriv(
                spec.family,
                x[i],
                spec.x_center[i],
                spec.x_width[i],
                term.x_pow.0[i] as usize,
                dx.0[i] as usize,
            );
            if prod == 0.0 {
                break;
            }
            prod *= axis_factor_deriv(
                spec.family,
                v[i],
                spec.v_center[i],
                spec.v_width[i],
                term.v_pow.0[i] as usize,
                dv.0[i] as usize,
            );
            if prod == 0.0 {
                break;
            }
        }
        total += prod;
    }
    Ok(spec.amplitude * total)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedNormReport {
    /// sup over |kappa| <= n and the sample grid of <x>^nx <v>^nv |d^kappa f0|
    pub value: f64,
    pub n: usize,
    pub nx: usize,
    pub nv: usize,
    pub resolution: usize,
    pub sample_count: usize,
    pub argmax_x: [f64; 3],
    pub argmax_v: [f64; 3],
    pub argmax_dx: MultiIndex,
    pub argmax_dv: MultiIndex,
}

fn bracket(u: [f64; 3]) -> f64 {
    (1.0 + u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt()
}

/// Weighted C^n norm sup_{|kappa|<=n} sup <x>^nx <v>^nv |d^kappa f0|.  The
/// sup is located per kappa on a deterministic tensor grid with
/// `resolution` points per axis, then sharpened by shrinking the sample box
/// around the running argmax (five halving rounds), so the reported value
/// is a grid maximum that converges to the true sup from below.
pub fn weighted_norm(
    spec: &InitialDataSpec,
    n: usize,
    nx: usize,
    nv: usize,
    resolution: usize,
) -> Result<WeightedNormReport> {
    if n > MAX_DERIV_ORDER {
        return Err(VpError::DerivativeOrder {
            got: n,
            max: MAX_DERIV_ORDER,
        });
    }
    if resolution < 3 {
        return Err(VpError::InvalidArgument("resolution must be >= 3".into()));
    }
    // Stretch so that <x>^nx exp(-s^2)-type maximizers stay inside the box.
    let stretch = match spec.family {
        Family::Gaussian => 1.0 + 0.3 * ((nx.max(nv)) as f64).sqrt(),
        Family::Bump => 1.0,
    };
    let ex = spec.x_extent();
    let ev = spec.v_extent();

    let mut report = WeightedNormReport {
        value: 0.0,
        n,
        nx,
        nv,
        resolution,
        sample_count: 0,
        argmax_x: [0.0; 3],
        argmax_v: [0.0; 3],
        argmax_dx: MultiIndex::ZERO,
        argmax_dv: MultiIndex::ZERO,
    };
    let mut samples = 0usize;
    for dx in MultiIndex::up_to(n) {
        for dv in MultiIndex::up_to(n - dx.order()) {
            // center and half-extent of the current sample box, per variable
            let mut center = [
                spec.x_center[0],
                spec.x_center[1],
                spec.x_center[2],
                spec.v_center[0],
                spec.v_center[1],
                spec.v_center[2],
            ];
            let mut half = [
                stretch * ex[0],
                stretch * ex[1],
                stretch * ex[2],
                stretch * ev[0],
                stretch * ev[1],
                stretch * ev[2],
            ];
            let mut best = 0.0f64;
            let mut best_pt = center;
            for _round in 0..6 {
                let axis_pts = |c: f64, h: f64| -> Vec<f64> {
                    (0..resolution)
                        .map(|k| c - h + 2.0 * h * k as f64 / (resolution - 1) as f64)
                        .collect()
                };
                let grids: Vec<Vec<f64>> =
                    (0..6).map(|a| axis_pts(center[a], half[a])).collect();
                for &x0 in &grids[0] {
                    for &x1 in &grids[1] {
                        for &x2 in &grids[2] {
                            for &v0 in &grids[3] {
                                for &v1 in &grids[4] {
                                    for &v2 in &grids[5] {
                                        let x = [x0, x1, x2];
                                        let v = [v0, v1, v2];
                                        let val = evaluate_f0(spec, x, v, dx, dv)?.abs()
                                            * bracket(x).powi(nx as i32)
                                            * bracket(v).powi(nv as i32);
                                        samples += 1;
                                        if val > best {
                                            best = val;
                                            best_pt = [x0, x1, x2, v0, v1, v2];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                center = best_pt;
                for h in half.iter_mut() {
                    *h *= 2.0 / (resolution - 1) as f64;
                }
            }
            if best > report.value {
                report.value = best;
                report.argmax_x = [best_pt[0], best_pt[1], best_pt[2]];
                report.argmax_v = [best_pt[3], best_pt[4], best_pt[5]];
                report.argmax_dx = dx;
                report.argmax_dv = dv;
            }
        }
    }
    report.sample_count = samples;
    Ok(report)
}

/// Phase-space particle set produced by tensor-product quadrature seeding.
/// Weights are f0 times the quadrature weight, so sums of w_i * g(x_i, v_i)
/// approximate integrals of f0 * g.  phi_corr and w_corr are the modified
/// weight corrections integrated alongside the flow (zero at t = 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub time: f64,
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub phi_corr: Vec<[f64; 3]>,
    pub w_corr: Vec<[f64; 3]>,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Deterministic Gauss-Legendre tensor seeding with nx^3 * nv^3 particles.
pub fn seed_particles(spec: &InitialDataSpec, nx: usize, nv: usize) -> Result<ParticleEnsemble> {
    if nx < 2 || nv < 2 {
        return Err(VpError::InvalidArgument(
            "need at least 2 nodes per axis".into(),
        ));
    }
    let (xn, xw) = gauss_legendre(nx);
    let (vn, vw) = gauss_legendre(nv);
    // Tighter truncation than the support box: for Gaussians the node
    // placement error at 4 widths beats the ~1e-8 truncation error.
    let trunc = match spec.family {
        Family::Gaussian => 0.8,
        Family::Bump => 1.0,
    };
    let mut ex = spec.x_extent();
    let mut ev = spec.v_extent();
    for i in 0..3 {
        ex[i] *= trunc;
        ev[i] *= trunc;
    }
    // Per-axis nodes/weights mapped onto the support box.
    let map = |nodes: &[f64], wts: &[f64], c: f64, e: f64| -> Vec<(f64, f64)> {
        nodes
            .iter()
            .zip(wts)
            .map(|(&s, &w)| (c + e * s, w * e))
            .collect()
    };
    let xa: Vec<Vec<(f64, f64)>> = (0..3)
        .map(|i| map(&xn, &xw, spec.x_center[i], ex[i]))
        .collect();
    let va: Vec<Vec<(f64, f64)>> = (0..3)
        .map(|i| map(&vn, &vw, spec.v_center[i], ev[i]))
        .collect();

    let n_total = nx * nx * nx * nv * nv * nv;
    let mut ens = ParticleEnsemble {
        time: 0.0,
        positions: Vec::with_capacity(n_total),
        velocities: Vec::with_capacity(n_total),
        weights: Vec::with_capacity(n_total),
        phi_corr: Vec::new(),
        w_corr: Vec::new(),
    };
    for &(x0, w0) in &xa[0] {
        for &(x1, w1) in &xa[1] {
            for &(x2, w2) in &xa[2] {
                for &(v0, u0) in &va[0] {
                    for &(v1, u1) in &va[1] {
                        for &(v2, u2) in &va[2] {
                            let x = [x0, x1, x2];
                            let v = [v0, v1, v2];
                            let f = evaluate_f0(spec, x, v, MultiIndex::ZERO, MultiIndex::ZERO)?;
                            let w = f * w0 * w1 * w2 * u0 * u1 * u2;
                            if w != 0.0 {
                                ens.positions.push(x);
                                ens.velocities.push(v);
                                ens.weights.push(w);
                            }
                        }
                    }
                }
            }
        }
    }
    let n = ens.positions.len();
    ens.phi_corr = vec![[0.0; 3]; n];
    ens.w_corr = vec![[0.0; 3]; n];
    Ok(ens)
}

/// Uniform cubic velocity grid on [-extent, extent]^3 with n cells per axis,
/// values attached at cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VGrid {
    pub extent: f64,
    pub n: usize,
}

impl VGrid {
    pub fn new(extent: f64, n: usize) -> Self {
        assert!(extent > 0.0 && n >= 2);
        VGrid { extent, n }
    }

    pub fn cell_width(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    pub fn grid3(&self) -> Grid3 {
        let h = self.cell_width();
        Grid3 {
            origin: [-self.extent + 0.5 * h; 3],
            spacing: [h; 3],
            dims: [self.n; 3],
        }
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn center(&self, flat: usize) -> [f64; 3] {
        self.grid3().point(flat)
    }
}

/// Expansion-order bookkeeping: the admissible polyhomogeneous exponents at
/// each order and the log-power budgets used to size fit windows.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionOrderPolicy {
    pub n_max: usize,
    /// Regularity count of the data, used by the log-power budget.
    pub regularity: usize,
}

impl Default for ExpansionOrderPolicy {
    fn default() -> Self {
        ExpansionOrderPolicy::new(2, 4)
    }
}

impl ExpansionOrderPolicy {
    pub fn new(n_max: usize, regularity: usize) -> Self {
        ExpansionOrderPolicy { n_max, regularity }
    }

    /// r_n = 1 + n(n+1)/2: number of inverse-time orders resolved at stage n.
    pub fn r(n: usize) -> usize {
        1 + n * (n + 1) / 2
    }

    /// Log-power budget at stage n; a fit-window heuristic only.
    pub fn log_budget(&self, n: usize) -> usize {
        self.regularity * (n + 2)
    }

    /// Basis terms (q, alpha, p) with p + |alpha| <= q <= n for expansions of
    /// the rescaled force in (x, t) at fixed v.
    pub fn force_terms(n: usize) -> Vec<(usize, MultiIndex, usize)> {
        let mut out = Vec::new();
        for q in 0..=n {
            for alpha in MultiIndex::up_to(q) {
                for p in 0..=(q - alpha.order()) {
                    out.push((q, alpha, p));
                }
            }
        }
        out
    }

    /// Basis terms (q, p) with p <= q <= n for along-ray expansions in t only.
    pub fn ray_terms(n: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for q in 0..=n {
            for p in 0..=q {
                out.push((q, p));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_gaussian_values() {
        let spec = InitialDataSpec::unit_gaussian();
        let f = evaluate_f0(&spec, [0.0; 3], [0.0; 3], MultiIndex::ZERO, MultiIndex::ZERO)
            .unwrap();
        assert_relative_eq!(f, 1.0);
        // d/dx1 at x = (1,0,0), v = 0: -2 x1 exp(-1) = -2/e
        let d = evaluate_f0(
            &spec,
            [1.0, 0.0, 0.0],
            [0.0; 3],
            MultiIndex::new(1, 0, 0),
            MultiIndex::ZERO,
        )
        .unwrap();
        assert_relative_eq!(d, -2.0 * (-1.0f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn gaussian_high_derivative_matches_finite_difference() {
        let spec = InitialDataSpec {
            x_center: [0.3, -0.2, 0.1],
            v_center: [0.1, 0.0, -0.4],
            x_width: [1.2, 0.8, 1.0],
            v_width: [0.9, 1.1, 1.0],
            polynomial_prefactor: vec![MonomialTerm {
                coeff: 0.7,
                x_pow: MultiIndex::new(2, 0, 1),
                v_pow: MultiIndex::new(0, 1, 0),
            }],
            ..InitialDataSpec::unit_gaussian()
        };
        let x = [0.5, 0.1, -0.3];
        let v = [0.2, -0.1, 0.4];
        let dx = MultiIndex::new(2, 0, 0);
        let dv = MultiIndex::new(0, 1, 0);
        let exact = evaluate_f0(&spec, x, v, dx, dv).unwrap();
        // central differences in x1 twice and v2 once
        let h = 1e-4;
        let g = |x1: f64, v2: f64| {
            evaluate_f0(
                &spec,
                [x1, x[1], x[2]],
                [v[0], v2, v[2]],
                MultiIndex::ZERO,
                MultiIndex::ZERO,
            )
            .unwrap()
        };
        let d2 = |v2: f64| (g(x[0] + h, v2) - 2.0 * g(x[0], v2) + g(x[0] - h, v2)) / (h * h);
        let fd = (d2(v[1] + h) - d2(v[1] - h)) / (2.0 * h);
        assert_relative_eq!(exact, fd, max_relative = 1e-5);
    }

    #[test]
    fn bump_derivative_matches_finite_difference() {
        let spec = InitialDataSpec {
            family: Family::Bump,
            ..InitialDataSpec::unit_gaussian()
        };
        let x = [0.4, 0.1, -0.2];
        let v = [0.0, 0.3, 0.2];
        let dx = MultiIndex::new(3, 0, 0);
        let exact = evaluate_f0(&spec, x, v, dx, MultiIndex::ZERO).unwrap();
        let h = 1e-3;
        let g = |x1: f64| {
            evaluate_f0(
                &spec,
                [x1, x[1], x[2]],
                v,
                MultiIndex::ZERO,
                MultiIndex::ZERO,
            )
            .unwrap()
        };
        let fd = (g(x[0] + 2.0 * h) - 2.0 * g(x[0] + h) + 2.0 * g(x[0] - h) - g(x[0] - 2.0 * h))
            / (2.0 * h * h * h);
        assert_relative_eq!(exact, fd, max_relative = 1e-4);
    }

    #[test]
    fn bump_vanishes_outside_support() {
        let spec = InitialDataSpec {
            family: Family::Bump,
            ..InitialDataSpec::unit_gaussian()
        };
        for k in 0..=MAX_DERIV_ORDER {
            let dx = MultiIndex::new(k as u8, 0, 0);
            let f = evaluate_f0(&spec, [1.0, 0.0, 0.0], [0.0; 3], dx, MultiIndex::ZERO).unwrap();
            assert_eq!(f, 0.0);
        }
    }

    #[test]
    fn seed_total_weight_is_total_mass() {
        // int exp(-|x|^2 - |v|^2) dx dv = pi^3
        let spec = InitialDataSpec::unit_gaussian();
        let ens = seed_particles(&spec, 16, 16).unwrap();
        let pi3 = std::f64::consts::PI.powi(3);
        assert_relative_eq!(ens.total_weight(), pi3, max_relative = 1e-4);
        // and the error shrinks with the node count
        let coarse = seed_particles(&spec, 8, 8).unwrap();
        let e16 = (ens.total_weight() - pi3).abs();
        let e8 = (coarse.total_weight() - pi3).abs();
        assert!(e16 < 0.1 * e8, "e8 = {e8:.3e}, e16 = {e16:.3e}");
    }

    #[test]
    fn weighted_norm_unit_gaussian_weight8() {
        // sup <x>^8 exp(-|x|^2-|v|^2) = max_r (1+r^2)^4 e^{-r^2} = 256 e^{-3}
        let spec = InitialDataSpec::unit_gaussian();
        let rep = weighted_norm(&spec, 0, 8, 0, 9).unwrap();
        let oracle = 256.0 * (-3.0f64).exp();
        assert_relative_eq!(rep.value, oracle, max_relative = 1e-3);
        assert!(rep.value <= oracle + 1e-12);
    }

    #[test]
    fn weighted_norm_monotone_in_derivative_count() {
        let spec = InitialDataSpec::unit_gaussian();
        let a = weighted_norm(&spec, 0, 2, 2, 5).unwrap();
        let b = weighted_norm(&spec, 1, 2, 2, 5).unwrap();
        let c = weighted_norm(&spec, 2, 2, 2, 5).unwrap();
        assert!(b.value >= a.value);
        assert!(c.value >= b.value);
    }

    #[test]
    fn order_policy_sequence() {
        assert_eq!(ExpansionOrderPolicy::r(1), 2);
        assert_eq!(ExpansionOrderPolicy::r(2), 4);
        assert_eq!(ExpansionOrderPolicy::r(3), 7);
        assert_eq!(ExpansionOrderPolicy::r(4), 11);
        let p = ExpansionOrderPolicy::new(2, 3);
        assert_eq!(p.log_budget(2), 12);
        // (q, alpha, p) with p + |alpha| <= q <= 1: (0,0,0), (1,0,0), (1,0,1),
        // (1, e_i, 0)
        assert_eq!(ExpansionOrderPolicy::force_terms(1).len(), 6);
        assert_eq!(ExpansionOrderPolicy::ray_terms(2).len(), 6);
    }

    #[test]
    fn derivative_order_is_capped() {
        let spec = InitialDataSpec::unit_gaussian();
        let err = evaluate_f0(
            &spec,
            [0.0; 3],
            [0.0; 3],
            MultiIndex::new(4, 0, 0),
            MultiIndex::new(0, 3, 0),
        );
        assert!(err.is_err());
    }
}
