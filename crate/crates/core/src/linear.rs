//! Free-transport oracle: exact densities f(t,x,v) = f0(x - vt, v), the
//! self-similar density expansion, conservation laws, late-time tails and
//! weak limits of the linear flow.  Everything here is quadrature against
//! the analytic initial datum; no mesh or particles are involved, so these
//! values serve as ground truth for the nonlinear machinery.

use crate::error::{Result, VpError};
use crate::multi_index::{fact, MultiIndex};
use crate::phase::{axis_factor_deriv, InitialDataSpec, MonomialTerm};
use crate::quad::{integrate_1d, integrate_box};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const DEFAULT_TOL: f64 = 1e-12;

/// C_alpha = (-1)^|alpha| / alpha!
pub fn expansion_coefficient(alpha: MultiIndex) -> f64 {
    let sign = if alpha.order() % 2 == 0 { 1.0 } else { -1.0 };
    sign / alpha.factorial()
}

fn prefactor_terms(spec: &InitialDataSpec) -> Vec<MonomialTerm> {
    if spec.polynomial_prefactor.is_empty() {
        vec![MonomialTerm {
            coeff: 1.0,
            x_pow: MultiIndex::ZERO,
            v_pow: MultiIndex::ZERO,
        }]
    } else {
        spec.polynomial_prefactor.clone()
    }
}

/// rho(t, x) = int f0(x - vt, v) dv by adaptive quadrature.
pub fn exact_density(spec: &InitialDataSpec, t: f64, x: [f64; 3], tol: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(VpError::InvalidArgument("t must be >= 0".into()));
    }
    if t == 0.0 {
        let (lo, hi) = spec.v_support();
        return integrate_box(
            |v| {
                crate::phase::evaluate_f0(spec, x, v, MultiIndex::ZERO, MultiIndex::ZERO)
                    .unwrap_or(f64::NAN)
            },
            lo,
            hi,
            tol,
        );
    }
    Ok(t3_density(spec, t, x, tol)? / (t * t * t))
}

/// t^3 rho(t, x) = int f0(y, (x - y)/t) dy; well conditioned at large t since
/// the integrand lives on the fixed spatial support box.
pub fn t3_density(spec: &InitialDataSpec, t: f64, x: [f64; 3], tol: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(VpError::InvalidArgument("t must be > 0".into()));
    }
    if spec.factorizes() {
        let mut out = spec.amplitude;
        let term = &prefactor_terms(spec)[0];
        out *= term.coeff;
        for i in 0..3 {
            let e = spec.x_extent()[i];
            let axis = integrate_1d(
                |y| {
                    axis_factor_deriv(
                        spec.family,
                        y,
                        spec.x_center[i],
                        spec.x_width[i],
                        term.x_pow.0[i] as usize,
                        0,
                    ) * axis_factor_deriv(
                        spec.family,
                        (x[i] - y) / t,
                        spec.v_center[i],
                        spec.v_width[i],
                        term.v_pow.0[i] as usize,
                        0,
                    )
                },
                spec.x_center[i] - e,
                spec.x_center[i] + e,
                tol,
            )?;
            out *= axis;
        }
        return Ok(out);
    }
    let (lo, hi) = spec.x_support();
    integrate_box(
        |y| {
            let v = [(x[0] - y[0]) / t, (x[1] - y[1]) / t, (x[2] - y[2]) / t];
            crate::phase::evaluate_f0(spec, y, v, MultiIndex::ZERO, MultiIndex::ZERO)
                .unwrap_or(f64::NAN)
        },
        lo,
        hi,
        tol,
    )
}

/// M_alpha(w) = int y^alpha (d_v^alpha f0)(y, w) dy.
pub fn moment(spec: &InitialDataSpec, alpha: MultiIndex, w: [f64; 3], tol: f64) -> Result<f64> {
    weighted_v_deriv_moment(spec, alpha, alpha, w, tol)
}

/// int y^alpha (d_v^gamma f0)(y, w) dy.
pub fn weighted_v_deriv_moment(
    spec: &InitialDataSpec,
    alpha: MultiIndex,
    gamma: MultiIndex,
    w: [f64; 3],
    tol: f64,
) -> Result<f64> {
    if gamma.order() > crate::phase::MAX_DERIV_ORDER {
        return Err(VpError::DerivativeOrder {
            got: gamma.order(),
            max: crate::phase::MAX_DERIV_ORDER,
        });
    }
    if spec.factorizes() {
        let term = &prefactor_terms(spec)[0];
        let mut out = spec.amplitude * term.coeff;
        for i in 0..3 {
            let e = spec.x_extent()[i];
            let ai = alpha.0[i] as usize;
            let gi = gamma.0[i] as usize;
            let axis = integrate_1d(
                |y| {
                    y.powi(ai as i32)
                        * axis_factor_deriv(
                            spec.family,
                            y,
                            spec.x_center[i],
                            spec.x_width[i],
                            term.x_pow.0[i] as usize,
                            0,
                        )
                },
                spec.x_center[i] - e,
                spec.x_center[i] + e,
                tol,
            )?;
            let vfac = axis_factor_deriv(
                spec.family,
                w[i],
                spec.v_center[i],
                spec.v_width[i],
                term.v_pow.0[i] as usize,
                gi,
            );
            out *= axis * vfac;
        }
        return Ok(out);
    }
    let (lo, hi) = spec.x_support();
    integrate_box(
        |y| {
            alpha.pow(y)
                * crate::phase::evaluate_f0(spec, y, w, MultiIndex::ZERO, gamma)
                    .unwrap_or(f64::NAN)
        },
        lo,
        hi,
        tol,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionTerm {
    pub alpha: MultiIndex,
    pub c_alpha: f64,
    pub moment: f64,
}

/// Truncated self-similar expansion of t^3 rho at order n:
///   t^3 rho(t, x) ~ sum_{|alpha| <= n} C_alpha t^{-|alpha|} M_alpha(x/t).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearExpansion {
    pub n: usize,
    pub t: f64,
    pub x: [f64; 3],
    pub terms: Vec<ExpansionTerm>,
    pub value: f64,
}

pub fn linear_expansion(
    spec: &InitialDataSpec,
    n: usize,
    t: f64,
    x: [f64; 3],
    tol: f64,
) -> Result<LinearExpansion> {
    if t <= 0.0 {
        return Err(VpError::InvalidArgument("t must be > 0".into()));
    }
    let w = [x[0] / t, x[1] / t, x[2] / t];
    let mut terms = Vec::new();
    let mut value = 0.0;
    for alpha in MultiIndex::up_to(n) {
        let c = expansion_coefficient(alpha);
        let m = moment(spec, alpha, w, tol)?;
        value += c * t.powi(-(alpha.order() as i32)) * m;
        terms.push(ExpansionTerm {
            alpha,
            c_alpha: c,
            moment: m,
        });
    }
    Ok(LinearExpansion { n, t, x, terms, value })
}

/// A^alpha_beta(v) = int x^alpha (d_v^{alpha+beta} f0)(x, v) dx, the t = 0
/// form of the conserved quantity.
pub fn conservation_law(
    spec: &InitialDataSpec,
    alpha: MultiIndex,
    beta: MultiIndex,
    v: [f64; 3],
    tol: f64,
) -> Result<f64> {
    weighted_v_deriv_moment(spec, alpha, alpha.add(beta), v, tol)
}

/// The same quantity evaluated on the free flow at time t:
///   int (x - vt)^alpha ((t d_x + d_v)^{alpha+beta} f)(t, x, v) dx
/// with f(t,x,v) = f0(x - vt, v).  Along free transport
/// (t d_x + d_v)^gamma f = (d_v^gamma f0)(x - vt, v), so this equals the
/// t = 0 value exactly; the quadrature evaluates it without using that
/// identity's collapsed form (the integrand is genuinely time dependent).
pub fn conservation_law_evolved(
    spec: &InitialDataSpec,
    t: f64,
    alpha: MultiIndex,
    beta: MultiIndex,
    v: [f64; 3],
    tol: f64,
) -> Result<f64> {
    let gamma = alpha.add(beta);
    if spec.factorizes() {
        let term = &prefactor_terms(spec)[0];
        let mut out = spec.amplitude * term.coeff;
        for i in 0..3 {
            let e = spec.x_extent()[i];
            let ai = alpha.0[i] as usize;
            let gi = gamma.0[i] as usize;
            // x ranges over v t + x-support on this axis
            let c = spec.x_center[i] + v[i] * t;
            let axis = integrate_1d(
                |xx| {
                    (xx - v[i] * t).powi(ai as i32)
                        * axis_factor_deriv(
                            spec.family,
                            xx - v[i] * t,
                            spec.x_center[i],
                            spec.x_width[i],
                            term.x_pow.0[i] as usize,
                            0,
                        )
                },
                c - e,
                c + e,
                tol,
            )?;
            let vfac = axis_factor_deriv(
                spec.family,
                v[i],
                spec.v_center[i],
                spec.v_width[i],
                term.v_pow.0[i] as usize,
                gi,
            );
            out *= axis * vfac;
        }
        return Ok(out);
    }
    let (lo0, hi0) = spec.x_support();
    let lo = [lo0[0] + v[0] * t, lo0[1] + v[1] * t, lo0[2] + v[2] * t];
    let hi = [hi0[0] + v[0] * t, hi0[1] + v[1] * t, hi0[2] + v[2] * t];
    integrate_box(
        |xx| {
            let y = [xx[0] - v[0] * t, xx[1] - v[1] * t, xx[2] - v[2] * t];
            alpha.pow(y)
                * crate::phase::evaluate_f0(spec, y, v, MultiIndex::ZERO, gamma)
                    .unwrap_or(f64::NAN)
        },
        lo,
        hi,
        tol,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConservationLawEntry {
    pub alpha: MultiIndex,
    pub beta: MultiIndex,
    pub v: [f64; 3],
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConservationLawTable {
    pub entries: Vec<ConservationLawEntry>,
}

/// Table of A^alpha_beta(v) over all |alpha| <= a_max, |beta| <= b_max with
/// |alpha + beta| within the derivative budget, at the given velocities.
pub fn conservation_table(
    spec: &InitialDataSpec,
    a_max: usize,
    b_max: usize,
    velocities: &[[f64; 3]],
    tol: f64,
) -> Result<ConservationLawTable> {
    let mut entries = Vec::new();
    for alpha in MultiIndex::up_to(a_max) {
        for beta in MultiIndex::up_to(b_max) {
            if alpha.order() + beta.order() > crate::phase::MAX_DERIV_ORDER {
                continue;
            }
            for &v in velocities {
                let value = conservation_law(spec, alpha, beta, v, tol)?;
                entries.push(ConservationLawEntry {
                    alpha,
                    beta,
                    v,
                    value,
                });
            }
        }
    }
    Ok(ConservationLawTable { entries })
}

impl ConservationLawTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "a1,a2,a3,b1,b2,b3,v1,v2,v3,value")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                e.alpha.0[0],
                e.alpha.0[1],
                e.alpha.0[2],
                e.beta.0[0],
                e.beta.0[1],
                e.beta.0[2],
                e.v[0],
                e.v[1],
                e.v[2],
                e.value
            )?;
        }
        Ok(())
    }
}

/// Late-time tail of the linear density near the spatial origin:
///   t^3 rho(t, x) ~ sum_{|alpha|+|gamma| <= n}
///       (C_alpha / gamma!) A^alpha_gamma(0) x^gamma t^{-|gamma|-|alpha|}.
pub fn linear_tail_prediction(
    spec: &InitialDataSpec,
    n: usize,
    t: f64,
    x: [f64; 3],
    tol: f64,
) -> Result<f64> {
    let mut value = 0.0;
    for alpha in MultiIndex::up_to(n) {
        for gamma in MultiIndex::up_to(n - alpha.order()) {
            let a = conservation_law(spec, alpha, gamma, [0.0; 3], tol)?;
            value += expansion_coefficient(alpha) / gamma.factorial()
                * a
                * gamma.pow(x)
                * t.powi(-((gamma.order() + alpha.order()) as i32));
        }
    }
    Ok(value)
}

/// A_beta(v) = int (d_v^beta f0)(x, v) dx.
pub fn a_beta(spec: &InitialDataSpec, beta: MultiIndex, v: [f64; 3], tol: f64) -> Result<f64> {
    conservation_law(spec, MultiIndex::ZERO, beta, v, tol)
}

/// Weak limit of t^3 (G^beta f)(t, x, v) tested against test(x - t vbar, v):
/// the concentration value A_beta(vbar) * int test(x, vbar) dx.
pub fn linear_weak_limit(
    spec: &InitialDataSpec,
    beta: MultiIndex,
    vbar: [f64; 3],
    test: &InitialDataSpec,
    tol: f64,
) -> Result<f64> {
    let a = a_beta(spec, beta, vbar, tol)?;
    let (lo, hi) = test.x_support();
    let x_int = integrate_box(
        |x| {
            crate::phase::evaluate_f0(test, x, vbar, MultiIndex::ZERO, MultiIndex::ZERO)
                .unwrap_or(f64::NAN)
        },
        lo,
        hi,
        tol,
    )?;
    Ok(a * x_int)
}

/// s(t) = t^3 int int (G^beta f)(t, x, v) test(x - t vbar, v) dx dv for the
/// free flow, evaluated by quadrature after the substitutions y = x - vt,
/// u = t (v - vbar), which make the integrand O(1) on a bounded box:
///   s(t) = sum_{gamma <= beta} binom(beta, gamma) (-1)^|beta| t^|gamma|
///          int int f0(y, vbar + u/t) (d_x^gamma d_v^{beta-gamma} test)(y + u, vbar + u/t) dy du.
/// Requires both the datum and the test function to factorize per axis.
pub fn weak_series(
    spec: &InitialDataSpec,
    beta: MultiIndex,
    vbar: [f64; 3],
    test: &InitialDataSpec,
    t: f64,
    tol: f64,
) -> Result<f64> {
    if !(spec.factorizes() && test.factorizes()) {
        return Err(VpError::InvalidArgument(
            "weak_series requires per-axis factorized datum and test function".into(),
        ));
    }
    if t <= 0.0 {
        return Err(VpError::InvalidArgument("t must be > 0".into()));
    }
    let sterm = &prefactor_terms(spec)[0];
    let tterm = &prefactor_terms(test)[0];
    let sign = if beta.order() % 2 == 0 { 1.0 } else { -1.0 };
    let mut total = 0.0;
    // gamma <= beta componentwise
    for g0 in 0..=beta.0[0] {
        for g1 in 0..=beta.0[1] {
            for g2 in 0..=beta.0[2] {
                let gamma = MultiIndex::new(g0, g1, g2);
                let mut binom = 1.0;
                for i in 0..3 {
                    binom *= fact(beta.0[i] as usize)
                        / (fact(gamma.0[i] as usize) * fact((beta.0[i] - gamma.0[i]) as usize));
                }
                let mut prod = spec.amplitude * test.amplitude * sterm.coeff * tterm.coeff;
                for i in 0..3 {
                    let dxi = gamma.0[i] as usize;
                    let dvi = (beta.0[i] - gamma.0[i]) as usize;
                    prod *= axis_pair_integral(
                        spec, sterm, test, tterm, i, vbar[i], t, dxi, dvi, tol,
                    )?;
                    if prod == 0.0 {
                        break;
                    }
                }
                total += binom * t.powi(gamma.order() as i32) * prod;
            }
        }
    }
    Ok(sign * total)
}

/// 2-D integral over (y, u) of the axis-i factors of
/// f0(y, vbar + u/t) * (d_x^a d_v^b test)(y + u, vbar + u/t).
#[allow(clippy::too_many_arguments)]
fn axis_pair_integral(
    spec: &InitialDataSpec,
    sterm: &MonomialTerm,
    test: &InitialDataSpec,
    tterm: &MonomialTerm,
    i: usize,
    vbar: f64,
    t: f64,
    dx: usize,
    dv: usize,
    tol: f64,
) -> Result<f64> {
    // y range: spec x-support axis i
    let ylo = spec.x_center[i] - spec.x_extent()[i];
    let yhi = spec.x_center[i] + spec.x_extent()[i];
    // u range: intersection of (test x-support - y range) with
    // t * (v supports - vbar)
    let mut ulo = test.x_center[i] - test.x_extent()[i] - yhi;
    let mut uhi = test.x_center[i] + test.x_extent()[i] - ylo;
    let sv = t * (spec.v_center[i] - spec.v_extent()[i] - vbar);
    let sh = t * (spec.v_center[i] + spec.v_extent()[i] - vbar);
    ulo = ulo.max(sv);
    uhi = uhi.min(sh);
    let tv = t * (test.v_center[i] - test.v_extent()[i] - vbar);
    let th = t * (test.v_center[i] + test.v_extent()[i] - vbar);
    ulo = ulo.max(tv);
    uhi = uhi.min(th);
    if uhi <= ulo {
        return Ok(0.0);
    }
    let span = (uhi - ulo).max(1.0);
    integrate_1d(
        |u| {
            let v = vbar + u / t;
            let fv = axis_factor_deriv(
                spec.family,
                v,
                spec.v_center[i],
                spec.v_width[i],
                sterm.v_pow.0[i] as usize,
                0,
            );
            if fv == 0.0 {
                return 0.0;
            }
            let gv = axis_factor_deriv(
                test.family,
                v,
                test.v_center[i],
                test.v_width[i],
                tterm.v_pow.0[i] as usize,
                dv,
            );
            if gv == 0.0 {
                return 0.0;
            }
            let inner = integrate_1d(
                |y| {
                    axis_factor_deriv(
                        spec.family,
                        y,
                        spec.x_center[i],
                        spec.x_width[i],
                        sterm.x_pow.0[i] as usize,
                        0,
                    ) * axis_factor_deriv(
                        test.family,
                        y + u,
                        test.x_center[i],
                        test.x_width[i],
                        tterm.x_pow.0[i] as usize,
                        dx,
                    )
                },
                ylo,
                yhi,
                tol / span,
            )
            .unwrap_or(f64::NAN);
            fv * gv * inner
        },
        ulo,
        uhi,
        tol,
    )
}

impl LinearExpansion {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "a1,a2,a3,c_alpha,moment,term")?;
        for term in &self.terms {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                term.alpha.0[0],
                term.alpha.0[1],
                term.alpha.0[2],
                term.c_alpha,
                term.moment,
                term.c_alpha * self.t.powi(-(term.alpha.order() as i32)) * term.moment
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pi() -> f64 {
        std::f64::consts::PI
    }

    #[test]
    fn unit_gaussian_density_values() {
        let spec = InitialDataSpec::unit_gaussian();
        // rho(0, 0) = int exp(-|v|^2) dv = pi^{3/2}
        let r0 = exact_density(&spec, 0.0, [0.0; 3], DEFAULT_TOL).unwrap();
        assert_relative_eq!(r0, pi().powf(1.5), max_relative = 1e-10);
        // rho(t, 0) = pi^{3/2} (1 + t^2)^{-3/2}
        let r10 = exact_density(&spec, 10.0, [0.0; 3], DEFAULT_TOL).unwrap();
        assert_relative_eq!(r10, pi().powf(1.5) * 101.0f64.powf(-1.5), max_relative = 1e-9);
        assert!((r10 - 5.4e-3).abs() < 2e-4);
    }

    #[test]
    fn zeroth_moment_is_q_of_v() {
        // M_0(w) = int f0(y, w) dy = pi^{3/2} exp(-|w|^2) for the unit gaussian
        let spec = InitialDataSpec::unit_gaussian();
        let w = [1.0, 0.0, 0.0];
        let m = moment(&spec, MultiIndex::ZERO, w, DEFAULT_TOL).unwrap();
        assert_relative_eq!(m, pi().powf(1.5) * (-1.0f64).exp(), max_relative = 1e-10);
    }

    #[test]
    fn conservation_law_example() {
        // alpha = 0, beta = (1,0,0) at v = (1,0,0):
        // int d_{v1} f0 dx = pi^{3/2} * (-2 v1 e^{-v1^2})|_{v1=1} = -2 pi^{3/2}/e
        let spec = InitialDataSpec::unit_gaussian();
        let a = conservation_law(
            &spec,
            MultiIndex::ZERO,
            MultiIndex::new(1, 0, 0),
            [1.0, 0.0, 0.0],
            DEFAULT_TOL,
        )
        .unwrap();
        assert_relative_eq!(
            a,
            -2.0 * pi().powf(1.5) * (-1.0f64).exp(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn conserved_along_free_flow() {
        let spec = InitialDataSpec {
            x_center: [0.4, -0.1, 0.2],
            v_center: [0.1, 0.3, -0.2],
            ..InitialDataSpec::unit_gaussian()
        };
        let alpha = MultiIndex::new(1, 0, 0);
        let beta = MultiIndex::new(0, 1, 0);
        let v = [0.5, 0.2, -0.1];
        let base = conservation_law(&spec, alpha, beta, v, DEFAULT_TOL).unwrap();
        for &t in &[1.0, 10.0, 100.0, 1000.0] {
            let evolved = conservation_law_evolved(&spec, t, alpha, beta, v, DEFAULT_TOL).unwrap();
            assert_relative_eq!(evolved, base, max_relative = 1e-9);
        }
    }

    #[test]
    fn expansion_residual_decays_at_expected_order() {
        // generic (parity-free) datum so the order-(n+1) term is present
        // same-sign centers keep the |alpha| = 1 terms from cancelling
        let spec = InitialDataSpec {
            x_center: [0.5, 0.4, 0.3],
            v_center: [0.3, 0.2, 0.25],
            x_width: [1.0, 1.2, 0.9],
            v_width: [1.1, 0.8, 1.0],
            ..InitialDataSpec::unit_gaussian()
        };
        let x = [0.4, 0.3, 0.2];
        for n in 0..=2usize {
            let mut resid = Vec::new();
            for &t in &[20.0, 40.0, 80.0] {
                let exact = t3_density(&spec, t, x, DEFAULT_TOL).unwrap();
                let exp = linear_expansion(&spec, n, t, x, DEFAULT_TOL).unwrap();
                resid.push((exact - exp.value).abs());
            }
            // each doubling of t should shrink the residual by ~2^(n+1)
            for k in 0..resid.len() - 1 {
                let ratio = resid[k] / resid[k + 1];
                let expected = 2.0f64.powi(n as i32 + 1);
                assert!(
                    ratio > 0.6 * expected && ratio < 1.6 * expected,
                    "n = {n}: ratio {ratio}, expected ~{expected}"
                );
            }
        }
    }

    #[test]
    fn weak_series_converges_to_weak_limit() {
        let spec = InitialDataSpec::unit_gaussian();
        // compactly supported product test function
        let test = InitialDataSpec {
            family: crate::phase::Family::Bump,
            amplitude: 1.0,
            x_center: [0.0; 3],
            v_center: [0.0; 3],
            x_width: [2.0; 3],
            v_width: [1.5; 3],
            polynomial_prefactor: Vec::new(),
        };
        let beta = MultiIndex::ZERO;
        let vbar = [0.3, 0.0, 0.0];
        let limit = linear_weak_limit(&spec, beta, vbar, &test, 1e-10).unwrap();
        let s40 = weak_series(&spec, beta, vbar, &test, 40.0, 1e-10).unwrap();
        let s80 = weak_series(&spec, beta, vbar, &test, 80.0, 1e-10).unwrap();
        assert_relative_eq!(s80, limit, max_relative = 0.02);
        // deviation should roughly halve from t to 2t
        let d40 = (s40 - limit).abs();
        let d80 = (s80 - limit).abs();
        assert!(d80 < 0.7 * d40, "d40 = {d40:.3e}, d80 = {d80:.3e}");
    }

    #[test]
    fn tail_matches_density_near_origin() {
        let spec = InitialDataSpec {
            x_center: [0.3, -0.2, 0.1],
            v_center: [0.2, 0.1, -0.15],
            ..InitialDataSpec::unit_gaussian()
        };
        let t = 60.0;
        let x = [0.2, -0.1, 0.15];
        let exact = t3_density(&spec, t, x, DEFAULT_TOL).unwrap();
        let tail2 = linear_tail_prediction(&spec, 2, t, x, DEFAULT_TOL).unwrap();
        let tail3 = linear_tail_prediction(&spec, 3, t, x, DEFAULT_TOL).unwrap();
        assert!((exact - tail3).abs() < (exact - tail2).abs());
        assert_relative_eq!(tail3, exact, max_relative = 1e-4);
    }
}
