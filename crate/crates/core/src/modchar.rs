//! Modified characteristics: the corrected straight-line flow
//!
//!   X_n(t, x, v) = x + mu log(t) grad_v phi_inf(v)
//!                    + sum_{q, alpha, p} XT_{q,alpha,p}(v) x^alpha log^p(t) / t^q,
//!   V_n(t, x, v) = v + mu grad_v phi_inf(v) / t
//!                    + sum VT_{q,alpha,p}(v) x^alpha log^p(t) / t^q,
//!
//! built recursively by term-wise time integration of a polyhomogeneous fit
//! of the rescaled force t^2 grad phi along the modified rays.  Inverting
//! the map z = (x, v) -> (X_n + t V_n, V_n) sends a particle at late time
//! back to its asymptotic phase-space label, which is how the scattering
//! profiles g_n and their weighted spatial averages are sampled.

use crate::error::{Result, VpError};
use crate::field::{Grid3, VectorField3};
use crate::lsq::{least_squares, DEFAULT_CONDITION_LIMIT};
use crate::multi_index::MultiIndex;
use crate::phase::{axis_factor_deriv, Family, ParticleEnsemble};
use serde::{Deserialize, Serialize};
use std::io::{BufWriter, Write};
use std::path::Path;

/// Exact rational number for antiderivative coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frac {
    pub num: i64,
    pub den: i64,
}

impl Frac {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0);
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()).max(1) as i64;
        let sign = if den < 0 { -1 } else { 1 };
        Frac {
            num: sign * num / g,
            den: sign * den / g,
        }
    }

    pub fn add(self, o: Frac) -> Frac {
        Frac::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }

    pub fn mul(self, o: Frac) -> Frac {
        Frac::new(self.num * o.num, self.den * o.den)
    }

    pub fn neg(self) -> Frac {
        Frac::new(-self.num, self.den)
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// One term coeff * log^p(t) / t^q of a closed-form antiderivative
/// (q = 0 encodes a pure log power).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntiTerm {
    pub coeff: Frac,
    pub q: usize,
    pub p: usize,
}

/// Exact antiderivative of log^p(t) / t^q for q >= 1:
///   q = 1:  log^{p+1}(t) / (p + 1)
///   q >= 2: -log^p(t) / ((q-1) t^{q-1}) + p/(q-1) * antiderivative(q, p-1)
pub fn antiderivative(q: usize, p: usize) -> Result<Vec<AntiTerm>> {
    if q == 0 {
        return Err(VpError::InvalidArgument(
            "antiderivative of a growing term log^p t is outside the table".into(),
        ));
    }
    if q == 1 {
        return Ok(vec![AntiTerm {
            coeff: Frac::new(1, p as i64 + 1),
            q: 0,
            p: p + 1,
        }]);
    }
    let m = (q - 1) as i64;
    let mut out = vec![AntiTerm {
        coeff: Frac::new(-1, m),
        q: q - 1,
        p,
    }];
    if p > 0 {
        let scale = Frac::new(p as i64, m);
        for t in antiderivative(q, p - 1)? {
            out.push(AntiTerm {
                coeff: scale.mul(t.coeff),
                q: t.q,
                p: t.p,
            });
        }
    }
    Ok(out)
}

/// Symbolic d/dt of a term combination; used to verify the table exactly.
pub fn differentiate(terms: &[AntiTerm]) -> Vec<AntiTerm> {
    // d/dt [log^p / t^q] = p log^{p-1}/t^{q+1} - q log^p/t^{q+1}
    let mut out: Vec<AntiTerm> = Vec::new();
    let mut push = |coeff: Frac, q: usize, p: usize| {
        if coeff.num == 0 {
            return;
        }
        for e in out.iter_mut() {
            if e.q == q && e.p == p {
                e.coeff = e.coeff.add(coeff);
                return;
            }
        }
        out.push(AntiTerm { coeff, q, p });
    };
    for t in terms {
        if t.p > 0 {
            push(t.coeff.mul(Frac::new(t.p as i64, 1)), t.q + 1, t.p - 1);
        }
        if t.q > 0 {
            push(t.coeff.mul(Frac::new(-(t.q as i64), 1)), t.q + 1, t.p);
        }
    }
    out.retain(|e| e.coeff.num != 0);
    out
}

/// One fitted force term coeff(v) x^alpha log^p(t) / t^q of the rescaled
/// force t^2 grad phi(t, X_n + t V_n).
#[derive(Debug, Clone)]
pub struct ForceTerm {
    pub q: usize,
    pub alpha: MultiIndex,
    pub p: usize,
    pub coeff: VectorField3,
}

#[derive(Debug, Clone)]
pub struct ForceExpansionFit {
    pub terms: Vec<ForceTerm>,
    pub max_std_err: f64,
    pub max_rms_residual: f64,
}

/// Fit rescaled-force samples G(t_i, x_j, v) (one vector field per (t, x)
/// pair) against the basis x^alpha log^p(t)/t^q.  Every requested term must
/// satisfy |alpha| + p <= q.
pub fn fit_force_expansion(
    samples: &[(f64, [f64; 3], VectorField3)],
    terms: &[(usize, MultiIndex, usize)],
) -> Result<ForceExpansionFit> {
    for &(q, alpha, p) in terms {
        if alpha.order() + p > q {
            return Err(VpError::InvalidArgument(format!(
                "force term (q={q}, |alpha|={}, p={p}) violates |alpha|+p <= q",
                alpha.order()
            )));
        }
    }
    if samples.len() < terms.len() + 1 {
        return Err(VpError::InvalidArgument(format!(
            "force fit with {} terms needs more than {} samples",
            terms.len(),
            samples.len()
        )));
    }
    let grid = samples[0].2.grid;
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|&(t, x, _)| {
            terms
                .iter()
                .map(|&(q, alpha, p)| alpha.pow(x) * t.ln().powi(p as i32) / t.powi(q as i32))
                .collect()
        })
        .collect();
    let mut coefficients: Vec<VectorField3> =
        terms.iter().map(|_| VectorField3::zeros(grid)).collect();
    let mut max_std_err = 0.0f64;
    let mut max_rms = 0.0f64;
    let mut y = vec![0.0; samples.len()];
    for cell in 0..grid.len() {
        for comp in 0..3 {
            for (s, (_, _, f)) in samples.iter().enumerate() {
                y[s] = f.components[comp][cell];
            }
            let fit = least_squares(&rows, &y, DEFAULT_CONDITION_LIMIT)?;
            for (k, c) in fit.coefficients.iter().enumerate() {
                coefficients[k].components[comp][cell] = *c;
                max_std_err = max_std_err.max(fit.std_errors[k]);
            }
            max_rms = max_rms.max(fit.rms_residual);
        }
    }
    Ok(ForceExpansionFit {
        terms: terms
            .iter()
            .zip(coefficients)
            .map(|(&(q, alpha, p), coeff)| ForceTerm { q, alpha, p, coeff })
            .collect(),
        max_std_err,
        max_rms_residual: max_rms,
    })
}

#[derive(Debug, Clone)]
pub struct TableEntry {
    pub q: usize,
    pub alpha: MultiIndex,
    pub p: usize,
    pub x_coeff: VectorField3,
    pub v_coeff: VectorField3,
}

#[derive(Debug, Clone)]
pub struct ModifiedCharacteristics {
    pub order: usize,
    pub mu: f64,
    /// grad_v phi_inf on the velocity grid; None at order 0 (identity map)
    pub phi_inf_grad: Option<VectorField3>,
    pub tables: Vec<TableEntry>,
}

impl ModifiedCharacteristics {
    /// Order 0: X = x, V = v.
    pub fn identity(mu: f64) -> Self {
        ModifiedCharacteristics {
            order: 0,
            mu,
            phi_inf_grad: None,
            tables: Vec::new(),
        }
    }

    /// Closed-form order 1 from the asymptotic force profile.
    pub fn order1(mu: f64, phi_inf_grad: VectorField3) -> Self {
        ModifiedCharacteristics {
            order: 1,
            mu,
            phi_inf_grad: Some(phi_inf_grad),
            tables: Vec::new(),
        }
    }

    fn grid(&self) -> Option<Grid3> {
        self.phi_inf_grad
            .as_ref()
            .map(|f| f.grid)
            .or_else(|| self.tables.first().map(|t| t.x_coeff.grid))
    }

    fn check_v(&self, v: [f64; 3]) -> Result<()> {
        if let Some(grid) = self.grid() {
            for a in 0..3 {
                let lo = grid.origin[a] - 0.5 * grid.spacing[a];
                let hi = grid.origin[a] + (grid.dims[a] as f64 - 0.5) * grid.spacing[a];
                if v[a] < lo || v[a] > hi {
                    return Err(VpError::InvalidArgument(format!(
                        "velocity {v:?} outside the table grid on axis {a}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Evaluate (X_n, V_n) with trilinear interpolation of the tables in v.
    pub fn eval_xv(&self, t: f64, x: [f64; 3], v: [f64; 3]) -> Result<([f64; 3], [f64; 3])> {
        if t < 1.0 {
            return Err(VpError::InvalidArgument(
                "modified characteristics are defined for t >= 1".into(),
            ));
        }
        self.check_v(v)?;
        let mut xx = x;
        let mut vv = v;
        if let Some(g) = &self.phi_inf_grad {
            let f = g.gather(v);
            let lt = t.ln();
            for a in 0..3 {
                xx[a] += self.mu * lt * f[a];
                vv[a] += self.mu * f[a] / t;
            }
        }
        for e in &self.tables {
            let base = e.alpha.pow(x) * t.ln().powi(e.p as i32) / t.powi(e.q as i32);
            let cx = e.x_coeff.gather(v);
            let cv = e.v_coeff.gather(v);
            for a in 0..3 {
                xx[a] += base * cx[a];
                vv[a] += base * cv[a];
            }
        }
        Ok((xx, vv))
    }

    /// Build order n+1 tables by integrating mu/t (resp. -mu/t^2) times each
    /// fitted force term in time, with integration constants chosen so that
    /// the constant-in-time part of (X, V) stays (x, v).
    pub fn build_next_order(&self, force_fit: &ForceExpansionFit) -> Result<Self> {
        let mut phi_inf_grad = self.phi_inf_grad.clone();
        let mut tables: Vec<TableEntry> = Vec::new();
        let grid = force_fit
            .terms
            .first()
            .map(|t| t.coeff.grid)
            .or_else(|| self.grid())
            .ok_or_else(|| VpError::InvalidArgument("empty force fit at order 0".into()))?;
        let mut add = |q: usize, alpha: MultiIndex, p: usize, scale: f64, field: &VectorField3, to_x: bool| {
            let entry = match tables
                .iter_mut()
                .find(|e| e.q == q && e.alpha == alpha && e.p == p)
            {
                Some(e) => e,
                None => {
                    tables.push(TableEntry {
                        q,
                        alpha,
                        p,
                        x_coeff: VectorField3::zeros(grid),
                        v_coeff: VectorField3::zeros(grid),
                    });
                    tables.last_mut().unwrap()
                }
            };
            let dst = if to_x {
                &mut entry.x_coeff
            } else {
                &mut entry.v_coeff
            };
            for comp in 0..3 {
                for (d, s) in dst.components[comp]
                    .iter_mut()
                    .zip(&field.components[comp])
                {
                    *d += scale * s;
                }
            }
        };
        for term in &force_fit.terms {
            if term.alpha.order() + term.p > term.q {
                return Err(VpError::InvalidArgument(format!(
                    "force term (q={}, |alpha|={}, p={}) violates |alpha|+p <= q",
                    term.q,
                    term.alpha.order(),
                    term.p
                )));
            }
            // X: d/dt X takes mu * term * t / t^2 = mu * term / t^{q+1}
            if term.q == 0 && term.p == 0 {
                // the log-coefficient term: mu log(t) coeff(v)
                phi_inf_grad = Some(term.coeff.clone());
            } else {
                for at in antiderivative(term.q + 1, term.p)? {
                    add(at.q, term.alpha, at.p, self.mu * at.coeff.as_f64(), &term.coeff, true);
                }
            }
            // V: d/dt V takes -mu * term / t^{q+2}
            if term.q == 0 && term.p == 0 {
                // integrates to +mu coeff / t, the explicit first-order term
                continue;
            }
            for at in antiderivative(term.q + 2, term.p)? {
                add(at.q, term.alpha, at.p, -self.mu * at.coeff.as_f64(), &term.coeff, false);
            }
        }
        Ok(ModifiedCharacteristics {
            order: self.order + 1,
            mu: self.mu,
            phi_inf_grad,
            tables,
        })
    }

    /// Invert the phase-space modification z = (x, v) -> (X + t V, V) by a
    /// damped fixed-point iteration; the linear part (x, v) -> (x + t v, v)
    /// is inverted exactly each sweep, the small correction lags one step.
    pub fn invert_modification(
        &self,
        t: f64,
        target_x: [f64; 3],
        target_v: [f64; 3],
    ) -> Result<([f64; 3], [f64; 3])> {
        let damp = 0.5;
        let mut v = target_v;
        let mut x = [
            target_x[0] - t * v[0],
            target_x[1] - t * v[1],
            target_x[2] - t * v[2],
        ];
        for _ in 0..100 {
            let (xx, vv) = self.eval_xv(t, x, v)?;
            // corrections beyond the linear part
            let mut res = 0.0f64;
            let mut xn = [0.0; 3];
            let mut vn = [0.0; 3];
            for a in 0..3 {
                let cv = vv[a] - v[a];
                let cx = xx[a] + t * vv[a] - x[a] - t * v[a];
                vn[a] = target_v[a] - cv;
                xn[a] = target_x[a] - t * vn[a] - cx;
                res = res.max((vv[a] - target_v[a]).abs());
                res = res.max((xx[a] + t * vv[a] - target_x[a]).abs() / t.max(1.0));
            }
            if res <= 1e-10 {
                return Ok((x, v));
            }
            for a in 0..3 {
                x[a] += damp * (xn[a] - x[a]);
                v[a] += damp * (vn[a] - v[a]);
            }
        }
        let (xx, vv) = self.eval_xv(t, x, v)?;
        let res = (0..3)
            .map(|a| {
                (vv[a] - target_v[a])
                    .abs()
                    .max((xx[a] + t * vv[a] - target_x[a]).abs() / t.max(1.0))
            })
            .fold(0.0f64, f64::max);
        Err(VpError::InversionDiverged {
            t,
            detail: format!("fixed point stalled at residual {res:.3e}"),
        })
    }

    /// Determinant of the 6x6 Jacobian of z -> (X + t V, V) at (x, v),
    /// by central differences.
    pub fn jacobian_det(&self, t: f64, x: [f64; 3], v: [f64; 3]) -> Result<f64> {
        let hx = 1e-4 * t.max(1.0);
        let hv = 1e-5;
        let mut m = nalgebra::SMatrix::<f64, 6, 6>::zeros();
        let f = |x: [f64; 3], v: [f64; 3]| -> Result<[f64; 6]> {
            let (xx, vv) = self.eval_xv(t, x, v)?;
            Ok([
                xx[0] + t * vv[0],
                xx[1] + t * vv[1],
                xx[2] + t * vv[2],
                vv[0],
                vv[1],
                vv[2],
            ])
        };
        for j in 0..6 {
            let (mut zp_x, mut zp_v) = (x, v);
            let (mut zm_x, mut zm_v) = (x, v);
            let h = if j < 3 { hx } else { hv };
            if j < 3 {
                zp_x[j] += h;
                zm_x[j] -= h;
            } else {
                zp_v[j - 3] += h;
                zm_v[j - 3] -= h;
            }
            let fp = f(zp_x, zp_v)?;
            let fm = f(zm_x, zm_v)?;
            for i in 0..6 {
                m[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(m.determinant())
    }

    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let grid = self
            .grid()
            .ok_or_else(|| VpError::InvalidArgument("nothing to serialize at order 0".into()))?;
        let header = serde_json::json!({
            "order": self.order,
            "mu": self.mu,
            "grid": { "origin": grid.origin, "spacing": grid.spacing, "dims": grid.dims },
            "n_tables": self.tables.len(),
        });
        serde_json::to_writer_pretty(
            BufWriter::new(std::fs::File::create(dir.join("modchar.json"))?),
            &header,
        )?;
        let mut w = BufWriter::new(std::fs::File::create(dir.join("modchar.csv"))?);
        writeln!(w, "q,a1,a2,a3,p,cell,Xx,Xy,Xz,Vx,Vy,Vz")?;
        let mut dump = |q: usize, alpha: MultiIndex, p: usize, xf: &VectorField3, vf: &VectorField3| -> Result<()> {
            for cell in 0..grid.len() {
                let xv = xf.value(cell);
                let vv = vf.value(cell);
                writeln!(
                    w,
                    "{q},{},{},{},{p},{cell},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                    alpha.0[0], alpha.0[1], alpha.0[2], xv[0], xv[1], xv[2], vv[0], vv[1], vv[2]
                )?;
            }
            Ok(())
        };
        if let Some(g) = &self.phi_inf_grad {
            // the explicit first-order terms, encoded as the (0, 0, 0) row block
            dump(0, MultiIndex::ZERO, 0, g, g)?;
        }
        for e in &self.tables {
            dump(e.q, e.alpha, e.p, &e.x_coeff, &e.v_coeff)?;
        }
        Ok(())
    }
}

/// Smooth compactly-concentrated velocity test function: a gaussian bump
/// centered at `center` with axis width `width`, with exact derivatives of
/// any order up to the window derivative cap.
#[derive(Debug, Clone, Copy)]
pub struct TestFunction {
    pub center: [f64; 3],
    pub width: f64,
}

impl TestFunction {
    /// d^kappa chi (v)
    pub fn eval(&self, v: [f64; 3], kappa: MultiIndex) -> f64 {
        let mut out = 1.0;
        for a in 0..3 {
            out *= axis_factor_deriv(
                Family::Gaussian,
                v[a],
                self.center[a],
                self.width,
                0,
                kappa.0[a] as usize,
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProfileAverageOptions {
    /// spatial weight exponent a^alpha on the inverted position label
    pub alpha: MultiIndex,
    /// v-derivative order moved onto the test function by parts
    pub kappa: MultiIndex,
    /// multiply each particle by 1 / det(D modification) at its label
    pub jacobian: bool,
    /// tolerated fraction of inversion failures (by weight)
    pub max_failure_fraction: f64,
}

impl Default for ProfileAverageOptions {
    fn default() -> Self {
        ProfileAverageOptions {
            alpha: MultiIndex::ZERO,
            kappa: MultiIndex::ZERO,
            jacobian: false,
            max_failure_fraction: 0.01,
        }
    }
}

/// Generic label average: invert each particle's (x_i, v_i) to its
/// asymptotic label (a_i, b_i) and accumulate w_i * f(a_i, b_i), restricted
/// to |a_i| < t, optionally dividing by the modification Jacobian (which
/// turns the f_inf-average into a g_n-average).  Inversion failures are
/// dropped and reported as an error past the tolerated mass fraction.
pub fn modified_label_average(
    mc: &ModifiedCharacteristics,
    ens: &ParticleEnsemble,
    f: impl Fn([f64; 3], [f64; 3]) -> f64 + Sync,
    jacobian: bool,
    max_failure_fraction: f64,
) -> Result<f64> {
    use rayon::prelude::*;
    let t = ens.time;
    let results: Vec<(f64, f64)> = (0..ens.len())
        .into_par_iter()
        .map(|i| {
            let w = ens.weights[i];
            match mc.invert_modification(t, ens.positions[i], ens.velocities[i]) {
                Ok((a, b)) => {
                    let r2 = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
                    if r2.sqrt() >= t {
                        return (0.0, 0.0);
                    }
                    let mut val = w * f(a, b);
                    if jacobian {
                        match mc.jacobian_det(t, a, b) {
                            Ok(det) if det.abs() > 1e-8 => val /= det,
                            _ => return (0.0, w),
                        }
                    }
                    (val, 0.0)
                }
                Err(_) => (0.0, w),
            }
        })
        .collect();
    let total: f64 = results.iter().map(|r| r.0).sum();
    let failed: f64 = results.iter().map(|r| r.1).sum();
    let mass = ens.total_weight();
    if failed > max_failure_fraction * mass {
        return Err(VpError::InversionDiverged {
            t,
            detail: format!(
                "{:.2}% of the mass failed to invert",
                100.0 * failed / mass
            ),
        });
    }
    Ok(total)
}

/// Weighted spatial average of the modified profile g_n tested against chi:
/// accumulate w_i a_i^alpha (-1)^|kappa| d^kappa chi(b_i) over the labels,
/// i.e. the conservation-law functional integrated against chi with the
/// v-derivatives moved onto the test function by parts.
pub fn modified_profile_average(
    mc: &ModifiedCharacteristics,
    ens: &ParticleEnsemble,
    chi: &TestFunction,
    opts: &ProfileAverageOptions,
) -> Result<f64> {
    let sign = if opts.kappa.order() % 2 == 0 { 1.0 } else { -1.0 };
    modified_label_average(
        mc,
        ens,
        |a, b| opts.alpha.pow(a) * sign * chi.eval(b, opts.kappa),
        opts.jacobian,
        opts.max_failure_fraction,
    )
}
