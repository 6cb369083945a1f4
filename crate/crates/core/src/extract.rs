//! Late-time asymptotics extracted from particle snapshots: the spatial
//! average Q(t, v) = int f dx and its scattering limit Q_infty, the
//! asymptotic potential solving lap_v phi_infty = Q_infty, the self-similar
//! density profile t^3 rho(t, t xi), and polyhomogeneous fits of ray data
//! against the basis log^p t / t^q.

use crate::error::{Result, VpError};
use crate::field::{deposit_cic, Grid3, ScalarField3, VectorField3};
use crate::lsq::{least_squares, DEFAULT_CONDITION_LIMIT};
use crate::phase::ParticleEnsemble;
use crate::poisson::{gradient, solve_freespace};
use serde::Serialize;

/// CIC deposit of particle weights on a velocity grid, divided by the cell
/// volume: the v-space number density int f(t, x, v) dx at the cell centers.
///
/// `max_ray_offset`, if set, drops particles with |x - t v| > value * max(t, 1);
/// along exact free flight x - t v is the (bounded) launch point, so the cut
/// discards only far-out phase-space debris without biasing the average.
pub fn spatial_average(
    ens: &ParticleEnsemble,
    grid: Grid3,
    max_ray_offset: Option<f64>,
) -> ScalarField3 {
    let t = ens.time;
    let scale = t.max(1.0);
    let points = ens
        .positions
        .iter()
        .zip(&ens.velocities)
        .zip(&ens.weights)
        .filter_map(|((x, v), &w)| {
            if let Some(c) = max_ray_offset {
                let d2: f64 = (0..3).map(|a| (x[a] - t * v[a]).powi(2)).sum();
                if d2.sqrt() > c * scale {
                    return None;
                }
            }
            Some((*v, w))
        });
    let mut out = deposit_cic(grid, points, false);
    let inv_vol = 1.0 / grid.cell_volume();
    for q in out.values.iter_mut() {
        *q *= inv_vol;
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ScatteringFit {
    /// fitted limit of Q(t, v)
    pub q_infty: ScalarField3,
    /// coefficient of 1/t
    pub rate_a: ScalarField3,
    /// coefficient of log t / t
    pub rate_b: ScalarField3,
    /// standard error of the constant term at the worst cell
    pub max_std_err: f64,
    pub mean_rms_residual: f64,
}

/// Per-cell least-squares fit Q(t, v) ~ Q_infty(v) + a(v)/t + b(v) log t / t
/// over the sampled times.  All samples must share a grid.
pub fn estimate_q_infty(samples: &[(f64, ScalarField3)]) -> Result<ScatteringFit> {
    if samples.len() < 4 {
        return Err(VpError::InvalidArgument(
            "estimate_q_infty needs at least 4 time samples".into(),
        ));
    }
    let grid = samples[0].1.grid;
    for (_, f) in samples {
        if f.grid != grid {
            return Err(VpError::InvalidArgument(
                "spatial average samples on mismatched grids".into(),
            ));
        }
    }
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|&(t, _)| vec![1.0, 1.0 / t, t.ln() / t])
        .collect();
    let mut q_infty = ScalarField3::zeros(grid);
    let mut rate_a = ScalarField3::zeros(grid);
    let mut rate_b = ScalarField3::zeros(grid);
    let mut max_std_err = 0.0f64;
    let mut rms_sum = 0.0;
    let n_cells = grid.len();
    let mut y = vec![0.0; samples.len()];
    for cell in 0..n_cells {
        for (s, (_, f)) in samples.iter().enumerate() {
            y[s] = f.values[cell];
        }
        let fit = least_squares(&rows, &y, DEFAULT_CONDITION_LIMIT)?;
        q_infty.values[cell] = fit.coefficients[0];
        rate_a.values[cell] = fit.coefficients[1];
        rate_b.values[cell] = fit.coefficients[2];
        max_std_err = max_std_err.max(fit.std_errors[0]);
        rms_sum += fit.rms_residual;
    }
    Ok(ScatteringFit {
        q_infty,
        rate_a,
        rate_b,
        max_std_err,
        mean_rms_residual: rms_sum / n_cells as f64,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticField {
    /// phi_infty with lap_v phi_infty = Q_infty, vacuum boundary conditions
    pub phi: ScalarField3,
    pub grad: VectorField3,
    pub source: ScalarField3,
}

/// Solve the v-space Poisson equation for the scattering potential.
pub fn asymptotic_field(q_infty: &ScalarField3) -> Result<AsymptoticField> {
    let phi = solve_freespace(q_infty)?;
    let grad = gradient(&phi);
    Ok(AsymptoticField {
        phi,
        grad,
        source: q_infty.clone(),
    })
}

/// Self-similar density profile t^3 rho(t, t xi) on a grid in xi = x / t,
/// via CIC deposit of the weights at xi_i = x_i / t.  Its integral over xi
/// is the total mass for any t.
pub fn self_similar_profile(ens: &ParticleEnsemble, grid: Grid3) -> ScalarField3 {
    let t = ens.time.max(1e-12);
    let points = ens
        .positions
        .iter()
        .zip(&ens.weights)
        .map(|(x, &w)| ([x[0] / t, x[1] / t, x[2] / t], w));
    let mut out = deposit_cic(grid, points, false);
    let inv_vol = 1.0 / grid.cell_volume();
    for q in out.values.iter_mut() {
        *q *= inv_vol;
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct RayFit {
    /// basis exponents (q, p): term log^p t / t^q
    pub terms: Vec<(usize, usize)>,
    /// one coefficient field per term, on the shared sample grid
    pub coefficients: Vec<VectorField3>,
    /// standard error of each term's coefficient at the worst cell/component
    pub max_std_errs: Vec<f64>,
    pub max_rms_residual: f64,
}

/// Polyhomogeneous fit of vector-valued ray samples G(t, v) against the
/// basis { log^p t / t^q : (q, p) in terms }, per grid cell and component.
/// For the rescaled force G = t^2 grad phi(t, t v) the (0, 0) coefficient is
/// the asymptotic force profile grad_v phi_infty(v).
pub fn fit_ray_samples(
    samples: &[(f64, VectorField3)],
    terms: &[(usize, usize)],
) -> Result<RayFit> {
    if samples.len() < terms.len() + 1 {
        return Err(VpError::InvalidArgument(format!(
            "ray fit with {} terms needs more than {} samples",
            terms.len(),
            samples.len()
        )));
    }
    let grid = samples[0].1.grid;
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|&(t, _)| {
            terms
                .iter()
                .map(|&(q, p)| t.ln().powi(p as i32) / t.powi(q as i32))
                .collect()
        })
        .collect();
    let mut coefficients: Vec<VectorField3> =
        terms.iter().map(|_| VectorField3::zeros(grid)).collect();
    let mut max_std_errs = vec![0.0f64; terms.len()];
    let mut max_rms = 0.0f64;
    let mut y = vec![0.0; samples.len()];
    for cell in 0..grid.len() {
        for comp in 0..3 {
            for (s, (_, f)) in samples.iter().enumerate() {
                y[s] = f.components[comp][cell];
            }
            let fit = least_squares(&rows, &y, DEFAULT_CONDITION_LIMIT)?;
            for (k, c) in fit.coefficients.iter().enumerate() {
                coefficients[k].components[comp][cell] = *c;
                max_std_errs[k] = max_std_errs[k].max(fit.std_errors[k]);
            }
            max_rms = max_rms.max(fit.rms_residual);
        }
    }
    Ok(RayFit {
        terms: terms.to_vec(),
        coefficients,
        max_std_errs,
        max_rms_residual: max_rms,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalarRayFit {
    pub terms: Vec<(usize, usize)>,
    pub coefficients: Vec<ScalarField3>,
    pub max_std_errs: Vec<f64>,
    pub max_rms_residual: f64,
}

/// Scalar counterpart of fit_ray_samples, e.g. for the self-similar density
/// t^3 rho(t, t xi) = sum log^p(t)/t^q F_{q,p}(xi) + remainder.
pub fn fit_scalar_samples(
    samples: &[(f64, ScalarField3)],
    terms: &[(usize, usize)],
) -> Result<ScalarRayFit> {
    if samples.len() < terms.len() + 1 {
        return Err(VpError::InvalidArgument(format!(
            "scalar fit with {} terms needs more than {} samples",
            terms.len(),
            samples.len()
        )));
    }
    let grid = samples[0].1.grid;
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|&(t, _)| {
            terms
                .iter()
                .map(|&(q, p)| t.ln().powi(p as i32) / t.powi(q as i32))
                .collect()
        })
        .collect();
    let mut coefficients: Vec<ScalarField3> =
        terms.iter().map(|_| ScalarField3::zeros(grid)).collect();
    let mut max_std_errs = vec![0.0f64; terms.len()];
    let mut max_rms = 0.0f64;
    let mut y = vec![0.0; samples.len()];
    for cell in 0..grid.len() {
        for (s, (_, f)) in samples.iter().enumerate() {
            y[s] = f.values[cell];
        }
        let fit = least_squares(&rows, &y, DEFAULT_CONDITION_LIMIT)?;
        for (k, c) in fit.coefficients.iter().enumerate() {
            coefficients[k].values[cell] = *c;
            max_std_errs[k] = max_std_errs[k].max(fit.std_errors[k]);
        }
        max_rms = max_rms.max(fit.rms_residual);
    }
    Ok(ScalarRayFit {
        terms: terms.to_vec(),
        coefficients,
        max_std_errs,
        max_rms_residual: max_rms,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileComparison {
    pub t: f64,
    pub order: usize,
    /// max over cells of |measured - predicted| (1 + |xi|)^3
    pub weighted_max_error: f64,
    pub weighted_rms_error: f64,
    pub max_predicted: f64,
}

/// Compare a measured self-similar profile against a prediction given on the
/// same grid, with the (1 + |xi|)^3 spatial weight that controls the tails.
pub fn compare_profiles(
    measured: &ScalarField3,
    predicted: &ScalarField3,
    t: f64,
    order: usize,
) -> ProfileComparison {
    let grid = measured.grid;
    let mut wmax = 0.0f64;
    let mut wsq = 0.0;
    for cell in 0..grid.len() {
        let xi = grid.point(cell);
        let r = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
        let w = (1.0 + r).powi(3);
        let e = w * (measured.values[cell] - predicted.values[cell]).abs();
        wmax = wmax.max(e);
        wsq += e * e;
    }
    ProfileComparison {
        t,
        order,
        weighted_max_error: wmax,
        weighted_rms_error: (wsq / grid.len() as f64).sqrt(),
        max_predicted: predicted.max_abs(),
    }
}
