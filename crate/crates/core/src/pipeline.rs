//! End-to-end orchestration shared by the command-line runner and the
//! acceptance suite: seed, integrate, snapshot, then extract scattering
//! data, fit polyhomogeneous expansions, and build modified characteristics
//! of increasing order from one snapshot store.

use crate::config::RunConfig;
use crate::error::{Result, VpError};
use crate::extract::{
    asymptotic_field, estimate_q_infty, fit_ray_samples, fit_scalar_samples, self_similar_profile,
    spatial_average, AsymptoticField, RayFit, ScalarRayFit, ScatteringFit,
};
use crate::field::{Grid3, ScalarField3, VectorField3};
use crate::integrator::{
    run, snapshot_times, FieldEvaluator, SnapshotStore, SolverConfig,
};
use crate::modchar::{
    fit_force_expansion, modified_label_average, ModifiedCharacteristics,
};
use crate::phase::{seed_particles, ExpansionOrderPolicy};
use std::path::Path;

/// Seed the configured ensemble and integrate it to t_end, writing the
/// geometric snapshot schedule into `dir`.
pub fn seed_and_run(cfg: &RunConfig, dir: &Path) -> Result<SnapshotStore> {
    cfg.validate()?;
    let ens = seed_particles(&cfg.initial_data, cfg.seeding.nx, cfg.seeding.nv)?;
    let solver = SolverConfig {
        t_end: cfg.solver.t_end,
        ..cfg.solver
    };
    let schedule = snapshot_times(
        cfg.snapshots.t_first,
        cfg.solver.t_end,
        cfg.snapshots.per_octave,
    );
    let mut store = SnapshotStore::create(dir, &cfg.hash(), &solver, &ens)?;
    run(ens, &solver, &schedule, Some(&mut store))?;
    Ok(store)
}

/// Everything extracted from one store that downstream verdicts consume.
pub struct ScatteringAnalysis {
    pub config_hash: String,
    pub vgrid: Grid3,
    /// snapshot indices used for the fits (t >= invert_t_min)
    pub window: Vec<usize>,
    pub q_samples: Vec<(f64, ScalarField3)>,
    pub scattering: ScatteringFit,
    pub asym: AsymptoticField,
    /// rescaled force t^2 grad phi(t, t v) on the velocity grid
    pub force_samples: Vec<(f64, VectorField3)>,
    pub ray_fit: RayFit,
    /// self-similar density t^3 rho(t, t xi) on the xi grid, early-to-mid
    /// window only (fixed particle resolution cannot resolve late profiles)
    pub xi_grid: Grid3,
    pub density_samples: Vec<(f64, ScalarField3)>,
    pub density_fit: ScalarRayFit,
    /// force fit on the xi grid over the density window, for the
    /// term-by-term Poisson link against density_fit
    pub xi_force_fit: RayFit,
}

/// Latest time included in the self-similar density fits: beyond this the
/// velocity-lattice seeding no longer resolves the profile at the xi-grid
/// resolution and the deposit degenerates into spikes.
pub const DENSITY_T_MAX: f64 = 256.0;

pub fn analyze_store(store: &SnapshotStore, cfg: &RunConfig) -> Result<ScatteringAnalysis> {
    let hash = cfg.hash();
    if store.meta.config_hash != hash {
        return Err(VpError::InvalidArgument(format!(
            "store hash {} does not match config hash {hash}",
            store.meta.config_hash
        )));
    }
    let vgrid = Grid3::cube(0.0, cfg.extraction.v_extent, cfg.extraction.v_cells);
    let xi_grid = Grid3::cube(0.0, 1.8, 6);
    let window: Vec<usize> = (0..store.times().len())
        .filter(|&i| store.times()[i] >= cfg.extraction.invert_t_min)
        .collect();
    if window.len() < 5 {
        return Err(VpError::InvalidArgument(format!(
            "only {} snapshots past invert_t_min; extend the run",
            window.len()
        )));
    }
    let mut q_samples = Vec::new();
    let mut force_samples = Vec::new();
    let mut density_samples = Vec::new();
    let mut xi_force_samples = Vec::new();
    for &idx in &window {
        let ens = store.load(idx)?;
        let t = ens.time;
        q_samples.push((t, spatial_average(&ens, vgrid, None)));
        let field = FieldEvaluator::build(&ens, &store.meta.force_path, 0.0, t)?;
        let rescaled = |grid: Grid3| {
            VectorField3::from_fn(grid, |v| {
                let g = field.grad_phi([t * v[0], t * v[1], t * v[2]]);
                [t * t * g[0], t * t * g[1], t * t * g[2]]
            })
        };
        if t <= DENSITY_T_MAX {
            density_samples.push((t, self_similar_profile(&ens, xi_grid)));
            xi_force_samples.push((t, rescaled(xi_grid)));
        }
        force_samples.push((t, rescaled(vgrid)));
    }
    let scattering = estimate_q_infty(&q_samples)?;
    let asym = asymptotic_field(&scattering.q_infty)?;
    let terms = [(0usize, 0usize), (1, 0), (1, 1)];
    let ray_fit = fit_ray_samples(&force_samples, &terms)?;
    let density_fit = fit_scalar_samples(&density_samples, &terms)?;
    let xi_force_fit = fit_ray_samples(&xi_force_samples, &terms)?;
    Ok(ScatteringAnalysis {
        config_hash: hash,
        vgrid,
        window,
        q_samples,
        scattering,
        asym,
        force_samples,
        ray_fit,
        xi_grid,
        density_samples,
        density_fit,
        xi_force_fit,
    })
}

/// Build modified characteristics of orders 0..=n_max.  Order 1 comes from
/// the asymptotic field; order n+1 integrates a polyhomogeneous fit of the
/// force along the order-n modified rays, sampled at several x offsets.
pub fn build_characteristics(
    store: &SnapshotStore,
    cfg: &RunConfig,
    analysis: &ScatteringAnalysis,
    n_max: usize,
) -> Result<Vec<ModifiedCharacteristics>> {
    let mu = cfg.solver.mu;
    let mut out = vec![ModifiedCharacteristics::identity(mu)];
    if n_max >= 1 {
        out.push(ModifiedCharacteristics::order1(
            mu,
            analysis.asym.grad.clone(),
        ));
    }
    let offsets: Vec<[f64; 3]> = vec![
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    for n in 1..n_max {
        let mc_n = out[n].clone();
        let mut samples: Vec<(f64, [f64; 3], VectorField3)> = Vec::new();
        for &idx in &analysis.window {
            let ens = store.load(idx)?;
            let t = ens.time;
            let field = FieldEvaluator::build(&ens, &store.meta.force_path, 0.0, t)?;
            for &x in &offsets {
                let sample = VectorField3::from_fn(analysis.vgrid, |v| {
                    let (xx, vv) = match mc_n.eval_xv(t, x, v) {
                        Ok(z) => z,
                        Err(_) => (x, v),
                    };
                    let z = [
                        xx[0] + t * vv[0],
                        xx[1] + t * vv[1],
                        xx[2] + t * vv[2],
                    ];
                    let g = field.grad_phi(z);
                    [t * t * g[0], t * t * g[1], t * t * g[2]]
                });
                samples.push((t, x, sample));
            }
        }
        let terms = ExpansionOrderPolicy::force_terms(n);
        let fit = fit_force_expansion(&samples, &terms)?;
        out.push(mc_n.build_next_order(&fit)?);
    }
    Ok(out)
}

/// Coarse phase-space histogram of the modified profile g_n over the labels
/// (a, b): 6D CIC deposit of w_i / det at the inverted labels, normalized
/// to a density.  Used for sup-norm Cauchy increments between snapshots.
pub fn modified_histogram(
    mc: &ModifiedCharacteristics,
    ens: &crate::phase::ParticleEnsemble,
    grid_a: Grid3,
    grid_b: Grid3,
    max_failure_fraction: f64,
) -> Result<Vec<f64>> {
    use crate::field::{cic_base, cic_stencil};
    use rayon::prelude::*;
    let t = ens.time;
    let n_b = grid_b.len();
    let chunks: Vec<(Vec<f64>, f64)> = (0..ens.len())
        .into_par_iter()
        .fold(
            || (vec![0.0f64; grid_a.len() * n_b], 0.0f64),
            |(mut hist, mut failed), i| {
                let w = ens.weights[i];
                match mc.invert_modification(t, ens.positions[i], ens.velocities[i]) {
                    Ok((a, b)) => {
                        let det = if mc.order == 0 {
                            1.0
                        } else {
                            mc.jacobian_det(t, a, b).unwrap_or(1.0)
                        };
                        if det.abs() < 1e-8 {
                            failed += w;
                            return (hist, failed);
                        }
                        let val = w / det;
                        let (base_a, frac_a) = cic_base(&grid_a, a);
                        let (base_b, frac_b) = cic_base(&grid_b, b);
                        for (fa, wa) in cic_stencil(&grid_a, base_a, frac_a) {
                            for (fb, wb) in cic_stencil(&grid_b, base_b, frac_b) {
                                hist[fa * n_b + fb] += val * wa * wb;
                            }
                        }
                    }
                    Err(_) => failed += w,
                }
                (hist, failed)
            },
        )
        .collect();
    let mut hist = vec![0.0f64; grid_a.len() * n_b];
    let mut failed = 0.0;
    for (h, f) in chunks {
        for (d, s) in hist.iter_mut().zip(&h) {
            *d += s;
        }
        failed += f;
    }
    let mass = ens.total_weight();
    if failed > max_failure_fraction * mass {
        return Err(VpError::InversionDiverged {
            t,
            detail: format!("{:.2}% of the mass failed to invert", 100.0 * failed / mass),
        });
    }
    let norm = 1.0 / (grid_a.cell_volume() * grid_b.cell_volume());
    for h in hist.iter_mut() {
        *h *= norm;
    }
    Ok(hist)
}

/// Discretization error bar for the asymptotic-field gradient: re-solve the
/// velocity-space Poisson problem on a half-resolution grid and return the
/// sup difference of the two gradients over the fine interior.  For a
/// second-order solver this difference is about three times the fine-grid
/// error, so it is a conservative bar.
pub fn poisson_discretization_bar(asym: &AsymptoticField) -> Result<f64> {
    gradient_solve_bar(&asym.source, &asym.grad)
}

/// Same half-resolution comparison for an arbitrary source field and the
/// gradient of its fine-grid free-space solve.
pub fn gradient_solve_bar(source: &ScalarField3, grad_fine: &VectorField3) -> Result<f64> {
    let g = source.grid;
    let mut cg = g;
    for a in 0..3 {
        let n = (g.dims[a] / 2).max(4);
        cg.spacing[a] = g.spacing[a] * (g.dims[a] - 1) as f64 / (n - 1) as f64;
        cg.dims[a] = n;
    }
    let qc = ScalarField3::from_fn(cg, |p| source.gather(p));
    let coarse = crate::poisson::gradient(&crate::poisson::solve_freespace(&qc)?);
    let mut sup = 0.0f64;
    for idx in 0..g.len() {
        let ijk = g.unflat(idx);
        if (0..3).any(|a| ijk[a] == 0 || ijk[a] + 1 == g.dims[a]) {
            continue;
        }
        let p = g.point(idx);
        let a = grad_fine.value(idx);
        let b = coarse.gather(p);
        for c in 0..3 {
            sup = sup.max((a[c] - b[c]).abs());
        }
    }
    Ok(sup)
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Jacobian-free label average of a velocity function against the
/// asymptotic state: sum_i w_i f(b_i).  The jacobian corrections of the
/// modification and of the profile cancel at leading order, so this
/// converges to int f_inf(z) fn(v) dz one power of t faster than the
/// g_n average itself.
pub fn limit_average(
    mc: &ModifiedCharacteristics,
    ens: &crate::phase::ParticleEnsemble,
    f: impl Fn([f64; 3], [f64; 3]) -> f64 + Sync,
) -> Result<f64> {
    modified_label_average(mc, ens, f, false, 0.01)
}
