//! Phase-space particle integrator for the Vlasov-Poisson flow
//!
//!   dX/dt = V,   dV/dt = -mu grad phi(t, X),   lap phi = rho,
//!
//! with kick-drift-kick leapfrog, a time step growing like max(1, t), and
//! three interchangeable force paths: a particle-mesh solve on an expanding
//! grid, an exact Gauss-law evaluation for spherically symmetric ensembles,
//! and a direct pairwise sum for small sanity cases.  Per-particle modified
//! weight corrections (phi_corr, w_corr) are integrated alongside so that
//! x - t v + phi_corr and v + w_corr are conserved along exact
//! characteristics.

use crate::error::{Result, VpError};
use crate::field::{deposit_cic, Grid3, ScalarField3, VectorField3};
use crate::phase::ParticleEnsemble;
use crate::poisson::{gradient, solve_freespace};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

fn default_softening() -> f64 {
    0.05
}

impl ForcePath {
    /// Shell-theorem path with the default softening length.
    pub fn spherical() -> Self {
        ForcePath::SphericalGauss {
            softening: default_softening(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForcePath {
    /// CIC deposit on an expanding cubic mesh + FFT free-space solve.
    ParticleMesh { n: usize, margin: f64 },
    /// Shell-theorem field of the sorted radial mass profile, with Plummer
    /// softening to suppress collisional heating at radial crossings.
    /// Only valid for spherically symmetric ensembles.
    SphericalGauss {
        #[serde(default = "default_softening")]
        softening: f64,
    },
    /// O(N^2) pairwise Green-function sum; sanity oracle for small N.
    Direct,
    /// Free flight (field off); linear-regime cross checks.
    None,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// +1 attractive, -1 repulsive.
    pub mu: f64,
    pub force_path: ForcePath,
    /// dt = dt_cfl * max(1, t), clipped to land on snapshot times.
    pub dt_cfl: f64,
    pub t_end: f64,
    /// Integrate the modified weight corrections.
    pub track_modified_weights: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mu: 1.0,
            force_path: ForcePath::spherical(),
            dt_cfl: 0.02,
            t_end: 1024.0,
            track_modified_weights: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu != 1.0 && self.mu != -1.0 {
            return Err(VpError::InvalidArgument("mu must be +1 or -1".into()));
        }
        if !(self.dt_cfl > 0.0 && self.dt_cfl < 1.0) {
            return Err(VpError::InvalidArgument("dt_cfl must be in (0, 1)".into()));
        }
        if self.t_end <= 0.0 {
            return Err(VpError::InvalidArgument("t_end must be > 0".into()));
        }
        Ok(())
    }
}

/// Field evaluator frozen at one time from one ensemble; provides the
/// potential gradient at arbitrary points and the potential energy.
pub enum FieldEvaluator {
    Spherical {
        /// sorted particle radii
        radii: Vec<f64>,
        /// prefix[k] = total weight of the k innermost particles (len n+1)
        prefix_mass: Vec<f64>,
        /// suffix[k] = sum of w_j / sqrt(r_j^2 + eps^2) over the outermost
        /// n-k particles (len n+1)
        suffix_wr: Vec<f64>,
        /// Plummer softening length
        eps: f64,
    },
    Mesh {
        phi: ScalarField3,
        grad: VectorField3,
        rho: ScalarField3,
    },
    Direct {
        positions: Vec<[f64; 3]>,
        weights: Vec<f64>,
    },
    Vacuum,
}

impl FieldEvaluator {
    pub fn build(ens: &ParticleEnsemble, path: &ForcePath, vmax: f64, t: f64) -> Result<Self> {
        match path {
            ForcePath::None => Ok(FieldEvaluator::Vacuum),
            ForcePath::Direct => Ok(FieldEvaluator::Direct {
                positions: ens.positions.clone(),
                weights: ens.weights.clone(),
            }),
            ForcePath::SphericalGauss { softening } => {
                let eps2 = softening * softening;
                let n = ens.len();
                let mut order: Vec<usize> = (0..n).collect();
                let r = |i: usize| {
                    let p = ens.positions[i];
                    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
                };
                order.sort_unstable_by(|&a, &b| r(a).total_cmp(&r(b)).then(a.cmp(&b)));
                let radii: Vec<f64> = order.iter().map(|&i| r(i)).collect();
                let mut prefix_mass = vec![0.0; n + 1];
                for (k, &i) in order.iter().enumerate() {
                    prefix_mass[k + 1] = prefix_mass[k] + ens.weights[i];
                }
                let mut suffix_wr = vec![0.0; n + 1];
                for k in (0..n).rev() {
                    suffix_wr[k] = suffix_wr[k + 1]
                        + ens.weights[order[k]] / (radii[k] * radii[k] + eps2).sqrt();
                }
                Ok(FieldEvaluator::Spherical {
                    radii,
                    prefix_mass,
                    suffix_wr,
                    eps: *softening,
                })
            }
            ForcePath::ParticleMesh { n, margin } => {
                let half = margin * (1.0 + vmax * t);
                let grid = Grid3::cube(0.0, half, *n);
                let mut rho = deposit_cic(
                    grid,
                    ens.positions.iter().zip(&ens.weights).map(|(&p, &w)| (p, w)),
                    false,
                );
                let inv_vol = 1.0 / grid.cell_volume();
                for v in rho.values.iter_mut() {
                    *v *= inv_vol;
                }
                let phi = solve_freespace(&rho)?;
                let grad = gradient(&phi);
                Ok(FieldEvaluator::Mesh { phi, grad, rho })
            }
        }
    }

    /// grad phi at x (the acceleration is -mu times this).
    pub fn grad_phi(&self, x: [f64; 3]) -> [f64; 3] {
        match self {
            FieldEvaluator::Vacuum => [0.0; 3],
            FieldEvaluator::Mesh { grad, .. } => grad.gather(x),
            FieldEvaluator::Direct { positions, weights } => {
                // phi = -(1/4pi) sum w_j / |x - x_j|  =>  grad phi points at x_j
                let mut g = [0.0; 3];
                for (p, &w) in positions.iter().zip(weights) {
                    let d = [x[0] - p[0], x[1] - p[1], x[2] - p[2]];
                    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                    if r2 < 1e-24 {
                        continue;
                    }
                    let inv_r3 = 1.0 / (r2 * r2.sqrt());
                    for a in 0..3 {
                        g[a] += w * d[a] * inv_r3 / FOUR_PI;
                    }
                }
                g
            }
            FieldEvaluator::Spherical {
                radii,
                prefix_mass,
                eps,
                ..
            } => {
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                if r < 1e-12 {
                    return [0.0; 3];
                }
                // particles exactly tied in radius (mirror pairs under the
                // symmetric seeding stay tied forever) get half the tied
                // group's mass, the symmetric subgradient of max(r_i, r_j);
                // a strict cutoff would drop those pair terms from the force
                // while the potential energy still carries them
                let k_lo = radii.partition_point(|&q| q < r);
                let k_hi = radii.partition_point(|&q| q <= r);
                let m = prefix_mass[k_lo] + 0.5 * (prefix_mass[k_hi] - prefix_mass[k_lo]);
                // softened shell force m r / (r^2 + eps^2)^{3/2}
                let g = m * r / (FOUR_PI * (r * r + eps * eps).powf(1.5));
                [g * x[0] / r, g * x[1] / r, g * x[2] / r]
            }
        }
    }

    /// phi at x (vacuum boundary conditions).
    pub fn potential(&self, x: [f64; 3]) -> f64 {
        match self {
            FieldEvaluator::Vacuum => 0.0,
            FieldEvaluator::Mesh { phi, .. } => phi.gather(x),
            FieldEvaluator::Direct { positions, weights } => {
                let mut p_acc = 0.0;
                for (p, &w) in positions.iter().zip(weights) {
                    let d = [x[0] - p[0], x[1] - p[1], x[2] - p[2]];
                    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    if r > 1e-12 {
                        p_acc -= w / (FOUR_PI * r);
                    }
                }
                p_acc
            }
            FieldEvaluator::Spherical {
                radii,
                prefix_mass,
                suffix_wr,
                eps,
            } => {
                // softened shell theorem:
                // phi(r) = -(m(<r) + sum_{r_j >= r} w_j r_soft/r_soft_j) / (4 pi r_soft)
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                let k = radii.partition_point(|&q| q < r);
                let r_soft = (r * r + eps * eps).sqrt();
                -(prefix_mass[k] / r_soft + suffix_wr[k]) / FOUR_PI
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

/// Kinetic + (mu/2) sum_i w_i phi(x_i) with phi from the evaluator.
pub fn energy(ens: &ParticleEnsemble, field: &FieldEvaluator, mu: f64) -> EnergySample {
    let mut kin = 0.0;
    for (v, &w) in ens.velocities.iter().zip(&ens.weights) {
        kin += 0.5 * w * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    }
    let pot = match field {
        FieldEvaluator::Mesh { phi, rho, .. } => {
            // grid form avoids the self-energy of the CIC cloud
            let vol = phi.grid.cell_volume();
            0.5 * mu
                * vol
                * phi
                    .values
                    .iter()
                    .zip(&rho.values)
                    .map(|(p, r)| p * r)
                    .sum::<f64>()
        }
        _ => {
            let mut acc = 0.0;
            for (p, &w) in ens.positions.iter().zip(&ens.weights) {
                acc += w * field.potential(*p);
            }
            0.5 * mu * acc
        }
    };
    EnergySample {
        t: ens.time,
        kinetic: kin,
        potential: pot,
        total: kin + pot,
    }
}

fn accelerations(ens: &ParticleEnsemble, field: &FieldEvaluator, mu: f64) -> Vec<[f64; 3]> {
    use rayon::prelude::*;
    ens.positions
        .par_iter()
        .map(|&x| {
            let g = field.grad_phi(x);
            [-mu * g[0], -mu * g[1], -mu * g[2]]
        })
        .collect()
}

fn max_speed(ens: &ParticleEnsemble) -> f64 {
    ens.velocities.iter().fold(0.0f64, |m, v| {
        m.max((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
    })
}

/// One kick-drift-kick step from ens.time to ens.time + dt.  `acc` must hold
/// the accelerations at the current state and is replaced by the
/// accelerations at the new state.
pub fn step(
    ens: &mut ParticleEnsemble,
    acc: &mut Vec<[f64; 3]>,
    cfg: &SolverConfig,
    vmax: f64,
    dt: f64,
) -> Result<()> {
    let t0 = ens.time;
    let half = 0.5 * dt;
    kick(ens, acc, t0, half, cfg.track_modified_weights);
    for (x, v) in ens.positions.iter_mut().zip(&ens.velocities) {
        for a in 0..3 {
            x[a] += v[a] * dt;
        }
    }
    ens.time = t0 + dt;
    let field = FieldEvaluator::build(ens, &cfg.force_path, vmax, ens.time)?;
    *acc = accelerations(ens, &field, cfg.mu);
    kick(ens, acc, ens.time, half, cfg.track_modified_weights);
    if ens
        .velocities
        .iter()
        .any(|v| !(v[0].is_finite() && v[1].is_finite() && v[2].is_finite()))
    {
        return Err(VpError::NumericalAbort(format!(
            "non-finite velocity at t = {}",
            ens.time
        )));
    }
    Ok(())
}

/// v += a h; the modified weights follow
///   d phi_corr/dt = -t mu grad phi = t a,   d w_corr/dt = mu grad phi = -a,
/// which keeps x - t v + phi_corr and v + w_corr constant along exact
/// characteristics.
fn kick(ens: &mut ParticleEnsemble, acc: &[[f64; 3]], t: f64, h: f64, modified: bool) {
    for i in 0..ens.len() {
        for a in 0..3 {
            ens.velocities[i][a] += acc[i][a] * h;
        }
    }
    if modified {
        for i in 0..ens.len() {
            for a in 0..3 {
                ens.phi_corr[i][a] += t * acc[i][a] * h;
                ens.w_corr[i][a] -= acc[i][a] * h;
            }
        }
    }
}

/// Geometric snapshot schedule t_k = t0 * 2^(k / per_octave), ending at t_end.
pub fn snapshot_times(t0: f64, t_end: f64, per_octave: usize) -> Vec<f64> {
    assert!(t0 > 0.0 && t_end > t0 && per_octave >= 1);
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let t = t0 * 2f64.powf(k as f64 / per_octave as f64);
        if t >= t_end * (1.0 - 1e-12) {
            break;
        }
        out.push(t);
        k += 1;
    }
    out.push(t_end);
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreMeta {
    pub format_version: u32,
    pub config_hash: String,
    pub mu: f64,
    pub n_particles: usize,
    pub times: Vec<f64>,
    pub energies: Vec<EnergySample>,
    pub force_path: ForcePath,
    pub track_modified_weights: bool,
}

/// Disk-backed snapshot store: weights once (f64), per-snapshot particle
/// state (f32), and a JSON meta file carrying times, energies and the
/// config hash.
pub struct SnapshotStore {
    dir: PathBuf,
    pub meta: StoreMeta,
    weights: Vec<f64>,
}

impl SnapshotStore {
    pub fn create(
        dir: &Path,
        config_hash: &str,
        cfg: &SolverConfig,
        ens: &ParticleEnsemble,
    ) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let meta = StoreMeta {
            format_version: 1,
            config_hash: config_hash.to_string(),
            mu: cfg.mu,
            n_particles: ens.len(),
            times: Vec::new(),
            energies: Vec::new(),
            force_path: cfg.force_path,
            track_modified_weights: cfg.track_modified_weights,
        };
        let mut w = BufWriter::new(std::fs::File::create(dir.join("weights.bin"))?);
        for &x in &ens.weights {
            w.write_all(&x.to_le_bytes())?;
        }
        drop(w);
        let store = SnapshotStore {
            dir: dir.to_path_buf(),
            meta,
            weights: ens.weights.clone(),
        };
        store.write_meta()?;
        Ok(store)
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let meta: StoreMeta =
            serde_json::from_reader(BufReader::new(std::fs::File::open(dir.join("meta.json"))?))?;
        let mut r = BufReader::new(std::fs::File::open(dir.join("weights.bin"))?);
        let mut buf = vec![0u8; 8 * meta.n_particles];
        r.read_exact(&mut buf)?;
        let weights = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(SnapshotStore {
            dir: dir.to_path_buf(),
            meta,
            weights,
        })
    }

    fn write_meta(&self) -> Result<()> {
        let f = BufWriter::new(std::fs::File::create(self.dir.join("meta.json"))?);
        serde_json::to_writer_pretty(f, &self.meta)?;
        Ok(())
    }

    fn snap_path(&self, idx: usize) -> PathBuf {
        self.dir.join(format!("snap_{idx:04}.bin"))
    }

    pub fn append(&mut self, ens: &ParticleEnsemble, energy: EnergySample) -> Result<()> {
        let idx = self.meta.times.len();
        let mut w = BufWriter::new(std::fs::File::create(self.snap_path(idx))?);
        let mut dump = |v: &[[f64; 3]]| -> Result<()> {
            for p in v {
                for a in 0..3 {
                    w.write_all(&(p[a] as f32).to_le_bytes())?;
                }
            }
            Ok(())
        };
        dump(&ens.positions)?;
        dump(&ens.velocities)?;
        dump(&ens.phi_corr)?;
        dump(&ens.w_corr)?;
        drop(w);
        self.meta.times.push(ens.time);
        self.meta.energies.push(energy);
        self.write_meta()
    }

    pub fn times(&self) -> &[f64] {
        &self.meta.times
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn load(&self, idx: usize) -> Result<ParticleEnsemble> {
        let n = self.meta.n_particles;
        let mut r = BufReader::new(std::fs::File::open(self.snap_path(idx))?);
        let mut buf = vec![0u8; 4 * 3 * n * 4];
        r.read_exact(&mut buf)?;
        let read_block = |off: usize| -> Vec<[f64; 3]> {
            (0..n)
                .map(|i| {
                    let mut p = [0.0; 3];
                    for a in 0..3 {
                        let s = off + 12 * i + 4 * a;
                        p[a] = f32::from_le_bytes(buf[s..s + 4].try_into().unwrap()) as f64;
                    }
                    p
                })
                .collect()
        };
        let positions = read_block(0);
        let velocities = read_block(12 * n);
        let phi_corr = read_block(24 * n);
        let w_corr = read_block(36 * n);
        Ok(ParticleEnsemble {
            time: self.meta.times[idx],
            positions,
            velocities,
            weights: self.weights.clone(),
            phi_corr,
            w_corr,
        })
    }

    /// Field evaluator reconstructed from a stored snapshot.
    pub fn field_at(&self, idx: usize, vmax: f64) -> Result<FieldEvaluator> {
        let ens = self.load(idx)?;
        FieldEvaluator::build(&ens, &self.meta.force_path, vmax, ens.time)
    }
}

pub struct RunOutput {
    pub ensemble: ParticleEnsemble,
    pub energies: Vec<EnergySample>,
}

/// Integrate from the ensemble's current time to cfg.t_end, appending a
/// snapshot at each schedule time (which must be sorted ascending).
pub fn run(
    mut ens: ParticleEnsemble,
    cfg: &SolverConfig,
    schedule: &[f64],
    mut store: Option<&mut SnapshotStore>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let vmax = max_speed(&ens) * 1.05 + 0.1;
    let mut field = FieldEvaluator::build(&ens, &cfg.force_path, vmax, ens.time)?;
    let mut acc = accelerations(&ens, &field, cfg.mu);
    let mut energies = vec![energy(&ens, &field, cfg.mu)];
    let mut next_snap = schedule.iter().position(|&t| t > ens.time).unwrap_or(schedule.len());

    while ens.time < cfg.t_end * (1.0 - 1e-12) {
        let mut dt = cfg.dt_cfl * ens.time.max(1.0);
        let mut hit_snap = false;
        if next_snap < schedule.len() && ens.time + dt >= schedule[next_snap] * (1.0 - 1e-12) {
            dt = schedule[next_snap] - ens.time;
            hit_snap = true;
        } else if ens.time + dt > cfg.t_end {
            dt = cfg.t_end - ens.time;
        }
        step(&mut ens, &mut acc, cfg, vmax, dt)?;
        if hit_snap {
            field = FieldEvaluator::build(&ens, &cfg.force_path, vmax, ens.time)?;
            let e = energy(&ens, &field, cfg.mu);
            energies.push(e);
            if let Some(store) = store.as_deref_mut() {
                store.append(&ens, e)?;
            }
            next_snap += 1;
        }
    }
    let e_final = {
        let field = FieldEvaluator::build(&ens, &cfg.force_path, vmax, ens.time)?;
        energy(&ens, &field, cfg.mu)
    };
    energies.push(e_final);
    Ok(RunOutput { ensemble: ens, energies })
}

/// grad_x d_x^kappa phi(t, t v) for |kappa| <= 1, evaluated from a field
/// snapshot.  kappa = None gives the gradient itself; kappa = Some(axis)
/// differentiates once more along that axis by central differences.
pub fn field_along_ray(
    field: &FieldEvaluator,
    t: f64,
    v: [f64; 3],
    kappa: Option<usize>,
) -> [f64; 3] {
    let x = [t * v[0], t * v[1], t * v[2]];
    match kappa {
        None => field.grad_phi(x),
        Some(axis) => {
            let h = (0.02 * t).max(1e-3);
            let mut xp = x;
            xp[axis] += h;
            let mut xm = x;
            xm[axis] -= h;
            let gp = field.grad_phi(xp);
            let gm = field.grad_phi(xm);
            [
                (gp[0] - gm[0]) / (2.0 * h),
                (gp[1] - gm[1]) / (2.0 * h),
                (gp[2] - gm[2]) / (2.0 * h),
            ]
        }
    }
}
