//! Acceptance suite: thirteen end-to-end criteria, one test (and one
//! pass/fail line) each.  Criteria 1-5 run against quadrature oracles;
//! criteria 6-13 share one reference simulation of the default Gaussian
//! datum, integrated to t = 1024 and post-processed once.

use std::sync::OnceLock;
use vplab_core::config::{RunConfig, SeedingConfig};
use vplab_core::extract::spatial_average;
use vplab_core::field::Grid3;
use vplab_core::integrator::{run, snapshot_times, ForcePath, SnapshotStore, SolverConfig};
use vplab_core::linear::{
    conservation_law, conservation_law_evolved, expansion_coefficient, linear_expansion,
    linear_weak_limit, moment, t3_density, weak_series,
};
use vplab_core::lsq::least_squares;
use vplab_core::modchar::{
    modified_label_average, modified_profile_average, ModifiedCharacteristics,
    ProfileAverageOptions, TestFunction,
};
use vplab_core::phase::{seed_particles, InitialDataSpec, MonomialTerm};
use vplab_core::pipeline::{
    analyze_store, build_characteristics, modified_histogram, poisson_discretization_bar,
    seed_and_run, sup_diff, ScatteringAnalysis,
};
use vplab_core::poisson::{
    kernel_bound_check, kernel_integral, kernel_integral_scaled, solve_freespace, KERNEL_BOUND,
};
use vplab_core::quad::integrate_1d;
use vplab_core::verdict::{
    density_force_link, rate_fit, weak_convergence_test, RateModel,
};
use vplab_core::MultiIndex;

const TOL: f64 = 1e-9;

fn report(criterion: usize, pass: bool, detail: &str) {
    println!(
        "CRITERION {criterion:02} {}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion}: {detail}");
}

/// Off-center datum: generic rates require nonvanishing odd moments.
fn skewed_spec() -> InitialDataSpec {
    InitialDataSpec {
        x_center: [0.3, -0.2, 0.1],
        v_center: [0.2, 0.1, -0.15],
        ..InitialDataSpec::unit_gaussian()
    }
}

struct Reference {
    _dir: tempfile::TempDir,
    cfg: RunConfig,
    store: SnapshotStore,
    analysis: ScatteringAnalysis,
    mcs: Vec<ModifiedCharacteristics>,
}

static REFERENCE: OnceLock<Reference> = OnceLock::new();

fn reference() -> &'static Reference {
    REFERENCE.get_or_init(|| {
        let cfg = RunConfig::default();
        let dir = tempfile::tempdir().expect("tempdir");
        let store = seed_and_run(&cfg, dir.path()).expect("reference run");
        let analysis = analyze_store(&store, &cfg).expect("reference analysis");
        let mcs =
            build_characteristics(&store, &cfg, &analysis, 2).expect("modified characteristics");
        Reference {
            _dir: dir,
            cfg,
            store,
            analysis,
            mcs,
        }
    })
}

// ---------------------------------------------------------------- 1

#[test]
fn acceptance_01_expansion_remainder_rates() {
    let spec = skewed_spec();
    // keep the ray well away from the datum's v_center, where the leading
    // moments nearly cancel and the generic rates do not show
    let xi = [0.6, -0.3, 0.2];
    let mut detail = String::new();
    let mut pass = true;
    for n in 0..=3usize {
        let mut series = Vec::new();
        for k in 0..9 {
            let t = 8.0 * 2f64.powf(k as f64 / 2.0);
            let x = [xi[0] * t, xi[1] * t, xi[2] * t];
            let exact = t3_density(&spec, t, x, TOL).unwrap();
            let exp = linear_expansion(&spec, n, t, x, TOL).unwrap();
            series.push((t, (exact - exp.value).abs().max(1e-300)));
        }
        let fit = rate_fit(&series, RateModel::PurePower, "remainder").unwrap();
        let want = -((n + 1) as f64);
        pass &= (fit.exponent - want).abs() < 0.3;
        detail.push_str(&format!("n={n}: slope {:.3} (want {want:.0}); ", fit.exponent));
    }
    report(1, pass, &detail);
}

// ---------------------------------------------------------------- 2

#[test]
fn acceptance_02_conservation_laws() {
    let spec = skewed_spec();
    let vs = [[0.0; 3], [0.7, -0.3, 0.4]];
    let mut worst_abs: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let mut combos: Vec<(MultiIndex, MultiIndex)> = Vec::new();
    for alpha in MultiIndex::up_to(2) {
        for beta in MultiIndex::up_to(1) {
            if alpha.order() + beta.order() <= 3 {
                combos.push((alpha, beta));
            }
        }
    }
    for alpha in MultiIndex::of_order(3) {
        combos.push((alpha, MultiIndex::ZERO));
    }
    for (alpha, beta) in combos {
        for &v in &vs {
            let a0 = conservation_law(&spec, alpha, beta, v, TOL).unwrap();
            scale = scale.max(a0.abs());
            for &t in &[1.0, 10.0, 100.0, 1000.0] {
                let at = conservation_law_evolved(&spec, t, alpha, beta, v, TOL).unwrap();
                worst_abs = worst_abs.max((at - a0).abs());
            }
        }
    }
    let drift = worst_abs / scale;
    report(
        2,
        drift < 1e-8,
        &format!("worst conserved-quantity drift {drift:.3e} of table scale (tol 1e-8)"),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn acceptance_03_coefficient_recovery() {
    // recover every C_alpha, |alpha| <= 3, from density samples alone.
    // orders up to 4 are modeled explicitly (otherwise their projection
    // biases the order-3 block) and a per-point s^-5 nuisance absorbs the
    // next order; only |alpha| <= 3 is scored
    let spec = skewed_spec();
    let alphas: Vec<MultiIndex> = MultiIndex::up_to(4);
    // low-discrepancy cloud in [-0.7, 0.7]^3; needs at least 15 points so
    // the 15 order-4 moment shapes are spatially independent
    let points: Vec<[f64; 3]> = (0..24)
        .map(|i| {
            let frac = |g: f64| (((i + 1) as f64 * g).fract() - 0.5) * 1.4;
            [frac(0.6180339887), frac(0.4142135624), frac(0.3247179572)]
        })
        .collect();
    let times: Vec<f64> = (0..11).map(|k| 16.0 * 2f64.powf(k as f64 / 2.0)).collect();
    let n_unknowns = alphas.len() + points.len();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (i, &xi) in points.iter().enumerate() {
        let moments: Vec<f64> = alphas
            .iter()
            .map(|&a| moment(&spec, a, xi, TOL).unwrap())
            .collect();
        for &t in &times {
            let s = t / times[0];
            let mut row = vec![0.0; n_unknowns];
            for (j, &a) in alphas.iter().enumerate() {
                row[j] = s.powi(-(a.order() as i32)) * moments[j];
            }
            row[alphas.len() + i] = s.powi(-5);
            rows.push(row);
            let x = [xi[0] * t, xi[1] * t, xi[2] * t];
            // rescale by the t0 powers folded into s above
            y.push(t3_density(&spec, t, x, TOL).unwrap());
        }
    }
    // undo the s-normalization per coefficient afterwards
    let fit = least_squares(&rows, &y, 1e10).unwrap();
    let mut worst = 0.0f64;
    for (j, &a) in alphas.iter().enumerate() {
        if a.order() > 3 {
            continue;
        }
        let c_fit = fit.coefficients[j] * times[0].powi(a.order() as i32);
        let c_true = expansion_coefficient(a);
        worst = worst.max((c_fit - c_true).abs() / c_true.abs());
    }
    report(
        3,
        worst < 0.01,
        &format!(
            "worst relative C_alpha error {worst:.3e} over |alpha| <= 3 (tol 1e-2, cond {:.2e})",
            fit.condition
        ),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn acceptance_04_kernel_bound() {
    let xs: Vec<f64> = (0..20).map(|k| 0.35 * k as f64).collect();
    let rep = kernel_bound_check(&xs, 1e-8).unwrap();
    let i0 = kernel_integral(0.0, 1e-10).unwrap();
    let i0_ok = (i0 - 2.0 * std::f64::consts::PI).abs() < 1e-4;
    let mut scaled_ok = true;
    for &(x, s) in &[(0.5, 1.0), (2.0, 3.0), (1.0, 9.0)] {
        let v = kernel_integral_scaled(x, s, 1e-8).unwrap();
        scaled_ok &= v <= KERNEL_BOUND / ((1.0 + s) * (1.0 + s)) + 1e-9;
    }
    report(
        4,
        rep.satisfied && i0_ok && scaled_ok,
        &format!(
            "sup I = {:.5} <= 7 pi = {:.5}; I(0) - 2 pi = {:.2e}; scaled bound {}",
            rep.max_value,
            KERNEL_BOUND,
            i0 - 2.0 * std::f64::consts::PI,
            if scaled_ok { "holds" } else { "violated" }
        ),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn acceptance_05_poisson_radial_oracle() {
    use vplab_core::field::ScalarField3;
    let grid = Grid3::cube(0.0, 6.0, 64);
    let rho = ScalarField3::from_fn(grid, |p| {
        (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])).exp()
    });
    let phi = solve_freespace(&rho).unwrap();
    // shell theorem oracle for the radial gaussian
    let exact = |r: f64| -> f64 {
        let m_in = 4.0 * std::f64::consts::PI
            * integrate_1d(|s| s * s * (-s * s).exp(), 0.0, r, 1e-12).unwrap();
        let outer = 2.0 * std::f64::consts::PI * (-r * r).exp();
        if r < 1e-9 {
            // phi(0) = -(1/4pi) int rho/|y| dy = -int_0^inf s e^{-s^2} ds = -1/2... times 4pi/4pi
            -(integrate_1d(|s| s * (-s * s).exp(), 0.0, 8.0, 1e-12).unwrap())
        } else {
            -(m_in / r + outer) / (4.0 * std::f64::consts::PI)
        }
    };
    let mut worst = 0.0f64;
    let probes: [[f64; 3]; 6] = [
        [0.0, 0.0, 0.0],
        [0.5, 0.0, 0.0],
        [0.7, -0.7, 0.0],
        [1.0, 1.0, 1.0],
        [2.0, 0.5, -1.0],
        [3.0, 0.0, 0.0],
    ];
    for p in probes {
        // compare at the exact grid node so trilinear interpolation error
        // does not enter the solver accuracy measurement
        let idx = grid.nearest(p).unwrap();
        let node = grid.point(idx);
        let r = (node[0] * node[0] + node[1] * node[1] + node[2] * node[2]).sqrt();
        let e = exact(r);
        worst = worst.max((phi.values[idx] - e).abs() / e.abs());
    }
    // monopole: near the box edge phi ~ -M / (4 pi r)
    let mass = std::f64::consts::PI.powf(1.5);
    let edge = [5.0f64, 1.0, 0.5];
    let edge_idx = grid.nearest(edge).unwrap();
    let edge_node = grid.point(edge_idx);
    let r_edge =
        (edge_node[0] * edge_node[0] + edge_node[1] * edge_node[1] + edge_node[2] * edge_node[2])
            .sqrt();
    let mono = -mass / (4.0 * std::f64::consts::PI * r_edge);
    let mono_err = (phi.values[edge_idx] - mono).abs() / mono.abs();
    report(
        5,
        worst < 1e-2 && mono_err < 1e-2,
        &format!("worst interior error {worst:.3e} (tol 1e-2), monopole error {mono_err:.3e} (tol 1e-2)"),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn acceptance_06_linear_limit_and_convergence() {
    // weak-field runs against the identical free-flight ensemble:
    // Q deviation per unit amplitude must scale linearly in amplitude
    let grid = Grid3::cube(0.0, 4.4, 11);
    let make_cfg = |amp: f64, dt: f64, path: ForcePath| {
        let mut cfg = RunConfig::default();
        cfg.initial_data = InitialDataSpec::gaussian(amp);
        cfg.solver = SolverConfig {
            force_path: path,
            dt_cfl: dt,
            t_end: 100.0,
            ..SolverConfig::default()
        };
        cfg.seeding = SeedingConfig { nx: 4, nv: 10 };
        cfg
    };
    let run_q = |cfg: &RunConfig| {
        let ens = seed_particles(&cfg.initial_data, cfg.seeding.nx, cfg.seeding.nv).unwrap();
        let out = run(ens, &cfg.solver, &[], None).unwrap();
        (spatial_average(&out.ensemble, grid, None), out.energies)
    };
    let (q_free, _) = run_q(&make_cfg(1.0, 0.02, ForcePath::None));
    let mut devs = Vec::new();
    for &amp in &[0.1, 0.05, 0.025] {
        let cfg = make_cfg(amp, 0.02, ForcePath::spherical());
        let (q, _) = run_q(&cfg);
        let mut d = 0.0f64;
        for (a, b) in q.values.iter().zip(&q_free.values) {
            d = d.max((a / amp - b).abs());
        }
        devs.push(d);
    }
    let r0 = devs[0] / devs[1];
    let r1 = devs[1] / devs[2];
    let linear_ok = (1.5..=2.8).contains(&r0) && (1.5..=2.8).contains(&r1);

    // energy conservation and its second-order improvement under dt halving
    let drift = |energies: &[vplab_core::integrator::EnergySample]| {
        let e0 = energies[0].total;
        energies
            .iter()
            .map(|e| (e.total - e0).abs())
            .fold(0.0f64, f64::max)
            / e0.abs()
    };
    // identical snapshot schedule for both resolutions so the drift is
    // sampled at the same times
    let sched = snapshot_times(2.0, 100.0, 2);
    let run_drift = |dt: f64| {
        let cfg = make_cfg(0.1, dt, ForcePath::spherical());
        let ens = seed_particles(&cfg.initial_data, 4, 10).unwrap();
        let out = run(ens, &cfg.solver, &sched, None).unwrap();
        drift(&out.energies)
    };
    let d_coarse = run_drift(0.02);
    let d_fine = run_drift(0.01);
    let ratio = d_coarse / d_fine.max(1e-300);
    report(
        6,
        linear_ok && d_coarse < 1e-4 && ratio >= 4.0,
        &format!(
            "amplitude-halving deviation ratios {r0:.2}, {r1:.2} (want ~2); \
             energy drift {d_coarse:.3e} (tol 1e-4); dt-halving improvement {ratio:.2}x (want >= 4)"
        ),
    );
}

// ---------------------------------------------------------------- 7

/// Spherically symmetric datum (1 + c x.v)^2 G(x) G(v): positive, invariant
/// under rotations, and with a nonzero first radial moment so the 1/t force
/// correction is live.  The plain product Gaussian has no x-v correlation
/// and its rescaled force converges faster than 1/t.
fn correlated_spherical(amplitude: f64, c: f64) -> InitialDataSpec {
    let mut terms = vec![MonomialTerm {
        coeff: 1.0,
        x_pow: MultiIndex::ZERO,
        v_pow: MultiIndex::ZERO,
    }];
    for i in 0..3 {
        let mut e = [0u8; 3];
        e[i] = 1;
        let m = MultiIndex::new(e[0], e[1], e[2]);
        terms.push(MonomialTerm { coeff: 2.0 * c, x_pow: m, v_pow: m });
    }
    for i in 0..3 {
        for j in i..3 {
            let mut e = [0u8; 3];
            e[i] += 1;
            e[j] += 1;
            let m = MultiIndex::new(e[0], e[1], e[2]);
            let coeff = if i == j { c * c } else { 2.0 * c * c };
            terms.push(MonomialTerm { coeff, x_pow: m, v_pow: m });
        }
    }
    InitialDataSpec {
        amplitude,
        polynomial_prefactor: terms,
        ..InitialDataSpec::unit_gaussian()
    }
}

#[test]
fn acceptance_07_force_self_similarity() {
    // point values of the rescaled force freeze once the discrete shell
    // structure resolves, so the probes are smeared over velocity bumps:
    // crossings of different lattice shells then spread continuously in t
    // and the continuum 1/t flux survives
    let mut cfg = RunConfig::default();
    cfg.initial_data = correlated_spherical(0.03, 0.8);
    let dir = tempfile::tempdir().unwrap();
    let store = seed_and_run(&cfg, dir.path()).unwrap();
    let centers: [[f64; 3]; 5] = [
        [1.2, 0.0, 0.0],
        [0.0, 1.2, -0.6],
        [-0.6, 0.0, -1.5],
        [0.4, 1.6, 0.4],
        [0.0, -2.0, 0.6],
    ];
    let width = 0.8f64;
    let n = 9;
    let times = store.times();
    let mut series: Vec<Vec<(f64, [f64; 3])>> = vec![Vec::new(); centers.len()];
    for idx in 0..times.len() {
        let ens = store.load(idx).unwrap();
        let t = ens.time;
        if t < 10.0 {
            continue;
        }
        let field =
            vplab_core::integrator::FieldEvaluator::build(&ens, &store.meta.force_path, 0.0, t)
                .unwrap();
        for (ci, c) in centers.iter().enumerate() {
            let mut s = [0.0f64; 3];
            let mut norm = 0.0;
            let h = 3.0 * width / n as f64;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let v = [
                            c[0] + h * (i as f64 - (n - 1) as f64 / 2.0),
                            c[1] + h * (j as f64 - (n - 1) as f64 / 2.0),
                            c[2] + h * (k as f64 - (n - 1) as f64 / 2.0),
                        ];
                        let r2 = (0..3).map(|a| (v[a] - c[a]).powi(2)).sum::<f64>();
                        let kw = (-r2 / (width * width)).exp();
                        norm += kw;
                        let g = field.grad_phi([t * v[0], t * v[1], t * v[2]]);
                        for a in 0..3 {
                            s[a] += kw * t * t * g[a];
                        }
                    }
                }
            }
            for a in 0..3 {
                s[a] /= norm;
            }
            series[ci].push((t, s));
        }
    }
    let mut pass = true;
    let mut detail = String::new();
    let mut sup_all = 0.0f64;
    let mut sup_lim = 0.0f64;
    for (ci, ser) in series.iter().enumerate() {
        let c = centers[ci];
        let cr = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        let radial: Vec<(f64, f64)> = ser
            .iter()
            .map(|(t, s)| (*t, (0..3).map(|a| s[a] * c[a] / cr).sum()))
            .collect();
        for &(_, s) in &radial {
            sup_all = sup_all.max(s.abs());
        }
        // limit extracted by the three-term polyhomogeneous fit over the
        // whole window; the rate is then measured against that limit on
        // the early decade, before the (log t)/t and 1/t terms interfere
        let rows: Vec<Vec<f64>> = radial
            .iter()
            .map(|&(t, _)| vec![1.0, t.ln() / t, 1.0 / t])
            .collect();
        let y: Vec<f64> = radial.iter().map(|&(_, s)| s).collect();
        let fitted = least_squares(&rows, &y, 1e12).unwrap();
        let a_lim = fitted.coefficients[0];
        sup_lim = sup_lim.max(a_lim.abs());
        let dev: Vec<(f64, f64)> = radial
            .iter()
            .filter(|(t, _)| *t <= 130.0)
            .map(|&(t, s)| (t, (s - a_lim).abs().max(1e-300)))
            .collect();
        let fit = rate_fit(&dev, RateModel::PowerWithLog, "smeared force").unwrap();
        pass &= (-1.3..=-0.7).contains(&fit.exponent);
        detail.push_str(&format!("v{ci}: {:.2}; ", fit.exponent));
    }
    let bounded = sup_all <= 2.0 * sup_lim;
    report(
        7,
        bounded && pass,
        &format!(
            "sup_t smeared |t^2 grad phi| = {sup_all:.3e} (bounded by 2x limit {sup_lim:.3e}); \
             probe exponents {detail}(want -1 +- 0.3)"
        ),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn acceptance_08_scattering_field_consistency() {
    let r = reference();
    let g = r.analysis.vgrid;
    let grad_fit = &r.analysis.ray_fit.coefficients[0];
    let mut sup_dev = 0.0f64;
    for idx in 0..g.len() {
        let ijk = g.unflat(idx);
        if (0..3).any(|a| ijk[a] == 0 || ijk[a] + 1 == g.dims[a]) {
            continue;
        }
        let a = r.analysis.asym.grad.value(idx);
        let b = grad_fit.value(idx);
        for c in 0..3 {
            sup_dev = sup_dev.max((a[c] - b[c]).abs());
        }
    }
    let disc = poisson_discretization_bar(&r.analysis.asym).unwrap();
    let budget = disc
        + 3.0 * (r.analysis.ray_fit.max_std_errs[0] + r.analysis.scattering.max_std_err);
    report(
        8,
        sup_dev <= budget,
        &format!(
            "two grad phi_infty estimators differ by {sup_dev:.3e}; \
             error budget {budget:.3e} (discretization {disc:.3e})"
        ),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn acceptance_09_cauchy_ordering() {
    let r = reference();
    let ga = Grid3::cube(0.0, 4.5, 5);
    let gb = Grid3::cube(0.0, 3.0, 6);
    let times = r.store.times();
    let per = r.cfg.snapshots.per_octave;
    // doubling pairs ending at the last three snapshots of the run
    let last = times.len() - 1;
    let pairs = [(last - 2 * per, last - per), (last - per, last)];
    let mut d = [[0.0f64; 2]; 3];
    for (n, mc) in r.mcs.iter().enumerate() {
        for (pi, &(i, j)) in pairs.iter().enumerate() {
            let ei = r.store.load(i).unwrap();
            let ej = r.store.load(j).unwrap();
            let hi = modified_histogram(mc, &ei, ga, gb, 0.02).unwrap();
            let hj = modified_histogram(mc, &ej, ga, gb, 0.02).unwrap();
            d[n][pi] = sup_diff(&hi, &hj);
        }
    }
    let mut pass = true;
    for pi in 0..2 {
        pass &= d[1][pi] < d[0][pi] && d[2][pi] <= 1.05 * d[1][pi];
    }
    report(
        9,
        pass,
        &format!(
            "sup |g_n(2t) - g_n(t)|: order 0 {:?}, order 1 {:?}, order 2 {:?} (want decreasing in n)",
            d[0], d[1], d[2]
        ),
    );
}

// ---------------------------------------------------------------- 10

#[test]
fn acceptance_10_corrected_averages() {
    let r = reference();
    let chi = TestFunction {
        center: [0.0; 3],
        width: 1.2,
    };
    let opts = ProfileAverageOptions::default();
    let mut raw = Vec::new();
    let mut corrected = Vec::new();
    for &idx in &r.analysis.window {
        let ens = r.store.load(idx).unwrap();
        let direct: f64 = ens
            .velocities
            .iter()
            .zip(&ens.weights)
            .map(|(v, w)| w * chi.eval(*v, MultiIndex::ZERO))
            .sum();
        raw.push((ens.time, direct));
        corrected.push((
            ens.time,
            modified_profile_average(&r.mcs[1], &ens, &chi, &opts).unwrap(),
        ));
    }
    let limit = corrected.last().unwrap().1;
    let n = corrected.len() - 1;
    let fit_raw = weak_convergence_test(&raw[..n], limit, "raw average").unwrap();
    // the corrected residual carries log^2 t factors; profile them out as
    // in the first-order density criterion
    let corr_dev: Vec<(f64, f64)> = corrected[..n]
        .iter()
        .map(|&(t, s)| (t, (s - limit).abs().max(1e-300)))
        .collect();
    let fit_corr = rate_fit(&corr_dev, RateModel::PowerWithLogSq, "corrected average").unwrap();
    let pass = (-1.3..=-0.7).contains(&fit_raw.rate.exponent) && fit_corr.exponent <= -1.5;
    report(
        10,
        pass,
        &format!(
            "uncorrected average converges at exponent {:.2} (want -1 +- 0.3), \
             corrected at {:.2} (want <= -1.5)",
            fit_raw.rate.exponent, fit_corr.exponent
        ),
    );
}

// ---------------------------------------------------------------- 11

#[test]
fn acceptance_11_first_order_density() {
    let r = reference();
    let mu = r.cfg.solver.mu;
    let k = TestFunction {
        center: [0.3, -0.2, 0.1],
        width: 1.2,
    };
    let mc1 = &r.mcs[1];
    let q_inf = &r.analysis.scattering.q_infty;
    let grad_inf = &r.analysis.asym.grad;
    let last = r.store.load(*r.analysis.window.last().unwrap()).unwrap();
    let avg = |f: &(dyn Fn([f64; 3], [f64; 3]) -> f64 + Sync)| {
        modified_label_average(mc1, &last, f, false, 0.01).unwrap()
    };
    let l_k = avg(&|_a, b| k.eval(b, MultiIndex::ZERO));
    let d_k = avg(&|_a, b| q_inf.gather(b) * k.eval(b, MultiIndex::ZERO));
    let m_k = -avg(&|a, b| {
        (0..3)
            .map(|c| {
                let mut e = [0u8; 3];
                e[c] = 1;
                a[c] * k.eval(b, MultiIndex::new(e[0], e[1], e[2]))
            })
            .sum::<f64>()
    });
    let e_k = -avg(&|_a, b| {
        let gk: f64 = (0..3)
            .map(|c| {
                let mut e = [0u8; 3];
                e[c] = 1;
                grad_inf.gather(b)[c] * k.eval(b, MultiIndex::new(e[0], e[1], e[2]))
            })
            .sum();
        k.eval(b, MultiIndex::ZERO) * q_inf.gather(b) + gk
    });

    let mut resid0 = Vec::new();
    let mut resid1 = Vec::new();
    for &idx in &r.analysis.window {
        let ens = r.store.load(idx).unwrap();
        let t = ens.time;
        let s: f64 = ens
            .positions
            .iter()
            .zip(&ens.weights)
            .map(|(x, w)| w * k.eval([x[0] / t, x[1] / t, x[2] / t], MultiIndex::ZERO))
            .sum();
        let lg = t.ln() + 1.0;
        let predicted = l_k - mu * lg / t * d_k - m_k / t - mu * lg / t * e_k;
        resid0.push((t, (s - l_k).abs().max(1e-300)));
        resid1.push((t, (s - predicted).abs().max(1e-300)));
    }
    let fit0 = rate_fit(&resid0, RateModel::PowerWithLog, "zeroth order").unwrap();
    let fit1 = rate_fit(&resid1, RateModel::PowerWithLogSq, "first order").unwrap();
    let pass = (-1.3..=-0.7).contains(&fit0.exponent) && fit1.exponent <= -1.5;
    report(
        11,
        pass,
        &format!(
            "smeared density residual: zeroth-order exponent {:.2} (want -1 +- 0.3), \
             first-order exponent {:.2} (want <= -1.5)",
            fit0.exponent, fit1.exponent
        ),
    );
}

// ---------------------------------------------------------------- 12

#[test]
fn acceptance_12_density_force_link() {
    let r = reference();
    let d = &r.analysis.density_fit;
    let f = &r.analysis.xi_force_fit;
    let density_terms: Vec<(usize, usize, &_)> = d
        .terms
        .iter()
        .zip(&d.coefficients)
        .map(|(&(q, p), c)| (q, p, c))
        .collect();
    let force_terms: Vec<(usize, usize, &_)> = f
        .terms
        .iter()
        .zip(&f.coefficients)
        .map(|(&(q, p), c)| (q, p, c))
        .collect();
    let link = density_force_link(&density_terms, &force_terms).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for (i, e) in link.entries.iter().enumerate() {
        // the solve on the coarse xi grid carries its own discretization
        // error; bound it by the half-resolution re-solve difference
        let dens_field = density_terms[i].2;
        let grad = vplab_core::poisson::gradient(&solve_freespace(dens_field).unwrap());
        let disc = vplab_core::pipeline::gradient_solve_bar(dens_field, &grad).unwrap();
        let budget = 0.15 * e.force_scale + disc + 3.0 * (d.max_std_errs[i] + f.max_std_errs[i]);
        pass &= e.sup_deviation < budget;
        detail.push_str(&format!(
            "(q={},p={}): {:.2e} vs {:.2e}; ",
            e.q, e.p, e.sup_deviation, budget
        ));
    }
    report(
        12,
        pass && link.entries.len() == 3,
        &format!("term-by-term Poisson link deviations vs budgets: {detail}"),
    );
}

// ---------------------------------------------------------------- 13

#[test]
fn acceptance_13_weak_convergence() {
    // linear leg by quadrature: generic datum so the 1/t correction is live
    let spec = skewed_spec();
    let vbar = [0.5, 0.1, -0.1];
    // keep the test bump's center well away from the datum's so the 1/t
    // correction coefficient is O(1); nearly aligned centers leave the
    // residual dominated by 1/t^2 across the whole window
    let test = InitialDataSpec {
        x_center: [-0.5, 0.4, -0.4],
        v_center: [0.1, 0.0, 0.1],
        ..InitialDataSpec::unit_gaussian()
    };
    let beta = MultiIndex::ZERO;
    let limit = linear_weak_limit(&spec, beta, vbar, &test, TOL).unwrap();
    let mut series = Vec::new();
    for k in 0..10 {
        let t = 10.0 * 2f64.powf(k as f64 / 2.0);
        series.push((t, weak_series(&spec, beta, vbar, &test, t, TOL).unwrap()));
    }
    let rep = weak_convergence_test(&series, limit, "linear weak").unwrap();
    let at_100 = series
        .iter()
        .min_by(|a, b| (a.0 - 100.0).abs().total_cmp(&(b.0 - 100.0).abs()))
        .unwrap();
    let rel_100 = (at_100.1 - limit).abs() / limit.abs();
    let linear_ok = rel_100 < 0.02 && (-1.3..=-0.7).contains(&rep.rate.exponent);

    // nonlinear leg on the reference run with an off-center test bump
    let r = reference();
    let chi = TestFunction {
        center: [0.5, 0.0, -0.3],
        width: 1.0,
    };
    let opts = ProfileAverageOptions::default();
    let mut avg = Vec::new();
    for &idx in &r.analysis.window {
        let ens = r.store.load(idx).unwrap();
        avg.push((
            ens.time,
            modified_profile_average(&r.mcs[1], &ens, &chi, &opts).unwrap(),
        ));
    }
    let (t_last, s_last) = *avg.last().unwrap();
    let rep_nl = weak_convergence_test(&avg[..avg.len() - 1], s_last, "nonlinear weak").unwrap();
    let nonlinear_ok = rep_nl.rate.exponent < -0.6;
    report(
        13,
        linear_ok && nonlinear_ok,
        &format!(
            "linear leg: |s(100) - limit|/limit = {rel_100:.3e} (tol 2e-2), exponent {:.2} \
             (want -1 +- 0.3); nonlinear leg: residual exponent {:.2} toward s({t_last:.0})",
            rep.rate.exponent, rep_nl.rate.exponent
        ),
    );
}
