//! Pass/fail verdicts for asymptotic statements: log-aware decay-rate fits,
//! sequential tail-coefficient peel-off, the velocity-space Poisson link
//! between density and force expansion coefficients, and weak-convergence
//! checks.  Reports serialize to JSON with the generating config hash.

use crate::error::{Result, VpError};
use crate::field::{ScalarField3, VectorField3};
use crate::lsq::{least_squares, DEFAULT_CONDITION_LIMIT};
use crate::poisson::{gradient, solve_freespace};
use serde::{Deserialize, Serialize};
use std::io::{BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    PurePower,
    PowerWithLog,
    PowerWithLogSq,
}

impl RateModel {
    fn max_log_power(self) -> usize {
        match self {
            RateModel::PurePower => 0,
            RateModel::PowerWithLog => 1,
            RateModel::PowerWithLogSq => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFitReport {
    pub quantity: String,
    pub model: RateModel,
    /// series ~ C t^exponent log^{log_power} t
    pub exponent: f64,
    pub log_power: usize,
    pub exponent_std_err: f64,
    pub rms_residual: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Fit |value| ~ C t^e log^p t over the sampled window.  The log power is
/// profiled over 0..=max for the chosen model and the residual-minimizing p
/// is reported; log powers are not asserted downstream, only recorded.
pub fn rate_fit(series: &[(f64, f64)], model: RateModel, quantity: &str) -> Result<RateFitReport> {
    if series.len() < 6 {
        return Err(VpError::InvalidArgument(format!(
            "rate fit for {quantity} needs at least 6 points, got {}",
            series.len()
        )));
    }
    let t_min = series.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_max = series.iter().map(|p| p.0).fold(0.0f64, f64::max);
    if t_max < 10.0 * t_min {
        return Err(VpError::InvalidArgument(format!(
            "rate fit for {quantity} needs a decade of times, got [{t_min}, {t_max}]"
        )));
    }
    for &(t, v) in series {
        if t <= 1.0 {
            return Err(VpError::InvalidArgument(
                "rate fit times must exceed 1".into(),
            ));
        }
        if v <= 0.0 {
            return Err(VpError::InvalidArgument(format!(
                "nonpositive series value {v} at t = {t} in rate fit for {quantity}"
            )));
        }
    }
    let rows: Vec<Vec<f64>> = series.iter().map(|&(t, _)| vec![1.0, t.ln()]).collect();
    let mut best: Option<(usize, crate::lsq::LsqFit)> = None;
    for p in 0..=model.max_log_power() {
        let y: Vec<f64> = series
            .iter()
            .map(|&(t, v)| v.ln() - p as f64 * t.ln().ln())
            .collect();
        let fit = least_squares(&rows, &y, DEFAULT_CONDITION_LIMIT)?;
        if best
            .as_ref()
            .map(|(_, b)| fit.rms_residual < b.rms_residual)
            .unwrap_or(true)
        {
            best = Some((p, fit));
        }
    }
    let (log_power, fit) = best.unwrap();
    Ok(RateFitReport {
        quantity: quantity.to_string(),
        model,
        exponent: fit.coefficients[1],
        log_power,
        exponent_std_err: fit.std_errors[1],
        rms_residual: fit.rms_residual,
        window: (t_min, t_max),
        n_points: series.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkEntry {
    pub q: usize,
    pub p: usize,
    /// sup over interior cells of |grad_v Phi - force coefficient|
    pub sup_deviation: f64,
    /// sup norm of the force coefficient, for relative scaling
    pub force_scale: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkReport {
    pub entries: Vec<LinkEntry>,
}

/// For each shared (q, p) term, solve lap_v Phi = F with the free-space
/// solver and compare grad_v Phi against the force fit's coefficient field;
/// two independent estimators of the same object.  Boundary cells are
/// excluded (one-sided gradient stencils there are less accurate).
pub fn density_force_link(
    density_terms: &[(usize, usize, &ScalarField3)],
    force_terms: &[(usize, usize, &VectorField3)],
) -> Result<LinkReport> {
    let mut entries = Vec::new();
    for &(q, p, dens) in density_terms {
        let Some(&(_, _, force)) = force_terms.iter().find(|&&(fq, fp, _)| fq == q && fp == p)
        else {
            continue;
        };
        if force.grid != dens.grid {
            return Err(VpError::InvalidArgument(format!(
                "grid mismatch between density and force coefficients at (q={q}, p={p})"
            )));
        }
        let phi = solve_freespace(dens)?;
        let grad = gradient(&phi);
        let grid = dens.grid;
        let mut sup = 0.0f64;
        let mut scale = 0.0f64;
        for cell in 0..grid.len() {
            let [i, j, k] = grid.unflat(cell);
            let interior = (1..grid.dims[0] - 1).contains(&i)
                && (1..grid.dims[1] - 1).contains(&j)
                && (1..grid.dims[2] - 1).contains(&k);
            if !interior {
                continue;
            }
            for comp in 0..3 {
                let d = (grad.components[comp][cell] - force.components[comp][cell]).abs();
                sup = sup.max(d);
                scale = scale.max(force.components[comp][cell].abs());
            }
        }
        entries.push(LinkEntry {
            q,
            p,
            sup_deviation: sup,
            force_scale: scale,
        });
    }
    Ok(LinkReport { entries })
}

#[derive(Debug, Clone, Serialize)]
pub struct TailEntry {
    pub level: usize,
    pub x: [f64; 3],
    pub predicted: f64,
    pub fitted: f64,
    pub abs_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailComparison {
    pub order: usize,
    pub entries: Vec<TailEntry>,
    /// final peeled residual, scaled by t^order, at the last window time
    pub final_scaled_residual: f64,
}

/// Sequential peel-off of the late-time tail t^3 rho(t, x) ~ sum_k P_k(x)/t^k:
/// at each x point, fit the level-k coefficient of the running residual
/// (with a 1/t nuisance term), subtract it, and move to the next level.
/// `measure` supplies t^3 rho(t, x); `predict` supplies the coefficient
/// P_k(x) from the conservation-law side.
pub fn tail_table(
    measure: impl Fn(f64, [f64; 3]) -> Result<f64>,
    predict: impl Fn(usize, [f64; 3]) -> Result<f64>,
    order: usize,
    x_points: &[[f64; 3]],
    window: &[f64],
) -> Result<TailComparison> {
    if window.len() < order + 4 {
        return Err(VpError::InvalidArgument(
            "tail window needs more times than levels".into(),
        ));
    }
    let mut entries = Vec::new();
    let mut worst_final = 0.0f64;
    for &x in x_points {
        let mut series: Vec<(f64, f64)> = Vec::new();
        for &t in window {
            series.push((t, measure(t, x)?));
        }
        let mut residual: Vec<f64> = series.iter().map(|p| p.1).collect();
        for level in 0..=order {
            // residual * t^level ~ c + (two nuisance orders)/t, /t^2
            let rows: Vec<Vec<f64>> = series
                .iter()
                .map(|&(t, _)| vec![1.0, 1.0 / t, 1.0 / (t * t)])
                .collect();
            let y: Vec<f64> = series
                .iter()
                .zip(&residual)
                .map(|(&(t, _), &r)| r * t.powi(level as i32))
                .collect();
            let fit = least_squares(&rows, &y, DEFAULT_CONDITION_LIMIT)?;
            let fitted = fit.coefficients[0];
            let predicted = predict(level, x)?;
            entries.push(TailEntry {
                level,
                x,
                predicted,
                fitted,
                abs_deviation: (fitted - predicted).abs(),
            });
            for (r, &(t, _)) in residual.iter_mut().zip(&series) {
                *r -= fitted / t.powi(level as i32);
            }
        }
        let (t_last, _) = *series.last().unwrap();
        worst_final = worst_final.max(residual.last().unwrap().abs() * t_last.powi(order as i32));
    }
    Ok(TailComparison {
        order,
        entries,
        final_scaled_residual: worst_final,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakReport {
    pub quantity: String,
    pub limit_expected: f64,
    pub series_final: f64,
    pub final_deviation: f64,
    pub rate: RateFitReport,
}

/// Compare a weak-convergence series s(t) against its expected limit and
/// rate-fit the deviation |s(t) - limit|.
pub fn weak_convergence_test(
    series: &[(f64, f64)],
    limit: f64,
    quantity: &str,
) -> Result<WeakReport> {
    let deviations: Vec<(f64, f64)> = series
        .iter()
        .map(|&(t, s)| (t, (s - limit).abs().max(1e-300)))
        .collect();
    let rate = rate_fit(&deviations, RateModel::PowerWithLog, quantity)?;
    let &(_, s_final) = series.last().unwrap();
    Ok(WeakReport {
        quantity: quantity.to_string(),
        limit_expected: limit,
        series_final: s_final,
        final_deviation: (s_final - limit).abs(),
        rate,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub tag: String,
    pub pass: bool,
    pub summary: String,
    pub measured: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictSet {
    pub config_hash: String,
    pub verdicts: Vec<Verdict>,
}

impl VerdictSet {
    pub fn new(config_hash: &str) -> Self {
        VerdictSet {
            config_hash: config_hash.to_string(),
            verdicts: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        tag: &str,
        pass: bool,
        summary: String,
        measured: serde_json::Value,
    ) {
        self.verdicts.push(Verdict {
            tag: tag.to_string(),
            pass,
            summary,
            measured,
        });
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "tag,pass,summary,config_hash")?;
        for v in &self.verdicts {
            writeln!(
                w,
                "{},{},\"{}\",{}",
                v.tag,
                if v.pass { "PASS" } else { "FAIL" },
                v.summary.replace('"', "'"),
                self.config_hash
            )?;
        }
        Ok(())
    }
}
