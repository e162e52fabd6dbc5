//! Refinement studies: Barenblatt profile, linear heat mode and the discrete
//! Itô energy budget.

use rayon::ThreadPool;
use serde_json::json;
use spme_core::estimators::EnsembleConfig;
use spme_core::sigma::SigmaSpec;
use spme_core::solver::{l1_distance, run_deterministic, Barenblatt, DtPolicy, SolverConfig, TrackOptions};
use spme_core::spectral::{dst_forward, eigenvalue, SpectralCoeffs};

use super::Outcome;
use crate::config::{Config, ConvergenceSettings};
use crate::error::CliError;
use crate::format::Csv;
use crate::manifest::OutputDir;
use crate::parallel;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub study: String,
    pub grid: usize,
    /// `None` for adaptive stepping.
    pub dt: Option<f64>,
    pub error: f64,
    /// Previous error over this one.
    pub ratio: Option<f64>,
}

fn core<T>(r: spme_core::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::from_core_config)
}

fn with_ratios(study: &str, rows: Vec<(usize, Option<f64>, f64)>) -> Vec<StudyRow> {
    let mut prev: Option<f64> = None;
    rows.into_iter()
        .map(|(grid, dt, error)| {
            let ratio = prev.map(|p| p / error);
            prev = Some(error);
            StudyRow {
                study: study.to_string(),
                grid,
                dt,
                error,
                ratio,
            }
        })
        .collect()
}

/// L¹ error at `barenblatt_time` against the exact source solution for each
/// grid, deterministic and with small viscosity.
pub fn barenblatt_study(
    pool: &ThreadPool,
    m: f64,
    c: &ConvergenceSettings,
) -> Result<Vec<StudyRow>, CliError> {
    let b = core(Barenblatt::new(m, c.barenblatt_t0, 0.5, c.barenblatt_mass))?;
    if !b.fits_inside(c.barenblatt_time) {
        return Err(CliError::config(
            "Barenblatt support reaches the boundary before the final time",
        ));
    }
    let errors = parallel::map_indexed(pool, c.barenblatt_grids.len(), |i| {
        let len = c.barenblatt_grids[i];
        let mut cfg = SolverConfig::new(m, c.barenblatt_nu, len, c.barenblatt_time);
        cfg.dt_policy = DtPolicy::adaptive(c.barenblatt_dt_max);
        let v0 = dst_forward(&core(b.sample(0.0, len))?);
        let tr = core(run_deterministic(&cfg, &v0))?;
        let exact = core(b.sample(c.barenblatt_time, len))?;
        Ok::<_, CliError>((len, None, l1_distance(&tr.last().v, &exact)))
    });
    Ok(with_ratios(
        "barenblatt",
        errors.into_iter().collect::<Result<_, _>>()?,
    ))
}

/// `e¹` under `∂ₜv = ν∂²ₓv` with fixed steps against `(1 + νλ₁dt)^{-steps}`.
pub fn linear_mode_study(m: f64, c: &ConvergenceSettings) -> Result<Vec<StudyRow>, CliError> {
    let horizon = c.linear_dt * c.linear_steps as f64;
    let mut cfg = SolverConfig::new(m, c.linear_nu, c.linear_grid, horizon);
    cfg.nonlinear_gain = 0.0;
    cfg.dt_policy = DtPolicy::Fixed(c.linear_dt);
    let v0 = SpectralCoeffs::basis(c.linear_grid, 1);
    let tr = core(run_deterministic(&cfg, &v0))?;
    let last = tr.last();
    if last.step != c.linear_steps {
        return Err(CliError::science(format!(
            "linear mode took {} steps instead of {}",
            last.step, c.linear_steps
        )));
    }
    let factor = (1.0 + c.linear_nu * eigenvalue(1) * c.linear_dt).powi(-(c.linear_steps as i32));
    let error = last
        .vhat
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, &a)| (a - if i == 0 { factor } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    Ok(vec![StudyRow {
        study: "linear_mode".into(),
        grid: c.linear_grid,
        dt: Some(c.linear_dt),
        error,
        ratio: None,
    }])
}

/// Mean over paths of the largest per-step budget residual, for `dt`,
/// `dt/2`, … on one deterministic and one stochastic configuration.
pub fn budget_study(
    pool: &ThreadPool,
    config: &Config,
    c: &ConvergenceSettings,
) -> Result<Vec<StudyRow>, CliError> {
    let seed = config.seed()?;
    let base = config.solver()?;
    let mut rows = Vec::new();
    for (name, stochastic) in [("budget_deterministic", false), ("budget_stochastic", true)] {
        let mut levels = Vec::new();
        for l in 0..c.budget_levels {
            let dt = c.budget_dt / 2f64.powi(l as i32);
            let mut cfg = SolverConfig::new(base.m, base.nu, c.budget_grid, c.budget_horizon);
            cfg.n_modes = base.n_modes.min(c.budget_grid);
            cfg.gamma_track = base.gamma_track;
            cfg.oversample = base.oversample;
            cfg.nonlinear_gain = base.nonlinear_gain;
            cfg.dt_policy = DtPolicy::Fixed(dt);
            cfg.sigma = if stochastic {
                base.sigma.clone()
            } else {
                SigmaSpec::zero()
            };
            core(cfg.validate())?;
            let v0 = config.initial(&cfg)?;
            let paths = if stochastic && !cfg.is_deterministic() {
                c.budget_paths.max(1)
            } else {
                1
            };
            let ens = EnsembleConfig::new(paths, cfg, seed, v0);
            let opts = TrackOptions {
                budget: true,
                integrals: false,
            };
            let trs = core(parallel::trajectories(pool, &ens, paths, opts))?;
            if trs.iter().any(|t| t.blowup) {
                return Err(CliError::science(format!("{name}: a path blew up at dt = {dt}")));
            }
            let mean = trs
                .iter()
                .map(|t| {
                    t.budget
                        .as_ref()
                        .expect("budget tracked")
                        .summary()
                        .max_abs_residual
                })
                .sum::<f64>()
                / paths as f64;
            levels.push((c.budget_grid, Some(dt), mean));
        }
        rows.extend(with_ratios(name, levels));
    }
    Ok(rows)
}

fn monotone_decreasing(rows: &[StudyRow], study: &str) -> bool {
    rows.iter()
        .filter(|r| r.study == study)
        .all(|r| r.ratio.is_none_or(|q| q > 1.0))
}

pub fn run_studies(pool: &ThreadPool, config: &Config) -> Result<(Vec<StudyRow>, Vec<String>), CliError> {
    let c = config.convergence()?;
    let m: f64 = config.get("solver", "m")?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for study in &c.studies {
        match study.as_str() {
            "barenblatt" => {
                let r = barenblatt_study(pool, m, &c)?;
                if !monotone_decreasing(&r, "barenblatt") {
                    failures.push("Barenblatt L1 error does not decrease under refinement".into());
                }
                rows.extend(r);
            }
            "linear_mode" => {
                let r = linear_mode_study(m, &c)?;
                if r[0].error > 1e-12 {
                    failures.push(format!("linear mode error {} exceeds 1e-12", r[0].error));
                }
                rows.extend(r);
            }
            "budget" => {
                let r = budget_study(pool, config, &c)?;
                for s in ["budget_deterministic", "budget_stochastic"] {
                    if !monotone_decreasing(&r, s) {
                        failures.push(format!("{s}: residual does not decrease with dt"));
                    }
                }
                rows.extend(r);
            }
            other => return Err(CliError::config(format!("unknown convergence study `{other}`"))),
        }
    }
    Ok((rows, failures))
}

pub fn cmd_convergence(pool: &ThreadPool, config: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let (rows, failures) = run_studies(pool, config)?;
    let mut csv = Csv::new(&["study", "grid", "dt", "error", "ratio"]);
    for r in &rows {
        csv.row(&[
            r.study.as_str().into(),
            r.grid.into(),
            r.dt.into(),
            r.error.into(),
            r.ratio.into(),
        ]);
    }
    out.write("convergence.csv", &csv.into_bytes())?;
    let summary = json!({
        "rows": rows.len(),
        "failures": failures,
    });
    Ok(Outcome { failures, summary })
}
