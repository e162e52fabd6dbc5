//! Monte Carlo ensemble statistics, decay fit and temporal regularity.

use rayon::ThreadPool;
use serde_json::json;
use spme_core::estimators::{fit_decay, DecayFit, EnsembleEstimate, HolderExponent};

use super::Outcome;
use crate::config::{Config, FitSettings};
use crate::error::CliError;
use crate::format::Csv;
use crate::manifest::OutputDir;
use crate::parallel;

pub fn ensemble_csv(est: &EnsembleEstimate) -> Csv {
    let mut csv = Csv::new(&[
        "t",
        "functional",
        "mean",
        "variance",
        "ci_half_width",
        "paths",
        "blowups",
    ]);
    for s in &est.series {
        let name = s.functional.to_string();
        for (i, &t) in est.times.iter().enumerate() {
            csv.row(&[
                t.into(),
                name.as_str().into(),
                s.mean[i].into(),
                s.variance[i].into(),
                s.ci_half_width[i].into(),
                est.used_paths().into(),
                est.blowup_count.into(),
            ]);
        }
    }
    csv
}

pub fn fits_csv(fits: &[(String, DecayFit, f64)]) -> Csv {
    let mut csv = Csv::new(&[
        "functional",
        "t_lo",
        "t_hi",
        "slope",
        "intercept",
        "r_squared",
        "target_slope",
    ]);
    for (name, f, target) in fits {
        csv.row(&[
            name.as_str().into(),
            f.t_lo.into(),
            f.t_hi.into(),
            f.slope.into(),
            f.intercept.into(),
            f.r_squared.into(),
            (*target).into(),
        ]);
    }
    csv
}

pub fn run_fit(est: &EnsembleEstimate, fit: &FitSettings) -> Result<DecayFit, CliError> {
    if est.series(&fit.functional).is_none() {
        return Err(CliError::config(format!(
            "fit functional `{}` is not tracked",
            fit.functional
        )));
    }
    fit_decay(est, &fit.functional, fit.window).map_err(CliError::from_core_config)
}

pub fn cmd_estimate(pool: &ThreadPool, config: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let cfg = config.ensemble(config.seed()?)?;
    let fit = config.fit(cfg.solver.m)?;
    let est = parallel::run_ensemble(pool, &cfg).map_err(CliError::from_core)?;

    out.write("ensemble.csv", &ensemble_csv(&est).into_bytes())?;
    let mut fits = Vec::new();
    if let Some(f) = &fit {
        fits.push((f.functional.clone(), run_fit(&est, f)?, f.target_slope));
    }
    out.write("fits.csv", &fits_csv(&fits).into_bytes())?;
    if let Some(h) = &est.holder {
        let mut csv = Csv::new(&["lag", "tau", "structure"]);
        for (&l, &s) in h.lags.iter().zip(&h.structure) {
            csv.row(&[l.into(), (l as f64 * h.record_dt).into(), s.into()]);
        }
        out.write("holder.csv", &csv.into_bytes())?;
    }

    let mut failures = Vec::new();
    if let Some(t) = &est.power_regularity {
        if t.violations > 0 {
            failures.push(format!(
                "power-regularity bound violated at {} of {} records",
                t.violations, t.checked
            ));
        }
    }
    let g = cfg.solver.gamma_track;
    let sup_mean = est
        .series(&format!("hgamma_sq[{g:?}]"))
        .map(|s| s.mean.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let holder = est.holder.as_ref().map(|h| match h.exponent {
        HolderExponent::Value(v) => json!({"epsilon": h.epsilon, "exponent": v}),
        HolderExponent::Flat => json!({"epsilon": h.epsilon, "exponent": "flat"}),
    });
    let summary = json!({
        "paths": est.path_count,
        "blowups": est.blowup_count,
        "sup_t_mean_hgamma_sq": sup_mean,
        "sup_functionals": "maximum over the record grid, an under-estimate of the continuous-time supremum",
        "power_regularity": est.power_regularity.map(|t| json!({
            "checked": t.checked,
            "violations": t.violations,
            "max_ratio": t.max_ratio,
        })),
        "holder": holder,
        "fits": fits.iter().map(|(n, f, target)| json!({
            "functional": n,
            "slope": f.slope,
            "target_slope": target,
            "r_squared": f.r_squared,
        })).collect::<Vec<_>>(),
    });
    out.write_json("estimate.json", &summary)?;
    Ok(Outcome { failures, summary })
}
