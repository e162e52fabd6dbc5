//! One SPDE path with its energy budget and snapshots.

use serde_json::json;
use spme_core::estimators::noise_config;
use spme_core::noise::derive_stream;
use spme_core::solver::{Solver, TrackOptions, Trajectory};

use super::Outcome;
use crate::config::Config;
use crate::error::CliError;
use crate::format::{self, Csv};
use crate::manifest::OutputDir;

pub fn trajectory_csv(tr: &Trajectory) -> Csv {
    let mut csv = Csv::new(&[
        "t",
        "step",
        "hgamma_sq",
        "lm1_pow",
        "power_h1g_sq",
        "lm1_integral",
        "power_integral",
        "blowup",
    ]);
    for r in &tr.records {
        csv.row(&[
            r.t.into(),
            r.step.into(),
            r.hgamma_sq.into(),
            r.lm1_pow.into(),
            r.power_h1g_sq.into(),
            r.lm1_integral.into(),
            r.power_integral.into(),
            r.blowup.into(),
        ]);
    }
    csv
}

pub fn budget_csv(tr: &Trajectory) -> Option<Csv> {
    let budget = tr.budget.as_ref()?;
    let mut csv = Csv::new(&[
        "t",
        "dt",
        "d_norm",
        "drift_visc",
        "drift_nl",
        "ito_correction",
        "martingale",
        "residual",
    ]);
    for s in &budget.steps {
        csv.row(&[
            s.t.into(),
            s.dt.into(),
            s.d_norm.into(),
            s.drift_visc.into(),
            s.drift_nl.into(),
            s.ito_correction.into(),
            s.martingale.into(),
            s.residual.into(),
        ]);
    }
    Some(csv)
}

pub fn cmd_simulate(config: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let seed = config.seed()?;
    let cfg = config.solver()?;
    let v0 = config.initial(&cfg)?;
    let path: u64 = config.get("simulate", "path")?;
    let with_budget: bool = config.get("simulate", "budget")?;
    let with_snapshots: bool = config.get("simulate", "snapshots")?;
    let stream = derive_stream(noise_config(&cfg, seed, path)).map_err(CliError::from_core_config)?;
    let solver = Solver::new(cfg).map_err(CliError::from_core_config)?;
    let tr = solver.run_path(
        &v0,
        Some(&stream),
        TrackOptions {
            budget: with_budget,
            integrals: true,
        },
    );

    out.write("trajectory.csv", &trajectory_csv(&tr).into_bytes())?;
    if let Some(csv) = budget_csv(&tr) {
        out.write("budget.csv", &csv.into_bytes())?;
    }
    if with_snapshots {
        out.write("snapshots.bin", &format::snapshots(&tr.records))?;
    }
    let budget = tr.budget.as_ref().map(|b| {
        let s = b.summary();
        json!({
            "max_abs_residual": s.max_abs_residual,
            "cumulative_residual": s.cumulative_residual,
            "steps": s.steps,
        })
    });
    let last = tr.last();
    let summary = json!({
        "path": path,
        "steps": tr.steps,
        "blowup": tr.blowup,
        "final_time": last.t,
        "final_hgamma_sq": last.hgamma_sq,
        "budget": budget,
    });
    let failures = if tr.blowup {
        vec![format!("path {path} blew up before t = {}", last.t)]
    } else {
        Vec::new()
    };
    Ok(Outcome { failures, summary })
}
