//! Branching particle runs and their comparison with the SPDE.

use rayon::ThreadPool;
use serde_json::json;
use spme_core::estimators::EnsembleConfig;
use spme_core::particles::{
    compare_to_spde, empirical_measure, sample_positions, Band, ComparisonReport, ParticleRun, SpdeSample,
};
use spme_core::sigma::SigmaSpec;
use spme_core::solver::{DtPolicy, SolverConfig, TrackOptions};

use super::Outcome;
use crate::config::{bump_coeffs, bump_shape, Config, ParticleSettings};
use crate::error::CliError;
use crate::format::{self, Cell, Csv};
use crate::manifest::OutputDir;
use crate::parallel;

pub struct ParticleStudy {
    pub runs: Vec<ParticleRun>,
    pub comparison: Option<ComparisonReport>,
    pub spde_blowups: usize,
    /// First record time at which a particle left `(0, 1)`.
    pub boundary_contact: Option<f64>,
}

/// Bump amplitude carrying mass `total_mass`.
pub fn bump_amplitude(s: &ParticleSettings) -> f64 {
    0.75 * s.total_mass / s.half_width
}

/// Noise intensity `c` of the matching SPDE: `c² = rate · Var(offspring) / N`.
pub fn matched_noise(s: &ParticleSettings) -> f64 {
    (s.cfg.rate() * s.cfg.offspring.variance() / s.cfg.n_scale as f64).sqrt()
}

/// `m = 2`, gain ½, `σ = c √(u⁺)`, recording at the particle record times.
pub fn spde_config(s: &ParticleSettings, record_times: Vec<f64>) -> SolverConfig {
    let horizon = *record_times.last().expect("at least the initial record");
    let mut cfg = SolverConfig::new(2.0, s.spde_nu, s.spde_grid, horizon.max(f64::MIN_POSITIVE));
    cfg.n_modes = s.spde_grid;
    cfg.nonlinear_gain = 0.5;
    cfg.sigma = match matched_noise(s) {
        c if c > 0.0 => SigmaSpec::sqrt_positive_part(c),
        _ => SigmaSpec::zero(),
    };
    cfg.dt_policy = DtPolicy::adaptive(s.spde_dt_max);
    cfg.record_times = record_times;
    cfg
}

fn initial_positions(s: &ParticleSettings, run: u64) -> spme_core::Result<Vec<f64>> {
    let (c, h) = (s.center, s.half_width);
    sample_positions(|x| bump_shape(x, c, h), (c - h, c + h), s.count, s.cfg.seed, run)
}

pub fn run_study(pool: &ThreadPool, s: &ParticleSettings) -> Result<ParticleStudy, CliError> {
    if s.runs == 0 || s.bins == 0 {
        return Err(CliError::config("particles: need runs ≥ 1 and bins ≥ 1"));
    }
    let runs = parallel::particle_runs(pool, &s.cfg, s.runs, |r| initial_positions(s, r))
        .map_err(CliError::from_core_config)?;
    let boundary_contact = (0..runs[0].snapshots.len()).find_map(|i| {
        let out = runs.iter().any(|r| {
            let p = &r.snapshots[i].positions;
            p.first().is_some_and(|&y| y <= 0.0) || p.last().is_some_and(|&y| y >= 1.0)
        });
        out.then(|| runs[0].snapshots[i].t)
    });
    if !s.compare || s.spde_paths == 0 {
        return Ok(ParticleStudy {
            runs,
            comparison: None,
            spde_blowups: 0,
            boundary_contact,
        });
    }
    let times: Vec<f64> = runs[0].snapshots.iter().map(|st| st.t).collect();
    let solver = spde_config(s, times);
    let v0 = bump_coeffs(bump_amplitude(s), s.center, s.half_width, s.spde_grid)?;
    let ens = EnsembleConfig::new(s.spde_paths, solver, s.cfg.seed, v0);
    let opts = TrackOptions {
        budget: false,
        integrals: false,
    };
    let trajectories =
        parallel::trajectories(pool, &ens, s.spde_paths, opts).map_err(CliError::from_core_config)?;
    let spde_blowups = trajectories.iter().filter(|t| t.blowup).count();
    let samples: Vec<SpdeSample> = trajectories
        .iter()
        .filter(|t| !t.blowup)
        .map(SpdeSample::from_trajectory)
        .collect();
    if samples.is_empty() {
        return Err(CliError::science(format!(
            "all {} SPDE paths blew up",
            s.spde_paths
        )));
    }
    let comparison =
        compare_to_spde(&runs, s.cfg.n_scale, &samples, s.bins).map_err(CliError::from_core_config)?;
    Ok(ParticleStudy {
        runs,
        comparison: Some(comparison),
        spde_blowups,
        boundary_contact,
    })
}

fn band_cells(b: &Band) -> [Cell<'static>; 2] {
    [b.mean.into(), b.half_width.into()]
}

fn overlap_cell(o: Option<bool>) -> Cell<'static> {
    o.map_or(Cell::Na, |b| b.into())
}

pub fn cmd_particles(pool: &ThreadPool, config: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let s = config.particles(config.seed()?)?;
    let study = run_study(pool, &s)?;
    let n_scale = s.cfg.n_scale;

    let mut csv = Csv::new(&[
        "run",
        "t",
        "population",
        "mass",
        "center_of_mass",
        "second_moment",
    ]);
    for r in &study.runs {
        for p in &r.samples {
            csv.row(&[
                r.run.into(),
                p.t.into(),
                p.population.into(),
                p.mass.into(),
                p.center_of_mass.into(),
                p.second_moment.into(),
            ]);
        }
    }
    out.write("particles.csv", &csv.into_bytes())?;

    let mut edges = Vec::new();
    let mut rows = Vec::new();
    for i in 0..study.runs[0].snapshots.len() {
        let mut mean = vec![0.0; s.bins];
        for r in &study.runs {
            let h = empirical_measure(&r.snapshots[i], n_scale, s.bins, (0.0, 1.0), None)
                .map_err(CliError::from_core_config)?;
            for (m, x) in mean.iter_mut().zip(&h.masses) {
                *m += x / study.runs.len() as f64;
            }
            edges = h.edges;
        }
        rows.push((study.runs[0].snapshots[i].t, mean));
    }
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(edges.windows(2).map(|w| format::float(0.5 * (w[0] + w[1]))))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header);
    for (t, mean) in &rows {
        let cells: Vec<Cell> = std::iter::once((*t).into())
            .chain(mean.iter().map(|&m| m.into()))
            .collect();
        csv.row(&cells);
    }
    out.write("density.csv", &csv.into_bytes())?;

    let mut comparison_summary = serde_json::Value::Null;
    if let Some(c) = &study.comparison {
        let mut csv = Csv::new(&[
            "t",
            "particle_mass",
            "particle_mass_ci",
            "spde_mass",
            "spde_mass_ci",
            "particle_second_moment",
            "particle_second_moment_ci",
            "spde_second_moment",
            "spde_second_moment_ci",
            "mass_overlap",
            "second_moment_overlap",
        ]);
        for r in &c.rows {
            let mut cells = vec![r.t.into()];
            cells.extend(band_cells(&r.particle_mass));
            cells.extend(band_cells(&r.spde_mass));
            cells.extend(band_cells(&r.particle_second_moment));
            cells.extend(band_cells(&r.spde_second_moment));
            cells.push(overlap_cell(r.particle_mass.overlaps(&r.spde_mass)));
            cells.push(overlap_cell(
                r.particle_second_moment.overlaps(&r.spde_second_moment),
            ));
            csv.row(&cells);
        }
        out.write("comparison.csv", &csv.into_bytes())?;
        let mut csv = Csv::new(&["x_lo", "x_hi", "particle_mass", "spde_mass"]);
        for (b, w) in c.edges.windows(2).enumerate() {
            csv.row(&[
                w[0].into(),
                w[1].into(),
                c.particle_profile[b].into(),
                c.spde_profile[b].into(),
            ]);
        }
        out.write("profile.csv", &csv.into_bytes())?;
        comparison_summary = json!({
            "l1_distance": c.l1_distance,
            "run_l1_distances": c.run_l1_distances,
            "spde_negative_part": c.spde_negative_part,
            "spde_blowups": study.spde_blowups,
            "discrepancies": c.discrepancies,
        });
    }

    let under_resolved: usize = study.runs.iter().map(|r| r.under_resolved_steps).sum();
    let summary = json!({
        "runs": study.runs.len(),
        "count": s.count,
        "n_scale": n_scale,
        "branch_rate": s.cfg.rate(),
        "matched_noise_c": matched_noise(&s),
        "under_resolved_steps": under_resolved,
        "max_displacement": study.runs.iter().map(|r| r.max_displacement).fold(0.0, f64::max),
        "boundary_contact": study.boundary_contact,
        "comparison": comparison_summary,
    });
    out.write_json("particles.json", &summary)?;
    Ok(Outcome {
        failures: Vec::new(),
        summary,
    })
}
