//! Schedule-independent parallel drivers. Every task owns its random stream
//! and results are collected in task order, so the worker count never
//! changes a single output bit.

use rayon::prelude::*;
use rayon::ThreadPool;
use spme_core::estimators::{noise_config, run_single_path, EnsembleConfig, EnsembleEstimate, PathSummary};
use spme_core::noise::derive_stream;
use spme_core::particles::{simulate, ParticleConfig, ParticleRun};
use spme_core::solver::{Solver, TrackOptions, Trajectory};
use spme_core::Result;

/// Pool with `workers` threads; 0 means one per available core.
pub fn pool(workers: usize) -> ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
}

/// `f(0), …, f(n-1)` evaluated on the pool, in index order.
pub fn map_indexed<T, F>(pool: &ThreadPool, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

pub fn ensemble_summaries(pool: &ThreadPool, cfg: &EnsembleConfig) -> Result<Vec<PathSummary>> {
    cfg.validate()?;
    let solver = Solver::new(cfg.solver.clone())?;
    let bound = if cfg.check_power_regularity {
        Some(cfg.power_regularity_bound()?)
    } else {
        None
    };
    map_indexed(pool, cfg.paths, |i| {
        run_single_path(&solver, cfg, bound.as_ref(), i as u64)
    })
    .into_iter()
    .collect()
}

/// Parallel counterpart of [`spme_core::estimators::run_ensemble`].
pub fn run_ensemble(pool: &ThreadPool, cfg: &EnsembleConfig) -> Result<EnsembleEstimate> {
    let summaries = ensemble_summaries(pool, cfg)?;
    EnsembleEstimate::from_summaries(cfg, &summaries)
}

/// Full trajectories of paths `0..paths`.
pub fn trajectories(
    pool: &ThreadPool,
    cfg: &EnsembleConfig,
    paths: usize,
    opts: TrackOptions,
) -> Result<Vec<Trajectory>> {
    let solver = Solver::new(cfg.solver.clone())?;
    map_indexed(pool, paths, |i| {
        let stream = derive_stream(noise_config(&cfg.solver, cfg.master_seed, i as u64))?;
        Ok(solver.run_path(&cfg.v0, Some(&stream), opts))
    })
    .into_iter()
    .collect()
}

/// Particle runs `0..runs`, each started from `initial(run)`.
pub fn particle_runs<F>(
    pool: &ThreadPool,
    cfg: &ParticleConfig,
    runs: usize,
    initial: F,
) -> Result<Vec<ParticleRun>>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync + Send,
{
    map_indexed(pool, runs, |i| simulate(cfg, initial(i as u64)?, i as u64))
        .into_iter()
        .collect()
}
