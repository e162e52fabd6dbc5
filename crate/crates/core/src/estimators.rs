//! Monte Carlo reductions over solver paths: ensemble means with confidence
//! half-widths, power-law decay fits, temporal Hölder exponents and mixed
//! space-time norms.
//!
//! Per-path work is done by [`run_single_path`]; [`EnsembleEstimate::from_summaries`]
//! reduces the summaries in path-index order, so callers may compute paths
//! on any schedule and still get bit-identical statistics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{invalid, Error, Result};
use crate::inequality::{verify_power_regularity, PowerRegularityBound};
use crate::noise::{derive_stream, NoiseConfig};
use crate::solver::{DtPolicy, Record, Solver, SolverConfig, TrackOptions, Trajectory};
use crate::spectral::{slobodeckij_parts, weighted_sq_sum, SpectralCoeffs};

/// z-quantile of the two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// `‖v(t)‖²_{H^γ}`.
    HGammaSq(f64),
    /// `max_{s ≤ t} ‖v(s)‖²_{H^γ}` over the record grid.
    SupHGammaSq(f64),
    /// `‖v(t)‖^p_{H^γ}`.
    HGammaMoment { gamma: f64, p: f64 },
    /// `∫_0^t ‖v‖^{m+1}_{L^{m+1}} ds`.
    Lm1Integral,
    /// `∫_0^t ‖v^[(m+1)/2]‖²_{H^{1+γ}} ds`.
    PowerIntegral,
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::HGammaSq(g) => write!(f, "hgamma_sq[{g:?}]"),
            Self::SupHGammaSq(g) => write!(f, "sup_hgamma_sq[{g:?}]"),
            Self::HGammaMoment { gamma, p } => write!(f, "hgamma_moment[{gamma:?};{p:?}]"),
            Self::Lm1Integral => f.write_str("lm1_integral"),
            Self::PowerIntegral => f.write_str("power_h1g_integral"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub paths: usize,
    pub solver: SolverConfig,
    pub master_seed: u64,
    pub tracked_gammas: Vec<f64>,
    pub p_moments: Vec<f64>,
    pub v0: SpectralCoeffs,
    /// Spatial sacrifice `ε` for the pooled temporal Hölder estimate.
    pub holder_epsilon: Option<f64>,
    /// Check the power-regularity bound at every record.
    pub check_power_regularity: bool,
}

impl EnsembleConfig {
    pub fn new(paths: usize, solver: SolverConfig, master_seed: u64, v0: SpectralCoeffs) -> Self {
        let gamma = solver.gamma_track;
        Self {
            paths,
            solver,
            master_seed,
            tracked_gammas: vec![gamma],
            p_moments: Vec::new(),
            v0,
            holder_epsilon: None,
            check_power_regularity: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.paths == 0 {
            return Err(invalid("paths", "need at least one path"));
        }
        if self.tracked_gammas.iter().any(|g| !g.is_finite()) {
            return Err(invalid("tracked_gammas", "must be finite"));
        }
        let m = self.solver.m;
        if self.p_moments.iter().any(|&p| !(0.0..=m + 1.0).contains(&p)) {
            return Err(invalid("p_moments", "moment orders must lie in [0, m+1]"));
        }
        if let Some(eps) = self.holder_epsilon {
            if !(eps > 0.0) {
                return Err(invalid("holder_epsilon", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn functionals(&self) -> Vec<Functional> {
        let mut out = Vec::new();
        for &g in &self.tracked_gammas {
            out.push(Functional::HGammaSq(g));
            out.push(Functional::SupHGammaSq(g));
            for &p in &self.p_moments {
                out.push(Functional::HGammaMoment { gamma: g, p });
            }
        }
        out.push(Functional::Lm1Integral);
        out.push(Functional::PowerIntegral);
        out
    }

    /// Power-regularity bound for this configuration's `m` and `γ`.
    pub fn power_regularity_bound(&self) -> Result<PowerRegularityBound> {
        PowerRegularityBound::new(
            0.5 * (self.solver.m + 1.0),
            1.0 + self.solver.gamma_track,
            self.solver.grid_len,
        )
    }
}

/// Result of the per-record power-regularity check on one path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerRegularityTally {
    pub checked: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` seen.
    pub max_ratio: f64,
}

impl PowerRegularityTally {
    fn merge(&mut self, other: &Self) {
        self.checked += other.checked;
        self.violations += other.violations;
        self.max_ratio = self.max_ratio.max(other.max_ratio);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub path_index: u64,
    pub blowup: bool,
    pub times: Vec<f64>,
    /// `values[f][i]`: functional `f` at record `i`.
    pub values: Vec<Vec<f64>>,
    pub power_regularity: Option<PowerRegularityTally>,
    /// Structure function at dyadic lags (see [`HolderEstimate`]).
    pub structure: Option<(Vec<usize>, Vec<f64>)>,
}

pub fn noise_config(solver: &SolverConfig, master_seed: u64, path_index: u64) -> NoiseConfig {
    let dt = match solver.dt_policy {
        DtPolicy::Fixed(dt) => dt,
        DtPolicy::Adaptive { dt_max, .. } => dt_max,
    };
    NoiseConfig {
        n_modes: solver.n_modes,
        dt,
        master_seed,
        path_index,
    }
}

/// Runs path `path_index` of the ensemble and evaluates every functional at
/// every record.
pub fn run_single_path(
    solver: &Solver,
    cfg: &EnsembleConfig,
    bound: Option<&PowerRegularityBound>,
    path_index: u64,
) -> Result<PathSummary> {
    let stream = derive_stream(noise_config(&cfg.solver, cfg.master_seed, path_index))?;
    let tr = solver.run_path(
        &cfg.v0,
        Some(&stream),
        TrackOptions {
            budget: false,
            integrals: true,
        },
    );
    summarize(cfg, &tr, bound, path_index)
}

pub fn summarize(
    cfg: &EnsembleConfig,
    tr: &Trajectory,
    bound: Option<&PowerRegularityBound>,
    path_index: u64,
) -> Result<PathSummary> {
    let functionals = cfg.functionals();
    let mut values = vec![Vec::with_capacity(tr.records.len()); functionals.len()];
    let mut sup = vec![0.0f64; cfg.tracked_gammas.len()];
    for r in &tr.records {
        let mut col = 0;
        for (gi, &g) in cfg.tracked_gammas.iter().enumerate() {
            let h = weighted_sq_sum(r.vhat.coeffs(), g);
            sup[gi] = sup[gi].max(h);
            values[col].push(h);
            values[col + 1].push(sup[gi]);
            col += 2;
            for &p in &cfg.p_moments {
                values[col].push(libm::pow(h, 0.5 * p));
                col += 1;
            }
        }
        values[col].push(r.lm1_integral);
        values[col + 1].push(r.power_integral);
    }
    let power_regularity = match bound {
        Some(b) if !tr.blowup => {
            let mut tally = PowerRegularityTally::default();
            for r in &tr.records {
                let rep = verify_power_regularity(&r.v, b)?;
                tally.checked += 1;
                if !rep.holds {
                    tally.violations += 1;
                }
                if rep.rhs > 0.0 {
                    tally.max_ratio = tally.max_ratio.max(rep.lhs / rep.rhs);
                }
            }
            Some(tally)
        }
        _ => None,
    };
    let structure = match cfg.holder_epsilon {
        Some(eps) if !tr.blowup => {
            let (lags, s) = structure_function(&tr.records, cfg.solver.gamma_track - eps)?;
            Some((lags, s))
        }
        _ => None,
    };
    Ok(PathSummary {
        path_index,
        blowup: tr.blowup,
        times: tr.times().collect(),
        values,
        power_regularity,
        structure,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSeries {
    pub functional: Functional,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// `None` when a single path makes the interval meaningless.
    pub ci_half_width: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimate {
    pub times: Vec<f64>,
    pub series: Vec<FunctionalSeries>,
    pub path_count: usize,
    pub blowup_count: usize,
    pub power_regularity: Option<PowerRegularityTally>,
    pub holder: Option<HolderEstimate>,
}

impl EnsembleEstimate {
    /// Reduces per-path summaries in path-index order. Blown-up paths are
    /// counted and excluded.
    pub fn from_summaries(cfg: &EnsembleConfig, summaries: &[PathSummary]) -> Result<Self> {
        let mut ordered: Vec<&PathSummary> = summaries.iter().collect();
        ordered.sort_by_key(|s| s.path_index);
        let good: Vec<&PathSummary> = ordered.iter().copied().filter(|s| !s.blowup).collect();
        let blowup_count = ordered.len() - good.len();
        if good.is_empty() {
            return Err(Error::AllPathsBlewUp(ordered.len()));
        }
        let times = good[0].times.clone();
        if good.iter().any(|s| s.times.len() != times.len()) {
            return Err(invalid("summaries", "paths recorded different time grids"));
        }
        let n = good.len() as f64;
        let series = cfg
            .functionals()
            .into_iter()
            .enumerate()
            .map(|(f, functional)| {
                let mut mean = Vec::with_capacity(times.len());
                let mut variance = Vec::with_capacity(times.len());
                let mut ci = Vec::with_capacity(times.len());
                for i in 0..times.len() {
                    // shifted by the first path so identical samples give
                    // exactly zero variance
                    let x0 = good[0].values[f][i];
                    let (sd, sd2) = good.iter().fold((0.0, 0.0), |(a, b), s| {
                        let d = s.values[f][i] - x0;
                        (a + d, b + d * d)
                    });
                    let mu = x0 + sd / n;
                    let var = if good.len() > 1 {
                        ((sd2 - sd * sd / n) / (n - 1.0)).max(0.0)
                    } else {
                        0.0
                    };
                    mean.push(mu);
                    variance.push(var);
                    ci.push((good.len() > 1).then(|| Z95 * libm::sqrt(var / n)));
                }
                FunctionalSeries {
                    functional,
                    mean,
                    variance,
                    ci_half_width: ci,
                }
            })
            .collect();

        let power_regularity = good.iter().filter_map(|s| s.power_regularity).reduce(|mut a, b| {
            a.merge(&b);
            a
        });

        let holder = match cfg.holder_epsilon {
            Some(eps) => {
                let curves: Vec<&(Vec<usize>, Vec<f64>)> =
                    good.iter().filter_map(|s| s.structure.as_ref()).collect();
                let (lags, _) = curves[0];
                let mut mean = vec![0.0; lags.len()];
                for (_, s) in &curves {
                    for (m, v) in mean.iter_mut().zip(s) {
                        *m += v / curves.len() as f64;
                    }
                }
                let dt = times[1] - times[0];
                Some(HolderEstimate::from_structure(eps, dt, lags.clone(), mean)?)
            }
            None => None,
        };

        Ok(Self {
            times,
            series,
            path_count: ordered.len(),
            blowup_count,
            power_regularity,
            holder,
        })
    }

    pub fn series(&self, functional: &str) -> Option<&FunctionalSeries> {
        self.series
            .iter()
            .find(|s| format!("{}", s.functional) == functional)
    }

    pub fn used_paths(&self) -> usize {
        self.path_count - self.blowup_count
    }
}

/// Sequential ensemble driver; the `spme` crate provides a parallel one with
/// identical output.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleEstimate> {
    cfg.validate()?;
    let solver = Solver::new(cfg.solver.clone())?;
    let bound = if cfg.check_power_regularity {
        Some(cfg.power_regularity_bound()?)
    } else {
        None
    };
    let summaries = (0..cfg.paths as u64)
        .map(|i| run_single_path(&solver, cfg, bound.as_ref(), i))
        .collect::<Result<Vec<_>>>()?;
    EnsembleEstimate::from_summaries(cfg, &summaries)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub t_lo: f64,
    pub t_hi: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least squares line through `(ln x, ln y)`.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(invalid("window", "need at least two points to fit"));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return Err(invalid("values", "log-log fit needs positive values"));
    }
    let lx: Vec<f64> = x.iter().map(|&v| libm::log(v)).collect();
    let ly: Vec<f64> = y.iter().map(|&v| libm::log(v)).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("window", "abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, my - slope * mx, r_squared))
}

pub fn fit_decay(est: &EnsembleEstimate, functional: &str, window: (f64, f64)) -> Result<DecayFit> {
    let series = est
        .series(functional)
        .ok_or_else(|| invalid("functional", format!("`{functional}` is not tracked")))?;
    fit_decay_series(&est.times, &series.mean, window)
}

pub fn fit_decay_series(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let (t_lo, t_hi) = window;
    if !(t_lo > 0.0 && t_hi > t_lo) {
        return Err(invalid("window", "need 0 < t_lo < t_hi"));
    }
    if times.last().is_some_and(|&t| t_hi > t * (1.0 + 1e-12)) {
        return Err(invalid("window", "window extends past the horizon"));
    }
    let tol = 1e-12 * t_hi;
    let (x, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= t_lo - tol && t <= t_hi + tol)
        .map(|(&t, &v)| (t, v))
        .unzip();
    let (slope, intercept, r_squared) = fit_power_law(&x, &y)?;
    Ok(DecayFit {
        t_lo,
        t_hi,
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HolderExponent {
    Value(f64),
    /// The path does not move at any lag.
    Flat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderEstimate {
    pub epsilon: f64,
    pub exponent: HolderExponent,
    /// Lags in units of the record spacing.
    pub lags: Vec<usize>,
    pub structure: Vec<f64>,
    pub record_dt: f64,
}

pub const MIN_HOLDER_RECORDS: usize = 64;
pub const MIN_HOLDER_LAGS: usize = 4;

impl HolderEstimate {
    pub fn from_structure(
        epsilon: f64,
        record_dt: f64,
        lags: Vec<usize>,
        structure: Vec<f64>,
    ) -> Result<Self> {
        if lags.len() < MIN_HOLDER_LAGS {
            return Err(invalid("lags", "need at least 4 dyadic lags"));
        }
        let exponent = if structure.iter().all(|&s| s == 0.0) {
            HolderExponent::Flat
        } else {
            let tau: Vec<f64> = lags.iter().map(|&l| l as f64 * record_dt).collect();
            HolderExponent::Value(fit_power_law(&tau, &structure)?.0)
        };
        Ok(Self {
            epsilon,
            exponent,
            lags,
            structure,
            record_dt,
        })
    }

    pub fn value(&self) -> Option<f64> {
        match self.exponent {
            HolderExponent::Value(v) => Some(v),
            HolderExponent::Flat => None,
        }
    }
}

/// Dyadic lags `1, 2, 4, …` (in record steps) up to an eighth of the record
/// count, so every lag averages over many nearly independent increments.
fn dyadic_lags(records: usize) -> Vec<usize> {
    let mut lags = Vec::new();
    let mut l = 1;
    while 8 * l <= records {
        lags.push(l);
        l *= 2;
    }
    lags
}

fn check_uniform(times: &[f64]) -> Result<f64> {
    if times.len() < MIN_HOLDER_RECORDS {
        return Err(invalid("records", "need at least 64 recorded times"));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if times
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0))
    {
        return Err(invalid("records", "record times must be uniformly spaced"));
    }
    Ok(dt)
}

/// `S(τ) = mean_t ‖v(t+τ) - v(t)‖_{H^s}` at dyadic lags.
pub fn structure_function(records: &[Record], s: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    let coeffs: Vec<&[f64]> = records.iter().map(|r| r.vhat.coeffs()).collect();
    structure_function_coeffs(&coeffs, s)
}

pub fn structure_function_coeffs(coeffs: &[&[f64]], s: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    let lags = dyadic_lags(coeffs.len());
    let len = coeffs.first().map_or(0, |c| c.len());
    let mut diff = vec![0.0; len];
    let values = lags
        .iter()
        .map(|&lag| {
            let pairs = coeffs.len() - lag;
            (0..pairs)
                .map(|i| {
                    for ((d, a), b) in diff.iter_mut().zip(coeffs[i + lag]).zip(coeffs[i]) {
                        *d = a - b;
                    }
                    libm::sqrt(weighted_sq_sum(&diff, s))
                })
                .sum::<f64>()
                / pairs as f64
        })
        .collect();
    Ok((lags, values))
}

/// Structure-function slope of `t ↦ v(t)` in `H^{γ-ε}`.
pub fn estimate_temporal_holder(tr: &Trajectory, gamma: f64, epsilon: f64) -> Result<HolderEstimate> {
    estimate_temporal_holder_pooled(core::slice::from_ref(tr), gamma, epsilon)
}

/// Averages the structure functions of several paths before fitting.
pub fn estimate_temporal_holder_pooled(
    paths: &[Trajectory],
    gamma: f64,
    epsilon: f64,
) -> Result<HolderEstimate> {
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", "must be positive"));
    }
    let first = paths
        .first()
        .ok_or_else(|| invalid("paths", "need at least one trajectory"))?;
    let times: Vec<f64> = first.times().collect();
    let dt = check_uniform(&times)?;
    let mut pooled: Option<(Vec<usize>, Vec<f64>)> = None;
    for tr in paths {
        if tr.records.len() != times.len() {
            return Err(invalid("paths", "trajectories have different record grids"));
        }
        let (lags, s) = structure_function(&tr.records, gamma - epsilon)?;
        match &mut pooled {
            None => pooled = Some((lags, s)),
            Some((_, acc)) => acc.iter_mut().zip(&s).for_each(|(a, b)| *a += b),
        }
    }
    let (lags, mut s) = pooled.expect("at least one path");
    s.iter_mut().for_each(|v| *v /= paths.len() as f64);
    HolderEstimate::from_structure(epsilon, dt, lags, s)
}

/// `(∫_0^T ‖v(t)‖^p_{W^{γ',p}} dt)^{1/p}` with the trapezoid rule over the
/// record grid.
pub fn spacetime_norm(tr: &Trajectory, gamma_prime: f64, p: f64) -> Result<f64> {
    let per_record = tr
        .records
        .iter()
        .map(|r| Ok(slobodeckij_parts(&r.v, gamma_prime, p)?.total()))
        .collect::<Result<Vec<f64>>>()?;
    let times: Vec<f64> = tr.times().collect();
    let integral: f64 = times
        .windows(2)
        .zip(per_record.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
        .sum();
    Ok(libm::pow(integral, 1.0 / p))
}

/// `γ' = 2(1+γ)/(m+1)`, the Slobodeckij order in the space-time energy term.
pub fn energy_space_order(gamma: f64, m: f64) -> f64 {
    2.0 * (1.0 + gamma) / (m + 1.0)
}

/// Human-readable one-line summary of a fit.
pub fn describe_fit(name: &str, fit: &DecayFit, target: f64) -> String {
    format!(
        "fit={name} window=[{:?},{:?}] slope={:?} target={:?} r2={:?}",
        fit.t_lo, fit.t_hi, fit.slope, target, fit.r_squared
    )
}
