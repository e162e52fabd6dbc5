//! Interacting branching particle system on the line.
//!
//! Each particle moves by the mean-field repulsion
//!
//! ```text
//! dYⁱ = -(1/N) Σ_j ∂ₓV_ε(Yⁱ - Yʲ) dt,    V_ε(x) = ε⁻¹ V(x/ε)
//! ```
//!
//! and at rate `branch_rate` dies and leaves a random number of offspring at
//! its position. With `N` particles of weight `1/N`, the empirical measure
//! formally approaches `∂ₜμ = ½∂²ₓ(μ²) + c√μ ξ` as `N → ∞, ε → 0`.
//!
//! Positions are kept sorted. The drift is evaluated with a two-pointer
//! sweep over the sorted array; for the Epanechnikov and triangle kernels the
//! neighbor sums reduce to prefix sums and counts.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use crate::error::{invalid, Error, Result};
use crate::noise::{open_unit, seed_key};
use crate::spectral::SpectralCoeffs;

/// Even, nonnegative kernel supported in `[-1, 1]` with unit mass.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `¾(1 - x²)₊`.
    Epanechnikov,
    /// `(1 - |x|)₊`.
    Triangle,
    /// Piecewise linear through `values` at equally spaced nodes on `[-1, 1]`.
    Table { values: Vec<f64> },
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        if let Self::Table { values } = self {
            if values.len() < 3 {
                return Err(invalid("kernel", "table needs at least three nodes"));
            }
            if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(invalid("kernel", "table values must be finite and nonnegative"));
            }
            let n = values.len();
            if values[0] != 0.0 || values[n - 1] != 0.0 {
                return Err(invalid("kernel", "table must vanish at ±1"));
            }
            if (0..n).any(|i| values[i] != values[n - 1 - i]) {
                return Err(invalid("kernel", "table must be even"));
            }
        }
        let mass = self.mass();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(invalid("kernel", format!("kernel integrates to {mass}, not 1")));
        }
        Ok(())
    }

    /// `∫ V` (exact for every variant: the table is piecewise linear).
    pub fn mass(&self) -> f64 {
        match self {
            Self::Epanechnikov | Self::Triangle => 1.0,
            Self::Table { values } => {
                let h = 2.0 / (values.len() - 1) as f64;
                values.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum()
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        match self {
            Self::Epanechnikov => 0.75 * (1.0 - x * x),
            Self::Triangle => 1.0 - x.abs(),
            Self::Table { values } => {
                let h = 2.0 / (values.len() - 1) as f64;
                let s = (x + 1.0) / h;
                let i = (s as usize).min(values.len() - 2);
                let t = s - i as f64;
                values[i] + t * (values[i + 1] - values[i])
            }
        }
    }

    /// `V'(x)`, with `V'(0) = 0` at the kink of the triangle.
    pub fn derivative(&self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        match self {
            Self::Epanechnikov => -1.5 * x,
            Self::Triangle => -sign(x),
            Self::Table { values } => {
                if x == 0.0 {
                    return 0.0;
                }
                let h = 2.0 / (values.len() - 1) as f64;
                let i = (((x + 1.0) / h) as usize).min(values.len() - 2);
                (values[i + 1] - values[i]) / h
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Offspring distribution on `{0, 1, 2, …}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl OffspringLaw {
    /// Rejects laws whose mean is not 1 (to 1e-12).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid(
                "offspring",
                "probabilities must be finite and nonnegative",
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("offspring", "probabilities must sum to 1"));
        }
        let mean: f64 = probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        if (mean - 1.0).abs() > 1e-12 {
            return Err(invalid("offspring", format!("mean offspring {mean} is not 1")));
        }
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { probs, cdf })
    }

    /// `{0, 2}` with probability ½ each.
    pub fn binary() -> Self {
        Self::new(vec![0.5, 0.0, 0.5]).expect("critical law")
    }

    /// Always exactly one offspring.
    pub fn identity() -> Self {
        Self::new(vec![0.0, 1.0]).expect("critical law")
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn variance(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64 - 1.0) * (k as f64 - 1.0) * p)
            .sum()
    }

    fn sample(&self, u: f64) -> usize {
        self.cdf
            .iter()
            .position(|&c| u <= c)
            .unwrap_or(self.cdf.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchRate {
    /// Fixed rate per unit time.
    Absolute(f64),
    /// `N · base`, the rate of the sped-up clock.
    PerScale(f64),
}

impl BranchRate {
    pub fn resolve(self, n_scale: f64) -> f64 {
        match self {
            Self::Absolute(r) => r,
            Self::PerScale(base) => n_scale * base,
        }
    }
}

/// Largest branching probability per step accepted by the tau-leap.
pub const MAX_BRANCH_PROBABILITY: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleConfig {
    /// Scaling parameter `N`: each particle has weight `1/N`.
    pub n_scale: usize,
    pub epsilon: f64,
    pub kernel: Kernel,
    /// Multiplies the drift; 0 switches the interaction off.
    pub drift_gain: f64,
    pub branch_rate: BranchRate,
    pub offspring: OffspringLaw,
    pub dt: f64,
    pub t_end: f64,
    /// Record every this many steps (the final time is always recorded).
    pub record_every: usize,
    pub seed: u64,
}

impl ParticleConfig {
    pub fn new(n_scale: usize, epsilon: f64, dt: f64, t_end: f64) -> Self {
        Self {
            n_scale,
            epsilon,
            kernel: Kernel::Epanechnikov,
            drift_gain: 1.0,
            branch_rate: BranchRate::PerScale(1.0),
            offspring: OffspringLaw::binary(),
            dt,
            t_end,
            record_every: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scale == 0 {
            return Err(invalid("n_scale", "must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon", "kernel width must be positive"));
        }
        self.kernel.validate()?;
        if !(self.drift_gain.is_finite()) {
            return Err(invalid("drift_gain", "must be finite"));
        }
        if !(self.dt > 0.0 && self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(invalid("dt", "need dt > 0 and a finite horizon"));
        }
        let rate = self.rate();
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(invalid("branch_rate", "must be finite and nonnegative"));
        }
        if rate * self.dt > MAX_BRANCH_PROBABILITY {
            return Err(invalid(
                "branch_rate",
                format!("rate·dt = {} exceeds the tau-leap limit 0.1", rate * self.dt),
            ));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be ≥ 1"));
        }
        Ok(())
    }

    pub fn rate(&self) -> f64 {
        self.branch_rate.resolve(self.n_scale as f64)
    }

    pub fn steps(&self) -> u64 {
        libm::round(self.t_end / self.dt) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    /// Sorted ascending.
    pub positions: Vec<f64>,
    pub t: f64,
}

impl ParticleState {
    pub fn new(mut positions: Vec<f64>) -> Result<Self> {
        if let Some(i) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        positions.sort_by(f64::total_cmp);
        Ok(Self { positions, t: 0.0 })
    }

    pub fn alive_count(&self) -> usize {
        self.positions.len()
    }

    pub fn center_of_mass(&self) -> f64 {
        if self.positions.is_empty() {
            return 0.0;
        }
        self.positions.iter().sum::<f64>() / self.positions.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriftOutcome {
    pub max_displacement: f64,
    /// Displacement exceeded `ε/4`: the interaction is under-resolved.
    pub under_resolved: bool,
}

/// Velocities `-(g/N) Σ_j ∂ₓV_ε(Yⁱ - Yʲ)` for sorted `y`.
pub fn drift_velocities(y: &[f64], cfg: &ParticleConfig, out: &mut [f64]) {
    let n = y.len();
    let eps = cfg.epsilon;
    let scale = cfg.drift_gain / cfg.n_scale as f64;
    if cfg.drift_gain == 0.0 || n == 0 {
        out.fill(0.0);
        return;
    }
    // prefix sums of positions relative to a reference point limit
    // cancellation in `cnt·Yᵢ - ΣYⱼ`
    let reference = y[n / 2];
    let mut prefix = Vec::new();
    if matches!(cfg.kernel, Kernel::Epanechnikov) {
        prefix.reserve(n + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &v in y {
            acc += v - reference;
            prefix.push(acc);
        }
    }
    let (mut lo, mut hi) = (0usize, 0usize);
    let (mut run_start, mut run_end) = (0usize, 0usize);
    for i in 0..n {
        let yi = y[i];
        while y[i] - y[lo] >= eps {
            lo += 1;
        }
        if hi < i {
            hi = i;
        }
        while hi < n && y[hi] - yi < eps {
            hi += 1;
        }
        out[i] = match &cfg.kernel {
            Kernel::Epanechnikov => {
                // -V_ε'(d) = 1.5 d / ε³
                let cnt = (hi - lo) as f64;
                let sum = prefix[hi] - prefix[lo];
                scale * 1.5 / (eps * eps * eps) * (cnt * (yi - reference) - sum)
            }
            Kernel::Triangle => {
                // -V_ε'(d) = sign(d) / ε²; equal positions do not push
                if i == 0 || y[i - 1] != yi {
                    run_start = i;
                    run_end = i + 1;
                    while run_end < n && y[run_end] == yi {
                        run_end += 1;
                    }
                }
                let below = run_start - lo;
                let above = hi - run_end;
                scale / (eps * eps) * (below as f64 - above as f64)
            }
            kernel => {
                let mut f = 0.0;
                for &yj in &y[lo..hi] {
                    f -= kernel.derivative((yi - yj) / eps);
                }
                scale / (eps * eps) * f
            }
        };
    }
}

/// Forward Euler step of the interaction; keeps positions sorted.
pub fn drift_step(state: &mut ParticleState, cfg: &ParticleConfig, scratch: &mut Vec<f64>) -> DriftOutcome {
    scratch.resize(state.positions.len(), 0.0);
    drift_velocities(&state.positions, cfg, scratch);
    let mut max_disp = 0.0f64;
    for (p, v) in state.positions.iter_mut().zip(scratch.iter()) {
        let d = v * cfg.dt;
        max_disp = max_disp.max(d.abs());
        *p += d;
    }
    state.positions.sort_by(f64::total_cmp);
    DriftOutcome {
        max_displacement: max_disp,
        under_resolved: max_disp > 0.25 * cfg.epsilon,
    }
}

/// Tau-leap branching: each particle independently triggers with probability
/// `rate·dt` and is replaced by offspring at its position. Uniforms are drawn
/// in sorted particle order.
pub fn branch_step(state: &mut ParticleState, cfg: &ParticleConfig, rng: &mut ChaCha8Rng) {
    let prob = cfg.rate() * cfg.dt;
    if prob == 0.0 {
        return;
    }
    let mut next = Vec::with_capacity(state.positions.len());
    for &y in &state.positions {
        if open_unit(rng) <= prob {
            let k = cfg.offspring.sample(open_unit(rng));
            next.extend(core::iter::repeat_n(y, k));
        } else {
            next.push(y);
        }
    }
    state.positions = next;
}

pub fn branch_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(seed_key(seed));
    rng.set_stream(2 * run + 1);
    rng
}

/// Draws `count` iid positions from the density `f` on `[a, b]` by
/// inverting its tabulated CDF.
pub fn sample_positions(
    f: impl Fn(f64) -> f64,
    support: (f64, f64),
    count: usize,
    seed: u64,
    run: u64,
) -> Result<Vec<f64>> {
    let (a, b) = support;
    if !(b > a) {
        return Err(invalid("support", "need a < b"));
    }
    const TABLE: usize = 4096;
    let h = (b - a) / TABLE as f64;
    let mut cdf = Vec::with_capacity(TABLE + 1);
    cdf.push(0.0);
    let mut prev = f(a).max(0.0);
    for i in 1..=TABLE {
        let cur = f(a + i as f64 * h).max(0.0);
        cdf.push(cdf[i - 1] + 0.5 * h * (prev + cur));
        prev = cur;
    }
    let total = cdf[TABLE];
    if !(total > 0.0) {
        return Err(invalid("density", "has no mass on the support"));
    }
    let mut rng = ChaCha8Rng::from_seed(seed_key(seed));
    rng.set_stream(2 * run);
    Ok((0..count)
        .map(|_| {
            let u = open_unit(&mut rng) * total;
            let i = cdf.partition_point(|&c| c < u).clamp(1, TABLE);
            let (c0, c1) = (cdf[i - 1], cdf[i]);
            let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
            a + (i as f64 - 1.0 + t) * h
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleSample {
    pub t: f64,
    pub population: usize,
    /// `population / N`.
    pub mass: f64,
    pub center_of_mass: f64,
    /// `(1/N) Σ (Yⁱ - ½)²`.
    pub second_moment: f64,
}

impl ParticleSample {
    fn of(state: &ParticleState, n_scale: usize) -> Self {
        let n = n_scale as f64;
        Self {
            t: state.t,
            population: state.alive_count(),
            mass: state.alive_count() as f64 / n,
            center_of_mass: state.center_of_mass(),
            second_moment: state.positions.iter().map(|y| (y - 0.5) * (y - 0.5)).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRun {
    pub run: u64,
    pub samples: Vec<ParticleSample>,
    pub snapshots: Vec<ParticleState>,
    pub under_resolved_steps: usize,
    pub max_displacement: f64,
}

impl ParticleRun {
    pub fn final_state(&self) -> &ParticleState {
        self.snapshots.last().expect("initial state is always recorded")
    }
}

/// Runs one realization from `initial`; randomness comes from stream `run`
/// of `cfg.seed`.
pub fn simulate(cfg: &ParticleConfig, initial: Vec<f64>, run: u64) -> Result<ParticleRun> {
    cfg.validate()?;
    let mut state = ParticleState::new(initial)?;
    let mut rng = branch_rng(cfg.seed, run);
    let mut scratch = Vec::new();
    let steps = cfg.steps();
    let mut out = ParticleRun {
        run,
        samples: vec![ParticleSample::of(&state, cfg.n_scale)],
        snapshots: vec![state.clone()],
        under_resolved_steps: 0,
        max_displacement: 0.0,
    };
    for step in 1..=steps {
        let d = drift_step(&mut state, cfg, &mut scratch);
        out.max_displacement = out.max_displacement.max(d.max_displacement);
        out.under_resolved_steps += d.under_resolved as usize;
        branch_step(&mut state, cfg, &mut rng);
        state.t = step as f64 * cfg.dt;
        if step % cfg.record_every as u64 == 0 || step == steps {
            out.samples.push(ParticleSample::of(&state, cfg.n_scale));
            out.snapshots.push(state.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub edges: Vec<f64>,
    /// Histogram: `count/N` per bin. Kernel density: smoothed bin masses.
    pub masses: Vec<f64>,
    pub counts: Vec<usize>,
    pub bandwidth: Option<f64>,
}

impl EmpiricalMeasure {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn bin_width(&self, b: usize) -> f64 {
        self.edges[b + 1] - self.edges[b]
    }
}

/// Histogram of `(1/N) Σ δ_{Yⁱ}` on `bins` equal bins over `range`.
/// Particles outside the range are counted in the edge bins so the total
/// mass is exactly `alive_count / N`. With a bandwidth, bin masses are
/// replaced by Epanechnikov kernel-density estimates at the bin centers.
pub fn empirical_measure(
    state: &ParticleState,
    n_scale: usize,
    bins: usize,
    range: (f64, f64),
    bandwidth: Option<f64>,
) -> Result<EmpiricalMeasure> {
    if bins == 0 {
        return Err(invalid("bins", "need at least one bin"));
    }
    let (a, b) = range;
    if !(b > a) {
        return Err(invalid("range", "need a < b"));
    }
    let w = (b - a) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| a + i as f64 * w).collect();
    let mut counts = vec![0usize; bins];
    for &y in &state.positions {
        let i = libm::floor((y - a) / w);
        let i = if i < 0.0 { 0 } else { (i as usize).min(bins - 1) };
        counts[i] += 1;
    }
    let n = n_scale as f64;
    let masses = match bandwidth {
        None => counts.iter().map(|&c| c as f64 / n).collect(),
        Some(hb) => {
            if !(hb > 0.0) {
                return Err(invalid("bandwidth", "must be positive"));
            }
            (0..bins)
                .map(|i| {
                    let c = a + (i as f64 + 0.5) * w;
                    let lo = state.positions.partition_point(|&y| y <= c - hb);
                    let hi = state.positions.partition_point(|&y| y < c + hb);
                    let dens: f64 = state.positions[lo..hi]
                        .iter()
                        .map(|y| Kernel::Epanechnikov.value((c - y) / hb))
                        .sum::<f64>()
                        / (n * hb);
                    dens * w
                })
                .collect()
        }
    };
    Ok(EmpiricalMeasure {
        edges,
        masses,
        counts,
        bandwidth,
    })
}

/// Mean and 95% half-width over samples (`None` width for a single sample).
fn mean_ci(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    // shifted by the first sample so identical samples have zero width
    let x0 = xs[0];
    let (sd, sd2) = xs
        .iter()
        .fold((0.0, 0.0), |(a, b), x| (a + (x - x0), b + (x - x0) * (x - x0)));
    let mu = x0 + sd / n;
    if xs.len() < 2 {
        return (mu, None);
    }
    let var = ((sd2 - sd * sd / n) / (n - 1.0)).max(0.0);
    (mu, Some(crate::estimators::Z95 * libm::sqrt(var / n)))
}

/// One side of the comparison at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub mean: f64,
    pub half_width: Option<f64>,
}

impl Band {
    fn from(xs: &[f64]) -> Self {
        let (mean, half_width) = mean_ci(xs);
        Self { mean, half_width }
    }

    /// Whether the two bands overlap; `None` unless both sides have a
    /// positive width.
    pub fn overlaps(&self, other: &Band) -> Option<bool> {
        match (self.half_width, other.half_width) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((self.mean - other.mean).abs() <= a + b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub t: f64,
    pub particle_mass: Band,
    pub spde_mass: Band,
    pub particle_second_moment: Band,
    pub spde_second_moment: Band,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub edges: Vec<f64>,
    /// Mean binned profiles at the final matched time.
    pub particle_profile: Vec<f64>,
    pub spde_profile: Vec<f64>,
    /// `Σ_b |particle_b - spde_b|` of the mean binned masses.
    pub l1_distance: f64,
    /// The same distance for each particle run against the mean SPDE profile.
    pub run_l1_distances: Vec<f64>,
    /// Largest negative value of the SPDE field on its grid (positivity loss).
    pub spde_negative_part: f64,
    /// Statistically resolved times where the bands fail to overlap.
    pub discrepancies: Vec<String>,
}

/// One SPDE path sampled at the comparison times.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdeSample {
    pub times: Vec<f64>,
    pub fields: Vec<SpectralCoeffs>,
}

impl SpdeSample {
    pub fn from_trajectory(tr: &crate::solver::Trajectory) -> Self {
        Self {
            times: tr.times().collect(),
            fields: tr.records.iter().map(|r| r.vhat.clone()).collect(),
        }
    }
}

fn spde_second_moment(c: &SpectralCoeffs) -> f64 {
    // ∫(x-½)² v dx with the closed form ∫(x-½)² √2 sin(πkx) dx
    c.coeffs()
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let k = (i + 1) as f64;
            let pk = core::f64::consts::PI * k;
            let odd = (i + 1) % 2 == 1;
            // ∫₀¹ (x-½)² sin(πkx) dx = (1 - (-1)^k)(1/(4πk) - 2/(πk)³)
            let s = if odd {
                2.0 * (0.25 / pk - 2.0 / (pk * pk * pk))
            } else {
                0.0
            };
            core::f64::consts::SQRT_2 * a * s
        })
        .sum()
}

/// Compares particle runs with SPDE paths at their common record times.
pub fn compare_to_spde(
    particles: &[ParticleRun],
    n_scale: usize,
    spde: &[SpdeSample],
    bins: usize,
) -> Result<ComparisonReport> {
    if particles.is_empty() || spde.is_empty() {
        return Err(invalid("runs", "need at least one run on each side"));
    }
    let pt: Vec<f64> = particles[0].snapshots.iter().map(|s| s.t).collect();
    let st = &spde[0].times;
    let matches = |a: &[f64], b: &[f64]| {
        a.len() == b.len()
            && a.iter()
                .zip(b)
                .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0))
    };
    if !matches(&pt, st) {
        return Err(invalid("horizon", "particle and SPDE record times differ"));
    }
    if particles.iter().any(|p| p.snapshots.len() != pt.len()) || spde.iter().any(|s| !matches(&s.times, st))
    {
        return Err(invalid("horizon", "runs on one side record different times"));
    }
    let mut rows = Vec::with_capacity(pt.len());
    let mut discrepancies = Vec::new();
    for (i, &t) in pt.iter().enumerate() {
        let pm: Vec<f64> = particles.iter().map(|p| p.samples[i].mass).collect();
        let ps: Vec<f64> = particles.iter().map(|p| p.samples[i].second_moment).collect();
        let sm: Vec<f64> = spde.iter().map(|s| s.fields[i].integral()).collect();
        let ss: Vec<f64> = spde.iter().map(|s| spde_second_moment(&s.fields[i])).collect();
        let row = ComparisonRow {
            t,
            particle_mass: Band::from(&pm),
            spde_mass: Band::from(&sm),
            particle_second_moment: Band::from(&ps),
            spde_second_moment: Band::from(&ss),
        };
        if row.particle_mass.overlaps(&row.spde_mass) == Some(false) {
            discrepancies.push(format!("mass bands disjoint at t={t:?}"));
        }
        if row.particle_second_moment.overlaps(&row.spde_second_moment) == Some(false) {
            discrepancies.push(format!("second-moment bands disjoint at t={t:?}"));
        }
        rows.push(row);
    }

    let last = pt.len() - 1;
    let mut particle_profile = vec![0.0; bins];
    let mut run_profiles = Vec::with_capacity(particles.len());
    let mut edges = Vec::new();
    for p in particles {
        let h = empirical_measure(&p.snapshots[last], n_scale, bins, (0.0, 1.0), None)?;
        for (acc, m) in particle_profile.iter_mut().zip(&h.masses) {
            *acc += m / particles.len() as f64;
        }
        run_profiles.push(h.masses);
        edges = h.edges;
    }
    let mut spde_profile = vec![0.0; bins];
    let mut negative = 0.0f64;
    for s in spde {
        let f = &s.fields[last];
        for (b, acc) in spde_profile.iter_mut().enumerate() {
            *acc += f.integral_over(edges[b], edges[b + 1]) / spde.len() as f64;
        }
        let grid = crate::spectral::dst_inverse(f);
        negative = negative.max(grid.values().iter().fold(0.0f64, |m, &v| m.max(-v)));
    }
    let l1 = |p: &[f64]| {
        p.iter()
            .zip(&spde_profile)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    };
    let l1_distance = l1(&particle_profile);
    let run_l1_distances = run_profiles.iter().map(|p| l1(p)).collect();
    Ok(ComparisonReport {
        rows,
        edges,
        particle_profile,
        spde_profile,
        l1_distance,
        run_l1_distances,
        spde_negative_part: negative,
        discrepancies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> ParticleConfig {
        let mut c = ParticleConfig::new(n, 0.1, 1e-3, 0.01);
        c.branch_rate = BranchRate::Absolute(0.0);
        c
    }

    #[test]
    fn kernels_have_unit_mass_and_odd_derivative() {
        let table = Kernel::Table {
            values: vec![0.0, 0.5, 1.0, 0.5, 0.0],
        };
        for k in [Kernel::Epanechnikov, Kernel::Triangle, table] {
            k.validate().unwrap();
            let n = 200_000;
            let h = 2.0 / n as f64;
            let mass: f64 = (0..n).map(|i| k.value(-1.0 + (i as f64 + 0.5) * h) * h).sum();
            assert!((mass - 1.0).abs() < 1e-6);
            assert_eq!(k.derivative(0.0), 0.0);
            for x in [0.1, 0.37, 0.9] {
                assert_eq!(k.derivative(x), -k.derivative(-x));
            }
        }
        assert!(Kernel::Table {
            values: vec![0.0, 2.0, 0.0]
        }
        .validate()
        .is_err());
    }

    #[test]
    fn offspring_law_must_be_critical() {
        assert!(OffspringLaw::new(vec![0.4, 0.0, 0.6]).is_err());
        assert!(OffspringLaw::new(vec![0.25, 0.5, 0.25]).is_ok());
        assert_eq!(OffspringLaw::binary().variance(), 1.0);
    }

    #[test]
    fn single_particle_does_not_move() {
        let c = cfg(1);
        let mut s = ParticleState::new(vec![0.4]).unwrap();
        drift_step(&mut s, &c, &mut Vec::new());
        assert_eq!(s.positions, vec![0.4]);
    }

    #[test]
    fn triangle_counts_match_direct_sum_with_ties() {
        let mut c = cfg(40);
        c.kernel = Kernel::Triangle;
        let mut y = sample_positions(|_| 1.0, (0.3, 0.6), 30, 4, 0).unwrap();
        y.extend_from_slice(&[0.45; 5]);
        y.extend_from_slice(&[y[3]; 5]);
        let s = ParticleState::new(y).unwrap();
        let mut fast = vec![0.0; s.alive_count()];
        drift_velocities(&s.positions, &c, &mut fast);
        for (i, &yi) in s.positions.iter().enumerate() {
            let direct: f64 = s
                .positions
                .iter()
                .map(|&yj| -Kernel::Triangle.derivative((yi - yj) / c.epsilon))
                .sum::<f64>()
                / (c.epsilon * c.epsilon * c.n_scale as f64);
            assert!((fast[i] - direct).abs() < 1e-12, "{i}");
        }
    }

    #[test]
    fn pair_moves_apart_symmetrically() {
        for kernel in [
            Kernel::Epanechnikov,
            Kernel::Triangle,
            Kernel::Table {
                values: vec![0.0, 1.0, 0.0],
            },
        ] {
            let mut c = cfg(2);
            c.kernel = kernel;
            let mut v = [0.0; 2];
            drift_velocities(&[0.45, 0.5], &c, &mut v);
            assert!(v[0] < 0.0 && v[1] > 0.0);
            assert!((v[0] + v[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn prefix_sum_drift_matches_direct_sum() {
        let c = cfg(500);
        let y = sample_positions(|x| x * (1.0 - x), (0.0, 1.0), 500, 1, 0).unwrap();
        let mut s = ParticleState::new(y).unwrap();
        let mut fast = vec![0.0; 500];
        drift_velocities(&s.positions, &c, &mut fast);
        let direct: Vec<f64> = s
            .positions
            .iter()
            .map(|&yi| {
                s.positions
                    .iter()
                    .map(|&yj| -Kernel::Epanechnikov.derivative((yi - yj) / c.epsilon))
                    .sum::<f64>()
                    / (c.epsilon * c.epsilon * c.n_scale as f64)
            })
            .collect();
        for (a, b) in fast.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
        drift_step(&mut s, &c, &mut Vec::new());
        assert!(s.positions.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn drift_conserves_center_of_mass() {
        let mut c = cfg(10_000);
        c.epsilon = 0.05;
        let y = sample_positions(|x| x * (1.0 - x), (0.0, 1.0), 10_000, 5, 0).unwrap();
        let mut s = ParticleState::new(y).unwrap();
        let before = s.center_of_mass();
        let mut scratch = Vec::new();
        for _ in 0..10 {
            drift_step(&mut s, &c, &mut scratch);
        }
        assert!((s.center_of_mass() - before).abs() < 1e-10);
        assert_eq!(s.alive_count(), 10_000);
    }

    #[test]
    fn identity_dynamics() {
        let mut c = cfg(50);
        c.drift_gain = 0.0;
        c.branch_rate = BranchRate::Absolute(5.0);
        c.offspring = OffspringLaw::identity();
        let y = sample_positions(|_| 1.0, (0.0, 1.0), 50, 2, 0).unwrap();
        let run = simulate(&c, y.clone(), 0).unwrap();
        let mut sorted = y;
        sorted.sort_by(f64::total_cmp);
        assert_eq!(run.final_state().positions, sorted);
    }

    #[test]
    fn tau_leap_limit_is_enforced() {
        let mut c = cfg(10);
        c.branch_rate = BranchRate::Absolute(200.0);
        assert!(c.validate().is_err());
        c.branch_rate = BranchRate::PerScale(1.0);
        c.n_scale = 1000;
        assert!(c.validate().is_err());
    }

    #[test]
    fn histogram_mass_is_exact() {
        let y = vec![-0.5, 0.1, 0.2, 0.2, 0.99, 1.7];
        let s = ParticleState::new(y).unwrap();
        for bins in [1, 3, 7, 64] {
            let h = empirical_measure(&s, 4, bins, (0.0, 1.0), None).unwrap();
            assert_eq!(h.counts.iter().sum::<usize>(), 6);
            assert_eq!(h.total_mass(), 6.0 / 4.0);
        }
        let one = ParticleState::new(vec![0.3]).unwrap();
        assert_eq!(
            empirical_measure(&one, 10, 1, (0.0, 1.0), None).unwrap().masses,
            vec![0.1]
        );
    }

    #[test]
    fn uniform_cloud_gives_flat_histogram() {
        let n = 100_000;
        let s = ParticleState::new(sample_positions(|_| 1.0, (0.0, 1.0), n, 9, 0).unwrap()).unwrap();
        let bins = 20;
        let h = empirical_measure(&s, n, bins, (0.0, 1.0), None).unwrap();
        let p = 1.0 / bins as f64;
        let sd = libm::sqrt(p * (1.0 - p) / n as f64);
        for m in &h.masses {
            assert!((m - p).abs() < 4.0 * sd, "{m}");
        }
    }

    #[test]
    fn zero_inputs_compare_to_zero() {
        let c = cfg(100);
        let run = simulate(&c, Vec::new(), 0).unwrap();
        let spde = SpdeSample {
            times: run.snapshots.iter().map(|s| s.t).collect(),
            fields: vec![SpectralCoeffs::zeros(15); run.snapshots.len()],
        };
        let r = compare_to_spde(&[run], 100, &[spde], 10).unwrap();
        assert_eq!(r.l1_distance, 0.0);
        assert!(r
            .rows
            .iter()
            .all(|row| row.particle_mass.mean == 0.0 && row.spde_mass.mean == 0.0));
    }

    #[test]
    fn mismatched_horizons_are_rejected() {
        let c = cfg(100);
        let run = simulate(&c, vec![0.5], 0).unwrap();
        let spde = SpdeSample {
            times: vec![0.0, 0.5],
            fields: vec![SpectralCoeffs::zeros(15); 2],
        };
        assert!(compare_to_spde(&[run], 100, &[spde], 10).is_err());
    }

    #[test]
    fn spde_second_moment_closed_form() {
        let len = 255;
        let g = crate::spectral::GridFunction::from_fn(len, |x| x * (1.0 - x)).unwrap();
        let c = crate::spectral::dst_forward(&g);
        // ∫(x-½)² x(1-x) dx = 1/120
        assert!((spde_second_moment(&c) - 1.0 / 120.0).abs() < 1e-5);
    }
}
