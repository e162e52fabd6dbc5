//! IMEX Euler–Maruyama integration of
//!
//! ```text
//! dv = ∂²ₓ(ν v + g·v^[m]) dt + Σ_{k≤n} σ(x, v) eᵏ dwᵏ
//! ```
//!
//! in the sine basis. One step reads
//!
//! ```text
//! v̂⁺_k = (v̂_k - dt λ_k g (v^[m])^_k + (σ(v) Σ eˡ Δwˡ)^_k) / (1 + dt ν λ_k)
//! ```
//!
//! so the viscous term is implicit and the porous-medium term and the noise
//! are explicit. Nonlinear terms are evaluated pointwise on a grid refined by
//! `oversample` and projected back onto the first `J` modes.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use crate::error::{invalid, Result};
use crate::noise::{noise_sum, NoiseStream, WienerIncrements};
use crate::sigma::SigmaSpec;
use crate::spectral::{
    eigenvalue, eigenvalue_pow, lp_norm_pow, node, oversampled_len, signed_power, GridFunction,
    SineTransform, SpectralCoeffs,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy {
    Fixed(f64),
    /// `dt = min(dt_max, safety · Δx² / (ν + g m max|v|^{m-1}))`; a step
    /// below `dt_min` trips the blow-up flag.
    Adaptive {
        safety: f64,
        dt_max: f64,
        dt_min: f64,
    },
}

impl DtPolicy {
    pub const DEFAULT_SAFETY: f64 = 0.1;

    pub fn adaptive(dt_max: f64) -> Self {
        Self::Adaptive {
            safety: Self::DEFAULT_SAFETY,
            dt_max,
            dt_min: 1e-14,
        }
    }
}

pub const DEFAULT_BLOWUP_GUARD: f64 = 1e8;
pub const DEFAULT_GAMMA_TRACK: f64 = -0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Porous medium exponent `m > 1`.
    pub m: f64,
    /// Viscosity `ν ∈ (0, 1]`.
    pub nu: f64,
    /// Number of driven noise modes `n ≤ J`.
    pub n_modes: usize,
    /// Interior grid size `J`.
    pub grid_len: usize,
    pub horizon: f64,
    pub dt_policy: DtPolicy,
    /// Scales the `v^[m]` drift; 0 gives the linear heat flow, ½ matches the
    /// particle-system limit.
    pub nonlinear_gain: f64,
    pub sigma: SigmaSpec,
    pub gamma_track: f64,
    pub record_times: Vec<f64>,
    pub oversample: usize,
    pub blowup_guard: f64,
}

impl SolverConfig {
    /// Deterministic configuration recording at `0` and `horizon`.
    pub fn new(m: f64, nu: f64, grid_len: usize, horizon: f64) -> Self {
        Self {
            m,
            nu,
            n_modes: 1,
            grid_len,
            horizon,
            dt_policy: DtPolicy::adaptive(horizon / 16.0),
            nonlinear_gain: 1.0,
            sigma: SigmaSpec::zero(),
            gamma_track: DEFAULT_GAMMA_TRACK,
            record_times: vec![0.0, horizon],
            oversample: 2,
            blowup_guard: DEFAULT_BLOWUP_GUARD,
        }
    }

    /// Couples the viscosity to the mode count as `ν = 1/n`.
    pub fn with_coupled_viscosity(mut self, n_modes: usize) -> Self {
        self.n_modes = n_modes;
        self.nu = 1.0 / n_modes as f64;
        self
    }

    /// `count + 1` equally spaced record times on `[0, horizon]`.
    pub fn with_uniform_records(mut self, count: usize) -> Self {
        self.record_times = (0..=count)
            .map(|i| self.horizon * i as f64 / count as f64)
            .collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m >= 1.0 && self.m.is_finite()) {
            return Err(invalid("m", "porous medium exponent must be ≥ 1"));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(invalid("nu", "viscosity must lie in (0, 1]"));
        }
        if self.grid_len == 0 {
            return Err(invalid("grid_len", "need at least one node"));
        }
        if self.n_modes == 0 || self.n_modes > self.grid_len {
            return Err(invalid("n_modes", "need 1 ≤ n ≤ J"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", "must be positive"));
        }
        match self.dt_policy {
            DtPolicy::Fixed(dt) if !(dt > 0.0 && dt <= self.horizon) => {
                return Err(invalid("dt", "need 0 < dt ≤ T"))
            }
            DtPolicy::Adaptive {
                safety,
                dt_max,
                dt_min,
            } if !(safety > 0.0 && dt_max > 0.0 && dt_min >= 0.0 && dt_min <= dt_max) => {
                return Err(invalid("dt_policy", "need safety > 0 and 0 ≤ dt_min ≤ dt_max"))
            }
            _ => {}
        }
        if !(self.nonlinear_gain >= 0.0 && self.nonlinear_gain.is_finite()) {
            return Err(invalid("nonlinear_gain", "must be finite and nonnegative"));
        }
        if !self.gamma_track.is_finite() {
            return Err(invalid("gamma_track", "must be finite"));
        }
        if self.record_times.is_empty() {
            return Err(invalid("record_times", "need at least one record time"));
        }
        if self
            .record_times
            .iter()
            .any(|&t| !(t >= 0.0 && t <= self.horizon))
            || self.record_times.windows(2).any(|w| w[1] < w[0])
        {
            return Err(invalid("record_times", "must be sorted and inside [0, T]"));
        }
        if self.oversample == 0 {
            return Err(invalid("oversample", "must be ≥ 1"));
        }
        if !(self.blowup_guard > 0.0) {
            return Err(invalid("blowup_guard", "must be positive"));
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        self.sigma.is_identically_zero()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub t: f64,
    pub v: GridFunction,
    pub vhat: SpectralCoeffs,
    pub step_count: u64,
    pub blowup: bool,
}

/// One step of the discrete Itô expansion of `‖v‖²_{H^γ}`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BudgetStep {
    pub t: f64,
    pub dt: f64,
    /// `‖v⁺‖²_{H^γ} - ‖v‖²_{H^γ}`.
    pub d_norm: f64,
    /// `-2ν Σ λ_k^{1+γ} v̂_k² dt`.
    pub drift_visc: f64,
    /// `-2g Σ λ_k^{1+γ} (v^[m])^_k v̂_k dt`.
    pub drift_nl: f64,
    /// `Σ_{k≤n} ‖σ(v)eᵏ‖²_{H^γ} dt`.
    pub ito_correction: f64,
    /// `2 Σ_l λ_l^γ v̂_l (σ(v) Σ eᵏ Δwᵏ)^_l`.
    pub martingale: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBudget {
    pub gamma: f64,
    pub steps: Vec<BudgetStep>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSummary {
    pub max_abs_residual: f64,
    pub cumulative_residual: f64,
    pub steps: usize,
}

impl EnergyBudget {
    pub fn summary(&self) -> BudgetSummary {
        BudgetSummary {
            max_abs_residual: self.steps.iter().fold(0.0, |m, s| m.max(s.residual.abs())),
            cumulative_residual: self.steps.iter().map(|s| s.residual).sum(),
            steps: self.steps.len(),
        }
    }
}

/// Snapshot at a record time.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub step: u64,
    pub vhat: SpectralCoeffs,
    pub v: GridFunction,
    pub blowup: bool,
    /// `‖v‖²_{H^γ}` with `γ = gamma_track`.
    pub hgamma_sq: f64,
    /// `‖v‖^{m+1}_{L^{m+1}}`.
    pub lm1_pow: f64,
    /// `‖v^[(m+1)/2]‖²_{H^{1+γ}}`.
    pub power_h1g_sq: f64,
    /// `∫_0^t ‖v‖^{m+1}_{L^{m+1}} ds` (left-point rule over the steps).
    pub lm1_integral: f64,
    /// `∫_0^t ‖v^[(m+1)/2]‖²_{H^{1+γ}} ds`.
    pub power_integral: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub m: f64,
    pub gamma: f64,
    pub records: Vec<Record>,
    pub budget: Option<EnergyBudget>,
    pub blowup: bool,
    pub steps: u64,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.t)
    }

    pub fn last(&self) -> &Record {
        self.records
            .last()
            .expect("trajectory has at least the initial record")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackOptions {
    /// Record the per-step energy budget.
    pub budget: bool,
    /// Accumulate the time integrals reported in [`Record`].
    pub integrals: bool,
}

struct Scratch {
    padded: Vec<f64>,
    vf: Vec<f64>,
    work: Vec<f64>,
    fine_hat: Vec<f64>,
    w_hat: Vec<f64>,
    g_hat: Vec<f64>,
    sig: Vec<f64>,
}

impl Scratch {
    fn new(len: usize, fine_len: usize) -> Self {
        Self {
            padded: vec![0.0; fine_len],
            vf: vec![0.0; fine_len],
            work: vec![0.0; fine_len],
            fine_hat: vec![0.0; fine_len],
            w_hat: vec![0.0; len],
            g_hat: vec![0.0; len],
            sig: vec![0.0; fine_len],
        }
    }
}

/// Time stepper for one configuration. Holds immutable transform plans and
/// eigenvalue tables; share it across paths and threads.
#[derive(Debug, Clone)]
pub struct Solver {
    cfg: SolverConfig,
    base: SineTransform,
    fine: SineTransform,
    x_fine: Vec<f64>,
    lambda: Vec<f64>,
    lambda_gamma: Vec<f64>,
    lambda_1g: Vec<f64>,
    lambda_1g_fine: Vec<f64>,
}

impl Solver {
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let len = cfg.grid_len;
        let fine_len = oversampled_len(len, cfg.oversample);
        let g = cfg.gamma_track;
        Ok(Self {
            base: SineTransform::new(len),
            fine: SineTransform::new(fine_len),
            x_fine: (1..=fine_len).map(|j| node(j, fine_len)).collect(),
            lambda: (1..=len).map(eigenvalue).collect(),
            lambda_gamma: (1..=len).map(|k| eigenvalue_pow(k, g)).collect(),
            lambda_1g: (1..=len).map(|k| eigenvalue_pow(k, 1.0 + g)).collect(),
            lambda_1g_fine: (1..=fine_len).map(|k| eigenvalue_pow(k, 1.0 + g)).collect(),
            cfg,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn grid_len(&self) -> usize {
        self.cfg.grid_len
    }

    /// Accepts initial coefficients of any length; extra modes are dropped.
    pub fn initial_state(&self, v0: &SpectralCoeffs) -> PathState {
        let vhat = v0.resized(self.cfg.grid_len);
        let v = self.base.inverse(&vhat);
        let blowup = !self.within_guard(v.values());
        PathState {
            t: 0.0,
            v,
            vhat,
            step_count: 0,
            blowup,
        }
    }

    pub fn initial_state_from_grid(&self, v0: &GridFunction) -> Result<PathState> {
        if v0.len() != self.cfg.grid_len {
            return Err(crate::Error::LengthMismatch {
                expected: self.cfg.grid_len,
                actual: v0.len(),
            });
        }
        Ok(self.initial_state(&self.base.forward(v0)))
    }

    fn within_guard(&self, values: &[f64]) -> bool {
        values
            .iter()
            .all(|v| v.is_finite() && v.abs() <= self.cfg.blowup_guard)
    }

    fn fill_fine(&self, vhat: &[f64], s: &mut Scratch) {
        s.padded.fill(0.0);
        s.padded[..vhat.len()].copy_from_slice(vhat);
        self.fine.inverse_into(&s.padded, &mut s.vf);
    }

    /// Step size the adaptive policy would take from `vhat`'s fine-grid values.
    fn adaptive_dt(&self, vf: &[f64]) -> f64 {
        match self.cfg.dt_policy {
            DtPolicy::Fixed(dt) => dt,
            DtPolicy::Adaptive { safety, dt_max, .. } => {
                let vmax = vf.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let dx = 1.0 / (self.cfg.grid_len + 1) as f64;
                let stiff =
                    self.cfg.nu + self.cfg.nonlinear_gain * self.cfg.m * libm::pow(vmax, self.cfg.m - 1.0);
                (safety * dx * dx / stiff).min(dt_max)
            }
        }
    }

    /// Step size chosen from `state` by the configured policy.
    pub fn choose_dt(&self, state: &PathState) -> f64 {
        let mut s = Scratch::new(self.cfg.grid_len, self.fine.len());
        self.fill_fine(state.vhat.coeffs(), &mut s);
        self.adaptive_dt(&s.vf)
    }

    /// Advances `state` by `dt`. Expects `s.vf` to hold the fine-grid values
    /// of `state.vhat`.
    fn advance(
        &self,
        state: &mut PathState,
        dt: f64,
        inc: Option<&WienerIncrements>,
        s: &mut Scratch,
        budget: Option<&mut Vec<BudgetStep>>,
    ) {
        let cfg = &self.cfg;
        let len = cfg.grid_len;
        let gain = cfg.nonlinear_gain;
        if gain != 0.0 {
            for (w, &v) in s.work.iter_mut().zip(&s.vf) {
                *w = signed_power(v, cfg.m);
            }
            self.fine.forward_into(&s.work, &mut s.fine_hat);
            s.w_hat.copy_from_slice(&s.fine_hat[..len]);
        } else {
            s.w_hat.fill(0.0);
        }
        let noisy = inc.is_some() && !cfg.sigma.is_identically_zero();
        if let (true, Some(inc)) = (noisy, inc) {
            for ((sg, &x), &v) in s.sig.iter_mut().zip(&self.x_fine).zip(&s.vf) {
                *sg = cfg.sigma.eval(x, v);
            }
            noise_sum(&self.fine, inc, &mut s.work);
            for (w, sg) in s.work.iter_mut().zip(&s.sig) {
                *w *= sg;
            }
            self.fine.forward_into(&s.work, &mut s.fine_hat);
            s.g_hat.copy_from_slice(&s.fine_hat[..len]);
        } else {
            s.g_hat.fill(0.0);
        }

        let budget_step = budget.map(|b| {
            let vhat = state.vhat.coeffs();
            let mut step = BudgetStep {
                t: state.t,
                dt,
                ..BudgetStep::default()
            };
            for k in 0..len {
                step.drift_visc += -2.0 * cfg.nu * self.lambda_1g[k] * vhat[k] * vhat[k] * dt;
                step.drift_nl += -2.0 * gain * self.lambda_1g[k] * s.w_hat[k] * vhat[k] * dt;
                step.martingale += 2.0 * self.lambda_gamma[k] * vhat[k] * s.g_hat[k];
            }
            if noisy {
                step.ito_correction = self.ito_correction(s) * dt;
            }
            (b, step, self.hgamma_sq(vhat))
        });

        let vhat = state.vhat.coeffs_mut();
        for k in 0..len {
            let explicit = vhat[k] - dt * self.lambda[k] * gain * s.w_hat[k] + s.g_hat[k];
            vhat[k] = explicit / (1.0 + dt * cfg.nu * self.lambda[k]);
        }
        state.t += dt;
        state.step_count += 1;

        if let Some((b, mut step, before)) = budget_step {
            step.d_norm = self.hgamma_sq(state.vhat.coeffs()) - before;
            step.residual =
                step.d_norm - (step.drift_visc + step.drift_nl + step.ito_correction + step.martingale);
            b.push(step);
        }

        self.base.inverse_into(state.vhat.coeffs(), state.v.values_mut());
        state.blowup = !self.within_guard(state.v.values());
    }

    /// `Σ_{k≤n} ‖P_J(σ(v) eᵏ)‖²_{H^γ}` with `σ(v)` in `s.sig`.
    fn ito_correction(&self, s: &mut Scratch) -> f64 {
        let fine_len = self.fine.len();
        let mut total = 0.0;
        for k in 1..=self.cfg.n_modes {
            for (j, (w, sg)) in s.work.iter_mut().zip(&s.sig).enumerate() {
                let ek = SQRT_2 * libm::sin(PI * (k * (j + 1)) as f64 / (fine_len + 1) as f64);
                *w = sg * ek;
            }
            self.fine.forward_into(&s.work, &mut s.fine_hat);
            total += s.fine_hat[..self.cfg.grid_len]
                .iter()
                .zip(&self.lambda_gamma)
                .map(|(c, l)| l * c * c)
                .sum::<f64>();
        }
        total
    }

    fn hgamma_sq(&self, vhat: &[f64]) -> f64 {
        vhat.iter().zip(&self.lambda_gamma).map(|(c, l)| l * c * c).sum()
    }

    /// `(‖v‖^{m+1}_{L^{m+1}}, ‖v^[(m+1)/2]‖²_{H^{1+γ}})` from the fine-grid values.
    fn power_functionals(&self, s: &mut Scratch) -> (f64, f64) {
        let m = self.cfg.m;
        let lm1 = lp_norm_pow(&s.vf, m + 1.0);
        for (w, &v) in s.work.iter_mut().zip(&s.vf) {
            *w = signed_power(v, 0.5 * (m + 1.0));
        }
        self.fine.forward_into(&s.work, &mut s.fine_hat);
        let p = s
            .fine_hat
            .iter()
            .zip(&self.lambda_1g_fine)
            .map(|(c, l)| l * c * c)
            .sum();
        (lm1, p)
    }

    /// One IMEX step of length `dt` (or the policy's step when `dt` is None).
    pub fn step(&self, state: &PathState, dt: Option<f64>, inc: Option<&WienerIncrements>) -> PathState {
        let mut s = Scratch::new(self.cfg.grid_len, self.fine.len());
        self.fill_fine(state.vhat.coeffs(), &mut s);
        let dt = dt
            .or(inc.map(|i| i.dt))
            .unwrap_or_else(|| self.adaptive_dt(&s.vf));
        let mut next = state.clone();
        if !state.blowup {
            self.advance(&mut next, dt, inc, &mut s, None);
        }
        next
    }

    fn record(&self, state: &PathState, s: &mut Scratch, integrals: (f64, f64)) -> Record {
        self.fill_fine(state.vhat.coeffs(), s);
        let (lm1_pow, power_h1g_sq) = self.power_functionals(s);
        Record {
            t: state.t,
            step: state.step_count,
            vhat: state.vhat.clone(),
            v: state.v.clone(),
            blowup: state.blowup,
            hgamma_sq: self.hgamma_sq(state.vhat.coeffs()),
            lm1_pow,
            power_h1g_sq,
            lm1_integral: integrals.0,
            power_integral: integrals.1,
        }
    }

    /// Integrates from `v0` up to the last record time.
    ///
    /// Fixed steps snap record times to the nearest step boundary; adaptive
    /// steps are shortened to land on them exactly. `noise` is ignored for a
    /// zero diffusion coefficient. A blow-up truncates the trajectory after a
    /// final flagged record.
    pub fn run_path(
        &self,
        v0: &SpectralCoeffs,
        noise: Option<&NoiseStream>,
        opts: TrackOptions,
    ) -> Trajectory {
        let cfg = &self.cfg;
        let mut state = self.initial_state(v0);
        let mut s = Scratch::new(cfg.grid_len, self.fine.len());
        let mut budget = opts.budget.then(Vec::new);
        let mut integrals = (0.0, 0.0);
        let mut records = Vec::with_capacity(cfg.record_times.len());
        let noise = noise.filter(|_| !cfg.is_deterministic());

        let stops: Vec<u64> = match cfg.dt_policy {
            DtPolicy::Fixed(dt) => cfg
                .record_times
                .iter()
                .map(|&t| libm::round(t / dt) as u64)
                .collect(),
            DtPolicy::Adaptive { .. } => Vec::new(),
        };

        let mut next = 0usize;
        while next < cfg.record_times.len() {
            let target = cfg.record_times[next];
            let at_stop = match cfg.dt_policy {
                DtPolicy::Fixed(_) => state.step_count >= stops[next],
                DtPolicy::Adaptive { .. } => state.t >= target,
            };
            if at_stop || state.blowup {
                records.push(self.record(&state, &mut s, integrals));
                if state.blowup {
                    break;
                }
                next += 1;
                continue;
            }
            self.fill_fine(state.vhat.coeffs(), &mut s);
            let dt = match cfg.dt_policy {
                DtPolicy::Fixed(dt) => dt,
                DtPolicy::Adaptive { dt_min, .. } => {
                    let dt = self.adaptive_dt(&s.vf);
                    if dt < dt_min {
                        state.blowup = true;
                        continue;
                    }
                    let remaining = target - state.t;
                    if dt >= remaining * (1.0 - 1e-12) {
                        remaining
                    } else {
                        dt
                    }
                }
            };
            if opts.integrals {
                let (lm1, p) = self.power_functionals(&mut s);
                integrals.0 += lm1 * dt;
                integrals.1 += p * dt;
            }
            let inc = noise.map(|n| n.increments_with_dt(state.step_count, dt));
            let landing = matches!(cfg.dt_policy, DtPolicy::Adaptive { .. }) && dt == target - state.t;
            self.advance(&mut state, dt, inc.as_ref(), &mut s, budget.as_mut());
            match cfg.dt_policy {
                DtPolicy::Fixed(dt) => state.t = state.step_count as f64 * dt,
                DtPolicy::Adaptive { .. } if landing => state.t = target,
                _ => {}
            }
        }

        Trajectory {
            m: cfg.m,
            gamma: cfg.gamma_track,
            blowup: state.blowup,
            steps: state.step_count,
            budget: budget.map(|steps| EnergyBudget {
                gamma: cfg.gamma_track,
                steps,
            }),
            records,
        }
    }
}

/// Convenience wrapper: builds a [`Solver`] for `cfg` and takes one step.
pub fn step(state: &PathState, cfg: &SolverConfig, inc: Option<&WienerIncrements>) -> Result<PathState> {
    Ok(Solver::new(cfg.clone())?.step(state, None, inc))
}

pub fn run_path(
    cfg: &SolverConfig,
    v0: &SpectralCoeffs,
    noise: Option<&NoiseStream>,
    opts: TrackOptions,
) -> Result<Trajectory> {
    Ok(Solver::new(cfg.clone())?.run_path(v0, noise, opts))
}

/// Noise-free run; rejects a nonzero diffusion coefficient.
pub fn run_deterministic(cfg: &SolverConfig, v0: &SpectralCoeffs) -> Result<Trajectory> {
    if !cfg.is_deterministic() {
        return Err(invalid("sigma", "deterministic run requires σ ≡ 0"));
    }
    run_path(cfg, v0, None, TrackOptions::default())
}

pub fn energy_budget(trajectory: &Trajectory) -> Option<BudgetSummary> {
    trajectory.budget.as_ref().map(EnergyBudget::summary)
}

/// Exact sine coefficients of the constant function `a` on `(0, 1)`.
pub fn constant_coeffs(a: f64, len: usize) -> SpectralCoeffs {
    SpectralCoeffs::from_vec_unchecked(
        (1..=len)
            .map(|k| {
                if k % 2 == 1 {
                    a * 2.0 * SQRT_2 / (PI * k as f64)
                } else {
                    0.0
                }
            })
            .collect(),
    )
}

/// Source-type (Barenblatt) solution of `∂ₜu = ∂²ₓ(u^m)` on the line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barenblatt {
    pub m: f64,
    pub t0: f64,
    pub x0: f64,
    /// The constant `C` in `τ^{-α}(C - κ(x-x₀)²τ^{-2α})₊^{1/(m-1)}`.
    pub mass_param: f64,
}

impl Barenblatt {
    pub fn new(m: f64, t0: f64, x0: f64, mass_param: f64) -> Result<Self> {
        if !(m > 1.0 && m.is_finite()) {
            return Err(invalid("m", "Barenblatt profile needs m > 1"));
        }
        if !(t0 > 0.0 && mass_param > 0.0) {
            return Err(invalid("t0", "need t0 > 0 and a positive mass parameter"));
        }
        Ok(Self {
            m,
            t0,
            x0,
            mass_param,
        })
    }

    fn alpha(&self) -> f64 {
        1.0 / (self.m + 1.0)
    }

    fn kappa(&self) -> f64 {
        (self.m - 1.0) * self.alpha() / (2.0 * self.m)
    }

    /// Half-width of the support at time `t` (measured from `t = 0`, i.e.
    /// at self-similar time `t + t0`).
    pub fn support_radius(&self, t: f64) -> f64 {
        libm::sqrt(self.mass_param / self.kappa()) * libm::pow(t + self.t0, self.alpha())
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        let tau = t + self.t0;
        let a = self.alpha();
        let inner = self.mass_param - self.kappa() * (x - self.x0) * (x - self.x0) * libm::pow(tau, -2.0 * a);
        if inner <= 0.0 {
            0.0
        } else {
            libm::pow(tau, -a) * libm::pow(inner, 1.0 / (self.m - 1.0))
        }
    }

    /// Total mass, independent of `t`.
    pub fn mass(&self) -> f64 {
        // ∫(C - κξ²)₊^{1/(m-1)} dξ = √(C/κ) C^{1/(m-1)} B(1/2, m/(m-1))
        let q = 1.0 / (self.m - 1.0);
        let beta = libm::tgamma(0.5) * libm::tgamma(q + 1.0) / libm::tgamma(q + 1.5);
        libm::sqrt(self.mass_param / self.kappa()) * libm::pow(self.mass_param, q) * beta
    }

    pub fn fits_inside(&self, t: f64) -> bool {
        let r = self.support_radius(t);
        self.x0 - r > 0.0 && self.x0 + r < 1.0
    }

    /// Nodal samples at time `t`; rejects profiles whose support reaches the
    /// boundary.
    pub fn sample(&self, t: f64, len: usize) -> Result<GridFunction> {
        if !self.fits_inside(t) {
            return Err(invalid("t", "Barenblatt support reaches the Dirichlet boundary"));
        }
        GridFunction::from_fn(len, |x| self.value(t, x))
    }
}

pub fn barenblatt(m: f64, t: f64, t0: f64, x0: f64, mass_param: f64, len: usize) -> Result<GridFunction> {
    Barenblatt::new(m, t0, x0, mass_param)?.sample(t, len)
}

/// `∫|u - v|` on the grid (trapezoid with zero boundary values).
pub fn l1_distance(u: &GridFunction, v: &GridFunction) -> f64 {
    let h = u.spacing();
    h * u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{derive_stream, NoiseConfig};

    fn linear_cfg(len: usize, dt: f64, steps: usize) -> SolverConfig {
        let mut cfg = SolverConfig::new(2.0, 0.5, len, dt * steps as f64);
        cfg.dt_policy = DtPolicy::Fixed(dt);
        cfg.nonlinear_gain = 0.0;
        cfg
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let mut cfg = SolverConfig::new(2.0, 0.3, 31, 0.01);
        cfg.sigma = SigmaSpec::critical_power(0.5, 2.0);
        cfg.n_modes = 8;
        let stream = derive_stream(NoiseConfig {
            n_modes: 8,
            dt: 1e-4,
            master_seed: 1,
            path_index: 0,
        })
        .unwrap();
        let tr = run_path(
            &cfg,
            &SpectralCoeffs::zeros(31),
            Some(&stream),
            TrackOptions::default(),
        )
        .unwrap();
        assert!(tr.last().vhat.is_zero());
    }

    #[test]
    fn linear_mode_matches_implicit_euler() {
        let (dt, steps) = (1e-3, 200);
        let cfg = linear_cfg(15, dt, steps);
        let v0 = SpectralCoeffs::new((1..=15).map(|k| 1.0 / k as f64).collect()).unwrap();
        let tr = run_deterministic(&cfg, &v0).unwrap();
        let last = tr.last();
        assert_eq!(last.step, steps as u64);
        for k in 1..=15 {
            let want = libm::pow(1.0 + cfg.nu * eigenvalue(k) * dt, -(steps as f64)) / k as f64;
            let got = last.vhat.coeffs()[k - 1];
            assert!((got - want).abs() <= 1e-12 * want.abs(), "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn record_at_zero_only_returns_initial_state() {
        let mut cfg = linear_cfg(7, 1e-3, 10);
        cfg.record_times = alloc::vec![0.0];
        let v0 = SpectralCoeffs::basis(7, 1);
        let tr = run_deterministic(&cfg, &v0).unwrap();
        assert_eq!(tr.records.len(), 1);
        assert_eq!(tr.records[0].vhat, v0);
        assert_eq!(tr.steps, 0);
    }

    #[test]
    fn flow_commutes_with_negation() {
        let mut cfg = SolverConfig::new(2.5, 0.1, 31, 0.02);
        cfg.record_times = alloc::vec![0.01, 0.02];
        let v0 = SpectralCoeffs::new((1..=31).map(|k| 3.0 / (k * k) as f64).collect()).unwrap();
        let neg = SpectralCoeffs::new(v0.coeffs().iter().map(|c| -c).collect()).unwrap();
        let a = run_deterministic(&cfg, &v0).unwrap();
        let b = run_deterministic(&cfg, &neg).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            for (x, y) in ra.vhat.coeffs().iter().zip(rb.vhat.coeffs()) {
                assert!((x + y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn deterministic_runs_are_identical() {
        let cfg = SolverConfig::new(2.0, 0.1, 31, 0.01);
        let v0 = constant_coeffs(5.0, 31);
        assert_eq!(
            run_deterministic(&cfg, &v0).unwrap(),
            run_deterministic(&cfg, &v0).unwrap()
        );
    }

    #[test]
    fn seeded_runs_are_identical() {
        let mut cfg = SolverConfig::new(2.0, 0.1, 31, 0.01).with_uniform_records(4);
        cfg.sigma = SigmaSpec::critical_power(0.3, 2.0);
        cfg.n_modes = 16;
        let noise = NoiseConfig {
            n_modes: 16,
            dt: 1.0,
            master_seed: 99,
            path_index: 4,
        };
        let v0 = SpectralCoeffs::basis(31, 1);
        let run = || {
            let stream = derive_stream(noise).unwrap();
            run_path(&cfg, &v0, Some(&stream), TrackOptions::default()).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn blowup_is_flagged_not_panicked() {
        let mut cfg = SolverConfig::new(2.0, 0.1, 15, 1.0);
        cfg.blowup_guard = 10.0;
        let tr = run_deterministic(&cfg, &constant_coeffs(20.0, 15)).unwrap();
        assert!(tr.blowup);
        assert_eq!(tr.records.len(), 1);
        assert!(tr.records[0].blowup);
    }

    #[test]
    fn deterministic_budget_terms_are_dissipative() {
        let mut cfg = SolverConfig::new(2.0, 0.2, 63, 0.02);
        cfg.record_times = alloc::vec![0.02];
        let v0 = constant_coeffs(3.0, 63);
        let tr = run_path(
            &cfg,
            &v0,
            None,
            TrackOptions {
                budget: true,
                integrals: false,
            },
        )
        .unwrap();
        let budget = tr.budget.as_ref().unwrap();
        for s in &budget.steps {
            assert!(s.drift_visc <= 0.0);
            assert!(s.drift_nl <= 1e-12, "{s:?}");
            assert!(s.d_norm <= s.residual.abs() + 1e-15);
            assert_eq!((s.ito_correction, s.martingale), (0.0, 0.0));
        }
    }

    #[test]
    fn zero_initial_data_has_empty_budget_terms() {
        let mut cfg = SolverConfig::new(2.0, 0.2, 15, 0.01);
        cfg.sigma = SigmaSpec::critical_power(0.2, 2.0);
        cfg.n_modes = 4;
        let stream = derive_stream(NoiseConfig {
            n_modes: 4,
            dt: 1.0,
            master_seed: 3,
            path_index: 0,
        })
        .unwrap();
        let tr = run_path(
            &cfg,
            &SpectralCoeffs::zeros(15),
            Some(&stream),
            TrackOptions {
                budget: true,
                integrals: true,
            },
        )
        .unwrap();
        for s in &tr.budget.unwrap().steps {
            assert_eq!(
                [
                    s.d_norm,
                    s.drift_visc,
                    s.drift_nl,
                    s.ito_correction,
                    s.martingale,
                    s.residual
                ],
                [0.0; 6]
            );
        }
    }

    #[test]
    fn linear_budget_residual_is_first_order_in_dt() {
        let run = |dt: f64| {
            let mut cfg = linear_cfg(15, dt, (0.01 / dt) as usize);
            cfg.record_times = alloc::vec![cfg.horizon];
            let tr = run_path(
                &cfg,
                &SpectralCoeffs::basis(15, 1),
                None,
                TrackOptions {
                    budget: true,
                    integrals: false,
                },
            )
            .unwrap();
            energy_budget(&tr).unwrap().cumulative_residual.abs()
        };
        let (a, b) = (run(1e-3), run(5e-4));
        assert!(b < a && (a / b - 2.0).abs() < 0.2, "{a} {b}");
    }

    #[test]
    fn barenblatt_profile_properties() {
        let b = Barenblatt::new(2.0, 0.01, 0.5, 0.05).unwrap();
        let n = 4095;
        let mass_at = |t: f64| {
            let g = b.sample(t, n).unwrap();
            assert!(g.values().iter().all(|&v| v >= 0.0));
            assert_eq!(g.values()[0], 0.0);
            g.values().iter().sum::<f64>() / (n + 1) as f64
        };
        let (m0, m1) = (mass_at(0.0), mass_at(0.05));
        assert!((m0 - b.mass()).abs() < 1e-4 * b.mass());
        assert!((m1 - b.mass()).abs() < 1e-4 * b.mass());
        assert!(barenblatt(2.0, 100.0, 0.01, 0.5, 0.05, 31).is_err());
    }

    #[test]
    fn barenblatt_satisfies_the_pme_in_its_support() {
        // centered finite-difference residual of ∂ₜu - ∂²ₓ(u^m) at interior
        // points of the support, shrinking under refinement
        let b = Barenblatt::new(2.0, 0.01, 0.5, 0.05).unwrap();
        let (t, x) = (0.02, 0.52);
        let residual = |h: f64| {
            let ut = (b.value(t + h * h, x) - b.value(t - h * h, x)) / (2.0 * h * h);
            let p = |y: f64| libm::pow(b.value(t, y), 2.0);
            let uxx = (p(x + h) - 2.0 * p(x) + p(x - h)) / (h * h);
            (ut - uxx).abs()
        };
        let (r1, r2) = (residual(1e-2), residual(5e-3));
        assert!(r2 < r1 / 3.0, "{r1} {r2}");
    }

    #[test]
    fn config_validation() {
        let ok = SolverConfig::new(2.0, 0.5, 15, 1.0);
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.nu = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.n_modes = 16;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.record_times = alloc::vec![0.5, 0.2];
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.dt_policy = DtPolicy::Fixed(2.0);
        assert!(bad.validate().is_err());
    }
}
