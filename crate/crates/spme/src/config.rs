//! INI configuration layered over the embedded defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use spme_core::estimators::EnsembleConfig;
use spme_core::inequality::{delta_threshold, ScanSpec};
use spme_core::particles::{BranchRate, Kernel, OffspringLaw, ParticleConfig};
use spme_core::sigma::SigmaSpec;
use spme_core::solver::{constant_coeffs, Barenblatt, DtPolicy, SolverConfig};
use spme_core::spectral::{dst_forward, GridFunction, SpectralCoeffs};

use crate::error::CliError;

pub const DEFAULTS: &str = include_str!("defaults.ini");

type Sections = BTreeMap<String, BTreeMap<String, String>>;

/// Fully resolved key/value configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    sections: Sections,
}

fn to_sections(ini: &Ini) -> Result<Sections, CliError> {
    let mut out = Sections::new();
    for (name, props) in ini.iter() {
        let Some(name) = name else {
            if props.iter().next().is_some() {
                return Err(CliError::config("keys outside of a section"));
            }
            continue;
        };
        let sec = out.entry(name.to_string()).or_default();
        for (k, v) in props.iter() {
            sec.insert(k.to_string(), v.trim().to_string());
        }
    }
    Ok(out)
}

impl Config {
    pub fn defaults() -> Self {
        let ini = Ini::load_from_str(DEFAULTS).expect("embedded defaults parse");
        Self {
            sections: to_sections(&ini).expect("embedded defaults are sectioned"),
        }
    }

    /// Overlays `text` on the defaults, rejecting unknown sections and keys.
    pub fn from_str_overriding(text: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::config(format!("parse error: {e}")))?;
        let mut cfg = Self::defaults();
        for (name, values) in to_sections(&ini)? {
            let sec = cfg
                .sections
                .get_mut(&name)
                .ok_or_else(|| CliError::config(format!("unknown section [{name}]")))?;
            for (k, v) in values {
                let slot = sec
                    .get_mut(&k)
                    .ok_or_else(|| CliError::config(format!("unknown key `{k}` in [{name}]")))?;
                *slot = v;
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str_overriding(&text)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl ToString) {
        let sec = self.sections.get_mut(section).expect("known section");
        assert!(sec.contains_key(key), "unknown key {section}.{key}");
        sec.insert(key.to_string(), value.to_string());
    }

    pub fn sections(&self) -> &Sections {
        &self.sections
    }

    /// Sections and keys in sorted order, suitable for a manifest.
    pub fn to_ini_string(&self) -> String {
        let mut out = String::new();
        for (name, values) in &self.sections {
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in values {
                out.push_str(&format!("{k} = {v}\n"));
            }
            out.push('\n');
        }
        out
    }

    pub fn raw(&self, section: &str, key: &str) -> &str {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .unwrap_or_else(|| panic!("no default for {section}.{key}"))
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<T, CliError> {
        let raw = self.raw(section, key);
        raw.parse()
            .map_err(|_| CliError::config(format!("{section}.{key}: cannot parse `{raw}`")))
    }

    pub fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Vec<T>, CliError> {
        self.raw(section, key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::config(format!("{section}.{key}: cannot parse `{s}`")))
            })
            .collect()
    }

    /// `None` for the literal `off`.
    pub fn optional<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, CliError> {
        if self.raw(section, key).eq_ignore_ascii_case("off") {
            Ok(None)
        } else {
            self.get(section, key).map(Some)
        }
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.get("run", "seed")
    }

    pub fn workers(&self) -> Result<usize, CliError> {
        self.get("run", "workers")
    }

    pub fn sigma(&self, m: f64, gamma: f64) -> Result<SigmaSpec, CliError> {
        let kind = self.raw("sigma", "kind");
        if kind == "zero" {
            return Ok(SigmaSpec::zero());
        }
        let value = self.raw("sigma", "value");
        let auto = value.eq_ignore_ascii_case("auto");
        if auto && kind != "critical_power" {
            return Err(CliError::config("sigma.value = auto needs kind = critical_power"));
        }
        let value: f64 = if auto {
            0.5 * delta_threshold(gamma, m).map_err(CliError::from_core_config)?
        } else {
            self.get("sigma", "value")?
        };
        if !value.is_finite() {
            return Err(CliError::config("sigma.value must be finite"));
        }
        match kind {
            "constant" => Ok(SigmaSpec::constant(value)),
            "critical_power" => Ok(SigmaSpec::critical_power(value, m)),
            "sqrt" => Ok(SigmaSpec::sqrt_positive_part(value)),
            other => Err(CliError::config(format!("unknown sigma.kind `{other}`"))),
        }
    }

    pub fn solver(&self) -> Result<SolverConfig, CliError> {
        let m: f64 = self.get("solver", "m")?;
        let gamma: f64 = self.get("solver", "gamma")?;
        let mut cfg = SolverConfig::new(
            m,
            self.get("solver", "nu")?,
            self.get("solver", "grid")?,
            self.get("solver", "horizon")?,
        );
        cfg.n_modes = self.get("solver", "noise_modes")?;
        cfg.dt_policy = if self.raw("solver", "dt").eq_ignore_ascii_case("adaptive") {
            let mut p = DtPolicy::adaptive(self.get("solver", "dt_max")?);
            if let DtPolicy::Adaptive { safety, .. } = &mut p {
                *safety = self.get("solver", "safety")?;
            }
            p
        } else {
            DtPolicy::Fixed(self.get("solver", "dt")?)
        };
        cfg.oversample = self.get("solver", "oversample")?;
        cfg.nonlinear_gain = self.get("solver", "nonlinear_gain")?;
        cfg.gamma_track = gamma;
        cfg.blowup_guard = self.get("solver", "blowup_guard")?;
        let records: usize = self.get("solver", "records")?;
        if records == 0 {
            return Err(CliError::config("solver.records must be positive"));
        }
        cfg = cfg.with_uniform_records(records);
        cfg.sigma = self.sigma(m, gamma)?;
        cfg.validate().map_err(CliError::from_core_config)?;
        Ok(cfg)
    }

    pub fn initial(&self, cfg: &SolverConfig) -> Result<SpectralCoeffs, CliError> {
        let len = cfg.grid_len;
        let amplitude: f64 = self.get("initial", "amplitude")?;
        let center: f64 = self.get("initial", "center")?;
        match self.raw("initial", "kind") {
            "sine" => {
                let mode: usize = self.get("initial", "mode")?;
                if mode == 0 || mode > len {
                    return Err(CliError::config("initial.mode must lie in 1..=grid"));
                }
                let mut c = SpectralCoeffs::basis(len, mode);
                c.coeffs_mut()[mode - 1] = amplitude;
                Ok(c)
            }
            "constant" => Ok(constant_coeffs(amplitude, len)),
            "bump" => {
                let h: f64 = self.get("initial", "half_width")?;
                if !(h > 0.0) {
                    return Err(CliError::config("initial.half_width must be positive"));
                }
                Ok(bump_coeffs(amplitude, center, h, len)?)
            }
            "barenblatt" => {
                let b = Barenblatt::new(
                    cfg.m,
                    self.get("initial", "t0")?,
                    center,
                    self.get("initial", "mass_param")?,
                )
                .map_err(CliError::from_core_config)?;
                let g = b.sample(0.0, len).map_err(CliError::from_core_config)?;
                Ok(dst_forward(&g))
            }
            other => Err(CliError::config(format!("unknown initial.kind `{other}`"))),
        }
    }

    pub fn ensemble(&self, seed: u64) -> Result<EnsembleConfig, CliError> {
        let solver = self.solver()?;
        let v0 = self.initial(&solver)?;
        let mut cfg = EnsembleConfig::new(self.get("ensemble", "paths")?, solver, seed, v0);
        for g in self.list::<f64>("ensemble", "gammas")? {
            if !cfg.tracked_gammas.contains(&g) {
                cfg.tracked_gammas.push(g);
            }
        }
        cfg.p_moments = self.list("ensemble", "p_moments")?;
        cfg.holder_epsilon = self.optional("ensemble", "holder_epsilon")?;
        cfg.check_power_regularity = self.get("ensemble", "power_regularity")?;
        cfg.validate().map_err(CliError::from_core_config)?;
        Ok(cfg)
    }

    pub fn fit(&self, m: f64) -> Result<Option<FitSettings>, CliError> {
        let Some(functional) = self.optional::<String>("ensemble", "fit_functional")? else {
            return Ok(None);
        };
        let w: Vec<f64> = self.list("ensemble", "fit_window")?;
        let [lo, hi] = w[..] else {
            return Err(CliError::config("ensemble.fit_window needs two times"));
        };
        let target = if self.raw("ensemble", "target_slope").eq_ignore_ascii_case("auto") {
            -2.0 / (m - 1.0)
        } else {
            self.get("ensemble", "target_slope")?
        };
        Ok(Some(FitSettings {
            functional,
            window: (lo, hi),
            target_slope: target,
        }))
    }

    pub fn verify(&self) -> Result<VerifySettings, CliError> {
        let suites: Vec<String> = self.list("verify", "suites")?;
        for s in &suites {
            if !SUITES.contains(&s.as_str()) {
                return Err(CliError::config(format!("unknown verify suite `{s}`")));
            }
        }
        let out = VerifySettings {
            suites,
            samples: self.get("verify", "samples")?,
            grid: self.get("verify", "grid")?,
            oversample: self.get("verify", "oversample")?,
            krylov_terms: self.get("verify", "krylov_terms")?,
            krylov_gammas: self.list("verify", "krylov_gammas")?,
            sv_grid: self.get("verify", "sv_grid")?,
            sv_m: self.list("verify", "sv_m")?,
            sv_beta: self.list("verify", "sv_beta")?,
            pointwise_pairs: self.get("verify", "pointwise_pairs")?,
            pointwise_m: self.list("verify", "pointwise_m")?,
            power_m_tilde: self.list("verify", "power_m_tilde")?,
            noise_modes: self.get("verify", "noise_modes")?,
            scan: ScanSpec {
                r_max: self.get("verify", "scan_r_max")?,
                ..ScanSpec::default()
            },
        };
        if out.grid < 2 || out.sv_grid < 2 || out.noise_modes == 0 || out.noise_modes > out.grid {
            return Err(CliError::config(
                "verify: need grid ≥ 2 and 1 ≤ noise_modes ≤ grid",
            ));
        }
        Ok(out)
    }

    pub fn particles(&self, seed: u64) -> Result<ParticleSettings, CliError> {
        let count: usize = self.get("particles", "count")?;
        let total_mass: f64 = self.get("particles", "total_mass")?;
        if !(total_mass > 0.0 && total_mass.is_finite()) {
            return Err(CliError::config("particles.total_mass must be positive"));
        }
        let n_scale = (count as f64 / total_mass).round() as usize;
        let mut cfg = ParticleConfig::new(
            n_scale.max(1),
            self.get("particles", "epsilon")?,
            self.get("particles", "dt")?,
            self.get("particles", "horizon")?,
        );
        cfg.kernel = match self.raw("particles", "kernel") {
            "epanechnikov" => Kernel::Epanechnikov,
            "triangle" => Kernel::Triangle,
            other => return Err(CliError::config(format!("unknown particles.kernel `{other}`"))),
        };
        cfg.drift_gain = self.get("particles", "drift_gain")?;
        let rate: f64 = self.get("particles", "rate")?;
        cfg.branch_rate = match self.raw("particles", "branch") {
            "per_scale" => BranchRate::PerScale(rate),
            "absolute" => BranchRate::Absolute(rate),
            other => return Err(CliError::config(format!("unknown particles.branch `{other}`"))),
        };
        cfg.offspring =
            OffspringLaw::new(self.list("particles", "offspring")?).map_err(CliError::from_core_config)?;
        cfg.record_every = self.get("particles", "record_every")?;
        cfg.seed = seed;
        cfg.validate().map_err(CliError::from_core_config)?;
        let half_width: f64 = self.get("particles", "half_width")?;
        let center: f64 = self.get("particles", "center")?;
        if !(half_width > 0.0 && center - half_width >= 0.0 && center + half_width <= 1.0) {
            return Err(CliError::config(
                "particles: the initial bump must lie inside [0, 1]",
            ));
        }
        Ok(ParticleSettings {
            cfg,
            count,
            total_mass,
            runs: self.get("particles", "runs")?,
            bins: self.get("particles", "bins")?,
            center,
            half_width,
            compare: self.get("particles", "compare")?,
            spde_grid: self.get("particles", "spde_grid")?,
            spde_nu: self.get("particles", "spde_nu")?,
            spde_dt_max: self.get("particles", "spde_dt_max")?,
            spde_paths: self.get("particles", "spde_paths")?,
        })
    }

    pub fn convergence(&self) -> Result<ConvergenceSettings, CliError> {
        let studies: Vec<String> = self.list("convergence", "studies")?;
        for s in &studies {
            if !["barenblatt", "linear_mode", "budget"].contains(&s.as_str()) {
                return Err(CliError::config(format!("unknown convergence study `{s}`")));
            }
        }
        Ok(ConvergenceSettings {
            studies,
            barenblatt_grids: self.list("convergence", "barenblatt_grids")?,
            barenblatt_t0: self.get("convergence", "barenblatt_t0")?,
            barenblatt_time: self.get("convergence", "barenblatt_time")?,
            barenblatt_mass: self.get("convergence", "barenblatt_mass")?,
            barenblatt_nu: self.get("convergence", "barenblatt_nu")?,
            barenblatt_dt_max: self.get("convergence", "barenblatt_dt_max")?,
            linear_grid: self.get("convergence", "linear_grid")?,
            linear_nu: self.get("convergence", "linear_nu")?,
            linear_dt: self.get("convergence", "linear_dt")?,
            linear_steps: self.get("convergence", "linear_steps")?,
            budget_grid: self.get("convergence", "budget_grid")?,
            budget_horizon: self.get("convergence", "budget_horizon")?,
            budget_dt: self.get("convergence", "budget_dt")?,
            budget_levels: self.get("convergence", "budget_levels")?,
            budget_paths: self.get("convergence", "budget_paths")?,
        })
    }
}

/// `amplitude · (1 - ((x - center)/h)²)₊` projected onto `len` sine modes.
pub fn bump_coeffs(amplitude: f64, center: f64, h: f64, len: usize) -> Result<SpectralCoeffs, CliError> {
    let g = GridFunction::from_fn(len, |x| amplitude * bump_shape(x, center, h))
        .map_err(CliError::from_core_config)?;
    Ok(dst_forward(&g))
}

pub fn bump_shape(x: f64, center: f64, h: f64) -> f64 {
    let z = (x - center) / h;
    (1.0 - z * z).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub functional: String,
    pub window: (f64, f64),
    pub target_slope: f64,
}

pub const SUITES: [&str; 8] = [
    "krylov",
    "stroock_varopoulos",
    "pointwise",
    "power_regularity",
    "sigma",
    "coercivity",
    "monotonicity",
    "interpolation",
];

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    pub suites: Vec<String>,
    pub samples: usize,
    pub grid: usize,
    pub oversample: usize,
    pub krylov_terms: usize,
    pub krylov_gammas: Vec<f64>,
    pub sv_grid: usize,
    pub sv_m: Vec<f64>,
    pub sv_beta: Vec<f64>,
    pub pointwise_pairs: usize,
    pub pointwise_m: Vec<f64>,
    pub power_m_tilde: Vec<f64>,
    pub noise_modes: usize,
    pub scan: ScanSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSettings {
    pub cfg: ParticleConfig,
    pub count: usize,
    pub total_mass: f64,
    pub runs: usize,
    pub bins: usize,
    pub center: f64,
    pub half_width: f64,
    pub compare: bool,
    pub spde_grid: usize,
    pub spde_nu: f64,
    pub spde_dt_max: f64,
    pub spde_paths: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSettings {
    pub studies: Vec<String>,
    pub barenblatt_grids: Vec<usize>,
    pub barenblatt_t0: f64,
    pub barenblatt_time: f64,
    pub barenblatt_mass: f64,
    pub barenblatt_nu: f64,
    pub barenblatt_dt_max: f64,
    pub linear_grid: usize,
    pub linear_nu: f64,
    pub linear_dt: f64,
    pub linear_steps: u64,
    pub budget_grid: usize,
    pub budget_horizon: f64,
    pub budget_dt: f64,
    pub budget_levels: usize,
    pub budget_paths: usize,
}
