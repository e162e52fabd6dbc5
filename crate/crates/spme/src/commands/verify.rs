//! Inequality suites over random band-limited functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::ThreadPool;
use serde::Serialize;
use serde_json::json;
use spme_core::inequality::{
    krylov_constant, power_regularity_constant, validate_sigma, verify_coercivity, verify_krylov_with,
    verify_operator_monotonicity, verify_pointwise_monotonicity, verify_power_regularity,
    verify_stroock_varopoulos, InequalityReport, PowerRegularityBound,
};
use spme_core::sigma::SigmaSpec;
use spme_core::spectral::{check_interpolation, GridFunction, SineTransform, SpectralCoeffs};

use super::Outcome;
use crate::config::{Config, VerifySettings};
use crate::error::CliError;
use crate::manifest::OutputDir;
use crate::parallel::map_indexed;

/// Report lines listed per suite.
const MAX_LISTED: usize = 20;

/// Independent stream for sample `index` of `suite`.
pub fn sample_rng(seed: u64, suite: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((suite << 40) | index);
    rng
}

/// Coefficients `U(-1, 1)/k` on the first `band` modes, scaled by
/// `10^U(-1, 1)`.
pub fn random_coeffs(rng: &mut ChaCha8Rng, len: usize, band: usize) -> SpectralCoeffs {
    let scale = 10f64.powf(rng.gen_range(-1.0..1.0));
    let c = (1..=len)
        .map(|k| {
            if k <= band {
                scale * rng.gen_range(-1.0..1.0) / k as f64
            } else {
                0.0
            }
        })
        .collect();
    SpectralCoeffs::new(c).expect("finite coefficients")
}

pub fn random_function(rng: &mut ChaCha8Rng, len: usize, band: usize) -> GridFunction {
    SineTransform::new(len).inverse(&random_coeffs(rng, len, band))
}

/// `±10^U(-3, 3)`.
fn random_scalar(rng: &mut ChaCha8Rng) -> f64 {
    let s = 10f64.powf(rng.gen_range(-3.0..3.0));
    if rng.gen::<bool>() {
        s
    } else {
        -s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: String,
    pub checks: usize,
    /// Reports that do not hold.
    pub violations: usize,
    /// Violations of inequalities whose hypotheses are met.
    pub failures: usize,
    pub warnings: usize,
    /// Smallest `margin / (|lhs| + |rhs|)`.
    pub worst_relative_margin: Option<f64>,
    #[serde(skip)]
    pub lines: Vec<String>,
}

impl SuiteResult {
    fn new(suite: &str) -> Self {
        Self {
            suite: suite.to_string(),
            checks: 0,
            violations: 0,
            failures: 0,
            warnings: 0,
            worst_relative_margin: None,
            lines: Vec::new(),
        }
    }

    fn add(&mut self, r: &InequalityReport) {
        self.checks += 1;
        self.warnings += r.warnings.len();
        let scale = r.lhs.abs() + r.rhs.abs();
        if scale > 0.0 {
            let rel = r.margin / scale;
            if self.worst_relative_margin.is_none_or(|w| rel < w) {
                self.worst_relative_margin = Some(rel);
            }
        }
        if !r.holds {
            self.violations += 1;
            self.failures += r.is_failure() as usize;
        }
        if (!r.holds || !r.warnings.is_empty()) && self.lines.len() < MAX_LISTED {
            self.lines.push(r.to_string());
            self.lines
                .extend(r.warnings.iter().map(|w| format!("  warning: {w}")));
        }
    }

    /// A check that is not an [`InequalityReport`]; `line` is listed when it
    /// fails or when `always` is set.
    fn add_plain(&mut self, holds: bool, line: String, always: bool) {
        self.checks += 1;
        if !holds {
            self.violations += 1;
            self.failures += 1;
        }
        if (always || !holds) && self.lines.len() < MAX_LISTED {
            self.lines.push(line);
        }
    }

    pub fn summary_line(&self) -> String {
        let worst = self
            .worst_relative_margin
            .map_or_else(|| "NA".to_string(), crate::format::float);
        format!(
            "suite={} checks={} violations={} failures={} warnings={} worst_relative_margin={}",
            self.suite, self.checks, self.violations, self.failures, self.warnings, worst
        )
    }
}

fn collect(suite: &str, reports: Vec<Result<InequalityReport, CliError>>) -> Result<SuiteResult, CliError> {
    let mut out = SuiteResult::new(suite);
    for r in reports {
        out.add(&r?);
    }
    Ok(out)
}

fn core<T>(r: spme_core::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::from_core_config)
}

pub fn krylov(pool: &ThreadPool, seed: u64, v: &VerifySettings) -> Result<SuiteResult, CliError> {
    let mut out = SuiteResult::new("krylov");
    let at_minus_one = core(krylov_constant(-1.0, v.krylov_terms))?;
    out.add_plain(
        at_minus_one.contains(1.0 / 3.0) && at_minus_one.width() < 1e-6,
        format!(
            "name=krylov_constant gamma_tilde=-1 terms={} lower={:?} upper={:?} contains_one_third={}",
            v.krylov_terms,
            at_minus_one.lower,
            at_minus_one.upper,
            at_minus_one.contains(1.0 / 3.0)
        ),
        true,
    );
    for (gi, &g) in v.krylov_gammas.iter().enumerate() {
        let constant = core(krylov_constant(g, v.krylov_terms))?;
        let reports = map_indexed(pool, v.samples, |i| {
            let mut rng = sample_rng(seed, 1 + gi as u64, i as u64);
            let u = random_function(&mut rng, v.grid, v.grid / 2 + 1);
            core(verify_krylov_with(&u, &constant, v.grid, v.oversample))
        });
        let part = collect("krylov", reports)?;
        merge(&mut out, part);
    }
    Ok(out)
}

fn merge(into: &mut SuiteResult, part: SuiteResult) {
    into.checks += part.checks;
    into.violations += part.violations;
    into.failures += part.failures;
    into.warnings += part.warnings;
    if let Some(w) = part.worst_relative_margin {
        if into.worst_relative_margin.is_none_or(|x| w < x) {
            into.worst_relative_margin = Some(w);
        }
    }
    let room = MAX_LISTED.saturating_sub(into.lines.len());
    into.lines.extend(part.lines.into_iter().take(room));
}

pub fn stroock_varopoulos(pool: &ThreadPool, seed: u64, v: &VerifySettings) -> Result<SuiteResult, CliError> {
    let mut out = SuiteResult::new("stroock_varopoulos");
    let combos: Vec<(f64, f64)> = v
        .sv_m
        .iter()
        .flat_map(|&m| v.sv_beta.iter().map(move |&b| (m, b)))
        .collect();
    let n = combos.len() * v.samples;
    let reports = map_indexed(pool, n, |i| {
        let (m, beta) = combos[i / v.samples];
        let mut rng = sample_rng(seed, 10, i as u64);
        let u = random_function(&mut rng, v.sv_grid, v.sv_grid / 2 + 1);
        core(verify_stroock_varopoulos(&u, m, beta, v.oversample))
    });
    merge(&mut out, collect("stroock_varopoulos", reports)?);
    Ok(out)
}

pub fn pointwise(pool: &ThreadPool, seed: u64, v: &VerifySettings) -> Result<SuiteResult, CliError> {
    const CHUNK: usize = 10_000;
    let mut out = SuiteResult::new("pointwise");
    for (mi, &m) in v.pointwise_m.iter().enumerate() {
        let chunks = v.pointwise_pairs.div_ceil(CHUNK);
        let parts = map_indexed(pool, chunks, |c| {
            let mut rng = sample_rng(seed, 20 + mi as u64, c as u64);
            let mut part = SuiteResult::new("pointwise");
            let count = CHUNK.min(v.pointwise_pairs - c * CHUNK);
            for _ in 0..count {
                let (a, b) = (random_scalar(&mut rng), random_scalar(&mut rng));
                part.add(&verify_pointwise_monotonicity(a, b, m));
            }
            part
        });
        for p in parts {
            merge(&mut out, p);
        }
    }
    Ok(out)
}

pub fn power_regularity(
    pool: &ThreadPool,
    seed: u64,
    v: &VerifySettings,
    m: f64,
    gamma: f64,
) -> Result<SuiteResult, CliError> {
    let mut out = SuiteResult::new("power_regularity");
    for &mt in &v.power_m_tilde {
        let r = core(power_regularity_constant(mt))?;
        let closed = 4f64.powf(mt - 1.0);
        let rel = (r.sup_ratio - closed).abs() / closed;
        out.add_plain(
            rel <= 1e-3,
            format!(
                "name=power_regularity_constant m_tilde={mt:?} brute_force={:?} closed_form={closed:?} argmax_b={:?} rel_err={rel:?}",
                r.sup_ratio, r.argmax.1
            ),
            true,
        );
    }
    let bound = core(PowerRegularityBound::new(0.5 * (m + 1.0), 1.0 + gamma, v.grid))?;
    let reports = map_indexed(pool, v.samples, |i| {
        let mut rng = sample_rng(seed, 30, i as u64);
        let u = random_function(&mut rng, v.grid, v.grid / 2 + 1);
        core(verify_power_regularity(&u, &bound))
    });
    merge(&mut out, collect("power_regularity", reports)?);
    Ok(out)
}

pub fn sigma(v: &VerifySettings, sigma: &SigmaSpec, m: f64) -> Result<SuiteResult, CliError> {
    let mut out = SuiteResult::new("sigma");
    out.add(&core(validate_sigma(sigma, m, &v.scan))?);
    Ok(out)
}

pub fn coercivity(
    pool: &ThreadPool,
    seed: u64,
    v: &VerifySettings,
    sigma: &SigmaSpec,
    m: f64,
) -> Result<SuiteResult, CliError> {
    let reports = map_indexed(pool, v.samples, |i| {
        let mut rng = sample_rng(seed, 40, i as u64);
        let u = random_function(&mut rng, v.grid, v.grid / 2 + 1);
        core(verify_coercivity(&u, m, sigma, v.noise_modes, 2, &v.scan))
    });
    collect("coercivity", reports)
}

pub fn monotonicity(
    pool: &ThreadPool,
    seed: u64,
    v: &VerifySettings,
    sigma: &SigmaSpec,
    m: f64,
) -> Result<SuiteResult, CliError> {
    let reports = map_indexed(pool, v.samples, |i| {
        let mut rng = sample_rng(seed, 50, i as u64);
        let a = random_function(&mut rng, v.grid, v.grid / 2 + 1);
        let b = random_function(&mut rng, v.grid, v.grid / 2 + 1);
        core(verify_operator_monotonicity(&a, &b, m, sigma, v.noise_modes, 2))
    });
    collect("monotonicity", reports)
}

pub fn interpolation(pool: &ThreadPool, seed: u64, v: &VerifySettings) -> Result<SuiteResult, CliError> {
    const PAIRS: [(f64, f64); 3] = [(-1.0, 0.0), (-1.0, 1.0), (0.0, 1.0)];
    const THETAS: [f64; 3] = [0.25, 0.5, 0.75];
    let results = map_indexed(pool, v.samples, |i| {
        let mut rng = sample_rng(seed, 60, i as u64);
        let c = random_coeffs(&mut rng, v.grid, v.grid);
        let mut lines = Vec::new();
        for (g0, g1) in PAIRS {
            for theta in THETAS {
                let r = core(check_interpolation(&c, g0, g1, theta))?;
                lines.push((
                    r.holds,
                    format!(
                        "name=interpolation gamma0={g0:?} gamma1={g1:?} theta={theta:?} lhs={:?} rhs={:?} holds={}",
                        r.lhs, r.rhs, r.holds
                    ),
                ));
            }
        }
        Ok::<_, CliError>(lines)
    });
    let mut out = SuiteResult::new("interpolation");
    for lines in results {
        for (holds, line) in lines? {
            out.add_plain(holds, line, false);
        }
    }
    Ok(out)
}

pub fn run_suites(pool: &ThreadPool, config: &Config, seed: u64) -> Result<Vec<SuiteResult>, CliError> {
    let v = config.verify()?;
    let solver = config.solver()?;
    let (m, gamma) = (solver.m, solver.gamma_track);
    let sig = &solver.sigma;
    v.suites
        .iter()
        .map(|s| match s.as_str() {
            "krylov" => krylov(pool, seed, &v),
            "stroock_varopoulos" => stroock_varopoulos(pool, seed, &v),
            "pointwise" => pointwise(pool, seed, &v),
            "power_regularity" => power_regularity(pool, seed, &v, m, gamma),
            "sigma" => sigma(&v, sig, m),
            "coercivity" => coercivity(pool, seed, &v, sig, m),
            "monotonicity" => monotonicity(pool, seed, &v, sig, m),
            "interpolation" => interpolation(pool, seed, &v),
            other => Err(CliError::config(format!("unknown verify suite `{other}`"))),
        })
        .collect()
}

pub fn cmd_verify(pool: &ThreadPool, config: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let seed = config.seed()?;
    let suites = run_suites(pool, config, seed)?;
    let mut text = String::new();
    for s in &suites {
        text.push_str(&s.summary_line());
        text.push('\n');
        for l in &s.lines {
            text.push_str("  ");
            text.push_str(l);
            text.push('\n');
        }
    }
    let failures: Vec<String> = suites
        .iter()
        .filter(|s| s.failures > 0)
        .map(|s| format!("{} violations in suite {}", s.failures, s.suite))
        .collect();
    let warnings: usize = suites.iter().map(|s| s.warnings).sum();
    let summary = json!({
        "suites": suites,
        "warnings": warnings,
        "failures": failures.len(),
    });
    out.write("verify.txt", text.as_bytes())?;
    out.write_json("verify.json", &summary)?;
    Ok(Outcome { failures, summary })
}
