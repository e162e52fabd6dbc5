//! Numerical verifiers for the functional inequalities behind the existence
//! and well-posedness theory, and brute-force computation of their constants.
//!
//! Every verifier returns an [`InequalityReport`]. The sign convention is that
//! `margin ≥ 0` means the inequality holds: `margin = rhs - lhs` for
//! inequalities of the form `lhs ≤ rhs` and `lhs - rhs` for `lhs ≥ rhs`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};
use core::fmt;

use crate::error::{invalid, Result};
use crate::sigma::{SigmaKind, SigmaSpec};
use crate::spectral::{
    eigenvalue_pow, lp_norm_pow, oversampled_len, signed_power, weighted_sq_sum, GridFunction, SineTransform,
    SpectralCoeffs,
};

/// `N(-1)`: the Krylov constant at `γ̃ = -1`, equal to `(2/π²)(π²/6)`.
pub const C0: f64 = 1.0 / 3.0;

/// Relative tolerance for quantities that are exact at the truncation level.
pub const EXACT_REL_TOL: f64 = 1e-8;

/// Absolute tolerance scale for quantities involving pointwise nonlinearities:
/// `ALIASED_TOL · (|lhs| + |rhs| + 1)`.
pub const ALIASED_TOL: f64 = 1e-6;

pub const DEFAULT_OVERSAMPLE: usize = 4;

/// `4m/(m+1)²`, the constant of the power form of the Stroock–Varopoulos
/// inequality.
pub fn sv_constant(m: f64) -> f64 {
    4.0 * m / ((m + 1.0) * (m + 1.0))
}

/// Largest power-Lipschitz constant `δ̄` under which operator monotonicity is
/// claimed: `24m/(m+1)²`.
pub fn delta_bar_threshold(m: f64) -> f64 {
    24.0 * m / ((m + 1.0) * (m + 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
    pub tolerance: f64,
    /// False when the hypotheses that guarantee the inequality are not met;
    /// a violation is then a warning rather than a failure.
    pub guaranteed: bool,
    pub warnings: Vec<String>,
    pub metadata: BTreeMap<String, f64>,
}

impl InequalityReport {
    pub fn new(name: &str, lhs: f64, rhs: f64, margin: f64, tolerance: f64) -> Self {
        debug_assert!(tolerance >= 0.0);
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            margin,
            holds: margin >= -tolerance,
            tolerance,
            guaranteed: true,
            warnings: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    /// Report for `lhs ≤ rhs`.
    pub fn upper(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::new(name, lhs, rhs, rhs - lhs, tolerance)
    }

    /// Report for `lhs ≥ rhs`.
    pub fn lower(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::new(name, lhs, rhs, lhs - rhs, tolerance)
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.metadata.insert(key.to_string(), value);
        self
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.guaranteed = false;
        self.warnings.push(msg.into());
    }

    /// Violation of a guaranteed inequality.
    pub fn is_failure(&self) -> bool {
        !self.holds && self.guaranteed
    }
}

/// One line per report: `name=… params=k=v;k=v lhs=… rhs=… margin=… holds=…`.
impl fmt::Display for InequalityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "name={} params=", self.name)?;
        for (i, (k, v)) in self.metadata.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{k}={v:?}")?;
        }
        write!(
            f,
            " lhs={:?} rhs={:?} margin={:?} holds={}",
            self.lhs, self.rhs, self.margin, self.holds
        )?;
        if !self.warnings.is_empty() {
            write!(f, " warnings={}", self.warnings.len())?;
        }
        Ok(())
    }
}

/// Certified enclosure of `N(γ̃) = 2 Σ_l λ_l^{γ̃}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovInterval {
    pub gamma_tilde: f64,
    pub terms: usize,
    /// `2 Σ_{l ≤ terms} (πl)^{2γ̃}`.
    pub partial_sum: f64,
    /// `partial_sum + 2∫_{terms+1}^∞ (πx)^{2γ̃} dx`.
    pub lower: f64,
    /// `partial_sum + 2∫_{terms}^∞ (πx)^{2γ̃} dx`.
    pub upper: f64,
}

impl KrylovInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

pub fn krylov_constant(gamma_tilde: f64, terms: usize) -> Result<KrylovInterval> {
    if !(gamma_tilde < -0.5) {
        return Err(invalid("gamma_tilde", "series diverges for γ̃ ≥ -1/2"));
    }
    if terms == 0 {
        return Err(invalid("terms", "need at least one term"));
    }
    let two_g = 2.0 * gamma_tilde;
    // smallest terms first
    let partial: f64 = 2.0
        * (1..=terms)
            .rev()
            .map(|l| libm::pow(PI * l as f64, two_g))
            .sum::<f64>();
    // 2∫_a^∞ (πx)^{2γ̃} dx = 2 π^{2γ̃} a^{2γ̃+1} / -(2γ̃+1)
    let tail = |a: f64| 2.0 * libm::pow(PI, two_g) * libm::pow(a, two_g + 1.0) / -(two_g + 1.0);
    Ok(KrylovInterval {
        gamma_tilde,
        terms,
        partial_sum: partial,
        lower: partial + tail(terms as f64 + 1.0),
        upper: partial + tail(terms as f64),
    })
}

/// Series length used when a Krylov constant feeds another bound.
pub const KRYLOV_TERMS: usize = 100_000;

/// Grid transforms for pointwise products on a refined grid.
struct Oversampled {
    base_len: usize,
    fine: SineTransform,
}

impl Oversampled {
    fn new(base_len: usize, factor: usize) -> Self {
        Self {
            base_len,
            fine: SineTransform::new(oversampled_len(base_len, factor.max(1))),
        }
    }

    fn fine_len(&self) -> usize {
        self.fine.len()
    }

    fn fine_values(&self, c: &SpectralCoeffs) -> Vec<f64> {
        self.fine.interpolate(c).into_values()
    }

    fn coeffs(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.fine_len()];
        self.fine.forward_into(values, &mut out);
        out
    }

    /// `√2 sin(πk x_j)` on the fine grid.
    fn basis_values(&self, k: usize) -> Vec<f64> {
        let n = self.fine_len();
        (1..=n)
            .map(|j| SQRT_2 * libm::sin(PI * (k * j) as f64 / (n + 1) as f64))
            .collect()
    }

    /// `Σ_{k ≤ modes} ‖P(f eᵏ)‖²_{H^γ}`, with `P` the fine-grid projection.
    fn krylov_sum(&self, f: &[f64], modes: usize, gamma: f64) -> f64 {
        let mut prod = vec![0.0; f.len()];
        (1..=modes)
            .map(|k| {
                let ek = self.basis_values(k);
                for ((p, a), b) in prod.iter_mut().zip(f).zip(&ek) {
                    *p = a * b;
                }
                weighted_sq_sum(&self.coeffs(&prod), gamma)
            })
            .sum()
    }
}

/// `Σ_{k ≤ modes} ‖u eᵏ‖²_{H^{γ̃}} ≤ N(γ̃) ‖u‖²_{L²}`.
pub fn verify_krylov(
    u: &GridFunction,
    gamma_tilde: f64,
    modes: usize,
    oversample: usize,
) -> Result<InequalityReport> {
    let constant = krylov_constant(gamma_tilde, KRYLOV_TERMS)?;
    verify_krylov_with(u, &constant, modes, oversample)
}

/// [`verify_krylov`] against a precomputed constant, for sweeps.
pub fn verify_krylov_with(
    u: &GridFunction,
    constant: &KrylovInterval,
    modes: usize,
    oversample: usize,
) -> Result<InequalityReport> {
    let gamma_tilde = constant.gamma_tilde;
    if modes == 0 || modes > u.len() {
        return Err(invalid("modes", "need 1 ≤ modes ≤ J"));
    }
    let grid = Oversampled::new(u.len(), oversample.max(2));
    let coeffs = SineTransform::new(u.len()).forward(u);
    let uf = grid.fine_values(&coeffs);
    let lhs = grid.krylov_sum(&uf, modes, gamma_tilde);
    let rhs = constant.upper * lp_norm_pow(u.values(), 2.0);
    Ok(
        InequalityReport::upper("krylov", lhs, rhs, EXACT_REL_TOL * (lhs.abs() + rhs.abs()))
            .with("gamma_tilde", gamma_tilde)
            .with("modes", modes as f64)
            .with("J", u.len() as f64)
            .with("oversample", grid.fine_len() as f64 / grid.base_len as f64),
    )
}

/// `∫ u^[m] (-Δ)^β u ≥ 4m/(m+1)² ∫ |(-Δ)^{β/2} u^[(m+1)/2]|²` for band-limited `u`.
pub fn verify_stroock_varopoulos(
    u: &GridFunction,
    m: f64,
    beta: f64,
    oversample: usize,
) -> Result<InequalityReport> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(invalid("beta", "order must lie in (0, 1/2)"));
    }
    if !(m >= 1.0 && m.is_finite()) {
        return Err(invalid("m", "exponent must be ≥ 1"));
    }
    let grid = Oversampled::new(u.len(), oversample.max(1));
    let coeffs = SineTransform::new(u.len()).forward(u);
    let uf = grid.fine_values(&coeffs);
    let pow_m: Vec<f64> = uf.iter().map(|&v| signed_power(v, m)).collect();
    let pow_half: Vec<f64> = uf.iter().map(|&v| signed_power(v, 0.5 * (m + 1.0))).collect();
    let pow_m_hat = grid.coeffs(&pow_m);
    let lhs: f64 = coeffs
        .coeffs()
        .iter()
        .zip(&pow_m_hat)
        .enumerate()
        .map(|(i, (a, b))| eigenvalue_pow(i + 1, beta) * a * b)
        .sum();
    let rhs = sv_constant(m) * weighted_sq_sum(&grid.coeffs(&pow_half), beta);
    Ok(InequalityReport::lower(
        "stroock_varopoulos",
        lhs,
        rhs,
        ALIASED_TOL * (lhs.abs() + rhs.abs() + 1.0),
    )
    .with("m", m)
    .with("beta", beta)
    .with("J", u.len() as f64)
    .with("oversample", oversample as f64))
}

/// `a^[q] - b^[q]` without cancellation when `a ≈ b`.
fn power_difference(a: f64, b: f64, q: f64) -> f64 {
    if a == 0.0 || b == 0.0 || (a > 0.0) != (b > 0.0) {
        return signed_power(a, q) - signed_power(b, q);
    }
    // same sign: |b|^q expm1(q log1p((|a| - |b|) / |b|))
    let (x, y) = (a.abs(), b.abs());
    let d = libm::pow(y, q) * libm::expm1(q * libm::log1p((x - y) / y));
    if a < 0.0 {
        -d
    } else {
        d
    }
}

/// `(a-b)(a^[m]-b^[m]) ≥ 4m/(m+1)² |a^[(m+1)/2] - b^[(m+1)/2]|²`.
pub fn verify_pointwise_monotonicity(a: f64, b: f64, m: f64) -> InequalityReport {
    let lhs = (a - b) * power_difference(a, b, m);
    let d = power_difference(a, b, 0.5 * (m + 1.0));
    let rhs = sv_constant(m) * d * d;
    InequalityReport::lower(
        "pointwise_monotonicity",
        lhs,
        rhs,
        1e-12 * (lhs.abs() + rhs.abs()),
    )
    .with("a", a)
    .with("b", b)
    .with("m", m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerRegularityReport {
    pub m_tilde: f64,
    pub sup_ratio: f64,
    /// Extremizer `(a, b)`; scale invariance fixes `a = 1`.
    pub argmax: (f64, f64),
}

/// Brute-force `sup |a-b|^{2m̃} / |a^[m̃] - b^[m̃]|²`.
///
/// The ratio is invariant under `(a, b) → (sa, sb)`, `s ≠ 0`, and under
/// swapping `a, b`, so it suffices to scan `a = 1`, `b ∈ [-1, 1)`.
pub fn power_regularity_constant(m_tilde: f64) -> Result<PowerRegularityReport> {
    if !(m_tilde >= 1.0 && m_tilde.is_finite()) {
        return Err(invalid("m_tilde", "exponent must be ≥ 1"));
    }
    let ratio = |b: f64| {
        let num = libm::pow((1.0 - b).abs(), 2.0 * m_tilde);
        let den = 1.0 - signed_power(b, m_tilde);
        num / (den * den)
    };
    let mut best = (ratio(-1.0), -1.0);
    let mut consider = |b: f64| {
        if b < 1.0 {
            let r = ratio(b);
            if r > best.0 {
                best = (r, b);
            }
        }
    };
    const UNIFORM: usize = 200_000;
    for i in 0..UNIFORM {
        consider(-1.0 + 2.0 * i as f64 / UNIFORM as f64);
    }
    // geometric approach to both ends of the interval
    for e in 1..=300 {
        let s = libm::pow(10.0, -(e as f64) / 20.0);
        consider(-1.0 + s);
        consider(1.0 - s);
        consider(s);
        consider(-s);
    }
    Ok(PowerRegularityReport {
        m_tilde,
        sup_ratio: best.0,
        argmax: (1.0, best.1),
    })
}

/// Dense `(x, r)` scan specification for coefficient validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSpec {
    pub r_max: f64,
    pub r_points: usize,
    pub x_points: usize,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            r_max: 1000.0,
            r_points: 401,
            x_points: 3,
        }
    }
}

impl ScanSpec {
    /// Uniform grid on `[-r_max, r_max]` merged with a geometric grid
    /// `±10^{-k/4}·r_max` reaching down to `1e-8`.
    fn r_values(&self) -> Result<Vec<f64>> {
        if !(self.r_max.is_finite() && self.r_max > 0.0) || self.r_points < 2 || self.x_points == 0 {
            return Err(invalid(
                "scan",
                "need finite r_max > 0, r_points ≥ 2, x_points ≥ 1",
            ));
        }
        let mut rs: Vec<f64> = (0..self.r_points)
            .map(|i| -self.r_max + 2.0 * self.r_max * i as f64 / (self.r_points - 1) as f64)
            .collect();
        let mut s = self.r_max;
        while s > 1e-8 {
            rs.push(s);
            rs.push(-s);
            s /= libm::pow(10.0, 0.25);
        }
        rs.push(0.0);
        rs.sort_by(|a, b| a.partial_cmp(b).expect("finite scan"));
        rs.dedup();
        Ok(rs)
    }

    fn x_values(&self) -> Vec<f64> {
        (1..=self.x_points)
            .map(|i| i as f64 / (self.x_points + 1) as f64)
            .collect()
    }
}

/// Growth exponent of `|σ|` read off the upper end of the scan.
fn tail_exponent(sigma: &SigmaSpec, r_max: f64) -> f64 {
    let (lo, hi) = (0.5 * r_max, r_max);
    let mag = |r: f64| sigma.eval(0.5, r).abs().max(sigma.eval(0.5, -r).abs());
    let (a, b) = (mag(lo), mag(hi));
    if a == 0.0 || b == 0.0 {
        return if b == 0.0 { 0.0 } else { f64::INFINITY };
    }
    libm::log(b / a) / libm::log(hi / lo)
}

/// Effective quadratic growth `δ₂` and the matching constant `C(δ₂)` with
/// `|σ(x, r)|² ≤ δ₂ |r|^{m+1} + C(δ₂)` for `|r| ≤ r_cover`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticGrowth {
    pub delta2: f64,
    pub constant: f64,
}

pub fn quadratic_growth(sigma: &SigmaSpec, m: f64, scan: &ScanSpec, r_cover: f64) -> Result<QuadraticGrowth> {
    let scan = ScanSpec {
        r_max: scan.r_max.max(r_cover),
        ..*scan
    };
    let rs = scan.r_values()?;
    let xs = scan.x_values();
    let critical = 0.5 * (m + 1.0);
    let expo = tail_exponent(sigma, scan.r_max);
    let delta2 = if expo < critical - 1e-6 {
        0.0
    } else if expo > critical + 1e-6 {
        f64::INFINITY
    } else {
        let mut d: f64 = 0.0;
        for &x in &xs {
            for &r in rs.iter().filter(|r| r.abs() >= 0.5 * scan.r_max) {
                let s = sigma.eval(x, r);
                d = d.max(s * s / libm::pow(r.abs(), m + 1.0));
            }
        }
        d
    };
    let mut c: f64 = 0.0;
    if delta2.is_finite() {
        for &x in &xs {
            for &r in &rs {
                let s = sigma.eval(x, r);
                c = c.max(s * s - delta2 * libm::pow(r.abs(), m + 1.0));
            }
        }
    }
    Ok(QuadraticGrowth {
        delta2,
        constant: c.max(0.0),
    })
}

/// Checks the declared growth and power-Lipschitz constants on a dense scan.
///
/// Metadata carries the maximal violations, the smallest `δ` compatible with
/// the declared `K` (`effective_delta`), the smallest `K` compatible with the
/// declared `δ` (`effective_k`) and the tail growth exponent.
pub fn validate_sigma(sigma: &SigmaSpec, m: f64, scan: &ScanSpec) -> Result<InequalityReport> {
    if let SigmaKind::Table { r, values } = sigma.kind() {
        if r.iter().chain(values).any(|v| !v.is_finite()) {
            return Err(invalid("table", "non-finite entries"));
        }
    }
    let rs = scan.r_values()?;
    let xs = scan.x_values();
    let p = 0.5 * (m + 1.0);
    let (k, delta) = (sigma.k(), sigma.delta());
    let mut growth_violation = f64::NEG_INFINITY;
    let mut scale: f64 = 0.0;
    let mut effective_delta: f64 = 0.0;
    let mut effective_k: f64 = 0.0;
    for &x in &xs {
        for &r in &rs {
            let s = sigma.eval(x, r).abs();
            let bound = libm::pow(r.abs(), p);
            growth_violation = growth_violation.max(s - k - delta * bound);
            scale = scale.max(s).max(k + delta * bound);
            effective_k = effective_k.max(s - delta * bound);
            if bound > 0.0 {
                effective_delta = effective_delta.max((s - k).max(0.0) / bound);
            }
        }
    }
    let mut lipschitz_violation = f64::NEG_INFINITY;
    if let Some(db) = sigma.delta_bar() {
        for &x in &xs {
            let vals: Vec<(f64, f64)> = rs
                .iter()
                .map(|&r| (sigma.eval(x, r), signed_power(r, p)))
                .collect();
            for (i, &(s1, p1)) in vals.iter().enumerate() {
                for &(s2, p2) in &vals[i + 1..] {
                    lipschitz_violation = lipschitz_violation.max((s1 - s2).abs() - db * (p1 - p2).abs());
                }
            }
        }
    }
    let violation = growth_violation.max(lipschitz_violation);
    let tol = 1e-12 * (scale + 1.0);
    let mut report = InequalityReport::new("sigma_validation", violation, 0.0, -violation, tol)
        .with("m", m)
        .with("K", k)
        .with("delta", delta)
        .with("growth_violation", growth_violation)
        .with("effective_delta", effective_delta)
        .with("effective_k", effective_k.max(0.0))
        .with("tail_exponent", tail_exponent(sigma, scan.r_max))
        .with("r_max", scan.r_max);
    if let Some(db) = sigma.delta_bar() {
        report = report
            .with("delta_bar", db)
            .with("lipschitz_violation", lipschitz_violation);
    }
    Ok(report)
}

/// `2⟨v₁-v₂, Av₁-Av₂⟩ + Σ_k ‖(σ(v₁)-σ(v₂))eᵏ‖²_{H^{-1}} ≤ 0` with
/// `⟨Δu^[m], φ⟩ = -(u^[m], φ)`.
pub fn verify_operator_monotonicity(
    v1: &GridFunction,
    v2: &GridFunction,
    m: f64,
    sigma: &SigmaSpec,
    modes: usize,
    oversample: usize,
) -> Result<InequalityReport> {
    if v1.len() != v2.len() {
        return Err(crate::Error::LengthMismatch {
            expected: v1.len(),
            actual: v2.len(),
        });
    }
    if modes == 0 {
        return Err(invalid("modes", "need at least one noise mode"));
    }
    let grid = Oversampled::new(v1.len(), oversample.max(2));
    let t = SineTransform::new(v1.len());
    let f1 = grid.fine_values(&t.forward(v1));
    let f2 = grid.fine_values(&t.forward(v2));
    let h = 1.0 / (grid.fine_len() + 1) as f64;
    let drift: f64 = -2.0
        * h
        * f1.iter()
            .zip(&f2)
            .map(|(&a, &b)| (a - b) * (signed_power(a, m) - signed_power(b, m)))
            .sum::<f64>();
    let xs = (1..=grid.fine_len()).map(|j| j as f64 * h);
    let dsig: Vec<f64> = xs
        .zip(f1.iter().zip(&f2))
        .map(|(x, (&a, &b))| sigma.eval(x, a) - sigma.eval(x, b))
        .collect();
    let noise = grid.krylov_sum(&dsig, modes, -1.0);
    let lhs = drift + noise;
    let mut report = InequalityReport::upper(
        "operator_monotonicity",
        lhs,
        0.0,
        ALIASED_TOL * (drift.abs() + noise.abs() + 1.0),
    )
    .with("m", m)
    .with("modes", modes as f64)
    .with("drift_term", drift)
    .with("noise_term", noise);
    let threshold = delta_bar_threshold(m);
    match sigma.delta_bar() {
        Some(db) if db <= threshold => report = report.with("delta_bar", db),
        Some(db) => {
            report = report.with("delta_bar", db);
            report.warn(format!(
                "delta_bar {db} exceeds 24m/(m+1)^2 = {threshold}; monotonicity not guaranteed"
            ));
        }
        None => report.warn("no power-Lipschitz constant declared; monotonicity not guaranteed"),
    }
    Ok(report)
}

/// `2⟨v, Av⟩ + Σ_k ‖σ(v)eᵏ‖²_{H^{-1}} ≤ -(2 - c₀δ₂)‖v‖^{m+1}_{L^{m+1}} + c₀ C(δ₂)`.
pub fn verify_coercivity(
    v: &GridFunction,
    m: f64,
    sigma: &SigmaSpec,
    modes: usize,
    oversample: usize,
    scan: &ScanSpec,
) -> Result<InequalityReport> {
    if modes == 0 {
        return Err(invalid("modes", "need at least one noise mode"));
    }
    let grid = Oversampled::new(v.len(), oversample.max(2));
    let vf = grid.fine_values(&SineTransform::new(v.len()).forward(v));
    let h = 1.0 / (grid.fine_len() + 1) as f64;
    let growth = quadratic_growth(sigma, m, scan, vf.iter().fold(0.0, |a, b| a.max(b.abs())))?;
    let power_norm = lp_norm_pow(&vf, m + 1.0);
    let sig: Vec<f64> = vf
        .iter()
        .enumerate()
        .map(|(j, &r)| sigma.eval((j + 1) as f64 * h, r))
        .collect();
    let noise = grid.krylov_sum(&sig, modes, -1.0);
    let lhs = -2.0 * power_norm + noise;
    let mu = 2.0 - C0 * growth.delta2;
    let big_m = C0 * growth.constant;
    let rhs = -mu * power_norm + big_m;
    let mut report = InequalityReport::upper(
        "coercivity",
        lhs,
        rhs,
        ALIASED_TOL * (lhs.abs() + rhs.abs() + 1.0),
    )
    .with("m", m)
    .with("modes", modes as f64)
    .with("delta", sigma.delta())
    .with("delta2", growth.delta2)
    .with("mu", mu)
    .with("M", big_m);
    if !(growth.delta2 < 2.0 / C0) {
        report.warn(format!(
            "effective quadratic growth {} is not below 2/c0 = 6; coercivity not guaranteed",
            growth.delta2
        ));
    }
    Ok(report)
}

/// `1 / (m N(γ))`: a certified sufficient bound for the first smallness
/// condition on the growth constant in the a priori energy estimate.
pub fn delta_threshold(gamma: f64, m: f64) -> Result<f64> {
    if !(gamma < -0.5) {
        return Err(invalid("gamma", "Krylov constant requires γ < -1/2"));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(invalid("m", "must be positive"));
    }
    Ok(1.0 / (m * krylov_constant(gamma, KRYLOV_TERMS)?.upper))
}

/// Largest ratio `‖w‖²_{W^{s,2}} / ‖w‖²_{H^s}` over grid functions with `len`
/// interior nodes, by power iteration on the Slobodeckij quadratic form in
/// `H^s`-normalized sine coordinates. The quadrature is the one used by
/// [`crate::spectral::slobodeckij_parts`].
pub fn sobolev_equivalence_constant(s: f64, len: usize) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid("s", "order must lie in (0, 1)"));
    }
    if len == 0 {
        return Err(invalid("len", "need at least one node"));
    }
    let h = 1.0 / (len + 1) as f64;
    let last = len + 1;
    let weight = |i: usize| if i == 0 || i == last { 0.5 * h } else { h };
    let kernel: Vec<f64> = (0..=last)
        .map(|d| {
            if d == 0 {
                0.0
            } else {
                libm::pow(d as f64 * h, -(1.0 + 2.0 * s))
            }
        })
        .collect();
    // w ↦ ∇Q(w)/2 for interior w, boundary values zero
    let gram = |w: &[f64], out: &mut [f64]| {
        for i in 1..=len {
            let wi = w[i - 1];
            let mut acc = 0.0;
            for j in 0..=last {
                if j == i {
                    continue;
                }
                let wj = if j == 0 || j == last { 0.0 } else { w[j - 1] };
                acc += weight(j) * kernel[i.abs_diff(j)] * (wi - wj);
            }
            out[i - 1] = h * wi + 2.0 * weight(i) * acc;
        }
    };
    let transform = SineTransform::new(len);
    let scale: Vec<f64> = (1..=len).map(|k| eigenvalue_pow(k, -0.5 * s)).collect();
    let mut y = vec![1.0 / libm::sqrt(len as f64); len];
    let (mut c, mut w, mut gw, mut ay) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut estimate = 0.0;
    for _ in 0..20_000 {
        for ((ck, yk), sk) in c.iter_mut().zip(&y).zip(&scale) {
            *ck = yk * sk;
        }
        transform.inverse_into(&c, &mut w);
        gram(&w, &mut gw);
        // adjoint of the synthesis map is (J+1)·analysis
        transform.forward_into(&gw, &mut ay);
        for (a, sk) in ay.iter_mut().zip(&scale) {
            *a *= (len + 1) as f64 * sk;
        }
        let rayleigh: f64 = ay.iter().zip(&y).map(|(a, b)| a * b).sum();
        let norm = libm::sqrt(ay.iter().map(|a| a * a).sum::<f64>());
        for (yk, a) in y.iter_mut().zip(&ay) {
            *yk = a / norm;
        }
        let done = (rayleigh - estimate).abs() <= 1e-13 * rayleigh;
        estimate = rayleigh;
        if done {
            break;
        }
    }
    Ok(estimate)
}

/// Constant of the power-regularity bound
/// `‖u‖^{2m̃}_{W^{γ̃/m̃, 2m̃}} ≤ N ‖u^[m̃]‖²_{H^γ̃}` on a grid: the pointwise
/// constant times the grid equivalence constant between `W^{γ̃,2}` and `H^γ̃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerRegularityBound {
    pub m_tilde: f64,
    pub gamma_tilde: f64,
    pub pointwise: f64,
    pub equivalence: f64,
}

impl PowerRegularityBound {
    pub fn new(m_tilde: f64, gamma_tilde: f64, len: usize) -> Result<Self> {
        if !(gamma_tilde > 0.0 && gamma_tilde < 0.5) {
            return Err(invalid("gamma_tilde", "must lie in (0, 1/2)"));
        }
        Ok(Self {
            m_tilde,
            gamma_tilde,
            pointwise: power_regularity_constant(m_tilde)?.sup_ratio,
            equivalence: sobolev_equivalence_constant(gamma_tilde, len)?,
        })
    }

    pub fn constant(&self) -> f64 {
        self.pointwise.max(1.0) * self.equivalence
    }
}

pub fn verify_power_regularity(u: &GridFunction, bound: &PowerRegularityBound) -> Result<InequalityReport> {
    let (mt, gt) = (bound.m_tilde, bound.gamma_tilde);
    let lhs = crate::spectral::slobodeckij_parts(u, gt / mt, 2.0 * mt)?.total();
    let w = u.map(|r| signed_power(r, mt));
    let coeffs = SineTransform::new(u.len()).forward(&w);
    let rhs = bound.constant() * weighted_sq_sum(coeffs.coeffs(), gt);
    Ok(
        InequalityReport::upper("power_regularity", lhs, rhs, 1e-9 * (lhs.abs() + rhs.abs()))
            .with("m_tilde", mt)
            .with("gamma_tilde", gt)
            .with("N", bound.constant()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    struct Rng(ChaCha8Rng);

    impl Rng {
        fn new(seed: u64) -> Self {
            Self(ChaCha8Rng::seed_from_u64(seed))
        }
        fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
            lo + (hi - lo) * ((self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
        }
        /// Band-limited function with coefficients decaying like 1/k.
        fn grid_function(&mut self, len: usize, modes: usize) -> GridFunction {
            let c: Vec<f64> = (1..=len)
                .map(|k| {
                    if k <= modes {
                        self.uniform(-1.0, 1.0) / k as f64
                    } else {
                        0.0
                    }
                })
                .collect();
            SineTransform::new(len).inverse(&SpectralCoeffs::new(c).unwrap())
        }
    }

    #[test]
    fn krylov_constant_at_minus_one_brackets_one_third() {
        let iv = krylov_constant(-1.0, 10_000).unwrap();
        assert!(iv.contains(1.0 / 3.0), "{iv:?}");
        assert!(iv.width() < 1e-6);
        let one = krylov_constant(-1.0, 1).unwrap();
        assert!((one.partial_sum - 2.0 / (PI * PI)).abs() < 1e-16);
        assert!(one.lower >= one.partial_sum);
    }

    #[test]
    fn krylov_constant_rejects_divergent_orders() {
        assert!(krylov_constant(-0.5, 10).is_err());
        assert!(krylov_constant(0.0, 10).is_err());
        assert!(krylov_constant(-1.0, 0).is_err());
    }

    #[test]
    fn krylov_constant_decreases_with_order() {
        let mut prev = f64::INFINITY;
        for i in 0..30 {
            let g = -0.55 - 0.05 * i as f64;
            let v = krylov_constant(g, 20_000).unwrap().upper;
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn krylov_verifier_examples() {
        let e1 = SineTransform::new(31).inverse(&SpectralCoeffs::basis(31, 1));
        let r = verify_krylov(&e1, -1.0, 31, 4).unwrap();
        assert!(r.holds && r.lhs <= 1.0 / 3.0 + 1e-12, "{r}");
        let z = verify_krylov(&GridFunction::zeros(15), -1.0, 15, 4).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
        assert!(z.holds);
        assert!(verify_krylov(&e1, -0.4, 31, 4).is_err());
        assert!(verify_krylov(&e1, -1.0, 32, 4).is_err());
    }

    #[test]
    fn krylov_verifier_on_random_functions() {
        let mut rng = Rng::new(3);
        for gamma in [-0.6, -0.75, -1.0] {
            for _ in 0..20 {
                let u = rng.grid_function(31, 31);
                assert!(verify_krylov(&u, gamma, 31, 4).unwrap().holds);
            }
        }
    }

    #[test]
    fn sv_identity_case_has_zero_margin() {
        let mut rng = Rng::new(5);
        for beta in [0.05, 0.25, 0.45] {
            let u = rng.grid_function(63, 40);
            let r = verify_stroock_varopoulos(&u, 1.0, beta, 4).unwrap();
            assert!(r.margin.abs() <= 1e-10, "{r}");
        }
    }

    #[test]
    fn sv_single_mode_has_positive_margin() {
        let e1 = SineTransform::new(63).inverse(&SpectralCoeffs::basis(63, 1));
        let r = verify_stroock_varopoulos(&e1, 3.0, 0.25, 4).unwrap();
        assert!(r.holds && r.margin > 0.0, "{r}");
    }

    #[test]
    fn sv_margin_is_even_in_u() {
        let mut rng = Rng::new(9);
        let u = rng.grid_function(31, 20);
        let a = verify_stroock_varopoulos(&u, 2.5, 0.3, 4).unwrap();
        let b = verify_stroock_varopoulos(&u.scaled(-1.0), 2.5, 0.3, 4).unwrap();
        assert!((a.margin - b.margin).abs() <= 1e-12 * (a.lhs.abs() + 1.0));
    }

    #[test]
    fn sv_rejects_out_of_range_order() {
        let u = GridFunction::zeros(7);
        assert!(verify_stroock_varopoulos(&u, 2.0, 0.5, 4).is_err());
        assert!(verify_stroock_varopoulos(&u, 2.0, 0.0, 4).is_err());
    }

    #[test]
    fn pointwise_monotonicity_examples() {
        assert_eq!(verify_pointwise_monotonicity(1.7, 1.7, 2.0).margin, 0.0);
        let r = verify_pointwise_monotonicity(2.0, -3.0, 1.0);
        assert_eq!(r.lhs, 25.0);
        assert_eq!(r.rhs, 25.0);
    }

    #[test]
    fn pointwise_margin_symmetry_and_scaling() {
        let mut rng = Rng::new(17);
        for _ in 0..1000 {
            let (a, b) = (rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0));
            let s = rng.uniform(0.1, 4.0);
            let m = rng.uniform(1.1, 4.0);
            let r = verify_pointwise_monotonicity(a, b, m);
            let swapped = verify_pointwise_monotonicity(b, a, m);
            assert!((r.margin - swapped.margin).abs() <= 1e-12 * (r.lhs.abs() + 1.0));
            let scaled = verify_pointwise_monotonicity(s * a, s * b, m);
            let want = libm::pow(s, m + 1.0) * r.margin;
            assert!(
                (scaled.margin - want).abs() <= 1e-9 * (scaled.lhs.abs() + scaled.rhs.abs() + 1e-300),
                "{} vs {want}",
                scaled.margin
            );
        }
    }

    #[test]
    fn power_difference_is_accurate_near_the_diagonal() {
        for (a, b) in [(2.0, 0.5), (-3.0, -0.25), (1.5, -2.0), (0.0, 4.0)] {
            for q in [1.5, 2.0, 3.0] {
                let direct = signed_power(a, q) - signed_power(b, q);
                assert!((power_difference(a, b, q) - direct).abs() <= 1e-13 * direct.abs());
            }
        }
        let (b, q) = (-1.3, 2.5);
        for h in [1e-6, 1e-9, 1e-12] {
            let a = b - h;
            let d = a - b;
            let want = q * libm::pow(-b, q - 1.0) * d * (1.0 + 0.5 * (q - 1.0) * d / b);
            assert!((power_difference(a, b, q) - want).abs() <= 1e-12 * want.abs());
            for m in [1.5, 2.0, 3.0] {
                assert!(verify_pointwise_monotonicity(a, b, m).holds);
            }
        }
    }

    #[test]
    fn power_regularity_constants() {
        let one = power_regularity_constant(1.0).unwrap();
        assert!((one.sup_ratio - 1.0).abs() < 1e-12);
        let two = power_regularity_constant(2.0).unwrap();
        assert!((two.sup_ratio - 4.0).abs() < 1e-3 * 4.0);
        assert!((two.argmax.1 + 1.0).abs() < 1e-3);
    }

    #[test]
    fn constant_sigma_validates_with_zero_delta() {
        let r = validate_sigma(&SigmaSpec::constant(1.5), 2.0, &ScanSpec::default()).unwrap();
        assert!(r.holds, "{r}");
        assert_eq!(r.metadata["effective_delta"], 0.0);
    }

    #[test]
    fn critical_power_sigma_validates_exactly() {
        let s = SigmaSpec::critical_power(0.3, 2.0);
        let r = validate_sigma(&s, 2.0, &ScanSpec::default()).unwrap();
        assert!(r.holds, "{r}");
        assert!((r.metadata["effective_delta"] - 0.3).abs() < 1e-12);
        assert!((r.metadata["tail_exponent"] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn sqrt_sigma_admits_small_delta() {
        let delta = 0.01;
        let s = SigmaSpec::sqrt_positive_part(1.0);
        let k_needed = libm::sqrt(1.0 / (3.0 * delta)) * 2.0 / 3.0;
        let s = s.with_constants(0.0, delta, None).unwrap();
        let r = validate_sigma(&s, 2.0, &ScanSpec::default()).unwrap();
        assert!(
            (r.metadata["effective_k"] - k_needed).abs() < 1e-3 * k_needed,
            "{r}"
        );
        let ok = s.with_constants(k_needed * (1.0 + 1e-9), delta, None).unwrap();
        assert!(validate_sigma(&ok, 2.0, &ScanSpec::default()).unwrap().holds);
    }

    #[test]
    fn understated_constants_are_caught() {
        let s = SigmaSpec::critical_power(0.3, 2.0)
            .with_constants(0.0, 0.2, Some(0.2))
            .unwrap();
        let r = validate_sigma(&s, 2.0, &ScanSpec::default()).unwrap();
        assert!(!r.holds);
    }

    #[test]
    fn operator_monotonicity_examples() {
        let mut rng = Rng::new(23);
        let v = rng.grid_function(31, 16);
        let same =
            verify_operator_monotonicity(&v, &v, 2.0, &SigmaSpec::critical_power(0.1, 2.0), 31, 2).unwrap();
        assert_eq!(same.lhs, 0.0);
        for _ in 0..20 {
            let (a, b) = (rng.grid_function(31, 16), rng.grid_function(31, 16));
            let zero = verify_operator_monotonicity(&a, &b, 2.0, &SigmaSpec::zero(), 8, 2).unwrap();
            assert!(zero.holds && zero.metadata["noise_term"] == 0.0);
            let r = verify_operator_monotonicity(&a, &b, 2.0, &SigmaSpec::critical_power(0.1, 2.0), 31, 2)
                .unwrap();
            assert!(r.holds && r.guaranteed, "{r}");
        }
    }

    #[test]
    fn operator_monotonicity_warns_above_threshold() {
        let mut rng = Rng::new(29);
        let (a, b) = (rng.grid_function(15, 8), rng.grid_function(15, 8));
        let s = SigmaSpec::critical_power(6.0, 2.0);
        let r = verify_operator_monotonicity(&a, &b, 2.0, &s, 15, 2).unwrap();
        assert!(!r.guaranteed && !r.warnings.is_empty());
        assert!(!r.is_failure());
    }

    #[test]
    fn coercivity_examples() {
        let mut rng = Rng::new(31);
        let scan = ScanSpec::default();
        let v = rng.grid_function(31, 16);
        let r = verify_coercivity(&v, 2.0, &SigmaSpec::constant(1.0), 31, 2, &scan).unwrap();
        assert_eq!(r.metadata["mu"], 2.0);
        assert!((r.metadata["M"] - 1.0 / 3.0).abs() < 1e-15);
        assert!(r.holds);
        let z = verify_coercivity(&GridFunction::zeros(15), 2.0, &SigmaSpec::zero(), 15, 2, &scan).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
        for _ in 0..20 {
            let v = rng.grid_function(31, 16).scaled(rng.uniform(0.1, 20.0));
            let s = SigmaSpec::critical_power(2.0, 2.0);
            let r = verify_coercivity(&v, 2.0, &s, 31, 2, &scan).unwrap();
            assert!(r.holds && r.guaranteed, "{r}");
            assert!((r.metadata["delta2"] - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn delta_threshold_values() {
        assert!((delta_threshold(-1.0, 2.0).unwrap() - 1.5).abs() < 1e-9);
        let want = 1.0 / (2.0 * krylov_constant(-0.75, KRYLOV_TERMS).unwrap().upper);
        assert_eq!(delta_threshold(-0.75, 2.0).unwrap(), want);
        assert!(delta_threshold(-0.5, 2.0).is_err());
        let mut prev = f64::INFINITY;
        for m in [1.5, 3.0, 10.0, 100.0, 1e4] {
            let d = delta_threshold(-1.0, m).unwrap();
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn report_line_format() {
        let r = InequalityReport::upper("demo", 1.0, 2.0, 0.0).with("m", 2.0);
        let s = alloc::format!("{r}");
        assert_eq!(s, "name=demo params=m=2.0 lhs=1.0 rhs=2.0 margin=1.0 holds=true");
    }

    #[test]
    fn power_regularity_holds_on_sampled_functions() {
        let len = 127;
        let bound = PowerRegularityBound::new(1.5, 0.25, len).unwrap();
        assert!(bound.equivalence > 1.0 && bound.equivalence < 50.0);
        let mut rng = Rng::new(17);
        for trial in 0..200 {
            let k = 1 + trial % 60;
            let (a, b) = (rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0));
            let u =
                GridFunction::from_fn(len, |x| a * libm::sin(PI * k as f64 * x) + b * x * (1.0 - x)).unwrap();
            let r = verify_power_regularity(&u, &bound).unwrap();
            assert!(r.holds, "{r}");
        }
    }

    #[test]
    fn equivalence_constant_dominates_single_modes() {
        let len = 63;
        let c = sobolev_equivalence_constant(0.25, len).unwrap();
        let t = SineTransform::new(len);
        for k in 1..=len {
            let w = t.inverse(&SpectralCoeffs::basis(len, k));
            let q = crate::spectral::slobodeckij_parts(&w, 0.25, 2.0).unwrap().total();
            assert!(q <= c * eigenvalue_pow(k, 0.25) * (1.0 + 1e-9));
        }
    }
}
