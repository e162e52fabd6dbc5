//! Dirichlet sine-spectral representation on `I = (0, 1)`.
//!
//! A [`GridFunction`] stores nodal values at `x_j = j / (J+1)`, `j = 1..=J`;
//! the boundary zeros are implicit. A [`SpectralCoeffs`] stores
//! `v̂_k = (v, eᵏ)_{L²}` against the orthonormal basis `eᵏ(x) = √2 sin(πkx)`.
//! All fractional operators use the continuum eigenvalues `λ_k = (πk)²`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use crate::error::{invalid, Error, Result};
use crate::fft::Dst1;

/// Dirichlet eigenvalue `λ_k = (πk)²` of `-Δ` on `(0, 1)`.
#[inline]
pub fn eigenvalue(k: usize) -> f64 {
    let a = PI * k as f64;
    a * a
}

/// `λ_k^{beta}` computed as `(πk)^{2 beta}`.
#[inline]
pub fn eigenvalue_pow(k: usize, beta: f64) -> f64 {
    libm::pow(PI * k as f64, 2.0 * beta)
}

/// Signed power `|r|^{q-1} r`.
#[inline]
pub fn signed_power(r: f64, q: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else if q == 1.0 {
        r
    } else if q == 2.0 {
        r.abs() * r
    } else {
        libm::copysign(libm::pow(r.abs(), q), r)
    }
}

/// Number of interior nodes of the grid refined by `factor`.
pub fn oversampled_len(len: usize, factor: usize) -> usize {
    factor * (len + 1) - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("values", "grid must have at least one node"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { values })
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "grid must have at least one node");
        Self {
            values: vec![0.0; len],
        }
    }

    /// Samples `f` at the interior nodes.
    pub fn from_fn(len: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((1..=len).map(|j| f(node(j, len))).collect())
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.len() + 1) as f64
    }

    /// Interior nodes paired with values.
    pub fn iter_nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let len = self.len();
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (node(i + 1, len), v))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }
}

/// Node `x_j = j / (len+1)`.
#[inline]
pub fn node(j: usize, len: usize) -> f64 {
    j as f64 / (len + 1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    coeffs: Vec<f64>,
}

impl SpectralCoeffs {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("coeffs", "need at least one mode"));
        }
        if let Some(i) = coeffs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "need at least one mode");
        Self {
            coeffs: vec![0.0; len],
        }
    }

    /// Unit coordinate vector of mode `k` (1-based), i.e. `eᵏ`.
    pub fn basis(len: usize, k: usize) -> Self {
        assert!((1..=len).contains(&k));
        let mut c = Self::zeros(len);
        c.coeffs[k - 1] = 1.0;
        c
    }

    pub(crate) fn from_vec_unchecked(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Zero-pads or truncates to `len` modes.
    pub fn resized(&self, len: usize) -> Self {
        let mut coeffs = vec![0.0; len];
        let n = len.min(self.len());
        coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        Self { coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Point evaluation of `Σ v̂_k eᵏ(x)`.
    pub fn evaluate(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * SQRT_2 * libm::sin(PI * (i + 1) as f64 * x))
            .sum()
    }

    /// `∫_a^b v(x) dx`, exact for the truncated series.
    pub fn integral_over(&self, a: f64, b: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let w = PI * (i + 1) as f64;
                c * SQRT_2 * (libm::cos(w * a) - libm::cos(w * b)) / w
            })
            .sum()
    }

    /// `∫_0^1 v(x) dx`.
    pub fn integral(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .step_by(2)
            .map(|(i, c)| c * 2.0 * SQRT_2 / (PI * (i + 1) as f64))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalExponent(f64);

impl FractionalExponent {
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(invalid("beta", "must be finite"));
        }
        Ok(Self(beta))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Normalized sine transform between nodal values and `L²` coefficients for
/// one grid size. Immutable after construction, so one instance can be
/// shared across threads.
#[derive(Debug, Clone)]
pub struct SineTransform {
    dst: Dst1,
}

impl SineTransform {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "grid must have at least one node");
        Self { dst: Dst1::new(len) }
    }

    pub fn len(&self) -> usize {
        self.dst.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dst.len() == 0
    }

    /// Nodal values to coefficients: `v̂_k = √2/(J+1) Σ_j v_j sin(πkj/(J+1))`.
    pub fn forward_into(&self, values: &[f64], out: &mut [f64]) {
        self.dst.apply(values, out);
        let s = SQRT_2 / (self.len() + 1) as f64;
        out.iter_mut().for_each(|c| *c *= s);
    }

    /// Coefficients to nodal values: `v_j = √2 Σ_k v̂_k sin(πkj/(J+1))`.
    pub fn inverse_into(&self, coeffs: &[f64], out: &mut [f64]) {
        self.dst.apply(coeffs, out);
        out.iter_mut().for_each(|v| *v *= SQRT_2);
    }

    pub fn forward(&self, g: &GridFunction) -> SpectralCoeffs {
        assert_eq!(g.len(), self.len());
        let mut out = vec![0.0; self.len()];
        self.forward_into(g.values(), &mut out);
        SpectralCoeffs::from_vec_unchecked(out)
    }

    pub fn inverse(&self, c: &SpectralCoeffs) -> GridFunction {
        assert_eq!(c.len(), self.len());
        let mut out = vec![0.0; self.len()];
        self.inverse_into(c.coeffs(), &mut out);
        GridFunction::from_vec_unchecked(out)
    }

    /// Band-limited samples of `c` on this (finer) grid.
    pub fn interpolate(&self, c: &SpectralCoeffs) -> GridFunction {
        self.inverse(&c.resized(self.len()))
    }
}

pub fn dst_forward(g: &GridFunction) -> SpectralCoeffs {
    SineTransform::new(g.len()).forward(g)
}

pub fn dst_inverse(c: &SpectralCoeffs) -> GridFunction {
    SineTransform::new(c.len()).inverse(c)
}

/// `(-Δ)^{beta}` applied to a coefficient vector: `λ_k^{beta} v̂_k`.
pub fn fractional_laplacian(c: &SpectralCoeffs, beta: FractionalExponent) -> SpectralCoeffs {
    let beta = beta.value();
    if beta == 0.0 {
        return c.clone();
    }
    SpectralCoeffs::from_vec_unchecked(
        c.coeffs()
            .iter()
            .enumerate()
            .map(|(i, v)| eigenvalue_pow(i + 1, beta) * v)
            .collect(),
    )
}

/// `‖v‖²_{H^γ} = Σ λ_k^γ v̂_k²`.
pub fn h_gamma_norm_sq(c: &SpectralCoeffs, gamma: f64) -> f64 {
    weighted_sq_sum(c.coeffs(), gamma)
}

pub fn h_gamma_norm(c: &SpectralCoeffs, gamma: f64) -> f64 {
    libm::sqrt(h_gamma_norm_sq(c, gamma))
}

pub(crate) fn weighted_sq_sum(coeffs: &[f64], gamma: f64) -> f64 {
    if gamma == 0.0 {
        return coeffs.iter().map(|c| c * c).sum();
    }
    coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| eigenvalue_pow(i + 1, gamma) * c * c)
        .sum()
}

/// `((1/(J+1)) Σ |v_j|^p)^{1/p}`: the trapezoid rule with zero boundary values.
pub fn lp_norm(g: &GridFunction, p: f64) -> f64 {
    libm::pow(lp_norm_pow(g.values(), p), 1.0 / p)
}

/// `(1/(J+1)) Σ |v_j|^p` for nodal values on a grid with `values.len()` interior nodes.
pub fn lp_norm_pow(values: &[f64], p: f64) -> f64 {
    let h = 1.0 / (values.len() + 1) as f64;
    let s: f64 = if p == 2.0 {
        values.iter().map(|v| v * v).sum()
    } else {
        values.iter().map(|v| libm::pow(v.abs(), p)).sum()
    };
    h * s
}

/// The two pieces of the Slobodeckij `p`-th power: `‖v‖_{L^p}^p` and the
/// Gagliardo double integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlobodeckijParts {
    pub lp_term: f64,
    pub seminorm_term: f64,
}

impl SlobodeckijParts {
    pub fn total(&self) -> f64 {
        self.lp_term + self.seminorm_term
    }
}

fn check_slobodeckij_params(gamma: f64, p: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", "Slobodeckij order must lie in (0, 1)"));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid("p", "Slobodeckij integrability must lie in (1, ∞)"));
    }
    Ok(())
}

/// Trapezoid evaluation over the closed grid `{0, h, …, 1}²` (boundary values
/// zero, half weights at the ends) with the diagonal excluded.
pub fn slobodeckij_parts(g: &GridFunction, gamma: f64, p: f64) -> Result<SlobodeckijParts> {
    check_slobodeckij_params(gamma, p)?;
    let n = g.len();
    let h = g.spacing();
    let mut ext = Vec::with_capacity(n + 2);
    ext.push(0.0);
    ext.extend_from_slice(g.values());
    ext.push(0.0);
    let last = n + 1;
    let weight = |i: usize| if i == 0 || i == last { 0.5 * h } else { h };
    let expo = 1.0 + gamma * p;
    let kernel: Vec<f64> = (0..=last)
        .map(|d| {
            if d == 0 {
                0.0
            } else {
                libm::pow(d as f64 * h, -expo)
            }
        })
        .collect();
    let mut seminorm = 0.0;
    for i in 0..=last {
        let mut row = 0.0;
        for j in (i + 1)..=last {
            let diff = (ext[i] - ext[j]).abs();
            if diff == 0.0 {
                continue;
            }
            let num = if p == 2.0 { diff * diff } else { libm::pow(diff, p) };
            row += weight(j) * num * kernel[j - i];
        }
        seminorm += 2.0 * weight(i) * row;
    }
    Ok(SlobodeckijParts {
        lp_term: lp_norm_pow(g.values(), p),
        seminorm_term: seminorm,
    })
}

/// `(‖v‖_{L^p}^p + ∬ |v(x)-v(y)|^p / |x-y|^{1+γp})^{1/p}`.
pub fn slobodeckij_norm(g: &GridFunction, gamma: f64, p: f64) -> Result<f64> {
    let parts = slobodeckij_parts(g, gamma, p)?;
    Ok(libm::pow(parts.total(), 1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationReport {
    pub gamma: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks `‖v‖_{H^γ} ≤ ‖v‖_{H^{γ0}}^{1-θ} ‖v‖_{H^{γ1}}^θ` with `γ = (1-θ)γ0 + θγ1`.
pub fn check_interpolation(
    c: &SpectralCoeffs,
    gamma0: f64,
    gamma1: f64,
    theta: f64,
) -> Result<InterpolationReport> {
    if gamma0 == gamma1 {
        return Err(invalid("gamma1", "degenerate interpolation pair γ0 = γ1"));
    }
    if gamma0 > gamma1 {
        return Err(invalid("gamma0", "require γ0 < γ1"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid("theta", "must lie in (0, 1)"));
    }
    if c.is_zero() {
        return Err(invalid("c", "interpolation check needs a nonzero function"));
    }
    let gamma = (1.0 - theta) * gamma0 + theta * gamma1;
    let lhs = h_gamma_norm(c, gamma);
    let rhs = libm::pow(h_gamma_norm(c, gamma0), 1.0 - theta) * libm::pow(h_gamma_norm(c, gamma1), theta);
    Ok(InterpolationReport {
        gamma,
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12),
    })
}
