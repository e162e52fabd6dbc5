//! Truncated space-time white noise `Σ_{k≤n} eᵏ dwᵏ`.
//!
//! Increments are generated counter-style: the normal draw for mode `k` at
//! step `s` of path `p` is a pure function of `(master_seed, p, s, k)`. A
//! ChaCha8 keystream is keyed by the master seed, the stream id is the path
//! index and the word position is derived from the step index, so any
//! increment can be produced in O(1) regardless of what was consumed before.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{invalid, Error, Result};
use crate::sigma::SigmaSpec;
use crate::spectral::{GridFunction, SineTransform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub n_modes: usize,
    pub dt: f64,
    pub master_seed: u64,
    pub path_index: u64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(invalid("n_modes", "need at least one Wiener process"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "time step must be positive"));
        }
        Ok(())
    }
}

/// `Δwᵏ ~ N(0, dt)`, independent over `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrements {
    pub dw: Vec<f64>,
    pub dt: f64,
    pub step_index: u64,
}

impl WienerIncrements {
    pub fn n_modes(&self) -> usize {
        self.dw.len()
    }
}

/// SplitMix64 finalizer; spreads a 64-bit seed over the 256-bit ChaCha key.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn seed_key(master_seed: u64) -> [u8; 32] {
    let mut state = master_seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Uniform in `(0, 1]`.
#[inline]
pub(crate) fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Box–Muller pair; always consumes exactly two `u64`.
#[inline]
pub(crate) fn normal_pair(rng: &mut impl RngCore) -> (f64, f64) {
    let u1 = open_unit(rng);
    let u2 = open_unit(rng);
    let r = libm::sqrt(-2.0 * libm::log(u1));
    let a = 2.0 * PI * u2;
    (r * libm::cos(a), r * libm::sin(a))
}

#[derive(Debug, Clone)]
pub struct NoiseStream {
    cfg: NoiseConfig,
    key: [u8; 32],
}

pub fn derive_stream(cfg: NoiseConfig) -> Result<NoiseStream> {
    cfg.validate()?;
    Ok(NoiseStream {
        key: seed_key(cfg.master_seed),
        cfg,
    })
}

impl NoiseStream {
    pub fn config(&self) -> &NoiseConfig {
        &self.cfg
    }

    pub fn n_modes(&self) -> usize {
        self.cfg.n_modes
    }

    /// Each step owns a block of 2³² keystream words, so the draw for mode
    /// `k` does not depend on `n_modes`.
    fn word_pos(step_index: u64) -> u128 {
        (step_index as u128) << 32
    }

    /// Standard normals `ζ_k` for step `step_index`.
    pub fn standard_normals(&self, step_index: u64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.cfg.n_modes);
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(self.cfg.path_index);
        rng.set_word_pos(Self::word_pos(step_index));
        for pair in out.chunks_mut(2) {
            let (a, b) = normal_pair(&mut rng);
            pair[0] = a;
            if let Some(slot) = pair.get_mut(1) {
                *slot = b;
            }
        }
    }

    /// Increments for step `step_index` with the configured `dt`.
    pub fn increments(&self, step_index: u64) -> WienerIncrements {
        self.increments_with_dt(step_index, self.cfg.dt)
    }

    /// Increments for step `step_index` over a step of length `dt`; used by
    /// adaptive time stepping.
    pub fn increments_with_dt(&self, step_index: u64, dt: f64) -> WienerIncrements {
        let mut dw = vec![0.0; self.cfg.n_modes];
        self.standard_normals(step_index, &mut dw);
        let s = libm::sqrt(dt);
        dw.iter_mut().for_each(|z| *z *= s);
        WienerIncrements { dw, dt, step_index }
    }

    /// Steps `0, 1, 2, …` in order.
    pub fn iter(&self) -> impl Iterator<Item = WienerIncrements> + '_ {
        (0u64..).map(move |s| self.increments(s))
    }
}

/// `Σ_{k≤n} eᵏ(x_j) Δwᵏ` on the grid of `transform`.
pub(crate) fn noise_sum(transform: &SineTransform, inc: &WienerIncrements, out: &mut [f64]) {
    let mut padded = vec![0.0; transform.len()];
    padded[..inc.dw.len()].copy_from_slice(&inc.dw);
    transform.inverse_into(&padded, out);
}

/// `σ(x_j, v_j) Σ_{k≤n} eᵏ(x_j) Δwᵏ`.
pub fn noise_field(v: &GridFunction, sigma: &SigmaSpec, inc: &WienerIncrements) -> Result<GridFunction> {
    if inc.n_modes() > v.len() {
        return Err(Error::LengthMismatch {
            expected: v.len(),
            actual: inc.n_modes(),
        });
    }
    let transform = SineTransform::new(v.len());
    let mut values = vec![0.0; v.len()];
    noise_sum(&transform, inc, &mut values);
    for ((x, vj), out) in v.iter_nodes().zip(values.iter_mut()) {
        *out *= sigma.eval(x, vj);
    }
    GridFunction::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::SQRT_2;

    fn stream(n: usize, seed: u64, path: u64) -> NoiseStream {
        derive_stream(NoiseConfig {
            n_modes: n,
            dt: 1e-3,
            master_seed: seed,
            path_index: path,
        })
        .unwrap()
    }

    #[test]
    fn same_config_same_sequence() {
        let a: Vec<_> = stream(5, 1, 0).iter().take(50).collect();
        let b: Vec<_> = stream(5, 1, 0).iter().take(50).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn increments_do_not_depend_on_consumption_order() {
        let s = stream(7, 42, 3);
        let forward: Vec<_> = (0..20).map(|i| s.increments(i)).collect();
        for i in (0..20).rev() {
            assert_eq!(s.increments(i), forward[i as usize]);
        }
    }

    #[test]
    fn path_index_and_seed_change_the_sequence() {
        let a = stream(4, 9, 0).increments(0);
        assert_ne!(a, stream(4, 9, 1).increments(0));
        assert_ne!(a, stream(4, 10, 0).increments(0));
    }

    #[test]
    fn mode_draws_are_prefix_stable() {
        // mode k's draw does not depend on how many modes follow it
        let a = stream(4, 5, 2).increments(11);
        let b = stream(6, 5, 2).increments(11);
        assert_eq!(a.dw[..4], b.dw[..4]);
    }

    #[test]
    fn moments_match_normal_law() {
        let s = stream(2, 123, 0);
        let n = 1_000_000u64 / 2;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for step in 0..n {
            for &d in &s.increments(step).dw {
                sum += d / libm::sqrt(1e-3);
                sumsq += d * d;
            }
        }
        let count = 2.0 * n as f64;
        assert!((sum / count).abs() < 4.0 / libm::sqrt(count));
        let var = sumsq / count;
        assert!((var - 1e-3).abs() < 0.01 * 1e-3);
    }

    #[test]
    fn modes_are_uncorrelated() {
        let s = stream(3, 77, 5);
        let n = 100_000u64;
        let mut cross = [0.0f64; 3];
        for step in 0..n {
            let z = s.increments_with_dt(step, 1.0).dw;
            cross[0] += z[0] * z[1];
            cross[1] += z[0] * z[2];
            cross[2] += z[1] * z[2];
        }
        // standard error of a product mean of independent unit normals is 1/√n
        for c in cross {
            assert!((c / n as f64).abs() < 4.0 / libm::sqrt(n as f64));
        }
    }

    fn normal_cdf(x: f64) -> f64 {
        0.5 * libm::erfc(-x / SQRT_2)
    }

    #[test]
    fn kolmogorov_smirnov_against_standard_normal() {
        let s = stream(1, 2024, 0);
        let n = 100_000usize;
        let mut z: Vec<f64> = (0..n as u64)
            .map(|i| s.increments_with_dt(i, 1.0).dw[0])
            .collect();
        z.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = z
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = normal_cdf(x);
                (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
            })
            .fold(0.0, f64::max);
        // asymptotic critical value at significance 1e-3: √(-ln(α/2)/2)
        let critical = libm::sqrt(-libm::log(0.5e-3) / 2.0) / libm::sqrt(n as f64);
        assert!(d < critical, "KS statistic {d} ≥ {critical}");
    }

    #[test]
    fn noise_field_examples() {
        let len = 31;
        let v = GridFunction::from_fn(len, |x| x * (1.0 - x)).unwrap();
        let inc = WienerIncrements {
            dw: alloc::vec![0.3],
            dt: 0.1,
            step_index: 0,
        };
        let f = noise_field(&v, &SigmaSpec::constant(1.0), &inc).unwrap();
        for (x, val) in f.iter_nodes() {
            assert!((val - 0.3 * SQRT_2 * libm::sin(PI * x)).abs() < 1e-14);
        }
        let z = noise_field(&v, &SigmaSpec::zero(), &inc).unwrap();
        assert!(z.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn noise_field_vanishes_where_solution_does() {
        let len = 15;
        let v = GridFunction::from_fn(len, |x| if x < 0.5 { 0.0 } else { x }).unwrap();
        let inc = stream(8, 3, 0).increments(0);
        let f = noise_field(&v, &SigmaSpec::sqrt_positive_part(1.0), &inc).unwrap();
        for ((_, vj), fj) in v.iter_nodes().zip(f.values()) {
            if vj == 0.0 {
                assert_eq!(*fj, 0.0);
            }
        }
    }

    #[test]
    fn too_many_modes_is_rejected() {
        let inc = stream(8, 3, 0).increments(0);
        assert!(noise_field(&GridFunction::zeros(7), &SigmaSpec::zero(), &inc).is_err());
    }
}
