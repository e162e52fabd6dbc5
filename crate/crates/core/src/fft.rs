//! Type-I discrete sine transform.
//!
//! `X_k = Σ_{j=1}^{J} x_j sin(π j k / (J+1))` for `k = 1..=J`.
//!
//! When `J + 1` is a power of two the transform runs through a radix-2
//! complex FFT of the odd extension (length `2(J+1)`); otherwise a direct
//! `O(J²)` sum over a tabulated sine is used.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[derive(Debug, Clone)]
enum Backend {
    Radix2 {
        /// `exp(-2πi k / L)` for `k < L/2`.
        tw_re: Vec<f64>,
        tw_im: Vec<f64>,
        bitrev: Vec<usize>,
    },
    Direct {
        /// `sin(π r / (J+1))` for `r < 2(J+1)`.
        sines: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Dst1 {
    len: usize,
    backend: Backend,
}

impl Dst1 {
    pub(crate) fn new(len: usize) -> Self {
        let period = 2 * (len + 1);
        let backend = if (len + 1).is_power_of_two() {
            let half = period / 2;
            let (tw_re, tw_im) = (0..half)
                .map(|k| {
                    let a = -2.0 * PI * k as f64 / period as f64;
                    (libm::cos(a), libm::sin(a))
                })
                .unzip();
            let bits = period.trailing_zeros();
            let bitrev = (0..period)
                .map(|i| i.reverse_bits() >> (usize::BITS - bits))
                .collect();
            Backend::Radix2 { tw_re, tw_im, bitrev }
        } else {
            let sines = (0..period)
                .map(|r| libm::sin(PI * r as f64 / (len + 1) as f64))
                .collect();
            Backend::Direct { sines }
        };
        Self { len, backend }
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    /// Unnormalized DST-I of `input` into `out`. Both slices have length `len`.
    pub(crate) fn apply(&self, input: &[f64], out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.len);
        debug_assert_eq!(out.len(), self.len);
        let n = self.len + 1;
        match &self.backend {
            Backend::Direct { sines } => {
                let period = sines.len();
                for (k, o) in (1..=self.len).zip(out.iter_mut()) {
                    let mut acc = 0.0;
                    let mut r = 0usize;
                    for &x in input {
                        r += k;
                        if r >= period {
                            r -= period;
                        }
                        acc += x * sines[r];
                    }
                    *o = acc;
                }
            }
            Backend::Radix2 { tw_re, tw_im, bitrev } => {
                let period = 2 * n;
                let mut re = vec![0.0; period];
                let mut im = vec![0.0; period];
                // odd extension, written directly in bit-reversed order
                for (j, &x) in (1..=self.len).zip(input) {
                    re[bitrev[j]] = x;
                    re[bitrev[period - j]] = -x;
                }
                fft_in_place(&mut re, &mut im, tw_re, tw_im);
                for (k, o) in (1..=self.len).zip(out.iter_mut()) {
                    *o = -0.5 * im[k];
                }
            }
        }
    }
}

/// Iterative radix-2 decimation-in-time FFT on bit-reversed input.
fn fft_in_place(re: &mut [f64], im: &mut [f64], tw_re: &[f64], tw_im: &[f64]) {
    let n = re.len();
    let mut size = 2;
    while size <= n {
        let half = size / 2;
        let stride = n / size;
        for start in (0..n).step_by(size) {
            for k in 0..half {
                let (wr, wi) = (tw_re[k * stride], tw_im[k * stride]);
                let a = start + k;
                let b = a + half;
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        size *= 2;
    }
}
