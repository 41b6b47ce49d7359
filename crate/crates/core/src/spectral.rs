//! Spatial Fourier transform of envelopes sampled on `[0, L]`.
//!
//! The transform approximates `f(k) = (1/L) int_0^L f(z) exp(-i k z) dz` on
//! the wavenumbers `k_m = 2 pi m / L` by the trapezoid rule. Because
//! `exp(-i k_m L) = 1`, the rule reduces to an FFT over the first `nz - 1`
//! samples plus an endpoint correction `(f(L) - f(0)) / (2 (nz - 1))`. The
//! `m` range is trimmed so the axis is symmetric about zero.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct SpatialTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    /// FFT output index for each entry of `k`.
    bins: Vec<usize>,
    k: Vec<f64>,
}

impl std::fmt::Debug for SpatialTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpatialTransform")
            .field("n", &self.n)
            .field("bins", &self.k.len())
            .finish()
    }
}

impl SpatialTransform {
    /// Transform for `nz` samples spanning `[0, length]` (both ends included).
    pub fn new(nz: usize, length: f64) -> Self {
        assert!(nz >= 3, "spatial transform needs at least 3 samples");
        let n = nz - 1;
        let m_max = (n as i64 - 1) / 2;
        let mut bins = Vec::with_capacity(2 * m_max as usize + 1);
        let mut k = Vec::with_capacity(bins.capacity());
        for m in -m_max..=m_max {
            bins.push(m.rem_euclid(n as i64) as usize);
            k.push(2.0 * PI * m as f64 / length);
        }
        let fft = FftPlanner::new().plan_fft_forward(n);
        Self { n, fft, bins, k }
    }

    /// Wavenumbers, ascending and symmetric about zero.
    pub fn k_axis(&self) -> &[f64] {
        &self.k
    }

    pub fn bin_width(&self) -> f64 {
        if self.k.len() > 1 {
            self.k[1] - self.k[0]
        } else {
            0.0
        }
    }

    /// Index of `k = 0` in [`k_axis`](Self::k_axis).
    pub fn zero_bin(&self) -> usize {
        self.k.len() / 2
    }

    pub fn forward(&self, samples: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(samples.len(), self.n + 1, "sample count does not match transform");
        let mut buf = samples[..self.n].to_vec();
        self.fft.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        let edge = (samples[self.n] - samples[0]) * (0.5 * scale);
        self.bins.iter().map(|&b| buf[b] * scale + edge).collect()
    }
}

/// Index of the peak magnitude. Entries within a relative `1e-9` of the
/// maximum tie, and the tie goes to the smallest `|k|` (then the smaller `k`).
pub fn peak_bin(k: &[f64], values: &[Complex64]) -> usize {
    let max = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let floor = max * (1.0 - 1e-9);
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.norm() >= floor {
            best = match best {
                None => Some(i),
                Some(b) if (k[i].abs(), k[i]) < (k[b].abs(), k[b]) => Some(i),
                keep => keep,
            };
        }
    }
    best.unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_is_symmetric() {
        for nz in [16, 17, 256, 257] {
            let t = SpatialTransform::new(nz, 2.0);
            let k = t.k_axis();
            for (a, b) in k.iter().zip(k.iter().rev()) {
                assert!((a + b).abs() < 1e-12);
            }
            assert_eq!(k[t.zero_bin()], 0.0);
        }
    }

    #[test]
    fn plane_wave_peaks_at_its_wavenumber() {
        let nz = 257;
        let length = 1.0;
        let t = SpatialTransform::new(nz, length);
        let dz = length / (nz - 1) as f64;
        let k0 = 2.0 * PI * 17.3;
        let samples: Vec<Complex64> = (0..nz)
            .map(|j| {
                let z = j as f64 * dz;
                let w = (-((z - 0.5) / 0.2).powi(2)).exp();
                Complex64::from_polar(w, k0 * z)
            })
            .collect();
        let spec = t.forward(&samples);
        let kp = t.k_axis()[peak_bin(t.k_axis(), &spec)];
        assert!((kp - k0).abs() <= t.bin_width());
    }

    #[test]
    fn constant_maps_to_zero_bin() {
        let t = SpatialTransform::new(33, 1.0);
        let spec = t.forward(&vec![Complex64::new(2.0, 0.0); 33]);
        assert!((spec[t.zero_bin()] - Complex64::new(2.0, 0.0)).norm() < 1e-14);
        let rest: f64 = spec.iter().map(|v| v.norm()).sum::<f64>() - 2.0;
        assert!(rest.abs() < 1e-12);
    }

    #[test]
    fn tie_break_prefers_small_k() {
        let k = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let v = [1.0, 3.0, 0.5, 3.0, 1.0].map(|x| Complex64::new(x, 0.0));
        assert_eq!(peak_bin(&k, &v), 1);
    }
}
