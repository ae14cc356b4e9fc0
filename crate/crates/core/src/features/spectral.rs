//! Single-segment periodogram of the mean-removed window.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::stats;

pub const MIN_SPECTRAL_LEN: usize = 8;

/// One-sided periodogram: bins `0..=n/2`, power `|X_k|^2 / n`, bin `k` at
/// frequency `k * sample_rate / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    pub power: Vec<f64>,
    pub resolution: f64,
}

impl Periodogram {
    pub fn new(w: &[f64], sample_rate: f64) -> Option<Self> {
        let n = w.len();
        if n < MIN_SPECTRAL_LEN || sample_rate.is_nan() || sample_rate <= 0.0 {
            return None;
        }
        let mu = stats::mean(w);
        let mut buf: Vec<Complex<f64>> = w.iter().map(|&x| Complex::new(x - mu, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let mut power: Vec<f64> = buf[..=n / 2].iter().map(|c| c.norm_sqr() / n as f64).collect();
        // the mean is removed, so DC is zero up to rounding
        power[0] = 0.0;
        Some(Periodogram {
            power,
            resolution: sample_rate / n as f64,
        })
    }

    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.resolution
    }

    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }

    pub fn coeff(&self, k: usize) -> Option<f64> {
        self.power.get(k).copied()
    }

    /// Power summed over bins with frequency in `[f_lo, f_hi)`.
    pub fn band_power(&self, f_lo: f64, f_hi: f64) -> f64 {
        self.power
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = self.frequency(*k);
                f >= f_lo && f < f_hi
            })
            .map(|(_, p)| p)
            .sum()
    }

    /// Entropy (nats) of the power distribution after grouping the one-sided
    /// bins into `bins` equal-width frequency bands over `[0, nyquist]`. With
    /// at least as many bands as bins this is the entropy of the normalized
    /// periodogram itself. Zero power gives 0.
    pub fn entropy(&self, bins: usize) -> f64 {
        let total = self.total();
        if bins == 0 || total <= 0.0 {
            return 0.0;
        }
        let last = self.power.len() - 1;
        let groups = bins.min(self.power.len());
        let mut mass = vec![0.0; groups];
        for (k, p) in self.power.iter().enumerate() {
            let g = if groups == self.power.len() {
                k
            } else {
                ((k as f64 / last as f64) * groups as f64)
                    .floor()
                    .min((groups - 1) as f64) as usize
            };
            mass[g] += p;
        }
        mass.iter()
            .filter(|&&m| m > 0.0)
            .map(|&m| {
                let p = m / total;
                -p * p.ln()
            })
            .sum()
    }
}
