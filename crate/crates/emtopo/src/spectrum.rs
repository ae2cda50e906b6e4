//! Discrete Fourier transform helpers and scattering-parameter extraction.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Forward DFT of a real sequence, `X_m = sum_n x_n exp(-i 2 pi m n / N)`.
pub fn dft(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if buf.is_empty() {
        return buf;
    }
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Inverse DFT including the 1/N normalization.
pub fn idft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    if buf.is_empty() {
        return buf;
    }
    let n = buf.len();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Frequency (Hz) of each DFT bin for a record of `n` samples spaced `dt`.
/// Bins above `n/2` carry the usual negative frequencies `(m-n)/(n dt)`.
pub fn dft_freqs(n: usize, dt: f64) -> Vec<f64> {
    let df = 1.0 / (n as f64 * dt);
    (0..n)
        .map(|m| {
            if m <= n / 2 {
                m as f64 * df
            } else {
                (m as f64 - n as f64) * df
            }
        })
        .collect()
}

/// One scattering-parameter sample.
#[derive(Debug, Clone, Copy)]
pub struct SparamSample {
    pub freq_hz: f64,
    pub value: Complex64,
}

impl SparamSample {
    pub fn magnitude_db(&self) -> f64 {
        20.0 * self.value.norm().max(1e-300).log10()
    }
    pub fn phase_deg(&self) -> f64 {
        self.value.arg().to_degrees()
    }
}

/// `S_ij(f) = DFT(out_i) / DFT(in_j)` on the record's own DFT grid, restricted
/// to `band_hz = (lo, hi)`. Both records come from the same run (port `j`
/// excited) and must share the length and the time step.
pub fn sparam(
    out_i: &[f64],
    in_j: &[f64],
    dt: f64,
    band_hz: (f64, f64),
) -> Result<Vec<SparamSample>> {
    if out_i.len() != in_j.len() {
        return Err(Error::config(format!(
            "S-parameter records differ in length: {} vs {}",
            out_i.len(),
            in_j.len()
        )));
    }
    if out_i.is_empty() {
        return Err(Error::config("S-parameter records are empty"));
    }
    let n = out_i.len();
    let num = dft(out_i);
    let den = dft(in_j);
    let freqs = dft_freqs(n, dt);
    // Guard against dividing by spectral nulls of the excitation.
    let den_peak = den.iter().map(|c| c.norm()).fold(0.0_f64, f64::max);
    let floor = 1e-9 * den_peak;
    let mut samples = Vec::new();
    for m in 0..=n / 2 {
        let f = freqs[m];
        if f < band_hz.0 || f > band_hz.1 {
            continue;
        }
        if den[m].norm() <= floor {
            return Err(Error::numeric(format!(
                "incident spectrum vanishes at {f:.4e} Hz inside the requested band"
            )));
        }
        samples.push(SparamSample {
            freq_hz: f,
            value: num[m] / den[m],
        });
    }
    if samples.is_empty() {
        return Err(Error::config(
            "no DFT bins fall inside the requested band; record too short or band too narrow",
        ));
    }
    Ok(samples)
}

/// Maximum of `|S|` over a set of samples.
pub fn max_magnitude(samples: &[SparamSample]) -> f64 {
    samples.iter().map(|s| s.value.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// DFT agrees with a direct O(N^2) evaluation of the defining sum.
    #[test]
    fn dft_matches_direct_sum() {
        let n = 37; // deliberately not a power of two
        let x: Vec<f64> = (0..n).map(|k| (0.3 * k as f64).sin() + 0.1 * k as f64).collect();
        let fast = dft(&x);
        for m in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &v) in x.iter().enumerate() {
                let ph = -2.0 * std::f64::consts::PI * (m * k) as f64 / n as f64;
                acc += Complex64::new(v * ph.cos(), v * ph.sin());
            }
            assert!((fast[m] - acc).norm() < 1e-9 * (1.0 + acc.norm()));
        }
    }

    #[test]
    fn idft_inverts_dft() {
        let x: Vec<f64> = (0..64).map(|k| ((k * k) % 17) as f64 - 8.0).collect();
        let back = idft(&dft(&x));
        for (orig, rec) in x.iter().zip(back.iter()) {
            assert!((orig - rec.re).abs() < 1e-12);
            assert!(rec.im.abs() < 1e-12);
        }
    }

    /// A pure delay line has |S| = 1 and linear phase.
    #[test]
    fn sparam_of_pure_delay() {
        let dt = 1e-12;
        let n = 4096;
        let delay = 25usize;
        let pulse: Vec<f64> = (0..n)
            .map(|k| {
                let t = (k as f64 - 200.0) * dt;
                (-0.5 * (t / (20.0 * dt)).powi(2)).exp() * (2.0 * std::f64::consts::PI * 20e9 * t).cos()
            })
            .collect();
        let mut delayed = vec![0.0; n];
        delayed[delay..].copy_from_slice(&pulse[..n - delay]);
        let s = sparam(&delayed, &pulse, dt, (15e9, 25e9)).unwrap();
        for smp in &s {
            assert!((smp.value.norm() - 1.0).abs() < 1e-6);
            let expect = -2.0 * std::f64::consts::PI * smp.freq_hz * delay as f64 * dt;
            let diff = (smp.value.arg() - expect).rem_euclid(2.0 * std::f64::consts::PI);
            let diff = diff.min(2.0 * std::f64::consts::PI - diff);
            assert!(diff < 1e-6, "phase mismatch at {} Hz", smp.freq_hz);
        }
    }

    #[test]
    fn sparam_rejects_band_without_bins() {
        let x = vec![1.0, 0.0, 0.0, 0.0];
        assert!(sparam(&x, &x, 1e-12, (1e9, 1.0001e9)).is_err());
    }
}
