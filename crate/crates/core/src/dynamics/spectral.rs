use std::f64::consts::PI;

use rustfft::FftPlanner;

use super::{DynamicsError, Result};
use crate::linalg::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationFit {
    /// Angular frequency, rad/s.
    pub frequency: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// RMS of the single-sinusoid fit residual.
    pub residual: f64,
}

/// Peak-to-median ratio of the padded spectrum below which there is no peak.
const PEAK_TO_FLOOR: f64 = 5.0;
const PADDING: usize = 8;

fn fit_at(times: &[f64], values: &[f64], w: f64) -> (f64, f64, f64, f64) {
    // least squares on {1, cos, sin}
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    let t0 = times[0];
    for (&t, &y) in times.iter().zip(values) {
        let (s, c) = (w * (t - t0)).sin_cos();
        let f = [1.0, c, s];
        for i in 0..3 {
            b[i] += f[i] * y;
            for j in 0..3 {
                a[i][j] += f[i] * f[j];
            }
        }
    }
    let m = nalgebra::Matrix3::from_fn(|i, j| a[i][j]);
    let x = m
        .lu()
        .solve(&nalgebra::Vector3::from(b))
        .unwrap_or_else(nalgebra::Vector3::zeros);
    let mut ss = 0.0;
    for (&t, &y) in times.iter().zip(values) {
        let (s, c) = (w * (t - t0)).sin_cos();
        let r = y - x[0] - x[1] * c - x[2] * s;
        ss += r * r;
    }
    let rms = (ss / times.len() as f64).sqrt();
    (rms, x[0], x[1].hypot(x[2]), w)
}

/// Dominant oscillation frequency of a uniformly sampled real series:
/// padded FFT peak, then a one-bin golden-section sinusoid fit.
pub fn extract_oscillation_frequency(times: &[f64], values: &[f64]) -> Result<OscillationFit> {
    let n = times.len();
    if n < 8 || values.len() != n {
        return Err(DynamicsError::ExtractionFailure(
            "need at least 8 samples".into(),
        ));
    }
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0)
        || times
            .windows(2)
            .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt)
    {
        return Err(DynamicsError::ExtractionFailure(
            "samples are not uniformly spaced".into(),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::ExtractionFailure(
            "series contains non-finite values".into(),
        ));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let spread = values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * mean.abs().max(1.0) {
        return Err(DynamicsError::ExtractionFailure(
            "series is constant".into(),
        ));
    }
    let len = (n * PADDING).next_power_of_two();
    let mut buf: Vec<C64> = values.iter().map(|v| C64::new(v - mean, 0.0)).collect();
    buf.resize(len, C64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let half = len / 2;
    // skip everything below one cycle per record
    let lo = (len / n).max(1);
    let mags: Vec<f64> = buf[..half].iter().map(|z| z.norm()).collect();
    let (ipeak, peak) =
        mags[lo..].iter().enumerate().fold(
            (0, 0.0),
            |acc, (i, &m)| if m > acc.1 { (i + lo, m) } else { acc },
        );
    let mut sorted = mags[lo..].to_vec();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[sorted.len() / 2];
    if peak <= PEAK_TO_FLOOR * floor {
        return Err(DynamicsError::ExtractionFailure(format!(
            "no spectral peak above the noise floor (peak/median = {:.2})",
            peak / floor.max(f64::MIN_POSITIVE)
        )));
    }
    let bin = 2.0 * PI / (len as f64 * dt);
    let w0 = ipeak as f64 * bin;
    let span = 2.0 * PI / (n as f64 * dt);
    let (mut a, mut b) = ((w0 - span).max(bin), w0 + span);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = fit_at(times, values, x1).0;
    let mut f2 = fit_at(times, values, x2).0;
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = fit_at(times, values, x1).0;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = fit_at(times, values, x2).0;
        }
        if b - a < 1e-12 * w0 {
            break;
        }
    }
    let (residual, offset, amplitude, frequency) = fit_at(times, values, 0.5 * (a + b));
    let periods = frequency * (times[n - 1] - times[0]) / (2.0 * PI);
    if periods < 2.0 - 1e-9 {
        log::warn!("series spans only {periods:.2} oscillation periods");
    }
    Ok(OscillationFit {
        frequency,
        amplitude,
        offset,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dt: f64, span: f64) -> Vec<f64> {
        (0..=(span / dt).round() as usize)
            .map(|k| k as f64 * dt)
            .collect()
    }

    #[test]
    fn single_tone() {
        let w = 2.0 * PI * 1.2e6;
        let t = grid(10e-9, 5e-6);
        let y: Vec<f64> = t.iter().map(|&t| 0.5 + 0.5 * (w * t).cos()).collect();
        let fit = extract_oscillation_frequency(&t, &y).unwrap();
        assert!(((fit.frequency - w) / w).abs() < 1e-3);
        assert!(fit.residual < 1e-8);
        assert!((fit.amplitude - 0.5).abs() < 1e-6);
    }

    #[test]
    fn constant_fails() {
        let t = grid(10e-9, 5e-6);
        let y = vec![0.3; t.len()];
        assert!(matches!(
            extract_oscillation_frequency(&t, &y),
            Err(DynamicsError::ExtractionFailure(_))
        ));
    }

    #[test]
    fn dominant_of_two_tones() {
        let (w1, w2) = (2.0 * PI * 1.0e6, 2.0 * PI * 3.3e6);
        let t = grid(10e-9, 5e-6);
        let y: Vec<f64> = t
            .iter()
            .map(|&t| (w1 * t).cos() + 0.1 * (w2 * t + 0.4).sin())
            .collect();
        let fit = extract_oscillation_frequency(&t, &y).unwrap();
        assert!(((fit.frequency - w1) / w1).abs() < 5e-3);
        assert!(fit.residual > 0.01 && fit.residual < 0.1);
    }
}
