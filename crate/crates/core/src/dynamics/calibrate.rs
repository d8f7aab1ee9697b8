//! Effective-frequency calibration by maximising transition contrast.

use super::gate::{params_for, sample_dressed_columns};
use super::{DynamicsError, PropagationConfig, Result};
use crate::device::{dressed_basis, DeviceParams, DressedBasis, FluxModulation, ModelKind, Tone};
use crate::swt::{resonant_operating_point, FrequencySource};

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationWindow {
    pub kind: ModelKind,
    /// Source of the analytic centre of the scan.
    pub source: FrequencySource,
    /// Scan half-width in rad/s; `None` picks three coupling widths.
    pub half_width: Option<f64>,
    pub points: usize,
    /// Propagation length per point; `None` uses 1.2 predicted transfer times.
    pub duration: Option<f64>,
    pub step: f64,
    pub phases: [f64; 2],
    pub leakage_threshold: f64,
    /// Rescan one coarse spacing around the first-pass peaks.
    pub refine: bool,
}

impl Default for CalibrationWindow {
    fn default() -> Self {
        Self {
            kind: ModelKind::Transmon,
            source: FrequencySource::DressedAnalytic,
            half_width: None,
            points: 13,
            duration: None,
            step: super::DEFAULT_STEP,
            phases: [0.0, 0.0],
            leakage_threshold: crate::operators::DEFAULT_LEAKAGE_THRESHOLD,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub omega_bar: [f64; 2],
    /// Contrast-maximising difference and sum tone frequencies.
    pub transitions: [f64; 2],
    pub analytic_omega_bar: [f64; 2],
    /// Scan offsets (rad/s, relative to the analytic resonances) with the
    /// exchange and pair contrasts, all passes.
    pub scan: Vec<(f64, f64, f64)>,
    pub duration: f64,
}

/// Smallest peak contrast accepted as a resonance.
pub const MIN_CONTRAST: f64 = 0.1;

/// Maximum transfer |10⟩→|01⟩ and |00⟩→|11⟩ over `[0, duration]` with the given tones.
pub fn transition_contrast(
    params: &DeviceParams,
    modulation: &FluxModulation,
    dressed: &DressedBasis,
    kind: ModelKind,
    duration: f64,
    step: f64,
    leakage_threshold: f64,
) -> Result<[f64; 2]> {
    let cfg = PropagationConfig::new(duration, step)
        .with_stride(20)
        .without_states();
    let s = sample_dressed_columns(
        params,
        modulation,
        kind,
        dressed,
        &[0, 2],
        &cfg,
        leakage_threshold,
    )?;
    let ex = s.transfer(2, 1).into_iter().fold(0.0, f64::max);
    let pr = s.transfer(0, 3).into_iter().fold(0.0, f64::max);
    Ok([ex, pr])
}

/// Vertex of a parabola fitted to `1/C` (a Lorentzian in `C`) around the best point.
/// `coarse` also demands that the scan brackets the peak.
fn lorentzian_peak(x: &[f64], c: &[f64], coarse: bool) -> Result<f64> {
    let (imax, cmax) = c
        .iter()
        .copied()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
        );
    let cmin = c.iter().copied().fold(f64::INFINITY, f64::min);
    if cmax < MIN_CONTRAST || (coarse && cmax - cmin < 0.5 * cmax) {
        return Err(DynamicsError::CalibrationFailure(format!(
            "flat contrast landscape (max {cmax:.3}, min {cmin:.3})"
        )));
    }
    let lo = imax.saturating_sub(2);
    let hi = (imax + 2).min(x.len() - 1);
    let idx: Vec<usize> = (lo..=hi).filter(|&i| c[i] > 0.2 * cmax).collect();
    if idx.len() < 3 {
        return Ok(x[imax]);
    }
    let mut a = nalgebra::DMatrix::<f64>::zeros(idx.len(), 3);
    let mut b = nalgebra::DVector::<f64>::zeros(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        let u = x[i] - x[imax];
        a[(r, 0)] = 1.0;
        a[(r, 1)] = u;
        a[(r, 2)] = u * u;
        b[r] = 1.0 / c[i];
    }
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| DynamicsError::CalibrationFailure(e.into()))?;
    let step = x[1] - x[0];
    if sol[2] <= 0.0 {
        return Ok(x[imax]);
    }
    let u = -sol[1] / (2.0 * sol[2]);
    Ok(x[imax] + u.clamp(-step, step))
}

/// Scans both tones together around the analytic resonances and returns
/// `ω̄_1 = (ν_Σ + ν_Δ)/2`, `ω̄_2 = (ν_Σ - ν_Δ)/2` from the contrast peaks.
pub fn calibrate_effective_frequencies(
    params: &DeviceParams,
    d1: f64,
    d2: f64,
    window: &CalibrationWindow,
) -> Result<Calibration> {
    if window.points < 5 {
        return Err(DynamicsError::Config(
            "calibration scan needs at least 5 points".into(),
        ));
    }
    let params = &params_for(params, window.kind);
    let point = resonant_operating_point(params, d1, d2, window.phases, window.source)?;
    let w = &point.omega_bar;
    let centre = [w[0] - w[1], w[0] + w[1]];
    let eff = &point.effective;
    let g_ex = (eff.omega_x + eff.omega_y).abs();
    let g_pr = (eff.omega_x - eff.omega_y).abs();
    let weakest = g_ex.min(g_pr);
    if !(weakest > 0.0) && window.duration.is_none() {
        return Err(DynamicsError::CalibrationFailure(
            "predicted coupling vanishes; modulation too weak to calibrate".into(),
        ));
    }
    let duration = window
        .duration
        .unwrap_or(1.2 * std::f64::consts::PI / weakest);
    let half = window.half_width.unwrap_or(3.0 * g_ex.max(g_pr));
    let dressed = dressed_basis(params, window.kind)?;
    let n = window.points;
    let mut scan = Vec::new();
    let pass = |centre: [f64; 2],
                half: f64,
                coarse: bool,
                scan: &mut Vec<(f64, f64, f64)>|
     -> Result<[f64; 2]> {
        let offsets: Vec<f64> = (0..n)
            .map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64)
            .collect();
        let mut ex = Vec::with_capacity(n);
        let mut pr = Vec::with_capacity(n);
        for &x in &offsets {
            let m = FluxModulation::new(vec![
                Tone {
                    amplitude: d1,
                    freq: centre[0] + x,
                    phase: window.phases[0],
                },
                Tone {
                    amplitude: d2,
                    freq: centre[1] + x,
                    phase: window.phases[1],
                },
            ]);
            let [e, p] = transition_contrast(
                params,
                &m,
                &dressed,
                window.kind,
                duration,
                window.step,
                window.leakage_threshold,
            )?;
            ex.push(e);
            pr.push(p);
            scan.push((centre[0] + x - (w[0] - w[1]), e, p));
        }
        Ok([
            centre[0] + lorentzian_peak(&offsets, &ex, coarse)?,
            centre[1] + lorentzian_peak(&offsets, &pr, coarse)?,
        ])
    };
    let mut nu = pass(centre, half, true, &mut scan)?;
    if window.refine {
        nu = pass(nu, 2.0 * half / (n - 1) as f64, false, &mut scan)?;
    }
    let [nu_d, nu_s] = nu;
    Ok(Calibration {
        omega_bar: [0.5 * (nu_s + nu_d), 0.5 * (nu_s - nu_d)],
        transitions: [nu_d, nu_s],
        analytic_omega_bar: [w[0], w[1]],
        scan,
        duration,
    })
}
