//! Direct integration of `i α' + g - (ω_j ± ω_c(t)) α = 0` and windowed
//! Fourier projection of the result.

use std::f64::consts::PI;

use super::{Result, SwtError};
use crate::device::{
    coupler_frequency_series, coupler_frequency_unchecked, flux_waveform, Branch, CouplerSeries,
    DeviceParams, FluxModulation,
};
use crate::linalg::{cr, C64};

/// Uniform sampling grid `t_k = start + k dt`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub start: f64,
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(start: f64, dt: f64, len: usize) -> Self {
        Self { start, dt, len }
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.len.saturating_sub(1))
    }
}

/// Coupler frequency used inside the ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplerModel {
    /// `ω_c(Φ(t))` without expansion.
    Exact,
    /// Taylor expansion of the given order.
    Series(u8),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    /// Local error tolerance, relative to `|g/Δ|`.
    pub tolerance: f64,
    pub max_rejections: usize,
    pub coupler: CouplerModel,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_rejections: 60,
            coupler: CouplerModel::Exact,
        }
    }
}

/// Solution of the SWT coefficient equation on `grid`, starting from `g/Δ^θ`.
pub fn solve_alpha_ode(
    params: &DeviceParams,
    modulation: &FluxModulation,
    j: usize,
    branch: Branch,
    grid: &TimeGrid,
) -> Result<Vec<C64>> {
    solve_alpha_ode_with(params, modulation, j, branch, grid, &OdeOptions::default())
}

enum Omega {
    Exact { freq0: f64 },
    Series(CouplerSeries),
}

pub fn solve_alpha_ode_with(
    params: &DeviceParams,
    modulation: &FluxModulation,
    j: usize,
    branch: Branch,
    grid: &TimeGrid,
    opts: &OdeOptions,
) -> Result<Vec<C64>> {
    modulation.validate(params)?;
    if grid.len == 0 || !(grid.dt > 0.0) {
        return Err(SwtError::InvalidInput(
            "empty or non-increasing grid".into(),
        ));
    }
    let g = params.qubits[j].coupling;
    let wq = params.qubits[j].freq;
    let s = branch.sign();
    let delta = params.detuning(j, branch)?;
    let omega = match opts.coupler {
        CouplerModel::Exact => Omega::Exact {
            freq0: params.coupler.freq0,
        },
        CouplerModel::Series(order) => {
            Omega::Series(coupler_frequency_series(modulation, params, order)?)
        }
    };
    let wc = |t: f64| match &omega {
        Omega::Exact { freq0 } => {
            coupler_frequency_unchecked(flux_waveform(t, params, modulation), *freq0)
        }
        Omega::Series(series) => series.eval(t),
    };
    let rhs = |t: f64, a: C64| -> C64 {
        let d = wq + s * wc(t);
        C64::new(0.0, 1.0) * (cr(g) - a * d)
    };

    let scale = (g / delta).abs();
    let atol = opts.tolerance * scale;
    let mut out = Vec::with_capacity(grid.len);
    let mut t = 0.0;
    let mut y = cr(g / delta);
    // integrate from 0 to the grid start first
    let mut h = (2.0 * PI / delta.abs()) / 50.0;
    let mut k1 = rhs(t, y);
    let mut rejections = 0;
    let mut targets = (0..grid.len).map(|k| grid.time(k));
    let mut next = targets.next();
    if grid.start < 0.0 {
        return Err(SwtError::InvalidInput("grid must start at t >= 0".into()));
    }
    while let Some(target) = next {
        if target <= t {
            out.push(y);
            next = targets.next();
            continue;
        }
        let landing = h >= target - t;
        let step = if landing { target - t } else { h };
        let (y5, err, k7) = dp45_step(&rhs, t, y, k1, step);
        let tol = atol + opts.tolerance * y.norm().max(y5.norm());
        let ratio = err / tol;
        let fac = if ratio == 0.0 {
            5.0
        } else {
            (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
        };
        if ratio <= 1.0 {
            t = if landing { target } else { t + step };
            y = y5;
            k1 = k7;
            rejections = 0;
            h = if landing {
                h.max(step * fac)
            } else {
                step * fac
            };
        } else {
            rejections += 1;
            if rejections > opts.max_rejections {
                return Err(SwtError::IntegratorFailure(format!(
                    "{rejections} consecutive step rejections at t = {t:.6e} s (step {step:.3e} s, error ratio {ratio:.3e})"
                )));
            }
            h = step * fac.min(0.9);
        }
        if !y.re.is_finite() || !y.im.is_finite() {
            return Err(SwtError::IntegratorFailure(format!(
                "non-finite state at t = {t:.6e} s"
            )));
        }
    }
    Ok(out)
}

/// One Dormand–Prince 5(4) step; returns (5th-order solution, error norm, f at the end).
fn dp45_step(f: &impl Fn(f64, C64) -> C64, t: f64, y: C64, k1: C64, h: f64) -> (C64, f64, C64) {
    const C2: f64 = 1.0 / 5.0;
    const C3: f64 = 3.0 / 10.0;
    const C4: f64 = 4.0 / 5.0;
    const C5: f64 = 8.0 / 9.0;
    let k2 = f(t + C2 * h, y + k1 * (h / 5.0));
    let k3 = f(t + C3 * h, y + (k1 * (3.0 / 40.0) + k2 * (9.0 / 40.0)) * h);
    let k4 = f(
        t + C4 * h,
        y + (k1 * (44.0 / 45.0) - k2 * (56.0 / 15.0) + k3 * (32.0 / 9.0)) * h,
    );
    let k5 = f(
        t + C5 * h,
        y + (k1 * (19372.0 / 6561.0) - k2 * (25360.0 / 2187.0) + k3 * (64448.0 / 6561.0)
            - k4 * (212.0 / 729.0))
            * h,
    );
    let k6 = f(
        t + h,
        y + (k1 * (9017.0 / 3168.0) - k2 * (355.0 / 33.0)
            + k3 * (46732.0 / 5247.0)
            + k4 * (49.0 / 176.0)
            - k5 * (5103.0 / 18656.0))
            * h,
    );
    let y5 = y
        + (k1 * (35.0 / 384.0) + k3 * (500.0 / 1113.0) + k4 * (125.0 / 192.0)
            - k5 * (2187.0 / 6784.0)
            + k6 * (11.0 / 84.0))
            * h;
    let k7 = f(t + h, y5);
    let e = (k1 * (71.0 / 57600.0) - k3 * (71.0 / 16695.0) + k4 * (71.0 / 1920.0)
        - k5 * (17253.0 / 339200.0)
        + k6 * (22.0 / 525.0)
        - k7 * (1.0 / 40.0))
        * h;
    (y5, e.norm(), k7)
}

const FLAT_TOP: [f64; 5] = [
    0.21557895,
    0.41663158,
    0.277263158,
    0.083578947,
    0.006947368,
];

/// Flat-top window at relative position `x ∈ [0, 1]`.
pub fn flat_top_window(x: f64) -> f64 {
    let a = FLAT_TOP;
    let w = 2.0 * PI * x;
    a[0] - a[1] * w.cos() + a[2] * (2.0 * w).cos() - a[3] * (3.0 * w).cos() + a[4] * (4.0 * w).cos()
}

/// Windowed projection `Σ w(t) y(t) e^{-iνt} / Σ w(t)` over the whole grid.
///
/// With a flat-top window the estimate is the complex amplitude of the
/// component `A e^{iνt}`.
pub fn fourier_component(grid: &TimeGrid, samples: &[C64], freq: f64) -> C64 {
    let n = samples.len().min(grid.len);
    if n < 2 {
        return samples.first().copied().unwrap_or_default();
    }
    let mut acc = C64::new(0.0, 0.0);
    let mut wsum = 0.0;
    // the phasor is advanced by recurrence with periodic re-anchoring
    let step = C64::from_polar(1.0, -freq * grid.dt);
    let mut ph = C64::from_polar(1.0, -freq * grid.start);
    for (k, y) in samples.iter().take(n).enumerate() {
        if k % 1024 == 0 {
            ph = C64::from_polar(1.0, -freq * grid.time(k));
        }
        let w = flat_top_window(k as f64 / (n - 1) as f64);
        acc += *y * ph * w;
        wsum += w;
        ph *= step;
    }
    acc / wsum
}
