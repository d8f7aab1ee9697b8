use std::sync::Arc;

use super::{AdiabaticError, Result, TargetHamiltonian};
use crate::device::{Controls, DeviceParams, FluxModulation, PhaseAccumulator, Tone};
use crate::swt::{
    invert_target_couplings, refine_target_couplings, resonant_operating_point,
    second_order_effective_params, static_frequency_offset, FrequencySource,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOptions {
    pub source: FrequencySource,
    /// Newton-refine `δᵀ` against the second-order couplings; otherwise first order.
    pub refine: bool,
    pub tone_phases: [f64; 2],
    /// Calibrated `ω̄ᵀ` replacing the analytic value.
    pub omega_bar_target: Option<[f64; 2]>,
    /// Grid size of the effective-parameter track.
    pub track_points: usize,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        Self {
            source: FrequencySource::DressedAnalytic,
            refine: true,
            tone_phases: [0.0, 0.0],
            omega_bar_target: None,
            track_points: 201,
        }
    }
}

/// Second-order `ω̄_j`, `Ω_x`, `Ω_y` on a uniform grid of `s = t/T`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTrack {
    pub s: Vec<f64>,
    pub omega_bar: Vec<[f64; 2]>,
    pub omega_x: Vec<f64>,
    pub omega_y: Vec<f64>,
}

impl EffectiveTrack {
    /// Linear interpolation at `s ∈ [0, 1]`.
    pub fn eval(&self, s: f64) -> ([f64; 2], f64, f64) {
        let n = self.s.len();
        if n == 1 {
            return (self.omega_bar[0], self.omega_x[0], self.omega_y[0]);
        }
        let x = s.clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (x.floor() as usize).min(n - 2);
        let w = x - i as f64;
        let lerp = |a: f64, b: f64| a + (b - a) * w;
        (
            [
                lerp(self.omega_bar[i][0], self.omega_bar[i + 1][0]),
                lerp(self.omega_bar[i][1], self.omega_bar[i + 1][1]),
            ],
            lerp(self.omega_x[i], self.omega_x[i + 1]),
            lerp(self.omega_y[i], self.omega_y[i + 1]),
        )
    }
}

/// Linear ramps of drive amplitude, modulation depth and drive frequency.
#[derive(Debug, Clone)]
pub struct ProtocolSchedule {
    pub target: TargetHamiltonian,
    pub duration: f64,
    pub epsilon0: f64,
    pub bias: f64,
    /// `δᵀ_m`.
    pub modulation_target: [f64; 2],
    pub tone_phases: [f64; 2],
    pub omega_bar_target: [f64; 2],
    /// Final amplitudes `f_j(T)` and drive phases `φ_j`.
    pub drive_amplitude: [f64; 2],
    pub drive_phase: [f64; 2],
    pub accumulators: [PhaseAccumulator; 2],
    pub track: Arc<EffectiveTrack>,
    /// Added to the track so that `ω̄_j(T) = ω̄ᵀ_j`.
    pub track_shift: [f64; 2],
}

fn chirps(target: &TargetHamiltonian, wbar: [f64; 2], eps0: f64, t: f64) -> [PhaseAccumulator; 2] {
    [0, 1].map(|j| {
        PhaseAccumulator::linear_chirp(wbar[j] + target.a[j] - eps0, wbar[j] + target.a[j], t)
    })
}

impl ProtocolSchedule {
    /// Same ramps and track over a new run time.
    pub fn with_duration(&self, duration: f64) -> Result<Self> {
        check_duration(duration)?;
        let mut s = self.clone();
        s.duration = duration;
        s.accumulators = chirps(&self.target, self.omega_bar_target, self.epsilon0, duration);
        Ok(s)
    }

    #[inline]
    pub fn progress(&self, t: f64) -> f64 {
        (t / self.duration).clamp(0.0, 1.0)
    }

    /// `ϑ_j(t)`, the exact integral of the drive frequency.
    #[inline]
    pub fn theta(&self, j: usize, t: f64) -> f64 {
        self.accumulators[j].phase(t)
    }

    pub fn drive_frequency(&self, j: usize, t: f64) -> f64 {
        self.accumulators[j].frequency(t)
    }

    /// `(ω^φ_1, ω^φ_2) = (ω^d_1 - ω^d_2, ω^d_1 + ω^d_2)`.
    pub fn tone_frequencies(&self, t: f64) -> [f64; 2] {
        let (a, b) = (self.drive_frequency(0, t), self.drive_frequency(1, t));
        [a - b, a + b]
    }

    pub fn modulation_amplitudes(&self, t: f64) -> [f64; 2] {
        let s = self.progress(t);
        [self.modulation_target[0] * s, self.modulation_target[1] * s]
    }

    /// Instantaneous effective parameters: `(ε_j, ω̄_j, Ω_x, Ω_y)` with `ε_j = ω^d_j - ω̄_j`.
    pub fn effective_at(&self, t: f64) -> ([f64; 2], [f64; 2], f64, f64) {
        let (w, ox, oy) = self.track.eval(self.progress(t));
        let wbar = [w[0] + self.track_shift[0], w[1] + self.track_shift[1]];
        let eps = [
            self.drive_frequency(0, t) - wbar[0],
            self.drive_frequency(1, t) - wbar[1],
        ];
        (eps, wbar, ox, oy)
    }
}

impl Controls for ProtocolSchedule {
    fn flux(&self, t: f64) -> f64 {
        let s = self.progress(t);
        let (t1, t2) = (self.theta(0, t), self.theta(1, t));
        self.bias
            + s * (self.modulation_target[0] * (t1 - t2 + self.tone_phases[0]).cos()
                + self.modulation_target[1] * (t1 + t2 + self.tone_phases[1]).cos())
    }

    fn drive(&self, j: usize, t: f64) -> (f64, f64) {
        if j > 1 {
            return (0.0, 0.0);
        }
        (
            self.drive_amplitude[j] * self.progress(t),
            self.theta(j, t) + self.drive_phase[j],
        )
    }
}

fn check_duration(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(AdiabaticError::Config("T must be positive".into()));
    }
    Ok(())
}

fn modulation_at(d: [f64; 2], freqs: [f64; 2], phases: [f64; 2]) -> FluxModulation {
    FluxModulation::new(vec![
        Tone {
            amplitude: d[0],
            freq: freqs[0],
            phase: phases[0],
        },
        Tone {
            amplitude: d[1],
            freq: freqs[1],
            phase: phases[1],
        },
    ])
}

/// Builds the linear protocol reaching `target` after `duration`.
pub fn build_schedule(
    target: &TargetHamiltonian,
    params: &DeviceParams,
    duration: f64,
    epsilon0: f64,
    opts: &ScheduleOptions,
) -> Result<ProtocolSchedule> {
    check_duration(duration)?;
    if params.num_qubits() != 2 {
        return Err(AdiabaticError::Config(
            "the protocol needs exactly two qubits".into(),
        ));
    }
    if !epsilon0.is_finite() {
        return Err(AdiabaticError::Config("ε0 must be finite".into()));
    }
    if opts.track_points < 2 {
        return Err(AdiabaticError::Config(
            "track needs at least two points".into(),
        ));
    }
    let (d, point) = if target.jx == 0.0 && target.jy == 0.0 {
        let p = resonant_operating_point(params, 0.0, 0.0, opts.tone_phases, opts.source)?;
        ([0.0, 0.0], p)
    } else if opts.refine {
        let r =
            refine_target_couplings(target.jx, target.jy, params, opts.tone_phases, opts.source)?;
        ([r.d1, r.d2], r.point)
    } else {
        let (d1, d2) = invert_target_couplings(target.jx, target.jy, params)?;
        let p = resonant_operating_point(params, d1, d2, opts.tone_phases, opts.source)?;
        ([d1, d2], p)
    };
    let analytic_target = [point.omega_bar[0], point.omega_bar[1]];
    let wbar = opts.omega_bar_target.unwrap_or(analytic_target);
    let settings = [target.drive_settings(0), target.drive_settings(1)];
    let offset = static_frequency_offset(params, opts.source)?;
    let mut sched = ProtocolSchedule {
        target: *target,
        duration,
        epsilon0,
        bias: params.flux_bias,
        modulation_target: d,
        tone_phases: opts.tone_phases,
        omega_bar_target: wbar,
        drive_amplitude: [settings[0].0, settings[1].0],
        drive_phase: [settings[0].1, settings[1].1],
        accumulators: chirps(target, wbar, epsilon0, duration),
        track: Arc::new(EffectiveTrack {
            s: vec![],
            omega_bar: vec![],
            omega_x: vec![],
            omega_y: vec![],
        }),
        track_shift: [0.0, 0.0],
    };
    let n = opts.track_points;
    let mut track = EffectiveTrack {
        s: Vec::with_capacity(n),
        omega_bar: Vec::with_capacity(n),
        omega_x: Vec::with_capacity(n),
        omega_y: Vec::with_capacity(n),
    };
    for i in 0..n {
        let s = i as f64 / (n - 1) as f64;
        let t = s * duration;
        let drives = [sched.drive_frequency(0, t), sched.drive_frequency(1, t)];
        let m = modulation_at(
            sched.modulation_amplitudes(t),
            sched.tone_frequencies(t),
            opts.tone_phases,
        );
        let eff = second_order_effective_params(params, &m, &drives)?;
        track.s.push(s);
        track
            .omega_bar
            .push([eff.omega_bar[0] + offset[0], eff.omega_bar[1] + offset[1]]);
        track.omega_x.push(eff.omega_x);
        track.omega_y.push(eff.omega_y);
    }
    let end = *track.omega_bar.last().expect("non-empty track");
    sched.track_shift = [wbar[0] - end[0], wbar[1] - end[1]];
    sched.track = Arc::new(track);
    Ok(sched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const MHZ: f64 = 2.0 * PI * 1e6;

    fn zero_schedule() -> ProtocolSchedule {
        let p = DeviceParams::two_qubit_reference();
        let opts = ScheduleOptions {
            track_points: 5,
            ..Default::default()
        };
        build_schedule(&TargetHamiltonian::default(), &p, 2e-6, 2.5 * MHZ, &opts).unwrap()
    }

    #[test]
    fn zero_target_is_a_pure_chirp() {
        let s = zero_schedule();
        assert_eq!(s.modulation_target, [0.0, 0.0]);
        assert_eq!(s.drive_amplitude, [0.0, 0.0]);
        for t in [0.0, 0.3e-6, 2e-6] {
            assert_eq!(s.flux(t), s.bias);
            assert_eq!(s.drive(0, t).0, 0.0);
        }
        assert!(s.track.omega_x.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn midpoint_and_endpoints_are_linear() {
        let s = zero_schedule();
        let t = s.duration;
        for j in 0..2 {
            let w = s.omega_bar_target[j];
            assert!((s.drive_frequency(j, 0.5 * t) - (w - 0.5 * s.epsilon0)).abs() < 1e-3);
            assert!((s.drive_frequency(j, t) - w).abs() < 1e-3);
            assert!((s.drive_frequency(j, 0.0) - (w - s.epsilon0)).abs() < 1e-3);
        }
        let tones = s.tone_frequencies(0.0);
        let w = s.omega_bar_target;
        assert!((tones[0] - (w[0] - w[1])).abs() < 1e-3);
        assert!((tones[1] - (w[0] + w[1] - 2.0 * s.epsilon0)).abs() < 1e-3);
        assert!((s.tone_frequencies(t)[0] - tones[0]).abs() < 1e-3);
    }

    #[test]
    fn phase_is_the_exact_quadratic_integral() {
        let s = zero_schedule();
        let t = s.duration;
        let w = s.omega_bar_target[0];
        let exact = (w - s.epsilon0) * t + 0.5 * s.epsilon0 * t;
        assert!((s.theta(0, t) - exact).abs() <= 1e-15 * exact.abs());
        let r = s.with_duration(4e-6).unwrap();
        assert!(
            (r.drive_frequency(1, 2e-6) - (r.omega_bar_target[1] - 0.5 * r.epsilon0)).abs() < 1e-3
        );
        assert!(s.with_duration(0.0).is_err());
    }

    #[test]
    fn h2_row_reaches_target_couplings() {
        let p = DeviceParams::two_qubit_reference();
        let target = TargetHamiltonian::h2(3.0 * MHZ, 0.5 * MHZ, 0.1 * MHZ);
        let opts = ScheduleOptions {
            track_points: 11,
            ..Default::default()
        };
        let s = build_schedule(&target, &p, 1e-6, 2.5 * MHZ, &opts).unwrap();
        assert_eq!(s.drive_phase, [-PI / 2.0; 2]);
        let (eps, _, ox, oy) = s.effective_at(s.duration);
        assert!((ox - target.jx).abs() < 1e-3 * target.jx);
        assert!((oy - target.jy).abs() < 1e-2 * target.jx);
        assert!(eps[0].abs() < 1e-3 && eps[1].abs() < 1e-3);
        let (_, _, ox0, oy0) = s.effective_at(0.0);
        assert_eq!((ox0, oy0), (0.0, 0.0));
        let (d1, d2) = (
            s.modulation_amplitudes(0.5e-6)[0],
            s.modulation_amplitudes(0.5e-6)[1],
        );
        assert!((d1 - 0.5 * s.modulation_target[0]).abs() < 1e-15);
        assert!((d2 - 0.5 * s.modulation_target[1]).abs() < 1e-15);
    }
}
