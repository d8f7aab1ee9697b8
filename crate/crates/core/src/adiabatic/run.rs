use std::time::Instant;

use super::{
    ground_fidelity, pauli2, single, AdiabaticError, ProtocolSchedule, Result, TargetHamiltonian,
};
use crate::device::{
    dressed_basis, qubit_label, Branch, DeviceModel, DeviceParams, DriveForm, ModelKind,
    COUPLER_LABEL,
};
use crate::dynamics::{
    propagate_lindblad, propagate_lindblad_channels, propagate_schrodinger, CollapseOperator,
    Diagnostics, DynamicsError, LindbladSpec, PropagationConfig, DEFAULT_STEP,
};
use crate::linalg::{self, cr, CMatrix, C64};
use crate::operators::{
    apply_frame, local, partial_trace, project_two_level, HilbertSpace, ParametricOperator,
    QuantumState, DEFAULT_LEAKAGE_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Unitary,
    Lindblad(LindbladSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    /// Truncated transmons and coupler.
    Full,
    /// The 4×4 rotating-frame effective Hamiltonian.
    Effective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Integration step; `None` picks 1 ps (full) or `min(1 ns, T/2000)` (effective).
    pub step: Option<f64>,
    pub leakage_threshold: f64,
    /// Permit Lindblad runs of the full model (vectorised dimension `d⁶`).
    pub allow_full_lindblad: bool,
    pub gap_points: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            step: None,
            leakage_threshold: DEFAULT_LEAKAGE_THRESHOLD,
            allow_full_lindblad: false,
            gap_points: 401,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GapSeries {
    pub times: Vec<f64>,
    pub gap: Vec<f64>,
    pub g_min: f64,
    pub t_min: f64,
}

#[derive(Debug, Clone)]
pub struct AnnealResult {
    /// Two-qubit state in the rotating frame.
    pub state: QuantumState,
    pub energy: f64,
    pub ground_energy: f64,
    /// `E - E₀`.
    pub delta_e: f64,
    pub fidelity: f64,
    pub leakage: f64,
    pub gap: GapSeries,
    pub duration: f64,
    pub model: ModelChoice,
    pub diagnostics: Diagnostics,
    pub wall_seconds: f64,
}

/// The rotating-frame two-qubit Hamiltonian along a schedule.
pub struct EffectiveModel {
    space: HilbertSpace,
    pieces: Vec<CMatrix>,
    schedule: ProtocolSchedule,
}

impl EffectiveModel {
    pub fn new(schedule: &ProtocolSchedule) -> Self {
        let (x, y, z) = (local::pauli_x(), local::pauli_y(), local::pauli_z());
        let half = cr(0.5);
        let pieces = vec![
            single(0, &z) * half,
            single(1, &z) * half,
            single(0, &x) * half,
            single(0, &y) * half,
            single(1, &x) * half,
            single(1, &y) * half,
            pauli2(&x, &x) * half,
            pauli2(&y, &y) * half,
        ];
        Self {
            space: two_qubit_space(),
            pieces,
            schedule: schedule.clone(),
        }
    }

    pub fn schedule(&self) -> &ProtocolSchedule {
        &self.schedule
    }
}

impl ParametricOperator for EffectiveModel {
    fn space(&self) -> &HilbertSpace {
        &self.space
    }

    fn pieces(&self) -> &[CMatrix] {
        &self.pieces
    }

    fn coefficients(&self, t: f64, out: &mut [C64]) {
        let sc = &self.schedule;
        let s = sc.progress(t);
        let (eps, _, ox, oy) = sc.effective_at(t);
        out[0] = cr(eps[0]);
        out[1] = cr(eps[1]);
        for j in 0..2 {
            let f = sc.drive_amplitude[j] * s;
            let (sn, cs) = sc.drive_phase[j].sin_cos();
            out[2 + 2 * j] = cr(f * cs);
            out[3 + 2 * j] = cr(-f * sn);
        }
        out[6] = cr(ox);
        out[7] = cr(oy);
    }
}

fn two_qubit_space() -> HilbertSpace {
    HilbertSpace::new([("q1", 2), ("q2", 2)]).expect("valid labels")
}

/// Qubit channels at their own rates plus coupler channels seen through the
/// static hybridisation `g_j/Δ_{j,±}`.
pub fn effective_collapse_operators(
    params: &DeviceParams,
    spec: &LindbladSpec,
) -> Result<Vec<CollapseOperator>> {
    spec.validate()?;
    let mut out = Vec::new();
    let (sm, sp, n) = (local::sigma_minus(), local::sigma_plus(), local::number(2));
    let coupler = spec.rates(COUPLER_LABEL)?;
    for j in 0..2 {
        if let Some(r) = spec.rates(&qubit_label(j))? {
            if r.relaxation > 0.0 {
                out.push(CollapseOperator {
                    operator: single(j, &sm),
                    rate: r.relaxation,
                });
            }
            if r.dephasing > 0.0 {
                out.push(CollapseOperator {
                    operator: single(j, &n),
                    rate: r.dephasing,
                });
            }
        }
        if let Some(r) = coupler {
            let total = r.relaxation + r.dephasing;
            if total > 0.0 {
                let g = params.qubits[j].coupling;
                let lo = (g / params.detuning(j, Branch::Minus)?).powi(2);
                let hi = (g / params.detuning(j, Branch::Plus)?).powi(2);
                out.push(CollapseOperator {
                    operator: single(j, &sm),
                    rate: total * lo,
                });
                out.push(CollapseOperator {
                    operator: single(j, &sp),
                    rate: total * hi,
                });
            }
        }
    }
    for label in spec.channels.keys() {
        if label != COUPLER_LABEL && !(0..2).any(|j| qubit_label(j) == *label) {
            return Err(AdiabaticError::Config(format!(
                "unknown subsystem {label:?} in dissipation spec"
            )));
        }
    }
    Ok(out)
}

/// Ground-to-first-excited gap of the effective Hamiltonian along the ramp.
pub fn gap_series(schedule: &ProtocolSchedule, points: usize) -> GapSeries {
    let model = EffectiveModel::new(schedule);
    let n = points.max(2);
    let mut out = GapSeries {
        times: Vec::with_capacity(n),
        gap: Vec::with_capacity(n),
        g_min: f64::INFINITY,
        t_min: 0.0,
    };
    for i in 0..n {
        let t = schedule.duration * i as f64 / (n - 1) as f64;
        let vals = linalg::eigvalsh(model.at(t).matrix());
        let g = (vals[1] - vals[0]).max(0.0);
        if g < out.g_min {
            out.g_min = g;
            out.t_min = t;
        }
        out.times.push(t);
        out.gap.push(g);
    }
    out
}

fn finish(
    schedule: &ProtocolSchedule,
    state: QuantumState,
    leakage: f64,
    model: ModelChoice,
    diagnostics: Diagnostics,
    opts: &RunOptions,
    started: Instant,
) -> Result<AnnealResult> {
    let target: &TargetHamiltonian = &schedule.target;
    let energy = target.energy(&state)?;
    let (e0, _, _) = target.ground();
    let fidelity = ground_fidelity(target, &state)?;
    Ok(AnnealResult {
        state,
        energy,
        ground_energy: e0,
        delta_e: energy - e0,
        fidelity,
        leakage,
        gap: gap_series(schedule, opts.gap_points),
        duration: schedule.duration,
        model,
        diagnostics,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs the protocol to `T` and evaluates the energy and ground-state fidelity.
pub fn run_protocol(
    schedule: &ProtocolSchedule,
    params: &DeviceParams,
    mode: &Mode,
    model: ModelChoice,
    opts: &RunOptions,
) -> Result<AnnealResult> {
    let started = Instant::now();
    let t_final = schedule.duration;
    match model {
        ModelChoice::Effective => {
            let h = EffectiveModel::new(schedule);
            let step = opts.step.unwrap_or((t_final / 2000.0).min(1e-9));
            let cfg = PropagationConfig::new(t_final, step)
                .without_states()
                .with_stride(usize::MAX);
            let psi0 = QuantumState::basis(h.space(), &[0, 0])?;
            let traj = match mode {
                Mode::Unitary => propagate_schrodinger(&h, &psi0, &cfg, &[])?,
                Mode::Lindblad(spec) => {
                    let ch = effective_collapse_operators(params, spec)?;
                    propagate_lindblad_channels(&h, &psi0.to_mixed(), &ch, &cfg, &[])?
                }
            };
            finish(
                schedule,
                traj.final_state,
                0.0,
                model,
                traj.diagnostics,
                opts,
                started,
            )
        }
        ModelChoice::Full => {
            let kind = ModelKind::Transmon;
            let device = DeviceModel::new(params, schedule.clone(), kind, DriveForm::RotatingWave)?;
            let ground = dressed_basis(params, kind)?.ground_state;
            let psi0 = QuantumState::pure_normalized(device.space().clone(), ground)?;
            let step = opts.step.unwrap_or(DEFAULT_STEP);
            let cfg = PropagationConfig::new(t_final, step)
                .without_states()
                .with_stride(usize::MAX);
            let traj = match mode {
                Mode::Unitary => propagate_schrodinger(&device, &psi0, &cfg, &[])?,
                Mode::Lindblad(spec) => {
                    if !opts.allow_full_lindblad {
                        return Err(AdiabaticError::Config(
                            "full-model Lindblad runs must be enabled explicitly".into(),
                        ));
                    }
                    propagate_lindblad(&device, &psi0.to_mixed(), spec, &cfg, &[])?
                }
            };
            let labels = [qubit_label(0), qubit_label(1)];
            let reduced =
                partial_trace(&traj.final_state, &[labels[0].as_str(), labels[1].as_str()])?;
            let proj = project_two_level(&reduced, opts.leakage_threshold)?;
            if proj.warning {
                return Err(DynamicsError::Leakage {
                    time: t_final,
                    leakage: proj.leakage,
                    threshold: opts.leakage_threshold,
                }
                .into());
            }
            let frame = [
                (labels[0].as_str(), schedule.theta(0, t_final)),
                (labels[1].as_str(), schedule.theta(1, t_final)),
            ];
            let state = apply_frame(&proj.state, &frame)?;
            finish(
                schedule,
                state,
                proj.leakage,
                model,
                traj.diagnostics,
                opts,
                started,
            )
        }
    }
}

#[derive(Debug, Clone)]
pub struct RuntimeScan {
    /// `(T, F_T, ΔE)` in input order.
    pub rows: Vec<(f64, f64, f64)>,
    pub t_opt: f64,
    pub f_opt: f64,
}

/// Runs the protocol for each duration and returns the fidelity-maximising one.
pub fn scan_optimal_runtime(
    schedule: &ProtocolSchedule,
    params: &DeviceParams,
    mode: &Mode,
    model: ModelChoice,
    durations: &[f64],
    opts: &RunOptions,
) -> Result<RuntimeScan> {
    if durations.is_empty() {
        return Err(AdiabaticError::Config("empty duration list".into()));
    }
    let mut rows = Vec::with_capacity(durations.len());
    for &t in durations {
        let r = run_protocol(&schedule.with_duration(t)?, params, mode, model, opts)?;
        rows.push((t, r.fidelity, r.delta_e));
    }
    let best = rows
        .iter()
        .copied()
        .fold((0.0, f64::NEG_INFINITY), |acc, r| {
            if r.1 > acc.1 {
                (r.0, r.1)
            } else {
                acc
            }
        });
    Ok(RuntimeScan {
        rows,
        t_opt: best.0,
        f_opt: best.1,
    })
}

/// Coupler dissipation in a coherence sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplerVariant {
    Ideal,
    Coherence { t1: f64, t2: f64 },
}

impl CouplerVariant {
    /// Ideal, `(T1, T2) = (10, 10) μs` and `(10, 1) μs`.
    pub fn standard() -> [CouplerVariant; 3] {
        [
            CouplerVariant::Ideal,
            CouplerVariant::Coherence {
                t1: 10e-6,
                t2: 10e-6,
            },
            CouplerVariant::Coherence {
                t1: 10e-6,
                t2: 1e-6,
            },
        ]
    }

    pub fn label(&self) -> String {
        match self {
            CouplerVariant::Ideal => "ideal".into(),
            CouplerVariant::Coherence { t1, t2 } => {
                format!("t1c={:.3}us,t2c={:.3}us", t1 * 1e6, t2 * 1e6)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceRow {
    pub variant: CouplerVariant,
    pub t_coh: f64,
    pub delta_e: f64,
    pub fidelity: f64,
}

/// ΔE at fixed `T` with `T1 = T2 = T_coh` on both qubits, for each coupler variant.
pub fn coherence_sweep(
    schedule: &ProtocolSchedule,
    params: &DeviceParams,
    t_cohs: &[f64],
    variants: &[CouplerVariant],
    model: ModelChoice,
    opts: &RunOptions,
) -> Result<Vec<CoherenceRow>> {
    let mut out = Vec::with_capacity(t_cohs.len() * variants.len());
    for v in variants {
        for &tc in t_cohs {
            let mut spec = LindbladSpec::new().with("q1", tc, tc)?.with("q2", tc, tc)?;
            if let CouplerVariant::Coherence { t1, t2 } = *v {
                spec = spec.with(COUPLER_LABEL, t1, t2)?;
            }
            let r = run_protocol(schedule, params, &Mode::Lindblad(spec), model, opts)?;
            out.push(CoherenceRow {
                variant: *v,
                t_coh: tc,
                delta_e: r.delta_e,
                fidelity: r.fidelity,
            });
        }
    }
    Ok(out)
}

/// Smallest `T_coh` at which `|ΔE|` falls to `threshold`, interpolated in `log T_coh`.
pub fn chemical_accuracy_crossing(rows: &[(f64, f64)], threshold: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = rows.iter().map(|&(t, e)| (t, e.abs())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.first()?.1 <= threshold {
        return Some(pts[0].0);
    }
    pts.windows(2)
        .find(|w| w[0].1 > threshold && w[1].1 <= threshold)
        .map(|w| {
            let (l0, l1) = (w[0].0.ln(), w[1].0.ln());
            let x = (w[0].1 - threshold) / (w[0].1 - w[1].1);
            (l0 + x * (l1 - l0)).exp()
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adiabatic::{build_schedule, ScheduleOptions};
    use std::f64::consts::PI;

    const MHZ: f64 = 2.0 * PI * 1e6;

    fn schedule(target: TargetHamiltonian, t: f64) -> ProtocolSchedule {
        let p = DeviceParams::two_qubit_reference();
        let opts = ScheduleOptions {
            track_points: 21,
            ..Default::default()
        };
        build_schedule(&target, &p, t, 2.5 * MHZ, &opts).unwrap()
    }

    #[test]
    fn nothing_ramps_for_zero_target() {
        let s = schedule(TargetHamiltonian::default(), 1e-6);
        let p = DeviceParams::two_qubit_reference();
        let r = run_protocol(
            &s,
            &p,
            &Mode::Unitary,
            ModelChoice::Effective,
            &RunOptions::default(),
        )
        .unwrap();
        assert!((r.fidelity - 1.0).abs() < 1e-12);
        assert!(r.delta_e.abs() < 1e-9);
        assert!((r.state.populations()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_target_gap_starts_at_epsilon0() {
        let s = schedule(TargetHamiltonian::default(), 1e-6);
        let g = gap_series(&s, 11);
        assert!((g.gap[0] - s.epsilon0).abs() < 1e-3 * s.epsilon0);
        assert!(g.gap.iter().all(|&x| x >= 0.0));
        let end = linalg::eigvalsh(EffectiveModel::new(&s).at(s.duration).matrix());
        assert!((g.gap[10] - (end[1] - end[0])).abs() < 1e-9);
    }

    #[test]
    fn crossing_interpolates_in_log_time() {
        let rows = [(1e-5, 4.0), (1e-4, 2.0), (1e-3, 0.5)];
        let x = chemical_accuracy_crossing(&rows, 1.0).unwrap();
        let expected = (1e-4f64.ln() + (2.0 - 1.0) / 1.5 * (1e-3f64.ln() - 1e-4f64.ln())).exp();
        assert!((x / expected - 1.0).abs() < 1e-12);
        assert_eq!(chemical_accuracy_crossing(&rows, 0.1), None);
        assert_eq!(chemical_accuracy_crossing(&rows, 5.0), Some(1e-5));
    }

    #[test]
    fn coupler_channels_scale_with_hybridisation() {
        let p = DeviceParams::two_qubit_reference();
        let spec = LindbladSpec::new().with("c", 10e-6, 1e-6).unwrap();
        let ch = effective_collapse_operators(&p, &spec).unwrap();
        assert_eq!(ch.len(), 4);
        let r = spec.rates("c").unwrap().unwrap();
        let g = p.qubits[0].coupling;
        let d = p.detuning(0, Branch::Minus).unwrap();
        assert!(
            (ch[0].rate - (r.relaxation + r.dephasing) * (g / d).powi(2)).abs() < 1e-9 * ch[0].rate
        );
        let bad = LindbladSpec::new().with("q3", 1e-5, 1e-5).unwrap();
        assert!(effective_collapse_operators(&p, &bad).is_err());
    }
}
