//! Acceptance suite. Each test prints one PASS/FAIL line to stderr and then
//! asserts the same verdict.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use paramsim::adiabatic::{
    build_schedule, gap_series, run_protocol, Mode, ModelChoice, MoleculeTable, ProtocolSchedule,
    RunOptions, ScheduleOptions, TargetHamiltonian,
};
use paramsim::device::{
    Branch, DeviceModel, DeviceParams, DriveForm, DriveSpec, ModelKind, StaticControls,
};
use paramsim::dynamics::{
    propagate_lindblad, propagate_schrodinger, run_gate_benchmark, state_fidelity, Coherence,
    GateBenchmark, GateRunConfig, IsingCondition, LindbladSpec, PropagationConfig,
};
use paramsim::operators::{HilbertSpace, ParametricOperator, QuantumState};
use paramsim::swt::{
    alpha_series, first_order_couplings, fourier_component, ising_ratio, resonant_operating_point,
    solve_alpha_ode_with, weak_modulation_alpha, CouplerModel, FrequencySource, OdeOptions,
    SeriesOptions, TimeGrid,
};
use paramsim::C64;

const MHZ: f64 = 2.0 * PI * 1e6;
const US: f64 = 1e-6;
const EPS0: f64 = 2.5 * MHZ;

fn report(id: u32, name: &str, pass: bool, detail: &str) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{verdict} [criterion {id:>2}] {name}: {detail}");
    pass
}

fn reference() -> DeviceParams {
    DeviceParams::two_qubit_reference()
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn schedule(target: &TargetHamiltonian, duration: f64) -> ProtocolSchedule {
    build_schedule(
        target,
        &reference(),
        duration,
        EPS0,
        &ScheduleOptions::default(),
    )
    .unwrap()
}

fn reference_dissipation() -> LindbladSpec {
    LindbladSpec::new()
        .with("q1", 60.0 * US, 40.0 * US)
        .unwrap()
        .with("q2", 60.0 * US, 40.0 * US)
        .unwrap()
        .with("c", 10.0 * US, 1.0 * US)
        .unwrap()
}

fn shipped_table() -> MoleculeTable {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/h2_synthetic.csv");
    MoleculeTable::from_path(path).unwrap()
}

fn large_gap_row() -> TargetHamiltonian {
    TargetHamiltonian::h2(8.0 * MHZ, 0.5 * MHZ, 0.1 * MHZ)
}

/// Worst relative deviation between series components and the ODE spectrum,
/// split into (`k = 0`, `|k| = 1`, `|k| = 2`).
fn ode_series_deviation(coupler: CouplerModel) -> [f64; 3] {
    let p = reference();
    let op = resonant_operating_point(&p, 0.01, 0.01, [0.0, 0.0], FrequencySource::DressedAnalytic)
        .unwrap();
    let m = op.modulation;
    let dt = 2e-12;
    let slow = m.tones.iter().map(|t| t.freq).fold(f64::INFINITY, f64::min);
    let len = (240.0 * 2.0 * PI / slow / dt) as usize;
    let grid = TimeGrid::new(0.0, dt, len + 1);
    let opts = OdeOptions {
        coupler,
        ..Default::default()
    };
    let mut worst = [0.0f64; 3];
    for j in 0..2 {
        for b in Branch::BOTH {
            let y = solve_alpha_ode_with(&p, &m, j, b, &grid, &opts).unwrap();
            let e = alpha_series(&p, &m, j, b, &SeriesOptions::default()).unwrap();
            let rel = |a: C64, b: C64| (a - b).norm() / b.norm();
            worst[0] = worst[0].max(rel(fourier_component(&grid, &y, 0.0), e.static_part));
            for (mi, tone) in m.tones.iter().enumerate() {
                let period = 2.0 * PI / tone.freq;
                let n = ((grid.end() / period).floor() * period / dt).round() as usize;
                let sub = TimeGrid::new(0.0, dt, n + 1);
                for k in [-2i32, -1, 1, 2] {
                    let ode = fourier_component(&sub, &y[..=n], k as f64 * tone.freq);
                    let idx = k.unsigned_abs() as usize;
                    worst[idx] = worst[idx].max(rel(ode, e.harmonic(k, mi)));
                }
            }
        }
    }
    worst
}

#[test]
fn criterion_01_ode_series_equivalence() {
    let p = reference();
    let op = resonant_operating_point(&p, 0.01, 0.01, [0.0, 0.0], FrequencySource::DressedAnalytic)
        .unwrap();
    let lmax = op
        .modulation
        .lambdas(&p)
        .unwrap()
        .into_iter()
        .fold(0.0, f64::max);
    let tol = 0.02f64.max(10.0 * lmax.powi(3));
    let exact = ode_series_deviation(CouplerModel::Exact);
    let linear = ode_series_deviation(CouplerModel::Series(1));
    let pass = exact.iter().all(|&d| d <= tol);
    let detail = format!(
        "λ_max {lmax:.4}, tol {tol:.3}; exact coupler worst rel k=0 {:.2e} |k|=1 {:.2e} |k|=2 {:.2e}; \
         linearised coupler |k|=2 {:.2e}",
        exact[0], exact[1], exact[2], linear[2]
    );
    assert!(
        report(1, "series vs ODE Fourier components", pass, &detail),
        "{detail}"
    );
}

#[test]
fn criterion_02_weak_modulation_cubic_residual() {
    let p = reference();
    let op = resonant_operating_point(&p, 0.01, 0.01, [0.0, 0.0], FrequencySource::DressedAnalytic)
        .unwrap();
    let base = op.modulation;
    let l0 = base.lambdas(&p).unwrap().into_iter().fold(0.0, f64::max);
    let small = SeriesOptions::default().small_denominator;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for lam in [0.0125, 0.025, 0.05, 0.1] {
        let m = base.scaled(lam / l0);
        let mut worst = 0.0f64;
        for j in 0..2 {
            for b in Branch::BOTH {
                let e = alpha_series(&p, &m, j, b, &SeriesOptions::default()).unwrap();
                for mi in 0..m.tones.len() {
                    for k in [-1, 1] {
                        let w = weak_modulation_alpha(&p, &m, j, b, k, mi, small).unwrap();
                        worst = worst.max((w - e.harmonic(k, mi)).norm());
                    }
                }
            }
        }
        xs.push(lam.ln());
        ys.push(worst.ln());
    }
    let s = slope(&xs, &ys);
    let pass = (s - 3.0).abs() <= 0.3;
    let detail = format!("fitted exponent {s:.3} over λ_max ∈ [0.0125, 0.1]");
    assert!(
        report(2, "weak-modulation residual order", pass, &detail),
        "{detail}"
    );
}

fn gate_run(d1: f64, ising: IsingCondition, calibrate: bool) -> GateBenchmark {
    let cfg = GateRunConfig {
        ising,
        calibrate,
        ..Default::default()
    };
    run_gate_benchmark(&reference(), d1, &cfg).unwrap()
}

fn first_order_gate(d1: f64) -> &'static GateBenchmark {
    static RUNS: [OnceLock<GateBenchmark>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let idx = if d1 == 0.01 {
        0
    } else if d1 == 0.02 {
        1
    } else {
        2
    };
    RUNS[idx].get_or_init(|| gate_run(d1, IsingCondition::FirstOrder, false))
}

#[test]
fn criterion_03_gate_coupling_and_infidelity() {
    let mut detail = String::new();
    let mut pass = true;
    for d1 in [0.01, 0.02, 0.03] {
        let b = first_order_gate(d1);
        let dev = (b.omega_x_extracted - b.omega_x_second_order).abs() / b.omega_x_second_order;
        pass &= dev < 0.05;
        detail += &format!(
            "δ1={d1}: Ω_x/2π {:.4} vs {:.4} MHz ({:.1}%); ",
            b.omega_x_extracted / MHZ,
            b.omega_x_second_order / MHZ,
            100.0 * dev
        );
    }
    let g = gate_run(0.033, IsingCondition::SecondOrder, true);
    pass &= g.infidelity < 3e-3;
    detail += &format!(
        "δ1=0.033 (Ω_x/2π {:.3} MHz): 1-max F {:.3e}",
        g.omega_x_extracted / MHZ,
        g.infidelity
    );
    assert!(
        report(3, "gate coupling and XX infidelity", pass, &detail),
        "{detail}"
    );
}

#[test]
fn criterion_04_ising_purity() {
    let p = reference();
    let r = ising_ratio(&p).unwrap();
    let mut algebraic = 0.0f64;
    for d1 in [0.005, 0.01, 0.015, 0.02, 0.03] {
        let (plus, minus) = first_order_couplings(&p, d1, d1 / r).unwrap();
        algebraic = algebraic.max(((plus - minus) / (plus + minus)).abs());
    }
    let b = first_order_gate(0.01);
    let ratio = b.contrast_pair / b.contrast_exchange;
    let pass = algebraic < 1e-12 && ratio < 0.05;
    let detail = format!(
        "max |Ω_y/Ω_x| at first order {algebraic:.1e}; δ1=0.01 contrast |00⟩↔|11⟩ {:.4} vs |01⟩↔|10⟩ {:.4} (ratio {ratio:.3})",
        b.contrast_pair, b.contrast_exchange
    );
    assert!(report(4, "Ising purity", pass, &detail), "{detail}");
}

#[test]
fn criterion_05_estimator_consistency() {
    let space = HilbertSpace::new([("q1", 2), ("q2", 2)]).unwrap();
    let table = shipped_table();
    let mut worst = 0.0f64;
    for row in &table.rows {
        let target = row.target();
        let (e0, psi, _) = target.ground();
        let state = QuantumState::pure(space.clone(), psi).unwrap();
        let e = target.energy(&state).unwrap();
        worst = worst.max((e - e0).abs() / MHZ);
    }
    let pass = worst < 1e-12;
    let detail = format!(
        "{} rows, worst |E - E0| = {worst:.1e} MHz",
        table.rows.len()
    );
    assert!(
        report(5, "energy estimator on exact ground states", pass, &detail),
        "{detail}"
    );
}

#[test]
fn criterion_06_unitary_anneal() {
    let p = reference();
    let t = 3.5 * US;
    let mut detail = String::new();
    let mut pass = true;
    let mut checked = 0;
    let mut spot = None;
    for row in shipped_table().rows {
        let s = schedule(&row.target(), t);
        let gap = gap_series(&s, 401);
        if gap.g_min * t < 50.0 {
            continue;
        }
        checked += 1;
        let r = run_protocol(
            &s,
            &p,
            &Mode::Unitary,
            ModelChoice::Effective,
            &RunOptions::default(),
        )
        .unwrap();
        let ok = r.fidelity > 0.99 && r.delta_e.abs() < 0.02 * gap.g_min;
        pass &= ok;
        if !ok {
            detail += &format!(
                "R={} F={:.4} ΔE/g_min={:.2e}; ",
                row.r_angstrom,
                r.fidelity,
                r.delta_e.abs() / gap.g_min
            );
        }
        if spot.is_none() {
            spot = Some((row.r_angstrom, s, r.fidelity));
        }
    }
    pass &= checked > 0;
    detail += &format!("{checked} rows with g_min·T ≥ 50; ");
    let (r_spot, s, f_eff) = spot.expect("at least one large-gap row");
    let full = run_protocol(
        &s,
        &p,
        &Mode::Unitary,
        ModelChoice::Full,
        &RunOptions::default(),
    )
    .unwrap();
    let df = (full.fidelity - f_eff).abs();
    pass &= df <= 0.02;
    detail += &format!(
        "full model at R={r_spot}: F {:.4} vs effective {f_eff:.4} (|ΔF| {df:.3})",
        full.fidelity
    );
    assert!(
        report(6, "unitary anneal convergence", pass, &detail),
        "{detail}"
    );
}

#[test]
fn criterion_07_adiabatic_scaling() {
    let p = reference();
    let base = schedule(&large_gap_row(), 1.0 * US);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let s = base.with_duration(t * US).unwrap();
        let r = run_protocol(
            &s,
            &p,
            &Mode::Unitary,
            ModelChoice::Effective,
            &RunOptions::default(),
        )
        .unwrap();
        xs.push(t.ln());
        ys.push((1.0 - r.fidelity).ln());
    }
    let s = slope(&xs, &ys);
    let pass = (s + 2.0).abs() <= 0.3;
    let detail = format!("log-log slope of 1-F_T over T ∈ [0.5, 8] µs: {s:.3}");
    assert!(
        report(7, "adiabatic 1/T² scaling", pass, &detail),
        "{detail}"
    );
}

#[test]
fn criterion_08_dissipative_optimum() {
    let p = reference();
    let base = schedule(&large_gap_row(), 1.0 * US);
    let mode = Mode::Lindblad(reference_dissipation());
    let n = 15;
    let durations: Vec<f64> = (0..n)
        .map(|i| 0.4 * (10.0f64 / 0.4).powf(i as f64 / (n - 1) as f64))
        .collect();
    let fid: Vec<f64> = durations
        .iter()
        .map(|&t| {
            let s = base.with_duration(t * US).unwrap();
            run_protocol(
                &s,
                &p,
                &mode,
                ModelChoice::Effective,
                &RunOptions::default(),
            )
            .unwrap()
            .fidelity
        })
        .collect();
    let best = (0..n).max_by(|&a, &b| fid[a].total_cmp(&fid[b])).unwrap();
    let unimodal =
        (0..best).all(|i| fid[i + 1] >= fid[i]) && (best..n - 1).all(|i| fid[i + 1] <= fid[i]);
    let t_opt = durations[best];
    let pass = unimodal && (0.5..=3.0).contains(&t_opt);
    let detail = format!(
        "T_opt {t_opt:.2} µs, F {:.4}, unimodal {unimodal}",
        fid[best]
    );
    assert!(report(8, "dissipative optimum", pass, &detail), "{detail}");
}

fn device_model(levels: usize) -> (DeviceModel<StaticControls>, QuantumState) {
    let p = reference().with_levels(levels);
    let op = resonant_operating_point(&p, 0.02, 0.02, [0.0, 0.0], FrequencySource::DressedAnalytic)
        .unwrap();
    let controls = StaticControls::new(&p, op.modulation, DriveSpec::off(2));
    let h = DeviceModel::new(&p, controls, ModelKind::Transmon, DriveForm::RotatingWave).unwrap();
    let psi = QuantumState::basis(h.space(), &[1, 0, 0]).unwrap();
    (h, psi)
}

#[test]
fn criterion_09_numerical_hygiene() {
    let (h, psi) = device_model(3);
    let t = 20e-9;
    let run = |step: f64| {
        propagate_schrodinger(
            &h,
            &psi,
            &PropagationConfig::new(t, step).without_states(),
            &[],
        )
        .unwrap()
    };
    let coarse = run(4e-12);
    let mid = run(2e-12);
    let fine = run(1e-12);
    let vec = |s: &QuantumState| s.as_vector().unwrap().clone();
    let e1 = (vec(&coarse.final_state) - vec(&mid.final_state)).norm();
    let e2 = (vec(&mid.final_state) - vec(&fine.final_state)).norm();
    let ratio = e1 / e2;
    let norm_drift = fine.diagnostics.norm_drift;

    let (h2, psi2) = device_model(2);
    let cfg = PropagationConfig::new(t, 1e-12).without_states();
    let lind =
        propagate_lindblad(&h2, &psi2.to_mixed(), &reference_dissipation(), &cfg, &[]).unwrap();
    let trace_drift = lind.diagnostics.norm_drift;
    let min_eig = lind.diagnostics.min_eigenvalue;
    let closed =
        propagate_lindblad(&h2, &psi2.to_mixed(), &LindbladSpec::new(), &cfg, &[]).unwrap();
    let pure = propagate_schrodinger(&h2, &psi2, &cfg, &[]).unwrap();
    let f = state_fidelity(&pure.final_state, &closed.final_state).unwrap();

    let pass = norm_drift < 1e-8
        && trace_drift < 1e-8
        && min_eig > -1e-7
        && (ratio - 16.0).abs() <= 6.0
        && f > 1.0 - 1e-7;
    let detail = format!(
        "norm drift {norm_drift:.1e}, trace drift {trace_drift:.1e}, min eig {min_eig:.1e}, \
         step-halving ratio {ratio:.2}, zero-rate fidelity 1-{:.1e}",
        1.0 - f
    );
    assert!(report(9, "numerical hygiene", pass, &detail), "{detail}");
}

#[test]
fn criterion_10_rate_formulas() {
    let r = Coherence::new(60.0 * US, 40.0 * US).rates().unwrap();
    let e1 = (r.relaxation * 60.0 * US - 1.0).abs();
    let e2 = (r.dephasing * 120.0 * US - 1.0).abs();
    let c = Coherence::new(10.0 * US, 1.0 * US).rates().unwrap();
    let e3 = (c.dephasing - (1.0 / (1.0 * US) - 1.0 / (20.0 * US)) / 2.0).abs() / c.dephasing;
    let pass = e1 < 1e-12 && e2 < 1e-12 && e3 < 1e-12;
    let detail = format!(
        "Γ⁻ = {:.4e}/s, Γᶻ = {:.4e}/s for T1=60 µs, T2=40 µs; coupler Γᶻ = {:.4e}/s",
        r.relaxation, r.dephasing, c.dephasing
    );
    assert!(report(10, "Lindblad rates", pass, &detail), "{detail}");
}
