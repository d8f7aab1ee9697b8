use std::f64::consts::PI;

use paramsim::device::{Branch, DeviceParams, FluxModulation, Tone};
use paramsim::swt::{
    alpha_series, build_swt_table, coupling_amplitudes, effective_xy_couplings,
    first_order_couplings, fourier_component, harmonic_balance_alpha, invert_target_couplings,
    ising_ratio, refine_target_couplings, second_order_effective_params,
    second_order_ising_partner, solve_alpha_ode, weak_modulation_alpha, FrequencySource,
    SeriesOptions, TimeGrid, DEFAULT_RESONANCE_TOLERANCE,
};
use paramsim::C64;
use proptest::prelude::*;

const MHZ: f64 = 2.0 * PI * 1e6;

fn reference() -> DeviceParams {
    DeviceParams::two_qubit_reference()
}

fn bare_drives(p: &DeviceParams) -> [f64; 2] {
    [p.qubits[0].freq, p.qubits[1].freq]
}

fn resonant(p: &DeviceParams, d1: f64, d2: f64) -> FluxModulation {
    let w = bare_drives(p);
    FluxModulation::bichromatic(d1, w[0] - w[1], d2, w[0] + w[1])
}

fn first_order(p: &DeviceParams, d1: f64, d2: f64) -> paramsim::swt::EffectiveParams {
    effective_xy_couplings(
        p,
        &resonant(p, d1, d2),
        &bare_drives(p),
        &SeriesOptions::default(),
        DEFAULT_RESONANCE_TOLERANCE,
    )
    .unwrap()
}

/// ODE samples over an integer number of periods of `freq`, with the grid.
fn ode_periods(
    p: &DeviceParams,
    m: &FluxModulation,
    j: usize,
    b: Branch,
    freq: f64,
    periods: f64,
) -> (TimeGrid, Vec<C64>) {
    let dt = 2e-12;
    let n = (periods * 2.0 * PI / freq / dt).round() as usize;
    let grid = TimeGrid::new(0.0, dt, n + 1);
    let y = solve_alpha_ode(p, m, j, b, &grid).unwrap();
    (grid, y)
}

#[test]
fn unmodulated_ode_sits_at_the_static_ratio() {
    let p = reference();
    let grid = TimeGrid::new(0.0, 5e-12, 2001);
    let y = solve_alpha_ode(&p, &FluxModulation::none(), 0, Branch::Minus, &grid).unwrap();
    let expect = p.qubits[0].coupling / p.detuning(0, Branch::Minus).unwrap();
    assert!((expect + 0.0986).abs() < 5e-4, "{expect}");
    assert!(y
        .iter()
        .all(|a| (a.re - expect).abs() < 1e-9 && a.im.abs() < 1e-9));
}

#[test]
fn ode_solution_is_linear_in_coupling() {
    let p = reference();
    let mut q = p.clone();
    q.qubits[1].coupling *= 2.0;
    let m = resonant(&p, 0.02, 0.01);
    let grid = TimeGrid::new(0.0, 2e-12, 5001);
    for b in Branch::BOTH {
        let a = solve_alpha_ode(&p, &m, 1, b, &grid).unwrap();
        let c = solve_alpha_ode(&q, &m, 1, b, &grid).unwrap();
        for (x, y) in a.iter().zip(&c) {
            assert!((y - x * 2.0).norm() <= 1e-12 * x.norm().max(1e-3));
        }
    }
}

#[test]
fn difference_tone_fundamental_matches_ode() {
    let p = reference();
    let m = resonant(&p, 0.01, 0.01);
    let e = alpha_series(&p, &m, 0, Branch::Minus, &SeriesOptions::default()).unwrap();
    let (grid, y) = ode_periods(&p, &m, 0, Branch::Minus, m.tones[0].freq, 200.0);
    let ode = fourier_component(&grid, &y, -m.tones[0].freq);
    let s = e.harmonic(-1, 0);
    assert!((ode - s).norm() / s.norm() < 0.02, "{ode} vs {s}");
}

#[test]
fn weak_closed_form_matches_ode_fundamental() {
    let p = reference();
    let w = p.qubits[0].freq - p.qubits[1].freq;
    let m = FluxModulation::new(vec![Tone {
        amplitude: 0.004,
        freq: w,
        phase: 0.0,
    }]);
    let small = SeriesOptions::default().small_denominator;
    for b in Branch::BOTH {
        let (grid, y) = ode_periods(&p, &m, 0, b, w, 200.0);
        for k in [-1, 1] {
            let ode = fourier_component(&grid, &y, k as f64 * w);
            let weak = weak_modulation_alpha(&p, &m, 0, b, k, 0, small).unwrap();
            assert!(
                (ode - weak).norm() / weak.norm() < 1e-2,
                "{b:?} k={k}: {ode} vs {weak}"
            );
        }
    }
}

#[test]
fn second_order_balance_tracks_coupler_curvature() {
    let p = reference();
    let m = resonant(&p, 0.01, 0.01);
    let (grid, y) = ode_periods(&p, &m, 0, Branch::Minus, m.tones[0].freq, 240.0);
    let hb = harmonic_balance_alpha(&p, &m, 0, Branch::Minus, 2, 4).unwrap();
    let series = alpha_series(&p, &m, 0, Branch::Minus, &SeriesOptions::default()).unwrap();
    let ode = fourier_component(&grid, &y, 2.0 * m.tones[0].freq);
    let err_balance = (hb.single_tone(2, 0) - ode).norm() / ode.norm();
    let err_series = (series.harmonic(2, 0) - ode).norm() / ode.norm();
    assert!(err_balance < 0.05, "balance {err_balance}");
    assert!(err_series > 0.2, "series {err_series}");
}

#[test]
fn closed_form_exchange_amplitude_at_small_modulation() {
    let p = reference();
    let d1 = 0.005;
    let eff = first_order(&p, d1, 0.0);
    let (plus, _) = first_order_couplings(&p, d1, 0.0).unwrap();
    let series = eff.couplings.plus(-1, 0);
    assert!(
        (series.re - plus).abs() < 0.02 * plus.abs(),
        "{series} vs {plus}"
    );
    assert!(series.im.abs() < 1e-9 * plus.abs());
}

#[test]
fn single_tone_limits_have_pure_exchange_or_pair_form() {
    let p = reference();
    let ex = first_order(&p, 0.015, 0.0);
    assert!((ex.omega_x - ex.omega_y).abs() < 1e-9 * ex.omega_x.abs());
    let pr = first_order(&p, 0.0, 0.015);
    assert!((pr.omega_x + pr.omega_y).abs() < 1e-9 * pr.omega_x.abs());
    let none = first_order(&p, 0.0, 0.0);
    assert_eq!((none.omega_x, none.omega_y), (0.0, 0.0));
}

#[test]
fn coupling_amplitudes_obey_index_swap_symmetry() {
    let p = reference();
    let table = build_swt_table(&p, &resonant(&p, 0.012, 0.02), &SeriesOptions::default()).unwrap();
    let a = coupling_amplitudes(&table, 0, 1, &p);
    let b = coupling_amplitudes(&table, 1, 0, &p);
    for m in 0..2 {
        for k in [-2, -1, 1, 2] {
            let x = a.plus(k, m);
            let y = b.plus(-k, m).conj();
            assert!((x - y).norm() <= 1e-12 * x.norm().max(1.0), "k={k} m={m}");
        }
    }
}

#[test]
fn ising_inversion_reproduces_the_ratio() {
    let p = reference();
    let (d1, d2) = invert_target_couplings(0.7 * MHZ, 0.0, &p).unwrap();
    let r = ising_ratio(&p).unwrap();
    assert!((d1 / d2 - r).abs() < 1e-12 * r.abs());
    assert_eq!(invert_target_couplings(0.0, 0.0, &p).unwrap(), (0.0, 0.0));
}

#[test]
fn refined_targets_round_trip() {
    let p = reference();
    for (jx, jy) in [(0.5, 0.1), (1.0, 0.0), (0.3, -0.2)] {
        let r = refine_target_couplings(
            jx * MHZ,
            jy * MHZ,
            &p,
            [0.0, 0.0],
            FrequencySource::DressedAnalytic,
        )
        .unwrap();
        let e = &r.point.effective;
        let tol = 0.02 * (jx * MHZ).abs().max((jy * MHZ).abs());
        assert!((e.omega_x - jx * MHZ).abs() < tol && (e.omega_y - jy * MHZ).abs() < tol);
    }
}

#[test]
fn second_order_reduces_to_first_order_for_weak_modulation() {
    let p = reference();
    let rel = |d: f64| {
        let m = resonant(&p, d, d);
        let a = first_order(&p, d, d);
        let b = second_order_effective_params(&p, &m, &bare_drives(&p)).unwrap();
        (b.omega_x - a.omega_x).abs() / a.omega_x.abs()
    };
    let (small, large) = (rel(0.0025), rel(0.01));
    assert!(small < 0.02, "{small}");
    assert!(large > 2.0 * small, "{small} {large}");
}

#[test]
fn second_order_ising_locus_bends_away_from_first_order_line() {
    let p = reference();
    let r = ising_ratio(&p).unwrap();
    let mut last = 0.0;
    for d1 in [0.01, 0.02, 0.03] {
        let (d2, point) =
            second_order_ising_partner(&p, d1, [0.0, 0.0], FrequencySource::DressedAnalytic)
                .unwrap();
        assert!(point.effective.omega_y.abs() < 1e-3 * point.effective.omega_x.abs());
        let bend = (d2 - d1 / r) / (d1 / r);
        assert!(bend.abs() > last, "{d1}: {bend}");
        last = bend.abs();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ising_ratio_cancels_first_order_y_for_any_device(
        f1 in 4.5f64..6.0, f2 in 4.5f64..6.0, g1 in 50.0f64..150.0, g2 in 50.0f64..150.0, d1 in 0.001f64..0.03,
    ) {
        prop_assume!((f1 - f2).abs() > 0.1);
        let mut p = reference();
        p.qubits[0].freq = 2.0 * PI * f1 * 1e9;
        p.qubits[1].freq = 2.0 * PI * f2 * 1e9;
        p.qubits[0].coupling = 2.0 * PI * g1 * 1e6;
        p.qubits[1].coupling = 2.0 * PI * g2 * 1e6;
        let r = ising_ratio(&p).unwrap();
        let (plus, minus) = first_order_couplings(&p, d1, d1 / r).unwrap();
        prop_assert!(((plus - minus) / (plus + minus)).abs() < 1e-12);
    }

    #[test]
    fn tone_phase_rotates_harmonics(phi0 in -PI..PI, phi1 in -PI..PI) {
        let p = reference();
        let base = resonant(&p, 0.01, 0.015);
        let mut shifted = base.clone();
        shifted.tones[0].phase = phi0;
        shifted.tones[1].phase = phi1;
        let opts = SeriesOptions::default();
        for b in Branch::BOTH {
            let a = alpha_series(&p, &base, 1, b, &opts).unwrap();
            let s = alpha_series(&p, &shifted, 1, b, &opts).unwrap();
            prop_assert!((a.static_part - s.static_part).norm() < 1e-15);
            for (&(k, m), v) in &a.harmonics {
                let phi = [phi0, phi1][m];
                let expect = v * C64::from_polar(1.0, k as f64 * phi);
                prop_assert!((s.harmonics[&(k, m)] - expect).norm() <= 1e-12 * v.norm().max(1e-12));
            }
        }
    }

    #[test]
    fn series_scales_with_coupling(scale in 0.1f64..3.0) {
        let p = reference();
        let mut q = p.clone();
        q.qubits[0].coupling *= scale;
        let m = resonant(&p, 0.01, 0.01);
        let opts = SeriesOptions::default();
        let a = alpha_series(&p, &m, 0, Branch::Plus, &opts).unwrap();
        let b = alpha_series(&q, &m, 0, Branch::Plus, &opts).unwrap();
        for (key, v) in &a.harmonics {
            prop_assert!((b.harmonics[key] - v * scale).norm() <= 1e-12 * v.norm());
        }
    }
}
