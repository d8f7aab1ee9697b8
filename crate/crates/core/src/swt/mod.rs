//! Schrieffer–Wolff coefficients `α_{j,±}` of the dispersive transformation
//! and the effective two-qubit parameters built from them.

mod balance;
mod ode;

pub use balance::{
    harmonic_balance_alpha, harmonic_set, refine_target_couplings, resonant_operating_point,
    second_order_effective_params, second_order_ising_partner, static_frequency_offset,
    BalanceSolution, BalanceTable, FrequencySource, OperatingPoint, RefinedTargets,
};
pub use ode::{
    flat_top_window, fourier_component, solve_alpha_ode, solve_alpha_ode_with, CouplerModel,
    OdeOptions, TimeGrid,
};

use std::collections::BTreeMap;

use crate::device::{Branch, DeviceError, DeviceParams, FluxModulation, TWO_PI};
use crate::linalg::{cr, C64};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwtError {
    #[error("small denominator {value:.4e} rad/s at harmonic (q, p) = ({q}, {p})")]
    SmallDenominator { q: i32, p: i32, value: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("integrator failure: {0}")]
    IntegratorFailure(String),
    #[error("harmonic balance system is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("non-physical modulation amplitude: |θ| + Σ|δ| = {0:.4} >= 0.5")]
    NonPhysical(f64),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

pub type Result<T> = std::result::Result<T, SwtError>;

/// Options for the Bessel-series evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    pub k_max: i32,
    pub bessel_order: i32,
    /// Denominators below this magnitude raise [`SwtError::SmallDenominator`].
    pub small_denominator: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            k_max: 3,
            bessel_order: 6,
            small_denominator: TWO_PI * 10e6,
        }
    }
}

/// Bessel function of the first kind for any integer order.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    if n >= 0 {
        libm::jn(n, x)
    } else if n % 2 == 0 {
        libm::jn(-n, x)
    } else {
        -libm::jn(-n, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwtEntry {
    pub qubit: usize,
    pub branch: Branch,
    /// `Δ^θ_{j,±}`.
    pub detuning: f64,
    /// `ᾱ_{j,±}(0)`.
    pub static_part: C64,
    /// `ᾱ_{j,±}(k, m)` keyed by `(k, m)` with `k ≠ 0`.
    pub harmonics: BTreeMap<(i32, usize), C64>,
    /// Bound on the neglected Bessel tail.
    pub truncation_error: f64,
}

impl SwtEntry {
    pub fn harmonic(&self, k: i32, m: usize) -> C64 {
        if k == 0 {
            return self.static_part;
        }
        self.harmonics
            .get(&(k, m))
            .copied()
            .unwrap_or(C64::new(0.0, 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwtTable {
    pub entries: Vec<SwtEntry>,
    pub lambdas: Vec<f64>,
    pub tone_freqs: Vec<f64>,
    pub k_max: i32,
    pub bessel_order: i32,
    pub warnings: Vec<String>,
}

impl SwtTable {
    pub fn entry(&self, j: usize, branch: Branch) -> &SwtEntry {
        self.entries
            .iter()
            .find(|e| e.qubit == j && e.branch == branch)
            .expect("table holds every qubit and branch")
    }

    pub fn num_tones(&self) -> usize {
        self.tone_freqs.len()
    }
}

fn lambdas_and_freqs(
    params: &DeviceParams,
    modulation: &FluxModulation,
) -> Result<(Vec<f64>, Vec<f64>)> {
    modulation.validate(params)?;
    if modulation.tones.len() > 2 {
        return Err(SwtError::InvalidInput(format!(
            "the Bessel closed form supports at most two tones, got {}",
            modulation.tones.len()
        )));
    }
    let lambdas = modulation.lambdas(params)?;
    let freqs = modulation.tones.iter().map(|t| t.freq).collect();
    Ok((lambdas, freqs))
}

/// Bessel-series Fourier components of `α_{j,±}` for up to two tones.
pub fn alpha_series(
    params: &DeviceParams,
    modulation: &FluxModulation,
    j: usize,
    branch: Branch,
    opts: &SeriesOptions,
) -> Result<SwtEntry> {
    if j >= params.num_qubits() {
        return Err(SwtError::InvalidInput(format!("no qubit {j}")));
    }
    let (lam, freq) = lambdas_and_freqs(params, modulation)?;
    let g = params.qubits[j].coupling;
    let delta = params.detuning(j, branch)?;
    let s = branch.sign();
    let order = opts.bessel_order;
    // pad to two tones; an absent tone has λ = 0 and contributes only p = 0
    let lam2 = [
        lam.first().copied().unwrap_or(0.0),
        lam.get(1).copied().unwrap_or(0.0),
    ];
    let w2 = [
        freq.first().copied().unwrap_or(0.0),
        freq.get(1).copied().unwrap_or(0.0),
    ];
    let range = |m: usize| {
        if lam2[m] == 0.0 {
            0..=0
        } else {
            -order..=order
        }
    };

    let mut min_den = f64::INFINITY;
    for q in range(0) {
        for p in range(1) {
            let den = q as f64 * w2[0] + p as f64 * w2[1] + delta;
            if den.abs() < opts.small_denominator {
                return Err(SwtError::SmallDenominator { q, p, value: den });
            }
            min_den = min_den.min(den.abs());
        }
    }

    let mut static_sum = 0.0;
    for q in range(0) {
        let jq = bessel_j(q, s * lam2[0]);
        for p in range(1) {
            let jp = bessel_j(p, s * lam2[1]);
            static_sum += jq * jq * jp * jp / (q as f64 * w2[0] + p as f64 * w2[1] + delta);
        }
    }

    let mut harmonics = BTreeMap::new();
    for m in 0..modulation.tones.len() {
        let n = 1 - m;
        for k in (-opts.k_max..=opts.k_max).filter(|&k| k != 0) {
            let mut sum = 0.0;
            for q in -order..=order {
                let a = bessel_j(k - q, -s * lam2[m]) * bessel_j(q, s * lam2[m]);
                if a == 0.0 {
                    continue;
                }
                for p in range(n) {
                    let jp = bessel_j(p, s * lam2[n]);
                    sum += a * jp * jp / (q as f64 * w2[m] + p as f64 * w2[n] + delta);
                }
            }
            let phase = C64::from_polar(1.0, k as f64 * modulation.tones[m].phase);
            harmonics.insert((k, m), phase * g * sum);
        }
    }

    let lmax = lam2[0].abs().max(lam2[1].abs());
    let tail = (lmax / 2.0).powi(order + 1) / factorial(order + 1);
    Ok(SwtEntry {
        qubit: j,
        branch,
        detuning: delta,
        static_part: cr(g * static_sum),
        harmonics,
        truncation_error: g * tail / min_den,
    })
}

fn factorial(n: i32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Series entries for every qubit and branch.
pub fn build_swt_table(
    params: &DeviceParams,
    modulation: &FluxModulation,
    opts: &SeriesOptions,
) -> Result<SwtTable> {
    let (lambdas, tone_freqs) = lambdas_and_freqs(params, modulation)?;
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for j in 0..params.num_qubits() {
        for b in Branch::BOTH {
            let e = alpha_series(params, modulation, j, b, opts)?;
            let worst = e
                .harmonics
                .values()
                .chain([&e.static_part])
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            if worst >= 1.0 {
                let w = format!(
                    "|ᾱ| = {worst:.3} >= 1 for qubit {} ({b:?}): not perturbative",
                    j + 1
                );
                log::warn!("{w}");
                warnings.push(w);
            }
            entries.push(e);
        }
    }
    Ok(SwtTable {
        entries,
        lambdas,
        tone_freqs,
        k_max: opts.k_max,
        bessel_order: opts.bessel_order,
        warnings,
    })
}

pub const WEAK_LAMBDA_LIMIT: f64 = 0.3;

/// Leading-order closed forms of `ᾱ_{j,±}` for small `λ`.
///
/// `k = 0` gives the static part, `|k| = 1` the fundamental of tone `m`.
pub fn weak_modulation_alpha(
    params: &DeviceParams,
    modulation: &FluxModulation,
    j: usize,
    branch: Branch,
    k: i32,
    m: usize,
    small_denominator: f64,
) -> Result<C64> {
    modulation.validate(params)?;
    let lam = modulation.lambdas(params)?;
    if lam.iter().any(|l| l.abs() > WEAK_LAMBDA_LIMIT) {
        log::warn!("weak-modulation form used beyond λ = {WEAK_LAMBDA_LIMIT}");
    }
    let g = params.qubits[j].coupling;
    let d = params.detuning(j, branch)?;
    match k {
        0 => {
            let mut a = g / d;
            for (l, tone) in lam.iter().zip(&modulation.tones) {
                let w = tone.freq;
                let res = d * d - w * w;
                if (d.abs() - w.abs()).abs() < small_denominator {
                    return Err(SwtError::SmallDenominator {
                        q: 1,
                        p: 0,
                        value: d.abs() - w.abs(),
                    });
                }
                a += 0.5 * g * l * l * w * w / (d * res);
            }
            Ok(cr(a))
        }
        1 | -1 => {
            let tone = modulation
                .tones
                .get(m)
                .ok_or_else(|| SwtError::InvalidInput(format!("no tone {m}")))?;
            let kf = k as f64;
            let den = kf * tone.freq + d;
            if den.abs() < small_denominator {
                return Err(SwtError::SmallDenominator {
                    q: k,
                    p: 0,
                    value: den,
                });
            }
            let l = lam[m];
            let v = branch.sign() * 0.5 * g * kf * (l / den - l / d);
            Ok(C64::from_polar(1.0, kf * tone.phase) * v)
        }
        _ => Err(SwtError::InvalidInput(format!(
            "weak-modulation closed form exists only for |k| <= 1, got {k}"
        ))),
    }
}

/// `ω̄_j = ω_j + g_j Σ_± Re ᾱ_{j,±}(0)`.
pub fn dispersive_shifts(table: &SwtTable, params: &DeviceParams) -> Vec<f64> {
    (0..params.num_qubits())
        .map(|j| {
            params.qubits[j].freq
                + params.qubits[j].coupling
                    * Branch::BOTH
                        .iter()
                        .map(|&b| table.entry(j, b).static_part.re)
                        .sum::<f64>()
        })
        .collect()
}

/// Time-resolved `ω̄_j(t)` from sampled `α_{j,-}(t)` and `α_{j,+}(t)`.
pub fn dispersive_shift_series(
    params: &DeviceParams,
    j: usize,
    alpha_minus: &[C64],
    alpha_plus: &[C64],
) -> Vec<f64> {
    let q = params.qubits[j];
    alpha_minus
        .iter()
        .zip(alpha_plus)
        .map(|(a, b)| q.freq + q.coupling * (a.re + b.re))
        .collect()
}

/// `Ω̄^±_{ij}(k, m)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CouplingTable {
    pub plus: BTreeMap<(i32, usize), C64>,
    pub minus: BTreeMap<(i32, usize), C64>,
}

impl CouplingTable {
    pub fn plus(&self, k: i32, m: usize) -> C64 {
        self.plus.get(&(k, m)).copied().unwrap_or_default()
    }
    pub fn minus(&self, k: i32, m: usize) -> C64 {
        self.minus.get(&(k, m)).copied().unwrap_or_default()
    }
}

/// Anything that yields `ᾱ_{j,±}(k, m)`.
pub trait AlphaSource {
    fn alpha(&self, j: usize, branch: Branch, k: i32, m: usize) -> C64;
    fn num_tones(&self) -> usize;
    fn k_max(&self) -> i32;
}

impl AlphaSource for SwtTable {
    fn alpha(&self, j: usize, branch: Branch, k: i32, m: usize) -> C64 {
        self.entry(j, branch).harmonic(k, m)
    }
    fn num_tones(&self) -> usize {
        self.tone_freqs.len()
    }
    fn k_max(&self) -> i32 {
        self.k_max
    }
}

/// Coupling amplitudes between qubits `i` and `j`:
///
/// `Ω̄⁺(k) = [g_i ᾱ*_{j,-}(-k) + g_j ᾱ_{i,-}(k) - g_i ᾱ*_{j,+}(-k) - g_j ᾱ_{i,+}(k)]/2`,
/// `Ω̄⁻(k) = [g_i ᾱ_{j,-}(k) + g_j ᾱ_{i,-}(k) - g_i ᾱ_{j,+}(k) - g_j ᾱ_{i,+}(k)]/2`.
pub fn coupling_amplitudes<A: AlphaSource>(
    source: &A,
    i: usize,
    j: usize,
    params: &DeviceParams,
) -> CouplingTable {
    let gi = params.qubits[i].coupling;
    let gj = params.qubits[j].coupling;
    let (mi, pi) = (Branch::Minus, Branch::Plus);
    let mut out = CouplingTable::default();
    for m in 0..source.num_tones() {
        for k in (-source.k_max()..=source.k_max()).filter(|&k| k != 0) {
            let plus = (source.alpha(j, mi, -k, m).conj() * gi + source.alpha(i, mi, k, m) * gj
                - source.alpha(j, pi, -k, m).conj() * gi
                - source.alpha(i, pi, k, m) * gj)
                * 0.5;
            let minus = (source.alpha(j, mi, k, m) * gi + source.alpha(i, mi, k, m) * gj
                - source.alpha(j, pi, k, m) * gi
                - source.alpha(i, pi, k, m) * gj)
                * 0.5;
            out.plus.insert((k, m), plus);
            out.minus.insert((k, m), minus);
        }
    }
    out
}

/// Which analytic route produced a set of effective parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyticOrder {
    /// Bessel series with the coupler frequency linear in δ.
    First,
    /// Harmonic balance with the coupler frequency to second order in δ.
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveParams {
    pub omega_bar: Vec<f64>,
    pub couplings: CouplingTable,
    pub omega_x: f64,
    pub omega_y: f64,
    /// Imaginary parts of Ω_x and Ω_y; zero for phase-free tones.
    pub omega_imag: [f64; 2],
    /// `ε_j = ω^d_j - ω̄_j`.
    pub detunings: Vec<f64>,
    pub order: AnalyticOrder,
}

pub const DEFAULT_RESONANCE_TOLERANCE: f64 = TWO_PI * 10e3;

pub(crate) fn check_resonance(
    modulation: &FluxModulation,
    drive_freqs: &[f64],
    tol: f64,
) -> Result<()> {
    if drive_freqs.len() != 2 || modulation.tones.len() != 2 {
        return Err(SwtError::Config(
            "effective XY couplings need two qubits, two drives and two tones".into(),
        ));
    }
    let diff = drive_freqs[0] - drive_freqs[1];
    let sum = drive_freqs[0] + drive_freqs[1];
    let e1 = modulation.tones[0].freq - diff;
    let e2 = modulation.tones[1].freq - sum;
    if e1.abs() > tol || e2.abs() > tol {
        return Err(SwtError::Config(format!(
            "tones are not resonant with the drives: mismatch {:.3e} and {:.3e} rad/s",
            e1, e2
        )));
    }
    Ok(())
}

pub(crate) fn assemble<A: AlphaSource>(
    source: &A,
    params: &DeviceParams,
    omega_bar: Vec<f64>,
    drive_freqs: &[f64],
    order: AnalyticOrder,
) -> EffectiveParams {
    let couplings = coupling_amplitudes(source, 0, 1, params);
    let p = couplings.plus(-1, 0);
    let m = couplings.minus(-1, 1);
    let x = p + m;
    let y = p - m;
    let detunings = drive_freqs
        .iter()
        .zip(&omega_bar)
        .map(|(d, w)| d - w)
        .collect();
    EffectiveParams {
        omega_bar,
        couplings,
        omega_x: x.re,
        omega_y: y.re,
        omega_imag: [x.im, y.im],
        detunings,
        order,
    }
}

/// First-order (Bessel-series) `Ω_x`, `Ω_y`, `ω̄_j` and `ε_j`.
pub fn effective_xy_couplings(
    params: &DeviceParams,
    modulation: &FluxModulation,
    drive_freqs: &[f64],
    opts: &SeriesOptions,
    resonance_tol: f64,
) -> Result<EffectiveParams> {
    if params.num_qubits() != 2 {
        return Err(SwtError::Config("exactly two qubits are required".into()));
    }
    check_resonance(modulation, drive_freqs, resonance_tol)?;
    let table = build_swt_table(params, modulation, opts)?;
    let omega_bar = dispersive_shifts(&table, params);
    Ok(assemble(
        &table,
        params,
        omega_bar,
        drive_freqs,
        AnalyticOrder::First,
    ))
}

/// Leading-order `Ω̄⁺(-1,1)` and `Ω̄⁻(-1,2)` in closed form.
pub fn first_order_couplings(params: &DeviceParams, d1: f64, d2: f64) -> Result<(f64, f64)> {
    let (a, b, c, d) = detunings4(params)?;
    let k = params.qubits[0].coupling * params.qubits[1].coupling / 2.0 * params.coupler_slope()?;
    let plus = d1 * k * (1.0 / (a * c) + 1.0 / (b * d));
    let minus = -d2 * k * (1.0 / (a * d) + 1.0 / (b * c));
    Ok((plus, minus))
}

/// `(Δ1-, Δ1+, Δ2-, Δ2+)` at the bias point.
fn detunings4(params: &DeviceParams) -> Result<(f64, f64, f64, f64)> {
    if params.num_qubits() != 2 {
        return Err(SwtError::Config("exactly two qubits are required".into()));
    }
    Ok((
        params.detuning(0, Branch::Minus)?,
        params.detuning(0, Branch::Plus)?,
        params.detuning(1, Branch::Minus)?,
        params.detuning(1, Branch::Plus)?,
    ))
}

/// `δ1/δ2` that cancels `Ω_y` at first order.
pub fn ising_ratio(params: &DeviceParams) -> Result<f64> {
    let (m1, p1, m2, p2) = detunings4(params)?;
    let den = m1 * m2 + p1 * p2;
    if den.abs() < 1e-300 * (m1 * m2).abs().max(1.0) || den == 0.0 {
        return Err(SwtError::InvalidInput(
            "vanishing denominator in the Ising ratio".into(),
        ));
    }
    Ok(-(m1 * p2 + p1 * m2) / den)
}

/// First-order modulation amplitudes realising target `(J_x, J_y)`.
pub fn invert_target_couplings(jx: f64, jy: f64, params: &DeviceParams) -> Result<(f64, f64)> {
    let (m1, p1, m2, p2) = detunings4(params)?;
    let k = params.qubits[0].coupling * params.qubits[1].coupling * params.coupler_slope()?;
    let prod = m1 * p1 * m2 * p2;
    let d1 = (jx + jy) / k * prod / (m1 * m2 + p1 * p2);
    let d2 = -(jx - jy) / k * prod / (m1 * p2 + p1 * m2);
    let excursion = params.flux_bias.abs() + d1.abs() + d2.abs();
    if excursion >= 0.5 {
        return Err(SwtError::NonPhysical(excursion));
    }
    Ok((d1, d2))
}

/// Validity diagnostic `|g1 g2 / Δ| ≪ ω1 - ω2`, using the smallest detuning.
pub fn rotating_wave_margin(params: &DeviceParams) -> Result<f64> {
    let (m1, p1, m2, p2) = detunings4(params)?;
    let dmin = [m1, p1, m2, p2]
        .iter()
        .map(|d| d.abs())
        .fold(f64::INFINITY, f64::min);
    let g = params.qubits[0].coupling * params.qubits[1].coupling / dmin;
    Ok(g / (params.qubits[0].freq - params.qubits[1].freq).abs())
}
