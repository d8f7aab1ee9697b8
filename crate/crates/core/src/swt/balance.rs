//! Harmonic balance for the SWT coefficient equation with the coupler
//! frequency expanded to second order, and the self-consistent resonant
//! operating point built on it.

use std::collections::BTreeMap;

use nalgebra::DVector;

use super::{
    assemble, check_resonance, invert_target_couplings, AlphaSource, AnalyticOrder,
    EffectiveParams, Result, SwtError, DEFAULT_RESONANCE_TOLERANCE,
};
use crate::device::{
    coupler_frequency_series, dressed_basis, Branch, DeviceParams, FluxModulation, ModelKind, Tone,
    TWO_PI,
};
use crate::linalg::{cr, CMatrix, C64};

pub const MAX_CONDITION: f64 = 1e12;
pub const DEFAULT_HARMONIC_ORDER: i32 = 4;

/// All integer vectors of length `m` with `Σ|h_i| <= max_l1`, sorted.
pub fn harmonic_set(m: usize, max_l1: i32) -> Vec<Vec<i32>> {
    fn rec(prefix: &mut Vec<i32>, left: i32, m: usize, out: &mut Vec<Vec<i32>>) {
        if prefix.len() == m {
            out.push(prefix.clone());
            return;
        }
        for v in -left..=left {
            prefix.push(v);
            rec(prefix, left - v.abs(), m, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), max_l1, m, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceSolution {
    pub harmonics: Vec<Vec<i32>>,
    pub coefficients: Vec<C64>,
    /// 2-norm condition number of the balance matrix.
    pub condition: f64,
}

impl BalanceSolution {
    pub fn get(&self, orders: &[i32]) -> C64 {
        self.harmonics
            .iter()
            .position(|h| h == orders)
            .map(|i| self.coefficients[i])
            .unwrap_or_default()
    }

    /// Component at `k ω^φ_m`.
    pub fn single_tone(&self, k: i32, m: usize) -> C64 {
        let n = self.harmonics.first().map(|h| h.len()).unwrap_or(0);
        let mut h = vec![0; n];
        if k != 0 {
            if m >= n {
                return C64::default();
            }
            h[m] = k;
        }
        self.get(&h)
    }
}

/// Fourier coefficients of `α_{j,±}` from
/// `(ν_h + ω_j) c_h ± Σ_{h'} V_{h-h'} c_{h'} = g δ_{h0}`,
/// where `V` are the harmonics of the expanded coupler frequency.
pub fn harmonic_balance_alpha(
    params: &DeviceParams,
    modulation: &FluxModulation,
    j: usize,
    branch: Branch,
    order: u8,
    max_l1: i32,
) -> Result<BalanceSolution> {
    let series = coupler_frequency_series(modulation, params, order)?;
    let m = modulation.tones.len();
    let harmonics = harmonic_set(m, max_l1);
    let n = harmonics.len();
    let index: BTreeMap<&[i32], usize> = harmonics
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_slice(), i))
        .collect();
    let s = branch.sign();
    let wq = params.qubits[j].freq;
    let g = params.qubits[j].coupling;
    let mut a = CMatrix::zeros(n, n);
    for (r, h) in harmonics.iter().enumerate() {
        let nu: f64 = h
            .iter()
            .zip(&modulation.tones)
            .map(|(&o, t)| o as f64 * t.freq)
            .sum();
        a[(r, r)] = cr(nu + wq + s * series.static_value);
        for term in &series.terms {
            // row h couples to column h' = h - orders(term)
            let col: Vec<i32> = h.iter().zip(&term.orders).map(|(a, b)| a - b).collect();
            if let Some(&c) = index.get(col.as_slice()) {
                a[(r, c)] += term.amplitude * s;
            }
        }
    }
    let mut rhs = DVector::<C64>::zeros(n);
    rhs[index[vec![0; m].as_slice()]] = cr(g);
    let sv = a.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(condition < MAX_CONDITION) {
        return Err(SwtError::IllConditioned(condition));
    }
    let x = a
        .lu()
        .solve(&rhs)
        .ok_or(SwtError::IllConditioned(f64::INFINITY))?;
    Ok(BalanceSolution {
        harmonics,
        coefficients: x.iter().copied().collect(),
        condition,
    })
}

/// Balance solutions for every qubit and branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceTable {
    pub solutions: BTreeMap<(usize, Branch), BalanceSolution>,
    pub num_tones: usize,
    pub k_max: i32,
}

impl AlphaSource for BalanceTable {
    fn alpha(&self, j: usize, branch: Branch, k: i32, m: usize) -> C64 {
        self.solutions[&(j, branch)].single_tone(k, m)
    }
    fn num_tones(&self) -> usize {
        self.num_tones
    }
    fn k_max(&self) -> i32 {
        self.k_max
    }
}

impl BalanceTable {
    pub fn build(params: &DeviceParams, modulation: &FluxModulation, order: u8) -> Result<Self> {
        modulation.validate(params)?;
        let mut solutions = BTreeMap::new();
        for j in 0..params.num_qubits() {
            for b in Branch::BOTH {
                solutions.insert(
                    (j, b),
                    harmonic_balance_alpha(
                        params,
                        modulation,
                        j,
                        b,
                        order,
                        DEFAULT_HARMONIC_ORDER,
                    )?,
                );
            }
        }
        Ok(Self {
            solutions,
            num_tones: modulation.tones.len(),
            k_max: 3,
        })
    }

    pub fn omega_bar(&self, params: &DeviceParams) -> Vec<f64> {
        (0..params.num_qubits())
            .map(|j| {
                params.qubits[j].freq
                    + params.qubits[j].coupling
                        * Branch::BOTH
                            .iter()
                            .map(|&b| self.solutions[&(j, b)].single_tone(0, 0).re)
                            .sum::<f64>()
            })
            .collect()
    }

    pub fn max_condition(&self) -> f64 {
        self.solutions
            .values()
            .map(|s| s.condition)
            .fold(0.0, f64::max)
    }
}

/// Second-order `Ω_x`, `Ω_y`, `ω̄_j`, `ε_j` by harmonic balance.
pub fn second_order_effective_params(
    params: &DeviceParams,
    modulation: &FluxModulation,
    drive_freqs: &[f64],
) -> Result<EffectiveParams> {
    if params.num_qubits() != 2 {
        return Err(SwtError::Config("exactly two qubits are required".into()));
    }
    check_resonance(modulation, drive_freqs, DEFAULT_RESONANCE_TOLERANCE)?;
    let table = BalanceTable::build(params, modulation, 2)?;
    let omega_bar = table.omega_bar(params);
    Ok(assemble(
        &table,
        params,
        omega_bar,
        drive_freqs,
        AnalyticOrder::Second,
    ))
}

/// Where the effective qubit frequencies come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrequencySource {
    /// Second-order perturbation theory.
    #[default]
    Analytic,
    /// Exact static dressed frequencies of the truncated transmon model plus
    /// the analytic modulation-induced shift.
    DressedAnalytic,
}

fn omega_bar_for(
    params: &DeviceParams,
    modulation: &FluxModulation,
    source: FrequencySource,
    static_dressed: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let analytic = BalanceTable::build(params, modulation, 2)?.omega_bar(params);
    match source {
        FrequencySource::Analytic => Ok(analytic),
        FrequencySource::DressedAnalytic => {
            let bare = BalanceTable::build(params, &FluxModulation::none(), 2)?.omega_bar(params);
            let dressed = static_dressed.expect("dressed frequencies supplied");
            Ok((0..bare.len())
                .map(|j| dressed[j] + analytic[j] - bare[j])
                .collect())
        }
    }
}

/// Constant correction added to the analytic `ω̄` by a frequency source.
pub fn static_frequency_offset(params: &DeviceParams, source: FrequencySource) -> Result<Vec<f64>> {
    match source {
        FrequencySource::Analytic => Ok(vec![0.0; params.num_qubits()]),
        FrequencySource::DressedAnalytic => {
            let dressed = dressed_basis(params, ModelKind::Transmon)?.qubit_frequencies();
            let bare = BalanceTable::build(params, &FluxModulation::none(), 2)?.omega_bar(params);
            Ok(dressed.iter().zip(&bare).map(|(d, b)| d - b).collect())
        }
    }
}

/// Resonant bichromatic working point for given amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub modulation: FluxModulation,
    /// Effective qubit frequencies the tones and drives are locked to.
    pub omega_bar: Vec<f64>,
    pub effective: EffectiveParams,
    pub iterations: usize,
}

/// Locks `ω^φ_1 = ω̄_1 - ω̄_2` and `ω^φ_2 = ω̄_1 + ω̄_2` self-consistently,
/// with `ω̄` depending on the modulation itself.
pub fn resonant_operating_point(
    params: &DeviceParams,
    d1: f64,
    d2: f64,
    phases: [f64; 2],
    source: FrequencySource,
) -> Result<OperatingPoint> {
    let dressed = match source {
        FrequencySource::DressedAnalytic => {
            Some(dressed_basis(params, ModelKind::Transmon)?.qubit_frequencies())
        }
        FrequencySource::Analytic => None,
    };
    let make = |w: &[f64]| {
        FluxModulation::new(vec![
            Tone {
                amplitude: d1,
                freq: w[0] - w[1],
                phase: phases[0],
            },
            Tone {
                amplitude: d2,
                freq: w[0] + w[1],
                phase: phases[1],
            },
        ])
    };
    let mut w = omega_bar_for(params, &FluxModulation::none(), source, dressed.as_deref())?;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let next = omega_bar_for(params, &make(&w), source, dressed.as_deref())?;
        let change = next
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        w = next;
        if change < TWO_PI * 1e-3 {
            break;
        }
        if iterations > 50 {
            return Err(SwtError::NoConvergence(format!(
                "resonant frequencies still moving by {change:.3e} rad/s"
            )));
        }
    }
    let modulation = make(&w);
    let mut effective = second_order_effective_params(params, &modulation, &w)?;
    effective.omega_bar = w.clone();
    effective.detunings = vec![0.0; w.len()];
    Ok(OperatingPoint {
        modulation,
        omega_bar: w,
        effective,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedTargets {
    pub d1: f64,
    pub d2: f64,
    /// First-order starting values.
    pub first_order: (f64, f64),
    pub point: OperatingPoint,
    pub iterations: usize,
    /// Max |Ω - J| at the solution, rad/s.
    pub residual: f64,
}

/// Newton refinement of the first-order inversion against the second-order,
/// self-consistently resonant map `(δ1, δ2) -> (Ω_x, Ω_y)`.
pub fn refine_target_couplings(
    jx: f64,
    jy: f64,
    params: &DeviceParams,
    phases: [f64; 2],
    source: FrequencySource,
) -> Result<RefinedTargets> {
    let first = invert_target_couplings(jx, jy, params)?;
    let eval = |d: (f64, f64)| -> Result<(OperatingPoint, [f64; 2])> {
        let excursion = params.flux_bias.abs() + d.0.abs() + d.1.abs();
        if excursion >= 0.5 {
            return Err(SwtError::NonPhysical(excursion));
        }
        let p = resonant_operating_point(params, d.0, d.1, phases, source)?;
        let f = [p.effective.omega_x - jx, p.effective.omega_y - jy];
        Ok((p, f))
    };
    let scale = jx.abs().max(jy.abs());
    let tol = 1e-7 * scale + TWO_PI * 1e-3;
    let mut d = first;
    let (mut point, mut f) = eval(d)?;
    let mut iterations = 0;
    while f[0].abs().max(f[1].abs()) > tol {
        iterations += 1;
        if iterations > 20 {
            return Err(SwtError::NoConvergence(format!(
                "target inversion residual {:.3e} rad/s",
                f[0].abs().max(f[1].abs())
            )));
        }
        let h1 = 1e-4 * d.0.abs().max(1e-3);
        let h2 = 1e-4 * d.1.abs().max(1e-3);
        let (_, fa) = eval((d.0 + h1, d.1))?;
        let (_, fb) = eval((d.0, d.1 + h2))?;
        let jac = [
            [(fa[0] - f[0]) / h1, (fb[0] - f[0]) / h2],
            [(fa[1] - f[1]) / h1, (fb[1] - f[1]) / h2],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-300 {
            return Err(SwtError::NoConvergence("singular Jacobian".into()));
        }
        let s1 = (jac[1][1] * f[0] - jac[0][1] * f[1]) / det;
        let s2 = (-jac[1][0] * f[0] + jac[0][0] * f[1]) / det;
        d = (d.0 - s1, d.1 - s2);
        let r = eval(d)?;
        point = r.0;
        f = r.1;
    }
    Ok(RefinedTargets {
        d1: d.0,
        d2: d.1,
        first_order: first,
        point,
        iterations,
        residual: f[0].abs().max(f[1].abs()),
    })
}

/// `δ2` cancelling the second-order `Ω_y` at fixed `δ1` (secant iteration
/// from the first-order Ising ratio).
pub fn second_order_ising_partner(
    params: &DeviceParams,
    d1: f64,
    phases: [f64; 2],
    source: FrequencySource,
) -> Result<(f64, OperatingPoint)> {
    let eval = |d2: f64| -> Result<(OperatingPoint, f64)> {
        let p = resonant_operating_point(params, d1, d2, phases, source)?;
        let oy = p.effective.omega_y;
        Ok((p, oy))
    };
    let mut a = d1 / super::ising_ratio(params)?;
    let (mut point, mut fa) = eval(a)?;
    let tol = 1e-7 * point.effective.omega_x.abs() + TWO_PI * 1e-4;
    let mut b = a * (1.0 + 1e-3);
    for _ in 0..30 {
        if fa.abs() <= tol {
            return Ok((a, point));
        }
        let (pb, fb) = eval(b)?;
        if fb.abs() <= tol {
            return Ok((b, pb));
        }
        if fb == fa {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        a = b;
        fa = fb;
        point = pb;
        b = c;
    }
    Err(SwtError::NoConvergence(format!(
        "second-order Ω_y still {fa:.3e} rad/s"
    )))
}
