//! Circuit parameters, flux waveform and the lab-frame Hamiltonians.
//!
//! All frequencies are angular (rad/s), times in seconds and flux in units
//! of the flux quantum.

use std::f64::consts::PI;

use crate::linalg::{self, cr, CMatrix, C64};
use crate::operators::{
    embed, embed_many, local, HilbertSpace, Operator, OperatorError, ParametricOperator,
};
use thiserror::Error;

pub const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("flux {0} is outside the SQUID arc |Φ| <= 0.5")]
    FluxOutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported expansion order {0}")]
    UnsupportedOrder(u8),
    #[error("space does not match device: {0}")]
    SpaceMismatch(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

pub type Result<T> = std::result::Result<T, DeviceError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitParams {
    pub freq: f64,
    pub anharm: f64,
    pub coupling: f64,
    pub levels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplerParams {
    pub freq0: f64,
    pub anharm: f64,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceParams {
    pub qubits: Vec<QubitParams>,
    pub coupler: CouplerParams,
    /// dc flux bias θ.
    pub flux_bias: f64,
}

/// Sign of the qubit-coupler detuning `Δ_{j,±} = ω_j ± ω_c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    Minus,
    Plus,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Minus, Branch::Plus];

    pub fn sign(self) -> f64 {
        match self {
            Branch::Minus => -1.0,
            Branch::Plus => 1.0,
        }
    }
}

pub const DEFAULT_DISPERSIVE_RATIO: f64 = 3.0;

impl DeviceParams {
    /// Two fixed-frequency transmons on a flux-tunable bus at θ = -0.1,
    /// three levels per transmon.
    pub fn two_qubit_reference() -> Self {
        let q = |ghz: f64| QubitParams {
            freq: TWO_PI * ghz * 1e9,
            anharm: -TWO_PI * 250e6,
            coupling: TWO_PI * 130e6,
            levels: 3,
        };
        Self {
            qubits: vec![q(5.8), q(5.0)],
            coupler: CouplerParams {
                freq0: TWO_PI * 7.3e9,
                anharm: -TWO_PI * 250e6,
                levels: 3,
            },
            flux_bias: -0.1,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.qubits.len()
    }

    /// Copy with every transmon truncated to `d` levels.
    pub fn with_levels(&self, d: usize) -> Self {
        let mut p = self.clone();
        for q in &mut p.qubits {
            q.levels = d;
        }
        p.coupler.levels = d;
        p
    }

    /// Hard checks; returns soft diagnostics as warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.validate_with(DEFAULT_DISPERSIVE_RATIO)
    }

    pub fn validate_with(&self, dispersive_ratio: f64) -> Result<Vec<String>> {
        let bad = |m: String| Err(DeviceError::InvalidParameter(m));
        if self.qubits.is_empty() {
            return bad("at least one qubit is required".into());
        }
        for (j, q) in self.qubits.iter().enumerate() {
            if !(q.freq > 0.0 && q.freq.is_finite()) {
                return bad(format!("qubit {} frequency must be positive", j + 1));
            }
            if !(q.coupling >= 0.0 && q.coupling.is_finite()) {
                return bad(format!("qubit {} coupling must be non-negative", j + 1));
            }
            if q.levels < 2 {
                return bad(format!("qubit {} needs at least 2 levels", j + 1));
            }
            if !q.anharm.is_finite() {
                return bad(format!("qubit {} anharmonicity must be finite", j + 1));
            }
        }
        if !(self.coupler.freq0 > 0.0 && self.coupler.freq0.is_finite()) {
            return bad("coupler frequency must be positive".into());
        }
        if self.coupler.levels < 2 {
            return bad("coupler needs at least 2 levels".into());
        }
        if !(self.flux_bias.abs() < 0.5) {
            return Err(DeviceError::FluxOutOfRange(self.flux_bias));
        }
        let mut warnings = Vec::new();
        for j in 0..self.qubits.len() {
            let ratio = self.detuning(j, Branch::Minus)?.abs() / self.qubits[j].coupling;
            if ratio <= dispersive_ratio {
                let w = format!(
                    "qubit {} is not dispersive: |Δ-|/g = {ratio:.2} <= {dispersive_ratio}",
                    j + 1
                );
                log::warn!("{w}");
                warnings.push(w);
            }
        }
        Ok(warnings)
    }

    pub fn coupler_freq_at_bias(&self) -> Result<f64> {
        coupler_frequency(self.flux_bias, self)
    }

    /// `Δ^θ_{j,±} = ω_j ± ω_c^θ`.
    pub fn detuning(&self, j: usize, branch: Branch) -> Result<f64> {
        Ok(self.qubits[j].freq + branch.sign() * self.coupler_freq_at_bias()?)
    }

    pub fn coupler_slope(&self) -> Result<f64> {
        coupler_slope(self.flux_bias, self)
    }

    pub fn coupler_curvature(&self) -> Result<f64> {
        coupler_curvature(self.flux_bias, self)
    }
}

fn check_flux(flux: f64) -> Result<()> {
    if flux.abs() > 0.5 || !flux.is_finite() {
        Err(DeviceError::FluxOutOfRange(flux))
    } else {
        Ok(())
    }
}

/// `ω_c0 sqrt(|cos πΦ|)`.
pub fn coupler_frequency(flux: f64, params: &DeviceParams) -> Result<f64> {
    check_flux(flux)?;
    Ok(coupler_frequency_unchecked(flux, params.coupler.freq0))
}

#[inline]
pub(crate) fn coupler_frequency_unchecked(flux: f64, freq0: f64) -> f64 {
    freq0 * (PI * flux).cos().abs().sqrt()
}

/// `∂_Φ ω_c`; positive for negative flux inside the arc.
pub fn coupler_slope(flux: f64, params: &DeviceParams) -> Result<f64> {
    check_flux(flux)?;
    let (s, c) = (PI * flux).sin_cos();
    if c.abs() < 1e-300 {
        return Err(DeviceError::FluxOutOfRange(flux));
    }
    Ok(params.coupler.freq0 * c.signum() * (-PI * s) / (2.0 * c.abs().sqrt()))
}

/// `∂²_Φ ω_c` on the principal arc.
pub fn coupler_curvature(flux: f64, params: &DeviceParams) -> Result<f64> {
    check_flux(flux)?;
    let (s, c) = (PI * flux).sin_cos();
    if c <= 0.0 {
        return Err(DeviceError::FluxOutOfRange(flux));
    }
    Ok(-params.coupler.freq0 * PI * PI * (c.sqrt() / 2.0 + s * s / (4.0 * c.powf(1.5))))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone {
    /// Amplitude δ_m in flux quanta.
    pub amplitude: f64,
    /// ω^φ_m in rad/s.
    pub freq: f64,
    pub phase: f64,
}

/// Polychromatic modulation around the dc bias held by [`DeviceParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct FluxModulation {
    pub tones: Vec<Tone>,
    pub expansion_order: u8,
}

impl Default for FluxModulation {
    fn default() -> Self {
        Self {
            tones: Vec::new(),
            expansion_order: 2,
        }
    }
}

impl FluxModulation {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(tones: Vec<Tone>) -> Self {
        Self {
            tones,
            expansion_order: 2,
        }
    }

    /// Two phase-free tones.
    pub fn bichromatic(d1: f64, w1: f64, d2: f64, w2: f64) -> Self {
        Self::new(vec![
            Tone {
                amplitude: d1,
                freq: w1,
                phase: 0.0,
            },
            Tone {
                amplitude: d2,
                freq: w2,
                phase: 0.0,
            },
        ])
    }

    pub fn validate(&self, params: &DeviceParams) -> Result<()> {
        if !(1..=2).contains(&self.expansion_order) {
            return Err(DeviceError::UnsupportedOrder(self.expansion_order));
        }
        let excursion: f64 =
            params.flux_bias.abs() + self.tones.iter().map(|t| t.amplitude.abs()).sum::<f64>();
        if excursion >= 0.5 {
            return Err(DeviceError::FluxOutOfRange(excursion));
        }
        for t in &self.tones {
            if !(t.freq.is_finite() && t.amplitude.is_finite() && t.phase.is_finite()) {
                return Err(DeviceError::InvalidParameter("non-finite tone".into()));
            }
        }
        Ok(())
    }

    /// `λ_m = δ_m ∂_Φω_c / ω^φ_m`.
    pub fn lambdas(&self, params: &DeviceParams) -> Result<Vec<f64>> {
        let slope = params.coupler_slope()?;
        Ok(self
            .tones
            .iter()
            .map(|t| t.amplitude * slope / t.freq)
            .collect())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut m = self.clone();
        for t in &mut m.tones {
            t.amplitude *= factor;
        }
        m
    }
}

/// `θ + Σ_m δ_m cos(ω^φ_m t + phase_m)`.
pub fn flux_waveform(t: f64, params: &DeviceParams, modulation: &FluxModulation) -> f64 {
    params.flux_bias
        + modulation
            .tones
            .iter()
            .map(|tone| tone.amplitude * (tone.freq * t + tone.phase).cos())
            .sum::<f64>()
}

/// One harmonic `A e^{i (h·ω) t}` of the expanded coupler frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicTerm {
    pub orders: Vec<i32>,
    pub frequency: f64,
    pub amplitude: C64,
}

/// Taylor expansion of `ω_c(Φ(t))` around the bias, as a table of harmonics.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplerSeries {
    /// `ω_c^θ`.
    pub bias_value: f64,
    /// Constant term including any second-order static shift.
    pub static_value: f64,
    pub terms: Vec<HarmonicTerm>,
    pub order: u8,
}

impl CouplerSeries {
    pub fn eval(&self, t: f64) -> f64 {
        self.static_value
            + self
                .terms
                .iter()
                .map(|h| (h.amplitude * C64::from_polar(1.0, h.frequency * t)).re)
                .sum::<f64>()
    }

    /// Amplitude of the harmonic with the given order vector (0 if absent).
    pub fn amplitude(&self, orders: &[i32]) -> C64 {
        if orders.iter().all(|&o| o == 0) {
            return cr(self.static_value);
        }
        self.terms
            .iter()
            .filter(|h| h.orders == orders)
            .map(|h| h.amplitude)
            .sum()
    }
}

/// Expands `ω_c(Φ(t))` to first or second order in the tone amplitudes.
pub fn coupler_frequency_series(
    modulation: &FluxModulation,
    params: &DeviceParams,
    order: u8,
) -> Result<CouplerSeries> {
    if !(1..=2).contains(&order) {
        return Err(DeviceError::UnsupportedOrder(order));
    }
    let m = modulation.tones.len();
    let w0 = params.coupler_freq_at_bias()?;
    let d1 = params.coupler_slope()?;
    let mut terms: Vec<HarmonicTerm> = Vec::new();
    let mut push = |orders: Vec<i32>, amp: C64, tones: &[Tone]| {
        let phase: f64 = orders
            .iter()
            .zip(tones)
            .map(|(&o, t)| o as f64 * t.phase)
            .sum();
        let freq: f64 = orders
            .iter()
            .zip(tones)
            .map(|(&o, t)| o as f64 * t.freq)
            .sum();
        let amp = amp * C64::from_polar(1.0, phase);
        if let Some(existing) = terms.iter_mut().find(|h| h.orders == orders) {
            existing.amplitude += amp;
        } else {
            terms.push(HarmonicTerm {
                orders,
                frequency: freq,
                amplitude: amp,
            });
        }
    };
    let unit = |k: usize, s: i32| {
        let mut v = vec![0; m];
        v[k] = s;
        v
    };
    let tones = &modulation.tones;
    for (k, tone) in tones.iter().enumerate() {
        for s in [1, -1] {
            push(unit(k, s), cr(d1 * tone.amplitude / 2.0), tones);
        }
    }
    let mut static_value = w0;
    if order == 2 {
        let d2 = params.coupler_curvature()?;
        for (k, tk) in tones.iter().enumerate() {
            static_value += d2 * tk.amplitude * tk.amplitude / 4.0;
            for s in [2, -2] {
                push(
                    unit(k, s),
                    cr(d2 * tk.amplitude * tk.amplitude / 8.0),
                    tones,
                );
            }
            for (l, tl) in tones.iter().enumerate().skip(k + 1) {
                let a = cr(d2 * tk.amplitude * tl.amplitude / 4.0);
                for (sk, sl) in [(1, 1), (-1, -1), (1, -1), (-1, 1)] {
                    let mut v = vec![0; m];
                    v[k] = sk;
                    v[l] = sl;
                    push(v, a, tones);
                }
            }
        }
    }
    terms.retain(|h| h.amplitude.norm() > 0.0);
    Ok(CouplerSeries {
        bias_value: w0,
        static_value,
        terms,
        order,
    })
}

/// How the qubit drive couples in the lab frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriveForm {
    /// `f/2 (a† e^{-iψ} + a e^{iψ})`.
    #[default]
    RotatingWave,
    /// `f cos ψ (a + a†)`.
    Cosine,
}

/// Drive amplitude profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ramp {
    Constant(f64),
    /// Linear from `from` at t=0 to `to` at t=`duration`, then held.
    Linear {
        from: f64,
        to: f64,
        duration: f64,
    },
}

impl Ramp {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Ramp::Constant(v) => v,
            Ramp::Linear { from, to, duration } => {
                let s = (t / duration).clamp(0.0, 1.0);
                from + (to - from) * s
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        match *self {
            Ramp::Constant(v) => v.abs(),
            Ramp::Linear { from, to, .. } => from.abs().max(to.abs()),
        }
    }
}

/// `ϑ(t) = rate t + accel t²/2`, so `ϑ(0) = 0` and `ω^d(t) = rate + accel t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseAccumulator {
    pub rate: f64,
    pub accel: f64,
}

impl PhaseAccumulator {
    pub fn constant(freq: f64) -> Self {
        Self {
            rate: freq,
            accel: 0.0,
        }
    }

    /// Linear chirp from `start` at t=0 to `end` at t=`duration`.
    pub fn linear_chirp(start: f64, end: f64, duration: f64) -> Self {
        Self {
            rate: start,
            accel: (end - start) / duration,
        }
    }

    #[inline]
    pub fn phase(&self, t: f64) -> f64 {
        self.rate * t + 0.5 * self.accel * t * t
    }

    #[inline]
    pub fn frequency(&self, t: f64) -> f64 {
        self.rate + self.accel * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveChannel {
    pub amplitude: Ramp,
    pub accumulator: PhaseAccumulator,
    pub phase: f64,
}

impl DriveChannel {
    pub fn off() -> Self {
        Self {
            amplitude: Ramp::Constant(0.0),
            accumulator: PhaseAccumulator::constant(0.0),
            phase: 0.0,
        }
    }

    pub fn constant(amplitude: f64, freq: f64, phase: f64) -> Self {
        Self {
            amplitude: Ramp::Constant(amplitude),
            accumulator: PhaseAccumulator::constant(freq),
            phase,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveSpec {
    pub channels: Vec<DriveChannel>,
}

pub const WEAK_DRIVE_RATIO: f64 = 0.1;

impl DriveSpec {
    pub fn off(n: usize) -> Self {
        Self {
            channels: vec![DriveChannel::off(); n],
        }
    }

    /// Warning text when `max f / min g` reaches the weak-drive bound.
    pub fn weak_drive_diagnostic(&self, params: &DeviceParams) -> Option<String> {
        let fmax = self
            .channels
            .iter()
            .map(|c| c.amplitude.max_abs())
            .fold(0.0, f64::max);
        let gmin = params
            .qubits
            .iter()
            .map(|q| q.coupling)
            .fold(f64::INFINITY, f64::min);
        let ratio = fmax / gmin;
        (ratio >= WEAK_DRIVE_RATIO).then(|| {
            let w = format!("drive is not weak: max f / min g = {ratio:.3}");
            log::warn!("{w}");
            w
        })
    }
}

/// Time-dependent control signals seen by the device.
pub trait Controls: Send + Sync {
    /// Total flux Φ(t).
    fn flux(&self, t: f64) -> f64;
    /// Amplitude `f_j(t)` and total phase `ϑ_j(t) + φ_j` of drive `j`.
    fn drive(&self, j: usize, t: f64) -> (f64, f64);
}

/// Fixed modulation and drives.
#[derive(Debug, Clone)]
pub struct StaticControls {
    pub bias: f64,
    pub modulation: FluxModulation,
    pub drive: DriveSpec,
}

impl StaticControls {
    pub fn new(params: &DeviceParams, modulation: FluxModulation, drive: DriveSpec) -> Self {
        Self {
            bias: params.flux_bias,
            modulation,
            drive,
        }
    }
}

impl Controls for StaticControls {
    fn flux(&self, t: f64) -> f64 {
        self.bias
            + self
                .modulation
                .tones
                .iter()
                .map(|tone| tone.amplitude * (tone.freq * t + tone.phase).cos())
                .sum::<f64>()
    }

    fn drive(&self, j: usize, t: f64) -> (f64, f64) {
        match self.drive.channels.get(j) {
            Some(ch) => (ch.amplitude.eval(t), ch.accumulator.phase(t) + ch.phase),
            None => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Truncated transmons with anharmonicity.
    Transmon,
    /// Pauli form with all subsystems at two levels.
    TwoLevel,
}

pub fn qubit_label(j: usize) -> String {
    format!("q{}", j + 1)
}

pub const COUPLER_LABEL: &str = "c";

/// `q1, …, qN, c` with the device's truncation (or 2 for the Pauli model).
pub fn standard_space(params: &DeviceParams, kind: ModelKind) -> Result<HilbertSpace> {
    let mut subs: Vec<(String, usize)> = params
        .qubits
        .iter()
        .enumerate()
        .map(|(j, q)| {
            (
                qubit_label(j),
                if kind == ModelKind::TwoLevel {
                    2
                } else {
                    q.levels
                },
            )
        })
        .collect();
    subs.push((
        COUPLER_LABEL.to_string(),
        if kind == ModelKind::TwoLevel {
            2
        } else {
            params.coupler.levels
        },
    ));
    Ok(HilbertSpace::new(subs)?)
}

fn check_space(space: &HilbertSpace, params: &DeviceParams, kind: ModelKind) -> Result<()> {
    let expected = standard_space(params, kind)?;
    if *space != expected {
        return Err(DeviceError::SpaceMismatch(format!(
            "expected {:?}, got {:?}",
            expected.subsystems(),
            space.subsystems()
        )));
    }
    Ok(())
}

/// Lab-frame device Hamiltonian as `Σ_k c_k(t) M_k`.
///
/// Piece layout: `[static, coupler number (or -σz_c/2), per-qubit drive pieces]`.
pub struct DeviceModel<C: Controls> {
    space: HilbertSpace,
    pieces: Vec<CMatrix>,
    freq0: f64,
    form: DriveForm,
    n_qubits: usize,
    controls: C,
}

impl<C: Controls> DeviceModel<C> {
    pub fn new(
        params: &DeviceParams,
        controls: C,
        kind: ModelKind,
        form: DriveForm,
    ) -> Result<Self> {
        params.validate()?;
        let space = standard_space(params, kind)?;
        let n = space.dim();
        let mut stat = CMatrix::zeros(n, n);
        let mut pieces = Vec::new();
        match kind {
            ModelKind::Transmon => {
                for (j, q) in params.qubits.iter().enumerate() {
                    let lab = qubit_label(j);
                    let d = q.levels;
                    let num = local::number(d);
                    let kerr = &num * (&num - CMatrix::identity(d, d)) * cr(q.anharm / 2.0);
                    stat += embed(&(&num * cr(q.freq) + kerr), &lab, &space)?.into_matrix();
                    let xq = local::lowering(d) + local::raising(d);
                    let dc = params.coupler.levels;
                    let xc = local::lowering(dc) + local::raising(dc);
                    stat += embed_many(&[(lab.as_str(), &xq), (COUPLER_LABEL, &xc)], &space)?
                        .into_matrix()
                        * cr(q.coupling);
                }
                let dc = params.coupler.levels;
                let num = local::number(dc);
                let kerr =
                    &num * (&num - CMatrix::identity(dc, dc)) * cr(params.coupler.anharm / 2.0);
                stat += embed(&kerr, COUPLER_LABEL, &space)?.into_matrix();
                pieces.push(stat);
                pieces.push(embed(&num, COUPLER_LABEL, &space)?.into_matrix());
                for (j, q) in params.qubits.iter().enumerate() {
                    let lab = qubit_label(j);
                    let d = q.levels;
                    match form {
                        DriveForm::RotatingWave => {
                            pieces.push(embed(&local::raising(d), &lab, &space)?.into_matrix());
                            pieces.push(embed(&local::lowering(d), &lab, &space)?.into_matrix());
                        }
                        DriveForm::Cosine => {
                            let x = local::lowering(d) + local::raising(d);
                            pieces.push(embed(&x, &lab, &space)?.into_matrix());
                        }
                    }
                }
            }
            ModelKind::TwoLevel => {
                for (j, q) in params.qubits.iter().enumerate() {
                    let lab = qubit_label(j);
                    stat +=
                        embed(&local::pauli_z(), &lab, &space)?.into_matrix() * cr(-q.freq / 2.0);
                    stat += embed_many(
                        &[
                            (lab.as_str(), &local::pauli_x()),
                            (COUPLER_LABEL, &local::pauli_x()),
                        ],
                        &space,
                    )?
                    .into_matrix()
                        * cr(q.coupling);
                }
                pieces.push(stat);
                pieces.push(
                    embed(&local::pauli_z(), COUPLER_LABEL, &space)?.into_matrix() * cr(-0.5),
                );
                for j in 0..params.qubits.len() {
                    let lab = qubit_label(j);
                    match form {
                        DriveForm::RotatingWave => {
                            pieces.push(embed(&local::sigma_plus(), &lab, &space)?.into_matrix());
                            pieces.push(embed(&local::sigma_minus(), &lab, &space)?.into_matrix());
                        }
                        DriveForm::Cosine => {
                            pieces.push(embed(&local::pauli_x(), &lab, &space)?.into_matrix());
                        }
                    }
                }
            }
        }
        Ok(Self {
            space,
            pieces,
            freq0: params.coupler.freq0,
            form,
            n_qubits: params.qubits.len(),
            controls,
        })
    }

    pub fn controls(&self) -> &C {
        &self.controls
    }

    /// Hamiltonian with the coupler parked at `flux` and drives off.
    pub fn static_hamiltonian(&self, flux: f64) -> Operator {
        let m =
            &self.pieces[0] + &self.pieces[1] * cr(coupler_frequency_unchecked(flux, self.freq0));
        Operator::new(self.space.clone(), m).expect("pieces match the space")
    }
}

impl<C: Controls> ParametricOperator for DeviceModel<C> {
    fn space(&self) -> &HilbertSpace {
        &self.space
    }

    fn pieces(&self) -> &[CMatrix] {
        &self.pieces
    }

    fn coefficients(&self, t: f64, out: &mut [C64]) {
        out[0] = cr(1.0);
        out[1] = cr(coupler_frequency_unchecked(
            self.controls.flux(t),
            self.freq0,
        ));
        let mut k = 2;
        for j in 0..self.n_qubits {
            let (f, psi) = self.controls.drive(j, t);
            match self.form {
                DriveForm::RotatingWave => {
                    out[k] = C64::from_polar(f / 2.0, -psi);
                    out[k + 1] = C64::from_polar(f / 2.0, psi);
                    k += 2;
                }
                DriveForm::Cosine => {
                    out[k] = cr(f * psi.cos());
                    k += 1;
                }
            }
        }
    }
}

fn build(
    t: f64,
    params: &DeviceParams,
    modulation: &FluxModulation,
    drive: &DriveSpec,
    space: &HilbertSpace,
    kind: ModelKind,
    form: DriveForm,
) -> Result<Operator> {
    check_space(space, params, kind)?;
    modulation.validate(params)?;
    let controls = StaticControls::new(params, modulation.clone(), drive.clone());
    Ok(DeviceModel::new(params, controls, kind, form)?.at(t))
}

/// Full transmon Hamiltonian at time `t`.
pub fn build_full_hamiltonian(
    t: f64,
    params: &DeviceParams,
    modulation: &FluxModulation,
    drive: &DriveSpec,
    space: &HilbertSpace,
) -> Result<Operator> {
    build(
        t,
        params,
        modulation,
        drive,
        space,
        ModelKind::Transmon,
        DriveForm::RotatingWave,
    )
}

pub fn build_full_hamiltonian_with_form(
    t: f64,
    params: &DeviceParams,
    modulation: &FluxModulation,
    drive: &DriveSpec,
    space: &HilbertSpace,
    form: DriveForm,
) -> Result<Operator> {
    build(
        t,
        params,
        modulation,
        drive,
        space,
        ModelKind::Transmon,
        form,
    )
}

/// Two-level (Pauli) Hamiltonian at time `t`.
pub fn build_two_level_hamiltonian(
    t: f64,
    params: &DeviceParams,
    modulation: &FluxModulation,
    drive: &DriveSpec,
    space: &HilbertSpace,
) -> Result<Operator> {
    build(
        t,
        params,
        modulation,
        drive,
        space,
        ModelKind::TwoLevel,
        DriveForm::RotatingWave,
    )
}

/// Eigenstates of the static Hamiltonian that continue the bare computational
/// states `{0,1}^N ⊗ |0_c⟩`.
#[derive(Debug, Clone)]
pub struct DressedBasis {
    pub space: HilbertSpace,
    /// Column `k` is the dressed state of computational index `k` (two-level order).
    pub states: CMatrix,
    pub energies: Vec<f64>,
    /// Overlap with the bare state, `|⟨bare|dressed⟩|²`.
    pub overlaps: Vec<f64>,
    pub ground_energy: f64,
    pub ground_state: crate::linalg::CVector,
}

pub fn dressed_basis(params: &DeviceParams, kind: ModelKind) -> Result<DressedBasis> {
    let model = DeviceModel::new(
        params,
        StaticControls::new(
            params,
            FluxModulation::none(),
            DriveSpec::off(params.num_qubits()),
        ),
        kind,
        DriveForm::RotatingWave,
    )?;
    let h = model.static_hamiltonian(params.flux_bias);
    let (vals, vecs) = linalg::eigh(h.matrix());
    let space = model.space.clone();
    let nq = params.num_qubits();
    let ncomp = 1usize << nq;
    let mut states = CMatrix::zeros(space.dim(), ncomp);
    let mut energies = Vec::with_capacity(ncomp);
    let mut overlaps = Vec::with_capacity(ncomp);
    for k in 0..ncomp {
        let mut levels: Vec<usize> = (0..nq).map(|j| (k >> (nq - 1 - j)) & 1).collect();
        levels.push(0);
        let idx = space.basis_index(&levels)?;
        let (best, amp) = (0..vals.len())
            .map(|e| (e, vecs[(idx, e)]))
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .expect("non-empty spectrum");
        let phase = if amp.norm() > 0.0 {
            amp.conj() / cr(amp.norm())
        } else {
            cr(1.0)
        };
        states.set_column(k, &(vecs.column(best) * phase));
        energies.push(vals[best]);
        overlaps.push(amp.norm_sqr());
    }
    let g0 = vecs[(space.basis_index(&vec![0; nq + 1])?, 0)];
    let ground_state = vecs.column(0)
        * if g0.norm() > 0.0 {
            g0.conj() / cr(g0.norm())
        } else {
            cr(1.0)
        };
    Ok(DressedBasis {
        space,
        states,
        energies,
        overlaps,
        ground_energy: vals[0],
        ground_state,
    })
}

impl DressedBasis {
    /// Dressed qubit frequencies: mean excitation energy of qubit `j` over the
    /// computational configurations of the others.
    pub fn qubit_frequencies(&self) -> Vec<f64> {
        let ncomp = self.energies.len();
        let nq = ncomp.trailing_zeros() as usize;
        (0..nq)
            .map(|j| {
                let bit = 1usize << (nq - 1 - j);
                let pairs: Vec<f64> = (0..ncomp)
                    .filter(|k| k & bit == 0)
                    .map(|k| self.energies[k | bit] - self.energies[k])
                    .collect();
                pairs.iter().sum::<f64>() / pairs.len() as f64
            })
            .collect()
    }
}
