//! Parametric XX-gate benchmark in the dressed computational basis.

use std::f64::consts::PI;

use super::calibrate::{calibrate_effective_frequencies, Calibration, CalibrationWindow};
use super::{
    average_gate_fidelity, extract_oscillation_frequency, propagate_block, xx_gate, DynamicsError,
    OscillationFit, PropagationConfig, Result, DEFAULT_STEP,
};
use crate::device::{
    dressed_basis, DeviceModel, DeviceParams, DressedBasis, DriveForm, DriveSpec, FluxModulation,
    ModelKind, StaticControls,
};
use crate::linalg::{CMatrix, C64};
use crate::operators::DEFAULT_LEAKAGE_THRESHOLD;
use crate::swt::{
    first_order_couplings, ising_ratio, resonant_operating_point, second_order_ising_partner,
    FrequencySource,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GateRunConfig {
    pub kind: ModelKind,
    pub source: FrequencySource,
    pub phases: [f64; 2],
    /// Run length in predicted periods of the |01⟩↔|10⟩ oscillation.
    pub periods: f64,
    pub step: f64,
    pub samples_per_period: usize,
    pub leakage_threshold: f64,
    /// Target angle of `exp(iξ σxσx/2)`.
    pub xi: f64,
    /// Set tone frequencies from a contrast scan instead of the analytic resonances.
    pub calibrate: bool,
    pub ising: IsingCondition,
}

/// How `δ2` follows `δ1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IsingCondition {
    /// `δ1/δ2` = [`ising_ratio`], cancelling `Ω_y` at first order.
    #[default]
    FirstOrder,
    /// Cancels the second-order `Ω_y`.
    SecondOrder,
}

impl Default for GateRunConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Transmon,
            source: FrequencySource::DressedAnalytic,
            phases: [0.0, 0.0],
            periods: 2.2,
            step: DEFAULT_STEP,
            samples_per_period: 400,
            leakage_threshold: DEFAULT_LEAKAGE_THRESHOLD,
            xi: PI,
            calibrate: false,
            ising: IsingCondition::FirstOrder,
        }
    }
}

/// Sampled dressed-basis maps of one propagation.
#[derive(Debug, Clone, Default)]
pub struct GateSamples {
    pub times: Vec<f64>,
    /// Dressed computational states that were propagated.
    pub columns: Vec<usize>,
    /// `M_ab(t) = e^{iE_a t} ⟨a|U(t)|b⟩`, one column per propagated state.
    pub maps: Vec<CMatrix>,
    /// Largest population outside the dressed computational subspace.
    pub leakage: f64,
    /// Largest coupler occupation ⟨n_c⟩ over the four runs.
    pub coupler_population: f64,
}

impl GateSamples {
    /// Population of computational state `to` starting from `from`.
    ///
    /// # Panics
    /// If `from` was not propagated.
    pub fn transfer(&self, from: usize, to: usize) -> Vec<f64> {
        let col = self
            .columns
            .iter()
            .position(|&c| c == from)
            .expect("state was propagated");
        self.maps.iter().map(|m| m[(to, col)].norm_sqr()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GateBenchmark {
    pub d1: f64,
    pub d2: f64,
    /// `(ν_exchange + ν_pair)/2` from the two population oscillations.
    pub omega_x_extracted: f64,
    pub omega_x_first_order: f64,
    pub omega_x_second_order: f64,
    pub omega_y_second_order: f64,
    pub fit: OscillationFit,
    pub pair_fit: OscillationFit,
    /// Difference and sum tone frequencies used.
    pub tones: [f64; 2],
    pub calibration: Option<Calibration>,
    pub infidelity: f64,
    pub t_best: f64,
    /// max_t P(|01⟩ ← |10⟩) and max_t P(|11⟩ ← |00⟩).
    pub contrast_exchange: f64,
    pub contrast_pair: f64,
    pub leakage: f64,
    pub coupler_population: f64,
    pub duration: f64,
}

/// Propagates the four dressed computational states under constant tones.
pub fn sample_dressed_maps(
    params: &DeviceParams,
    modulation: &FluxModulation,
    kind: ModelKind,
    dressed: &DressedBasis,
    cfg: &PropagationConfig,
    leakage_threshold: f64,
) -> Result<GateSamples> {
    let all: Vec<usize> = (0..dressed.states.ncols()).collect();
    sample_dressed_columns(
        params,
        modulation,
        kind,
        dressed,
        &all,
        cfg,
        leakage_threshold,
    )
}

/// As [`sample_dressed_maps`] for a subset of the dressed computational states.
pub fn sample_dressed_columns(
    params: &DeviceParams,
    modulation: &FluxModulation,
    kind: ModelKind,
    dressed: &DressedBasis,
    columns: &[usize],
    cfg: &PropagationConfig,
    leakage_threshold: f64,
) -> Result<GateSamples> {
    if columns.is_empty() || columns.iter().any(|&c| c >= dressed.states.ncols()) {
        return Err(DynamicsError::Config(
            "invalid dressed-state selection".into(),
        ));
    }
    let model = DeviceModel::new(
        params,
        StaticControls::new(
            params,
            modulation.clone(),
            DriveSpec::off(params.num_qubits()),
        ),
        kind,
        DriveForm::RotatingWave,
    )?;
    let space = dressed.space.clone();
    let nc: Vec<f64> = (0..space.dim())
        .map(|i| *space.levels_of(i).last().expect("coupler slot") as f64)
        .collect();
    let dag = dressed.states.adjoint();
    let initial = CMatrix::from_fn(space.dim(), columns.len(), |r, k| {
        dressed.states[(r, columns[k])]
    });
    let mut out = GateSamples {
        columns: columns.to_vec(),
        ..Default::default()
    };
    let mut observe = |_k: usize, t: f64, b: &CMatrix| -> Result<()> {
        let mut m = &dag * b;
        for a in 0..m.nrows() {
            let ph = C64::from_polar(1.0, dressed.energies[a] * t);
            for col in 0..m.ncols() {
                m[(a, col)] *= ph;
            }
        }
        for col in 0..m.ncols() {
            let kept: f64 = m.column(col).norm_squared();
            let leak = (1.0 - kept).max(0.0);
            if leak > leakage_threshold {
                return Err(DynamicsError::Leakage {
                    time: t,
                    leakage: leak,
                    threshold: leakage_threshold,
                });
            }
            out.leakage = out.leakage.max(leak);
            let occ: f64 = b
                .column(col)
                .iter()
                .zip(&nc)
                .map(|(z, n)| z.norm_sqr() * n)
                .sum();
            out.coupler_population = out.coupler_population.max(occ);
        }
        out.times.push(t);
        out.maps.push(m);
        Ok(())
    };
    propagate_block(&model, initial, cfg, &mut observe)?;
    Ok(out)
}

/// Device parameters whose dressed spectrum matches the simulated model.
pub(crate) fn params_for(params: &DeviceParams, kind: ModelKind) -> DeviceParams {
    match kind {
        ModelKind::TwoLevel => params.with_levels(2),
        ModelKind::Transmon => params.clone(),
    }
}

/// Runs the XX benchmark at modulation amplitude `d1` with `d2` on the Ising line.
pub fn run_gate_benchmark(
    params: &DeviceParams,
    d1: f64,
    cfg: &GateRunConfig,
) -> Result<GateBenchmark> {
    let params = &params_for(params, cfg.kind);
    let (d2, point) = match cfg.ising {
        IsingCondition::FirstOrder => {
            let d2 = d1 / ising_ratio(params)?;
            (
                d2,
                resonant_operating_point(params, d1, d2, cfg.phases, cfg.source)?,
            )
        }
        IsingCondition::SecondOrder => {
            second_order_ising_partner(params, d1, cfg.phases, cfg.source)?
        }
    };
    let (plus, minus) = first_order_couplings(params, d1, d2)?;
    let predicted = point.effective.omega_x;
    if !(predicted.abs() > 0.0) {
        return Err(DynamicsError::Config("predicted coupling vanishes".into()));
    }
    let period = 2.0 * PI / predicted.abs();
    // whole number of sample intervals keeps the record uniform
    let stride = ((period / cfg.samples_per_period as f64 / cfg.step).round() as usize).max(1);
    let interval = stride as f64 * cfg.step;
    let duration = (cfg.periods * period / interval).ceil() * interval;
    let pc = PropagationConfig::new(duration, cfg.step)
        .with_stride(stride)
        .without_states();
    let calibration = if cfg.calibrate {
        let window = CalibrationWindow {
            kind: cfg.kind,
            source: cfg.source,
            step: cfg.step,
            phases: cfg.phases,
            leakage_threshold: cfg.leakage_threshold,
            ..Default::default()
        };
        Some(calibrate_effective_frequencies(params, d1, d2, &window)?)
    } else {
        None
    };
    let mut modulation = point.modulation.clone();
    if let Some(c) = &calibration {
        for (tone, nu) in modulation.tones.iter_mut().zip(c.transitions) {
            tone.freq = nu;
        }
    }
    let tones = [modulation.tones[0].freq, modulation.tones[1].freq];
    let dressed = dressed_basis(params, cfg.kind)?;
    let samples = sample_dressed_maps(
        params,
        &modulation,
        cfg.kind,
        &dressed,
        &pc,
        cfg.leakage_threshold,
    )?;
    let exchange = samples.transfer(2, 1);
    let pair = samples.transfer(0, 3);
    let fit = extract_oscillation_frequency(&samples.times, &exchange)?;
    let pair_fit = extract_oscillation_frequency(&samples.times, &pair)?;
    let gf = average_gate_fidelity(&samples.times, &samples.maps, &xx_gate(cfg.xi))?;
    Ok(GateBenchmark {
        d1,
        d2,
        omega_x_extracted: 0.5 * (fit.frequency + pair_fit.frequency),
        omega_x_first_order: plus + minus,
        omega_x_second_order: predicted,
        omega_y_second_order: point.effective.omega_y,
        fit,
        pair_fit,
        tones,
        calibration,
        infidelity: 1.0 - gf.max,
        t_best: gf.t_max,
        contrast_exchange: exchange.iter().copied().fold(0.0, f64::max),
        contrast_pair: pair.iter().copied().fold(0.0, f64::max),
        leakage: samples.leakage,
        coupler_population: samples.coupler_population,
        duration,
    })
}
