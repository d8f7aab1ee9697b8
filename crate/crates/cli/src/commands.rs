//! Subcommand execution: sweep points, CSV rows and the run manifest.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use paramsim::adiabatic::{
    build_schedule, chemical_accuracy_crossing, run_protocol, CouplerVariant, Mode, MoleculeTable,
    ProtocolSchedule, RunOptions, ScheduleOptions, TargetHamiltonian, CHEMICAL_ACCURACY_MHA,
};
use paramsim::device::DeviceParams;
use paramsim::dynamics::{
    calibrate_effective_frequencies, run_gate_benchmark, CalibrationWindow, GateRunConfig,
    IsingCondition, LindbladSpec,
};
use paramsim::swt::{first_order_couplings, ising_ratio, resonant_operating_point};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{canonical_json, ConfigErrors, ModeKind, ModelKey, RunConfig};

const MHZ: f64 = 2.0 * PI * 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Couplings,
    Gate,
    Anneal,
    AnnealSweep,
    ToptScan,
    CoherenceSweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Couplings => "couplings",
            Command::Gate => "gate",
            Command::Anneal => "anneal",
            Command::AnnealSweep => "anneal-sweep",
            Command::ToptScan => "topt-scan",
            Command::CoherenceSweep => "coherence-sweep",
        }
    }

    /// Fixed column order of the results CSV.
    pub fn header(self) -> &'static [&'static str] {
        match self {
            Command::Couplings => &[
                "config_hash",
                "index",
                "d1_phi0",
                "d2_phi0",
                "omega_x_first_mhz",
                "omega_y_first_mhz",
                "omega_x_second_mhz",
                "omega_y_second_mhz",
                "omega_bar1_ghz",
                "omega_bar2_ghz",
            ],
            Command::Gate => &[
                "config_hash",
                "index",
                "d1_phi0",
                "d2_phi0",
                "omega_x_extracted_mhz",
                "omega_x_first_mhz",
                "omega_x_second_mhz",
                "omega_y_second_mhz",
                "infidelity",
                "t_best_us",
                "contrast_exchange",
                "contrast_pair",
                "leakage",
                "coupler_population",
            ],
            Command::Anneal | Command::AnnealSweep => &[
                "config_hash",
                "index",
                "r_angstrom",
                "duration_us",
                "model",
                "mode",
                "energy_mhz",
                "ground_energy_mhz",
                "delta_e_mhz",
                "abs_delta_e_mhz",
                "delta_e_mha",
                "fidelity",
                "leakage",
                "g_min_mhz",
            ],
            Command::ToptScan => &[
                "config_hash",
                "index",
                "duration_us",
                "fidelity",
                "delta_e_mhz",
                "delta_e_mha",
                "is_optimum",
            ],
            Command::CoherenceSweep => &[
                "config_hash",
                "index",
                "variant",
                "t_coh_us",
                "duration_us",
                "delta_e_mhz",
                "abs_delta_e_mhz",
                "delta_e_mha",
                "fidelity",
            ],
        }
    }
}

/// Options given on the command line that affect results.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub calibrate: bool,
    pub model: Option<ModelKey>,
    pub full_lindblad: bool,
    pub workers: usize,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigErrors),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigErrors> for CliError {
    fn from(e: ConfigErrors) -> Self {
        CliError::Config(e)
    }
}

fn numerical(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub index: usize,
    pub label: String,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub wall_seconds: f64,
    pub workers: usize,
    pub csv: PathBuf,
    pub points: Vec<PointRecord>,
    pub summary: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub failed_points: usize,
}

struct Point {
    label: String,
    work: Box<dyn Fn() -> Result<Vec<String>, String> + Send + Sync>,
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn sha_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

struct Context {
    cfg: RunConfig,
    inv: Invocation,
    params: DeviceParams,
    table: Option<MoleculeTable>,
}

impl Context {
    fn protocol(&self) -> &crate::config::ProtocolSection {
        self.cfg.protocol.as_ref().expect("checked by require")
    }

    fn model(&self) -> ModelKey {
        self.inv.model.unwrap_or(self.protocol().model)
    }

    fn run_options(&self) -> RunOptions {
        RunOptions {
            step: self.protocol().step_ps.map(|s| s * 1e-12),
            allow_full_lindblad: self.inv.full_lindblad,
            ..Default::default()
        }
    }

    fn mode(&self) -> Result<Mode, String> {
        match self.protocol().mode {
            ModeKind::Unitary => Ok(Mode::Unitary),
            ModeKind::Lindblad => Ok(Mode::Lindblad(
                self.cfg.dissipation.spec().map_err(numerical)?,
            )),
        }
    }

    fn mha(&self, e: f64) -> String {
        self.table
            .as_ref()
            .and_then(|t| t.to_mha(e))
            .map(f)
            .unwrap_or_default()
    }

    /// Single-run target and its bond length, if taken from the table.
    fn single_target(&self) -> Result<(TargetHamiltonian, Option<f64>), CliError> {
        let p = self.protocol();
        if let Some(r) = p.row_r_angstrom {
            let table = self.table.as_ref().expect("checked by require");
            let row = table
                .rows
                .iter()
                .find(|row| (row.r_angstrom - r).abs() < 1e-9)
                .ok_or_else(|| {
                    CliError::Config(ConfigErrors(vec![crate::config::Violation::InvalidValue {
                        section: "protocol".into(),
                        key: "row_r_angstrom".into(),
                        line: None,
                        message: format!("no table row with R = {r}"),
                    }]))
                })?;
            return Ok((row.target(), Some(r)));
        }
        Ok((self.cfg.target().expect("checked by require"), None))
    }

    fn schedule(
        &self,
        target: &TargetHamiltonian,
        duration: f64,
    ) -> Result<ProtocolSchedule, String> {
        let p = self.protocol();
        let mut opts = ScheduleOptions {
            source: self.cfg.flux.source.into(),
            tone_phases: self.cfg.flux.tone_phases_rad,
            ..Default::default()
        };
        let eps = p.epsilon0_mhz * MHZ;
        let s = build_schedule(target, &self.params, duration, eps, &opts).map_err(numerical)?;
        if !self.inv.calibrate || target.jx == 0.0 && target.jy == 0.0 {
            return Ok(s);
        }
        let [d1, d2] = s.modulation_target;
        let window = CalibrationWindow {
            source: opts.source,
            phases: opts.tone_phases,
            ..Default::default()
        };
        let c =
            calibrate_effective_frequencies(&self.params, d1, d2, &window).map_err(numerical)?;
        opts.omega_bar_target = Some(c.omega_bar);
        build_schedule(target, &self.params, duration, eps, &opts).map_err(numerical)
    }

    fn anneal_row(
        &self,
        target: &TargetHamiltonian,
        r: Option<f64>,
    ) -> Result<Vec<String>, String> {
        let p = self.protocol();
        let duration = p.duration_us * 1e-6;
        let sched = self.schedule(target, duration)?;
        let model = self.model();
        let res = run_protocol(
            &sched,
            &self.params,
            &self.mode()?,
            model.into(),
            &self.run_options(),
        )
        .map_err(numerical)?;
        Ok(vec![
            r.map(f).unwrap_or_default(),
            f(p.duration_us),
            format!(
                "{}",
                if model == ModelKey::Full {
                    "full"
                } else {
                    "effective"
                }
            ),
            format!(
                "{}",
                if p.mode == ModeKind::Unitary {
                    "unitary"
                } else {
                    "lindblad"
                }
            ),
            f(res.energy / MHZ),
            f(res.ground_energy / MHZ),
            f(res.delta_e / MHZ),
            f(res.delta_e.abs() / MHZ),
            self.mha(res.delta_e),
            f(res.fidelity),
            f(res.leakage),
            f(res.gap.g_min / MHZ),
        ])
    }
}

fn couplings_points(ctx: &std::sync::Arc<Context>) -> Result<Vec<Point>, CliError> {
    let ratio = ising_ratio(&ctx.params).map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut grid = Vec::new();
    for &d1 in &ctx.cfg.sweep.d1_phi0 {
        if ctx.cfg.sweep.d2_phi0.is_empty() {
            grid.push((d1, d1 / ratio));
        } else {
            grid.extend(ctx.cfg.sweep.d2_phi0.iter().map(|&d2| (d1, d2)));
        }
    }
    Ok(grid
        .into_iter()
        .map(|(d1, d2)| {
            let ctx = ctx.clone();
            Point {
                label: format!("d1={d1},d2={d2}"),
                work: Box::new(move || {
                    let (plus, minus) =
                        first_order_couplings(&ctx.params, d1, d2).map_err(numerical)?;
                    let op = resonant_operating_point(
                        &ctx.params,
                        d1,
                        d2,
                        ctx.cfg.flux.tone_phases_rad,
                        ctx.cfg.flux.source.into(),
                    )
                    .map_err(numerical)?;
                    Ok(vec![
                        f(d1),
                        f(d2),
                        f((plus + minus) / MHZ),
                        f((plus - minus) / MHZ),
                        f(op.effective.omega_x / MHZ),
                        f(op.effective.omega_y / MHZ),
                        f(op.omega_bar[0] / MHZ / 1e3),
                        f(op.omega_bar[1] / MHZ / 1e3),
                    ])
                }),
            }
        })
        .collect())
}

fn gate_points(ctx: &std::sync::Arc<Context>) -> Vec<Point> {
    ctx.cfg
        .sweep
        .d1_phi0
        .iter()
        .map(|&d1| {
            let ctx = ctx.clone();
            Point {
                label: format!("d1={d1}"),
                work: Box::new(move || {
                    let gc = GateRunConfig {
                        source: ctx.cfg.flux.source.into(),
                        phases: ctx.cfg.flux.tone_phases_rad,
                        periods: ctx.cfg.sweep.gate_periods,
                        calibrate: ctx.inv.calibrate,
                        ising: if ctx.cfg.flux.ising_order == 2 {
                            IsingCondition::SecondOrder
                        } else {
                            IsingCondition::FirstOrder
                        },
                        ..Default::default()
                    };
                    let b = run_gate_benchmark(&ctx.params, d1, &gc).map_err(numerical)?;
                    Ok(vec![
                        f(b.d1),
                        f(b.d2),
                        f(b.omega_x_extracted / MHZ),
                        f(b.omega_x_first_order / MHZ),
                        f(b.omega_x_second_order / MHZ),
                        f(b.omega_y_second_order / MHZ),
                        f(b.infidelity),
                        f(b.t_best * 1e6),
                        f(b.contrast_exchange),
                        f(b.contrast_pair),
                        f(b.leakage),
                        f(b.coupler_population),
                    ])
                }),
            }
        })
        .collect()
}

fn anneal_points(ctx: &std::sync::Arc<Context>, sweep: bool) -> Result<Vec<Point>, CliError> {
    let targets: Vec<(TargetHamiltonian, Option<f64>)> = if sweep {
        let t = ctx.table.as_ref().expect("checked by require");
        t.rows
            .iter()
            .map(|r| (r.target(), Some(r.r_angstrom)))
            .collect()
    } else {
        vec![ctx.single_target()?]
    };
    Ok(targets
        .into_iter()
        .map(|(target, r)| {
            let ctx = ctx.clone();
            Point {
                label: r
                    .map(|r| format!("R={r}"))
                    .unwrap_or_else(|| "target".into()),
                work: Box::new(move || ctx.anneal_row(&target, r)),
            }
        })
        .collect())
}

fn topt_points(ctx: &std::sync::Arc<Context>) -> Result<Vec<Point>, CliError> {
    let (target, _) = ctx.single_target()?;
    Ok(ctx
        .cfg
        .sweep
        .durations_us
        .iter()
        .map(|&t_us| {
            let ctx = ctx.clone();
            Point {
                label: format!("T={t_us}us"),
                work: Box::new(move || {
                    let sched = ctx.schedule(&target, t_us * 1e-6)?;
                    let res = run_protocol(
                        &sched,
                        &ctx.params,
                        &ctx.mode()?,
                        ctx.model().into(),
                        &ctx.run_options(),
                    )
                    .map_err(numerical)?;
                    Ok(vec![
                        f(t_us),
                        f(res.fidelity),
                        f(res.delta_e / MHZ),
                        ctx.mha(res.delta_e),
                    ])
                }),
            }
        })
        .collect())
}

fn coherence_points(ctx: &std::sync::Arc<Context>) -> Result<Vec<Point>, CliError> {
    let (target, _) = ctx.single_target()?;
    let mut out = Vec::new();
    for v in CouplerVariant::standard() {
        for &tc in &ctx.cfg.sweep.t_coh_us {
            let ctx = ctx.clone();
            out.push(Point {
                label: format!("{},t_coh={tc}us", v.label()),
                work: Box::new(move || {
                    let duration = ctx.protocol().duration_us;
                    let sched = ctx.schedule(&target, duration * 1e-6)?;
                    let tcs = tc * 1e-6;
                    let mut spec = LindbladSpec::new()
                        .with("q1", tcs, tcs)
                        .and_then(|s| s.with("q2", tcs, tcs))
                        .map_err(numerical)?;
                    if let CouplerVariant::Coherence { t1, t2 } = v {
                        spec = spec.with("c", t1, t2).map_err(numerical)?;
                    }
                    let res = run_protocol(
                        &sched,
                        &ctx.params,
                        &Mode::Lindblad(spec),
                        ctx.model().into(),
                        &ctx.run_options(),
                    )
                    .map_err(numerical)?;
                    Ok(vec![
                        v.label(),
                        f(tc),
                        f(duration),
                        f(res.delta_e / MHZ),
                        f(res.delta_e.abs() / MHZ),
                        ctx.mha(res.delta_e),
                        f(res.fidelity),
                    ])
                }),
            });
        }
    }
    Ok(out)
}

/// Resolves the worker count: explicit value, else `PARAMSIM_WORKERS`, else all cores.
pub fn resolve_workers(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| {
            std::env::var("PARAMSIM_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Runs `command` and writes `<out>/<command>.csv` and `<out>/<command>.manifest.json`.
pub fn run(
    command: Command,
    cfg: RunConfig,
    inv: Invocation,
    out_dir: &Path,
) -> Result<RunOutcome, CliError> {
    crate::config::require(&cfg, command.name())?;
    let started = chrono::Utc::now();
    let clock = Instant::now();
    let params = cfg.device.params();
    params.validate().map_err(|e| {
        CliError::Config(ConfigErrors(vec![crate::config::Violation::InvalidValue {
            section: "device".into(),
            key: "device".into(),
            line: None,
            message: e.to_string(),
        }]))
    })?;
    let table = match &cfg.molecule {
        Some(m) => Some(MoleculeTable::from_path(&m.table).map_err(|e| {
            CliError::Config(ConfigErrors(vec![crate::config::Violation::InvalidValue {
                section: "molecule".into(),
                key: "table".into(),
                line: None,
                message: e.to_string(),
            }]))
        })?),
        None => None,
    };

    let mut extra = BTreeMap::new();
    extra.insert("command".to_string(), command.name().to_string());
    extra.insert("calibrate".to_string(), inv.calibrate.to_string());
    extra.insert("full_lindblad".to_string(), inv.full_lindblad.to_string());
    if let Some(m) = inv.model {
        extra.insert("model".to_string(), format!("{m:?}").to_lowercase());
    }
    if let Some(m) = &cfg.molecule {
        let bytes = std::fs::read(&m.table).map_err(|e| CliError::Io(e.to_string()))?;
        extra.insert("molecule_table_sha256".to_string(), sha_hex(&bytes));
    }
    let canonical = canonical_json(&cfg, &extra);
    let hash = sha_hex(canonical.as_bytes());

    let ctx = std::sync::Arc::new(Context {
        cfg,
        inv: inv.clone(),
        params,
        table,
    });
    let points = match command {
        Command::Couplings => couplings_points(&ctx)?,
        Command::Gate => gate_points(&ctx),
        Command::Anneal => anneal_points(&ctx, false)?,
        Command::AnnealSweep => anneal_points(&ctx, true)?,
        Command::ToptScan => topt_points(&ctx)?,
        Command::CoherenceSweep => coherence_points(&ctx)?,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(inv.workers.max(1))
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let results: Vec<(Result<Vec<String>, String>, f64)> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let t0 = Instant::now();
                let r = (p.work)();
                if let Err(e) = &r {
                    log::warn!("point {} failed: {e}", p.label);
                }
                (r, t0.elapsed().as_secs_f64())
            })
            .collect()
    });

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let csv_path = out_dir.join(format!("{}.csv", command.name()));
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| CliError::Io(e.to_string()))?;
    w.write_record(command.header())
        .map_err(|e| CliError::Io(e.to_string()))?;

    let mut records = Vec::with_capacity(points.len());
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for (i, (p, (r, wall))) in points.iter().zip(results).enumerate() {
        match r {
            Ok(cols) => {
                rows.push((i, cols));
                records.push(PointRecord {
                    index: i,
                    label: p.label.clone(),
                    status: "ok",
                    error: None,
                    wall_seconds: wall,
                });
            }
            Err(e) => records.push(PointRecord {
                index: i,
                label: p.label.clone(),
                status: "failed",
                error: Some(e),
                wall_seconds: wall,
            }),
        }
    }

    let mut summary = BTreeMap::new();
    if command == Command::ToptScan {
        let best = rows
            .iter()
            .filter_map(|(i, c)| c[1].parse::<f64>().ok().map(|fid| (*i, fid, c[0].clone())))
            .fold(None::<(usize, f64, String)>, |acc, x| match acc {
                Some(a) if a.1 >= x.1 => Some(a),
                _ => Some(x),
            });
        for (i, cols) in rows.iter_mut() {
            cols.push(
                best.as_ref()
                    .map(|b| b.0 == *i)
                    .unwrap_or(false)
                    .to_string(),
            );
        }
        if let Some((_, fid, t)) = best {
            summary.insert(
                "t_opt_us".into(),
                serde_json::json!(t.parse::<f64>().unwrap_or(f64::NAN)),
            );
            summary.insert("f_opt".into(), serde_json::json!(fid));
        }
    }
    if command == Command::CoherenceSweep {
        if let Some(t) = &ctx.table {
            if t.scale_mha_per_mhz.is_some() {
                let mut crossings = BTreeMap::new();
                for v in CouplerVariant::standard() {
                    let pts: Vec<(f64, f64)> = rows
                        .iter()
                        .filter(|(_, c)| c[0] == v.label())
                        .filter_map(|(_, c)| Some((c[1].parse().ok()?, c[5].parse().ok()?)))
                        .collect();
                    crossings.insert(
                        v.label(),
                        chemical_accuracy_crossing(&pts, CHEMICAL_ACCURACY_MHA),
                    );
                }
                summary.insert(
                    "chemical_accuracy_t_coh_us".into(),
                    serde_json::json!(crossings),
                );
            }
        }
    }

    for (i, cols) in &rows {
        let mut rec = vec![hash.clone(), i.to_string()];
        rec.extend(cols.iter().cloned());
        w.write_record(&rec)
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;

    let failed = records.iter().filter(|r| r.status == "failed").count();
    let manifest = Manifest {
        command: command.name().into(),
        config_hash: hash,
        config: serde_json::from_str(&canonical).expect("canonical json"),
        version: env!("CARGO_PKG_VERSION").into(),
        started: started.to_rfc3339(),
        finished: chrono::Utc::now().to_rfc3339(),
        wall_seconds: clock.elapsed().as_secs_f64(),
        workers: inv.workers.max(1),
        csv: csv_path.clone(),
        points: records,
        summary,
    };
    let manifest_path = out_dir.join(format!("{}.manifest.json", command.name()));
    let text = serde_json::to_string_pretty(&manifest).expect("serialisable manifest");
    std::fs::write(&manifest_path, text).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(RunOutcome {
        csv: csv_path,
        manifest: manifest_path,
        failed_points: failed,
    })
}
