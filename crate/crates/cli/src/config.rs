//! Strict TOML run configuration with unit-suffixed keys.
//!
//! Parsing never stops at the first problem: every violation found in the
//! document is collected and reported together.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use paramsim::adiabatic::{ModelChoice, TargetHamiltonian};
use paramsim::device::{CouplerParams, DeviceParams, QubitParams};
use paramsim::dynamics::LindbladSpec;
use paramsim::swt::FrequencySource;
use serde::Serialize;
use toml::{Table, Value};

const TWO_PI: f64 = 2.0 * PI;
const MHZ: f64 = TWO_PI * 1e6;
const GHZ: f64 = TWO_PI * 1e9;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Parse {
        line: Option<usize>,
        message: String,
    },
    MissingSection(String),
    UnknownSection {
        name: String,
        line: Option<usize>,
    },
    MissingKey {
        section: String,
        key: String,
    },
    UnknownKey {
        section: String,
        key: String,
        line: Option<usize>,
        hint: Option<String>,
    },
    InvalidValue {
        section: String,
        key: String,
        line: Option<usize>,
        message: String,
    },
    MissingFile {
        section: String,
        key: String,
        path: PathBuf,
    },
}

fn at(line: &Option<usize>) -> String {
    line.map(|l| format!(" (line {l})")).unwrap_or_default()
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Parse { line, message } => write!(f, "parse error{}: {message}", at(line)),
            Violation::MissingSection(s) => write!(f, "missing required section [{s}]"),
            Violation::UnknownSection { name, line } => {
                write!(f, "unknown section [{name}]{}", at(line))
            }
            Violation::MissingKey { section, key } => {
                write!(f, "[{section}] missing required key `{key}`")
            }
            Violation::UnknownKey {
                section,
                key,
                line,
                hint,
            } => {
                write!(f, "[{section}] unknown key `{key}`{}", at(line))?;
                if let Some(h) = hint {
                    write!(f, "; did you mean `{h}`?")?;
                }
                Ok(())
            }
            Violation::InvalidValue {
                section,
                key,
                line,
                message,
            } => {
                write!(f, "[{section}] `{key}`{}: {message}", at(line))
            }
            Violation::MissingFile { section, key, path } => {
                write!(
                    f,
                    "[{section}] `{key}`: file {} does not exist",
                    path.display()
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<Violation>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for v in &self.0 {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Unitary,
    Lindblad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKey {
    Full,
    Effective,
}

impl From<ModelKey> for ModelChoice {
    fn from(m: ModelKey) -> Self {
        match m {
            ModelKey::Full => ModelChoice::Full,
            ModelKey::Effective => ModelChoice::Effective,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKey {
    Analytic,
    Dressed,
}

impl From<SourceKey> for FrequencySource {
    fn from(s: SourceKey) -> Self {
        match s {
            SourceKey::Analytic => FrequencySource::Analytic,
            SourceKey::Dressed => FrequencySource::DressedAnalytic,
        }
    }
}

/// Device values as written in the file (GHz, MHz, Φ0).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceSection {
    pub q1_freq_ghz: f64,
    pub q2_freq_ghz: f64,
    pub q1_anharm_mhz: f64,
    pub q2_anharm_mhz: f64,
    pub q1_coupling_mhz: f64,
    pub q2_coupling_mhz: f64,
    pub coupler_freq_ghz: f64,
    pub coupler_anharm_mhz: f64,
    pub flux_bias_phi0: f64,
    pub levels: usize,
}

impl DeviceSection {
    pub fn params(&self) -> DeviceParams {
        let q = |f: f64, a: f64, g: f64| QubitParams {
            freq: f * GHZ,
            anharm: a * MHZ,
            coupling: g * MHZ,
            levels: self.levels,
        };
        DeviceParams {
            qubits: vec![
                q(self.q1_freq_ghz, self.q1_anharm_mhz, self.q1_coupling_mhz),
                q(self.q2_freq_ghz, self.q2_anharm_mhz, self.q2_coupling_mhz),
            ],
            coupler: CouplerParams {
                freq0: self.coupler_freq_ghz * GHZ,
                anharm: self.coupler_anharm_mhz * MHZ,
                levels: self.levels,
            },
            flux_bias: self.flux_bias_phi0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluxSection {
    pub tone_phases_rad: [f64; 2],
    pub source: SourceKey,
    /// Perturbative order at which `δ2` cancels `Ω_y` in gate runs (1 or 2).
    pub ising_order: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolSection {
    pub duration_us: f64,
    pub epsilon0_mhz: f64,
    pub model: ModelKey,
    pub mode: ModeKind,
    /// Single-run target; overridden per row by a molecule table.
    pub target_ay_mhz: Option<f64>,
    pub target_jx_mhz: Option<f64>,
    pub target_jy_mhz: Option<f64>,
    /// Table row used by `anneal`, `topt-scan` and `coherence-sweep`.
    pub row_r_angstrom: Option<f64>,
    pub step_ps: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherencePair {
    pub t1_us: f64,
    pub t2_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct DissipationSection {
    pub q1: Option<CoherencePair>,
    pub q2: Option<CoherencePair>,
    pub coupler: Option<CoherencePair>,
}

impl DissipationSection {
    pub fn spec(&self) -> paramsim::dynamics::Result<LindbladSpec> {
        let mut s = LindbladSpec::new();
        for (label, pair) in [("q1", self.q1), ("q2", self.q2), ("c", self.coupler)] {
            if let Some(p) = pair {
                s = s.with(label, p.t1_us * 1e-6, p.t2_us * 1e-6)?;
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SweepSection {
    pub d1_phi0: Vec<f64>,
    /// Empty: δ2 follows the Ising ratio.
    pub d2_phi0: Vec<f64>,
    pub durations_us: Vec<f64>,
    pub t_coh_us: Vec<f64>,
    pub gate_periods: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoleculeSection {
    pub table: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub device: DeviceSection,
    pub flux: FluxSection,
    pub protocol: Option<ProtocolSection>,
    pub dissipation: DissipationSection,
    pub sweep: SweepSection,
    pub molecule: Option<MoleculeSection>,
    /// Not part of the configuration hash.
    #[serde(skip)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn target(&self) -> Option<TargetHamiltonian> {
        let p = self.protocol.as_ref()?;
        Some(TargetHamiltonian::h2(
            p.target_ay_mhz? * MHZ,
            p.target_jx_mhz.unwrap_or(0.0) * MHZ,
            p.target_jy_mhz.unwrap_or(0.0) * MHZ,
        ))
    }
}

/// Key schema: name and whether it is required.
struct Schema {
    section: &'static str,
    required: bool,
    keys: &'static [(&'static str, bool)],
}

const SCHEMA: &[Schema] = &[
    Schema {
        section: "device",
        required: true,
        keys: &[
            ("q1_freq_ghz", true),
            ("q2_freq_ghz", true),
            ("q1_anharm_mhz", true),
            ("q2_anharm_mhz", true),
            ("q1_coupling_mhz", true),
            ("q2_coupling_mhz", true),
            ("coupler_freq_ghz", true),
            ("coupler_anharm_mhz", true),
            ("flux_bias_phi0", true),
            ("levels", false),
        ],
    },
    Schema {
        section: "flux",
        required: false,
        keys: &[
            ("tone_phases_rad", false),
            ("source", false),
            ("ising_order", false),
        ],
    },
    Schema {
        section: "protocol",
        required: false,
        keys: &[
            ("duration_us", true),
            ("epsilon0_mhz", true),
            ("model", false),
            ("mode", false),
            ("target_ay_mhz", false),
            ("target_jx_mhz", false),
            ("target_jy_mhz", false),
            ("row_r_angstrom", false),
            ("step_ps", false),
        ],
    },
    Schema {
        section: "dissipation",
        required: false,
        keys: &[
            ("q1_t1_us", false),
            ("q1_t2_us", false),
            ("q2_t1_us", false),
            ("q2_t2_us", false),
            ("coupler_t1_us", false),
            ("coupler_t2_us", false),
        ],
    },
    Schema {
        section: "sweep",
        required: false,
        keys: &[
            ("d1_phi0", false),
            ("d2_phi0", false),
            ("durations_us", false),
            ("t_coh_us", false),
            ("gate_periods", false),
        ],
    },
    Schema {
        section: "molecule",
        required: false,
        keys: &[("table", true)],
    },
    Schema {
        section: "output",
        required: true,
        keys: &[("dir", true)],
    },
];

/// 1-based line of `key = ...` inside `[section]`, or of the section header.
fn locate(src: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            if key.is_none() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if let Some(k) = key {
            if current == section {
                if let Some((lhs, _)) = line.split_once('=') {
                    if lhs.trim().trim_matches('"') == k {
                        return Some(i + 1);
                    }
                }
            }
        }
    }
    None
}

fn hint_for(key: &str, known: &[(&str, bool)]) -> Option<String> {
    known
        .iter()
        .map(|(k, _)| *k)
        .find(|k| k.starts_with(key) || k.contains(&format!("_{key}")))
        .map(str::to_string)
}

struct Reader<'a> {
    src: &'a str,
    base: &'a Path,
    errors: Vec<Violation>,
}

impl<'a> Reader<'a> {
    fn invalid(&mut self, section: &str, key: &str, message: impl Into<String>) {
        self.errors.push(Violation::InvalidValue {
            section: section.into(),
            key: key.into(),
            line: locate(self.src, section, Some(key)),
            message: message.into(),
        });
    }

    fn float(&mut self, t: &Table, section: &str, key: &str) -> Option<f64> {
        match t.get(key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.invalid(section, key, "expected a number");
                None
            }
        }
    }

    fn finite(&mut self, t: &Table, section: &str, key: &str) -> Option<f64> {
        let x = self.float(t, section, key)?;
        if x.is_finite() {
            Some(x)
        } else {
            self.invalid(section, key, "must be finite");
            None
        }
    }

    fn positive(&mut self, t: &Table, section: &str, key: &str) -> Option<f64> {
        let x = self.finite(t, section, key)?;
        if x > 0.0 {
            Some(x)
        } else {
            self.invalid(section, key, "must be positive");
            None
        }
    }

    fn floats(&mut self, t: &Table, section: &str, key: &str) -> Option<Vec<f64>> {
        let arr = match t.get(key)? {
            Value::Array(a) => a,
            _ => {
                self.invalid(section, key, "expected an array of numbers");
                return None;
            }
        };
        let mut out = Vec::with_capacity(arr.len());
        for v in arr {
            match v {
                Value::Float(x) if x.is_finite() => out.push(*x),
                Value::Integer(i) => out.push(*i as f64),
                _ => {
                    self.invalid(section, key, "expected an array of finite numbers");
                    return None;
                }
            }
        }
        Some(out)
    }

    fn choice<T: Copy>(
        &mut self,
        t: &Table,
        section: &str,
        key: &str,
        options: &[(&str, T)],
    ) -> Option<T> {
        let v = t.get(key)?;
        let s = match v.as_str() {
            Some(s) => s,
            None => {
                self.invalid(section, key, "expected a string");
                return None;
            }
        };
        match options.iter().find(|(n, _)| *n == s) {
            Some((_, x)) => Some(*x),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.invalid(
                    section,
                    key,
                    format!("{s:?} is not one of {}", names.join(", ")),
                );
                None
            }
        }
    }

    fn path(&mut self, t: &Table, section: &str, key: &str, must_exist: bool) -> Option<PathBuf> {
        let s = match t.get(key)?.as_str() {
            Some(s) => s,
            None => {
                self.invalid(section, key, "expected a path string");
                return None;
            }
        };
        let p = self.base.join(s);
        if must_exist && !p.exists() {
            self.errors.push(Violation::MissingFile {
                section: section.into(),
                key: key.into(),
                path: p,
            });
            return None;
        }
        Some(p)
    }
}

/// Parses and validates a configuration document. Relative paths resolve
/// against `base`.
pub fn parse_config_str(src: &str, base: &Path) -> Result<RunConfig, ConfigErrors> {
    let doc: Table = match src.parse() {
        Ok(d) => d,
        Err(e) => {
            let e: toml::de::Error = e;
            let line = e
                .span()
                .map(|s| src[..s.start.min(src.len())].lines().count().max(1));
            return Err(ConfigErrors(vec![Violation::Parse {
                line,
                message: e.message().to_string(),
            }]));
        }
    };
    let mut r = Reader {
        src,
        base,
        errors: Vec::new(),
    };
    let empty = Table::new();

    for (name, value) in &doc {
        let Some(schema) = SCHEMA.iter().find(|s| s.section == name) else {
            r.errors.push(Violation::UnknownSection {
                name: name.clone(),
                line: locate(src, name, None),
            });
            continue;
        };
        let Some(table) = value.as_table() else {
            r.errors.push(Violation::InvalidValue {
                section: name.clone(),
                key: name.clone(),
                line: locate(src, name, Some(name)),
                message: "expected a table".into(),
            });
            continue;
        };
        for key in table.keys() {
            if !schema.keys.iter().any(|(k, _)| k == key) {
                r.errors.push(Violation::UnknownKey {
                    section: name.clone(),
                    key: key.clone(),
                    line: locate(src, name, Some(key)),
                    hint: hint_for(key, schema.keys),
                });
            }
        }
    }
    for schema in SCHEMA {
        match doc.get(schema.section).and_then(Value::as_table) {
            None if schema.required => r
                .errors
                .push(Violation::MissingSection(schema.section.into())),
            None => {}
            Some(t) => {
                for (k, req) in schema.keys {
                    if *req && !t.contains_key(*k) {
                        r.errors.push(Violation::MissingKey {
                            section: schema.section.into(),
                            key: (*k).into(),
                        });
                    }
                }
            }
        }
    }
    let section = |n: &str| doc.get(n).and_then(Value::as_table);

    let dev = section("device").unwrap_or(&empty);
    let s = "device";
    let levels = match dev.get("levels") {
        None => Some(3),
        Some(Value::Integer(i)) if *i >= 2 && *i <= 6 => Some(*i as usize),
        Some(_) => {
            r.invalid(s, "levels", "must be an integer between 2 and 6");
            None
        }
    };
    let q1_freq = r.positive(dev, s, "q1_freq_ghz");
    let q2_freq = r.positive(dev, s, "q2_freq_ghz");
    let q1_anharm = r.finite(dev, s, "q1_anharm_mhz");
    let q2_anharm = r.finite(dev, s, "q2_anharm_mhz");
    let q1_g = r.positive(dev, s, "q1_coupling_mhz");
    let q2_g = r.positive(dev, s, "q2_coupling_mhz");
    let c_freq = r.positive(dev, s, "coupler_freq_ghz");
    let c_anharm = r.finite(dev, s, "coupler_anharm_mhz");
    let bias = r.finite(dev, s, "flux_bias_phi0");
    let device = (|| {
        Some(DeviceSection {
            q1_freq_ghz: q1_freq?,
            q2_freq_ghz: q2_freq?,
            q1_anharm_mhz: q1_anharm?,
            q2_anharm_mhz: q2_anharm?,
            q1_coupling_mhz: q1_g?,
            q2_coupling_mhz: q2_g?,
            coupler_freq_ghz: c_freq?,
            coupler_anharm_mhz: c_anharm?,
            flux_bias_phi0: bias?,
            levels: levels?,
        })
    })();
    if let Some(d) = &device {
        if !(d.flux_bias_phi0.abs() < 0.5) {
            r.invalid(s, "flux_bias_phi0", "must lie in (-0.5, 0.5)");
        }
    }

    let fl = section("flux").unwrap_or(&empty);
    let phases = match r.floats(fl, "flux", "tone_phases_rad") {
        None => [0.0, 0.0],
        Some(v) if v.len() == 2 => [v[0], v[1]],
        Some(_) => {
            r.invalid("flux", "tone_phases_rad", "expected two phases");
            [0.0, 0.0]
        }
    };
    let source = r
        .choice(
            fl,
            "flux",
            "source",
            &[
                ("analytic", SourceKey::Analytic),
                ("dressed", SourceKey::Dressed),
            ],
        )
        .unwrap_or(SourceKey::Dressed);
    let ising_order = match fl.get("ising_order") {
        None => 1,
        Some(Value::Integer(i)) if *i == 1 || *i == 2 => *i as u8,
        Some(_) => {
            r.invalid("flux", "ising_order", "must be 1 or 2");
            1
        }
    };
    let flux = FluxSection {
        tone_phases_rad: phases,
        source,
        ising_order,
    };

    let protocol = section("protocol").map(|p| {
        let s = "protocol";
        let duration = r.positive(p, s, "duration_us");
        let eps = r.positive(p, s, "epsilon0_mhz");
        let model = r
            .choice(
                p,
                s,
                "model",
                &[("effective", ModelKey::Effective), ("full", ModelKey::Full)],
            )
            .unwrap_or(ModelKey::Effective);
        let mode = r
            .choice(
                p,
                s,
                "mode",
                &[
                    ("unitary", ModeKind::Unitary),
                    ("lindblad", ModeKind::Lindblad),
                ],
            )
            .unwrap_or(ModeKind::Unitary);
        let ay = r.finite(p, s, "target_ay_mhz");
        let jx = r.finite(p, s, "target_jx_mhz");
        let jy = r.finite(p, s, "target_jy_mhz");
        let row = r.finite(p, s, "row_r_angstrom");
        let step = r.positive(p, s, "step_ps");
        ProtocolSection {
            duration_us: duration.unwrap_or(f64::NAN),
            epsilon0_mhz: eps.unwrap_or(f64::NAN),
            model,
            mode,
            target_ay_mhz: ay,
            target_jx_mhz: jx,
            target_jy_mhz: jy,
            row_r_angstrom: row,
            step_ps: step,
        }
    });

    let mut dissipation = DissipationSection::default();
    if let Some(d) = section("dissipation") {
        let s = "dissipation";
        for (who, slot) in [
            ("q1", &mut dissipation.q1),
            ("q2", &mut dissipation.q2),
            ("coupler", &mut dissipation.coupler),
        ] {
            let (k1, k2) = (format!("{who}_t1_us"), format!("{who}_t2_us"));
            let t1 = r.positive(d, s, &k1);
            let t2 = r.positive(d, s, &k2);
            match (d.contains_key(&k1), d.contains_key(&k2)) {
                (true, true) => {
                    if let (Some(t1), Some(t2)) = (t1, t2) {
                        if t2 > 2.0 * t1 {
                            r.invalid(
                                s,
                                &k2,
                                format!("T2 = {t2} us exceeds 2 T1 = {} us", 2.0 * t1),
                            );
                        } else {
                            *slot = Some(CoherencePair {
                                t1_us: t1,
                                t2_us: t2,
                            });
                        }
                    }
                }
                (false, false) => {}
                (true, false) => r.errors.push(Violation::MissingKey {
                    section: s.into(),
                    key: k2,
                }),
                (false, true) => r.errors.push(Violation::MissingKey {
                    section: s.into(),
                    key: k1,
                }),
            }
        }
    }

    let mut sweep = SweepSection {
        gate_periods: 2.2,
        ..Default::default()
    };
    if let Some(t) = section("sweep") {
        let s = "sweep";
        sweep.d1_phi0 = r.floats(t, s, "d1_phi0").unwrap_or_default();
        sweep.d2_phi0 = r.floats(t, s, "d2_phi0").unwrap_or_default();
        sweep.durations_us = r.floats(t, s, "durations_us").unwrap_or_default();
        sweep.t_coh_us = r.floats(t, s, "t_coh_us").unwrap_or_default();
        if let Some(g) = r.positive(t, s, "gate_periods") {
            sweep.gate_periods = g;
        }
        for (k, v) in [
            ("durations_us", &sweep.durations_us),
            ("t_coh_us", &sweep.t_coh_us),
        ] {
            if v.iter().any(|x| *x <= 0.0) {
                r.invalid(s, k, "all values must be positive");
            }
        }
    }

    let molecule = section("molecule")
        .and_then(|m| r.path(m, "molecule", "table", true))
        .map(|table| MoleculeSection { table });
    let output = section("output")
        .and_then(|o| r.path(o, "output", "dir", false))
        .map(|dir| OutputSection { dir });

    if !r.errors.is_empty() {
        return Err(ConfigErrors(r.errors));
    }
    Ok(RunConfig {
        device: device.expect("validated"),
        flux,
        protocol,
        dissipation,
        sweep,
        molecule,
        output: output.expect("validated"),
    })
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigErrors> {
    let src = std::fs::read_to_string(path).map_err(|e| {
        ConfigErrors(vec![Violation::Parse {
            line: None,
            message: format!("{}: {e}", path.display()),
        }])
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&src, base)
}

/// Per-subcommand requirements beyond the schema.
pub fn require(cfg: &RunConfig, command: &str) -> Result<(), ConfigErrors> {
    let mut errs = Vec::new();
    let missing = |s: &str, k: &str| Violation::MissingKey {
        section: s.into(),
        key: k.into(),
    };
    let needs_protocol = matches!(
        command,
        "anneal" | "anneal-sweep" | "topt-scan" | "coherence-sweep"
    );
    if needs_protocol && cfg.protocol.is_none() {
        errs.push(Violation::MissingSection("protocol".into()));
    }
    match command {
        "couplings" | "gate" if cfg.sweep.d1_phi0.is_empty() => {
            errs.push(missing("sweep", "d1_phi0"))
        }
        "anneal-sweep" if cfg.molecule.is_none() => {
            errs.push(Violation::MissingSection("molecule".into()))
        }
        "topt-scan" if cfg.sweep.durations_us.is_empty() => {
            errs.push(missing("sweep", "durations_us"))
        }
        "coherence-sweep" if cfg.sweep.t_coh_us.is_empty() => {
            errs.push(missing("sweep", "t_coh_us"))
        }
        _ => {}
    }
    if let Some(p) = &cfg.protocol {
        let single = matches!(command, "anneal" | "topt-scan" | "coherence-sweep");
        if single && p.target_ay_mhz.is_none() && p.row_r_angstrom.is_none() {
            errs.push(missing("protocol", "target_ay_mhz"));
        }
        if p.row_r_angstrom.is_some() && cfg.molecule.is_none() && single {
            errs.push(Violation::MissingSection("molecule".into()));
        }
        if command == "topt-scan" && p.mode != ModeKind::Lindblad {
            errs.push(Violation::InvalidValue {
                section: "protocol".into(),
                key: "mode".into(),
                line: None,
                message: "topt-scan needs mode = \"lindblad\"".into(),
            });
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(ConfigErrors(errs))
    }
}

/// Canonical, key-sorted JSON of the configuration.
pub fn canonical_json(cfg: &RunConfig, extra: &BTreeMap<String, String>) -> String {
    let mut v = serde_json::to_value(cfg).expect("serialisable config");
    if let serde_json::Value::Object(m) = &mut v {
        m.insert(
            "invocation".into(),
            serde_json::to_value(extra).expect("map"),
        );
    }
    // serde_json maps are ordered by key without the preserve_order feature
    serde_json::to_string(&v).expect("serialisable")
}
