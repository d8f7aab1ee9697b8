use std::f64::consts::PI;
use std::io::Read;

use super::{AdiabaticError, Result, TargetHamiltonian};

/// Chemical accuracy in mHa.
pub const CHEMICAL_ACCURACY_MHA: f64 = 1.5;

const MHZ: f64 = 2.0 * PI * 1e6;

#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize)]
pub struct MoleculeRow {
    #[serde(rename = "R_angstrom")]
    pub r_angstrom: f64,
    #[serde(rename = "Ay_mhz")]
    pub ay_mhz: f64,
    #[serde(rename = "Jx_mhz")]
    pub jx_mhz: f64,
    #[serde(rename = "Jy_mhz")]
    pub jy_mhz: f64,
}

impl MoleculeRow {
    /// Coefficients in rad/s.
    pub fn target(&self) -> TargetHamiltonian {
        TargetHamiltonian::h2(self.ay_mhz * MHZ, self.jx_mhz * MHZ, self.jy_mhz * MHZ)
    }
}

/// Molecular coefficient table, rows ordered by bond length.
#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeTable {
    pub rows: Vec<MoleculeRow>,
    /// mHa per MHz of target-Hamiltonian energy (`E/2π`).
    pub scale_mha_per_mhz: Option<f64>,
}

const SCALE_KEY: &str = "scale_mha_per_mhz";

impl MoleculeTable {
    /// Reads CSV with the header `R_angstrom,Ay_mhz,Jx_mhz,Jy_mhz`. Lines
    /// starting with `#` are comments; `# scale_mha_per_mhz = x` sets the scale.
    pub fn from_reader(mut reader: impl Read) -> Result<Self> {
        let mut text = String::new();
        reader
            .read_to_string(&mut text)
            .map_err(|e| AdiabaticError::Table(e.to_string()))?;
        let mut scale = None;
        for line in text.lines().filter_map(|l| l.trim().strip_prefix('#')) {
            if let Some((k, v)) = line.split_once('=') {
                if k.trim() == SCALE_KEY {
                    let x: f64 = v.trim().parse().map_err(|_| {
                        AdiabaticError::Table(format!("bad {SCALE_KEY} value {:?}", v.trim()))
                    })?;
                    scale = Some(x);
                }
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| AdiabaticError::Table(e.to_string()))?
            .clone();
        let expected = ["R_angstrom", "Ay_mhz", "Jx_mhz", "Jy_mhz"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(AdiabaticError::Table(format!(
                "header must be {}, found {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            let row: MoleculeRow = rec.map_err(|e| AdiabaticError::Table(e.to_string()))?;
            rows.push(row);
        }
        let table = Self {
            rows,
            scale_mha_per_mhz: scale,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let p = path.as_ref();
        let f = std::fs::File::open(p)
            .map_err(|e| AdiabaticError::Table(format!("{}: {e}", p.display())))?;
        Self::from_reader(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(AdiabaticError::Table("table has no rows".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if ![r.r_angstrom, r.ay_mhz, r.jx_mhz, r.jy_mhz]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(AdiabaticError::Table(format!(
                    "row {} has non-finite values",
                    i + 1
                )));
            }
        }
        if let Some(w) = self
            .rows
            .windows(2)
            .position(|w| w[1].r_angstrom <= w[0].r_angstrom)
        {
            return Err(AdiabaticError::Table(format!(
                "R must be strictly increasing (row {})",
                w + 2
            )));
        }
        if let Some(s) = self.scale_mha_per_mhz {
            if !(s > 0.0 && s.is_finite()) {
                return Err(AdiabaticError::Table(format!(
                    "{SCALE_KEY} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Converts an energy in rad/s to mHa.
    pub fn to_mha(&self, energy: f64) -> Option<f64> {
        self.scale_mha_per_mhz.map(|s| energy / MHZ * s)
    }
}
