//! Tables, scalars and the files they are written to.

use std::fs;
use std::path::{Path, PathBuf};

use gem_xpm::tomography::{split_parts, ChoiMatrix};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

/// A numeric table with named, unit-tagged columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub stem: String,
    pub(crate) columns: Vec<Column>,
    pub(crate) rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(stem: &str, columns: &[(&str, &str)]) -> Self {
        Self {
            stem: stem.to_string(),
            columns: columns
                .iter()
                .map(|(n, u)| Column {
                    name: n.to_string(),
                    unit: u.to_string(),
                })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_columns(stem: &str, columns: Vec<Column>) -> Self {
        Self {
            stem: stem.to_string(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table `{}`", self.stem);
        self.rows.push(row);
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c.name == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Header and rows as CSV, without provenance.
    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| format!("{v:.16e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("ascii"))
    }
}

/// A named result with its unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scalar {
    pub name: String,
    /// `None` when the quantity is undefined for this run.
    pub value: Option<f64>,
    pub unit: String,
}

impl Scalar {
    pub fn new(name: &str, value: f64, unit: &str) -> Self {
        Self {
            name: name.to_string(),
            value: Some(value),
            unit: unit.to_string(),
        }
    }

    pub fn maybe(name: &str, value: Option<f64>, unit: &str) -> Self {
        Self {
            name: name.to_string(),
            value,
            unit: unit.to_string(),
        }
    }
}

/// Everything one experiment produces.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub scalars: Vec<Scalar>,
    pub chois: Vec<(String, ChoiMatrix, serde_json::Value)>,
}

impl RunOutput {
    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|s| s.name == name).and_then(|s| s.value)
    }

    pub fn table(&self, stem: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.stem == stem)
    }
}

/// Run metadata written at the head of every CSV.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub version: String,
    pub config_sha256: String,
    pub wall_time_s: f64,
    pub units: String,
    pub seed: Option<u64>,
}

impl Provenance {
    fn header(&self) -> String {
        let mut s = format!(
            "# gemxpm {}\n# config sha256 {}\n# wall time {:.3} s\n# units {}\n",
            self.version, self.config_sha256, self.wall_time_s, self.units
        );
        if let Some(seed) = self.seed {
            s.push_str(&format!("# seed {seed}\n"));
        }
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Drop `#` comment lines, leaving header and data.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| [l, "\n"])
        .collect()
}

fn units_line(table: &Table) -> String {
    table
        .columns
        .iter()
        .map(|c| format!("{}[{}]", c.name, c.unit))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_table(dir: &Path, table: &Table, prov: &Provenance) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("{}.csv", table.stem));
    let text = format!("{}# columns {}\n{}", prov.header(), units_line(table), table.to_csv()?);
    fs::write(&path, text)?;
    Ok(path)
}

fn matrix_table(stem: &str, m: &gem_xpm::lindblad::CMatrix, part: usize) -> Table {
    let (re, im) = split_parts(m);
    let src = if part == 0 { re } else { im };
    let names: Vec<String> = (0..src.ncols()).map(|c| format!("c{c}")).collect();
    let cols: Vec<(&str, &str)> = names.iter().map(|n| (n.as_str(), "1")).collect();
    let mut t = Table::new(stem, &cols);
    for r in 0..src.nrows() {
        t.push(src.row(r).iter().copied().collect());
    }
    t
}

/// Real part, imaginary part and a JSON sidecar for one Choi matrix.
pub fn write_choi(
    dir: &Path,
    stem: &str,
    chi: &ChoiMatrix,
    extra: &serde_json::Value,
    prov: &Provenance,
) -> Result<Vec<PathBuf>, CliError> {
    let re = write_table(dir, &matrix_table(&format!("{stem}_re"), chi.matrix(), 0), prov)?;
    let im = write_table(dir, &matrix_table(&format!("{stem}_im"), chi.matrix(), 1), prov)?;
    let sidecar = dir.join(format!("{stem}.json"));
    let doc = json!({
        "layout": "chi[(4 i + a, 4 j + b)] = L(|i><j|)[a, b] / 4, input index first",
        "eigenvalues": chi.eigenvalues(),
        "cptp": chi.report,
        "is_cp": chi.report.is_cp(),
        "is_tp": chi.report.is_tp(),
        "details": extra,
    });
    fs::write(&sidecar, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(vec![re, im, sidecar])
}

/// Write every table, Choi export, the config echo and `summary.json`.
pub fn write_outputs(
    dir: &Path,
    output: &RunOutput,
    config_echo: &serde_json::Value,
    config_toml: &str,
    prov: &Provenance,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for t in &output.tables {
        files.push(write_table(dir, t, prov)?);
    }
    for (stem, chi, extra) in &output.chois {
        files.extend(write_choi(dir, stem, chi, extra, prov)?);
    }
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, config_toml)?;
    files.push(cfg_path);
    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let summary = json!({
        "provenance": prov,
        "config": config_echo,
        "scalars": output.scalars,
        "files": names,
    });
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
    files.push(path);
    Ok(files)
}
