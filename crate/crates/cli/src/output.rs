//! Artifact writers. Numbers go out with 17 significant digits so a rerun
//! reproduces every file byte for byte.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Round-trip formatting of an `f64`.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct CsvFile {
    path: PathBuf,
    out: BufWriter<File>,
    columns: usize,
}

impl CsvFile {
    pub fn create(path: &Path, header: &[&str]) -> CliResult<Self> {
        let file = File::create(path).map_err(CliError::io(path))?;
        let mut csv = CsvFile { path: path.to_path_buf(), out: BufWriter::new(file), columns: header.len() };
        csv.line(&header.join(","))?;
        Ok(csv)
    }

    pub fn row(&mut self, values: &[f64]) -> CliResult<()> {
        debug_assert_eq!(values.len(), self.columns);
        let line: Vec<String> = values.iter().map(|&v| fmt_num(v)).collect();
        self.line(&line.join(","))
    }

    /// A row whose first column is text.
    pub fn labeled_row(&mut self, label: &str, values: &[f64]) -> CliResult<()> {
        debug_assert_eq!(values.len() + 1, self.columns);
        let mut line = String::from(label);
        for &v in values {
            line.push(',');
            line.push_str(&fmt_num(v));
        }
        self.line(&line)
    }

    fn line(&mut self, s: &str) -> CliResult<()> {
        writeln!(self.out, "{s}").map_err(CliError::io(&self.path))
    }

    pub fn finish(mut self) -> CliResult<PathBuf> {
        self.out.flush().map_err(CliError::io(&self.path))?;
        Ok(self.path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))?;
    Ok(path.to_path_buf())
}

/// Reads a one-column list of numbers; a leading non-numeric line is taken
/// as a header. Extra columns after the first are ignored.
pub fn read_points(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let first = line.split(',').next().unwrap_or("").trim();
        match first.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(v) => return Err(CliError::Validation(format!("{}:{}: non-finite point {v}", path.display(), k + 1))),
            Err(_) if out.is_empty() && k == 0 => continue,
            Err(_) => return Err(CliError::Validation(format!("{}:{}: '{first}' is not a number", path.display(), k + 1))),
        }
    }
    if out.is_empty() {
        return Err(CliError::Validation(format!("{}: no points", path.display())));
    }
    Ok(out)
}
