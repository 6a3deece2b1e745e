use std::io::Write;
use std::path::Path;

use gpsimplify::Interpolant;

use crate::error::{CliError, CliResult};
use crate::output::{fmt_num, read_points};

pub fn load_interpolant(path: &Path) -> CliResult<Interpolant> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
}

/// Writes `u,value` lines for the `order`-th derivative of a saved
/// interpolant at every point listed in `points`.
pub fn evaluate(interpolant: &Path, points: &Path, order: u8, out: &mut impl Write) -> CliResult<()> {
    let interp = load_interpolant(interpolant)?;
    let us = read_points(points)?;
    let values = interp.evaluate_many(&us, order)?;
    let stdout = Path::new("<stdout>");
    writeln!(out, "u,value").map_err(CliError::io(stdout))?;
    for (u, v) in us.iter().zip(values) {
        writeln!(out, "{},{}", fmt_num(*u), fmt_num(v)).map_err(CliError::io(stdout))?;
    }
    Ok(())
}
