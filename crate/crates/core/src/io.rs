//! Deterministic CSV tables and atomic file writes.

use crate::error::Result;
use crate::radial_pde::PdeRun;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Formats a float with the shortest representation that round-trips,
/// switching to scientific notation for very small or large magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || x.is_nan() || x.is_infinite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// In-memory CSV table with an optional `#` comment line before the header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub preamble: Option<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            preamble: None,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_preamble(mut self, preamble: impl Into<String>) -> Self {
        self.preamble = Some(preamble.into());
        self
    }

    pub fn push_floats(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| fmt_f64(*v)).collect());
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// Comma separated, LF line endings.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        if let Some(p) = &self.preamble {
            writeln!(out, "# {p}")?;
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp.{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Profile snapshots, one row per (t, r).
pub fn profile_table(run: &PdeRun) -> CsvTable {
    let mut t = CsvTable::new(&["t", "r", "f"]);
    for p in &run.profiles {
        for (r, v) in run.grid.nodes.iter().zip(&p.values) {
            t.push_floats(&[p.t, *r, *v]);
        }
    }
    t
}

/// Observable series, one row per sample time.
pub fn observables_table(run: &PdeRun) -> CsvTable {
    let mut t = CsvTable::new(&[
        "t",
        "energy",
        "seminorm_minus",
        "seminorm_plus",
        "A_t",
        "mass",
    ]);
    for i in 0..run.times.len() {
        t.push_floats(&[
            run.times[i],
            run.energy[i],
            run.seminorm_minus[i],
            run.seminorm_plus[i],
            run.amplitude[i],
            run.mass[i],
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_bytes_are_stable() {
        let mut t = CsvTable::new(&["a", "b"]).with_preamble("format_version=1");
        t.push_floats(&[0.5, 1e-9]);
        t.push_floats(&[-2.0, f64::NAN]);
        let s = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert_eq!(s, "# format_version=1\na,b\n0.5,1e-9\n-2,NaN\n");
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -7.5e-5, 123456.789] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
