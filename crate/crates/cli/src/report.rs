//! Run reports and data files. Reports carry no wall time so that equal
//! inputs give byte-identical JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `le` when `value ≤ tolerance` passes, `ge` for `value ≥ tolerance`.
    pub relation: &'static str,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, relation: "le", passed: value <= tolerance }
    }

    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, relation: "ge", passed: value >= tolerance }
    }

    /// A yes/no condition, recorded as 1 or 0.
    pub fn holds(name: &str, ok: bool) -> Self {
        Self { name: name.into(), value: ok as u8 as f64, tolerance: 1.0, relation: "ge", passed: ok }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub inputs: Value,
    pub results: Value,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub files: Vec<String>,
}

impl RunReport {
    pub fn new(command: &str, seed: u64, inputs: Value) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            inputs,
            results: Value::Null,
            checks: Vec::new(),
            passed: true,
            files: Vec::new(),
        }
    }

    pub fn check(&mut self, c: Check) {
        self.passed &= c.passed;
        self.checks.push(c);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Single owner of everything written to the output directory.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.written.push(name.into());
        Ok(())
    }

    /// Whitespace-separated columns with a `#` header, readable by gnuplot.
    pub fn data(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let path = self.dir.join(name);
        let mut f = std::io::BufWriter::new(fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?);
        writeln!(f, "# {}", header.join(" "))?;
        for r in rows {
            let line: Vec<String> = r.iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        f.flush()?;
        self.written.push(name.into());
        Ok(())
    }

    /// Writes `<command>.json` and returns its path.
    pub fn finish(mut self, report: &mut RunReport) -> Result<PathBuf> {
        let name = format!("{}.json", report.command);
        self.written.push(name.clone());
        report.files = self.written;
        let path = self.dir.join(name);
        fs::write(&path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
