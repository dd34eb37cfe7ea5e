//! In-memory output files, written in one ordered pass.

use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

/// 17 significant digits; non-finite values as `nan`, `inf`, `-inf`.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn add_csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::io(name, std::io::Error::other(e));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(name, e.into_error()))?;
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes =
            serde_json::to_vec_pretty(value).map_err(|e| CliError::io(name, std::io::Error::other(e)))?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    pub fn write_all(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}
