//! Columnar text files: `#` header lines, then CSV with a column-name row.

use std::io::Write;
use std::path::Path;

use crate::error::CliError;

/// Header block written before every table.
pub struct Header {
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub extra: Vec<(String, String)>,
}

impl Header {
    pub fn new(command: &'static str, config_hash: String, seed: u64) -> Self {
        Self {
            command,
            config_hash,
            seed,
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }

    pub fn write(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "# nvspin {}", self.command)?;
        writeln!(out, "# config_hash = {}", self.config_hash)?;
        writeln!(out, "# seed = {}", self.seed)?;
        for (k, v) in &self.extra {
            writeln!(out, "# {k} = {v}")?;
        }
        Ok(())
    }
}

pub fn write_table(out: &mut impl Write, header: &Header, columns: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    header.write(out)?;
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(columns).map_err(io)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// A parsed table: column names and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn parse_table(text: &str) -> Result<Table, CliError> {
    if text.lines().all(|l| l.trim().is_empty() || l.trim_start().starts_with('#')) {
        return Err(CliError::Usage("dataset file is empty".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Validation(format!("bad header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Validation(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != columns.len() {
            return Err(CliError::Validation(format!(
                "line {line}: expected {} fields, found {}",
                columns.len(),
                rec.len()
            )));
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(k, s)| {
                s.parse::<f64>()
                    .map_err(|_| CliError::Validation(format!("line {line}: column '{}': not a number: '{s}'", columns[k])))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Usage("dataset file has no data rows".into()));
    }
    Ok(Table { columns, rows })
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    parse_table(&text)
}

/// Write to `path`, or stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, body: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, body).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body)?;
            out.flush()?;
            Ok(())
        }
    }
}
