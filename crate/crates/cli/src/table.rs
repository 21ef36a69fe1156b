//! Comma-delimited tables with a schema comment line and a header row.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use modcomp::harness::Strategy;

use crate::error::{config_err, Result};

pub const SWEEP_SCHEMA: &str = "# modcomp-sweep/1";
pub const COMPARISON_SCHEMA: &str = "# modcomp-strategies/1";
pub const SUMMARY_SCHEMA: &str = "# modcomp-sweep-summary/1";

/// Columns preceding the per-strategy block.
pub const SWEEP_HEAD: &[&str] = &[
    "param",
    "value",
    "seed",
    "i_xz",
    "i_x_yz",
    "i_z_yx",
    "i_sy",
    "gamma_x_raw",
    "gamma_x",
    "gamma_z_raw",
    "gamma_z",
    "metric_pair",
    "metric_subset",
    "undefined",
];

/// Columns following the per-strategy block.
pub const SWEEP_TAIL: &[&str] = &["seconds", "error"];

/// Clean accuracy, per-modality missing accuracies and robustness ratio of
/// one trained strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyCell {
    pub clean: f64,
    pub missing: Vec<f64>,
    pub ratio: f64,
}

/// One (grid value, seed) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub seed: u64,
    pub i_xz: Option<f64>,
    pub i_x_yz: Option<f64>,
    pub i_z_yx: Option<f64>,
    pub i_sy: Option<f64>,
    pub gamma_x_raw: Option<f64>,
    pub gamma_x: Option<f64>,
    pub gamma_z_raw: Option<f64>,
    pub gamma_z: Option<f64>,
    pub metric_pair: Option<f64>,
    pub metric_subset: Option<f64>,
    pub undefined: Option<bool>,
    /// Aligned with the sweep's strategy list; `None` when that strategy
    /// failed or was skipped.
    pub strategies: Vec<Option<StrategyCell>>,
    pub seconds: f64,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn failed(param: &str, value: f64, seed: u64, n_strategies: usize, err: String) -> Self {
        SweepRow {
            param: param.to_string(),
            value,
            seed,
            i_xz: None,
            i_x_yz: None,
            i_z_yx: None,
            i_sy: None,
            gamma_x_raw: None,
            gamma_x: None,
            gamma_z_raw: None,
            gamma_z: None,
            metric_pair: None,
            metric_subset: None,
            undefined: None,
            strategies: vec![None; n_strategies],
            seconds: 0.0,
            error: Some(err),
        }
    }
}

pub fn sweep_header(strategies: &[Strategy]) -> Vec<String> {
    let mut h: Vec<String> = SWEEP_HEAD.iter().map(|s| s.to_string()).collect();
    for s in strategies {
        for suffix in ["clean", "missing", "ratio"] {
            h.push(format!("{}_{suffix}", s.name()));
        }
    }
    h.extend(SWEEP_TAIL.iter().map(|s| s.to_string()));
    h
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| config_err(format!("bad number {s:?} in table")))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(vec![]);
    }
    s.split(';')
        .map(|v| {
            v.parse()
                .map_err(|_| config_err(format!("bad number {v:?} in table")))
        })
        .collect()
}

impl SweepRow {
    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.param.clone(),
            self.value.to_string(),
            self.seed.to_string(),
        ];
        for v in [
            self.i_xz,
            self.i_x_yz,
            self.i_z_yx,
            self.i_sy,
            self.gamma_x_raw,
            self.gamma_x,
            self.gamma_z_raw,
            self.gamma_z,
            self.metric_pair,
            self.metric_subset,
        ] {
            r.push(fmt(v));
        }
        r.push(self.undefined.map(|u| u.to_string()).unwrap_or_default());
        for cell in &self.strategies {
            match cell {
                Some(c) => {
                    r.push(c.clean.to_string());
                    r.push(
                        c.missing
                            .iter()
                            .map(|v| v.to_string())
                            .collect::<Vec<_>>()
                            .join(";"),
                    );
                    r.push(c.ratio.to_string());
                }
                None => r.extend([String::new(), String::new(), String::new()]),
            }
        }
        r.push(self.seconds.to_string());
        r.push(self.error.clone().unwrap_or_default());
        r
    }

    fn from_record(rec: &csv::StringRecord, n_strategies: usize) -> Result<Self> {
        let expected = SWEEP_HEAD.len() + 3 * n_strategies + SWEEP_TAIL.len();
        if rec.len() != expected {
            return Err(config_err(format!(
                "table row has {} fields, header implies {expected}",
                rec.len()
            )));
        }
        let f = |i: usize| parse_opt(&rec[i]);
        let mut strategies = Vec::with_capacity(n_strategies);
        let base = SWEEP_HEAD.len();
        for k in 0..n_strategies {
            let c = base + 3 * k;
            strategies.push(match (f(c)?, f(c + 2)?) {
                (Some(clean), Some(ratio)) => Some(StrategyCell {
                    clean,
                    missing: parse_list(&rec[c + 1])?,
                    ratio,
                }),
                _ => None,
            });
        }
        let tail = base + 3 * n_strategies;
        Ok(SweepRow {
            param: rec[0].to_string(),
            value: f(1)?.ok_or_else(|| config_err("row without a value"))?,
            seed: rec[2]
                .parse()
                .map_err(|_| config_err(format!("bad seed {:?}", &rec[2])))?,
            i_xz: f(3)?,
            i_x_yz: f(4)?,
            i_z_yx: f(5)?,
            i_sy: f(6)?,
            gamma_x_raw: f(7)?,
            gamma_x: f(8)?,
            gamma_z_raw: f(9)?,
            gamma_z: f(10)?,
            metric_pair: f(11)?,
            metric_subset: f(12)?,
            undefined: match &rec[13] {
                "" => None,
                s => Some(s == "true"),
            },
            strategies,
            seconds: f(tail)?.unwrap_or(0.0),
            error: Some(rec[tail + 1].to_string()).filter(|s| !s.is_empty()),
        })
    }
}

/// Strategy names encoded in a sweep header.
fn strategies_in_header(header: &csv::StringRecord) -> Result<Vec<Strategy>> {
    let n = header.len();
    if n < SWEEP_HEAD.len() + SWEEP_TAIL.len() || !(n - SWEEP_HEAD.len() - SWEEP_TAIL.len()).is_multiple_of(3)
    {
        return Err(config_err("sweep table header has an unexpected shape"));
    }
    let k = (n - SWEEP_HEAD.len() - SWEEP_TAIL.len()) / 3;
    (0..k)
        .map(|i| {
            let col = &header[SWEEP_HEAD.len() + 3 * i];
            col.strip_suffix("_clean")
                .ok_or_else(|| config_err(format!("unexpected column {col}")))?
                .parse()
                .map_err(|e: modcomp::Error| config_err(e.to_string()))
        })
        .collect()
}

/// Reads a sweep table; returns the strategy list from its header and the
/// rows in file order. A truncated final line (from an interrupted run) is
/// ignored.
pub fn read_sweep(path: &Path) -> Result<(Vec<Strategy>, Vec<SweepRow>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines: Vec<&str> = text.lines().collect();
    if !text.ends_with('\n') {
        lines.pop();
    }
    if lines.first() != Some(&SWEEP_SCHEMA) {
        return Err(config_err(format!(
            "{} does not start with {SWEEP_SCHEMA}",
            path.display()
        )));
    }
    let body = lines[1..].join("\n");
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    let header = rdr.headers()?.clone();
    let strategies = strategies_in_header(&header)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(SweepRow::from_record(&rec?, strategies.len())?);
    }
    Ok((strategies, rows))
}

fn csv_line(fields: &[String]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(fields)?;
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("utf-8 fields"))
}

/// Append-only sweep table: every row is flushed as soon as it is written.
pub struct SweepWriter {
    file: File,
}

impl SweepWriter {
    /// Opens `path` for appending, writing the schema line and header when
    /// the file is new or empty. An existing table must have the same
    /// header.
    pub fn open(path: &Path, strategies: &[Strategy]) -> Result<Self> {
        let header = sweep_header(strategies);
        let exists = path.metadata().map(|m| m.len() > 0).unwrap_or(false);
        if exists {
            let f = BufReader::new(File::open(path)?);
            let mut lines = f.lines();
            let schema = lines.next().transpose()?.unwrap_or_default();
            let head = lines.next().transpose()?.unwrap_or_default();
            if schema != SWEEP_SCHEMA || head != csv_line(&header)?.trim_end() {
                return Err(config_err(format!(
                    "{} exists with a different schema or header",
                    path.display()
                )));
            }
            // Drop a partial final line left by an interrupted run.
            let text = std::fs::read_to_string(path)?;
            if !text.ends_with('\n') {
                let keep = text.rfind('\n').map_or(0, |i| i + 1);
                std::fs::write(path, &text[..keep])?;
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if !exists {
            writeln!(file, "{SWEEP_SCHEMA}")?;
            file.write_all(csv_line(&header)?.as_bytes())?;
            file.flush()?;
        }
        Ok(SweepWriter { file })
    }

    pub fn append(&mut self, row: &SweepRow) -> Result<()> {
        self.file.write_all(csv_line(&row.record())?.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

/// Writes a complete table (schema line, header, rows) atomically.
pub fn write_table(path: &Path, schema: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(schema);
    out.push('\n');
    out.push_str(&csv_line(header)?);
    for r in rows {
        out.push_str(&csv_line(r)?);
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, out)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_sweep(path: &Path, strategies: &[Strategy], rows: &[SweepRow]) -> Result<()> {
    let recs: Vec<Vec<String>> = rows.iter().map(SweepRow::record).collect();
    write_table(path, SWEEP_SCHEMA, &sweep_header(strategies), &recs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(value: f64, seed: u64) -> SweepRow {
        SweepRow {
            i_xz: Some(0.25),
            metric_pair: Some(1.5),
            undefined: Some(false),
            strategies: vec![
                Some(StrategyCell {
                    clean: 0.9,
                    missing: vec![0.5, 0.625],
                    ratio: 0.625,
                }),
                None,
            ],
            seconds: 1.25,
            error: None,
            ..SweepRow::failed("alpha", value, seed, 2, String::new())
        }
    }

    #[test]
    fn rows_round_trip_and_resume_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let strategies = [Strategy::Naive, Strategy::UmeMma];
        let mut w = SweepWriter::open(&path, &strategies).unwrap();
        w.append(&row(0.0, 1)).unwrap();
        drop(w);
        let mut failed = SweepRow::failed("alpha", 0.5, 2, 2, "term I(X;Z): boom, \"quoted\"".into());
        failed.seconds = 0.5;
        let mut w = SweepWriter::open(&path, &strategies).unwrap();
        w.append(&failed).unwrap();
        let (s, rows) = read_sweep(&path).unwrap();
        assert_eq!(s, strategies);
        assert_eq!(rows, vec![row(0.0, 1), failed]);
        assert!(SweepWriter::open(&path, &[Strategy::Naive]).is_err());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(SWEEP_SCHEMA));
    }

    #[test]
    fn truncated_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let mut w = SweepWriter::open(&path, &[]).unwrap();
        w.append(&row_without_strategies()).unwrap();
        drop(w);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"alpha,0.5,3,0.1").unwrap();
        assert_eq!(read_sweep(&path).unwrap().1.len(), 1);
        SweepWriter::open(&path, &[]).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().ends_with('\n'));
    }

    fn row_without_strategies() -> SweepRow {
        SweepRow {
            strategies: vec![],
            ..row(0.25, 0)
        }
    }
}
