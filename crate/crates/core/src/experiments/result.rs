use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::Formatter;

use super::fmt_f64;
use crate::error::{invalid, Result};

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_f64(*x),
            Cell::Int(k) => k.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Int(k) => Some(*k as f64),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(k: usize) -> Self {
        Cell::Int(k as i64)
    }
}

impl From<u64> for Cell {
    fn from(k: u64) -> Self {
        Cell::Text(k.to_string())
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

/// A named table written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Series {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width of series `{}`", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[k]).collect())
    }

    /// Numeric column; non-numeric cells become NaN.
    pub fn numbers(&self, name: &str) -> Option<Vec<f64>> {
        Some(self.column(name)?.into_iter().map(|c| c.as_f64().unwrap_or(f64::NAN)).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

/// Output of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub experiment: String,
    pub scalars: BTreeMap<String, f64>,
    pub series: Vec<Series>,
    /// config echo, versions, classification report, notes
    pub metadata: serde_json::Map<String, serde_json::Value>,
    /// kept out of the summary so that reruns are byte-identical
    pub wall_time_s: f64,
}

impl ExperimentResult {
    pub fn new(experiment: &str) -> Self {
        Self {
            experiment: experiment.to_string(),
            scalars: BTreeMap::new(),
            series: Vec::new(),
            metadata: serde_json::Map::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_string(), value);
    }

    pub fn meta(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.metadata.insert(key.to_string(), v);
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    /// The summary document (everything except the series rows and timing).
    pub fn summary(&self) -> serde_json::Value {
        let series: Vec<serde_json::Value> = self
            .series
            .iter()
            .map(|s| {
                serde_json::json!({
                    "name": s.name,
                    "file": format!("{}.csv", s.name),
                    "columns": s.columns,
                    "rows": s.rows.len(),
                })
            })
            .collect();
        serde_json::json!({
            "experiment": self.experiment,
            "scalars": self.scalars,
            "series": series,
            "metadata": self.metadata,
        })
    }
}

/// Pretty JSON with fixed float formatting and a trailing newline.
/// Non-finite floats serialise as `null`.
pub fn to_json_string(value: &impl Serialize) -> Result<String> {
    let mut buf = Vec::new();
    {
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, PrettyFixed::default());
        value.serialize(&mut ser)?;
    }
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("json output is utf-8"))
}

/// serde_json's pretty printer with floats at 17 significant digits.
#[derive(Default)]
struct PrettyFixed<'a> {
    inner: serde_json::ser::PrettyFormatter<'a>,
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> std::io::Result<()> {
            self.inner.$name(writer $(, $arg)*)
        })*
    };
}

impl Formatter for PrettyFixed<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.json";

/// Writes one CSV per series, then `summary.json`, then `timing.json`.
///
/// A stale summary is removed first and the new one is written through a
/// temporary file, so an IO failure never leaves a partial summary behind.
pub fn emit(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut seen = std::collections::BTreeSet::new();
    for s in &result.series {
        if s.name.is_empty() || s.name.contains(['/', '\\']) || !seen.insert(&s.name) {
            return invalid(format!("bad or duplicate series name `{}`", s.name));
        }
    }
    fs::create_dir_all(dir)?;
    let summary_path = dir.join(SUMMARY_FILE);
    if summary_path.exists() {
        fs::remove_file(&summary_path)?;
    }
    let mut written = Vec::new();
    for s in &result.series {
        let path = dir.join(format!("{}.csv", s.name));
        fs::write(&path, s.to_csv()?)?;
        written.push(path);
    }
    let summary = to_json_string(&result.summary())?;
    let tmp = dir.join(format!("{SUMMARY_FILE}.tmp"));
    fs::write(&tmp, summary)?;
    fs::rename(&tmp, &summary_path)?;
    written.push(summary_path);
    let timing = dir.join(TIMING_FILE);
    fs::write(&timing, to_json_string(&serde_json::json!({ "wall_time_s": result.wall_time_s }))?)?;
    written.push(timing);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentResult {
        let mut r = ExperimentResult::new("demo");
        r.scalar("x", 0.1);
        r.scalar("bad", f64::NAN);
        let mut s = Series::new("table", &["t", "label", "ok"]);
        s.push(vec![1.5.into(), "a,b".into(), true.into()]);
        s.push(vec![Cell::Num(-2.0), Cell::Int(3), false.into()]);
        r.series.push(s);
        r
    }

    #[test]
    fn json_uses_seventeen_digits_and_null_for_nan() {
        let text = to_json_string(&sample().summary()).unwrap();
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
        assert!(text.contains("\"bad\": null"), "{text}");
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["scalars"]["x"].as_f64(), Some(0.1));
        assert!(text.ends_with("}\n"));
    }

    #[test]
    fn csv_quotes_and_uses_lf() {
        let csv = sample().series[0].to_csv().unwrap();
        assert_eq!(csv, "t,label,ok\n1.5000000000000000e0,\"a,b\",true\n-2.0000000000000000e0,3,false\n");
    }

    #[test]
    fn emit_writes_files_and_is_repeatable() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit(&sample(), dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let first = fs::read(dir.path().join(SUMMARY_FILE)).unwrap();
        let mut again = sample();
        again.wall_time_s = 12.0;
        emit(&again, dir.path()).unwrap();
        assert_eq!(fs::read(dir.path().join(SUMMARY_FILE)).unwrap(), first);
        assert!(!dir.path().join("summary.json.tmp").exists());
    }

    #[test]
    fn empty_series_gives_summary_only() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit(&ExperimentResult::new("empty"), dir.path()).unwrap();
        let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
        assert_eq!(names, vec![SUMMARY_FILE, TIMING_FILE]);
    }

    #[test]
    fn io_failure_leaves_no_summary() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = sample();
        // a directory in the way of the CSV makes the write fail
        fs::create_dir_all(dir.path().join("table.csv")).unwrap();
        fs::write(dir.path().join(SUMMARY_FILE), "old").unwrap();
        r.scalar("y", 1.0);
        assert!(emit(&r, dir.path()).unwrap_err().is_io());
        assert!(!dir.path().join(SUMMARY_FILE).exists());
    }
}
