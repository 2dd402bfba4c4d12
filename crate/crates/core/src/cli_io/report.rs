//! Deterministic JSON and CSV output.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), object keys
//! are sorted, and non-finite values become `null` in JSON.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

use crate::error::{Error, Result};

pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub struct ReportFormatter {
    inner: PrettyFormatter<'static>,
}

impl Default for ReportFormatter {
    fn default() -> Self {
        Self {
            inner: PrettyFormatter::with_indent(b"  "),
        }
    }
}

impl Formatter for ReportFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serialize through [`Value`] so keys come out sorted.
pub fn to_canonical_json<T: Serialize + ?Sized>(v: &T) -> String {
    let value = serde_json::to_value(v).unwrap_or(Value::Null);
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ReportFormatter::default());
    value
        .serialize(&mut ser)
        .expect("writing JSON into memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// One verified statement in a report.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// The statement being verified.
    #[serde(rename = "ref")]
    pub reference: String,
    /// Only asserted checks decide the exit status.
    pub asserted: bool,
    pub passed: bool,
    pub value: Option<f64>,
    pub tol: Option<f64>,
}

impl Check {
    pub fn below(name: &str, reference: &str, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            reference: reference.into(),
            asserted: true,
            passed: value.is_finite() && value < tol,
            value: Some(value),
            tol: Some(tol),
        }
    }

    pub fn flag(name: &str, reference: &str, passed: bool) -> Self {
        Self {
            name: name.into(),
            reference: reference.into(),
            asserted: true,
            passed,
            value: None,
            tol: None,
        }
    }

    pub fn info(mut self) -> Self {
        self.asserted = false;
        self
    }
}

/// A rectangular table of preformatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// `,` separated, LF terminated, header first.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let io_err = |e: csv::Error| Error::Unsupported(format!("csv: {e}"));
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).map_err(io_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(io_err)?;
        }
        w.into_inner()
            .map_err(|e| Error::Unsupported(format!("csv: {e}")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub kind: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub result: Value,
    #[serde(skip)]
    pub table: Option<CsvTable>,
}

impl Report {
    pub fn new(command: &str, kind: &str, seed: u64, checks: Vec<Check>, result: Value) -> Self {
        let passed = checks.iter().filter(|c| c.asserted).all(|c| c.passed);
        Self {
            command: command.into(),
            kind: kind.into(),
            seed,
            checks,
            passed,
            result,
            table: None,
        }
    }

    pub fn with_table(mut self, t: CsvTable) -> Self {
        self.table = Some(t);
        self
    }

    pub fn to_json(&self) -> String {
        to_canonical_json(self)
    }
}

/// `{"error": {"kind": ..., "message": ...}}`, plus the JSON path for schema errors.
pub fn error_json(e: &Error) -> String {
    let mut inner = serde_json::Map::new();
    inner.insert("kind".into(), Value::from(e.kind()));
    inner.insert("message".into(), Value::from(e.to_string()));
    if let Error::SchemaError { path, .. } = e {
        inner.insert("path".into(), Value::from(path.clone()));
    }
    if let Error::AtStep { step, .. } = e {
        inner.insert("step".into(), Value::from(*step as u64));
    }
    let mut outer = serde_json::Map::new();
    outer.insert("error".into(), Value::Object(inner));
    to_canonical_json(&Value::Object(outer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_have_seventeen_digits() {
        let s = to_canonical_json(&json!({"b": 0.1, "a": [1, 2.5, f64::NAN]}));
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("2.5000000000000000e0"));
        assert!(s.contains("null"));
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["b"].as_f64(), Some(0.1));
    }

    #[test]
    fn csv_is_lf_terminated() {
        let mut t = CsvTable::new(["a", "b"]);
        t.push(vec!["1".into(), format_f64(0.5)]);
        let s = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert_eq!(s, "a,b\n1,5.0000000000000000e-1\n");
    }
}
