//! Machine-readable output helpers.
//!
//! Every float written to CSV or JSON uses 17 significant digits so that
//! values round-trip exactly and reruns are byte-identical.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

/// Formats a float with 17 significant digits (`d.dddddddddddddddde±x`).
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Pretty JSON formatter that writes every finite `f64` with [`fmt_f64`]
/// and non-finite values as `null`.
struct FixedDigits<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            writer.write_all(fmt_f64(value).as_bytes())
        } else {
            writer.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Serializes `value` as pretty JSON with fixed 17-digit floats.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut out,
        FixedDigits {
            inner: PrettyFormatter::with_indent(b"  "),
        },
    );
    value
        .serialize(&mut ser)
        .expect("in-memory JSON serialization cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

/// Renders `rows` as CSV with the given header; floats use [`fmt_f64`].
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.into_iter().map(fmt_f64).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Stable 64-bit FNV-1a digest, rendered as 16 hex digits. Used as a run id.
pub fn run_id(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.5), "-2.5000000000000000e0");
        let back: f64 = fmt_f64(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }

    #[test]
    fn json_floats_are_fixed_and_parse_back() {
        #[derive(Serialize)]
        struct Row {
            eta: f64,
            label: &'static str,
            values: Vec<f64>,
        }
        let s = to_json_string(&Row {
            eta: 0.25,
            label: "x",
            values: vec![1.0, 1e-300],
        });
        assert!(s.contains("\"eta\": 2.5000000000000000e-1"), "{s}");
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["values"][1].as_f64().unwrap(), 1e-300);
    }

    #[test]
    fn run_id_is_stable() {
        assert_eq!(run_id(b""), "cbf29ce484222325");
        assert_ne!(run_id(b"a"), run_id(b"b"));
    }
}
