//! Deterministic text rendering shared by the NDJSON writers.

use std::fmt::Write;

/// Formats a finite float with 17 significant digits in scientific notation.
///
/// The output is a valid JSON number and round-trips to the same `f64`.
pub fn f17(x: f64) -> String {
    debug_assert!(x.is_finite());
    format!("{x:.16e}")
}

/// Appends `s` as a JSON string literal.
pub fn push_json_str(out: &mut String, s: &str) {
    // serde_json never fails on a plain str
    out.push_str(&serde_json::to_string(s).expect("string serialization"));
}

pub fn push_f17_array(out: &mut String, xs: &[f64]) {
    out.push('[');
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}", f17(*x));
    }
    out.push(']');
}
